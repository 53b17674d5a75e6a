"""Tests for the GIN Q-network."""
import struct

import numpy as np
import pytest

from photonseq.bench import GraphSpec, generate_graph
from photonseq.compiler import Schedule
from photonseq.graph import GraphState, apply_action, emitter_swap
from photonseq.qnet import (
    CHECKPOINT_MAGIC,
    PARAM_NAMES,
    AdamOptimizer,
    CheckpointError,
    ParameterError,
    QNetParams,
    TrainingDivergenceError,
    encode,
    encode_batch,
    featurize,
    load_checkpoint,
    load_params,
    loss_and_grads,
    param_shapes,
    q_value,
    save_checkpoint,
    save_params,
    score_states,
    train_step,
)

from .conftest import cycle_graph, path_graph, star_graph

HIDDEN = 8


@pytest.fixture
def params():
    """Return small seeded parameters."""
    return QNetParams.initialize(5, HIDDEN)


@pytest.fixture
def mixed_state():
    """Return a path with one emitter."""
    state, _ = apply_action(path_graph(4), emitter_swap(3))
    return state


def test_default_shapes():
    shapes = param_shapes()
    assert shapes["gin1.w1"] == (5, 128)
    assert shapes["gin2.w1"] == (128, 128)
    assert shapes["head.w3"] == (128, 1)
    assert list(shapes) == list(PARAM_NAMES)


def test_featurize_single_photon():
    adjacency, features = featurize(GraphState.from_photon_edges(1, []))
    assert adjacency.shape == (1, 1)
    assert features.tolist() == [[1.0, 0.0, 0.0, 0.0, 0.0]]


def test_featurize_degree_and_kind(mixed_state):
    adjacency, features = featurize(path_graph(3))
    assert features[1, 2] == 1.0
    assert np.array_equal(adjacency, adjacency.T)
    _, features = featurize(mixed_state)
    # Vertices by ascending id: photons 0, 1, 2 then emitter 4.
    assert features[3, :2].tolist() == [0.0, 1.0]


def test_featurize_empty():
    adjacency, features = featurize(GraphState.from_photon_edges(0, []))
    assert features.shape == (0, 5)
    assert adjacency.shape == (0, 0)


def test_featurize_schedule(mixed_state):
    busy = Schedule(emitter_free={4: 0.5}, makespan=2.0)
    _, features = featurize(mixed_state, busy)
    assert features[3, 3] == pytest.approx(np.log1p(1.5))
    assert not features[:3, 3].any()
    assert np.allclose(features[:, 4], np.log1p(2.0))
    _, idle = featurize(mixed_state)
    assert not idle[:, 3:].any()


def _relabel(state, schedule, rng):
    vertices = state.vertices
    mapping = dict(zip(vertices, rng.permutation(vertices).tolist()))
    kinds = {mapping[v]: state.kind(v) for v in vertices}
    edges = [(mapping[u], mapping[v]) for u, v in state.edges]
    free = {mapping[e]: t for e, t in schedule.emitter_free.items()}
    return (
        GraphState.build(kinds, edges),
        Schedule(emitter_free=free, makespan=schedule.makespan),
    )


def test_permutation_invariance(params):
    state, _ = apply_action(
        generate_graph(GraphSpec("gnm", 8, 2, edges=12)), emitter_swap(3)
    )
    state, _ = apply_action(state, emitter_swap(6))
    schedule = Schedule(emitter_free={8: 0.4, 9: 1.1}, makespan=1.5)
    reference = encode(state, params, schedule)
    rng = np.random.default_rng(11)
    for _ in range(100):
        other, other_schedule = _relabel(state, schedule, rng)
        embedding = encode(other, params, other_schedule)
        assert np.allclose(reference, embedding, rtol=0, atol=1e-12)


def test_isolated_photon_moves_the_mean_by_one_over_v(params):
    alone = encode(GraphState.from_photon_edges(1, []), params)

    def shift(count):
        ring = [(i, (i + 1) % count) for i in range(count)]
        base = encode(GraphState.from_photon_edges(count, ring), params)
        grown = encode(GraphState.from_photon_edges(count + 1, ring), params)
        return np.abs(grown - base).max(), np.abs(alone - base).max()

    small, _ = shift(100)
    large, spread = shift(400)
    assert large <= (spread + 1.0) / 400
    assert large <= 0.3 * small + 1e-12



def test_zero_params_give_zero_embedding():
    embedding = encode(cycle_graph(5), QNetParams.zeros(HIDDEN))
    assert embedding.shape == (HIDDEN,)
    assert not embedding.any()


def test_batched_scores_match_single(params, mixed_state):
    empty = GraphState.from_photon_edges(0, [])
    states = [path_graph(4), mixed_state, star_graph(5), empty]
    scores = score_states(states, params)
    singles = [q_value(state, params) for state in states]
    assert np.allclose(scores, singles, rtol=0, atol=1e-12)
    embeddings = encode_batch(states, params)
    assert embeddings.shape == (4, HIDDEN)
    assert not embeddings[3].any()


def test_batched_scores_carry_schedules(params, mixed_state):
    schedules = [Schedule(), Schedule(emitter_free={4: 0.3}, makespan=3.0)]
    states = [mixed_state, mixed_state]
    scores = score_states(states, params, schedules)
    singles = [q_value(mixed_state, params, schedule) for schedule in schedules]
    assert np.allclose(scores, singles, rtol=0, atol=1e-12)
    assert not np.allclose(
        encode(mixed_state, params), encode(mixed_state, params, schedules[1])
    )



def test_determinism(params, mixed_state):
    assert q_value(mixed_state, params) == q_value(mixed_state, params)


def test_terminal_state_scores_finite(params):
    single = GraphState.from_photon_edges(1, [])
    emitters_only, _ = apply_action(single, emitter_swap(0))
    assert np.isfinite(q_value(emitters_only, params))


def test_shape_check():
    tensors = dict(QNetParams.zeros(HIDDEN).items())
    tensors["head.w2"] = np.zeros((HIDDEN, HIDDEN + 1))
    with pytest.raises(ParameterError):
        QNetParams(tensors)
    del tensors["head.w2"]
    with pytest.raises(ParameterError):
        QNetParams(tensors)


def test_flat_round_trip(params):
    rebuilt = QNetParams.from_flat(params.flat(), HIDDEN)
    assert rebuilt.allclose(params)
    with pytest.raises(ParameterError):
        QNetParams.from_flat(params.flat()[:-1], HIDDEN)


@pytest.mark.parametrize("name", PARAM_NAMES)
def test_gradients_match_finite_differences(name, mixed_state):
    params = QNetParams.initialize(13, HIDDEN)
    # Non-zero biases and eps keep every tensor on the gradient path.
    rng = np.random.default_rng(17)
    for tensor in params.tensors.values():
        if tensor.ndim < 2:
            tensor += rng.uniform(0.05, 0.2, size=tensor.shape)
    states, targets = [mixed_state, path_graph(5)], [-3.0, -1.0]
    schedules = [Schedule(emitter_free={4: 0.2}, makespan=0.9), None]
    _, grads = loss_and_grads(params, states, targets, schedules)
    tensor = params.tensors[name]
    step = 1e-5
    picks = rng.choice(tensor.size, size=min(50, tensor.size), replace=False)
    for flat_index in picks:
        coordinate = np.unravel_index(flat_index, tensor.shape)
        original = tensor[coordinate]
        tensor[coordinate] = original + step
        plus, _ = loss_and_grads(params, states, targets, schedules)
        tensor[coordinate] = original - step
        minus, _ = loss_and_grads(params, states, targets, schedules)
        tensor[coordinate] = original
        numeric = (plus - minus) / (2 * step)
        analytic = float(np.asarray(grads[name])[coordinate])
        scale = max(1.0, abs(numeric), abs(analytic))
        assert abs(numeric - analytic) <= 1e-4 * scale



def test_matching_targets_leave_params_unchanged(params, mixed_state):
    states = [path_graph(4), mixed_state]
    targets = score_states(states, params)
    updated, loss = train_step(list(zip(states, targets)), params, 1e-3)
    assert loss == 0.0
    assert updated.allclose(params)


def _loss_trace(seed, steps):
    params = QNetParams.initialize(seed, HIDDEN)
    batch = [(path_graph(4), -5.0), (star_graph(4), -1.0), (cycle_graph(4), -3.0)]
    optimizer = AdamOptimizer(1e-5)
    losses = []
    for _ in range(steps):
        params, loss = train_step(batch, params, 1e-5, optimizer)
        losses.append(loss)
    return losses


def _non_increasing(losses):
    return all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_loss_decreases_on_fixed_batch():
    traces = [_loss_trace(seed, 30) for seed in range(5)]
    assert sum(_non_increasing(trace) for trace in traces) >= 4
    assert all(trace[-1] < trace[0] for trace in traces)


@pytest.mark.slow
def test_loss_monotone_over_many_seeds():
    traces = [_loss_trace(seed, 100) for seed in range(100)]
    assert sum(_non_increasing(trace) for trace in traces) >= 95


def test_divergence_is_reported(params, mixed_state):
    with pytest.raises(TrainingDivergenceError):
        train_step([(mixed_state, np.inf)], params, 1e-3)


def test_empty_batch_rejected(params):
    with pytest.raises(ParameterError):
        train_step([], params, 1e-3)


def test_checkpoint_round_trip(params, tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    for name in PARAM_NAMES:
        assert np.array_equal(loaded[name], params[name])
    assert path.read_bytes()[:8] == CHECKPOINT_MAGIC


def test_checkpoint_bad_magic(params):
    data = bytearray(save_params(params))
    data[0:8] = b"NOTANET!"
    with pytest.raises(CheckpointError, match="magic"):
        load_params(bytes(data))


def test_checkpoint_bad_version(params):
    data = bytearray(save_params(params))
    struct.pack_into("<I", data, 8, 99)
    with pytest.raises(CheckpointError, match="version"):
        load_params(bytes(data))


def test_checkpoint_wrong_dimension(params):
    data = bytearray(save_params(params))
    # Header, rank of gin1.eps, rank of gin1.w1, then its first dimension.
    struct.pack_into("<I", data, 24, 4)
    with pytest.raises(CheckpointError, match="dimension"):
        load_params(bytes(data))


def test_checkpoint_truncated(params):
    data = save_params(params)
    with pytest.raises(CheckpointError):
        load_params(data[:-5])
    with pytest.raises(CheckpointError):
        load_params(data[:10])


def test_checkpoint_checksum(params):
    data = bytearray(save_params(params))
    data[-12] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        load_params(bytes(data))
