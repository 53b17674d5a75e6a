"""Tests for gate sequences, scheduling and the error model."""
import math

import numpy as np
import pytest

from photonseq.bench import GraphSpec, generate_graph
from photonseq.compiler import (
    Direction,
    DirectionError,
    GateBlock,
    GateKind,
    HardwareParams,
    IncompleteSequenceError,
    Metrics,
    Schedule,
    advance,
    build_forward_sequence,
    cz,
    emission,
    emitter_h,
    fidelity_report,
    incremental_makespan,
    iter_gates,
    cz_emitter_slope,
    metrics_of,
    reverse_sequence,
    reward_of,
    schedule_makespan,
    sequence_summary,
    sequence_to_json,
)
from photonseq.graph import (
    GraphState,
    OpKind,
    emitter_swap,
    enumerate_actions,
    is_terminal,
    type_i,
)

from .conftest import cycle_graph, path_graph, run_ops


def _compile(graph, ops):
    _, records = run_ops(graph, ops)
    return records, build_forward_sequence(records, graph)


def test_single_emitter_sequence_counts(path4, single_emitter_log, hw):
    _, seq = _compile(path4, single_emitter_log)
    summary = sequence_summary(seq)
    # Four H gates act on the emitter; the closing TypeII adds one on photon 0.
    assert summary["emitter_h"] == 4
    assert summary["photon_h"] == 1
    h_targets = [g.qubits for g in iter_gates(seq) if g.kind == GateKind.H]
    assert h_targets.count((4,)) == 4
    assert h_targets.count((0,)) == 1
    assert summary["emission"] == 4
    assert summary["cz"] == 0
    assert summary["measure"] == 1
    assert seq.direction == Direction.FORWARD
    assert seq.emitter_set == {4}


def test_single_emitter_metrics(path4, single_emitter_log, hw):
    _, seq = _compile(path4, single_emitter_log)
    metrics = metrics_of(seq, hw)
    assert metrics.t_gen == pytest.approx(0.8)
    assert (metrics.n_e, metrics.n_cz) == (1, 0)


def test_two_emitter_metrics(path4, two_emitter_log, hw):
    _, seq = _compile(path4, two_emitter_log)
    metrics = metrics_of(seq, hw)
    assert (metrics.n_e, metrics.n_cz) == (2, 1)
    assert seq.emitter_set == {4, 5}


def test_forward_starts_with_preparation(path4, single_emitter_log):
    _, seq = _compile(path4, single_emitter_log)
    assert seq.blocks[0].op is None
    assert seq.blocks[0].gates == (emitter_h(4),)
    assert seq.blocks[-1].op == emitter_swap(3)
    kinds = [gate.kind for gate in seq.blocks[-1].gates]
    assert kinds == [
        GateKind.EMISSION,
        GateKind.H,
        GateKind.MEASURE,
        GateKind.CORRECTION,
    ]


def test_empty_graph_gives_empty_sequence(hw):
    seq = build_forward_sequence([], GraphState.from_photon_edges(0, []))
    assert seq.blocks == ()
    assert metrics_of(seq, hw) == Metrics(0.0, 0, 0)


def test_incomplete_log_is_rejected(path4):
    _, records = run_ops(path4, [emitter_swap(3)])
    with pytest.raises(IncompleteSequenceError):
        build_forward_sequence(records, path4)


def test_reverse_twice_is_identity(path4, two_emitter_log):
    _, seq = _compile(path4, two_emitter_log)
    back = reverse_sequence(seq)
    assert back.direction == Direction.BACKWARD
    assert reverse_sequence(back) == seq


def test_schedule_rejects_backward(path4, single_emitter_log, hw):
    _, seq = _compile(path4, single_emitter_log)
    with pytest.raises(DirectionError):
        schedule_makespan(reverse_sequence(seq), hw)


def test_parallel_prefix_then_cz(hw):
    gates = [
        emitter_h(10),
        emission(10, 0),
        emitter_h(11),
        emission(11, 1),
        cz(10, 11),
    ]
    schedule = Schedule.empty().extend(gates, hw)
    assert schedule.makespan == pytest.approx(10.2)
    starts = [a.start for a in schedule.assignments]
    assert starts[2] == 0.0
    assert starts[4] == pytest.approx(0.2)


def test_schedule_has_no_overlap(path4, two_emitter_log, hw):
    _, seq = _compile(path4, two_emitter_log)
    schedule = schedule_makespan(seq, hw)
    by_emitter = {}
    for a in schedule.assignments:
        for e in a.resources:
            by_emitter.setdefault(e, []).append((a.start, a.end))
    for spans in by_emitter.values():
        for (_, end), (start, _) in zip(spans, spans[1:]):
            assert start >= end - 1e-12
    serial = sum(a.end - a.start for a in schedule.assignments)
    assert schedule.busiest_load(hw) <= schedule.makespan + 1e-12
    assert schedule.makespan <= serial + 1e-12


def test_incremental_off_critical_path(hw):
    schedule = Schedule.empty().extend([cz(10, 11), emitter_h(12)], hw)
    block = GateBlock(None, (emitter_h(12),))
    extended, added = incremental_makespan(schedule, block, hw)
    assert added == 0.0
    assert extended.makespan == schedule.makespan


def test_incremental_cz_on_empty(hw):
    block = GateBlock(None, (cz(1, 2),))
    _, added = incremental_makespan(Schedule.empty(), block, hw)
    assert added == hw.t_cz


def test_incremental_empty_block(hw):
    schedule = Schedule.empty().extend([emitter_h(1)], hw)
    _, added = incremental_makespan(schedule, GateBlock(None, ()), hw)
    assert added == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_added_times_telescope_to_makespan(seed):
    # Dyadic durations keep every partial sum exact.
    hw = HardwareParams(t_emit=0.125, t_1q=0.25, t_cz=2.0)
    rng = np.random.default_rng(seed)
    graph = cycle_graph(5)
    state, schedule = graph, Schedule.empty()
    added = []
    log = []
    while not is_terminal(state):
        ops = enumerate_actions(state)
        step = advance(state, schedule, ops[int(rng.integers(len(ops)))], hw, 0.5)
        state, schedule = step.state, step.schedule
        added.append(step.added)
        log.append(step.record)
    assert step.done
    seq = build_forward_sequence(log, graph)
    assert sum(added) == metrics_of(seq, hw).t_gen


@pytest.mark.slow
def test_makespan_bounds_on_random_sequences(hw):
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        count = int(rng.integers(2, 11))
        edges = int(rng.integers(count - 1, count * (count - 1) // 2 + 1))
        graph = generate_graph(GraphSpec("gnm", count, trial, edges=edges))
        state, schedule, log = graph, Schedule.empty(), []
        while not is_terminal(state):
            ops = enumerate_actions(state)
            step = advance(state, schedule, ops[int(rng.integers(len(ops)))], hw, 0.5)
            state, schedule = step.state, step.schedule
            log.append(step.record)
        forward = schedule_makespan(build_forward_sequence(log, graph), hw)
        serial = sum(a.end - a.start for a in forward.assignments)
        assert forward.busiest_load(hw) <= forward.makespan + 1e-9
        assert forward.makespan <= serial + 1e-9
        assert forward.makespan == pytest.approx(schedule.makespan)


def test_counts_follow_the_log(two_emitter_log, hw):
    graph = path_graph(4)
    records, seq = _compile(graph, two_emitter_log)
    metrics = metrics_of(seq, hw)
    swaps = sum(1 for r in records if r.op.kind == OpKind.EMITTER_SWAP)
    czs = sum(
        1
        for r in records
        if r.op.kind in (OpKind.REVERSED_CZ, OpKind.TYPE_III_REVERSED_CZ)
    )
    assert metrics.n_e == swaps
    assert metrics.n_cz == czs


def test_swap_reward(hw):
    assert reward_of(emitter_swap(0), 0.2, hw, 0.5) == pytest.approx(-5.2)


def test_absorb_reward(hw):
    assert reward_of(type_i(4, 2), 0.2, hw, 0.5) == pytest.approx(-0.2)


def test_swap_reward_without_penalty(hw):
    assert reward_of(emitter_swap(0), 0.2, hw, 0.0) == reward_of(
        type_i(4, 2), 0.2, hw, 0.0
    )


def test_single_photon_step(hw):
    graph = GraphState.from_photon_edges(1, [])
    step = advance(graph, Schedule.empty(), emitter_swap(0), hw, 0.5)
    assert step.done
    # Preparation H, emission, H, free measurement.
    assert step.added == pytest.approx(0.3)
    assert step.reward == pytest.approx(-5.3)


def test_decoherence_fidelity(hw):
    report = fidelity_report(Metrics(440.0, 1, 0), hw)
    assert report.f_de == pytest.approx(0.904837, abs=1e-6)
    assert report.f_cz == 1.0


def test_zero_time_fidelity(hw):
    report = fidelity_report(Metrics(0.0, 3, 2), hw)
    assert report.f_de == 1.0
    assert report.p_remain == 1.0
    assert report.f_cz == pytest.approx(0.99 ** 2)


def test_photon_survival(hw):
    report = fidelity_report(Metrics(50000.0, 1, 0), hw)
    assert report.p_remain == pytest.approx(10 ** -0.2)


def test_fidelity_is_monotone(hw):
    base = fidelity_report(Metrics(100.0, 2, 2), hw)
    assert fidelity_report(Metrics(200.0, 2, 2), hw).f_de < base.f_de
    assert fidelity_report(Metrics(200.0, 2, 2), hw).p_remain < base.p_remain
    assert fidelity_report(Metrics(100.0, 3, 2), hw).f_de < base.f_de
    assert fidelity_report(Metrics(100.0, 2, 3), hw).f_cz < base.f_cz


def test_cz_emitter_slope():
    samples = [Metrics(1.0, 1, 3), Metrics(1.0, 2, 2), Metrics(1.0, 3, 1)]
    assert cz_emitter_slope(samples) == pytest.approx(-1.0)
    assert math.isnan(cz_emitter_slope([Metrics(1.0, 2, 2), Metrics(2.0, 2, 1)]))


def test_sequence_to_json(path4, single_emitter_log):
    _, seq = _compile(path4, single_emitter_log)
    dump = sequence_to_json(seq)
    assert dump["direction"] == "forward"
    assert dump["emitters"] == [4]
    assert dump["blocks"][0] == {"op": "Preparation", "gates": ["H(e4)"]}
    assert dump["blocks"][-1]["gates"] == [
        "EmissionCNOT(e4,p3)",
        "H(e4)",
        "MeasureZ(e4)",
        "Correction(p3,Z,e4)",
    ]
    assert len(list(iter_gates(seq))) == sum(len(b["gates"]) for b in dump["blocks"])
