"""Shared fixtures."""
import pytest

from photonseq.agent import Hyperparams
from photonseq.compiler import HardwareParams
from photonseq.graph import (
    GraphState,
    apply_action,
    emitter_swap,
    reversed_cz,
    type_i,
    type_ii,
)


def path_graph(count):
    """Return the photon path 0-1-...-(count-1)."""
    return GraphState.from_photon_edges(count, [(i, i + 1) for i in range(count - 1)])


def star_graph(count):
    """Return a star with centre 0."""
    return GraphState.from_photon_edges(count, [(0, i) for i in range(1, count)])


def cycle_graph(count):
    """Return a photon cycle."""
    return GraphState.from_photon_edges(
        count, [(i, (i + 1) % count) for i in range(count)]
    )


@pytest.fixture
def hw():
    """Return the default hardware parameters."""
    return HardwareParams()


@pytest.fixture
def small_hp():
    """Return hyperparameters small enough for quick training runs."""
    return Hyperparams(
        episodes=4,
        capacity=64,
        batch_size=4,
        target_sync=8,
        hidden=8,
        seed=3,
    )


@pytest.fixture
def path4():
    """Return the four-photon path."""
    return path_graph(4)


@pytest.fixture
def single_emitter_log():
    """Return the one-emitter op sequence for the four-photon path."""
    return [
        emitter_swap(3),
        type_i(4, 2),
        type_i(4, 1),
        type_ii(4, 0),
    ]


@pytest.fixture
def two_emitter_log():
    """Return a two-emitter op sequence for the four-photon path with one CZ."""
    return [
        emitter_swap(0),
        emitter_swap(3),
        type_i(4, 1),
        type_i(5, 2),
        reversed_cz(4, 5),
    ]


def run_ops(graph, ops):
    """Apply ops in turn and return (final state, action records)."""
    state = graph
    records = []
    for op in ops:
        state, record = apply_action(state, op)
        records.append(record)
    return state, records
