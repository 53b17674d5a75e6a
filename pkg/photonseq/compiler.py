"""Gate sequences, scheduling and the analytic error model.

A backward op log is turned into gate blocks, one block per op. Within a
block the gates are listed in backward order; reversing the block order and
each block's gate order yields the executable forward sequence. The fresh
emitter introduced by an EmitterSwap shows up in the forward sequence as the
MeasureZ and Pauli correction that release it.

Gates acting on photons only (a photon-side H or a correction) are passive
optics: they take no time and occupy no emitter.
"""
from collections import Counter, namedtuple
from enum import Enum
import logging
import math

import numpy as np

from .common import PhotonSeqError
from .const import (
    DEFAULT_LOSS,
    DEFAULT_SIGMA_CZ,
    DEFAULT_T2,
    DEFAULT_T_1Q,
    DEFAULT_T_CZ,
    DEFAULT_T_EMIT,
    DEFAULT_T_MEAS,
)
from .graph import OpKind, apply_action, format_op, is_terminal, replay

_LOGGER = logging.getLogger(__name__)

# The loss figure is quoted per km; light covers 1 km of fibre in 5000 ns and
# the decibel conversion contributes the remaining factor of 10.
NS_PER_LOSS_DECADE = 50000.0


class GateKind(Enum):
    """Kind of a gate."""

    H = "H"
    EMISSION = "EmissionCNOT"
    CZ = "CZ"
    MEASURE = "MeasureZ"
    CORRECTION = "Correction"


class Direction(Enum):
    """Order in which a sequence is listed."""

    BACKWARD = "backward"
    FORWARD = "forward"


# qubits lists every qubit the gate touches; emitters lists the emitters it
# occupies while running (empty for photon-only gates).
Gate = namedtuple("Gate", "kind qubits emitters basis source")
Gate.__new__.__defaults__ = (None, None)

GateBlock = namedtuple("GateBlock", "op gates")
GenerationSequence = namedtuple("GenerationSequence", "direction blocks emitter_set")

HardwareParams = namedtuple(
    "HardwareParams", "t_emit t_1q t_cz t_meas t2 sigma_cz loss_db_per_km"
)
HardwareParams.__new__.__defaults__ = (
    DEFAULT_T_EMIT,
    DEFAULT_T_1Q,
    DEFAULT_T_CZ,
    DEFAULT_T_MEAS,
    DEFAULT_T2,
    DEFAULT_SIGMA_CZ,
    DEFAULT_LOSS,
)

Metrics = namedtuple("Metrics", "t_gen n_e n_cz")
FidelityReport = namedtuple("FidelityReport", "f_de f_cz p_remain")
Assignment = namedtuple("Assignment", "gate start end resources")
Step = namedtuple("Step", "state record schedule added reward done")


def emitter_h(emitter):
    """Return an H gate on an emitter."""
    return Gate(GateKind.H, (emitter,), (emitter,))


def photon_h(photon):
    """Return an H gate on an emitted photon."""
    return Gate(GateKind.H, (photon,), ())


def emission(emitter, photon):
    """Return the emission CNOT from emitter to a fresh photon."""
    return Gate(GateKind.EMISSION, (emitter, photon), (emitter,))


def cz(emitter_a, emitter_b):
    """Return a CZ between two emitters."""
    if emitter_a == emitter_b:
        raise ValueError("CZ operands must be distinct")
    return Gate(GateKind.CZ, (emitter_a, emitter_b), (emitter_a, emitter_b))


def measure_z(emitter):
    """Return a Z-basis measurement of an emitter."""
    return Gate(GateKind.MEASURE, (emitter,), (emitter,))


def correction(target, basis, source):
    """Return a Pauli correction conditioned on the measurement of source."""
    if basis not in ("X", "Z"):
        raise ValueError(f"unknown correction basis {basis}")
    return Gate(GateKind.CORRECTION, (target,), (), basis, source)


def format_gate(gate):
    """Render a gate as short text."""
    if gate.kind == GateKind.H:
        prefix = "e" if gate.emitters else "p"
        return f"H({prefix}{gate.qubits[0]})"
    if gate.kind == GateKind.EMISSION:
        return f"EmissionCNOT(e{gate.qubits[0]},p{gate.qubits[1]})"
    if gate.kind == GateKind.CZ:
        return f"CZ(e{gate.qubits[0]},e{gate.qubits[1]})"
    if gate.kind == GateKind.MEASURE:
        return f"MeasureZ(e{gate.qubits[0]})"
    return f"Correction(p{gate.qubits[0]},{gate.basis},e{gate.source})"


def forward_gates(record):
    """Return the gates of one logged op in forward order."""
    op = record.op
    kind = op.kind
    if kind == OpKind.EMITTER_SWAP:
        e, p = record.resulting_emitter, op.first
        return (emission(e, p), emitter_h(e), measure_z(e), correction(p, "Z", e))
    if kind == OpKind.TYPE_I_ABSORB:
        return (emission(op.first, op.second), emitter_h(op.first))
    if kind == OpKind.TYPE_II_ABSORB:
        return (emission(op.first, op.second), photon_h(op.second))
    if kind == OpKind.TYPE_III_ABSORB:
        e, p = op.first, op.second
        return (emitter_h(e), emission(e, p), emitter_h(e), photon_h(p))
    if kind == OpKind.REVERSED_CZ:
        return (cz(op.first, op.second),)
    ei, ej = op.first, op.second
    return (emitter_h(ei), emitter_h(ej), cz(ei, ej), emitter_h(ei))


def backward_block(record):
    """Return the block of one logged op with gates in backward order."""
    return GateBlock(record.op, tuple(reversed(forward_gates(record))))


def preparation_block(emitters):
    """Return the block that puts every surviving emitter into |+>."""
    return GateBlock(None, tuple(emitter_h(e) for e in sorted(emitters)))


def _emitter_set(blocks):
    return frozenset(
        e for block in blocks for gate in block.gates for e in gate.emitters
    )


def backward_sequence(log, terminal_state):
    """Return the backward sequence of a complete log."""
    blocks = [backward_block(record) for record in log]
    if terminal_state.emitter_count:
        blocks.append(preparation_block(terminal_state.emitters))
    return GenerationSequence(Direction.BACKWARD, tuple(blocks), _emitter_set(blocks))


def reverse_sequence(seq):
    """Flip a sequence between backward and forward order."""
    direction = (
        Direction.FORWARD if seq.direction == Direction.BACKWARD else Direction.BACKWARD
    )
    blocks = tuple(
        GateBlock(block.op, tuple(reversed(block.gates)))
        for block in reversed(seq.blocks)
    )
    return GenerationSequence(direction, blocks, seq.emitter_set)


def build_forward_sequence(log, initial_graph):
    """Turn a complete backward op log into a forward generation sequence."""
    states = replay(initial_graph, log)
    if not is_terminal(states[-1]):
        raise IncompleteSequenceError(
            f"log of {len(log)} ops ends in a non-terminal state {states[-1]!r}"
        )
    seq = reverse_sequence(backward_sequence(log, states[-1]))
    _LOGGER.debug(
        "Built forward sequence of %d blocks on %d emitters",
        len(seq.blocks),
        len(seq.emitter_set),
    )
    return seq


def iter_gates(seq):
    """Yield the gates of a sequence in listed order."""
    for block in seq.blocks:
        yield from block.gates


def gate_duration(gate, hw):
    """Return the duration of a gate in ns."""
    if not gate.emitters:
        return 0.0
    if gate.kind == GateKind.H:
        return hw.t_1q
    if gate.kind == GateKind.EMISSION:
        return hw.t_emit
    if gate.kind == GateKind.CZ:
        return hw.t_cz
    if gate.kind == GateKind.MEASURE:
        return hw.t_meas
    return 0.0


class Schedule:
    """Greedy in-order placement of gates on emitter resources.

    Values are never mutated; `extend` returns a new schedule.
    """

    __slots__ = ("assignments", "emitter_free", "photon_ready", "makespan")

    def __init__(
        self, assignments=(), emitter_free=None, photon_ready=None, makespan=0.0
    ):
        """Initialize the schedule."""
        self.assignments = tuple(assignments)
        self.emitter_free = dict(emitter_free or {})
        self.photon_ready = dict(photon_ready or {})
        self.makespan = makespan

    @classmethod
    def empty(cls):
        """Return a schedule with nothing placed."""
        return cls()

    def extend(self, gates, hw):
        """Return a new schedule with gates appended in order."""
        free = dict(self.emitter_free)
        ready = dict(self.photon_ready)
        placed = list(self.assignments)
        makespan = self.makespan
        for gate in gates:
            duration = gate_duration(gate, hw)
            if gate.emitters:
                start = max(free.get(e, 0.0) for e in gate.emitters)
                end = start + duration
                for e in gate.emitters:
                    free[e] = end
                if gate.kind == GateKind.EMISSION:
                    ready[gate.qubits[1]] = end
            else:
                target = gate.qubits[0]
                start = ready.get(target, 0.0)
                if gate.source is not None:
                    start = max(start, free.get(gate.source, 0.0))
                end = start + duration
                ready[target] = end
            placed.append(Assignment(gate, start, end, gate.emitters))
            if end > makespan:
                makespan = end
        return Schedule(placed, free, ready, makespan)

    def slack(self):
        """Return each emitter's idle time before the current makespan."""
        return {e: self.makespan - t for e, t in self.emitter_free.items()}

    def busiest_load(self, hw):
        """Return the largest per-emitter sum of gate durations."""
        load = Counter()
        for assignment in self.assignments:
            for e in assignment.resources:
                load[e] += gate_duration(assignment.gate, hw)
        return max(load.values(), default=0.0)


def schedule_makespan(seq, hw):
    """Schedule a forward sequence and return the Schedule."""
    if seq.direction != Direction.FORWARD:
        raise DirectionError("schedule_makespan needs a forward sequence")
    return Schedule.empty().extend(iter_gates(seq), hw)


def incremental_makespan(partial_schedule, block, hw):
    """Extend a schedule with one block; return (schedule, added ns)."""
    schedule = partial_schedule.extend(block.gates, hw)
    return schedule, schedule.makespan - partial_schedule.makespan


def metrics_of(seq, hw):
    """Return (T_gen, N_e, N_CZ) of a forward sequence."""
    schedule = schedule_makespan(seq, hw)
    n_cz = sum(1 for gate in iter_gates(seq) if gate.kind == GateKind.CZ)
    return Metrics(schedule.makespan, len(seq.emitter_set), n_cz)


def reward_of(op, added_t_gen, hw, alpha):
    """Return the step reward: negative added time, minus a swap penalty."""
    reward = -added_t_gen
    if op.kind == OpKind.EMITTER_SWAP:
        reward -= alpha * hw.t_cz
    return reward


def fidelity_report(m, hw):
    """Return the decoherence, CZ and photon-survival figures for metrics."""
    return FidelityReport(
        f_de=math.exp(-m.n_e * m.t_gen / hw.t2),
        f_cz=hw.sigma_cz ** m.n_cz,
        p_remain=10.0 ** (-hw.loss_db_per_km * m.t_gen / NS_PER_LOSS_DECADE),
    )


def advance(state, schedule, op, hw, alpha):
    """Apply one op and book its reward against the backward schedule.

    The op's backward block is appended to the schedule. When the op reaches
    the terminal state the preparation block of the surviving emitters is
    appended too, and its time is charged to this op.
    """
    new_state, record = apply_action(state, op)
    new_schedule, added = incremental_makespan(schedule, backward_block(record), hw)
    done = is_terminal(new_state)
    if done and new_state.emitter_count:
        new_schedule, extra = incremental_makespan(
            new_schedule, preparation_block(new_state.emitters), hw
        )
        added += extra
    reward = reward_of(op, added, hw, alpha)
    _LOGGER.debug("%s added %.3f ns, reward %.3f", format_op(op), added, reward)
    return Step(new_state, record, new_schedule, added, reward, done)


def sequence_summary(seq):
    """Count gates by kind; H gates are split into emitter and photon side."""
    counts = Counter()
    for gate in iter_gates(seq):
        if gate.kind == GateKind.H:
            counts["emitter_h" if gate.emitters else "photon_h"] += 1
        else:
            counts[gate.kind.name.lower()] += 1
    for key in ("emitter_h", "photon_h", "emission", "cz", "measure", "correction"):
        counts.setdefault(key, 0)
    return dict(counts)


def cz_emitter_slope(samples):
    """Return the least-squares slope of N_CZ against N_e, or nan.

    Only a diagnostic; a slope near -1 suggests CZ gates and extra emitters
    trade against each other for this graph.
    """
    n_e = np.array([m.n_e for m in samples], dtype=float)
    n_cz = np.array([m.n_cz for m in samples], dtype=float)
    if len(np.unique(n_e)) < 2:
        return math.nan
    slope, _ = np.polyfit(n_e, n_cz, 1)
    return float(slope)


def sequence_to_json(seq):
    """Return a JSON-serializable description of a sequence."""
    return {
        "direction": seq.direction.value,
        "emitters": sorted(seq.emitter_set),
        "blocks": [
            {
                "op": "Preparation" if block.op is None else format_op(block.op),
                "gates": [format_gate(gate) for gate in block.gates],
            }
            for block in seq.blocks
        ],
    }


class IncompleteSequenceError(PhotonSeqError):
    """Error to indicate a log that does not reach a terminal state."""


class DirectionError(PhotonSeqError):
    """Error to indicate a sequence listed in the wrong direction."""
