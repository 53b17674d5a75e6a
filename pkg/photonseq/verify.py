"""Statevector oracle for generation sequences."""
from collections import namedtuple
import itertools
import logging

import numpy as np

from . import statevec
from .common import PhotonSeqError, make_rng
from .compiler import GateKind, build_forward_sequence, iter_gates
from .const import (
    DEFAULT_QUBIT_CAP,
    DEFAULT_VERIFY_SEEDS,
    EXHAUSTIVE_MEASUREMENT_LIMIT,
    FIDELITY_TOLERANCE,
)

_LOGGER = logging.getLogger(__name__)

SimulationResult = namedtuple("SimulationResult", "state record")
VerificationReport = namedtuple(
    "VerificationReport", "ok fidelities diagnostic failing_gate"
)


def _require_photon_only(graph):
    if graph.emitter_count:
        raise ValueError("target graph must contain photons only")


def graph_state_vector(graph, cap=DEFAULT_QUBIT_CAP):
    """Return the statevector of a photon-only graph state.

    Qubits follow ascending photon id, the smallest id being the least
    significant bit of the amplitude index.
    """
    _require_photon_only(graph)
    try:
        return statevec.graph_state(graph.photons, sorted(graph.edges), cap)
    except statevec.QubitCapExceeded as exc:
        raise QubitCapError(str(exc)) from exc


def _last_uses(gates):
    # Corrections only read the classical outcome, so a measured emitter is
    # released right after its last quantum gate.
    last = {}
    for index, gate in enumerate(gates):
        for qubit in gate.qubits:
            last[qubit] = index
    return last


def peak_qubits(seq):
    """Return the largest number of simultaneously live qubits in a sequence.

    Photons stay live from emission to the end; an emitter is live from its
    first gate to its last one.
    """
    gates = list(iter_gates(seq))
    last = _last_uses(gates)
    emitters = seq.emitter_set
    live = set()
    peak = 0
    for index, gate in enumerate(gates):
        live.update(gate.qubits)
        peak = max(peak, len(live))
        for qubit in gate.qubits:
            if qubit in emitters and last[qubit] == index:
                live.discard(qubit)
    return peak


def simulate_forward(seq, outcome_seed=None, outcomes=None, cap=DEFAULT_QUBIT_CAP):
    """Run a forward sequence from all-|0> and return the photon state.

    Args:
        seq: forward GenerationSequence.
        outcome_seed: seed (or Generator) drawing measurement outcomes.
        outcomes: optional forced outcomes, consumed in measurement order.
        cap: largest number of live qubits.

    Returns a SimulationResult whose record lists (emitter, outcome) pairs.
    """
    rng = make_rng(outcome_seed)
    gates = list(iter_gates(seq))
    last = _last_uses(gates)
    emitters = seq.emitter_set
    forced = list(outcomes) if outcomes is not None else None
    psi = statevec.StateVector(cap)
    record = []
    readings = {}

    for index, gate in enumerate(gates):
        try:
            for qubit in gate.qubits:
                if qubit not in psi:
                    psi.allocate(qubit)
            kind = gate.kind
            if kind == GateKind.H:
                psi.h(gate.qubits[0])
            elif kind == GateKind.EMISSION:
                psi.cnot(*gate.qubits)
            elif kind == GateKind.CZ:
                psi.cz(*gate.qubits)
            elif kind == GateKind.MEASURE:
                emitter = gate.qubits[0]
                forced_outcome = forced.pop(0) if forced else None
                outcome = psi.measure(emitter, rng, forced_outcome)
                readings[emitter] = outcome
                record.append((emitter, outcome))
            elif kind == GateKind.CORRECTION:
                if gate.source not in readings:
                    raise SimulationError(
                        index, f"correction reads unmeasured emitter {gate.source}"
                    )
                if readings[gate.source]:
                    if gate.basis == "X":
                        psi.x(gate.qubits[0])
                    else:
                        psi.z(gate.qubits[0])
            for qubit in gate.qubits:
                if qubit in emitters and last[qubit] == index:
                    psi.trace_out(qubit)
        except statevec.EntanglementLeak as exc:
            raise EntanglementLeakError(index, str(exc)) from exc
        except statevec.QubitCapExceeded as exc:
            raise QubitCapError(str(exc)) from exc
        except statevec.ImpossibleOutcome:
            raise
        except statevec.StateVectorError as exc:
            raise SimulationError(index, str(exc)) from exc
        _LOGGER.debug("Gate %d %s applied, %d live qubits", index, kind.name, psi.n)

    leftover = [label for label in psi.labels if label in emitters]
    for label in leftover:
        try:
            psi.trace_out(label)
        except statevec.EntanglementLeak as exc:
            raise EntanglementLeakError(len(gates), str(exc)) from exc
    return SimulationResult(psi, record)


def _fidelity(result, target, graph):
    order = graph.photons
    if sorted(result.state.labels) != order:
        return 0.0
    return result.state.fidelity(target, order)


def verify_sequence(
    graph,
    log,
    hw=None,
    seeds=DEFAULT_VERIFY_SEEDS,
    cap=DEFAULT_QUBIT_CAP,
    exhaustive=False,
):
    """Check that a log's forward sequence prepares the target graph state.

    The sequence is simulated once per outcome seed, or once per outcome
    combination when `exhaustive` is set and the sequence measures at most
    four emitters. `hw` is accepted for symmetry with the compile path; the
    oracle does not depend on gate durations.
    """
    _require_photon_only(graph)
    seq = build_forward_sequence(log, graph)
    peak = peak_qubits(seq)
    if peak > cap:
        raise QubitCapError(f"sequence needs {peak} live qubits, cap is {cap}")
    target = graph_state_vector(graph, cap)

    measurements = sum(1 for gate in iter_gates(seq) if gate.kind == GateKind.MEASURE)
    runs = []
    if exhaustive and measurements <= EXHAUSTIVE_MEASUREMENT_LIMIT:
        for combo in itertools.product((0, 1), repeat=measurements):
            runs.append(("outcomes", combo))
    else:
        if exhaustive:
            _LOGGER.warning(
                "%d measurements exceed the exhaustive limit; sampling %d seeds",
                measurements,
                seeds,
            )
        runs.extend(("seed", seed) for seed in range(seeds))

    fidelities = []
    for mode, value in runs:
        try:
            if mode == "seed":
                result = simulate_forward(seq, outcome_seed=value, cap=cap)
            else:
                result = simulate_forward(seq, outcomes=value, cap=cap)
        except statevec.ImpossibleOutcome:
            continue
        except SimulationError as exc:
            _LOGGER.info("Verification failed at gate %d: %s", exc.gate_index, exc)
            return VerificationReport(False, fidelities, str(exc), exc.gate_index)
        fidelities.append(_fidelity(result, target, graph))

    worst = min(fidelities, default=0.0)
    ok = bool(fidelities) and worst >= 1.0 - FIDELITY_TOLERANCE
    diagnostic = (
        "ok" if ok else f"fidelity {worst:.12f} below 1 - {FIDELITY_TOLERANCE:g}"
    )
    return VerificationReport(ok, fidelities, diagnostic, None)


def stabilizer_check(psi, graph):
    """Return True if every generator X_i prod_j Z_j fixes psi."""
    _require_photon_only(graph)
    photons = graph.photons
    if psi.n != len(photons):
        raise QubitCapError(
            f"state has {psi.n} qubits, graph has {len(photons)} photons"
        )
    reference = psi.amplitudes(photons)
    for vertex in photons:
        moved = psi.copy()
        moved.x(vertex)
        for nbr in graph.neighbors(vertex):
            moved.z(nbr)
        if not np.allclose(moved.amplitudes(photons), reference, rtol=0, atol=1e-9):
            return False
    return True


class QubitCapError(PhotonSeqError):
    """Error to indicate a state larger than the qubit cap."""


class SimulationError(PhotonSeqError):
    """Error to indicate a failed simulation step."""

    def __init__(self, gate_index, message):
        """Initialize with the index of the failing gate."""
        super().__init__(f"gate {gate_index}: {message}")
        self.gate_index = gate_index


class EntanglementLeakError(SimulationError):
    """Error to indicate an emitter left entangled after its last gate."""
