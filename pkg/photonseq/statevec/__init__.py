# Statevector Module
# -*- coding: utf-8 -*-
"""
Dense statevector simulation for small qubit counts.

The state is held as a complex tensor with one axis of length 2 per live
qubit. Qubits are addressed by caller-chosen labels (vertex ids), allocated
lazily in |0> and traced out once they are known to be in a product state.

Classes
   StateVector(cap=14)
       cap (int, optional): Largest number of live qubits. Defaults to 14.

Functions
   allocate(label)             # adds a qubit in |0>
   h(label), x(label), z(label)
   cnot(control, target)
   cz(a, b)                    # symmetric in a and b
   measure(label, rng, outcome=None)  # Z measurement, returns 0 or 1
   is_product(label)           # Schmidt rank 1 across the cut label | rest
   trace_out(label)            # removes a product-state qubit
   amplitudes(order)           # flat vector, order[0] is the least significant bit
   fidelity(other, order)      # |<self|other>|^2

   graph_state(labels, edges, cap)  # |+> on every label, CZ per edge
"""

import logging

import numpy as np

version_tuple = (1, 0, 0)
version = version_string = __version__ = "%d.%d.%d" % version_tuple

_LOGGER = logging.getLogger(__name__)

DEFAULT_CAP = 14
PRODUCT_TOLERANCE = 1e-9
ZERO_PROBABILITY = 1e-12

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class StateVector:
    """Pure state over labelled qubits."""

    def __init__(self, cap=DEFAULT_CAP):
        """Initialize an empty register (the scalar 1)."""
        self.cap = cap
        self.tensor = np.ones((), dtype=complex)
        self.labels = []

    @property
    def n(self):
        """Return the number of live qubits."""
        return len(self.labels)

    @property
    def qubit_map(self):
        """Return label -> axis index."""
        return {label: axis for axis, label in enumerate(self.labels)}

    def __contains__(self, label):
        return label in self.labels

    def copy(self):
        """Return an independent copy."""
        other = StateVector(self.cap)
        other.tensor = self.tensor.copy()
        other.labels = list(self.labels)
        return other

    def _axis(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownQubit(label) from None

    def allocate(self, label):
        """Add a qubit in |0>."""
        if label in self.labels:
            raise DuplicateQubit(label)
        if self.n >= self.cap:
            raise QubitCapExceeded(f"cannot allocate qubit {label}: cap {self.cap}")
        zero = np.array([1, 0], dtype=complex)
        self.tensor = np.multiply.outer(self.tensor, zero)
        self.labels.append(label)
        _LOGGER.debug("Allocated qubit %s (%d live)", label, self.n)

    def _index(self, fixed):
        index = [slice(None)] * self.n
        for axis, value in fixed.items():
            index[axis] = value
        return tuple(index)

    def h(self, label):
        """Apply a Hadamard."""
        axis = self._axis(label)
        self.tensor = np.moveaxis(
            np.tensordot(HADAMARD, self.tensor, axes=([1], [axis])), 0, axis
        )

    def x(self, label):
        """Apply a Pauli X."""
        self.tensor = np.flip(self.tensor, axis=self._axis(label)).copy()

    def z(self, label):
        """Apply a Pauli Z."""
        self.tensor[self._index({self._axis(label): 1})] *= -1

    def cnot(self, control, target):
        """Apply a CNOT."""
        c, t = self._axis(control), self._axis(target)
        if c == t:
            raise ValueError("control and target must differ")
        index = self._index({c: 1})
        # Fixing the control axis removes it, shifting later axes down by one.
        t_sub = t if t < c else t - 1
        self.tensor[index] = np.flip(self.tensor[index], axis=t_sub).copy()

    def cz(self, a, b):
        """Apply a CZ."""
        i, j = self._axis(a), self._axis(b)
        if i == j:
            raise ValueError("CZ operands must differ")
        self.tensor[self._index({i: 1, j: 1})] *= -1

    def probability_one(self, label):
        """Return the probability of reading 1 on a qubit."""
        part = self.tensor[self._index({self._axis(label): 1})]
        return float(np.sum(np.abs(part) ** 2))

    def measure(self, label, rng=None, outcome=None):
        """Measure in the Z basis, collapse and renormalize.

        Args:
            label: qubit to measure.
            rng: numpy Generator drawing the outcome when none is forced.
            outcome: forced outcome (0 or 1).
        """
        p1 = self.probability_one(label)
        if outcome is None:
            if rng is None:
                rng = np.random.default_rng()
            outcome = int(rng.random() < p1)
        probability = p1 if outcome else 1.0 - p1
        if probability < ZERO_PROBABILITY:
            raise ImpossibleOutcome(
                f"outcome {outcome} on qubit {label} has probability {probability}"
            )
        axis = self._axis(label)
        self.tensor[self._index({axis: 1 - outcome})] = 0
        self.tensor /= np.sqrt(probability)
        return outcome

    def _split(self, label):
        axis = self._axis(label)
        matrix = np.moveaxis(self.tensor, axis, 0).reshape(2, -1)
        return np.linalg.svd(matrix, full_matrices=False)

    def is_product(self, label):
        """Return True if the qubit is unentangled with the rest."""
        if self.n == 1:
            return True
        singular = self._split(label)[1]
        return len(singular) < 2 or singular[1] < PRODUCT_TOLERANCE

    def trace_out(self, label):
        """Remove a qubit that is in a product state with the rest."""
        if self.n == 1:
            self.labels = []
            self.tensor = np.ones((), dtype=complex)
            return
        _, singular, rows = self._split(label)
        if len(singular) > 1 and singular[1] >= PRODUCT_TOLERANCE:
            raise EntanglementLeak(
                f"qubit {label} is entangled (Schmidt coefficient {singular[1]:.3e})"
            )
        rest = [lbl for lbl in self.labels if lbl != label]
        shape = (2,) * len(rest)
        self.tensor = (singular[0] * rows[0]).reshape(shape)
        self.labels = rest

    def norm(self):
        """Return the L2 norm."""
        return float(np.linalg.norm(self.tensor))

    def amplitudes(self, order=None):
        """Return the flat amplitude vector; order[0] is the least significant."""
        if order is None:
            order = self.labels
        if len(order) != self.n or set(order) != set(self.labels):
            raise UnknownQubit(f"order {order} does not match live qubits")
        axes = [self._axis(label) for label in reversed(order)]
        return np.transpose(self.tensor, axes).reshape(-1)

    def fidelity(self, other, order=None):
        """Return |<self|other>|^2 over a shared qubit order."""
        if order is None:
            order = self.labels
        overlap = np.vdot(self.amplitudes(order), other.amplitudes(order))
        return float(abs(overlap) ** 2)


def graph_state(labels, edges, cap=DEFAULT_CAP):
    """Return the graph state with |+> on every label and a CZ per edge."""
    labels = list(labels)
    if len(labels) > cap:
        raise QubitCapExceeded(f"{len(labels)} qubits exceed cap {cap}")
    psi = StateVector(cap)
    for label in labels:
        psi.allocate(label)
        psi.h(label)
    for u, v in edges:
        psi.cz(u, v)
    return psi


class StateVectorError(Exception):
    """Base error of the statevector module."""


class QubitCapExceeded(StateVectorError):
    """Error to indicate more live qubits than the cap allows."""


class UnknownQubit(StateVectorError, KeyError):
    """Error to indicate a label that is not a live qubit."""


class DuplicateQubit(StateVectorError):
    """Error to indicate a label allocated twice."""


class EntanglementLeak(StateVectorError):
    """Error to indicate a traced-out qubit that is still entangled."""


class ImpossibleOutcome(StateVectorError):
    """Error to indicate a forced outcome of zero probability."""
