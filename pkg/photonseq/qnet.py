"""Graph neural Q-network written directly against numpy.

Two GIN message-passing layers embed a graph state, a mean pool reads the
vertex embeddings out into one vector, and a three-layer perceptron maps
that vector to a scalar score. The network scores the state an action leads
to, together with the backward schedule built so far, as the discounted
reward still to come; the agent adds the action's own reward on top.

Checkpoint layout (all integers little-endian u32):

    magic (8 bytes) | version | tensor count
    per tensor: rank, then rank dims
    every tensor as little-endian float64, in declaration order
    CRC-32 of everything above
"""
import binascii
import logging
import struct

import numpy as np

from .common import PhotonSeqError, make_rng
from .const import DEFAULT_HIDDEN, DEFAULT_STEP_SIZE
from .graph import VertexKind

_LOGGER = logging.getLogger(__name__)

FEATURE_DIM = 5

CHECKPOINT_MAGIC = b"RLGSQNET"
CHECKPOINT_VERSION = 2
CHECKPOINT_HEADER_FMT = "<8s2I"  # magic, version, tensor count
CHECKPOINT_DIM_FMT = "<I"
CHECKPOINT_END_FMT = "<I"  # crc

GIN_LAYERS = ("gin1", "gin2")
GIN_PARAMS = ("eps", "w1", "b1", "w2", "b2")
PARAM_NAMES = tuple(
    f"{layer}.{name}" for layer in GIN_LAYERS for name in GIN_PARAMS
) + ("head.w1", "head.b1", "head.w2", "head.b2", "head.w3", "head.b3")


def param_shapes(hidden=DEFAULT_HIDDEN):
    """Return the shape of every tensor, in declaration order."""
    shapes = {}
    fan_in = FEATURE_DIM
    for layer in GIN_LAYERS:
        shapes[f"{layer}.eps"] = ()
        shapes[f"{layer}.w1"] = (fan_in, hidden)
        shapes[f"{layer}.b1"] = (hidden,)
        shapes[f"{layer}.w2"] = (hidden, hidden)
        shapes[f"{layer}.b2"] = (hidden,)
        fan_in = hidden
    shapes["head.w1"] = (hidden, hidden)
    shapes["head.b1"] = (hidden,)
    shapes["head.w2"] = (hidden, hidden)
    shapes["head.b2"] = (hidden,)
    shapes["head.w3"] = (hidden, 1)
    shapes["head.b3"] = (1,)
    return shapes


class QNetParams:
    """Weights of the Q-network, kept in declaration order."""

    def __init__(self, tensors):
        """Initialize from a name -> ndarray mapping; shapes are checked."""
        if set(tensors) != set(PARAM_NAMES):
            missing = sorted(set(PARAM_NAMES) - set(tensors))
            extra = sorted(set(tensors) - set(PARAM_NAMES))
            raise ParameterError(f"missing tensors {missing}, unexpected {extra}")
        hidden = np.shape(tensors["gin1.w1"])[-1]
        expected = param_shapes(hidden)
        self.tensors = {}
        for name in PARAM_NAMES:
            array = np.asarray(tensors[name], dtype=np.float64)
            if array.shape != expected[name]:
                raise ParameterError(
                    f"{name} has shape {array.shape}, expected {expected[name]}"
                )
            self.tensors[name] = array
        self.hidden = hidden

    @classmethod
    def initialize(cls, seed=0, hidden=DEFAULT_HIDDEN):
        """Return Glorot-uniform weights, zero biases and zero eps."""
        rng = make_rng(seed)
        tensors = {}
        for name, shape in param_shapes(hidden).items():
            if len(shape) == 2:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                tensors[name] = rng.uniform(-limit, limit, size=shape)
            else:
                tensors[name] = np.zeros(shape)
        return cls(tensors)

    @classmethod
    def zeros(cls, hidden=DEFAULT_HIDDEN):
        """Return all-zero parameters."""
        shapes = param_shapes(hidden)
        return cls({name: np.zeros(shape) for name, shape in shapes.items()})

    def __getitem__(self, name):
        return self.tensors[name]

    def items(self):
        """Return (name, tensor) pairs in declaration order."""
        return [(name, self.tensors[name]) for name in PARAM_NAMES]

    def copy(self):
        """Return an independent copy."""
        return QNetParams({name: array.copy() for name, array in self.tensors.items()})

    def allclose(self, other, atol=0.0):
        """Return True if every tensor matches within atol."""
        return self.hidden == other.hidden and all(
            np.allclose(self.tensors[name], other.tensors[name], rtol=0, atol=atol)
            for name in PARAM_NAMES
        )

    def flat(self):
        """Return every tensor concatenated into one vector."""
        return np.concatenate([self.tensors[name].ravel() for name in PARAM_NAMES])

    @classmethod
    def from_flat(cls, vector, hidden=DEFAULT_HIDDEN):
        """Rebuild parameters from a flat vector."""
        tensors = {}
        offset = 0
        for name, shape in param_shapes(hidden).items():
            size = int(np.prod(shape, dtype=int))
            if offset + size > len(vector):
                raise ParameterError("flat vector too short")
            tensors[name] = np.asarray(vector[offset : offset + size]).reshape(shape)
            offset += size
        if offset != len(vector):
            raise ParameterError("flat vector too long")
        return cls(tensors)

    def is_finite(self):
        """Return True if no tensor holds nan or inf."""
        return all(np.all(np.isfinite(array)) for array in self.tensors.values())


def featurize(state, schedule=None):
    """Return (adjacency matrix, node features) with vertices by ascending id.

    Features per vertex: photon flag, emitter flag, degree / max(1, V-1),
    log1p of the emitter's idle time before the makespan (0 for photons)
    and log1p of the makespan itself. Without a schedule both time
    features are 0.
    """
    vertices = state.vertices
    count = len(vertices)
    index = {vertex: i for i, vertex in enumerate(vertices)}
    adjacency = np.zeros((count, count))
    features = np.zeros((count, FEATURE_DIM))
    scale = max(1, count - 1)
    makespan = schedule.makespan if schedule is not None else 0.0
    free = schedule.emitter_free if schedule is not None else {}
    for vertex in vertices:
        i = index[vertex]
        if state.kind(vertex) == VertexKind.PHOTON:
            features[i, 0] = 1.0
        else:
            features[i, 1] = 1.0
            features[i, 3] = np.log1p(makespan - free.get(vertex, 0.0))
        features[i, 4] = np.log1p(makespan)
        nbrs = state.neighbors(vertex)
        features[i, 2] = len(nbrs) / scale
        for nbr in nbrs:
            adjacency[i, index[nbr]] = 1.0
    return adjacency, features


class GraphBatch:
    """Several graph states stacked into one disjoint union."""

    def __init__(self, states, schedules=None):
        """Stack states, offsetting vertex indices per graph."""
        if schedules is None:
            schedules = [None] * len(states)
        features = [np.zeros((0, FEATURE_DIM))]
        src = []
        dst = []
        counts = []
        offset = 0
        for state, schedule in zip(states, schedules):
            adjacency, node_features = featurize(state, schedule)
            rows, cols = np.nonzero(adjacency)
            # Row-major order keeps edges sorted by destination, so one
            # reduceat serves both the aggregation and its transpose.
            dst.append(rows + offset)
            src.append(cols + offset)
            features.append(node_features)
            counts.append(len(node_features))
            offset += len(node_features)

        self.size = len(counts)
        self.node_count = offset
        self.features = np.concatenate(features)
        self.graph_index = np.repeat(
            np.arange(self.size, dtype=np.int64), np.array(counts, dtype=np.int64)
        )
        self.counts = np.array(counts, dtype=np.float64)
        self.src = np.concatenate(src).astype(np.int64) if src else np.zeros(0, int)
        self.dst = np.concatenate(dst).astype(np.int64) if dst else np.zeros(0, int)
        self.targets, self.starts = np.unique(self.dst, return_index=True)
        self.graph_targets, self.graph_starts = np.unique(
            self.graph_index, return_index=True
        )

    def neighbor_sum(self, values):
        """Return A @ values for the stacked adjacency A."""
        out = np.zeros((self.node_count, values.shape[1]))
        if len(self.src):
            out[self.targets] = np.add.reduceat(values[self.src], self.starts, axis=0)
        return out

    def mean_pool(self, values):
        """Return the per-graph mean of vertex rows; empty graphs give zeros."""
        out = np.zeros((self.size, values.shape[1]))
        if self.node_count:
            out[self.graph_targets] = np.add.reduceat(
                values, self.graph_starts, axis=0
            )
        return out / np.maximum(self.counts, 1.0)[:, None]


def _relu(x):
    return np.maximum(x, 0.0)


def _forward(batch, params):
    cache = {"layers": []}
    h = batch.features
    for layer in GIN_LAYERS:
        eps = params[f"{layer}.eps"]
        agg = (1.0 + eps) * h + batch.neighbor_sum(h)
        z1 = agg @ params[f"{layer}.w1"] + params[f"{layer}.b1"]
        r1 = _relu(z1)
        z2 = r1 @ params[f"{layer}.w2"] + params[f"{layer}.b2"]
        cache["layers"].append((h, agg, z1, r1, z2))
        h = _relu(z2)
    g = batch.mean_pool(h)
    z3 = g @ params["head.w1"] + params["head.b1"]
    r3 = _relu(z3)
    z4 = r3 @ params["head.w2"] + params["head.b2"]
    r4 = _relu(z4)
    q = (r4 @ params["head.w3"] + params["head.b3"]).ravel()
    cache.update(g=g, z3=z3, r3=r3, z4=z4, r4=r4)
    return q, cache


def _backward(batch, params, cache, dq):
    grads = {}
    r4, z4, r3, z3, g = cache["r4"], cache["z4"], cache["r3"], cache["z3"], cache["g"]
    dq = dq[:, None]
    grads["head.w3"] = r4.T @ dq
    grads["head.b3"] = dq.sum(axis=0)
    dz4 = (dq @ params["head.w3"].T) * (z4 > 0)
    grads["head.w2"] = r3.T @ dz4
    grads["head.b2"] = dz4.sum(axis=0)
    dz3 = (dz4 @ params["head.w2"].T) * (z3 > 0)
    grads["head.w1"] = g.T @ dz3
    grads["head.b1"] = dz3.sum(axis=0)
    dg = dz3 @ params["head.w1"].T

    counts = np.maximum(batch.counts, 1.0)
    dh = dg[batch.graph_index] / counts[batch.graph_index][:, None]
    for layer, (h, agg, z1, r1, z2) in reversed(list(zip(GIN_LAYERS, cache["layers"]))):
        eps = params[f"{layer}.eps"]
        dz2 = dh * (z2 > 0)
        grads[f"{layer}.w2"] = r1.T @ dz2
        grads[f"{layer}.b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ params[f"{layer}.w2"].T) * (z1 > 0)
        grads[f"{layer}.w1"] = agg.T @ dz1
        grads[f"{layer}.b1"] = dz1.sum(axis=0)
        dagg = dz1 @ params[f"{layer}.w1"].T
        grads[f"{layer}.eps"] = np.array(np.sum(dagg * h))
        dh = (1.0 + eps) * dagg + batch.neighbor_sum(dagg)
    return grads


def encode_batch(states, params, schedules=None):
    """Return the (len(states), hidden) embeddings of several states."""
    _, cache = _forward(GraphBatch(states, schedules), params)
    return cache["g"]


def encode(state, params, schedule=None):
    """Return the embedding of one state."""
    return encode_batch([state], params, [schedule])[0]


def score_states(states, params, schedules=None):
    """Return the scalar score of every state."""
    if not states:
        return np.zeros(0)
    q, _ = _forward(GraphBatch(states, schedules), params)
    return q


def q_value(next_state, params, schedule=None):
    """Return the score of the state an action leads to.

    The score estimates the discounted reward still to come from
    next_state when its backward schedule so far is `schedule`.
    """
    return float(score_states([next_state], params, [schedule])[0])


def loss_and_grads(params, states, targets, schedules=None):
    """Return the mean squared error over a batch and its gradients."""
    batch = GraphBatch(states, schedules)
    q, cache = _forward(batch, params)
    residual = q - np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(residual ** 2))
    dq = 2.0 * residual / len(states)
    return loss, _backward(batch, params, cache, dq)


def clip_gradients(grads, max_norm):
    """Scale grads so their global L2 norm is at most max_norm (0 disables)."""
    if not max_norm:
        return grads
    norm = np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


class AdamOptimizer:
    """Adaptive moment estimation over QNetParams."""

    def __init__(self, step_size=DEFAULT_STEP_SIZE, beta1=0.9, beta2=0.999, eps=1e-8):
        """Initialize the optimizer state."""
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params, grads, step_size=None):
        """Return updated parameters; params itself is left untouched."""
        lr = self.step_size if step_size is None else step_size
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        updated = {}
        for name, value in params.items():
            grad = grads[name]
            m = self.beta1 * self._m.get(name, 0.0) + (1.0 - self.beta1) * grad
            v = self.beta2 * self._v.get(name, 0.0) + (1.0 - self.beta2) * grad ** 2
            self._m[name] = m
            self._v[name] = v
            updated[name] = value - lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
        return QNetParams(updated)


def train_step(
    batch, params, step_size, optimizer=None, max_grad_norm=0.0, schedules=None
):
    """Fit params one step towards the targets of a batch.

    Args:
        batch: list of (next_state, target) pairs.
        params: current QNetParams.
        step_size: learning rate of this step.
        optimizer: AdamOptimizer carrying moment estimates across steps.
        max_grad_norm: global gradient norm clip, 0 disables.
        schedules: backward schedule of every next_state, or None.

    Returns the updated params and the loss before the update.
    """
    if not batch:
        raise ParameterError("train_step needs a non-empty batch")
    states = [state for state, _ in batch]
    targets = [target for _, target in batch]
    loss, grads = loss_and_grads(params, states, targets, schedules)
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"loss became {loss}")
    grads = clip_gradients(grads, max_grad_norm)
    if optimizer is None:
        optimizer = AdamOptimizer(step_size)
    updated = optimizer.step(params, grads, step_size)
    if not updated.is_finite():
        raise TrainingDivergenceError("parameters became non-finite")
    return updated, loss


def save_params(params):
    """Serialize params to checkpoint bytes."""
    buffer = struct.pack(
        CHECKPOINT_HEADER_FMT, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(PARAM_NAMES)
    )
    for _, array in params.items():
        buffer += struct.pack(CHECKPOINT_DIM_FMT, array.ndim)
        for dim in array.shape:
            buffer += struct.pack(CHECKPOINT_DIM_FMT, dim)
    for _, array in params.items():
        buffer += np.ascontiguousarray(array, dtype="<f8").tobytes()
    buffer += struct.pack(CHECKPOINT_END_FMT, binascii.crc32(buffer) & 0xFFFFFFFF)
    return buffer


def load_params(data):
    """Deserialize checkpoint bytes into params."""
    header_len = struct.calcsize(CHECKPOINT_HEADER_FMT)
    dim_len = struct.calcsize(CHECKPOINT_DIM_FMT)
    end_len = struct.calcsize(CHECKPOINT_END_FMT)
    if len(data) < header_len:
        raise CheckpointError("checkpoint truncated in header")
    magic, version, count = struct.unpack_from(CHECKPOINT_HEADER_FMT, data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )
    if count != len(PARAM_NAMES):
        raise CheckpointError(f"{count} tensors, expected {len(PARAM_NAMES)}")

    offset = header_len
    shapes = []
    for _ in range(count):
        if len(data) < offset + dim_len:
            raise CheckpointError("checkpoint truncated in dimension table")
        (rank,) = struct.unpack_from(CHECKPOINT_DIM_FMT, data, offset)
        offset += dim_len
        if rank > 2 or len(data) < offset + rank * dim_len:
            raise CheckpointError("checkpoint dimension table is malformed")
        shape = struct.unpack_from("<%dI" % rank, data, offset)
        offset += rank * dim_len
        shapes.append(tuple(shape))

    hidden = shapes[1][-1] if len(shapes[1]) == 2 else -1
    expected = param_shapes(hidden)
    for name, shape in zip(PARAM_NAMES, shapes):
        if shape != expected[name]:
            raise CheckpointError(
                f"dimension mismatch for {name}: {shape}, expected {expected[name]}"
            )

    sizes = [int(np.prod(shape, dtype=int)) for shape in shapes]
    payload_len = 8 * sum(sizes)
    if len(data) != offset + payload_len + end_len:
        raise CheckpointError(
            f"checkpoint holds {len(data)} bytes, "
            f"expected {offset + payload_len + end_len}"
        )
    (crc,) = struct.unpack_from(CHECKPOINT_END_FMT, data, offset + payload_len)
    if crc != binascii.crc32(data[: offset + payload_len]) & 0xFFFFFFFF:
        raise CheckpointError("checkpoint checksum mismatch")

    tensors = {}
    for name, shape, size in zip(PARAM_NAMES, shapes, sizes):
        values = np.frombuffer(data, dtype="<f8", count=size, offset=offset)
        tensors[name] = values.astype(np.float64).reshape(shape)
        offset += 8 * size
    _LOGGER.debug("Loaded checkpoint with hidden size %d", hidden)
    return QNetParams(tensors)


def save_checkpoint(path, params):
    """Write params to a checkpoint file."""
    with open(path, "wb") as handle:
        handle.write(save_params(params))
    _LOGGER.info("Saved checkpoint to %s", path)


def load_checkpoint(path):
    """Read params from a checkpoint file."""
    with open(path, "rb") as handle:
        return load_params(handle.read())


class ParameterError(PhotonSeqError):
    """Error to indicate parameters of the wrong shape."""


class TrainingDivergenceError(PhotonSeqError):
    """Error to indicate a non-finite loss or weight."""

    def __init__(self, message, log=None, params=None):
        """Initialize with the partial training log, when known."""
        super().__init__(message)
        self.log = log if log is not None else []
        self.params = params


class CheckpointError(PhotonSeqError):
    """Error to indicate an unreadable checkpoint."""
