"""Graph states and the six backward rewrite operations.

A graph state is held as an immutable value: a kind per vertex and a
neighbour set per vertex. Every operation returns a new state and never
touches its input, so states may be shared freely between replay buffer
entries, search branches and worker threads.
"""
from collections import namedtuple
from enum import Enum, IntEnum
import logging
import math

import networkx as nx

from .common import PhotonSeqError

_LOGGER = logging.getLogger(__name__)

INFINITY = math.inf


class VertexKind(Enum):
    """Kind of a vertex."""

    PHOTON = "photon"
    EMITTER = "emitter"


class OpKind(IntEnum):
    """Rewrite operations, ranked in enumeration order."""

    EMITTER_SWAP = 0
    TYPE_I_ABSORB = 1
    TYPE_II_ABSORB = 2
    TYPE_III_ABSORB = 3
    REVERSED_CZ = 4
    TYPE_III_REVERSED_CZ = 5


# For EMITTER_SWAP `first` is the photon and `second` is None. The absorptions
# name (emitter, photon); both CZ variants name two emitters with first < second.
GraphOp = namedtuple("GraphOp", "kind first second")
GraphOp.__new__.__defaults__ = (None,)

ActionRecord = namedtuple("ActionRecord", "op resulting_emitter")


def emitter_swap(photon):
    """Return an EmitterSwap op."""
    return GraphOp(OpKind.EMITTER_SWAP, photon)


def type_i(emitter, photon):
    """Return a Type-I absorption op."""
    return GraphOp(OpKind.TYPE_I_ABSORB, emitter, photon)


def type_ii(emitter, photon):
    """Return a Type-II absorption op."""
    return GraphOp(OpKind.TYPE_II_ABSORB, emitter, photon)


def type_iii(emitter, photon):
    """Return a Type-III absorption op."""
    return GraphOp(OpKind.TYPE_III_ABSORB, emitter, photon)


def reversed_cz(emitter_i, emitter_j):
    """Return a reversed CZ op with operands in ascending order."""
    low, high = sorted((emitter_i, emitter_j))
    return GraphOp(OpKind.REVERSED_CZ, low, high)


def type_iii_reversed_cz(emitter_i, emitter_j):
    """Return a Type-III reversed CZ op; the larger id is removed."""
    low, high = sorted((emitter_i, emitter_j))
    return GraphOp(OpKind.TYPE_III_REVERSED_CZ, low, high)


def op_operands(op):
    """Return the operand vertices of an op."""
    if op.kind == OpKind.EMITTER_SWAP:
        return (op.first,)
    return (op.first, op.second)


def op_sort_key(op):
    """Return the deterministic enumeration key of an op."""
    return (int(op.kind), op.first, -1 if op.second is None else op.second)


def format_op(op):
    """Render an op as short text, e.g. ``TypeI(e4,p2)``."""
    if op.kind == OpKind.EMITTER_SWAP:
        return f"Swap(p{op.first})"
    names = {
        OpKind.TYPE_I_ABSORB: "TypeI(e{},p{})",
        OpKind.TYPE_II_ABSORB: "TypeII(e{},p{})",
        OpKind.TYPE_III_ABSORB: "TypeIII(e{},p{})",
        OpKind.REVERSED_CZ: "ReversedCZ(e{},e{})",
        OpKind.TYPE_III_REVERSED_CZ: "TypeIIIReversedCZ(e{},e{})",
    }
    return names[op.kind].format(op.first, op.second)


class GraphState:
    """Photons and emitters joined by undirected edges."""

    __slots__ = ("_kinds", "_adjacency", "_next_emitter_label", "_photon_count")

    def __init__(self, kinds, adjacency, next_emitter_label):
        """Initialize from a kind map, a neighbour-set map and the label counter.

        The maps are taken over as-is and must not be mutated afterwards;
        use `build` to construct a state from plain edges.
        """
        self._kinds = kinds
        self._adjacency = adjacency
        self._next_emitter_label = next_emitter_label
        self._photon_count = sum(
            1 for kind in kinds.values() if kind == VertexKind.PHOTON
        )

    @classmethod
    def build(cls, kinds, edges, next_emitter_label=None):
        """Build a state from a vertex-kind mapping and an edge iterable."""
        adjacency = {vertex: set() for vertex in kinds}
        for u, v in edges:
            if u == v:
                raise InvalidGraphError(f"self-loop on vertex {u}")
            if u not in adjacency or v not in adjacency:
                raise UnknownVertexError(u if u not in adjacency else v)
            adjacency[u].add(v)
            adjacency[v].add(u)
        if next_emitter_label is None:
            next_emitter_label = max(kinds, default=-1) + 1
        return cls(
            dict(kinds),
            {vertex: frozenset(nbrs) for vertex, nbrs in adjacency.items()},
            next_emitter_label,
        )

    @classmethod
    def from_photon_edges(cls, count, edges):
        """Build a photon-only state with vertices 0..count-1."""
        kinds = {vertex: VertexKind.PHOTON for vertex in range(count)}
        return cls.build(kinds, edges, count)

    @classmethod
    def from_networkx(cls, graph):
        """Build a photon-only state from a networkx graph.

        Nodes are relabelled to 0..n-1 in sorted node order.
        """
        order = {node: index for index, node in enumerate(sorted(graph.nodes))}
        edges = [(order[u], order[v]) for u, v in graph.edges]
        return cls.from_photon_edges(len(order), edges)

    def to_networkx(self):
        """Return a networkx graph carrying a ``kind`` node attribute."""
        graph = nx.Graph()
        for vertex in self.vertices:
            graph.add_node(vertex, kind=self._kinds[vertex].value)
        graph.add_edges_from(self.edges)
        return graph

    @property
    def vertices(self):
        """Return vertex ids in ascending order."""
        return sorted(self._kinds)

    @property
    def photons(self):
        """Return photon ids in ascending order."""
        return sorted(
            vertex
            for vertex, kind in self._kinds.items()
            if kind == VertexKind.PHOTON
        )

    @property
    def emitters(self):
        """Return emitter ids in ascending order."""
        return sorted(
            vertex
            for vertex, kind in self._kinds.items()
            if kind == VertexKind.EMITTER
        )

    @property
    def edges(self):
        """Return the edge set as ascending (u, v) pairs."""
        return frozenset(
            (u, v) for u, nbrs in self._adjacency.items() for v in nbrs if u < v
        )

    @property
    def edge_count(self):
        """Return the number of edges."""
        return sum(len(nbrs) for nbrs in self._adjacency.values()) // 2

    @property
    def photon_count(self):
        """Return the number of photons."""
        return self._photon_count

    @property
    def emitter_count(self):
        """Return the number of emitters."""
        return len(self._kinds) - self._photon_count

    @property
    def next_emitter_label(self):
        """Return the id the next fresh emitter will receive."""
        return self._next_emitter_label

    def __len__(self):
        return len(self._kinds)

    def __contains__(self, vertex):
        return vertex in self._kinds

    def kind(self, vertex):
        """Return the kind of a vertex."""
        try:
            return self._kinds[vertex]
        except KeyError:
            raise UnknownVertexError(vertex) from None

    def is_photon(self, vertex):
        """Return True if the vertex exists and is a photon."""
        return self._kinds.get(vertex) == VertexKind.PHOTON

    def is_emitter(self, vertex):
        """Return True if the vertex exists and is an emitter."""
        return self._kinds.get(vertex) == VertexKind.EMITTER

    def neighbors(self, vertex):
        """Return the neighbour set of a vertex."""
        try:
            return self._adjacency[vertex]
        except KeyError:
            raise UnknownVertexError(vertex) from None

    def degree(self, vertex):
        """Return the degree of a vertex."""
        return len(self.neighbors(vertex))

    def has_edge(self, u, v):
        """Return True if u and v are adjacent."""
        return v in self._adjacency.get(u, ())

    def _key(self):
        return (
            frozenset(self._kinds.items()),
            self.edges,
            self._next_emitter_label,
        )

    def __eq__(self, other):
        if not isinstance(other, GraphState):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (
            f"GraphState(photons={self.photons}, emitters={self.emitters}, "
            f"edges={sorted(self.edges)})"
        )

    def _derive(self, kinds, adjacency, next_emitter_label=None):
        if next_emitter_label is None:
            next_emitter_label = self._next_emitter_label
        return GraphState(kinds, adjacency, next_emitter_label)


def from_edge_list(text):
    """Parse an edge-list document into a photon-only state.

    The first line is ``V E``; each of the following E lines is ``u v``
    with 0-indexed endpoints. Blank trailing lines are ignored.
    """
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise GraphParseError(1, "missing 'V E' header")

    header = lines[0].split()
    if len(header) != 2:
        raise GraphParseError(1, "header must be 'V E'")
    try:
        count, edge_count = int(header[0]), int(header[1])
    except ValueError:
        raise GraphParseError(1, "header values must be integers") from None
    if count < 0 or edge_count < 0:
        raise GraphParseError(1, "header values must be non-negative")
    if len(lines) - 1 != edge_count:
        raise GraphParseError(
            min(len(lines), edge_count + 1) + 1,
            f"expected {edge_count} edge lines, found {len(lines) - 1}",
        )

    seen = set()
    edges = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split()
        if len(fields) != 2:
            raise GraphParseError(lineno, "edge line must be 'u v'")
        try:
            u, v = int(fields[0]), int(fields[1])
        except ValueError:
            raise GraphParseError(lineno, "endpoints must be integers") from None
        if not (0 <= u < count and 0 <= v < count):
            raise GraphParseError(lineno, f"endpoint out of range 0..{count - 1}")
        if u == v:
            raise GraphParseError(lineno, f"self-loop on vertex {u}")
        pair = (min(u, v), max(u, v))
        if pair in seen:
            raise GraphParseError(lineno, f"duplicate edge {u} {v}")
        seen.add(pair)
        edges.append(pair)

    _LOGGER.debug("Parsed edge list with %d vertices and %d edges", count, len(edges))
    return GraphState.from_photon_edges(count, edges)


def to_edge_list(state):
    """Render a photon-only state as an edge-list document."""
    if state.emitter_count:
        raise InvalidGraphError("edge lists describe photon-only states")
    order = {vertex: index for index, vertex in enumerate(state.photons)}
    lines = [f"{len(order)} {state.edge_count}"]
    for u, v in sorted(state.edges):
        lines.append(f"{order[u]} {order[v]}")
    return "\n".join(lines) + "\n"


def is_terminal(state):
    """Return True when no photons and no edges remain."""
    return state.photon_count == 0 and state.edge_count == 0


def enumerate_actions(state, restriction=None):
    """Return every applicable op in deterministic order.

    When `restriction` is given, only ops whose operands all lie in it are
    returned.
    """
    if is_terminal(state):
        return []

    def allowed(*operands):
        return restriction is None or all(v in restriction for v in operands)

    ops = []
    photons = state.photons
    emitters = state.emitters

    ops.extend(emitter_swap(p) for p in photons if allowed(p))

    for e in emitters:
        nbrs = state.neighbors(e)
        if len(nbrs) == 1:
            (p,) = nbrs
            if state.is_photon(p) and allowed(e, p):
                ops.append(type_i(e, p))

    for p in photons:
        nbrs = state.neighbors(p)
        if len(nbrs) == 1:
            (e,) = nbrs
            if state.is_emitter(e) and allowed(e, p):
                ops.append(type_ii(e, p))

    # Twins share a neighbour set exactly, which also rules out adjacent pairs.
    twins = {}
    for vertex in state.vertices:
        twins.setdefault(state.neighbors(vertex), []).append(vertex)
    for group in twins.values():
        if len(group) < 2:
            continue
        group_emitters = [v for v in group if state.is_emitter(v)]
        group_photons = [v for v in group if state.is_photon(v)]
        for e in group_emitters:
            ops.extend(type_iii(e, p) for p in group_photons if allowed(e, p))
        for index, ei in enumerate(group_emitters):
            ops.extend(
                type_iii_reversed_cz(ei, ej)
                for ej in group_emitters[index + 1 :]
                if allowed(ei, ej)
            )

    for ei in emitters:
        ops.extend(
            reversed_cz(ei, ej)
            for ej in state.neighbors(ei)
            if ej > ei and state.is_emitter(ej) and allowed(ei, ej)
        )

    ops.sort(key=op_sort_key)
    return ops


def check_action(state, op):
    """Raise RejectedOpError unless op is applicable to state."""
    for vertex in op_operands(op):
        if vertex not in state:
            raise RejectedOpError(f"{format_op(op)}: vertex {vertex} does not exist")
    if op.second is not None and op.first == op.second:
        raise RejectedOpError(f"{format_op(op)}: operands must be distinct")

    kind = op.kind
    if kind == OpKind.EMITTER_SWAP:
        if not state.is_photon(op.first):
            raise RejectedOpError(f"{format_op(op)}: operand is not a photon")
        return

    if kind in (OpKind.REVERSED_CZ, OpKind.TYPE_III_REVERSED_CZ):
        if not (state.is_emitter(op.first) and state.is_emitter(op.second)):
            raise RejectedOpError(f"{format_op(op)}: operands must be emitters")
        if kind == OpKind.REVERSED_CZ and not state.has_edge(op.first, op.second):
            raise RejectedOpError(f"{format_op(op)}: emitters are not adjacent")
        if kind == OpKind.TYPE_III_REVERSED_CZ and state.neighbors(
            op.first
        ) != state.neighbors(op.second):
            raise RejectedOpError(f"{format_op(op)}: neighbourhoods differ")
        return

    e, p = op.first, op.second
    if not state.is_emitter(e) or not state.is_photon(p):
        raise RejectedOpError(f"{format_op(op)}: expects (emitter, photon)")
    if kind == OpKind.TYPE_I_ABSORB and state.neighbors(e) != {p}:
        raise RejectedOpError(f"{format_op(op)}: emitter neighbourhood is not {{p}}")
    if kind == OpKind.TYPE_II_ABSORB and state.neighbors(p) != {e}:
        raise RejectedOpError(f"{format_op(op)}: photon neighbourhood is not {{e}}")
    if kind == OpKind.TYPE_III_ABSORB and state.neighbors(e) != state.neighbors(p):
        raise RejectedOpError(f"{format_op(op)}: neighbourhoods differ")


def _without(adjacency, vertex):
    """Return adjacency with a vertex and all its edges removed."""
    result = dict(adjacency)
    for nbr in result.pop(vertex):
        result[nbr] = result[nbr] - {vertex}
    return result


def apply_action(state, op):
    """Apply op and return (new state, ActionRecord)."""
    check_action(state, op)
    kinds = state._kinds
    adjacency = state._adjacency
    kind = op.kind

    if kind == OpKind.EMITTER_SWAP:
        p = op.first
        e = state.next_emitter_label
        nbrs = adjacency[p]
        new_kinds = dict(kinds)
        del new_kinds[p]
        new_kinds[e] = VertexKind.EMITTER
        new_adj = dict(adjacency)
        del new_adj[p]
        new_adj[e] = nbrs
        for nbr in nbrs:
            new_adj[nbr] = (new_adj[nbr] - {p}) | {e}
        new_state = state._derive(new_kinds, new_adj, e + 1)
        _LOGGER.debug("Swapped photon %d for emitter %d", p, e)
        return new_state, ActionRecord(op, e)

    if kind == OpKind.TYPE_I_ABSORB:
        e, p = op.first, op.second
        new_kinds = dict(kinds)
        del new_kinds[p]
        new_adj = _without(adjacency, p)
        inherited = adjacency[p] - {e}
        new_adj[e] = frozenset(inherited)
        for nbr in inherited:
            new_adj[nbr] = new_adj[nbr] | {e}
        return state._derive(new_kinds, new_adj), ActionRecord(op, None)

    if kind in (OpKind.TYPE_II_ABSORB, OpKind.TYPE_III_ABSORB):
        p = op.second
        new_kinds = dict(kinds)
        del new_kinds[p]
        return state._derive(new_kinds, _without(adjacency, p)), ActionRecord(
            op, None
        )

    if kind == OpKind.REVERSED_CZ:
        ei, ej = op.first, op.second
        new_adj = dict(adjacency)
        new_adj[ei] = new_adj[ei] - {ej}
        new_adj[ej] = new_adj[ej] - {ei}
        return state._derive(dict(kinds), new_adj), ActionRecord(op, None)

    # TYPE_III_REVERSED_CZ drops the larger emitter id.
    ej = op.second
    new_kinds = dict(kinds)
    del new_kinds[ej]
    return state._derive(new_kinds, _without(adjacency, ej)), ActionRecord(op, None)


def replay(initial, log):
    """Apply the ops of a log in turn and return every intermediate state.

    The returned list starts with `initial` and holds len(log) + 1 states.
    A logged EmitterSwap whose recorded emitter differs from the one the
    replay allocates is reported as a rejected op.
    """
    states = [initial]
    state = initial
    for record in log:
        op = record.op if isinstance(record, ActionRecord) else record
        state, produced = apply_action(state, op)
        if (
            isinstance(record, ActionRecord)
            and record.resulting_emitter != produced.resulting_emitter
        ):
            raise RejectedOpError(
                f"{format_op(op)}: replay allocated emitter "
                f"{produced.resulting_emitter}, log recorded "
                f"{record.resulting_emitter}"
            )
        states.append(state)
    return states


def hop_distances(state, source):
    """Return unweighted hop counts from source; unreachable maps to INFINITY."""
    if source not in state:
        raise UnknownVertexError(source)
    distances = dict.fromkeys(state.vertices, INFINITY)
    distances.update(nx.single_source_shortest_path_length(state.to_networkx(), source))
    return distances


class GraphParseError(PhotonSeqError):
    """Error to indicate a malformed edge-list document."""

    def __init__(self, line, message):
        """Initialize with the offending line number."""
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvalidGraphError(PhotonSeqError, ValueError):
    """Error to indicate a structurally invalid graph."""


class RejectedOpError(PhotonSeqError):
    """Error to indicate an op whose precondition does not hold."""


class UnknownVertexError(PhotonSeqError, KeyError):
    """Error to indicate a vertex id that is not in the state."""

    def __str__(self):
        return f"unknown vertex {self.args[0]}"
