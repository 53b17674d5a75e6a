"""DQN training, receptive-field inference and baseline policies."""
from collections import namedtuple
import logging
import math

import networkx as nx
import numpy as np

from .common import PhotonSeqError, make_rng, spawn_streams
from .compiler import (
    HardwareParams,
    Schedule,
    advance,
    build_forward_sequence,
    metrics_of,
)
from .const import (
    DEFAULT_ALPHA,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CAPACITY,
    DEFAULT_EPISODES,
    DEFAULT_EPSILON0,
    DEFAULT_EPSILON_DECAY,
    DEFAULT_EPSILON_FLOOR,
    DEFAULT_GAMMA,
    DEFAULT_HIDDEN,
    DEFAULT_NODE_BUDGET,
    DEFAULT_RECEPTIVE_FRACTION,
    DEFAULT_SEED,
    DEFAULT_STEP_SIZE,
    DEFAULT_TARGET_SYNC,
    POLICY_GREEDY,
    POLICY_RANDOM,
)
from .graph import (
    OpKind,
    enumerate_actions,
    format_op,
    hop_distances,
    is_terminal,
)
from .qnet import (
    AdamOptimizer,
    QNetParams,
    TrainingDivergenceError,
    score_states,
    train_step,
)

_LOGGER = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9
LABEL_ATTR = "label"

Hyperparams = namedtuple(
    "Hyperparams",
    [
        "episodes",
        "capacity",
        "batch_size",
        "target_sync",
        "epsilon0",
        "epsilon_decay",
        "epsilon_floor",
        "gamma",
        "alpha",
        "step_size",
        "receptive_fraction",
        "seed",
        "hidden",
        "max_grad_norm",
    ],
)
Hyperparams.__new__.__defaults__ = (
    DEFAULT_EPISODES,
    DEFAULT_CAPACITY,
    DEFAULT_BATCH_SIZE,
    DEFAULT_TARGET_SYNC,
    DEFAULT_EPSILON0,
    DEFAULT_EPSILON_DECAY,
    DEFAULT_EPSILON_FLOOR,
    DEFAULT_GAMMA,
    DEFAULT_ALPHA,
    DEFAULT_STEP_SIZE,
    DEFAULT_RECEPTIVE_FRACTION,
    DEFAULT_SEED,
    DEFAULT_HIDDEN,
    0.0,
)

Transition = namedtuple(
    "Transition", "state action reward next_state done next_schedule"
)
Transition.__new__.__defaults__ = (None,)
EpisodeLog = namedtuple(
    "EpisodeLog",
    "episode epsilon total_reward mean_loss buffer_size steps n_e n_cz",
)
RolloutResult = namedtuple("RolloutResult", "log sequence metrics total_reward")
InferenceResult = namedtuple(
    "InferenceResult",
    "log sequence metrics total_reward fallback_steps candidate_counts",
)
ReceptiveField = namedtuple("ReceptiveField", "anchor members distance_table width")


class ReplayBuffer:
    """Ring buffer of transitions; the oldest entry is overwritten first."""

    def __init__(self, capacity):
        """Initialize an empty buffer holding at most capacity entries."""
        if capacity < 1:
            raise ValueError("replay capacity must be positive")
        self.capacity = capacity
        self._items = []
        self._cursor = 0

    def __len__(self):
        return len(self._items)

    def push(self, transition):
        """Store a transition, evicting the oldest at capacity."""
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size, rng):
        """Return batch_size distinct transitions chosen uniformly."""
        picks = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in picks]

    def contents(self):
        """Return stored transitions from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._cursor :] + self._items[: self._cursor]


def epsilon_at(episode, hp):
    """Return the exploration rate used in a given episode (0-based)."""
    return max(hp.epsilon_floor, hp.epsilon0 * hp.epsilon_decay ** episode)


def candidate_scores(state, schedule, candidates, params, hw, alpha):
    """Return (steps, scores) for every candidate op.

    A candidate scores its own reward plus the network's estimate of the
    reward still to come after it. Steps reaching the terminal state add
    nothing to their reward.
    """
    steps = [advance(state, schedule, op, hw, alpha) for op in candidates]
    scores = np.array([step.reward for step in steps], dtype=np.float64)
    open_steps = [i for i, step in enumerate(steps) if not step.done]
    if open_steps:
        scores[open_steps] += score_states(
            [steps[i].state for i in open_steps],
            params,
            [steps[i].schedule for i in open_steps],
        )
    return steps, scores


def _best_candidate(state, schedule, candidates, params, hw, alpha):
    steps, scores = candidate_scores(state, schedule, candidates, params, hw, alpha)
    best = int(np.argmax(scores))
    return candidates[best], steps[best]


def epsilon_greedy_select(
    state, candidates, params, epsilon, rng, schedule=None, hw=None, alpha=DEFAULT_ALPHA
):
    """Pick a random candidate with probability epsilon, else the best scored.

    Returns (op, Step); the Step holds the next state and schedule. Exact
    score ties go to the earliest candidate.
    """
    if not candidates:
        raise NoActionError(f"no candidate ops in {state!r}")
    schedule = Schedule.empty() if schedule is None else schedule
    hw = HardwareParams() if hw is None else hw
    if rng.random() < epsilon:
        op = candidates[int(rng.integers(len(candidates)))]
        return op, advance(state, schedule, op, hw, alpha)
    return _best_candidate(state, schedule, candidates, params, hw, alpha)


def compute_targets(batch, target_params, gamma, hw=None, alpha=DEFAULT_ALPHA):
    """Return the bootstrapped regression target of every transition.

    y = r for a done transition, else r + gamma * max over the ops of the
    next state of (op reward + target network score of where it leads).
    """
    targets = [t.reward for t in batch]
    if gamma == 0:
        return targets
    hw = HardwareParams() if hw is None else hw
    pending = []
    states = []
    schedules = []
    for index, t in enumerate(batch):
        if t.done:
            continue
        ops = enumerate_actions(t.next_state)
        if not ops:
            raise InternalInvariantError(
                f"non-terminal state without ops: {t.next_state!r}"
            )
        schedule = Schedule.empty() if t.next_schedule is None else t.next_schedule
        steps = [advance(t.next_state, schedule, op, hw, alpha) for op in ops]
        values = np.array([step.reward for step in steps], dtype=np.float64)
        rows = []
        for position, step in enumerate(steps):
            if not step.done:
                rows.append((position, len(states)))
                states.append(step.state)
                schedules.append(step.schedule)
        pending.append((index, values, rows))
    scores = score_states(states, target_params, schedules)
    for index, values, rows in pending:
        for position, row in rows:
            values[position] += scores[row]
        targets[index] += gamma * float(np.max(values))
    return targets


def _count_ops(log, *kinds):
    return sum(1 for record in log if record.op.kind in kinds)


class DQNTrainer:
    """Experience collection and model fitting for the Q-network.

    The network learns the discounted reward still to come after each
    transition, so it is fitted to the bootstrapped target minus the
    transition's own reward.
    """

    def __init__(self, train_graphs, hp, hw, params=None):
        """Initialize buffer, networks and random streams."""
        if not train_graphs:
            raise ValueError("train needs at least one training graph")
        if hp.batch_size > hp.capacity:
            raise ValueError("batch size exceeds replay capacity")
        self.graphs = list(train_graphs)
        self.hp = hp
        self.hw = hw
        self.streams = spawn_streams(hp.seed)
        self.params = (
            params
            if params is not None
            else QNetParams.initialize(self.streams.weights, hp.hidden)
        )
        self.target_params = self.params.copy()
        self.optimizer = AdamOptimizer(hp.step_size)
        self.buffer = ReplayBuffer(hp.capacity)
        self.steps = 0
        self.log = []

    def _fit(self):
        hp = self.hp
        batch = self.buffer.sample(hp.batch_size, self.streams.replay)
        targets = compute_targets(
            batch, self.target_params, hp.gamma, self.hw, hp.alpha
        )
        self.params, loss = train_step(
            [(t.next_state, y - t.reward) for t, y in zip(batch, targets)],
            self.params,
            hp.step_size,
            self.optimizer,
            hp.max_grad_norm,
            schedules=[t.next_schedule for t in batch],
        )
        return loss

    def run_episode(self, episode):
        """Roll out one episode with exploration, fitting after every step."""
        hp = self.hp
        epsilon = epsilon_at(episode, hp)
        graph = self.graphs[int(self.streams.graphs.integers(len(self.graphs)))]
        state, schedule = graph, Schedule.empty()
        total = 0.0
        losses = []
        log = []
        while not is_terminal(state):
            candidates = enumerate_actions(state)
            op, step = epsilon_greedy_select(
                state,
                candidates,
                self.params,
                epsilon,
                self.streams.explore,
                schedule,
                self.hw,
                hp.alpha,
            )
            self.buffer.push(
                Transition(state, op, step.reward, step.state, step.done, step.schedule)
            )
            total += step.reward
            log.append(step.record)
            state, schedule = step.state, step.schedule
            self.steps += 1

            if len(self.buffer) >= hp.batch_size:
                losses.append(self._fit())
            if self.steps % hp.target_sync == 0:
                self.target_params = self.params.copy()
                _LOGGER.debug("Synced target network at step %d", self.steps)

        row = EpisodeLog(
            episode=episode,
            epsilon=epsilon,
            total_reward=total,
            mean_loss=float(np.mean(losses)) if losses else math.nan,
            buffer_size=len(self.buffer),
            steps=len(log),
            n_e=_count_ops(log, OpKind.EMITTER_SWAP),
            n_cz=_count_ops(log, OpKind.REVERSED_CZ, OpKind.TYPE_III_REVERSED_CZ),
        )
        self.log.append(row)
        return row

    def run(self):
        """Run every episode and return (params, log)."""
        for episode in range(self.hp.episodes):
            try:
                row = self.run_episode(episode)
            except TrainingDivergenceError as exc:
                _LOGGER.error("Training diverged in episode %d: %s", episode, exc)
                raise TrainingDivergenceError(
                    str(exc), log=list(self.log), params=self.params
                ) from exc
            _LOGGER.info(
                "Episode %d: reward %.3f, epsilon %.4f, loss %s",
                row.episode,
                row.total_reward,
                row.epsilon,
                row.mean_loss,
            )
        return self.params, list(self.log)


def train(train_graphs, hp, hw, params=None):
    """Train a Q-network on the given graphs; return (params, episode log)."""
    return DQNTrainer(train_graphs, hp, hw, params).run()


def receptive_width(photon_count, fraction):
    """Return the receptive-field size for a graph of photon_count photons."""
    return max(2, math.ceil(fraction * photon_count))


def init_receptive_field(state, anchor, width):
    """Return the field made of the anchor emitter and its closest photons."""
    if not state.is_emitter(anchor):
        raise ReceptiveFieldError(f"anchor {anchor} is not an emitter")
    distances = hop_distances(state, anchor)
    table = tuple(sorted(state.photons, key=lambda p: (distances[p], p)))
    members = frozenset((anchor,) + table[: max(0, width - 1)])
    return ReceptiveField(anchor, members, table, width)


def maintain_receptive_field(rf, state_after, record=None):
    """Drop vanished members and refill from the distance table.

    A swapped member photon hands its place to the emitter that replaced it.
    """
    members = {vertex for vertex in rf.members if vertex in state_after}
    if (
        record is not None
        and record.op.kind == OpKind.EMITTER_SWAP
        and record.op.first in rf.members
    ):
        members.add(record.resulting_emitter)
    for photon in rf.distance_table:
        if len(members) >= rf.width:
            break
        if photon not in members and state_after.is_photon(photon):
            members.add(photon)
    return rf._replace(members=frozenset(members))


def infer(graph, params, hp, hw, restricted=True):
    """Compile a graph with the trained network.

    The first op is the best-scored EmitterSwap over all photons; its emitter
    anchors the receptive field, and every later op is picked among ops whose
    operands lie in the field. If the field offers nothing while photons or
    edges remain, that single step considers the whole graph.
    """
    state, schedule = graph, Schedule.empty()
    log = []
    total = 0.0
    fallback_steps = []
    candidate_counts = []
    rf = None

    if not is_terminal(state):
        swaps = [
            op for op in enumerate_actions(state) if op.kind == OpKind.EMITTER_SWAP
        ]
        candidate_counts.append(len(swaps))
        _, step = _best_candidate(state, schedule, swaps, params, hw, hp.alpha)
        log.append(step.record)
        total += step.reward
        state, schedule = step.state, step.schedule
        if restricted:
            width = receptive_width(graph.photon_count, hp.receptive_fraction)
            rf = init_receptive_field(state, step.record.resulting_emitter, width)

    while not is_terminal(state):
        candidates = enumerate_actions(state, rf.members if rf is not None else None)
        if not candidates:
            fallback_steps.append(len(log))
            _LOGGER.info(
                "Receptive field %s offers no op at step %d; widening once",
                sorted(rf.members),
                len(log),
            )
            candidates = enumerate_actions(state)
            if not candidates:
                raise InternalInvariantError(f"no op in non-terminal state {state!r}")
        candidate_counts.append(len(candidates))
        _, step = _best_candidate(state, schedule, candidates, params, hw, hp.alpha)
        log.append(step.record)
        total += step.reward
        state, schedule = step.state, step.schedule
        if rf is not None:
            rf = maintain_receptive_field(rf, state, step.record)

    seq = build_forward_sequence(log, graph)
    metrics = metrics_of(seq, hw)
    _LOGGER.info(
        "Inferred %d ops: T_gen %.3f ns, N_e %d, N_CZ %d",
        len(log),
        metrics.t_gen,
        metrics.n_e,
        metrics.n_cz,
    )
    return InferenceResult(log, seq, metrics, total, fallback_steps, candidate_counts)


def rollout(graph, choose, hw, alpha):
    """Drive a policy to the terminal state and return a RolloutResult.

    `choose(state, schedule, candidates)` returns one of the candidates.
    """
    state, schedule = graph, Schedule.empty()
    log = []
    total = 0.0
    while not is_terminal(state):
        candidates = enumerate_actions(state)
        if not candidates:
            raise InternalInvariantError(f"no op in non-terminal state {state!r}")
        op = choose(state, schedule, candidates)
        step = advance(state, schedule, op, hw, alpha)
        log.append(step.record)
        total += step.reward
        state, schedule = step.state, step.schedule
    seq = build_forward_sequence(log, graph)
    return RolloutResult(log, seq, metrics_of(seq, hw), total)


def random_chooser(seed):
    """Return a chooser picking uniformly among candidates."""
    rng = make_rng(seed)

    def choose(state, schedule, candidates):
        return candidates[int(rng.integers(len(candidates)))]

    return choose


def greedy_chooser(hw, alpha):
    """Return a chooser maximizing the immediate reward."""

    def choose(state, schedule, candidates):
        rewards = [advance(state, schedule, op, hw, alpha).reward for op in candidates]
        return candidates[int(np.argmax(rewards))]

    return choose


def baseline_rollout(graph, policy, hw, alpha=DEFAULT_ALPHA, seed=0):
    """Run the random or greedy baseline over the full op set."""
    if policy == POLICY_RANDOM:
        chooser = random_chooser(seed)
    elif policy == POLICY_GREEDY:
        chooser = greedy_chooser(hw, alpha)
    else:
        raise ValueError(f"unknown baseline policy {policy}")
    return rollout(graph, chooser, hw, alpha)


def best_of_random(graph, count, hw, alpha=DEFAULT_ALPHA, seed=0):
    """Return the best of count random rollouts by total reward."""
    rng = make_rng(seed)
    best = None
    for _ in range(count):
        result = rollout(graph, random_chooser(rng), hw, alpha)
        if best is None or result.total_reward > best.total_reward + TIE_TOLERANCE:
            best = result
    return best


def _vertex_label(state, schedule, vertex):
    if state.is_photon(vertex):
        return "photon"
    slack = schedule.makespan - schedule.emitter_free.get(vertex, 0.0)
    return f"emitter:{slack:.9f}"


def _labelled_graph(state, schedule):
    graph = state.to_networkx()
    for vertex in state.vertices:
        graph.nodes[vertex][LABEL_ATTR] = _vertex_label(state, schedule, vertex)
    return graph


def _same_label(a, b):
    return a[LABEL_ATTR] == b[LABEL_ATTR]


class SearchMemo:
    """Values of search nodes, shared between isomorphic states.

    Future rewards depend on the graph, on how long each emitter idles before
    the current makespan, and on the makespan itself (a fresh emitter starts
    at time zero). States are bucketed by makespan and a Weisfeiler-Lehman
    hash of the emitter-labelled graph; an isomorphism check inside the bucket
    rules out hash collisions.
    """

    def __init__(self):
        """Initialize an empty memo."""
        self._buckets = {}

    def __len__(self):
        return sum(len(bucket) for bucket in self._buckets.values())

    @staticmethod
    def _bucket_key(schedule, graph):
        digest = nx.weisfeiler_lehman_graph_hash(graph, node_attr=LABEL_ATTR)
        return (f"{schedule.makespan:.9f}", digest)

    def get(self, state, schedule):
        """Return the stored value of a node, or None."""
        graph = _labelled_graph(state, schedule)
        for other, value in self._buckets.get(self._bucket_key(schedule, graph), ()):
            if nx.is_isomorphic(graph, other, node_match=_same_label):
                return value
        return None

    def put(self, state, schedule, value):
        """Store the value of a node."""
        graph = _labelled_graph(state, schedule)
        key = self._bucket_key(schedule, graph)
        self._buckets.setdefault(key, []).append((graph, value))


def exhaustive_search(graph, hw, alpha=DEFAULT_ALPHA, node_budget=DEFAULT_NODE_BUDGET):
    """Return the reward-maximizing op log by memoized depth-first search.

    Among optimal logs the one first in enumeration order is returned. When
    more than node_budget states would be expanded, SearchBudgetExceeded is
    raised carrying the best complete rollout reached so far.
    """
    memo = SearchMemo()
    expanded = 0
    path = []
    incumbent = {"total": -math.inf, "log": None}

    def value(state, schedule, gained):
        nonlocal expanded
        known = memo.get(state, schedule)
        if known is not None:
            return known
        expanded += 1
        if expanded > node_budget:
            raise _BudgetHit()
        best = -math.inf
        for op in enumerate_actions(state):
            step = advance(state, schedule, op, hw, alpha)
            path.append(step.record)
            if step.done:
                future = 0.0
                if gained + step.reward > incumbent["total"]:
                    incumbent["total"] = gained + step.reward
                    incumbent["log"] = list(path)
            else:
                future = value(step.state, step.schedule, gained + step.reward)
            path.pop()
            best = max(best, step.reward + future)
        memo.put(state, schedule, best)
        return best

    if is_terminal(graph):
        seq = build_forward_sequence([], graph)
        return RolloutResult([], seq, metrics_of(seq, hw), 0.0)

    root = Schedule.empty()
    try:
        optimum = value(graph, root, 0.0)
    except _BudgetHit:
        best = None
        if incumbent["log"] is not None:
            seq = build_forward_sequence(incumbent["log"], graph)
            best = RolloutResult(
                incumbent["log"], seq, metrics_of(seq, hw), incumbent["total"]
            )
        raise SearchBudgetExceeded(node_budget, best) from None

    log = []
    state, schedule, remaining = graph, root, optimum
    while not is_terminal(state):
        for op in enumerate_actions(state):
            step = advance(state, schedule, op, hw, alpha)
            future = 0.0 if step.done else memo.get(step.state, step.schedule)
            if future is not None and (
                abs(step.reward + future - remaining) <= TIE_TOLERANCE
            ):
                break
        else:
            raise InternalInvariantError("optimal successor not found in memo")
        log.append(step.record)
        state, schedule, remaining = step.state, step.schedule, future

    seq = build_forward_sequence(log, graph)
    _LOGGER.debug(
        "Exhaustive search expanded %d states; optimum %.3f via %s",
        expanded,
        optimum,
        [format_op(record.op) for record in log],
    )
    return RolloutResult(log, seq, metrics_of(seq, hw), optimum)


class _BudgetHit(Exception):
    pass


class NoActionError(PhotonSeqError):
    """Error to indicate selection from an empty candidate list."""


class InternalInvariantError(PhotonSeqError):
    """Error to indicate a broken internal invariant."""


class ReceptiveFieldError(PhotonSeqError, ValueError):
    """Error to indicate a receptive field anchored on a non-emitter."""


class SearchBudgetExceeded(PhotonSeqError):
    """Error to indicate the exhaustive search ran out of budget."""

    def __init__(self, budget, best):
        """Initialize with the best complete rollout found, if any."""
        super().__init__(f"exhaustive search exceeded {budget} expanded states")
        self.budget = budget
        self.best = best
