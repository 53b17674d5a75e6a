"""Benchmark graphs and experiment orchestration.

The named benchmarks reproduce the vertex and edge counts of a set of
application-derived graph states with synthetic generators of the same
family shape. Every report row built from one of them says so in its note
column.
"""
import asyncio
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import csv
import datetime
import io
import json
import logging
import math

import networkx as nx
import numpy as np

from .agent import (
    baseline_rollout,
    best_of_random,
    exhaustive_search,
    infer,
    train,
)
from .common import PhotonSeqError, Stopwatch
from .compiler import fidelity_report
from .config import ConfigError
from .const import (
    CONF_COLS,
    CONF_DEGREE,
    CONF_EDGES,
    CONF_FILE,
    CONF_KIND,
    CONF_N,
    CONF_P,
    CONF_ROWS,
    CONF_SEED,
    DEFAULT_QUBIT_CAP,
    DEFAULT_VERIFY_SEEDS,
    KIND_CYCLE,
    KIND_ERDOS_RENYI,
    KIND_GNM,
    KIND_GRID,
    KIND_PATH,
    KIND_RANDOM_REGULAR,
    KIND_RANDOM_TREE,
    KIND_STAR,
    NOT_APPLICABLE,
    POLICY_BEST_OF_RANDOM,
    POLICY_EXHAUSTIVE,
    POLICY_GREEDY,
    POLICY_RANDOM,
    POLICY_RL,
    STAND_IN_NOTE,
    TRAINING_LOG_COLUMNS,
)
from .graph import GraphState, from_edge_list
from .qnet import TrainingDivergenceError, save_checkpoint
from .verify import peak_qubits, verify_sequence

_LOGGER = logging.getLogger(__name__)

MAX_RETRIES = 1000
BEST_OF_RANDOM_COUNT = 100

GraphSpec = namedtuple("GraphSpec", "kind n seed rows cols degree p edges")
GraphSpec.__new__.__defaults__ = (0, None, None, None, None, None)

NamedGraph = namedtuple("NamedGraph", "name graph note")
PolicySetting = namedtuple("PolicySetting", "policy alpha rf_frac")
CompileOutcome = namedtuple("CompileOutcome", "row result verification")

# name -> (kind, V, E); trees for hwea and bv, unicyclic supre, 3-regular qaoa,
# denser uniform graphs for hc and qft.
BENCHMARKS = {
    "hwea-6": (KIND_PATH, 26, 25),
    "hwea-30": (KIND_PATH, 122, 121),
    "hwea-52": (KIND_PATH, 210, 209),
    "hc-6": (KIND_GNM, 36, 45),
    "hc-18": (KIND_GNM, 108, 243),
    "hc-38": (KIND_GNM, 228, 893),
    "qft-5": (KIND_GNM, 35, 40),
    "qft-10": (KIND_GNM, 121, 211),
    "qft-14": (KIND_GNM, 235, 366),
    "bv-6": (KIND_RANDOM_TREE, 18, 17),
    "bv-34": (KIND_RANDOM_TREE, 102, 101),
    "bv-68": (KIND_RANDOM_TREE, 204, 203),
    "qaoa-6": (KIND_RANDOM_REGULAR, 42, 54),
    "qaoa-18": (KIND_RANDOM_REGULAR, 130, 166),
    "qaoa-30": (KIND_RANDOM_REGULAR, 216, 276),
    "supre-6": (KIND_CYCLE, 25, 25),
    "supre-26": (KIND_RANDOM_TREE, 112, 111),
    "supre-52": (KIND_CYCLE, 233, 233),
}


def benchmark_spec(name, seed=0):
    """Return the GraphSpec standing in for a named benchmark."""
    try:
        kind, count, edges = BENCHMARKS[name]
    except KeyError:
        raise GraphSpecError(f"unknown benchmark {name}") from None
    if kind == KIND_RANDOM_REGULAR:
        return GraphSpec(kind, count, seed, degree=3)
    if kind == KIND_GNM:
        return GraphSpec(kind, count, seed, edges=edges)
    return GraphSpec(kind, count, seed)


def _connected(factory, seed, what):
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RETRIES):
        graph = factory(int(rng.integers(2 ** 31)))
        if graph.number_of_nodes() <= 1 or nx.is_connected(graph):
            return graph
    raise GraphSpecError(f"no connected {what} after {MAX_RETRIES} draws")


def _random_tree(count, seed):
    if count <= 2:
        return nx.path_graph(count)
    rng = np.random.default_rng(seed)
    sequence = [int(x) for x in rng.integers(count, size=count - 2)]
    return nx.from_prufer_sequence(sequence)


def _connected_gnm(count, edges, seed):
    """Return a random spanning tree topped up with uniform extra edges."""
    rng = np.random.default_rng(seed)
    graph = _random_tree(count, int(rng.integers(2 ** 31)))
    missing = edges - graph.number_of_edges()
    if missing > 0:
        candidates = sorted(tuple(sorted(pair)) for pair in nx.non_edges(graph))
        picks = rng.choice(len(candidates), size=missing, replace=False)
        graph.add_edges_from(candidates[i] for i in sorted(picks))
    return graph


def generate_graph(spec):
    """Return the deterministic photon-only graph for a spec."""
    kind, count = spec.kind, spec.n
    if count is None or count < 1:
        raise GraphSpecError("graph size n must be at least 1")

    if kind == KIND_PATH:
        graph = nx.path_graph(count)
    elif kind == KIND_STAR:
        graph = nx.star_graph(count - 1)
    elif kind == KIND_CYCLE:
        if count < 3:
            raise GraphSpecError("a cycle needs at least 3 vertices")
        graph = nx.cycle_graph(count)
    elif kind == KIND_GRID:
        rows, cols = spec.rows, spec.cols
        if rows is None or cols is None:
            raise GraphSpecError("grid needs rows and cols")
        if rows * cols != count:
            raise GraphSpecError(f"grid {rows}x{cols} does not have {count} vertices")
        graph = nx.grid_2d_graph(rows, cols)
    elif kind == KIND_RANDOM_REGULAR:
        degree = spec.degree
        if degree is None:
            raise GraphSpecError("random_regular needs a degree")
        if (count * degree) % 2 or degree >= count:
            raise GraphSpecError(f"no {degree}-regular graph on {count} vertices")
        graph = _connected(
            lambda s: nx.random_regular_graph(degree, count, seed=s),
            spec.seed,
            f"{degree}-regular graph",
        )
    elif kind == KIND_ERDOS_RENYI:
        if spec.p is None:
            raise GraphSpecError("erdos_renyi needs p")
        graph = _connected(
            lambda s: nx.gnp_random_graph(count, spec.p, seed=s),
            spec.seed,
            f"G({count}, {spec.p})",
        )
    elif kind == KIND_GNM:
        edges = spec.edges
        if edges is None or not count - 1 <= edges <= count * (count - 1) // 2:
            raise GraphSpecError(
                f"no connected graph on {count} vertices with {edges} edges"
            )
        graph = _connected_gnm(count, edges, spec.seed)
    elif kind == KIND_RANDOM_TREE:
        graph = _random_tree(count, spec.seed)
    else:
        raise GraphSpecError(f"unknown graph kind {kind}")

    _LOGGER.debug(
        "Generated %s graph: %d vertices, %d edges",
        kind,
        graph.number_of_nodes(),
        graph.number_of_edges(),
    )
    return GraphState.from_networkx(graph)


def spec_from_config(conf):
    """Return a GraphSpec from a validated graph section."""
    return GraphSpec(
        kind=conf[CONF_KIND],
        n=conf[CONF_N],
        seed=conf.get(CONF_SEED, 0),
        rows=conf.get(CONF_ROWS),
        cols=conf.get(CONF_COLS),
        degree=conf.get(CONF_DEGREE),
        p=conf.get(CONF_P),
        edges=conf.get(CONF_EDGES),
    )


def load_graph_file(path):
    """Read an edge-list file into a GraphState."""
    with open(path, encoding="ascii") as handle:
        return from_edge_list(handle.read())


def graph_from_config(conf):
    """Return the graph a validated graph section describes."""
    if CONF_FILE in conf:
        return load_graph_file(conf[CONF_FILE])
    return generate_graph(spec_from_config(conf))


def resolve_graph(text, seed=0):
    """Resolve a graph argument into a NamedGraph.

    Accepted forms: ``bench:NAME``, ``KIND:N`` (e.g. ``path:10`` or
    ``random_regular:12``, whose degree defaults to 3) and an edge-list path.
    ``grid:N`` lays N out on its most square rows x cols factorisation.
    """
    if text.startswith("bench:"):
        name = text.split(":", 1)[1]
        spec = benchmark_spec(name, seed)
        return NamedGraph(name, generate_graph(spec), STAND_IN_NOTE)
    head, sep, tail = text.partition(":")
    if sep and head in _KIND_DEFAULTS:
        try:
            count = int(tail)
        except ValueError:
            raise GraphSpecError(f"bad graph size in {text}") from None
        spec = GraphSpec(head, count, seed, **_KIND_DEFAULTS[head](count))
        return NamedGraph(text, generate_graph(spec), "")
    return NamedGraph(text, load_graph_file(text), "")


def _grid_shape(count):
    """Return the most square rows x cols factorisation of count."""
    rows = max(
        (d for d in range(1, int(math.sqrt(count)) + 1) if count % d == 0), default=1
    )
    return {"rows": rows, "cols": count // rows}


_KIND_DEFAULTS = {
    KIND_PATH: lambda n: {},
    KIND_STAR: lambda n: {},
    KIND_CYCLE: lambda n: {},
    KIND_RANDOM_TREE: lambda n: {},
    KIND_GRID: _grid_shape,
    KIND_RANDOM_REGULAR: lambda n: {"degree": 3},
    KIND_ERDOS_RENYI: lambda n: {"p": min(1.0, 2.0 * math.log(max(n, 2)) / n)},
    KIND_GNM: lambda n: {"edges": min(n * (n - 1) // 2, 2 * n)},
}


def compile_graph(graph, setting, hw, hp, params=None, seed=0):
    """Compile a graph with the policy a PolicySetting names."""
    policy, alpha = setting.policy, setting.alpha
    if policy == POLICY_RL:
        if params is None:
            raise ConfigError("the rl policy needs a checkpoint")
        tuned = hp._replace(alpha=alpha, receptive_fraction=setting.rf_frac)
        return infer(graph, params, tuned, hw)
    if policy in (POLICY_RANDOM, POLICY_GREEDY):
        return baseline_rollout(graph, policy, hw, alpha, seed)
    if policy == POLICY_EXHAUSTIVE:
        return exhaustive_search(graph, hw, alpha)
    if policy == POLICY_BEST_OF_RANDOM:
        return best_of_random(graph, BEST_OF_RANDOM_COUNT, hw, alpha, seed)
    raise ConfigError(f"unknown policy {policy}")


def run_compile(
    named,
    setting,
    hw,
    hp,
    params=None,
    seed=0,
    cap=DEFAULT_QUBIT_CAP,
    verify_seeds=DEFAULT_VERIFY_SEEDS,
    label=None,
):
    """Compile, verify and measure one graph under one policy.

    Verification runs when the sequence fits under the qubit cap and is
    skipped with a warning otherwise. A sequence that fails verification
    raises VerificationFailedError instead of producing a row.
    """
    watch = Stopwatch()
    result = compile_graph(named.graph, setting, hw, hp, params, seed)
    elapsed = watch.elapsed_ms

    verification = None
    peak = peak_qubits(result.sequence)
    if peak > cap:
        _LOGGER.warning(
            "Skipping verification of %s: %d live qubits, cap %d", named.name, peak, cap
        )
        verified = f"skipped (cap exceeded: {peak} > {cap})"
    else:
        verification = verify_sequence(
            named.graph, result.log, hw, seeds=verify_seeds, cap=cap
        )
        if not verification.ok:
            raise VerificationFailedError(named.name, setting.policy, verification)
        verified = "yes"

    metrics = result.metrics
    fidelity = fidelity_report(metrics, hw)
    row = {
        "graph": named.name,
        "V": named.graph.photon_count,
        "E": named.graph.edge_count,
        "policy": label or setting.policy,
        "T_gen_ns": metrics.t_gen,
        "N_e": metrics.n_e,
        "N_CZ": metrics.n_cz,
        "F_de": fidelity.f_de,
        "F_CZ": fidelity.f_cz,
        "P_remain": fidelity.p_remain,
        "total_reward": result.total_reward,
        "verified": verified,
        "wall_ms": round(elapsed, 3),
        "note": named.note,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return CompileOutcome(row, result, verification)


def size_bucket(vertex_count):
    """Return the size class of a graph."""
    if vertex_count < 75:
        return "small"
    if vertex_count < 170:
        return "medium"
    return "large"


def _ratio(value, reference):
    if not reference:
        return NOT_APPLICABLE
    return 1.0 - value / reference


def reduction_rows(rows, reference):
    """Return reduction ratios of every policy against the reference policy.

    Per-graph rows come first, then the per-size-bucket means.
    """
    by_graph = {}
    for row in rows:
        by_graph.setdefault(row["graph"], {})[row["policy"]] = row
    result = []
    buckets = {}
    for graph in sorted(by_graph):
        policies = by_graph[graph]
        ref = policies.get(reference)
        if ref is None:
            raise ConfigError(f"reference policy {reference} missing for {graph}")
        bucket = size_bucket(ref["V"])
        for policy in sorted(policies):
            row = policies[policy]
            entry = {
                "graph": graph,
                "size": bucket,
                "policy": policy,
                "reference": reference,
                "T_gen_reduction": _ratio(row["T_gen_ns"], ref["T_gen_ns"]),
                "N_e_reduction": _ratio(row["N_e"], ref["N_e"]),
                "N_CZ_reduction": _ratio(row["N_CZ"], ref["N_CZ"]),
            }
            result.append(entry)
            buckets.setdefault((bucket, policy), []).append(entry)

    for (bucket, policy), entries in sorted(buckets.items()):
        summary = {
            "graph": f"mean[{bucket}]",
            "size": bucket,
            "policy": policy,
            "reference": reference,
        }
        for column in ("T_gen_reduction", "N_e_reduction", "N_CZ_reduction"):
            values = [e[column] for e in entries if e[column] != NOT_APPLICABLE]
            summary[column] = float(np.mean(values)) if values else NOT_APPLICABLE
        result.append(summary)
    return result


def _setting_label(setting, sweep):
    if not sweep:
        return setting.policy
    return f"{setting.policy}[alpha={setting.alpha:g},rf={setting.rf_frac:g}]"


_AVERAGED_COLUMNS = (
    "T_gen_ns",
    "N_e",
    "N_CZ",
    "F_de",
    "F_CZ",
    "P_remain",
    "total_reward",
)


def _mean_row(rows):
    row = dict(rows[0])
    for column in _AVERAGED_COLUMNS:
        row[column] = float(np.mean([r[column] for r in rows]))
    row["wall_ms"] = round(sum(r["wall_ms"] for r in rows), 3)
    return row


async def _gather_rows(jobs, workers):
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return await asyncio.gather(
            *(loop.run_in_executor(executor, job) for job in jobs)
        )


def run_compare(
    graphs,
    policies,
    reference,
    hw,
    hp,
    params=None,
    alphas=None,
    rf_fracs=None,
    seeds=1,
    jobs=1,
    cap=DEFAULT_QUBIT_CAP,
):
    """Compile every graph with every policy and compare against reference.

    The random policy is run once per seed and its metrics averaged. With
    several alpha or receptive-field values, each setting gets its own rows
    and is compared against the reference under the same setting.

    Returns (metric rows, reduction rows).
    """
    if reference not in policies:
        raise ConfigError(f"reference policy {reference} is not among {policies}")
    alphas = list(alphas or [hp.alpha])
    rf_fracs = list(rf_fracs or [hp.receptive_fraction])
    sweep = len(alphas) > 1 or len(rf_fracs) > 1

    tasks = []
    for named in graphs:
        for alpha in alphas:
            for rf_frac in rf_fracs:
                for policy in policies:
                    setting = PolicySetting(policy, alpha, rf_frac)
                    runs = seeds if policy == POLICY_RANDOM else 1
                    label = _setting_label(setting, sweep)
                    for seed in range(runs):
                        tasks.append((named, setting, label, seed))

    def make_job(named, setting, label, seed):
        def job():
            return run_compile(
                named, setting, hw, hp, params, seed=seed, cap=cap, label=label
            ).row

        return job

    jobs_list = [make_job(*task) for task in tasks]
    if jobs > 1:
        rows = asyncio.run(_gather_rows(jobs_list, jobs))
    else:
        rows = [job() for job in jobs_list]

    grouped = {}
    for row in rows:
        grouped.setdefault((row["graph"], row["policy"]), []).append(row)
    merged = [_mean_row(group) for _, group in sorted(grouped.items())]

    reductions = []
    for alpha in alphas:
        for rf_frac in rf_fracs:
            ref_label = _setting_label(PolicySetting(reference, alpha, rf_frac), sweep)
            labels = {
                _setting_label(PolicySetting(p, alpha, rf_frac), sweep)
                for p in policies
            }
            subset = [row for row in merged if row["policy"] in labels]
            reductions.extend(reduction_rows(subset, ref_label))
    return merged, reductions


def _log_rows(log):
    rows = []
    for entry in log:
        row = entry._asdict()
        row["N_e"] = row.pop("n_e")
        row["N_CZ"] = row.pop("n_cz")
        rows.append(row)
    return rows


def run_train(run_config, checkpoint_path, log_path=None):
    """Train on the graphs of a run config and persist the results.

    The episode log is written even when training diverges; the divergence
    error is then re-raised.
    """
    graphs = [graph_from_config(conf) for _, conf in run_config.graphs]
    watch = Stopwatch()
    try:
        params, log = train(graphs, run_config.hyperparams, run_config.hardware)
    except TrainingDivergenceError as exc:
        if log_path:
            write_table(log_path, _log_rows(exc.log), TRAINING_LOG_COLUMNS)
        if exc.params is not None:
            save_checkpoint(checkpoint_path, exc.params)
        raise
    save_checkpoint(checkpoint_path, params)
    if log_path:
        write_table(log_path, _log_rows(log), TRAINING_LOG_COLUMNS)
    _LOGGER.info(
        "Trained %d episodes on %d graphs in %.1f s",
        len(log),
        len(graphs),
        watch.elapsed_ms / 1000.0,
    )
    return params, log, watch.elapsed_ms


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return value


def render_table(rows, columns, fmt="csv"):
    """Render rows as CSV (fixed column order) or as a JSON list."""
    if fmt == "json":
        return json.dumps(
            [{column: row.get(column) for column in columns} for row in rows], indent=2
        ) + "\n"
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({column: _format_value(row.get(column)) for column in columns})
    return buffer.getvalue()


def write_table(path, rows, columns, fmt="csv"):
    """Write rows to a file in the given format."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(render_table(rows, columns, fmt))


class GraphSpecError(PhotonSeqError):
    """Error to indicate an infeasible graph spec."""


class VerificationFailedError(PhotonSeqError):
    """Error to indicate a compiled sequence that failed verification."""

    def __init__(self, graph, policy, report):
        """Initialize with the failed verification report."""
        super().__init__(
            f"{graph} / {policy}: verification failed: {report.diagnostic}"
        )
        self.report = report
