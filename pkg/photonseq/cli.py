"""Command-line interface: train, compile, compare, verify and gen."""
import argparse
import json
import logging
import sys

from . import __version__
from .agent import Hyperparams, InternalInvariantError
from .bench import (
    GraphSpec,
    NamedGraph,
    PolicySetting,
    VerificationFailedError,
    compile_graph,
    generate_graph,
    render_table,
    resolve_graph,
    run_compare,
    run_compile,
    run_train,
)
from .common import PhotonSeqError
from .compiler import sequence_summary, sequence_to_json
from .config import ConfigError, load_hardware, load_run_config
from .const import (
    DEFAULT_ALPHA,
    DEFAULT_QUBIT_CAP,
    DEFAULT_RECEPTIVE_FRACTION,
    DEFAULT_VERIFY_SEEDS,
    EXIT_FAILURE,
    EXIT_INTERNAL,
    EXIT_OK,
    GRAPH_KINDS,
    POLICIES,
    POLICY_GREEDY,
    POLICY_RANDOM,
    POLICY_RL,
    REDUCTION_COLUMNS,
    REPORT_COLUMNS,
)
from .graph import format_op, to_edge_list
from .qnet import load_checkpoint
from .verify import verify_sequence

_LOGGER = logging.getLogger(__name__)


def _add_graph_args(parser, multiple=False):
    parser.add_argument(
        "--graph",
        action="append" if multiple else "store",
        help="edge-list file, KIND:N or bench:NAME; grid:N takes the squarest shape",
    )
    parser.add_argument("--kind", choices=GRAPH_KINDS, help="generator kind")
    parser.add_argument("--n", type=int, help="photon count for --kind")
    parser.add_argument("--rows", type=int)
    parser.add_argument("--cols", type=int)
    parser.add_argument("--degree", type=int)
    parser.add_argument("--p", type=float)
    parser.add_argument("--edges", type=int)
    parser.add_argument("--seed", type=int, default=0, help="graph and policy seed")


def _add_policy_args(parser):
    parser.add_argument("--checkpoint", help="checkpoint for the rl policy")
    parser.add_argument("--hw", help="hardware config file")
    parser.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    parser.add_argument("--rf-frac", type=float, default=DEFAULT_RECEPTIVE_FRACTION)
    parser.add_argument("--cap", type=int, default=DEFAULT_QUBIT_CAP)


def build_parser():
    """Return the argument parser."""
    parser = argparse.ArgumentParser(
        prog="photonseq",
        description="Compile photonic graph states into emitter gate sequences.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
    )
    sub = parser.add_subparsers(dest="command")
    sub.required = True

    train = sub.add_parser("train", help="train the Q-network")
    train.add_argument("--config", required=True, help="run config file")
    train.add_argument("--checkpoint", required=True, help="checkpoint to write")
    train.add_argument("--out", help="training-log CSV to write")

    compile_ = sub.add_parser("compile", help="compile one graph")
    _add_graph_args(compile_)
    _add_policy_args(compile_)
    compile_.add_argument("--policy", choices=POLICIES, default=POLICY_GREEDY)
    compile_.add_argument("--out", help="report file (stdout when omitted)")
    compile_.add_argument("--format", choices=["csv", "json"], default="csv")
    compile_.add_argument("--dump", help="write the forward sequence as JSON")

    compare = sub.add_parser("compare", help="compare policies on several graphs")
    _add_graph_args(compare, multiple=True)
    _add_policy_args(compare)
    compare.add_argument(
        "--policy",
        action="append",
        choices=POLICIES,
        help="policy to run (repeatable)",
    )
    compare.add_argument("--reference", default=POLICY_RANDOM)
    compare.add_argument("--alphas", type=float, nargs="+", help="alpha sweep")
    compare.add_argument("--rf-fracs", type=float, nargs="+", help="field sweep")
    compare.add_argument("--seeds", type=int, default=1, help="random-policy runs")
    compare.add_argument("--jobs", type=int, default=1)
    compare.add_argument("--out", help="metric report file")
    compare.add_argument("--reductions", help="reduction report file")
    compare.add_argument("--format", choices=["csv", "json"], default="csv")

    verify = sub.add_parser("verify", help="compile and check with the simulator")
    _add_graph_args(verify)
    _add_policy_args(verify)
    verify.add_argument("--policy", choices=POLICIES, default=POLICY_GREEDY)
    verify.add_argument("--seeds", type=int, default=DEFAULT_VERIFY_SEEDS)
    verify.add_argument("--exhaustive", action="store_true")

    gen = sub.add_parser("gen", help="write a generated graph as an edge list")
    _add_graph_args(gen)
    gen.add_argument("--out", help="edge-list file (stdout when omitted)")
    return parser


def _graph_from_args(args, text=None):
    if text is not None:
        return resolve_graph(text, args.seed)
    if args.kind is not None:
        if args.n is None:
            raise ConfigError("--kind needs --n")
        spec = GraphSpec(
            args.kind,
            args.n,
            args.seed,
            args.rows,
            args.cols,
            args.degree,
            args.p,
            args.edges,
        )
        return NamedGraph(f"{args.kind}:{args.n}", generate_graph(spec), "")
    raise ConfigError("give --graph or --kind/--n")


def _graphs_from_args(args):
    texts = args.graph if isinstance(args.graph, list) else [args.graph]
    texts = [text for text in texts if text]
    graphs = [_graph_from_args(args, text) for text in texts]
    if args.kind is not None:
        graphs.append(_graph_from_args(args))
    if not graphs:
        raise ConfigError("give --graph or --kind/--n")
    return graphs


def _hyperparams(args):
    return Hyperparams(alpha=args.alpha, receptive_fraction=args.rf_frac)


def _params(args, policies):
    if POLICY_RL not in policies:
        return None
    if not args.checkpoint:
        raise ConfigError("the rl policy needs --checkpoint")
    return load_checkpoint(args.checkpoint)


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def cmd_train(args):
    """Run training from a config file."""
    run = load_run_config(args.config)
    _, log, elapsed_ms = run_train(run, args.checkpoint, args.out)
    final_epsilon = log[-1].epsilon if log else run.hyperparams.epsilon0
    print(
        f"episodes={len(log)} final_epsilon={final_epsilon:.6f} "
        f"wall_s={elapsed_ms / 1000.0:.1f} checkpoint={args.checkpoint}"
    )
    return EXIT_OK


def cmd_compile(args):
    """Compile one graph and report its metrics."""
    named = _graph_from_args(args, args.graph)
    hw = load_hardware(args.hw)
    params = _params(args, [args.policy])
    setting = PolicySetting(args.policy, args.alpha, args.rf_frac)
    outcome = run_compile(
        named, setting, hw, _hyperparams(args), params, seed=args.seed, cap=args.cap
    )
    _emit(render_table([outcome.row], REPORT_COLUMNS, args.format), args.out)
    if args.dump:
        dump = sequence_to_json(outcome.result.sequence)
        dump["log"] = [format_op(record.op) for record in outcome.result.log]
        dump["summary"] = sequence_summary(outcome.result.sequence)
        with open(args.dump, "w", encoding="utf-8") as handle:
            json.dump(dump, handle, indent=2)
    return EXIT_OK


def cmd_compare(args):
    """Compare policies against a reference policy."""
    graphs = _graphs_from_args(args)
    policies = args.policy or [POLICY_RANDOM, POLICY_GREEDY]
    if args.reference not in policies:
        policies = policies + [args.reference]
    hw = load_hardware(args.hw)
    rows, reductions = run_compare(
        graphs,
        policies,
        args.reference,
        hw,
        _hyperparams(args),
        params=_params(args, policies),
        alphas=args.alphas,
        rf_fracs=args.rf_fracs,
        seeds=args.seeds,
        jobs=args.jobs,
        cap=args.cap,
    )
    _emit(render_table(rows, REPORT_COLUMNS, args.format), args.out)
    if args.reductions:
        _emit(render_table(reductions, REDUCTION_COLUMNS, args.format), args.reductions)
    elif args.out:
        sys.stdout.write(render_table(reductions, REDUCTION_COLUMNS, args.format))
    return EXIT_OK


def cmd_verify(args):
    """Compile one graph and print the per-seed fidelity table."""
    named = _graph_from_args(args, args.graph)
    hw = load_hardware(args.hw)
    result = compile_graph(
        named.graph,
        PolicySetting(args.policy, args.alpha, args.rf_frac),
        hw,
        _hyperparams(args),
        _params(args, [args.policy]),
        seed=args.seed,
    )
    report = verify_sequence(
        named.graph,
        result.log,
        hw,
        seeds=args.seeds,
        cap=args.cap,
        exhaustive=args.exhaustive,
    )
    print("run,fidelity")
    for index, fidelity in enumerate(report.fidelities):
        print(f"{index},{fidelity:.12f}")
    print(f"# {named.name}: {report.diagnostic}")
    if report.failing_gate is not None:
        print(f"# failing gate index: {report.failing_gate}")
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_gen(args):
    """Write a generated graph as an edge list."""
    named = _graph_from_args(args, args.graph)
    _emit(to_edge_list(named.graph), args.out)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "compile": cmd_compile,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "gen": cmd_gen,
}


def main(argv=None):
    """Run the command line and return the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except VerificationFailedError as exc:
        _LOGGER.error("%s", exc)
        return EXIT_FAILURE
    except InternalInvariantError:
        _LOGGER.exception("Internal invariant violated")
        return EXIT_INTERNAL
    except (PhotonSeqError, OSError) as exc:
        _LOGGER.error("%s", exc)
        return EXIT_FAILURE
    except Exception:  # pylint: disable=broad-except
        _LOGGER.exception("Unexpected error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
