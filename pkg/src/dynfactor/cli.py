"""``dynfactor`` command-line front end."""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import evaluation
from .engine import Engine
from .errors import DynFactorError, NumericalError, ParseError
from .io import export_embeddings, load_state, read_edge_list, read_events, save_state
from .state import REBASE_COND

EXIT_OK, EXIT_PARSE, EXIT_NUMERICAL, EXIT_USAGE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _alpha(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1], got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _fraction(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {v}")
    return v


def _int_list(text):
    try:
        return [int(float(t)) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _model_flags(p, with_undirected=True):
    p.add_argument("--dim", type=_positive_int, default=128, help="embedding dimension d")
    p.add_argument("--alpha", type=_alpha, default=0.3, help="PPR damping factor (1 disables enhancement)")
    p.add_argument("--eps", type=_positive_float, default=1e-5, help="PPR error tolerance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rebase-cond", type=_positive_float, default=REBASE_COND,
                   help="fold projections into the base when cond(P) exceeds this")
    if with_undirected:
        p.add_argument("--undirected", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynfactor", description="Streaming network embedding with PPR enhancement.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", help="embed an edge list and write a state file")
    p.add_argument("edges")
    p.add_argument("state")
    _model_flags(p)

    p = sub.add_parser("stream", help="apply an event file to a state file")
    p.add_argument("state")
    p.add_argument("events")
    p.add_argument("--out", help="write the updated state here instead of in place")
    p.add_argument("--latency-log", help="write 'line seconds' per event to this file")

    p = sub.add_parser("export", help="write embeddings as text")
    p.add_argument("state")
    p.add_argument("output")
    p.add_argument("--enhanced", action="store_true", help="export Z in place of the context half")

    p = sub.add_parser("query", help="print one node's vectors")
    p.add_argument("state")
    p.add_argument("node", type=int)
    p.add_argument("--enhanced", action="store_true")

    p = sub.add_parser("eval", help="link prediction (lp) or graph reconstruction (gr)")
    p.add_argument("task", choices=("lp", "gr"))
    p.add_argument("edges")
    _model_flags(p)
    p.add_argument("--removal-ratio", type=_fraction, default=0.3)
    p.add_argument("--sample-fraction", type=_fraction, default=1.0)
    p.add_argument("--ks", type=_int_list, default=None, help="comma-separated K values")
    p.add_argument("--csv", help="also write precision@K rows to this CSV file")

    p = sub.add_parser("bench", help="per-event latency on random graphs")
    _model_flags(p, with_undirected=False)
    p.set_defaults(dim=32)
    p.add_argument("--n-values", type=_int_list, default=[10_000, 100_000])
    p.add_argument("--events", type=_positive_int, default=200, help="events per graph size")
    return parser


def _fmt_vec(v):
    return " ".join(format(x, ".17g") for x in v)


def cmd_init(args):
    g = read_edge_list(args.edges, undirected=args.undirected)
    eng = Engine.initialize(g, d=args.dim, alpha=args.alpha, eps=args.eps, seed=args.seed,
                            rebase_cond=args.rebase_cond, undirected=args.undirected)
    save_state(eng, args.state)
    print(f"n={g.n} m={g.m} rank={eng.state.k}")


def cmd_stream(args):
    eng = load_state(args.state)
    times = []
    log = open(args.latency_log, "w", encoding="utf-8") if args.latency_log else None
    try:
        for lineno, event, declared in read_events(args.events):
            if declared is not None and declared != eng.graph.n:
                raise ParseError(f"new node must have id {eng.graph.n}, got {declared}", lineno)
            t0 = time.perf_counter()
            eng.apply(event)
            dt = time.perf_counter() - t0
            times.append(dt)
            if log:
                log.write(f"{lineno} {dt:.9f}\n")
    finally:
        if log:
            log.close()
    save_state(eng, args.out or args.state)
    t = np.asarray(times)
    mean = 1e3 * t.mean() if len(t) else 0.0
    print(f"events={len(t)} n={eng.graph.n} m={eng.graph.m} rank={eng.state.k} mean_ms={mean:.6g}")


def cmd_export(args):
    export_embeddings(load_state(args.state), args.output, enhanced=args.enhanced)


def cmd_query(args):
    eng = load_state(args.state)
    ctx = eng.enhanced(args.node) if args.enhanced else eng.context(args.node)
    print("context " + _fmt_vec(ctx))
    print("content " + _fmt_vec(eng.content(args.node)))


def cmd_eval(args):
    g = read_edge_list(args.edges, undirected=args.undirected)
    common = dict(d=args.dim, alpha=args.alpha, eps=args.eps, seed=args.seed, undirected=args.undirected,
                  rebase_cond=args.rebase_cond)
    if args.task == "lp":
        report = evaluation.run_link_prediction(g, removal_ratio=args.removal_ratio, **common)
    else:
        report = evaluation.run_graph_reconstruction(g, sample_fraction=args.sample_fraction, ks=args.ks,
                                                     **common)
    sys.stdout.write(report.to_text())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())


def cmd_bench(args):
    report = evaluation.bench_update_latency(tuple(args.n_values), d=args.dim, events_per_n=args.events,
                                             seed=args.seed, alpha=args.alpha, eps=args.eps)
    sys.stdout.write(report.to_text())


COMMANDS = {"init": cmd_init, "stream": cmd_stream, "export": cmd_export, "query": cmd_query,
            "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"dynfactor: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as exc:
        print(f"dynfactor: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DynFactorError, OSError, ValueError) as exc:
        print(f"dynfactor: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
