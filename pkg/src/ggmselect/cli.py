"""Command-line interface: ``ggmselect {select,adjust,simulate}``.

Exit codes: 0 success, 2 invalid input or flags, 3 numerical failure.  Every
error is reported on stderr as one line starting with ``error[<kind>]:``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import graph as gr
from . import io as gio
from . import multitest as mt
from . import simulation as sim
from .selection import GraphClass, PriorKnowledge, SelectionError, run_selection
from .stats import StatsError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def invalid(message: str) -> CliError:
    return CliError("validation", message, EXIT_INVALID)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise invalid(message)


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number, got {text!r}") from None
    if not 0 < a < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {a}")
    return a


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ggmselect", description="Gaussian graphical model selection by multiple testing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("select", help="select a graph from a data CSV")
    s.add_argument("data", help="CSV with a header of variable names, one observation per row")
    s.add_argument("--graph", choices=("undirected", "bidirected", "dag"), default="undirected")
    s.add_argument("--order", help="comma-separated variable names giving the well-numbering (dag)")
    s.add_argument("--method", choices=mt.METHODS, help="default: maxt-step, or sidak-step for dag")
    s.add_argument("--error", default="fwer", help="fwer | gfwer:K | tppfp:L | fdr")
    s.add_argument("--alpha", type=_alpha, default=0.05)
    s.add_argument("--reduce", action="store_true",
                   help="shrink conditioning sets using the prior upper graph")
    s.add_argument("--parents-only", action="store_true",
                   help="with --reduce on a dag, condition on parents instead of a minimum d-separator")
    s.add_argument("--prior-present", help="edge-list file of edges known present")
    s.add_argument("--prior-absent", help="edge-list file of edges known absent")
    s.add_argument("--mc-draws", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-report", default="-", help="JSON report path ('-' for stdout)")
    s.add_argument("--out-dot", help="DOT output path")

    a = sub.add_parser("adjust", help="adjust a CSV of label,p rows")
    a.add_argument("pvalues")
    a.add_argument("--method", choices=mt.METHODS + ("by",), default="holm")
    a.add_argument("--null-corr", help="CSV correlation matrix of the test statistics (max-T; default identity)")
    a.add_argument("--mc-draws", type=int, default=10_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="-")

    m = sub.add_parser("simulate", help="estimate error rates by simulation")
    m.add_argument("--fig2", action="store_true",
                   help="7 variables, 9 partial correlations in [0.2, 0.55], n from 25 to 500")
    m.add_argument("--graph", choices=("undirected", "bidirected", "dag"), default="undirected")
    m.add_argument("--p", type=int, default=7)
    m.add_argument("--edges", type=int, default=9)
    m.add_argument("--lo", type=float, default=0.2)
    m.add_argument("--hi", type=float, default=0.55)
    m.add_argument("--model-seed", type=int, default=0)
    m.add_argument("--sizes", default=",".join(map(str, sim.BENCHMARK_SAMPLE_SIZES)))
    m.add_argument("--methods", default=",".join(mt.METHODS))
    m.add_argument("--error", default="fwer")
    m.add_argument("--alpha", type=_alpha, default=0.1)
    m.add_argument("--reps", type=int, default=2000)
    m.add_argument("--mc-draws", type=int, default=10_000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--workers", type=int, default=1)
    m.add_argument("--out", default="-")
    return parser


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _error_rate(text: str, alpha: float) -> mt.ErrorRateSpec:
    try:
        return mt.ErrorRateSpec.parse(text, alpha)
    except mt.AdjustmentError as exc:
        raise invalid(str(exc)) from None


def _read_prior(path: str | None, kind: str, p: int) -> frozenset:
    if not path:
        return frozenset()
    try:
        g = gr.parse_edgelist(Path(path).read_text())
    except (OSError, gr.GraphError) as exc:
        raise invalid(f"prior file {path}: {exc}") from None
    if g.p != p:
        raise invalid(f"prior file {path}: p={g.p} but the data have {p} variables")
    want = gr.DIRECTED if kind == "dag" else (gr.BIDIRECTED if kind == "bidirected" else gr.UNDIRECTED)
    if g.edges and g.kind != want:
        raise invalid(f"prior file {path}: {g.kind} edges do not fit a {kind} graph")
    return g.edges


def cmd_select(args) -> int:
    if args.mc_draws < mt.MIN_DRAWS:
        raise invalid(f"--mc-draws must be at least {mt.MIN_DRAWS}")
    spec = _error_rate(args.error, args.alpha)
    try:
        data = gio.read_dataset(args.data)
    except OSError as exc:
        raise invalid(f"cannot read {args.data}: {exc.strerror}") from None
    except (gio.FormatError, StatsError) as exc:
        raise invalid(str(exc)) from None
    order = None
    if args.graph == "dag":
        if not args.order:
            raise invalid("--graph dag requires --order")
    if args.order:
        names = [s.strip() for s in args.order.split(",")]
        if sorted(names) != sorted(data.names) or len(set(names)) != len(names):
            raise invalid("--order must list every CSV variable exactly once")
        order = tuple(data.names.index(s) + 1 for s in names)
    cls_ = GraphClass(args.graph, order if args.graph == "dag" else None)
    prior = PriorKnowledge(_read_prior(args.prior_absent, args.graph, data.p),
                           _read_prior(args.prior_present, args.graph, data.p))
    try:
        res = run_selection(data, cls_, prior, args.method, spec, args.mc_draws, args.seed,
                            reduce=args.reduce, minimal=not args.parents_only, workers=args.workers)
    except SelectionError as exc:
        if exc.stage in ("hypotheses", "config"):
            raise invalid(str(exc)) from None
        raise CliError("numeric", str(exc), EXIT_NUMERIC) from None
    _write(args.out_report, gio.to_json(res))
    if args.out_dot:
        _write(args.out_dot, gio.to_dot(res.graph, res.names))
    logging.getLogger(__name__).info("selected %d edges", len(res.graph))
    return EXIT_OK


def cmd_adjust(args) -> int:
    try:
        labels, p = gio.parse_pvalues(Path(args.pvalues).read_text())
    except OSError as exc:
        raise invalid(f"cannot read {args.pvalues}: {exc.strerror}") from None
    except gio.FormatError as exc:
        raise invalid(str(exc)) from None
    if args.method == "by":
        adj = mt.by_adjusted(p, labels)
    elif args.method in ("maxt", "maxt-step"):
        corr = gio.read_matrix(args.null_corr) if args.null_corr else np.eye(len(p))
        if corr.shape != (len(p), len(p)):
            raise invalid(f"null correlation must be {len(p)}x{len(p)}")
        if args.mc_draws < mt.MIN_DRAWS:
            raise invalid(f"--mc-draws must be at least {mt.MIN_DRAWS}")
        # statistics standardized already: z = |Phi^{-1}(p/2)| with n_eff = 4
        z = norm.isf(p / 2)
        try:
            adj = mt.adjust(args.method, p, labels, z=z, n_eff=4, corr=corr,
                            draws=args.mc_draws, seed=args.seed)
        except mt.AdjustmentError as exc:
            raise CliError("numeric", str(exc), EXIT_NUMERIC) from None
    else:
        adj = mt.adjust(args.method, p, labels)
    _write(args.out, gio.format_adjusted(labels, p, adj.values))
    return EXIT_OK


def _int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise invalid(f"{flag} must be a comma-separated list of integers") from None


def cmd_simulate(args) -> int:
    if args.reps < 1:
        raise invalid("--reps must be at least 1")
    if args.mc_draws < mt.MIN_DRAWS:
        raise invalid(f"--mc-draws must be at least {mt.MIN_DRAWS}")
    methods = tuple(s.strip() for s in args.methods.split(",") if s.strip())
    spec = _error_rate(args.error, args.alpha)
    try:
        if args.fig2:
            Sigma, truth = sim.fig2_model(args.model_seed)
            cls_ = GraphClass("undirected")
        else:
            cls_ = GraphClass(args.graph, tuple(range(1, args.p + 1)) if args.graph == "dag" else None)
            Sigma, truth = sim.generate_model(sim.ModelSpec(args.p, cls_, args.edges, args.lo, args.hi,
                                                            args.model_seed))
        cfg = sim.HarnessConfig(Sigma, truth, cls_, _int_list(args.sizes, "--sizes"), args.reps,
                                methods, spec, args.seed, args.mc_draws)
    except sim.SimulationError as exc:
        raise invalid(str(exc)) from None
    table = sim.estimate_error_rates(cfg, workers=args.workers)
    _write(args.out, table.to_csv())
    return EXIT_OK


COMMANDS = {"select": cmd_select, "adjust": cmd_adjust, "simulate": cmd_simulate}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except CliError as exc:
        msg = " ".join(str(exc).split())
        print(f"error[{exc.kind}]: {msg}", file=sys.stderr)
        return exc.code
    except (StatsError, mt.AdjustmentError, gr.GraphError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error[numeric]: {msg}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
