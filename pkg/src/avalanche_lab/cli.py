"""Command-line frontend: deterministic batch runs, CSV/JSON emission, and
the bundled verification suite.

Every output file opens with provenance comments (tool version, the
configuration that produced it, the master seed).  Worker count and output
path are excluded from the echo so reruns at any parallelism level yield
byte-identical files.

Exit codes: 0 success, 1 usage error, 2 assertion or verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .acceptance import report_json, run_all
from .avalanche import run_classic_bs
from .coupling import CouplingInvariantError, estimate_g
from .graph import Cycle, GraphKind, InvalidVertexError, LatticeZd, RegularTree, RootedTreeStar
from .rng import TrialStreams
from .stats import (
    STATUS_BY_CODE,
    sample_avalanche,
    sample_branching,
    sample_coupled,
    sample_percolation,
    sweep,
    uniformity_test,
)


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; this tool reserves 2 for
    # verification failures and uses 1 for usage problems
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_graph_spec(spec: str) -> GraphKind:
    """Parse 'zd:<d>' | 'tree:<degree>' | 'cycle:<n>' | 'treestar:<n>'."""
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise UsageError(f"malformed graph spec {spec!r}")
    try:
        value = int(arg)
    except ValueError:
        raise UsageError(f"graph parameter must be an integer: {spec!r}") from None
    try:
        if kind == "zd":
            return LatticeZd(value)
        if kind == "tree":
            return RegularTree(value)
        if kind == "cycle":
            return Cycle(value)
        if kind == "treestar":
            return RootedTreeStar(value)
    except ValueError as exc:
        raise UsageError(f"bad graph spec {spec!r}: {exc}") from None
    raise UsageError(f"unknown graph kind {kind!r}")


def _check_p(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise UsageError(f"threshold p must lie in (0, 1), got {p}")
    return p


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise UsageError(f"cannot write {path!r}: {exc}") from None


def _config_echo(args: argparse.Namespace) -> dict:
    # jobs and output location must not influence file contents
    skip = {"func", "jobs", "out", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


def _write_csv(args, header: list[str], rows, out_path: Optional[str]) -> None:
    import csv

    fh, close = _open_out(out_path)
    try:
        fh.write(f"# avalanche-lab {__version__}\n")
        fh.write(f"# config: {json.dumps(_config_echo(args), sort_keys=True)}\n")
        fh.write(f"# master_seed: {args.seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if close:
            fh.close()


def _seed_default() -> int:
    env = os.environ.get("AVALANCHE_LAB_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"AVALANCHE_LAB_SEED must be an integer, got {env!r}") from None
    return 1


# -- subcommand implementations ---------------------------------------------


def _cmd_avalanche(args) -> int:
    graph = parse_graph_spec(args.graph)
    _check_p(args.p)
    s = sample_avalanche(
        graph, args.p, args.trials, args.range_cap, args.step_cap,
        args.seed, engine=args.engine, jobs=args.jobs, trimmed=args.trimmed,
    )
    rows = (
        (
            i,
            TrialStreams(args.seed, i).engine_key,
            args.graph,
            args.p,
            args.engine,
            STATUS_BY_CODE[s["status"][i]],
            int(s["range"][i]),
            int(s["steps"][i]),
        )
        for i in range(args.trials)
    )
    _write_csv(args, ["run_id", "seed", "graph", "p", "engine", "status", "range", "steps"],
               rows, args.out)
    return 0


def _cmd_classic(args) -> int:
    if args.measure < 1 or args.burn_in < 0:
        raise UsageError("burn-in must be >= 0 and measure >= 1")
    gen = TrialStreams(args.seed, 0).gen
    masses, edges = run_classic_bs(args.n, args.burn_in, args.measure, gen, bins=args.bins)
    rows = ((edges[i], edges[i + 1], masses[i]) for i in range(len(masses)))
    _write_csv(args, ["bin_lo", "bin_hi", "mass"], rows, args.out)
    return 0


def _cmd_percolation(args) -> int:
    graph = parse_graph_spec(args.graph)
    _check_p(args.p)
    s = sample_percolation(
        graph, args.p, args.trials, args.range_cap, args.seed, jobs=args.jobs,
        fast=None if args.fast == "auto" else args.fast == "on",
    )
    rows = (
        (
            i,
            TrialStreams(args.seed, i).engine_key,
            args.graph,
            args.p,
            STATUS_BY_CODE[s["status"][i]],
            int(s["cluster_size"][i]),
            int(s["range"][i]),
            bool(s["origin_neighbors_closed"][i]),
        )
        for i in range(args.trials)
    )
    _write_csv(
        args,
        ["run_id", "seed", "graph", "p", "status", "cluster_size", "range",
         "both_neighbors_closed"],
        rows, args.out,
    )
    return 0


def _cmd_branching(args) -> int:
    if not 0.0 <= args.p <= 1.0:
        raise UsageError("offspring probability must lie in [0, 1]")
    s = sample_branching(args.n, args.p, args.trials, args.cap, args.seed, jobs=args.jobs)
    rows = (
        (
            i,
            TrialStreams(args.seed, i).engine_key,
            args.n,
            args.p,
            "cap_hit" if s["cap_hit"][i] else "died",
            int(s["total_progeny"][i]),
            int(s["generations"][i]),
        )
        for i in range(args.trials)
    )
    _write_csv(args, ["run_id", "seed", "n", "p", "status", "total_progeny", "generations"],
               rows, args.out)
    return 0


def _cmd_couple(args) -> int:
    graph = parse_graph_spec(args.graph)
    _check_p(args.p)
    s = sample_coupled(
        graph, args.p, args.trials, args.range_cap, args.step_cap, args.seed,
        jobs=args.jobs, assertions_enabled=not args.no_assert,
    )
    rows = (
        (
            i,
            TrialStreams(args.seed, i).engine_key,
            args.graph,
            args.p,
            STATUS_BY_CODE[s["av_status"][i]],
            int(s["av_range"][i]),
            int(s["av_steps"][i]),
            ("closed_out", "range_cap", "step_cap")[s["perc_status"][i]],
            int(s["cluster_size"][i]),
            int(s["perc_range"][i]),
            bool(s["both_neighbors_closed"][i]),
        )
        for i in range(args.trials)
    )
    _write_csv(
        args,
        ["run_id", "seed", "graph", "p", "av_status", "av_range", "av_steps",
         "perc_status", "cluster_size", "perc_range", "both_neighbors_closed"],
        rows, args.out,
    )
    return 0


def _parse_grid(args) -> list[float]:
    if args.p_grid:
        try:
            return [float(tok) for tok in args.p_grid.split(",") if tok.strip()]
        except ValueError:
            raise UsageError(f"bad grid {args.p_grid!r}") from None
    if args.p_min is None or args.p_max is None or args.p_step is None:
        raise UsageError("provide --p-grid or all of --p-min/--p-max/--p-step")
    grid = list(np.arange(args.p_min, args.p_max + 1e-12, args.p_step))
    return [round(float(p), 12) for p in grid]


def _cmd_sweep(args) -> int:
    grid = _parse_grid(args)
    if args.process == "branching":
        if args.n is None:
            raise UsageError("--n is required for branching sweeps")
        graph = args.n
    else:
        if args.graph is None:
            raise UsageError("--graph is required for this process")
        graph = parse_graph_spec(args.graph)
    try:
        points, bracket = sweep(
            args.process, graph, grid, args.trials, args.range_cap, args.step_cap,
            args.seed, engine=args.engine, jobs=args.jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [
        (pt.p, pt.trials, pt.survived, pt.ci_low, pt.ci_high, pt.mean_range, pt.mean_steps)
        for pt in points
    ]
    _write_csv(args, ["p", "trials", "survived", "ci_low", "ci_high", "mean_range",
                      "mean_steps"], rows, args.out)
    print(f"bracket: p_low={bracket[0]} p_high={bracket[1]}")
    return 0


def _cmd_g_check(args) -> int:
    _check_p(args.p)
    if not 0.0 <= args.x <= args.p:
        raise UsageError("--x must lie in [0, p]")
    est = estimate_g(args.x, args.p, args.trials, master_seed=args.seed, jobs=args.jobs)
    verdict = "pass" if est.within_ci else "fail"
    print(f"estimate  {est.frequency:.6f}")
    print(f"ci95      [{est.ci_low:.6f}, {est.ci_high:.6f}]")
    print(f"target    {est.target:.6f}  (closed form (1-p)^2/(1-x)^2)")
    print(f"verdict   {verdict}")
    return 0 if est.within_ci else 2


def _cmd_uniformity(args) -> int:
    try:
        bounds = [float(tok) for tok in args.bounds.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"bad bounds {args.bounds!r}") from None
    if len(bounds) < 2:
        raise UsageError("need at least two bounds")
    try:
        report = uniformity_test(
            args.trials, bounds, rng=args.seed,
            significance=args.significance, resample=not args.no_resample,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fh, close = _open_out(args.out)
    try:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    finally:
        if close:
            fh.close()
    return 0 if report.passed else 2


def _cmd_verify(args) -> int:
    report = run_all(args.seed, jobs=args.jobs)
    text = report_json(report)
    fh, close = _open_out(args.out)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    for crit in report["criteria"]:
        mark = "PASS" if crit["passed"] else "FAIL"
        print(f"[{mark}] criterion {crit['id']}: {crit['name']}", file=sys.stderr)
    return 0 if report["all_pass"] else 2


# -- parser wiring -----------------------------------------------------------


def _add_common(sp, trials_default=10_000):
    sp.add_argument("--seed", type=int, default=None,
                    help="master seed (default: AVALANCHE_LAB_SEED or 1)")
    sp.add_argument("--jobs", type=int, default=1, help="worker threads")
    sp.add_argument("--out", default=None, help="output path (default: stdout)")
    sp.add_argument("--trials", type=int, default=trials_default)


def build_parser() -> _Parser:
    parser = _Parser(prog="avalanche-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"avalanche-lab {__version__}")
    parser.add_argument("--config", default=None,
                        help="JSON file of defaults; explicit flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("avalanche", help="batch of threshold avalanches")
    _add_common(sp)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--range-cap", type=int, default=10_000)
    sp.add_argument("--step-cap", type=int, default=1_000_000)
    sp.add_argument("--engine", choices=["classic", "forgetful"], default="classic")
    sp.add_argument("--trimmed", action="store_true",
                    help="evict bounds above p in the forgetful engine")
    sp.set_defaults(func=_cmd_avalanche)

    sp = sub.add_parser("classic", help="original circle dynamics; fitness histogram")
    _add_common(sp)
    sp.add_argument("--n", type=int, required=True, help="number of species on the circle")
    sp.add_argument("--burn-in", type=int, default=100_000)
    sp.add_argument("--measure", type=int, default=100_000)
    sp.add_argument("--bins", type=int, default=100)
    sp.set_defaults(func=_cmd_classic)

    sp = sub.add_parser("percolation", help="site-percolation cluster growth")
    _add_common(sp)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--range-cap", type=int, default=10_000)
    sp.add_argument("--fast", choices=["auto", "on", "off"], default="auto",
                    help="generation-batched growth on trees")
    sp.set_defaults(func=_cmd_percolation)

    sp = sub.add_parser("branching", help="Galton-Watson total progeny")
    _add_common(sp)
    sp.add_argument("--n", type=int, required=True, help="offspring binomial trials")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--cap", type=int, default=100_000)
    sp.set_defaults(func=_cmd_branching)

    sp = sub.add_parser("couple", help="joint avalanche / coupled-cluster runs")
    _add_common(sp)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--range-cap", type=int, default=10_000)
    sp.add_argument("--step-cap", type=int, default=1_000_000)
    sp.add_argument("--no-assert", action="store_true",
                    help="disable the coupling invariant assertions")
    sp.set_defaults(func=_cmd_couple)

    sp = sub.add_parser("sweep", help="survival curve over a threshold grid")
    _add_common(sp)
    sp.add_argument("--process", choices=["avalanche", "percolation", "branching"],
                    default="avalanche")
    sp.add_argument("--graph", default=None)
    sp.add_argument("--n", type=int, default=None, help="offspring trials (branching)")
    sp.add_argument("--p-grid", default=None, help="comma-separated thresholds")
    sp.add_argument("--p-min", type=float, default=None)
    sp.add_argument("--p-max", type=float, default=None)
    sp.add_argument("--p-step", type=float, default=None)
    sp.add_argument("--range-cap", type=int, default=10_000)
    sp.add_argument("--step-cap", type=int, default=1_000_000)
    sp.add_argument("--engine", choices=["classic", "forgetful"], default="classic")
    sp.set_defaults(func=_cmd_sweep)

    sp = sub.add_parser("g-check", help="both-neighbours-closed probability on Z")
    _add_common(sp, trials_default=100_000)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--x", type=float, default=0.0)
    sp.set_defaults(func=_cmd_g_check)

    sp = sub.add_parser("uniformity", help="minimum-conditioned uniform reconstruction test")
    _add_common(sp, trials_default=100_000)
    sp.add_argument("--bounds", default="0.2,0.3,0.6")
    sp.add_argument("--significance", type=float, default=0.01)
    sp.add_argument("--no-resample", action="store_true",
                    help="negative control: emit conditioning levels, no redraw")
    sp.set_defaults(func=_cmd_uniformity)

    sp = sub.add_parser("verify", help="run the bundled acceptance suite")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    sp.set_defaults(func=_cmd_verify)

    return parser


def _apply_config(parser: _Parser, argv: list[str]) -> argparse.Namespace:
    probe = _Parser(add_help=False)
    probe.add_argument("--config", default=None)
    pre, _ = probe.parse_known_args(argv)
    if pre.config:
        try:
            with open(pre.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {pre.config!r}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**{k: v for k, v in cfg.items()
                                   if any(a.dest == k for a in sp._actions)})
    return parser.parse_args(argv)


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if getattr(args, "seed", None) is None:
            args.seed = _seed_default()
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be >= 1")
        if getattr(args, "trials", 1) < 1:
            raise UsageError("--trials must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvalidVertexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CouplingInvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
