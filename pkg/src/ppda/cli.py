"""Command-line front end: analyze, transform, dist, simulate, bounds.

Exit codes: 0 success, 2 file/parse/validation problems, 3 numeric
non-convergence.  All commands are deterministic given their flags; JSON
reports round floats to 12 significant digits and spell infinity "inf".
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    NotAlmostSurelyTerminating,
    TailReport,
    classify,
    lower_bound_pmin,
    threshold_for_epsilon,
    upper_bound_azuma,
    upper_bound_poly,
)
from .distribution import (
    DistTable,
    dist_csv,
    exact_distribution_bpa,
    exact_distribution_pda,
    sample_csv,
    simulate,
    tail,
)
from .graph import dependence
from .model import Configuration, ModelError, Pda, Triple, parse_model, serialize, validate
from .moments import expectations, moment_matrix
from .termination import NewtonDivergedError, termination_probs
from .transform import terminating_part, to_bpa

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

DP_CURVE_HORIZON = 8192


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


def _load(path: str) -> Pda:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    try:
        model = parse_model(text)
    except ModelError as exc:
        raise CliError(f"{path}: {exc}") from exc
    problems = validate(model, start=model.start)
    if problems:
        raise CliError(f"{path}: " + "; ".join(problems))
    return model


def _parse_start(model: Pda, flag: str | None) -> Configuration:
    if flag is None:
        if model.start is not None:
            return model.start
        raise CliError("model declares no start; pass --start")
    if model.stateless:
        if flag not in model.symbol_index:
            raise CliError(f"unknown start symbol {flag!r}")
        return Configuration(model.only_state, (flag,))
    state, dot, symbol = flag.partition(".")
    if not dot:
        raise CliError("stateful starts are written state.symbol")
    if state not in model.state_index or symbol not in model.symbol_index:
        raise CliError(f"unknown start pair {flag!r}")
    return Configuration(state, (symbol,))


def _round12(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        if value != value:  # NaN never belongs in a report
            raise CliError("internal error: NaN in report", EXIT_NUMERIC)
        return float(f"{value:.12g}")
    if isinstance(value, dict):
        return {k: _round12(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round12(v) for v in value]
    return value


def _report_json(report: dict) -> str:
    return json.dumps(_round12(report), indent=2, sort_keys=False) + "\n"


def _tail_report_dict(rep: TailReport) -> dict:
    out = {
        "start": rep.start,
        "case": rep.case,
        "gamma_size": rep.gamma_size,
        "p_min": rep.p_min,
        "height": rep.height,
    }
    if rep.case == 1:
        out["bounded_horizon"] = rep.bounded_horizon
    if rep.case == 2:
        out.update(
            e_start=rep.e_start, e_max=rep.e_max, b_constant=rep.b_constant,
            azuma_threshold=rep.azuma_threshold,
        )
    if rep.case == 3:
        out.update(d1=rep.d1, d2=rep.d2, lower_exponent=rep.lower_exponent,
                   n0_caveat=rep.n0_caveat)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_analyze(args) -> int:
    t0 = time.perf_counter()
    model = _load(args.model)
    start = _parse_start(model, args.start)
    t_parse = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        table = termination_probs(model, tol=args.tol)
    except NewtonDivergedError as exc:
        print(f"termination solver: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    t_solve = time.perf_counter() - t0

    report = {
        "tool": {"name": "ppda", "version": __version__},
        "model": {
            "path": args.model,
            "kind": model.kind,
            "states": len(model.states),
            "symbols": len(model.alphabet),
            "rules": len(model.rules),
        },
        "termination": {
            "residual": table.residual,
            "iterations": table.iterations,
            "qualitative_zero": sorted(str(t) for t in table.qualitative_zero),
            "probs": {
                str(t): v for t, v in sorted(table.probs.items(), key=lambda kv: str(kv[0]))
                if v > 0.0
            },
        },
        "start": {"state": start.state, "symbol": start.stack[0]},
    }

    t0 = time.perf_counter()
    try:
        if model.stateless:
            analyzed = model
            report["tails"] = [_tail_report_dict(classify(model, start.stack[0], table))]
            exp = expectations(model, moment_matrix(model))
            report["expectations"] = {
                "values": dict(sorted(exp.values.items())),
                "e_max": exp.e_max,
                "b_constant": exp.b_constant,
                "finite": exp.finite,
            }
        else:
            result = to_bpa(model, table)
            part = terminating_part(result)
            analyzed = part
            report["transform"] = {
                "terminating_symbols": [
                    s for s in result.bpa.alphabet
                    if not result.symbols[s].triple.diverging
                ],
                "diverging_symbols": [
                    s for s in result.bpa.alphabet if result.symbols[s].triple.diverging
                ],
                "rules": len(result.bpa.rules),
            }
            tails = []
            cond = {}
            part_exp = expectations(part) if part.alphabet else None
            for name in part.alphabet:
                trip = result.symbols[name].triple
                cond[str(trip)] = part_exp[name]
                if (trip.state, trip.symbol) == (start.state, start.stack[0]):
                    tails.append(_tail_report_dict(classify(part, name)))
            report["tails"] = tails
            report["expectations"] = {
                "values": cond,
                "e_max": part_exp.e_max if part_exp else 0.0,
                "b_constant": part_exp.b_constant if part_exp else None,
                "finite": part_exp.finite if part_exp else True,
            }
        if analyzed.alphabet:
            deps = dependence(analyzed)
            report["dependence"] = {
                "sccs": [list(comp) for comp in deps.sccs],
                "height": deps.height,
                "scc_dag_edges": sorted(list(e) for e in deps.scc_dag_edges),
            }
    except NotAlmostSurelyTerminating as exc:
        raise CliError(str(exc)) from exc
    t_bounds = time.perf_counter() - t0

    report["curves"] = []
    report["timings"] = {"parse_s": t_parse, "solve_s": t_solve, "bounds_s": t_bounds}

    text = _report_json(report)
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_transform(args) -> int:
    model = _load(args.model)
    if model.stateless:
        raise CliError("model is already stateless")
    try:
        table = termination_probs(model)
    except NewtonDivergedError as exc:
        print(f"termination solver: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    result = to_bpa(model, table)
    text = serialize(result.bpa)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_dist(args) -> int:
    model = _load(args.model)
    start = _parse_start(model, args.start)
    if args.nmax < 1:
        raise CliError("--nmax must be at least 1")
    if model.stateless:
        table = exact_distribution_bpa(model, start.stack[0], args.nmax)
    elif args.target in (None, "none"):
        # unconditioned: sum the per-target masses; diverging runs stay in
        # the tail, so the table normalizes against full mass 1
        masses = [
            exact_distribution_pda(model, Triple(start.state, start.stack[0], q),
                                   args.nmax).mass
            for q in model.states
        ]
        table = DistTable(subject=f"{start.state}.{start.stack[0]}",
                          mass=np.sum(masses, axis=0), n_max=args.nmax, norm=1.0)
    else:
        if args.target not in model.state_index:
            raise CliError(f"unknown target state {args.target!r}")
        triple = Triple(start.state, start.stack[0], args.target)
        try:
            solved = termination_probs(model)
        except NewtonDivergedError as exc:
            print(f"termination solver: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        table = exact_distribution_pda(model, triple, args.nmax, norm=solved.probs[triple])
    text = dist_csv(table)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = _load(args.model)
    start = _parse_start(model, args.start)
    stats = simulate(model, start, samples=args.samples, step_cap=args.cap, seed=args.seed)
    text = sample_csv(stats)
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    per_state = {q: sum(c.values()) for q, c in sorted(stats.outcomes.items())}
    print(
        f"samples={stats.samples} terminated={stats.terminated} censored={stats.censored} "
        f"by_state={per_state} seed={stats.seed} cap={stats.step_cap}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_bounds(args) -> int:
    model = _load(args.model)
    start = _parse_start(model, args.start)
    if not model.stateless:
        raise CliError("bound curves are defined on stateless models; transform first")
    try:
        grid = sorted({int(tok) for tok in args.grid.split(",") if tok.strip()})
    except ValueError as exc:
        raise CliError(f"bad --grid: {exc}") from exc
    if not grid or grid[0] < 1:
        raise CliError("--grid needs positive integers")
    try:
        report = classify(model, start.stack[0])
    except NotAlmostSurelyTerminating as exc:
        raise CliError(str(exc)) from exc
    except NewtonDivergedError as exc:
        print(f"termination solver: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    exact = None
    if grid[-1] <= DP_CURVE_HORIZON:
        exact = exact_distribution_bpa(model, start.stack[0], grid[-1])

    lines = ["n,lower,upper,exact"]
    for n in grid:
        if report.case == 1:
            low = 0.0
            up = 1.0 if n < report.bounded_horizon else 0.0
        elif report.case == 2:
            low, up = lower_bound_pmin(report, n), upper_bound_azuma(report, n)
        else:
            low, up = lower_bound_pmin(report, n), upper_bound_poly(report, n)
        cells = [str(n), repr(low), repr(up)]
        cells.append(repr(tail(exact, n)) if exact is not None else "")
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.csv:
        Path(args.csv).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)

    threshold = threshold_for_epsilon(report, args.eps)
    caveat = " (valid beyond an unknown n0)" if threshold.n0_caveat else ""
    print(f"case={report.case} threshold(eps={args.eps})={threshold.n}{caveat}",
          file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppda", description="termination-time analysis for probabilistic pushdown automata"
    )
    parser.add_argument("--version", action="version", version=f"ppda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="full pipeline: probabilities, transform, tail regimes")
    p.add_argument("model")
    p.add_argument("--start", help="state.symbol for stateful models, symbol otherwise")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--json", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("transform", help="emit the stateless model over triple symbols")
    p.add_argument("model")
    p.add_argument("--out", help="output path (stdout by default)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("dist", help="exact termination-time distribution table")
    p.add_argument("model")
    p.add_argument("--start")
    p.add_argument("--target",
                   help="terminal control state for stateful models, or 'none' "
                        "for the unconditioned law")
    p.add_argument("--nmax", type=int, default=64)
    p.add_argument("--csv", help="output path (stdout by default)")
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("simulate", help="seeded Monte Carlo runs")
    p.add_argument("model")
    p.add_argument("--start")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=10**6)
    p.add_argument("--csv", help="output path (stdout by default)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="tail-bound curves and the eps threshold")
    p.add_argument("model")
    p.add_argument("--start")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--grid", default="16,64,256,1024")
    p.add_argument("--csv", help="output path (stdout by default)")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NewtonDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
