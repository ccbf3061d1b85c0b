"""Tail-regime classification and evaluable bound curves.

An almost surely terminating stateless model falls in exactly one regime:

1. acyclic dependence: all mass below 2^|alphabet| steps;
2. finite expectation: exponential tail, sandwiched between p_min^n and
   exp((2 E[start] - n) / (2 B^2)) for n >= 2 E[start];
3. infinite expectation: polynomial tail, at most d1 / n^d2 beyond some
   unknown threshold n0, and at least c / sqrt(n) for an unknown c > 0.

The constants come straight from the structure: d1 = 18 h |alphabet| /
p_min^(3 |alphabet|), d2 = 1 / (2^(h+1) - 2) with h the dependence-DAG
height.  The case-3 lower constant has no closed form here; only the 1/2
exponent is reported, with estimation left to callers holding exact tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .graph import dependence, is_bounded_case, p_min, restrict_to_reachable
from .model import Pda
from .moments import expectations, moment_matrix
from .termination import (
    TerminationTable,
    is_almost_surely_terminating,
    termination_probs,
)

__all__ = [
    "TailReport",
    "ThresholdResult",
    "NotAlmostSurelyTerminating",
    "classify",
    "lower_bound_pmin",
    "upper_bound_azuma",
    "upper_bound_azuma_loose",
    "upper_bound_poly",
    "threshold_for_epsilon",
    "estimate_lower_constant",
    "g_function",
    "bound_curve",
]

CASE3_LOWER_EXPONENT = 0.5


class NotAlmostSurelyTerminating(RuntimeError):
    """The classification needs certain termination from the start symbol."""


@dataclass(frozen=True)
class TailReport:
    """Per-start regime and every constant the bound curves need."""

    start: str
    case: int
    gamma_size: int
    p_min: float
    height: int
    e_start: float | None = None
    e_max: float | None = None
    b_constant: float | None = None
    d1: float | None = None
    d2: float | None = None
    lower_exponent: float | None = None
    n0_caveat: bool = False

    @property
    def azuma_threshold(self) -> float | None:
        return None if self.e_start is None else 2.0 * self.e_start

    @property
    def bounded_horizon(self) -> int:
        return 2 ** self.gamma_size


@dataclass(frozen=True)
class ThresholdResult:
    """Step count after which at most eps of the terminating mass remains."""

    n: int
    n0_caveat: bool


def classify(
    model: Pda,
    start: str,
    table: TerminationTable | None = None,
    eps: float = 1e-9,
) -> TailReport:
    """Assign the tail regime for runs from ``start``.

    The model is restricted to the symbols the start depends on first;
    raises NotAlmostSurelyTerminating when the restriction can diverge.
    """
    restricted = restrict_to_reachable(model, start)
    if table is None:
        table = termination_probs(restricted)
    if not is_almost_surely_terminating(restricted, table, eps=eps):
        raise NotAlmostSurelyTerminating(
            f"symbols reachable from {start} may diverge; transform or condition first"
        )
    deps = dependence(restricted)
    pmin = p_min(restricted)
    gamma = len(restricted.alphabet)

    if is_bounded_case(restricted, start):
        return TailReport(start=start, case=1, gamma_size=gamma, p_min=pmin,
                          height=deps.height)

    mm = moment_matrix(restricted, deps)
    exp = expectations(restricted, mm)
    if exp.finite:
        return TailReport(
            start=start, case=2, gamma_size=gamma, p_min=pmin, height=deps.height,
            e_start=exp[start], e_max=exp.e_max, b_constant=exp.b_constant,
        )
    h = deps.height
    return TailReport(
        start=start, case=3, gamma_size=gamma, p_min=pmin, height=h,
        d1=18.0 * h * gamma / pmin ** (3 * gamma),
        d2=1.0 / (2 ** (h + 1) - 2),
        lower_exponent=CASE3_LOWER_EXPONENT,
        n0_caveat=True,
    )


def lower_bound_pmin(report: TailReport, n: int) -> float:
    """p_min^n <= P(T >= n), valid whenever arbitrarily long runs exist."""
    if report.case == 1:
        raise ValueError("bounded models admit no positive tail lower bound")
    return report.p_min ** n


def upper_bound_azuma(report: TailReport, n: int) -> float:
    """exp((2E - n) / (2 B^2)) for n past 2 E[start]; 1.0 below the threshold."""
    if report.case != 2:
        raise ValueError("exponential upper bound needs finite expectations")
    if n < report.azuma_threshold:
        return 1.0
    return min(1.0, math.exp((2.0 * report.e_start - n) / (2.0 * report.b_constant ** 2)))


def upper_bound_azuma_loose(report: TailReport, n: int) -> float:
    """The weaker exp(1 - n / (8 E_max^2)) form of the same bound."""
    if report.case != 2:
        raise ValueError("exponential upper bound needs finite expectations")
    if n < report.azuma_threshold:
        return 1.0
    return min(1.0, math.exp(1.0 - n / (8.0 * report.e_max ** 2)))


def upper_bound_poly(report: TailReport, n: int) -> float:
    """d1 / n^d2, valid only beyond an unknown n0 (see report.n0_caveat)."""
    if report.case != 3:
        raise ValueError("polynomial upper bound needs infinite expectations")
    if n < 1:
        raise ValueError("n must be positive")
    return min(1.0, report.d1 / n ** report.d2)


def _ceil_with_slack(x: float) -> int:
    # Grid boundaries land exactly on integers for round inputs; shave the
    # relative float noise so those cases do not round one step up.
    return max(1, math.ceil(x * (1.0 - 1e-12) - 1e-9))


def threshold_for_epsilon(report: TailReport, eps: float) -> ThresholdResult:
    """Least n with tail bound at most eps.

    Case 1 returns the structural horizon 2^|alphabet|; case 3 results are
    flagged: the polynomial bound only holds beyond an unknown n0.
    """
    if not (0.0 < eps < 1.0):
        if report.case == 1 and eps >= 1.0:
            return ThresholdResult(report.bounded_horizon, False)
        raise ValueError("eps must lie in (0, 1)")
    if report.case == 1:
        return ThresholdResult(report.bounded_horizon, False)
    if report.case == 2:
        n = _ceil_with_slack(
            2.0 * report.e_start + 2.0 * report.b_constant ** 2 * math.log(1.0 / eps)
        )
        return ThresholdResult(max(n, _ceil_with_slack(2.0 * report.e_start)), False)
    return ThresholdResult(_ceil_with_slack((report.d1 / eps) ** (1.0 / report.d2)), True)


def bound_curve(report: TailReport, kind: str):
    """Monotone evaluator n -> [0, 1] for CSV export; kinds mirror the bounds."""
    if kind == "lower-pmin":
        return lambda n: lower_bound_pmin(report, n)
    if kind == "upper-azuma":
        return lambda n: upper_bound_azuma(report, n)
    if kind == "upper-poly":
        return lambda n: upper_bound_poly(report, n)
    raise ValueError(f"unknown curve kind {kind!r}")


def estimate_lower_constant(model: Pda, start: str, grid=(64, 256, 1024, 4096)) -> float:
    """Empirical estimate of the case-3 lower-bound constant.

    The true constant in c / sqrt(n) has no closed form; this samples the
    exact tail on a grid and returns min over n of tail(n) * sqrt(n).  An
    estimate only: the asymptotic constant may sit below it.
    """
    from .distribution import exact_distribution_bpa, tail as dist_tail

    table = exact_distribution_bpa(model, start, max(grid))
    return min(dist_tail(table, n) * math.sqrt(n) for n in grid)


def g_function(
    model: Pda, u: dict[str, float], symbol: str, theta: float
) -> tuple[float, float, float]:
    """One-step weight-change transform g, g', g'' at theta for one symbol.

    g(theta) = sum_rules p * exp(-theta * (pushed weight - weight(symbol)));
    its curvature at zero is what forces polynomial tails on progressive
    critical models.
    """
    g = g1 = g2 = 0.0
    for rule in model.rules_for(model.only_state, symbol):
        p = float(rule.prob)
        drop = u[symbol] - sum(u[sym] for sym in rule.rhs_word)
        weight = math.exp(theta * drop)
        g += p * weight
        g1 += p * drop * weight
        g2 += p * drop * drop * weight
    return g, g1, g2
