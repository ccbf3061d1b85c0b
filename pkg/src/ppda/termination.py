"""Least-fixed-point termination probabilities.

For every triple pXq the value [pXq] is the least nonnegative solution of

    V(pXq) = sum_{pX -> q eps} x
           + sum_{pX -> rY}    x * V(rYq)
           + sum_{pX -> rYZ}   x * sum_s V(rYs) * V(sZq)

solved here with undamped Newton iteration from the zero vector after a
boolean preprocessing pass pins the structurally-zero variables.  The
divergence mass [pX^] is reported as the clamped complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import dependence, restrict_to_reachable
from .model import Pda, Triple

__all__ = [
    "TerminationTable",
    "NewtonDivergedError",
    "termination_probs",
    "qualitative_zero",
    "may_terminate",
    "is_almost_surely_terminating",
]

DEFAULT_TOL = 1e-12
MAX_ITERATIONS = 10_000


class NewtonDivergedError(RuntimeError):
    """Newton iteration failed to reach the tolerance within the cap."""

    def __init__(self, table: "TerminationTable"):
        self.table = table
        super().__init__(
            f"no convergence after {table.iterations} iterations, residual {table.residual:.3e}"
        )


@dataclass(frozen=True)
class TerminationTable:
    """Solved termination probabilities plus convergence metadata."""

    probs: dict[Triple, float]
    residual: float
    iterations: int
    qualitative_zero: frozenset[Triple]
    tol: float

    @property
    def converged(self) -> bool:
        return self.residual <= self.tol

    def prob(self, state: str, symbol: str, target: str) -> float:
        return self.probs.get(Triple(state, symbol, target), 0.0)

    def diverge(self, state: str, symbol: str) -> float:
        return self.probs[Triple(state, symbol, None)]

    def termination(self, state: str, symbol: str) -> float:
        return 1.0 - self.diverge(state, symbol)

    def symbol_prob(self, model: Pda, symbol: str) -> float:
        """[X] for stateless models."""
        p = model.only_state
        return self.prob(p, symbol, p)


def may_terminate(model: Pda) -> frozenset[Triple]:
    """Triples pXq with a positive-probability path from pX to q-empty.

    Boolean least fixed point of the same first-step system over {0, 1};
    the complement of this set is exactly the set of zero variables.
    """
    can: set[tuple[str, str, str]] = set()
    changed = True
    while changed:
        changed = False
        for rule in model.rules:
            p, X = rule.lhs_state, rule.lhs_symbol
            reachable = {rule.rhs_state}
            for sym in rule.rhs_word:
                reachable = {
                    q for s in reachable for q in model.states if (s, sym, q) in can
                }
            for q in reachable:
                if (p, X, q) not in can:
                    can.add((p, X, q))
                    changed = True
    return frozenset(Triple(*t) for t in can)


def qualitative_zero(model: Pda) -> frozenset[Triple]:
    """Triples pXq whose termination probability is exactly zero."""
    can = may_terminate(model)
    return frozenset(
        Triple(p, X, q)
        for p in model.states
        for X in model.alphabet
        for q in model.states
        if Triple(p, X, q) not in can
    )


def termination_probs(
    model: Pda,
    tol: float = DEFAULT_TOL,
    strict: bool = True,
    trace: list | None = None,
) -> TerminationTable:
    """Solve for all [pXq] and [pX^] values.

    Newton steps from the zero vector are componentwise nondecreasing for
    this system; iterates are clamped into [0, 1] against round-off.  On a
    singular Jacobian a plain fixed-point step substitutes for that round.
    A caller-supplied ``trace`` list receives a copy of every iterate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    positive = sorted(
        (t for t in may_terminate(model) if not t.diverging),
        key=lambda t: (model.state_index[t.state], model.symbol_index[t.symbol],
                       model.state_index[t.target]),
    )
    zeros = qualitative_zero(model)
    idx = {t: i for i, t in enumerate(positive)}
    n = len(positive)

    # Term lists of the polynomial map F: per equation, (coef, variable
    # product).  A rule pX -> r Y1..Ym contributes one monomial per segment
    # chain r = s0, s1, .., sm = q with every factor structurally nonzero.
    const = np.zeros(n)
    terms: list[list[tuple[float, tuple[int, ...]]]] = [[] for _ in range(n)]
    for rule in model.rules:
        p, X = rule.lhs_state, rule.lhs_symbol
        x = float(rule.prob)
        chains: list[tuple[str, tuple[int, ...]]] = [(rule.rhs_state, ())]
        for sym in rule.rhs_word:
            chains = [
                (q, factors + (idx[Triple(s, sym, q)],))
                for s, factors in chains
                for q in model.states
                if Triple(s, sym, q) in idx
            ]
        for q, factors in chains:
            t = Triple(p, X, q)
            if t not in idx:
                continue
            if factors:
                terms[idx[t]].append((x, factors))
            else:
                const[idx[t]] += x

    def apply_f(v: np.ndarray) -> np.ndarray:
        out = const.copy()
        for i in range(n):
            acc = 0.0
            for x, factors in terms[i]:
                prod = x
                for a in factors:
                    prod *= v[a]
                acc += prod
            out[i] += acc
        return out

    def jacobian(v: np.ndarray) -> np.ndarray:
        jac = np.zeros((n, n))
        for i in range(n):
            for x, factors in terms[i]:
                for k, a in enumerate(factors):
                    prod = x
                    for j, b in enumerate(factors):
                        if j != k:
                            prod *= v[b]
                    jac[i, a] += prod
        return jac

    def newton_step(v: np.ndarray, fv: np.ndarray) -> np.ndarray:
        try:
            delta = np.linalg.solve(np.eye(n) - jacobian(v), fv - v)
        except np.linalg.LinAlgError:
            delta = fv - v
        return np.clip(v + delta, 0.0, 1.0)

    # Stop on step size, not residual: at critical fixed points Newton
    # degrades to halving the error, where the residual is quadratically
    # smaller than the remaining value error.
    v = np.zeros(n)
    iterations = 0
    if trace is not None:
        trace.append(v.copy())
    while n and iterations < MAX_ITERATIONS:
        fv = apply_f(v)
        if np.max(np.abs(fv - v)) == 0.0:
            break
        new_v = newton_step(v, fv)
        step = float(np.max(np.abs(new_v - v)))
        v = new_v
        iterations += 1
        if trace is not None:
            trace.append(v.copy())
        if step <= tol:
            break
    residual = float(np.max(np.abs(apply_f(v) - v))) if n else 0.0

    probs: dict[Triple, float] = {}
    for p in model.states:
        for X in model.alphabet:
            total = 0.0
            for q in model.states:
                t = Triple(p, X, q)
                val = v[idx[t]] if t in idx else 0.0
                probs[t] = float(val)
                total += float(val)
            probs[Triple(p, X, None)] = min(1.0, max(0.0, 1.0 - total))

    if model.stateless and n:
        _snap_certain_termination(model, probs)
        v = np.array([probs[t] for t in positive])
        residual = float(np.max(np.abs(apply_f(v) - v)))

    table = TerminationTable(
        probs=probs,
        residual=residual,
        iterations=iterations,
        qualitative_zero=zeros,
        tol=tol,
    )
    if strict and not table.converged:
        raise NewtonDivergedError(table)
    return table


def _snap_certain_termination(model: Pda, probs: dict[Triple, float]):
    """Pin [X] = 1 where termination with probability one is certain.

    Newton in doubles cannot push critical fixed points past an error of
    about sqrt(machine epsilon).  For stateless models certainty is
    structural: every reachable symbol can reach the empty stack and no
    reachable SCC block of the moment matrix is supercritical.
    """
    from .moments import moment_matrix

    info = dependence(model)
    mm = moment_matrix(model, info)
    p = model.only_state
    can_empty = {t.symbol for t in may_terminate(model) if not t.diverging}

    certain: list[bool] = []
    for i, comp in enumerate(info.sccs):
        good = all(sym in can_empty for sym in comp)
        good = good and mm.block_radii[i] <= 1.0 + 1e-9
        good = good and all(certain[j] for (k, j) in info.scc_dag_edges if k == i)
        certain.append(good)

    for sym in model.alphabet:
        if certain[info.scc_of[sym]]:
            probs[Triple(p, sym, p)] = 1.0
            probs[Triple(p, sym, None)] = 0.0


def is_almost_surely_terminating(
    model: Pda,
    table: TerminationTable,
    eps: float = 1e-9,
    start: str | None = None,
) -> bool:
    """True iff every (reachable) symbol of a stateless model terminates a.s."""
    symbols = model.alphabet
    if start is not None:
        symbols = restrict_to_reachable(model, start).alphabet
    return all(table.symbol_prob(model, sym) >= 1.0 - eps for sym in symbols)
