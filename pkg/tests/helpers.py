"""Shared test utilities: an independent exact oracle and model strategies.

The oracle unfolds the induced Markov chain one step at a time with exact
rational weights, merging identical configurations.  It shares no code with
the convolution dynamic program it is used to check.
"""

from collections import defaultdict
from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from ppda import Configuration, Pda, make_bpa, step_distribution
from ppda.model import Rule


def brute_mass(model: Pda, cfg: Configuration, n_max: int):
    """Exact termination mass per step, split by terminal control state.

    Returns dict state -> list of Fractions indexed by step (0..n_max).
    """
    out = {q: [Fraction(0)] * (n_max + 1) for q in model.states}
    frontier = {cfg: Fraction(1)}
    for step in range(1, n_max + 1):
        nxt = defaultdict(Fraction)
        for c, weight in frontier.items():
            for succ, p in step_distribution(model, c):
                nxt[succ] += weight * p
        frontier = {}
        for c, weight in nxt.items():
            if c.empty:
                out[c.state][step] += weight
            else:
                frontier[c] = weight
    return out


def brute_total_mass(model: Pda, cfg: Configuration, n_max: int):
    """Exact termination mass per step over all terminal states."""
    by_state = brute_mass(model, cfg, n_max)
    return [sum(col) for col in zip(*by_state.values())]


def scc_restriction(model: Pda, members) -> Pda:
    """Sub-model on one SCC: outside symbols are erased from all words.

    Mirrors the high/low split of the layered analysis; the result is
    strongly connected and terminates at least as surely as the original.
    """
    keep = set(members)
    alphabet = tuple(s for s in model.alphabet if s in keep)
    rules = tuple(
        Rule(r.lhs_state, r.lhs_symbol, r.rhs_state,
             tuple(y for y in r.rhs_word if y in keep), r.prob)
        for r in model.rules
        if r.lhs_symbol in keep
    )
    return Pda(model.states, alphabet, rules, kind=model.kind)


def suffix_tail(table, n: int) -> float:
    """P(T >= n) as a horizon-truncated suffix sum: a safe lower estimate.

    Avoids the catastrophic cancellation of norm - prefix when the true
    tail sits far below float resolution.
    """
    return float(np.sum(table.mass[n:]))


def table_residual(table) -> float:
    return max(table.norm - float(np.sum(table.mass)), 0.0)


# ---------------------------------------------------------------------------
# hypothesis strategies

SYMS = ("S0", "S1", "S2", "S3")
STATES = ("u", "v")


def _rows(draw, lhs_pool, rhs_state_pool, symbol_pool, max_alts, eps_bias):
    rules = []
    for lhs_state, lhs_sym in lhs_pool:
        alts = draw(st.integers(1, max_alts))
        weights = [draw(st.integers(1, 6)) for _ in range(alts)]
        total = sum(weights)
        seen = {}
        for w in weights:
            lengths = [0, 0, 1, 2] if eps_bias else [0, 1, 2]
            length = draw(st.sampled_from(lengths))
            word = tuple(draw(st.sampled_from(symbol_pool)) for _ in range(length))
            rhs_state = draw(st.sampled_from(rhs_state_pool))
            key = (rhs_state, word)
            seen[key] = seen.get(key, Fraction(0)) + Fraction(w, total)
        for (rhs_state, word), prob in seen.items():
            rules.append(Rule(lhs_state, lhs_sym, rhs_state, word, prob))
    return rules


@st.composite
def small_bpas(draw, max_symbols=3, max_alts=3, eps_bias=True):
    k = draw(st.integers(1, max_symbols))
    syms = SYMS[:k]
    rules = _rows(draw, [("_", s) for s in syms], ("_",), syms, max_alts, eps_bias)
    return Pda(("_",), syms, tuple(rules), kind="bpa")


@st.composite
def small_pdas(draw, max_states=2, max_symbols=2, max_alts=3, eps_bias=True):
    ns = draw(st.integers(1, max_states))
    k = draw(st.integers(1, max_symbols))
    states, syms = STATES[:ns], SYMS[:k]
    pool = [(p, s) for p in states for s in syms]
    rules = _rows(draw, pool, states, syms, max_alts, eps_bias)
    return Pda(states, syms, tuple(rules), kind="pda")


@st.composite
def acyclic_bpas(draw, max_symbols=4):
    """Stateless models whose dependence relation is forced acyclic."""
    k = draw(st.integers(1, max_symbols))
    syms = SYMS[:k]
    rules = []
    for i, lhs in enumerate(syms):
        below = syms[i + 1 :]
        alts = draw(st.integers(1, 2))
        weights = [draw(st.integers(1, 4)) for _ in range(alts)]
        total = sum(weights)
        seen = {}
        for w in weights:
            length = draw(st.sampled_from([0, 1, 2] if below else [0]))
            word = tuple(draw(st.sampled_from(below)) for _ in range(length))
            seen[word] = seen.get(word, Fraction(0)) + Fraction(w, total)
        for word, prob in seen.items():
            rules.append(Rule("_", lhs, "_", word, prob))
    return Pda(("_",), syms, tuple(rules), kind="bpa")


def symmetric_pair():
    """X and Y feeding each other, both with escape hatches."""
    return make_bpa([
        (("X", "Y", "Y"), Fraction(1, 2)),
        (("X",), Fraction(1, 2)),
        (("Y", "X", "X"), Fraction(1, 2)),
        (("Y",), Fraction(1, 2)),
    ])


def chained_critical():
    """X defers to a critical Y; X itself never changes stack weight."""
    return make_bpa([
        (("X", "Y"), Fraction(1)),
        (("Y", "Y", "Y"), Fraction(1, 2)),
        (("Y",), Fraction(1, 2)),
    ])


def subcritical_unit():
    return make_bpa([(("X",), Fraction(3, 4)), (("X", "X", "X"), Fraction(1, 4))],
                    start="X")


def critical_chain(h: int) -> Pda:
    """Depth-h fair chain: same family as the bundled delta models."""
    rules = []
    for i in range(h, 0, -1):
        rules.append(((f"X{i}", f"X{i}", f"X{i}"), Fraction(1, 2)))
        if i > 1:
            rules.append(((f"X{i}", f"X{i-1}"), Fraction(1, 2)))
        else:
            rules.append((("X1",), Fraction(1, 2)))
    return make_bpa(rules, start=f"X{h}")
