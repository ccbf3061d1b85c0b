"""Dependence structure of stateless models.

A symbol X depends directly on Y when some rule of X mentions Y on its
right-hand side.  The SCC condensation of that relation, its height, and
reachability sets drive the tail-regime classification: an acyclic
(reachable) dependence relation means no run can revisit a symbol on a
derivation path, so termination time is bounded by the tree of size
2^|alphabet| - 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import Configuration, ModelError, Pda

__all__ = ["DependenceInfo", "dependence", "restrict_to_reachable", "p_min", "is_bounded_case"]


@dataclass(frozen=True)
class DependenceInfo:
    """Direct edges, SCC partition (reverse-topological), condensation, height."""

    direct_edges: dict[str, frozenset[str]]
    sccs: tuple[tuple[str, ...], ...]
    scc_of: dict[str, int]
    scc_dag_edges: frozenset[tuple[int, int]]
    height: int
    reachable_from: dict[str, frozenset[str]]

    def scc_members(self, symbol: str) -> tuple[str, ...]:
        return self.sccs[self.scc_of[symbol]]

    def on_cycle(self, symbol: str) -> bool:
        scc = self.sccs[self.scc_of[symbol]]
        return len(scc) > 1 or symbol in self.direct_edges[symbol]


def _require_stateless(model: Pda):
    if not model.stateless:
        raise ModelError("dependence analysis is defined on stateless models; transform first")


def dependence(model: Pda) -> DependenceInfo:
    """Compute the dependence relation, its SCC DAG, and the DAG height."""
    _require_stateless(model)
    edges: dict[str, set[str]] = {sym: set() for sym in model.alphabet}
    for rule in model.rules:
        edges[rule.lhs_symbol].update(rule.rhs_word)

    sccs = _tarjan(model.alphabet, edges)
    scc_of = {sym: i for i, comp in enumerate(sccs) for sym in comp}
    dag_edges = {
        (scc_of[x], scc_of[y])
        for x, ys in edges.items()
        for y in ys
        if scc_of[x] != scc_of[y]
    }

    # Longest path in the condensation, counted in edges.  Tarjan emits the
    # SCCs in reverse topological order, so successors are already final.
    longest = [0] * len(sccs)
    for i in range(len(sccs)):
        longest[i] = max((longest[j] + 1 for (k, j) in dag_edges if k == i), default=0)
    height = max(longest, default=0) + 1

    reach = {sym: frozenset(_closure(sym, edges)) for sym in model.alphabet}
    return DependenceInfo(
        direct_edges={x: frozenset(ys) for x, ys in edges.items()},
        sccs=tuple(tuple(c) for c in sccs),
        scc_of=scc_of,
        scc_dag_edges=frozenset(dag_edges),
        height=height,
        reachable_from=reach,
    )


def _closure(sym: str, edges: dict[str, set[str]]) -> set[str]:
    seen: set[str] = set()
    stack = list(edges[sym])
    while stack:
        y = stack.pop()
        if y not in seen:
            seen.add(y)
            stack.extend(edges[y])
    return seen


def _tarjan(nodes: tuple[str, ...], edges: dict[str, set[str]]) -> list[list[str]]:
    """Iterative Tarjan; components come out in reverse topological order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(sorted(edges[root])))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for succ in it:
                if succ not in index:
                    index[succ] = low[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, iter(sorted(edges[succ]))))
                    advanced = True
                    break
                if succ in on_stack:
                    low[node] = min(low[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp.append(member)
                    if member == node:
                        break
                sccs.append(comp)
    return sccs


def restrict_to_reachable(model: Pda, start: str) -> Pda:
    """Sub-model over the start symbol and everything it depends on."""
    _require_stateless(model)
    if start not in model.symbol_index:
        raise ModelError(f"unknown start symbol {start!r}")
    info = dependence(model)
    keep = {start} | set(info.reachable_from[start])
    alphabet = tuple(sym for sym in model.alphabet if sym in keep)
    rules = tuple(rule for rule in model.rules if rule.lhs_symbol in keep)
    return Pda(model.states, alphabet, rules, kind=model.kind,
               start=Configuration(model.only_state, (start,)))


def p_min(model: Pda, start: str | None = None) -> float:
    """Least rule probability, over the reachable restriction when start is given."""
    if start is not None and model.stateless:
        model = restrict_to_reachable(model, start)
    return float(min((rule.prob for rule in model.rules), default=Fraction(1)))


def is_bounded_case(model: Pda, start: str) -> bool:
    """True iff no symbol reachable from start depends on itself.

    For an almost surely terminating model this is exactly the regime where
    all termination mass sits below 2^|alphabet| steps: a repeated symbol on
    a derivation path could otherwise be pumped into arbitrarily long runs.
    """
    restricted = restrict_to_reachable(model, start)
    info = dependence(restricted)
    return not any(info.on_cycle(sym) for sym in restricted.alphabet)
