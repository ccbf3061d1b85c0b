"""Reduction of stateful models to stateless ones, and the progressivity
normal form used by the polynomial tail analysis.

Each stack symbol of the constructed stateless model is a triple symbol:
``p.X.q`` carries the obligation to empty X starting in state p and end in
state q, ``p.X.up`` the obligation to never empty it.  Rule probabilities
are the source probabilities reweighted by the termination masses of the
obligations they spawn, so they are irrational in general and live in
floats.  Terminating symbols never depend on diverging ones, and the
restriction to terminating symbols terminates almost surely.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import BPA_STATE, Configuration, Pda, Rule, Triple
from .moments import moment_matrix, rule_weight_change
from .termination import TerminationTable

__all__ = [
    "TripleSymbol",
    "TransformResult",
    "TransformError",
    "to_bpa",
    "terminating_part",
    "cone_vector",
    "make_u_progressive",
]

OMIT_BELOW = 1e-12


class TransformError(RuntimeError):
    pass


@dataclass(frozen=True)
class TripleSymbol:
    """Stack symbol of the constructed stateless model."""

    triple: Triple

    @property
    def name(self) -> str:
        return str(self.triple)

    @property
    def display(self) -> str:
        tgt = "↑" if self.triple.target is None else self.triple.target
        return f"⟨{self.triple.state}{self.triple.symbol}{tgt}⟩"


@dataclass(frozen=True)
class Provenance:
    """Origin of one constructed rule: source rules plus the split state."""

    sources: tuple[Rule, ...]
    via_state: str | None


@dataclass(frozen=True)
class TransformResult:
    bpa: Pda
    symbols: dict[str, TripleSymbol]
    rule_provenance: dict[Rule, Provenance]
    used_table: TerminationTable

    def symbol_for(self, triple: Triple) -> str | None:
        name = str(triple)
        return name if name in self.symbols else None


def to_bpa(model: Pda, table: TerminationTable, cutoff: float = OMIT_BELOW) -> TransformResult:
    """Construct the stateless model over terminating and diverging triples.

    Triples whose probability falls below ``cutoff`` are omitted entirely;
    every emitted rule row sums to one within 1e-9, which follows from the
    first-step identity when the table residual is small.
    """
    probs = table.probs

    def positive(t: Triple) -> bool:
        return probs.get(t, 0.0) > cutoff

    term_syms = [
        Triple(p, X, q)
        for p in model.states
        for X in model.alphabet
        for q in model.states
        if positive(Triple(p, X, q))
    ]
    # A pair without rules is stuck, not running forever; it neither gets a
    # diverging symbol nor appears in one.
    div_syms = [
        Triple(p, X, None)
        for p in model.states
        for X in model.alphabet
        if positive(Triple(p, X, None)) and model.rules_for(p, X)
    ]
    div_set = set(div_syms)

    rules: list[Rule] = []
    provenance: dict[Rule, Provenance] = {}

    def emit(lhs: Triple, rhs: tuple[Triple, ...], prob: float,
             sources: tuple[Rule, ...], via: str | None):
        if prob <= 0.0:
            return
        # a lone rule's reweighted probability can overshoot 1 by an ulp
        rule = Rule(BPA_STATE, str(lhs), BPA_STATE, tuple(str(t) for t in rhs),
                    Fraction(min(prob, 1.0)))
        rules.append(rule)
        provenance[rule] = Provenance(sources=sources, via_state=via)

    for t in term_syms:
        p, X, q = t.state, t.symbol, t.target
        denom = probs[t]
        if denom <= cutoff:
            raise TransformError(f"division by vanishing probability for {t}")
        for rule in model.rules_for(p, X):
            x, r = float(rule.prob), rule.rhs_state
            word = rule.rhs_word
            if len(word) == 0:
                if r == q:
                    emit(t, (), x / denom, (rule,), None)
            elif len(word) == 1:
                a = Triple(r, word[0], q)
                if positive(a):
                    emit(t, (a,), x * probs[a] / denom, (rule,), None)
            else:
                Y, Z = word
                for s in model.states:
                    a, b = Triple(r, Y, s), Triple(s, Z, q)
                    if positive(a) and positive(b):
                        y = x * probs[a] * probs[b]
                        emit(t, (a, b), y / denom, (rule,), s)

    for t in div_syms:
        p, X = t.state, t.symbol
        denom = probs[t]
        for rule in model.rules_for(p, X):
            if len(rule.rhs_word) == 2:
                x, r = float(rule.prob), rule.rhs_state
                Y, Z = rule.rhs_word
                for s in model.states:
                    a, b = Triple(r, Y, s), Triple(s, Z, None)
                    if positive(a) and b in div_set:
                        y = x * probs[a] * probs[b]
                        emit(t, (a, b), y / denom, (rule,), s)
        # Heads that keep running forever aggregate over all rules pushing
        # the same (state, symbol) on top.
        for r in model.states:
            for Y in model.alphabet:
                head = Triple(r, Y, None)
                if head not in div_set:
                    continue
                sources = tuple(
                    rule
                    for rule in model.rules_for(p, X)
                    if rule.rhs_state == r and rule.rhs_word[:1] == (Y,)
                )
                if not sources:
                    continue
                x = float(sum((rule.prob for rule in sources), Fraction(0)))
                emit(t, (head,), probs[head] * x / denom, sources, None)

    alphabet = tuple(str(t) for t in (*term_syms, *div_syms))
    start = None
    if model.start is not None and len(model.start.stack) == 1:
        for cand in (*term_syms, *div_syms):
            if (cand.state, cand.symbol) == (model.start.state, model.start.stack[0]):
                start = Configuration(BPA_STATE, (str(cand),))
                break
    bpa = Pda((BPA_STATE,), alphabet, tuple(rules), kind="bpa", start=start)

    for (_, lhs), row in bpa.rules_by_pair.items():
        total = float(sum((r.prob for r in row), Fraction(0)))
        if abs(total - 1.0) > 1e-9:
            raise TransformError(f"row for {lhs} sums to {total!r}; table residual too large")

    symbols = {str(t): TripleSymbol(t) for t in (*term_syms, *div_syms)}
    return TransformResult(bpa=bpa, symbols=symbols, rule_provenance=provenance,
                           used_table=table)


def terminating_part(result: TransformResult) -> Pda:
    """Restriction to terminating triple symbols; again a stateless model."""
    keep = {name for name, sym in result.symbols.items() if not sym.triple.diverging}
    alphabet = tuple(s for s in result.bpa.alphabet if s in keep)
    rules = tuple(r for r in result.bpa.rules if r.lhs_symbol in keep)
    for rule in rules:
        if any(s not in keep for s in rule.rhs_word):
            raise TransformError("terminating symbol depends on a diverging one")
    start = result.bpa.start
    if start is not None and start.stack[0] not in keep:
        start = None
    return Pda((BPA_STATE,), alphabet, rules, kind="bpa", start=start)


# ---------------------------------------------------------------------------
# cone vector and progressivity

def cone_vector(model: Pda) -> dict[str, float]:
    """Positive weights with A u <= u on every SCC block, scaled to max 1.

    Computed per irreducible block from the dominant eigenvector, then
    assembled.  The blockwise inequality is the strongest available for
    reducible critical models: a cross-block critical row can make a global
    positive solution impossible.  The ratio min/max still dominates
    p_min^|alphabet| because each block obeys its own bound.
    """
    mm = moment_matrix(model)
    for i, rho in enumerate(mm.block_radii):
        if rho > 1.0 + 1e-9:
            raise TransformError(
                f"supercritical block {mm.deps.sccs[i]}: not almost surely terminating"
            )
    return dict(mm.dominant_vector)


def _derivation_chains(model: Pda) -> dict[str, list[tuple[Rule, int | None]]]:
    """Shortest rule chain from each symbol to the empty word.

    Entry k of a chain is (rule, position of the next chain symbol in its
    right-hand side); the final rule carries position None.  Level-by-level
    search keeps ties resolved by declaration order; chain length is at most
    the alphabet size for a.s. terminating models, and symbols along a
    shortest chain are pairwise distinct.
    """
    chains: dict[str, list[tuple[Rule, int | None]]] = {}
    for sym in model.alphabet:
        for rule in model.rules_for(model.only_state, sym):
            if not rule.rhs_word:
                chains[sym] = [(rule, None)]
                break
    for _ in range(len(model.alphabet)):
        added = {}
        for sym in model.alphabet:
            if sym in chains or sym in added:
                continue
            best = None
            for ri, rule in enumerate(model.rules_for(model.only_state, sym)):
                for k, y in enumerate(rule.rhs_word):
                    if y in chains:
                        cand = (len(chains[y]), ri, k, rule)
                        if best is None or cand[:3] < best[:3]:
                            best = cand
            if best is not None:
                _, _, k, rule = best
                added[sym] = [(rule, k)] + chains[rule.rhs_word[k]]
        if not added:
            break
        chains.update(added)
    return chains


def _induced_word(chain: list[tuple[Rule, int | None]]) -> tuple[str, ...]:
    word: tuple[str, ...] = (chain[0][0].lhs_symbol,)
    pos = 0
    for rule, nxt in chain:
        word = word[:pos] + rule.rhs_word + word[pos + 1 :]
        if nxt is not None:
            pos += nxt
    return word


def _contract(model: Pda, chain: list[tuple[Rule, int | None]]) -> list[Rule]:
    """Inline a derivation chain into its first rule.

    Recursively substitutes the chain's tail for the marked occurrence,
    keeping all alternative rules of the substituted symbol; probabilities
    multiply along the chain, so each stays at least p_min^len(chain).
    """
    rule, pos = chain[0]
    if len(chain) == 1:
        return [rule]
    inner = _contract(model, chain[1:])
    follow = chain[1][0]
    sub = [
        r for r in model.rules_for(model.only_state, follow.lhs_symbol) if r != follow
    ] + inner
    out = []
    for alt in sub:
        word = rule.rhs_word[:pos] + alt.rhs_word + rule.rhs_word[pos + 1 :]
        out.append(Rule(BPA_STATE, rule.lhs_symbol, BPA_STATE, word,
                        rule.prob * alt.prob))
    return out


def make_u_progressive(model: Pda, u: dict[str, float]) -> Pda:
    """Rebuild rules so every symbol has one changing total weight by u_min/2.

    Symbols already owning such a rule keep their rows; for the rest, the
    first rule of a shortest derivation chain to the empty word is replaced
    by its contraction, choosing between the full chain and the chain
    without its final erasing rule, whichever clears the margin (the full
    chain is preferred when both do).
    """
    if not model.stateless:
        raise TransformError("progressivity applies to stateless models")
    u_min = min(u.values())
    margin = u_min / 2.0
    chains = _derivation_chains(model)

    new_rules: dict[str, list[Rule]] = {
        sym: list(model.rules_for(model.only_state, sym)) for sym in model.alphabet
    }
    for sym in model.alphabet:
        rules = new_rules[sym]
        if any(abs(rule_weight_change(r, u)) >= margin for r in rules):
            continue
        if sym not in chains:
            raise TransformError(
                f"symbol {sym} has no derivation to the empty word; "
                "model is not almost surely terminating"
            )
        chain = chains[sym]
        full = _induced_word(chain)
        weight = lambda w: u[sym] - sum(u[y] for y in w)
        if abs(weight(full)) >= margin or len(chain) == 1:
            chosen = chain
        else:
            chosen = chain[:-1]
        replaced = _contract(model, chosen)
        head = chain[0][0]
        at = rules.index(head)
        rules[at : at + 1] = replaced
        new_rules[sym] = _merge_duplicates(rules)

    flattened = tuple(r for sym in model.alphabet for r in new_rules[sym])
    return Pda(model.states, model.alphabet, flattened, kind="relaxed-bpa",
               start=model.start)


def _merge_duplicates(rules: list[Rule]) -> list[Rule]:
    merged: dict[tuple, Rule] = {}
    order: list[tuple] = []
    for r in rules:
        key = (r.rhs_state, r.rhs_word)
        if key in merged:
            old = merged[key]
            merged[key] = Rule(r.lhs_state, r.lhs_symbol, r.rhs_state, r.rhs_word,
                               old.prob + r.prob)
        else:
            merged[key] = r
            order.append(key)
    return [merged[k] for k in order]
