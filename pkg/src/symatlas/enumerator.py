"""Exhaustive enumeration of grammar sentences with semantic deduplication.

Two derivation strategies produce the same set of hash classes:

``stack``
    The plain phrase-stack expansion: pop a phrase, substitute its leftmost
    nonterminal with every production, keep sentences, push the rest.
    Exponential in the number of orderings; fine up to limit 4 or 5.
``memo``
    Derives the set of canonical trees for every (nonterminal, exact
    variable count) pair once and combines those sets, deduplicating at
    every level.  This is what makes limit 7 tractable.

Both return expressions in canonical form, sorted by canonical text.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, NamedTuple

from .expr import (
    NARY, X, Node, NodeKind, SizeMetrics, VAR_DIGEST, combine_digests,
    parse_tokens, semantic_hash, size_metrics, to_text,
)

log = logging.getLogger(__name__)

VARIABLE = "x"

_NARY_OPS = {"+": NodeKind.ADD, "*": NodeKind.MUL}
_OPENERS = {"1/(": NodeKind.INV, "exp(": NodeKind.EXP,
            "log(": NodeKind.LOG, "sin(": NodeKind.SIN}


@dataclass(frozen=True)
class GrammarSpec:
    """Context-free grammar; any symbol that is not a rule name is a terminal."""

    start: str
    rules: dict

    def is_nonterminal(self, symbol: str) -> bool:
        return symbol in self.rules

    @property
    def min_refs(self) -> dict:
        return _min_refs(self)


def _min_refs(grammar: GrammarSpec) -> dict:
    """Cheapest completion (in variable references) of each nonterminal."""
    inf = float("inf")
    best = {nt: inf for nt in grammar.rules}
    changed = True
    while changed:
        changed = False
        for nt, prods in grammar.rules.items():
            for prod in prods:
                cost = sum(best[s] if s in grammar.rules else (s == VARIABLE) for s in prod)
                if cost < best[nt]:
                    best[nt] = cost
                    changed = True
    return best


GRAMMAR = GrammarSpec(
    start="Expr",
    rules={
        "Expr": [("Term", "+", "Expr"), ("Term",)],
        "Term": [("Factor", "*", "Term"), ("Factor",), ("1/(", "InvExpr", ")")],
        "Factor": [("VarFac",), ("ExpFac",), ("LogFac",), ("SinFac",)],
        "VarFac": [(VARIABLE,)],
        "ExpFac": [("exp(", "SimpleTerm", ")")],
        "LogFac": [("log(", "SimpleExpr", ")")],
        "SinFac": [("sin(", "SimpleExpr", ")")],
        "SimpleExpr": [("SimpleTerm", "+", "SimpleExpr"), ("SimpleTerm",)],
        "SimpleTerm": [("VarFac", "*", "SimpleTerm"), ("VarFac",)],
        "InvExpr": [("InvTerm", "+", "InvExpr"), ("InvTerm",)],
        "InvTerm": [("Factor", "*", "InvTerm"), ("Factor",)],
    },
)


class Expression(NamedTuple):
    id: int
    tree: Node
    digest: int
    metrics: SizeMetrics
    text: str


@dataclass
class EnumerationResult:
    expressions: list
    derived_count: int = 0
    duplicate_count: int = 0
    limit: int = 0
    method: str = ""
    seconds: float = 0.0

    def __len__(self):
        return len(self.expressions)

    @property
    def digests(self) -> set:
        return {e.digest for e in self.expressions}


class EnumerationBudgetExceeded(RuntimeError):
    def __init__(self, phrases: int, budget: int):
        super().__init__(f"phrase budget of {budget} exceeded after {phrases} phrases")
        self.phrases = phrases


# --------------------------------------------------------------------------
# phrase-stack derivation

class Phrase(NamedTuple):
    symbols: tuple
    variable_refs: int
    min_refs_to_complete: int
    first_open: int = 0  # symbols before this index are terminals


def prune(phrase: Phrase, limit: int) -> bool:
    """True when the phrase can still complete within ``limit`` references."""
    return phrase.variable_refs + phrase.min_refs_to_complete <= limit


def initial_phrase(grammar: GrammarSpec = GRAMMAR) -> Phrase:
    return Phrase((grammar.start,), 0, grammar.min_refs[grammar.start], 0)


def derive_sentences(limit: int, grammar: GrammarSpec = GRAMMAR,
                     max_phrases: int | None = None,
                     use_pruning: bool = True,
                     max_symbols: int | None = None) -> Iterator[tuple]:
    """Yield every sentence (tuple of terminals) with at most ``limit`` variables.

    Without pruning the expansion only terminates because of
    ``max_symbols``; pass one when ``use_pruning`` is False.
    """
    if limit < 1:
        return
    if not use_pruning and max_symbols is None:
        raise ValueError("derivation without pruning needs max_symbols")
    min_refs = grammar.min_refs
    rules = grammar.rules
    stack = [initial_phrase(grammar)]
    popped = 0
    while stack:
        phrase = stack.pop()
        popped += 1
        if max_phrases is not None and popped > max_phrases:
            raise EnumerationBudgetExceeded(popped, max_phrases)
        syms = phrase.symbols
        i = phrase.first_open
        while syms[i] not in rules:
            i += 1
        symbol = syms[i]
        head, tail = syms[:i], syms[i + 1:]
        children = []
        for prod in rules[symbol]:
            refs = phrase.variable_refs
            need = phrase.min_refs_to_complete - min_refs[symbol]
            for s in prod:
                if s in rules:
                    need += min_refs[s]
                elif s == VARIABLE:
                    refs += 1
            new = Phrase(head + prod + tail, refs, need, i)
            if use_pruning:
                if not prune(new, limit):
                    continue
            elif refs > limit or len(new.symbols) > max_symbols:
                continue
            if need == 0 and not any(s in rules for s in new.symbols[i:]):
                if refs <= limit:
                    yield new.symbols
            else:
                children.append(new)
        # reversed so the first production is expanded first
        stack.extend(reversed(children))


def sentence_to_tree(symbols: tuple) -> Node:
    return parse_tokens([(s, i) for i, s in enumerate(symbols)], len(symbols))


# --------------------------------------------------------------------------
# memoized derivation

class _Form(NamedTuple):
    node: Node
    digest: int
    parts: tuple  # ((child, digest), ...) for sums/products, else ()


_VAR_FORM = _Form(X, VAR_DIGEST, ())


def _action(prod: tuple, grammar: GrammarSpec):
    nts = [s for s in prod if s in grammar.rules]
    terms = [s for s in prod if s not in grammar.rules]
    if prod == (VARIABLE,):
        return ("var",), nts
    if len(nts) == 1 and not terms:
        return ("pass",), nts
    if len(nts) == 2 and len(terms) == 1 and terms[0] in _NARY_OPS and prod[1] in _NARY_OPS:
        return ("nary", _NARY_OPS[terms[0]]), nts
    if len(nts) == 1 and len(prod) == 3 and prod[0] in _OPENERS and prod[2] == ")":
        return ("unary", _OPENERS[prod[0]]), nts
    raise NotImplementedError(f"unsupported production shape {prod}")


def _canonical_node(kind, parts):
    parts = sorted(parts, key=lambda p: (p[0].kind is NodeKind.INV, p[1]))
    if any(a[1] == b[1] and a[0] != b[0] for a, b in zip(parts, parts[1:])):
        parts.sort(key=lambda p: (p[0].kind is NodeKind.INV, p[1], to_text(p[0])))
    return Node(kind, tuple(n for n, _ in parts)), tuple(parts)


class _MemoDeriver:
    def __init__(self, grammar: GrammarSpec):
        self.grammar = grammar
        self.min_refs = grammar.min_refs
        self.actions = {nt: [_action(p, grammar) for p in prods]
                        for nt, prods in grammar.rules.items()}
        self.cache = {}
        self.attempts = 0

    def forms(self, nt: str, n: int) -> dict:
        key = (nt, n)
        if key not in self.cache:
            self.cache[key] = dict(self._generate(nt, n))
        return self.cache[key]

    def _generate(self, nt, n, build=True):
        """Yield ``(digest, form)`` once per new digest; form is None unless ``build``."""
        seen = set()
        for (action, nts) in self.actions[nt]:
            tag = action[0]
            if tag == "var":
                if n == 1:
                    self.attempts += 1
                    if VAR_DIGEST not in seen:
                        seen.add(VAR_DIGEST)
                        yield VAR_DIGEST, _VAR_FORM
            elif tag == "pass":
                if n >= self.min_refs[nts[0]]:
                    for d, f in self.forms(nts[0], n).items():
                        self.attempts += 1
                        if d not in seen:
                            seen.add(d)
                            yield d, f
            elif tag == "unary":
                kind = action[1]
                if n >= self.min_refs[nts[0]]:
                    for f in self.forms(nts[0], n).values():
                        self.attempts += 1
                        d = combine_digests(kind, (f.digest,))
                        if d not in seen:
                            seen.add(d)
                            yield d, _Form(Node(kind, (f.node,)), d, ())
            else:
                kind = action[1]
                a_nt, b_nt = nts
                lo, hi = self.min_refs[a_nt], n - self.min_refs[b_nt]
                for m in range(lo, hi + 1):
                    left = self.forms(a_nt, m)
                    right = self.forms(b_nt, n - m)
                    if not left or not right:
                        continue
                    rparts = [(f.parts if f.node.kind is kind else ((f.node, f.digest),))
                              for f in right.values()]
                    rdig = [sorted(d for _, d in p) for p in rparts]
                    for fa in left.values():
                        ap = fa.parts if fa.node.kind is kind else ((fa.node, fa.digest),)
                        ad = [d for _, d in ap]
                        for bp, bd in zip(rparts, rdig):
                            self.attempts += 1
                            d = combine_digests(kind, sorted(ad + bd))
                            if d in seen:
                                continue
                            seen.add(d)
                            if build:
                                node, parts = _canonical_node(kind, ap + bp)
                                yield d, _Form(node, d, parts)
                            else:
                                yield d, None

    def top_level(self, n, store=True):
        if store:
            return self.forms(self.grammar.start, n)
        return dict(self._generate(self.grammar.start, n, build=False))

    def iter_top_level(self, n):
        """Stream the start symbol's forms at ``n`` refs without caching them."""
        for d, f in self._generate(self.grammar.start, n):
            yield d, f.node


# --------------------------------------------------------------------------
# public entry points

def _finish(trees_by_digest, limit, derived, method, t0):
    rows = []
    for d, tree in trees_by_digest.items():
        rows.append((to_text(tree), d, tree))
    rows.sort()
    exprs = [Expression(i, tree, d, size_metrics(tree), text)
             for i, (text, d, tree) in enumerate(rows)]
    return EnumerationResult(exprs, derived, derived - len(exprs), limit, method,
                             time.perf_counter() - t0)


def enumerate_expressions(limit: int = 7, grammar: GrammarSpec = GRAMMAR,
                          method: str = "memo",
                          max_phrases: int | None = None) -> EnumerationResult:
    """All sentences with at most ``limit`` variable references, one per hash class.

    Each class is represented by its canonical tree (commutative children
    ordered by digest, inverse factors last); ids follow the sorted
    canonical text.
    """
    from .expr import canonicalize

    t0 = time.perf_counter()
    if limit < 1:
        return EnumerationResult([], 0, 0, limit, method)
    found = {}
    derived = 0
    if method == "stack":
        for sentence in derive_sentences(limit, grammar, max_phrases=max_phrases):
            derived += 1
            tree = sentence_to_tree(sentence)
            d = semantic_hash(tree)
            if d not in found:
                found[d] = canonicalize(tree)
    elif method == "memo":
        deriver = _MemoDeriver(grammar)
        for n in range(1, limit + 1):
            for d, f in deriver.top_level(n).items():
                found.setdefault(d, f.node)
        derived = deriver.attempts
    else:
        raise ValueError(f"unknown method {method!r}")
    log.info("limit %d: %d unique of %d derived (%s)", limit, len(found), derived, method)
    return _finish(found, limit, derived, method, t0)


def count_unique(limit: int = 7, grammar: GrammarSpec = GRAMMAR) -> tuple[int, float]:
    """Number of hash classes up to ``limit`` without materialising the last level.

    Returns ``(count, seconds)``.
    """
    t0 = time.perf_counter()
    if limit < 1:
        return 0, 0.0
    deriver = _MemoDeriver(grammar)
    digests = set()
    for n in range(1, limit):
        digests.update(deriver.top_level(n))
    last = deriver.top_level(limit, store=False)
    digests.update(last)
    return len(digests), time.perf_counter() - t0


def stream_expressions(limit: int = 7, grammar: GrammarSpec = GRAMMAR):
    """Yield ``(digest, canonical tree)`` for every hash class up to ``limit``.

    Same set as :func:`enumerate_expressions` but unsorted, and the last
    level is never held in memory, so limit 7 fits on a small machine.
    """
    if limit < 1:
        return
    deriver = _MemoDeriver(grammar)
    seen = set()
    for n in range(1, limit + 1):
        items = deriver.top_level(n).items() if n < limit else deriver.iter_top_level(n)
        for d, f in items:
            if d in seen:
                continue
            seen.add(d)
            yield d, (f.node if n < limit else f)


# --------------------------------------------------------------------------
# grammar membership

def is_sentence(tokens, grammar: GrammarSpec = GRAMMAR) -> bool:
    """Recognise a token sequence against the grammar."""
    toks = tuple(tokens)
    rules = grammar.rules

    @lru_cache(maxsize=None)
    def ends(symbol, i):
        if symbol not in rules:
            return frozenset({i + 1}) if i < len(toks) and toks[i] == symbol else frozenset()
        out = set()
        for prod in rules[symbol]:
            pos = {i}
            for s in prod:
                nxt = set()
                for p in pos:
                    nxt |= ends(s, p)
                pos = nxt
                if not pos:
                    break
            out |= pos
        return frozenset(out)

    return len(toks) in ends(grammar.start, 0)


def text_tokens(text: str) -> list[str]:
    from .expr import tokenize
    return [t for t, _ in tokenize(text)]
