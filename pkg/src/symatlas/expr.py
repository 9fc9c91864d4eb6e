"""Expression trees over the univariate grammar.

Trees are immutable ``Node`` tuples.  ``Add`` and ``Mul`` are n-ary; the
parser always returns them flattened, GP code may build binary ones.
"""

from __future__ import annotations

import enum
import random
from typing import Iterator, NamedTuple

__all__ = [
    "NodeKind", "Node", "SizeMetrics", "ExpressionSyntaxError",
    "var", "add", "mul", "inv", "exp", "log", "sin",
    "to_text", "parse", "tokenize", "parse_tokens", "semantic_hash",
    "canonicalize", "canonical_text", "size_metrics", "iter_nodes",
    "shuffle_commutative", "check_arity",
]

MASK64 = (1 << 64) - 1


class NodeKind(enum.IntEnum):
    VAR = 0
    ADD = 1
    MUL = 2
    INV = 3
    EXP = 4
    LOG = 5
    SIN = 6


UNARY = frozenset({NodeKind.INV, NodeKind.EXP, NodeKind.LOG, NodeKind.SIN})
NARY = frozenset({NodeKind.ADD, NodeKind.MUL})


class Node(NamedTuple):
    kind: NodeKind
    children: tuple = ()

    def __repr__(self):
        return f"Node<{to_text(self)}>"


X = Node(NodeKind.VAR)


def var() -> Node:
    return X


def _nary(kind, args):
    if len(args) < 2:
        raise ValueError(f"{kind.name} needs at least two arguments")
    return Node(kind, tuple(args))


def add(*args: Node) -> Node:
    return _nary(NodeKind.ADD, args)


def mul(*args: Node) -> Node:
    return _nary(NodeKind.MUL, args)


def inv(arg: Node) -> Node:
    return Node(NodeKind.INV, (arg,))


def exp(arg: Node) -> Node:
    return Node(NodeKind.EXP, (arg,))


def log(arg: Node) -> Node:
    return Node(NodeKind.LOG, (arg,))


def sin(arg: Node) -> Node:
    return Node(NodeKind.SIN, (arg,))


def check_arity(tree: Node) -> bool:
    """True when every node has the arity its kind requires."""
    for node in iter_nodes(tree):
        n = len(node.children)
        if node.kind is NodeKind.VAR and n != 0:
            return False
        if node.kind in UNARY and n != 1:
            return False
        if node.kind in NARY and n < 2:
            return False
    return True


def iter_nodes(tree: Node) -> Iterator[Node]:
    """Preorder traversal."""
    stack = [tree]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


# --------------------------------------------------------------------------
# text

_FUNC_NAMES = {NodeKind.EXP: "exp", NodeKind.LOG: "log", NodeKind.SIN: "sin"}


def to_text(tree: Node) -> str:
    kind = tree.kind
    if kind is NodeKind.VAR:
        return "x"
    if kind is NodeKind.ADD:
        return " + ".join(to_text(c) for c in tree.children)
    if kind is NodeKind.MUL:
        parts = []
        for c in tree.children:
            s = to_text(c)
            # only GP trees can put a sum directly under a product
            parts.append(f"({s})" if c.kind is NodeKind.ADD else s)
        return " * ".join(parts)
    if kind is NodeKind.INV:
        return f"1/({to_text(tree.children[0])})"
    return f"{_FUNC_NAMES[kind]}({to_text(tree.children[0])})"


class ExpressionSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


_TOKENS = ("1/(", "exp(", "log(", "sin(", "x", "+", "*", "(", ")")


def tokenize(text: str) -> list[tuple[str, int]]:
    """Split ``text`` into ``(token, position)`` pairs."""
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        for tok in _TOKENS:
            if text.startswith(tok, i):
                out.append((tok, i))
                i += len(tok)
                break
        else:
            raise ExpressionSyntaxError(f"unexpected character {ch!r}", i)
    return out


_OPENERS = {"1/(": NodeKind.INV, "exp(": NodeKind.EXP,
            "log(": NodeKind.LOG, "sin(": NodeKind.SIN}


class _Parser:
    def __init__(self, tokens, end_pos):
        self.tokens = tokens
        self.i = 0
        self.end_pos = end_pos

    def peek(self):
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def pos(self):
        return self.tokens[self.i][1] if self.i < len(self.tokens) else self.end_pos

    def expect(self, tok):
        if self.peek() != tok:
            found = self.peek() or "end of input"
            raise ExpressionSyntaxError(f"expected {tok!r}, found {found!r}", self.pos())
        self.i += 1

    def expr(self):
        terms = [self.term()]
        while self.peek() == "+":
            self.i += 1
            terms.append(self.term())
        return _flat_node(NodeKind.ADD, terms)

    def term(self):
        factors = [self.factor()]
        while self.peek() == "*":
            self.i += 1
            factors.append(self.factor())
        return _flat_node(NodeKind.MUL, factors)

    def factor(self):
        tok = self.peek()
        if tok == "x":
            self.i += 1
            return X
        if tok in _OPENERS:
            self.i += 1
            arg = self.expr()
            self.expect(")")
            return Node(_OPENERS[tok], (arg,))
        if tok == "(":
            self.i += 1
            inner = self.expr()
            self.expect(")")
            return inner
        found = tok or "end of input"
        raise ExpressionSyntaxError(f"unexpected token {found!r}", self.pos())


def _flat_node(kind, items):
    if len(items) == 1:
        return items[0]
    flat = []
    for it in items:
        if it.kind is kind:
            flat.extend(it.children)
        else:
            flat.append(it)
    return Node(kind, tuple(flat))


def parse_tokens(tokens: list[tuple[str, int]], end_pos: int = 0) -> Node:
    p = _Parser(tokens, end_pos)
    tree = p.expr()
    if p.i != len(tokens):
        raise ExpressionSyntaxError(f"unexpected token {p.peek()!r}", p.pos())
    return tree


def parse(text: str) -> Node:
    """Parse infix text into a tree with flattened sums and products.

    Raises ``ExpressionSyntaxError`` (a ``ValueError``) carrying the
    offending character offset, e.g. for ``"x - 1"``.
    """
    return parse_tokens(tokenize(text), len(text))


# --------------------------------------------------------------------------
# semantic hash

def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


KIND_SEED = {k: mix64(0x9E3779B97F4A7C15 * (int(k) + 1) & MASK64) for k in NodeKind}
VAR_DIGEST = mix64(KIND_SEED[NodeKind.VAR])


def combine_digests(kind: NodeKind, child_digests) -> int:
    """Digest of a node from its kind and its (already ordered) child digests."""
    h = KIND_SEED[kind]
    for d in child_digests:
        h = mix64((h * 0x100000001B3 + d) & MASK64)
    return mix64(h ^ len(child_digests))


def _flat_children(node):
    out = []
    stack = list(reversed(node.children))
    while stack:
        c = stack.pop()
        if c.kind is node.kind:
            stack.extend(reversed(c.children))
        else:
            out.append(c)
    return out


def semantic_hash(tree: Node) -> int:
    """64-bit digest that is invariant under reordering of sum/product terms.

    Nested sums and products are flattened first, child digests are sorted
    before being mixed in, so ``x + sin(x)`` and ``sin(x) + x`` collide by
    design.
    """
    kind = tree.kind
    if kind is NodeKind.VAR:
        return VAR_DIGEST
    if kind in NARY:
        ds = sorted(semantic_hash(c) for c in _flat_children(tree))
        return combine_digests(kind, ds)
    return combine_digests(kind, (semantic_hash(tree.children[0]),))


def _canon(tree):
    kind = tree.kind
    if kind is NodeKind.VAR:
        return X, VAR_DIGEST
    if kind in NARY:
        parts = [_canon(c) for c in _flat_children(tree)]
        digest = combine_digests(kind, sorted(d for _, d in parts))
        # inverses go last so canonical products stay grammar sentences
        parts.sort(key=lambda p: (p[0].kind is NodeKind.INV, p[1]))
        if any(a[1] == b[1] and a[0] != b[0] for a, b in zip(parts, parts[1:])):
            parts.sort(key=lambda p: (p[0].kind is NodeKind.INV, p[1], to_text(p[0])))
        return Node(kind, tuple(n for n, _ in parts)), digest
    child, d = _canon(tree.children[0])
    return Node(kind, (child,)), combine_digests(kind, (d,))


def canonicalize(tree: Node) -> Node:
    """Flatten sums/products and order their children by digest."""
    return _canon(tree)[0]


def canonical_text(tree: Node) -> str:
    return to_text(canonicalize(tree))


# --------------------------------------------------------------------------
# sizes

class SizeMetrics(NamedTuple):
    variable_refs: int
    total_nodes: int


def size_metrics(tree: Node) -> SizeMetrics:
    refs = total = 0
    for node in iter_nodes(tree):
        total += 1
        if node.kind is NodeKind.VAR:
            refs += 1
    return SizeMetrics(refs, total)


def shuffle_commutative(tree: Node, rng: random.Random) -> Node:
    """Randomly permute the children of every sum and product."""
    if tree.kind is NodeKind.VAR:
        return tree
    children = [shuffle_commutative(c, rng) for c in tree.children]
    if tree.kind in NARY:
        rng.shuffle(children)
    return Node(tree.kind, tuple(children))
