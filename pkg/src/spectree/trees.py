"""Finite planar rooted trees stored as breadth-first child-count arrays.

A tree is the sequence ``nchild[v]`` of child counts in breadth-first
order with children kept in planar (left to right) order.  Vertex 0 is
the root and has exactly one child.  Everything else (parents, levels,
child ranges) is derived from that array, so a tree costs one int per
vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

ENUMERATION_LIMIT = 12


@dataclass(frozen=True, eq=False)
class Tree:
    """Planar rooted tree with a root of degree one.

    ``truncated_at`` marks a depth-capped sample: vertices on that level
    may have children that were never generated.
    """

    nchild: np.ndarray
    truncated_at: int | None = field(default=None)

    def __post_init__(self):
        a = np.ascontiguousarray(self.nchild, dtype=np.int64)
        object.__setattr__(self, "nchild", a)
        if a.ndim != 1 or len(a) < 2:
            raise ValueError("a tree needs at least one edge")
        if a[0] != 1:
            raise ValueError("root must have exactly one child")
        if (a < 0).any():
            raise ValueError("negative child count")
        if a.sum() != len(a) - 1:
            raise ValueError("child counts do not describe a connected tree")
        # breadth-first consistency: every vertex must be reached before it is indexed
        reach = 1 + np.cumsum(a)
        if (reach[:-1] <= np.arange(1, len(a))).any():
            raise ValueError("child counts are not a valid breadth-first sequence")

    @property
    def n_vertices(self) -> int:
        return len(self.nchild)

    @property
    def size(self) -> int:
        """Number of edges."""
        return len(self.nchild) - 1

    @cached_property
    def child_ptr(self) -> np.ndarray:
        """Children of ``v`` are ``child_ptr[v] .. child_ptr[v+1]-1``."""
        ptr = np.empty(len(self.nchild) + 1, dtype=np.int64)
        ptr[0] = 1
        np.cumsum(self.nchild, out=ptr[1:])
        ptr[1:] += 1
        return ptr

    @cached_property
    def parent(self) -> np.ndarray:
        par = np.empty(len(self.nchild), dtype=np.int64)
        par[0] = -1
        par[1:] = np.repeat(np.arange(len(self.nchild)), self.nchild)
        return par

    @cached_property
    def level(self) -> np.ndarray:
        lev = np.zeros(len(self.nchild), dtype=np.int64)
        ptr = self.child_ptr
        a, b, d = 0, 1, 0
        while a < b:
            lev[a:b] = d
            a, b, d = b, int(ptr[b]), d + 1
        return lev

    @cached_property
    def level_ptr(self) -> np.ndarray:
        """Vertices on level d are ``level_ptr[d] .. level_ptr[d+1]-1``."""
        return np.searchsorted(self.level, np.arange(self.level[-1] + 2))

    @property
    def degree(self) -> np.ndarray:
        """Vertex orders (graph degrees)."""
        deg = self.nchild + 1
        deg[0] = self.nchild[0]
        return deg

    def children(self, v: int) -> range:
        return range(int(self.child_ptr[v]), int(self.child_ptr[v + 1]))

    def subtree(self, v: int) -> "Tree":
        """Tree made of the link ``(parent(v), v)`` and all descendants of ``v``."""
        if v == 0:
            raise ValueError("root has no parent link")
        order = [v]
        head = 0
        while head < len(order):
            u = order[head]
            head += 1
            order.extend(self.children(u))
        counts = [1] + [int(self.nchild[u]) for u in order]
        return Tree(np.asarray(counts), truncated_at=None if self.truncated_at is None
                    else self.truncated_at - int(self.level[v]) + 1)

    def __eq__(self, other) -> bool:
        return isinstance(other, Tree) and np.array_equal(self.nchild, other.nchild)

    def __hash__(self) -> int:
        return hash(self.nchild.tobytes())

    def __repr__(self) -> str:
        if self.size <= 20:
            return f"Tree({canonical_code(self).decode()})"
        return f"Tree(size={self.size}, height={height(self)})"

    # constructors -----------------------------------------------------
    @classmethod
    def from_code(cls, code: str | bytes) -> "Tree":
        return decode(code)

    @classmethod
    def path(cls, length: int) -> "Tree":
        if length < 1:
            raise ValueError("path needs at least one edge")
        return cls(np.array([1] * length + [0]))

    @classmethod
    def from_parents(cls, parents: Sequence[int]) -> "Tree":
        """Build from a parent list (``parents[0] = -1``) with children ordered by index."""
        kids: list[list[int]] = [[] for _ in parents]
        for v, p in enumerate(parents):
            if v:
                kids[p].append(v)
        return _from_children_lists(kids)


def _from_children_lists(kids: Sequence[Sequence[int]]) -> Tree:
    order = [0]
    head = 0
    while head < len(order):
        order.extend(kids[order[head]])
        head += 1
    return Tree(np.asarray([len(kids[v]) for v in order]))


def height(tree: Tree) -> int:
    """Maximal distance from the root."""
    return int(tree.level[-1])


def ball(tree: Tree, R: int) -> Tree:
    """Subtree spanned by the vertices within distance R of the root."""
    if R < 0:
        raise ValueError("R must be non-negative")
    if R == 0:
        raise ValueError("the radius-0 ball is a single vertex, not a tree in this store")
    lev = tree.level
    if R >= lev[-1]:
        return tree
    # breadth-first order: the ball is a prefix
    n = int(np.searchsorted(lev, R, side="right"))
    counts = tree.nchild[:n].copy()
    counts[lev[:n] == R] = 0
    return Tree(counts)


def profile(tree: Tree, R: int) -> int:
    """Number of vertices at distance exactly R from the root."""
    if R < 0:
        raise ValueError("R must be non-negative")
    return int(np.count_nonzero(tree.level == R))


def canonical_code(tree: Tree) -> bytes:
    """Balanced-parenthesis code of the non-root vertices in depth-first planar order."""
    out = bytearray()
    ptr = tree.child_ptr
    stack = [(1, False)]
    while stack:
        v, closing = stack.pop()
        if closing:
            out += b")"
            continue
        out += b"("
        stack.append((v, True))
        for c in range(int(ptr[v + 1]) - 1, int(ptr[v]) - 1, -1):
            stack.append((c, False))
    return bytes(out)


def decode(code: str | bytes) -> Tree:
    """Inverse of :func:`canonical_code`."""
    if isinstance(code, str):
        code = code.encode()
    kids: list[list[int]] = [[]]
    stack = [0]
    for ch in code:
        if ch == ord("("):
            kids.append([])
            kids[stack[-1]].append(len(kids) - 1)
            stack.append(len(kids) - 1)
        elif ch == ord(")"):
            if len(stack) == 1:
                raise ValueError("unbalanced code")
            stack.pop()
        else:
            raise ValueError(f"invalid character {chr(ch)!r}")
    if len(stack) != 1:
        raise ValueError("unbalanced code")
    if len(kids[0]) != 1:
        raise ValueError("code must describe a single root link")
    return _from_children_lists(kids)


def _dyck_words(pairs: int) -> Iterator[str]:
    if pairs == 0:
        yield ""
        return
    # first-return decomposition: (A)B
    for k in range(pairs):
        for a in _dyck_words(k):
            for b in _dyck_words(pairs - 1 - k):
                yield "(" + a + ")" + b


def enumerate_trees(N: int) -> list[Tree]:
    """All planar rooted trees with a degree-one root and N edges."""
    if N < 1:
        raise ValueError("N must be positive")
    if N > ENUMERATION_LIMIT:
        raise ValueError(f"N={N} exceeds enumeration limit {ENUMERATION_LIMIT}")
    return [decode("(" + w + ")") for w in _dyck_words(N - 1)]
