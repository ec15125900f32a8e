"""Random-walk generating functions on trees.

``P`` is the first-return generating function at the root, ``Q = 1/(1-P)``
the return generating function and ``G`` the generating function of walks
from the root to a vertex that never come back to the root.  A walk of
length t is weighted by ``(1-x)**(t/2)`` times the product of inverse
degrees of every vertex it leaves.

On a finite tree everything follows from one post-order sweep of

    P_v = (1 - x) / (c_v + 1 - sum_{children u} P_u)

where ``P_v`` belongs to the subtree made of the link above ``v`` and all
descendants of ``v``.  On a truncated infinite tree the same sweep run
with low and high substitutions at the frontier brackets the true value,
because ``P_v`` is increasing in every ``P_u``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ensemble import DomainError
from .samplers import SpineSection
from .trees import Tree

CONTINUATIONS = ("half_line", "delete")


@dataclass(frozen=True)
class BoundedGF:
    """Certified bracket ``lower <= P <= upper`` on a first-return value."""

    lower: float
    upper: float
    depth_used: int

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError(f"invalid bracket [{self.lower}, {self.upper}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def q(self) -> tuple[float, float]:
        """Bracket on ``Q = 1/(1-P)``."""
        return q_from_p(self.lower), q_from_p(self.upper)


def _check_x(x: float) -> None:
    if not (0.0 < x <= 1.0):
        raise DomainError(f"x={x} outside (0, 1]")


def q_from_p(p: float) -> float:
    if p >= 1.0:
        raise ZeroDivisionError("P >= 1: return generating function diverges")
    if p < 0.0:
        raise ValueError("P must be non-negative")
    return 1.0 / (1.0 - p)


# ---------------------------------------------------------------- finite trees
def p_subtrees(tree: Tree, x: float) -> np.ndarray:
    """``P`` of the subtree hanging below each vertex (index 0 unused)."""
    _check_x(x)
    if x == 1.0:
        return np.zeros(tree.n_vertices)
    return K.finite_p(tree.nchild, tree.parent, x)


def p_finite(tree: Tree, x: float) -> float:
    """Exact first-return generating function of a finite tree at its root."""
    return float(p_subtrees(tree, x)[1])


def p_tree_bounds(tree: Tree, x: float) -> BoundedGF:
    """Bracket on P for a depth-capped tree (exact when not truncated)."""
    _check_x(x)
    if tree.truncated_at is None or x == 1.0:
        p = p_finite(tree, x)
        return BoundedGF(p, p, 0 if tree.truncated_at is None else tree.truncated_at)
    n = tree.n_vertices
    lo, hi = K.sweep(tree.nchild, tree.parent, tree.level, np.zeros(n, np.bool_), np.zeros(n, np.int64),
                     n, tree.truncated_at, -1, x, 1.0, 1.0 - x)
    return BoundedGF(float(lo[1]), float(hi[1]), tree.truncated_at)


def green_finite(tree: Tree, x: float, target: int) -> float:
    """Walks from the root to ``target`` that never revisit the root."""
    _check_x(x)
    if target == 0:
        return 1.0
    p = p_subtrees(tree, x)
    par = tree.parent
    v, n, prod = target, 0, 1.0
    while v != 0:
        prod *= p[v]
        n += 1
        v = int(par[v])
    if x == 1.0:
        return 0.0
    return float(tree.degree[target] * (1.0 - x) ** (-n / 2) * prod)


# ---------------------------------------------------------------- closed forms
def r_l_closed(x: float, L: int) -> float:
    """First return on a segment of L vertices whose far end is absorbing."""
    _check_x(x)
    if L < 1:
        raise ValueError("L must be >= 1")
    s = math.sqrt(x)
    a, b = 1.0 + s, 1.0 - s
    # divide through by a^L to stay finite for long segments
    rho = b / a
    return (1.0 - x) * (1.0 - rho ** (L - 1)) / (a * (1.0 - rho ** L))


def chain_green_closed(x: float, L: int) -> float:
    """First passage across a chain of L links."""
    _check_x(x)
    if L < 0:
        raise ValueError("L must be >= 0")
    s = math.sqrt(x)
    rho = (1.0 - s) / (1.0 + s)
    return 2.0 * math.sqrt((1.0 - x) / (1.0 + s) ** 2) ** L / (1.0 + rho ** L)


def half_line_p(x: float) -> float:
    """First return at the end of an infinite bare half-line: ``1 - sqrt(x)``."""
    _check_x(x)
    return 1.0 - math.sqrt(x)


def half_line_mass(x: float) -> float:
    """Exponential decay rate of the root-to-``s_n`` Green function on a bare half-line."""
    _check_x(x)
    s = math.sqrt(x)
    return 0.5 * math.log((1.0 + s) / (1.0 - s)) if x < 1 else math.inf


# ---------------------------------------------------------------- spine trees
def _spine_hi(x: float, continuation: str) -> float:
    if continuation == "half_line":
        # an infinite spine with branches returns less readily than a bare one
        return 1.0 - math.sqrt(x)
    if continuation == "delete":
        return 1.0
    raise ValueError(f"continuation must be one of {CONTINUATIONS}")


def spine_sweep(spine: SpineSection, x: float, L: int | None = None, R: int | None = None,
                continuation: str = "half_line") -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex lower/upper ``P`` arrays for a spine section.

    ``L`` restricts to the first L spine vertices and their branches,
    ``R`` to the ball of radius R (ball samples only).  Vertices outside
    the restriction are treated as unknown.
    """
    _check_x(x)
    max_level = -1
    max_spine = -1
    if spine.radius is not None:
        R = spine.radius if R is None else R
        if R > spine.radius or R < 1:
            raise ValueError(f"R={R} outside the generated ball (radius {spine.radius})")
        max_level = R
        if L is not None:
            raise ValueError("ball samples are restricted by R, not L")
    else:
        if R is not None:
            raise ValueError("R applies to ball samples only")
        L = spine.length if L is None else L
        if not 1 <= L <= spine.length:
            raise ValueError(f"L={L} outside 1..{spine.length}")
        max_spine = L
    n = spine.n_vertices
    return K.sweep(spine.nchild, spine.parent, spine.level, spine.spine, spine.anc, n,
                   max_level, max_spine, x, _spine_hi(x, continuation), 1.0 - x)


def p_spine_bounds(spine: SpineSection, x: float, L: int | None = None, R: int | None = None,
                   continuation: str = "half_line") -> BoundedGF:
    """Certified bracket on the root first-return value of an infinite-spine tree.

    The lower value substitutes 0 for every unknown subtree.  The upper
    value substitutes ``1 - x`` for unexpanded branch vertices (dropping
    their descendants) and, for the spine beyond the known part, either
    ``1 - sqrt(x)`` (``continuation="half_line"``, the value of a bare
    half-line, which bounds any spine tree from above) or 1
    (``"delete"``, dropping the continuation altogether).
    """
    if x == 1.0:
        return BoundedGF(0.0, 0.0, 0)
    lo, hi = spine_sweep(spine, x, L, R, continuation)
    depth = spine.radius if spine.radius is not None and R is None else (R if R is not None else
                                                                           (L or spine.length))
    return BoundedGF(float(lo[1]), float(min(hi[1], 1.0)), int(depth))


def green_spine_bounds(spine: SpineSection, x: float, n_max: int, L: int | None = None,
                       R: int | None = None, continuation: str = "half_line") -> tuple[np.ndarray, np.ndarray]:
    """Brackets on ``G(x; n)`` from the root to spine vertex ``s_n``, n = 1..n_max.

    Uses ``G = sigma_{s_n} (1-x)^{-n/2} prod_{j<=n} P_{s_j}`` with the
    bracketed subtree values ``P_{s_j}``.
    """
    last = spine.length if spine.radius is None else spine.radius - 1
    if n_max > last:
        raise ValueError(f"n_max={n_max} beyond the {last} expanded spine vertices")
    lo, hi = spine_sweep(spine, x, L, R, continuation)
    idx = spine.spine_index[1:n_max + 1]
    sigma = spine.sigma[:n_max].astype(float)
    half = -0.5 * np.log1p(-x) * np.arange(1, n_max + 1) if x < 1 else None
    with np.errstate(divide="ignore"):
        llo = np.cumsum(np.log(lo[idx]))
        lhi = np.cumsum(np.log(hi[idx]))
    if half is None:
        z = np.zeros(n_max)
        return z, z
    return sigma * np.exp(llo + half), sigma * np.exp(lhi + half)


def green_to_spine_vertex(spine: SpineSection, x: float, n: int, rel_tol: float = 1e-8,
                          continuation: str = "half_line") -> float:
    """``G(x; n)`` to spine vertex ``s_n``; error if the bracket is wider than ``rel_tol``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = green_spine_bounds(spine, x, n, continuation=continuation)
    a, b = float(lo[-1]), float(hi[-1])
    if b - a > rel_tol * max(b, 1e-300):
        raise ValueError(f"spine too short for n={n}: bracket [{a}, {b}]")
    return 0.5 * (a + b)


def q_upper_bound_check(obj, x: float, R: int) -> bool:
    """Check ``Q(x) <= R + 2/(x |B_R|)`` and ``Q(x) <= x^{-1/2}`` for a tree or spine."""
    tol = 1 + 1e-12
    if isinstance(obj, Tree):
        from .trees import ball
        q = q_from_p(p_tree_bounds(obj, x).upper)
        return q <= (R + 2.0 / (x * ball(obj, R).size)) * tol
    b = p_spine_bounds(obj, x)
    q = q_from_p(b.upper)
    vol = obj.ball_volume(R)
    return q <= (R + 2.0 / (x * vol)) * tol and q <= x ** -0.5 * tol
