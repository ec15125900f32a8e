"""Brute-force ground truth for small trees.

Walk sums iterate the walk-weight vector step by step instead of using
any recursion, and fixed-size measures are built by enumerating every
tree.  Neither is fast; both are independent of the main code paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import sparse

from .ensemble import WeightSpec
from .trees import Tree, enumerate_trees

MAX_ORACLE_VERTICES = 1000
MAX_EXACT_N = 8
WALK_MODES = ("all_walks", "first_passage", "first_return")


@dataclass(frozen=True)
class WalkSumResult:
    """Truncated walk sum: the true value lies in ``[value, value + tail_bound]``."""

    value: float
    tail_bound: float
    t_max: int


def _adjacency(tree: Tree) -> sparse.csr_matrix:
    n = tree.n_vertices
    child = np.arange(1, n)
    par = tree.parent[1:]
    rows = np.concatenate([child, par])
    cols = np.concatenate([par, child])
    return sparse.csr_matrix((np.ones(2 * (n - 1)), (rows, cols)), shape=(n, n))


def default_t_max(x: float, source_degree: int = 1, tol: float = 1e-13) -> int:
    """Smallest walk length cutoff whose tail bound is below ``tol``."""
    if x >= 1.0:
        return 1
    s = math.sqrt(1.0 - x)
    t = 2.0 * math.log(tol * (1.0 - s) / source_degree) / math.log(1.0 - x) - 1.0
    return max(1, int(math.ceil(t)))


def _iterate(tree: Tree, x: float, source: int, t_max: int, kill_source: bool):
    """Yield ``(t, a_t)`` where ``a_t[v]`` sums walk weights of length t ending at v.

    A walk's weight is the product of inverse degrees of its intermediate
    vertices; the damping ``(1-x)^{t/2}`` is applied by the caller.
    """
    n = tree.n_vertices
    if n > MAX_ORACLE_VERTICES:
        raise ValueError(f"tree too large for the oracle ({n} > {MAX_ORACLE_VERTICES} vertices)")
    adj = _adjacency(tree)
    inv_deg = 1.0 / tree.degree
    a = np.zeros(n)
    a[source] = 1.0
    a = adj @ a  # the source's own degree is not counted
    for t in range(1, t_max + 1):
        yield t, a
        if kill_source:
            a = a.copy()
            a[source] = 0.0
        a = adj @ (a * inv_deg)


def walk_sum_q(tree: Tree, x: float, source: int = 0, target: int = 0, mode: str = "all_walks",
               t_max: int | None = None) -> WalkSumResult:
    """Walk generating function between two vertices, by explicit enumeration.

    ``all_walks`` sums every walk; ``first_passage`` keeps walks that
    never return to ``source``; ``first_return`` keeps walks that return
    to ``source`` exactly once, at the end.
    """
    if not (0.0 < x <= 1.0):
        raise ValueError(f"x={x} outside (0, 1]")
    if mode not in WALK_MODES:
        raise ValueError(f"mode must be one of {WALK_MODES}")
    if mode == "first_return" and target != source:
        raise ValueError("first_return needs target == source")
    if mode == "first_passage" and target == source:
        raise ValueError("first_passage needs target != source")
    sigma = int(tree.degree[source])
    if t_max is None:
        t_max = default_t_max(x, sigma)
    damp = math.sqrt(1.0 - x)
    # tree distance parity fixes which t can contribute
    depth = tree.level
    parity = int(depth[source] + depth[target]) % 2
    total = 1.0 if (mode == "all_walks" and source == target) else 0.0
    for t, a in _iterate(tree, x, source, t_max, kill_source=mode != "all_walks"):
        if t % 2 == parity and a[target]:
            total += damp ** t * a[target]
    tail = sigma * damp ** (t_max + 1) / (1.0 - damp) if x < 1.0 else 0.0
    return WalkSumResult(total, tail, t_max)


def walk_sum_vector(tree: Tree, x: float, t_max: int | None = None) -> tuple[np.ndarray, float]:
    """All-walk generating functions from the root to every vertex, plus the common tail bound."""
    if t_max is None:
        t_max = default_t_max(x)
    damp = math.sqrt(1.0 - x)
    total = np.zeros(tree.n_vertices)
    total[0] = 1.0
    for t, a in _iterate(tree, x, 0, t_max, kill_source=False):
        total += damp ** t * a
    tail = damp ** (t_max + 1) / (1.0 - damp) if x < 1.0 else 0.0
    return total, tail


def _weight_fraction(spec: WeightSpec, n: int) -> Fraction:
    return Fraction(spec.weight(n))


def tree_weight(spec: WeightSpec, tree: Tree) -> Fraction:
    """Product of ``w_{sigma}`` over the non-root vertices, exactly."""
    out = Fraction(1)
    for s in tree.degree[1:]:
        out *= _weight_fraction(spec, int(s))
        if out == 0:
            break
    return out


def exact_partition(spec: WeightSpec, N: int) -> Fraction:
    return sum((tree_weight(spec, t) for t in enumerate_trees(N)), Fraction(0))


def exact_nu_N(spec: WeightSpec, N: int) -> list[tuple[Tree, Fraction]]:
    """The fixed-size measure on trees with N edges, every tree listed with its probability."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > MAX_EXACT_N:
        raise ValueError(f"N={N} exceeds the enumeration guard {MAX_EXACT_N}")
    trees = enumerate_trees(N)
    weights = [tree_weight(spec, t) for t in trees]
    Z = sum(weights, Fraction(0))
    if Z == 0:
        raise ValueError(f"no trees with {N} edges carry positive weight")
    return [(t, w / Z) for t, w in zip(trees, weights) if w]
