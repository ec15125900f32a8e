"""Random generation of critical GW trees, fixed-size trees and spine trees."""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import _kernels as K
from .ensemble import CriticalData
from .series import partition_coeffs
from .trees import Tree

DEFAULT_SIZE_CAP = 10_000_000


class TreeTooLarge(RuntimeError):
    """A sample exceeded its size cap (a censoring event)."""

    def __init__(self, size_cap: int):
        super().__init__(f"tree too large (size cap {size_cap})")
        self.size_cap = size_cap


class AttemptsExhausted(RuntimeError):
    def __init__(self, attempts: int):
        super().__init__(f"no accepted sample after {attempts} attempts")
        self.attempts = attempts


# ---------------------------------------------------------------- streams
@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id...)``.

    The stream is a Philox generator seeded from ``SeedSequence(seed,
    spawn_key=ids)``; :meth:`uniforms` always returns a prefix of one fixed
    sequence, however often it is extended.
    """

    seed: int
    ids: tuple[int, ...] = ()
    _buf: list = field(default_factory=list, repr=False, compare=False)

    def substream(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.ids + tuple(int(i) for i in ids))

    @cached_property
    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.ids)
        return np.random.Generator(np.random.Philox(ss))

    def uniforms(self, n: int) -> np.ndarray:
        have = sum(len(b) for b in self._buf)
        if have < n:
            self._buf.append(self.generator.random(n - have))
        if len(self._buf) > 1:
            merged = np.concatenate(self._buf)
            self._buf.clear()
            self._buf.append(merged)
        return self._buf[0][:n]


# ---------------------------------------------------------------- tables
def alias_table(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table for the distribution ``p`` (index-valued)."""
    p = np.asarray(p, dtype=float)
    k = len(p)
    scaled = p * k / p.sum()
    prob = np.zeros(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        (small if scaled[g] < 1.0 else large).append(g)
    for i in large + small:
        prob[i] = 1.0
    return prob, alias


@dataclass(frozen=True)
class _Tables:
    off_prob: np.ndarray
    off_alias: np.ndarray
    sb_prob: np.ndarray
    sb_alias: np.ndarray


_TABLES: "weakref.WeakKeyDictionary[CriticalData, _Tables]" = weakref.WeakKeyDictionary()


def tables(crit: CriticalData) -> _Tables:
    """Alias tables for the offspring law and its size-biased version ``c p_c``."""
    t = _TABLES.get(crit)
    if t is None:
        p = crit.offspring
        sb = np.arange(len(p)) * p
        t = _Tables(*alias_table(p), *alias_table(sb))
        _TABLES[crit] = t
    return t


def _grow(crit, rng, spine_root, max_level, max_spine, branch_cap, size_cap, guess):
    t = tables(crit)
    n = max(int(guess), 256)
    while True:
        res = K.grow(rng.uniforms(n), t.off_prob, t.off_alias, t.sb_prob, t.sb_alias,
                     spine_root, max_level, max_spine, branch_cap, size_cap)
        status = res[0]
        if status == K.OK:
            return res
        if status == K.TOO_LARGE:
            raise TreeTooLarge(size_cap)
        n *= 2


# ---------------------------------------------------------------- GW trees
def sample_gw(crit: CriticalData, rng: RngStream, depth_cap: int | None = None,
              size_cap: int = DEFAULT_SIZE_CAP) -> Tree:
    """Critical Galton-Watson tree (root of degree one).

    With ``depth_cap`` the result is exactly the ball of that radius and is
    marked ``truncated_at=depth_cap`` if any vertex there was left
    unexpanded.  Raises :class:`TreeTooLarge` past ``size_cap`` edges.
    """
    if size_cap < 1:
        raise ValueError("size_cap must be at least 1")
    cap = -1 if depth_cap is None else int(depth_cap)
    if depth_cap is not None and depth_cap < 1:
        raise ValueError("depth_cap must be >= 1")
    guess = 4 * (cap if cap > 0 else 64)
    res = _grow(crit, rng, False, cap, -1, -1, size_cap, guess)
    nchild = res[3].copy()
    front = nchild < 0
    nchild[front] = 0
    return Tree(nchild, truncated_at=cap if front.any() else None)


def sample_nu_N(crit: CriticalData, N: int, rng: RngStream, max_attempts: int = 10_000_000,
                with_attempts: bool = False):
    """Exact sample from the fixed-size ensemble on trees with N edges (rejection from GW).

    A GW draw has N edges with probability ``Z_N zeta0^N / Z0``.  With
    ``with_attempts`` the number of draws used is returned as well.
    """
    if partition_coeffs(crit.spec, crit, N)[-1] == 0.0:
        raise ValueError(f"no trees of size {N} for this ensemble (Z_N = 0)")
    t = tables(crit)
    n = 64 * N
    while True:
        status, attempts, used, nchild = K.nu_n_rejection(rng.uniforms(n), t.off_prob, t.off_alias,
                                                          N, max_attempts)
        if status == K.OK:
            tree = Tree(nchild.copy())
            return (tree, int(attempts)) if with_attempts else tree
        if status == K.TOO_LARGE:
            raise AttemptsExhausted(attempts)
        n *= 2


def sample_pairs(crit: CriticalData, n: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """``n`` independent ``(k, l)`` branch-count pairs at spine vertices."""
    t = tables(crit)
    u = rng.uniforms(2 * n).reshape(n, 2)
    kk = len(t.sb_prob)
    s = u[:, 0] * kk
    i = np.minimum(s.astype(np.int64), kk - 1)
    c = np.where(s - i < t.sb_prob[i], i, t.sb_alias[i])
    k = np.minimum((u[:, 1] * c).astype(np.int64), c - 1)
    return k, c - 1 - k


# ---------------------------------------------------------------- spine trees
@dataclass(frozen=True, eq=False)
class SpineSection:
    """Finite part of an infinite spine tree, stored breadth first.

    Spine vertices ``s_1..s_length`` are expanded.  The vertex after the
    last expanded spine vertex and every branch vertex left unexpanded
    (``nchild == -1``) form the frontier.  ``radius`` is set for ball
    samples, in which the frontier is the sphere of that radius;
    otherwise ``branch_depth_cap`` bounds the depth of every branch
    (``None`` means branches were generated completely).
    """

    length: int
    branch_depth_cap: int | None
    nchild: np.ndarray = field(repr=False)
    parent: np.ndarray = field(repr=False)
    level: np.ndarray = field(repr=False)
    spine: np.ndarray = field(repr=False)
    anc: np.ndarray = field(repr=False)
    radius: int | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.nchild)

    @cached_property
    def spine_index(self) -> np.ndarray:
        """Vertex index of ``s_j`` at position j (position 0 is the root)."""
        idx = np.flatnonzero(self.spine)
        return np.concatenate(([0], idx))

    @cached_property
    def level_ptr(self) -> np.ndarray:
        return np.searchsorted(self.level, np.arange(int(self.level[-1]) + 2))

    @cached_property
    def _child_ptr(self) -> np.ndarray:
        counts = np.maximum(self.nchild, 0)
        return np.concatenate(([1], 1 + np.cumsum(counts)))

    def _pair(self, i: int) -> tuple[int, int, int]:
        if not 1 <= i <= self.length:
            raise IndexError(i)
        v = int(self.spine_index[i])
        start = int(self._child_ptr[v])
        k = int(self.spine_index[i + 1]) - start
        return v, k, int(self.nchild[v]) - 1 - k

    @cached_property
    def k(self) -> np.ndarray:
        return np.array([self._pair(i)[1] for i in range(1, self.length + 1)], dtype=np.int64)

    @cached_property
    def l(self) -> np.ndarray:
        return np.array([self._pair(i)[2] for i in range(1, self.length + 1)], dtype=np.int64)

    @property
    def sigma(self) -> np.ndarray:
        """Degrees of ``s_1..s_length``."""
        return self.k + self.l + 2

    def _branch(self, w: int) -> Tree:
        order = [w]
        head = 0
        ptr = self._child_ptr
        while head < len(order):
            u = order[head]
            head += 1
            if self.nchild[u] > 0:
                order.extend(range(int(ptr[u]), int(ptr[u + 1])))
        counts = np.array([1] + [max(int(self.nchild[u]), 0) for u in order])
        truncated = any(self.nchild[u] < 0 for u in order)
        depth = None
        if truncated:
            depth = int(max(self.level[u] for u in order) - self.level[w] + 1)
        return Tree(counts, truncated_at=depth)

    def left_branches(self, i: int) -> list[Tree]:
        v, k, _ = self._pair(i)
        start = int(self._child_ptr[v])
        return [self._branch(w) for w in range(start, start + k)]

    def right_branches(self, i: int) -> list[Tree]:
        v, k, l = self._pair(i)
        start = int(self._child_ptr[v]) + k + 1
        return [self._branch(w) for w in range(start, start + l)]

    def ball_volume(self, R: int) -> int:
        """``|B_R|`` in edges; requires R within the generated ball."""
        if self.radius is not None and R > self.radius:
            raise ValueError("radius beyond the generated ball")
        return int(self.level_ptr[min(R + 1, len(self.level_ptr) - 1)]) - 1

    def sphere(self, R: int) -> int:
        """``D_R``: number of vertices at distance R."""
        if self.radius is not None and R > self.radius:
            raise ValueError("radius beyond the generated ball")
        if R + 1 >= len(self.level_ptr):
            return 0
        return int(self.level_ptr[R + 1] - self.level_ptr[R])

    def ball_tree(self, R: int) -> Tree:
        """``B_R`` as a planar :class:`Tree`."""
        if self.radius is not None and R > self.radius:
            raise ValueError("radius beyond the generated ball")
        n = int(self.level_ptr[R + 1])
        counts = np.maximum(self.nchild[:n], 0).copy()
        counts[self.level[:n] == R] = 0
        return Tree(counts)

    def realization(self) -> tuple[Tree, np.ndarray]:
        """Finite tree left after deleting the unexpanded spine vertex.

        Unexpanded branch vertices become leaves.  Also returns the new
        indices of ``s_0..s_last`` for the expanded spine vertices.
        """
        last = int(self.spine_index[-1])
        drop = last if self.nchild[last] < 0 else -1
        keep = np.ones(self.n_vertices, dtype=bool)
        counts = np.maximum(self.nchild, 0).copy()
        if drop >= 0:
            keep[drop] = False
            counts[self.parent[drop]] -= 1
        new_index = np.cumsum(keep) - 1
        spine_idx = self.spine_index if drop < 0 else self.spine_index[:-1]
        return Tree(counts[keep]), new_index[spine_idx]


def _section(res, length, cap, radius) -> SpineSection:
    _, n, _, nchild, parent, level, spine, anc, _ = res
    return SpineSection(length=length, branch_depth_cap=cap, nchild=nchild.copy(),
                        parent=parent.copy(), level=level.copy(), spine=spine.copy(),
                        anc=anc.copy(), radius=radius)


def sample_spine(crit: CriticalData, L: int, branch_depth_cap: int | None, rng: RngStream,
                 size_cap: int = DEFAULT_SIZE_CAP) -> SpineSection:
    """First L spine vertices of an infinite-spine tree with their branches.

    Each branch is grown to ``branch_depth_cap`` (or completely when it
    is ``None``, subject to ``size_cap``).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    if branch_depth_cap is not None and branch_depth_cap < 0:
        raise ValueError("branch_depth_cap must be >= 0")
    cap = -1 if branch_depth_cap is None else int(branch_depth_cap)
    width = cap if cap >= 0 else 64
    guess = 2 * L * (1 + crit.mean_branches * max(width, 1)) + 64
    res = _grow(crit, rng, True, -1, L, cap, size_cap, guess)
    return _section(res, L, branch_depth_cap, None)


def sample_spine_ball(crit: CriticalData, R: int, rng: RngStream,
                      size_cap: int = DEFAULT_SIZE_CAP) -> SpineSection:
    """The ball ``B_R`` of an infinite-spine tree, grown breadth first.

    Balls of different radii drawn from the same stream are nested.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    guess = 2 * (0.5 * crit.mean_branches * R * R + 2 * R) + 64
    res = _grow(crit, rng, True, R, -1, -1, size_cap, guess)
    return _section(res, R - 1, None, R)


# ---------------------------------------------------------------- spine/GW identity
def _mean_se(v: np.ndarray) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(len(v)))


def lemma4_check(crit: CriticalData, R: int, u: Callable[[Tree], float], n_samples: int,
                 rng: RngStream) -> tuple[tuple[float, float], tuple[float, float]]:
    """Estimate both sides of the spine/GW integration identity.

    Returns ``((nu_mean, nu_se), (mu_mean, mu_se))``: the mean of ``u(B_R)``
    over spine trees and the mean of ``u(B_R) D_R`` over GW trees.
    """
    nu_side = np.empty(n_samples)
    mu_side = np.empty(n_samples)
    nu_rng = rng.substream(0)
    mu_rng = rng.substream(1)
    for i in range(n_samples):
        sec = sample_spine_ball(crit, R, nu_rng.substream(i))
        nu_side[i] = u(sec.ball_tree(R))
        t = sample_gw(crit, mu_rng.substream(i), depth_cap=R)
        d = int(np.count_nonzero(t.level == R))
        mu_side[i] = u(t) * d if d else 0.0
    return _mean_se(nu_side), _mean_se(mu_side)
