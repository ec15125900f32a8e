"""Truncated power series: partition functions and ball-volume generating functions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import CriticalData, WeightSpec, eval_g


@dataclass(frozen=True, eq=False)
class TruncatedSeries:
    """``sum_k coeffs[k] * (u - center)**k`` modulo ``(u - center)**(K+1)``."""

    coeffs: np.ndarray
    center: float = 0.0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float)).copy()
        if c.ndim != 1 or len(c) == 0:
            raise ValueError("need at least one coefficient")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def _check(self, other: "TruncatedSeries") -> int:
        if other.center != self.center:
            raise ValueError("series expanded at different points")
        return min(self.degree, other.degree)

    def __add__(self, other: "TruncatedSeries") -> "TruncatedSeries":
        K = self._check(other)
        return TruncatedSeries(self.coeffs[:K + 1] + other.coeffs[:K + 1], self.center)

    def __mul__(self, other):
        if np.isscalar(other):
            return TruncatedSeries(self.coeffs * other, self.center)
        K = self._check(other)
        return TruncatedSeries(np.convolve(self.coeffs[:K + 1], other.coeffs[:K + 1])[:K + 1], self.center)

    __rmul__ = __mul__

    def compose(self, outer: Sequence[float]) -> "TruncatedSeries":
        """``sum_j outer[j] * (self - self(center))**j``.

        ``outer`` holds the Taylor coefficients of the outer function
        around the constant term of ``self``.
        """
        K = self.degree
        d = self.coeffs.copy()
        d[0] = 0.0
        out = np.zeros(K + 1)
        out[0] = outer[-1]
        for a in reversed(outer[:-1]):  # Horner
            out = np.convolve(out, d)[:K + 1]
            out[0] += a
        return TruncatedSeries(out, self.center)

    def reciprocal(self) -> "TruncatedSeries":
        c = self.coeffs
        if c[0] == 0:
            raise ZeroDivisionError("series has zero constant term")
        K = self.degree
        r = np.zeros(K + 1)
        r[0] = 1.0 / c[0]
        for k in range(1, K + 1):
            r[k] = -np.dot(c[1:k + 1], r[k - 1::-1]) / c[0]
        return TruncatedSeries(r, self.center)

    def exp(self) -> "TruncatedSeries":
        # E' = S' E  =>  k e_k = sum_j j s_j e_{k-j}
        c = self.coeffs
        K = self.degree
        e = np.zeros(K + 1)
        e[0] = math.exp(c[0])
        j = np.arange(1, K + 1)
        for k in range(1, K + 1):
            e[k] = np.dot(j[:k] * c[1:k + 1], e[k - 1::-1]) / k
        return TruncatedSeries(e, self.center)


# ---------------------------------------------------------------- partition functions
def _apply_g(spec: WeightSpec, y: TruncatedSeries) -> TruncatedSeries:
    if spec.family_tag == "uniform":
        return (TruncatedSeries(np.r_[1.0, np.zeros(y.degree)]) + y * -1.0).reciprocal()
    if spec.family_tag == "poisson":
        return y.exp()
    return y.compose(list(spec.weights))


def _scaled_partition(spec: WeightSpec, crit: CriticalData, N_max: int) -> np.ndarray:
    # Y(u) = Z(zeta0 u) solves Y = zeta0 u g(Y); coefficients Z_N zeta0^N stay O(N^-3/2).
    y = np.zeros(N_max + 1)
    for k in range(1, N_max + 1):
        # iteration k fixes the coefficient of u^k, so truncate at degree k
        gy = _apply_g(spec, TruncatedSeries(y[:k]))
        y[1:k + 1] = crit.zeta0 * gy.coeffs[:k]
    return y[1:]


def partition_coeffs(spec: WeightSpec, crit: CriticalData, N_max: int) -> np.ndarray:
    """``Z_1..Z_{N_max}``, the weighted counts of trees with N edges."""
    if N_max < 1:
        raise ValueError("N_max must be >= 1")
    y = _scaled_partition(spec, crit, N_max)
    n = np.arange(1, N_max + 1)
    return y * crit.zeta0 ** (-n.astype(float))


def lemma1_ratio(spec: WeightSpec, crit: CriticalData, N: int) -> float:
    """``Z_N zeta0^N N^{3/2}`` over its predicted asymptotic constant."""
    if (N - 1) % crit.divisor_d != 0:
        raise ValueError(f"Z_{N} vanishes for divisor {crit.divisor_d}")
    y = _scaled_partition(spec, crit, N)[-1]
    const = crit.divisor_d * math.sqrt(eval_g(spec, crit.z0) / (2 * math.pi * eval_g(spec, crit.z0, 2)))
    return float(y * N ** 1.5 / const)


# ---------------------------------------------------------------- offspring function
def _f_taylor_at_1(crit: CriticalData, order: int) -> np.ndarray:
    """Taylor coefficients ``f^{(j)}(1)/j!`` for ``j = 0..order``."""
    tag = crit.spec.family_tag
    z0, c = crit.z0, crit.zeta0 / crit.z0
    j = np.arange(order + 1)
    if tag == "uniform":
        # g^{(j)}(z)/j! = (1-z)^{-(j+1)}
        return c * z0 ** j / (1 - z0) ** (j + 1)
    if tag == "poisson":
        return c * z0 ** j * math.exp(z0) / np.array([math.factorial(k) for k in j], dtype=float)
    p = crit.offspring
    n = np.arange(len(p))
    from scipy.special import comb
    return np.array([np.sum(comb(n, k) * p) for k in j])


def _f_value(crit: CriticalData, z: float, deriv: int = 0) -> float:
    if crit.spec.family_tag is not None:
        from .ensemble import eval_f
        return eval_f(crit, z, deriv)
    poly = np.polynomial.Polynomial(crit.offspring)
    return float(poly.deriv(deriv)(z) if deriv else poly(z))


BALL_SERIES = ("f_R", "g_R", "k_n", "h_n")


def ball_series(crit: CriticalData, R: int, which: str, eval: str = "moments12") -> tuple[float, float]:
    """Ball-volume and generation-size generating functions.

    ``f_R`` is the law of ``|B_R|`` under the GW measure, ``g_R = f'(f_R)``
    that of a spine vertex's branch volume within distance R, ``k_n``
    the GW generation size at distance n and ``h_n = f'(k_n)``.

    ``eval="at0"`` returns ``(F(0), 1 - F(0))``; ``eval="moments12"``
    returns the first and second factorial moments ``(F'(1), F''(1))``.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if which not in BALL_SERIES:
        raise ValueError(f"which must be one of {BALL_SERIES}")
    outer = which in ("g_R", "h_n")
    if eval == "at0":
        v = 0.0  # f_R(0) = 0 since |B_R| >= 1; k_1(0) = 0
        if which in ("k_n", "h_n"):
            for _ in range(R - 1):
                v = _f_value(crit, v)
        val = _f_value(crit, v, 1) if outer else v
        return val, 1.0 - val
    if eval != "moments12":
        raise ValueError("eval must be 'at0' or 'moments12'")
    ft = _f_taylor_at_1(crit, 3)
    s = TruncatedSeries([1.0, 1.0, 0.0], center=1.0)  # z around z = 1
    for _ in range(R - 1):
        inner = s.compose(ft[:3])
        s = inner * TruncatedSeries([1.0, 1.0, 0.0], center=1.0) if which in ("f_R", "g_R") else inner
    if outer:
        # f'(1 + d) = sum_j (j+1) ft[j+1] d^j
        s = s.compose([(k + 1) * ft[k + 1] for k in range(3)])
    first, second = float(s.coeffs[1]), float(2 * s.coeffs[2])
    if not (math.isfinite(first) and math.isfinite(second)):
        raise OverflowError("moments exceed floating-point range")
    return first, second


def nu_ball_mean(crit: CriticalData, R: int) -> float:
    """Mean edge count of the radius-R ball of an infinite-spine tree."""
    if R < 1:
        raise ValueError("R must be >= 1")
    return 0.5 * crit.fpp1 * R * (R - 1) + R


# ---------------------------------------------------------------- exact ball-volume laws
def _apply_offspring(crit: CriticalData, s: TruncatedSeries, deriv: int = 0) -> TruncatedSeries:
    """``f(s)`` or ``f'(s)`` for a series ``s`` expanded at 0."""
    tag = crit.spec.family_tag
    if tag == "uniform":
        # f(s) = 1/(2 - s), f'(s) = f(s)^2
        r = (TruncatedSeries(np.r_[2.0, np.zeros(s.degree)]) + s * -1.0).reciprocal()
        return r * r if deriv else r
    if tag == "poisson":
        # f(s) = f'(s) = exp(s - 1)
        return (s + TruncatedSeries(np.r_[-1.0, np.zeros(s.degree)])).exp()
    p = crit.offspring
    if deriv:
        p = np.arange(1, len(p)) * p[1:]
    base = s.coeffs[0]
    if base != 0.0:
        raise ValueError("series must vanish at 0")
    return s.compose(list(p) if len(p) else [0.0])


def ball_volume_pmf(crit: CriticalData, R: int, K: int) -> np.ndarray:
    """Law of the edge count of the radius-R ball of an infinite-spine tree.

    Entry k of the result is the probability that the ball has k edges,
    for k = 0..K.  Built from the spine: R spine edges plus, at spine
    vertex s_i, the branches' balls of radius R - i.
    """
    if R < 1 or K < 0:
        raise ValueError("need R >= 1 and K >= 0")
    z = TruncatedSeries(np.r_[0.0, 1.0, np.zeros(max(K - 1, 0))][:K + 1])
    f_r = z  # f_1
    out = TruncatedSeries(np.r_[1.0, np.zeros(K)])
    for r in range(1, R):
        out = out * _apply_offspring(crit, f_r, deriv=1)
        f_r = z * _apply_offspring(crit, f_r)
    pmf = np.zeros(K + 1)
    if R <= K:
        pmf[R:] = out.coeffs[:K + 1 - R]
    return np.maximum(pmf, 0.0)
