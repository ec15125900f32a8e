"""Branching weights, criticality constants and the offspring law.

A weight family ``w_1, w_2, ...`` defines the generating function
``g(z) = sum_n w_n z**(n-1)``.  Solving ``z g'(z) = g(z)`` gives ``Z0``;
``zeta0 = Z0 / g(Z0)`` and the critical Galton-Watson offspring law is
``p_n = zeta0 * w_{n+1} * Z0**(n-1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq


class DomainError(ValueError):
    """Argument outside the domain of a generating function."""


class GenericityError(ValueError):
    """Weights do not define a generic ensemble."""


# Closed forms: tag -> (w_n, [g, g', g''], rho, divisor)
def _uniform_w(n: int) -> float:
    return 1.0


def _poisson_w(n: int) -> float:
    return 1.0 / math.factorial(n - 1)


_CLOSED_FORMS: dict[str, tuple[Callable[[int], float], tuple[Callable[[float], float], ...], float, int]] = {
    "uniform": (
        _uniform_w,
        (
            lambda z: 1.0 / (1.0 - z),
            lambda z: 1.0 / (1.0 - z) ** 2,
            lambda z: 2.0 / (1.0 - z) ** 3,
        ),
        1.0,
        1,
    ),
    "poisson": (
        _poisson_w,
        (math.exp, math.exp, math.exp),
        math.inf,
        1,
    ),
}

DEFAULT_NMAX = 200


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Non-negative branching weights ``w_1..w_nmax``.

    ``family_tag`` names a family with a closed-form ``g`` whose weights
    extend beyond the stored list (``weights`` is then the evaluation
    cutoff used for tables).  Untagged specs are finite polynomials.
    """

    weights: tuple[float, ...]
    family_tag: str | None = None
    rho: float = math.inf

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        object.__setattr__(self, "weights", w)
        if self.family_tag is not None and self.family_tag not in _CLOSED_FORMS:
            raise ValueError(f"unknown family tag {self.family_tag!r}")
        if not w:
            raise ValueError("empty weight list")
        if any(v < 0 or not math.isfinite(v) for v in w):
            raise ValueError("weights must be finite and non-negative")
        if w[0] <= 0:
            raise ValueError("w_1 must be positive")
        if not any(v > 0 for v in w[2:]):
            raise ValueError("need w_n > 0 for some n >= 3")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def nmax(self) -> int:
        return len(self.weights)

    def weight(self, n: int) -> float:
        """``w_n`` for any ``n >= 1`` (zero past the list for finite specs)."""
        if n < 1:
            raise IndexError(n)
        if self.family_tag is not None:
            return _CLOSED_FORMS[self.family_tag][0](n)
        return self.weights[n - 1] if n <= self.nmax else 0.0

    @property
    def finite(self) -> bool:
        return self.family_tag is None


def uniform_family(nmax: int = DEFAULT_NMAX) -> WeightSpec:
    """``w_n = 1`` for all n: ``g(z) = 1/(1-z)``, ``rho = 1``."""
    return WeightSpec(tuple([1.0] * nmax), family_tag="uniform", rho=1.0)


def poisson_family(nmax: int = 60) -> WeightSpec:
    """``w_n = 1/(n-1)!``: ``g(z) = exp(z)``; offspring law is Poisson(1)."""
    return WeightSpec(tuple(_poisson_w(n) for n in range(1, nmax + 1)), family_tag="poisson")


def binary_family() -> WeightSpec:
    """``w_1 = w_3 = 1``: every internal vertex has two children."""
    return WeightSpec((1.0, 0.0, 1.0))


def motzkin_family() -> WeightSpec:
    """``w_1 = w_2 = w_3 = 1``: unary-binary trees."""
    return WeightSpec((1.0, 1.0, 1.0))


def explicit_weights(weights: Sequence[float]) -> WeightSpec:
    return WeightSpec(tuple(weights))


FAMILIES: dict[str, Callable[..., WeightSpec]] = {
    "uniform": uniform_family,
    "binary": binary_family,
    "poisson": poisson_family,
    "motzkin": motzkin_family,
}


def eval_g(spec: WeightSpec, z: float, deriv: int = 0) -> float:
    """``g(z)``, ``g'(z)`` or ``g''(z)``."""
    if deriv not in (0, 1, 2):
        raise ValueError("deriv must be 0, 1 or 2")
    if z < 0:
        raise DomainError(f"z={z} < 0")
    if z >= spec.rho:
        raise DomainError(f"z={z} outside radius of convergence {spec.rho}")
    if spec.family_tag is not None:
        return float(_CLOSED_FORMS[spec.family_tag][1][deriv](z))
    # g(z) = sum_n w_n z^(n-1); coefficients ascending in z
    poly = np.polynomial.Polynomial(np.asarray(spec.weights))
    if deriv:
        poly = poly.deriv(deriv)
    return float(poly(z))


@dataclass(frozen=True, eq=False)
class CriticalData:
    """Criticality constants of a generic ensemble."""

    spec: WeightSpec
    z0: float
    zeta0: float
    fpp1: float
    offspring: np.ndarray = field(repr=False)
    divisor_d: int = 1
    tail_mass_tol: float = 1e-12
    offspring_cut: int = 0

    @property
    def mean_branches(self) -> float:
        """Expected number of finite branches at a spine vertex, ``f''(1)``."""
        n = np.arange(len(self.offspring))
        return float(np.sum(n * (n - 1) * self.offspring))


def _divisor(spec: WeightSpec) -> int:
    if spec.family_tag is not None:
        return _CLOSED_FORMS[spec.family_tag][3]
    support = [n for n in range(1, spec.nmax) if spec.weights[n] != 0]
    return reduce(math.gcd, support)


def _offspring_table(spec: WeightSpec, z0: float, zeta0: float, tol: float) -> tuple[np.ndarray, int]:
    # p_n = zeta0 w_{n+1} Z0^(n-1); cut where both the mass tail and the
    # mean tail are below tol/4, then renormalise.
    probs: list[float] = []
    mass = mean = 0.0
    n = 0
    limit = spec.nmax - 1 if spec.finite else 100_000
    while n <= limit:
        p = zeta0 * spec.weight(n + 1) * z0 ** (n - 1)
        probs.append(p)
        mass += p
        mean += n * p
        n += 1
        if not spec.finite and 1.0 - mass < tol / 4 and 1.0 - mean < tol / 4:
            break
    table = np.asarray(probs)
    while len(table) > 1 and table[-1] == 0.0:
        table = table[:-1]
    table = table / table.sum()
    return table, len(table) - 1


def solve_criticality(spec: WeightSpec, tol: float = 1e-13, tail_mass_tol: float = 1e-12) -> CriticalData:
    """Solve ``Z0 g'(Z0) = g(Z0)`` and build the offspring law."""
    if tol <= 0:
        raise ValueError("tol must be positive")

    def h(z: float) -> float:
        return z * eval_g(spec, z, 1) - eval_g(spec, z, 0)

    lo = 0.0
    if math.isinf(spec.rho):
        hi = 1.0
        while h(hi) <= 0:
            hi *= 2.0
            if hi > 1e150:
                raise GenericityError("non-generic or invalid weights: no sign change")
    else:
        hi = spec.rho * (1.0 - 1e-9)
        if h(hi) <= 0:
            raise GenericityError("non-generic or invalid weights: no sign change in (0, rho)")
    z0 = brentq(h, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    # Newton polish: h'(z) = z g''(z)
    for _ in range(3):
        d = z0 * eval_g(spec, z0, 2)
        if d <= 0:
            break
        step = h(z0) / d
        if abs(step) < tol * z0:
            break
        z0 -= step
    if math.isfinite(spec.rho) and spec.rho - z0 <= tol * spec.rho:
        raise GenericityError(f"Z0={z0} reaches rho={spec.rho}")
    zeta0 = z0 / eval_g(spec, z0, 0)
    fpp1 = zeta0 * z0 * eval_g(spec, z0, 2)
    offspring, cut = _offspring_table(spec, z0, zeta0, tail_mass_tol)
    return CriticalData(
        spec=spec,
        z0=z0,
        zeta0=zeta0,
        fpp1=fpp1,
        offspring=offspring,
        divisor_d=_divisor(spec),
        tail_mass_tol=tail_mass_tol,
        offspring_cut=cut,
    )


def half_line() -> CriticalData:
    """Degenerate ensemble whose spine carries no branches (``p_1 = 1``).

    Not a valid weight family; used as an analytic control for the
    spine estimators.
    """
    spec = WeightSpec((1.0, 1.0, 1.0))  # placeholder, never sampled from
    return CriticalData(spec=spec, z0=1.0, zeta0=1.0, fpp1=0.0,
                        offspring=np.array([0.0, 1.0]), divisor_d=1,
                        tail_mass_tol=0.0, offspring_cut=1)


def eval_f(crit: CriticalData, z: float, deriv: int = 0) -> float:
    """Offspring generating function ``f(z) = zeta0/Z0 * g(Z0 z)`` and derivatives."""
    if z < 0:
        raise DomainError(f"z={z} < 0")
    zz = crit.z0 * z
    if zz >= crit.spec.rho:
        raise DomainError(f"Z0*z={zz} outside radius of convergence")
    return crit.zeta0 / crit.z0 * crit.z0 ** deriv * eval_g(crit.spec, zz, deriv)


def branch_pair_prob(crit: CriticalData, k: int, l: int) -> float:
    """Probability ``phi(k, l)`` that a spine vertex has k left and l right branches."""
    if k < 0 or l < 0:
        raise IndexError("k and l must be non-negative")
    m = k + l
    return crit.zeta0 * crit.spec.weight(m + 2) * crit.z0 ** m


def measure_ball(crit: CriticalData, tau0, R: int) -> float:
    """Limit probability ``nu(B_R = tau0)`` for a tree ``tau0`` of height R.

    Equals ``M W Z0^(M-1) zeta0^(|tau0|-M)`` with M the number of vertices
    at distance R and W the weight product over vertices at distance
    1..R-1.
    """
    from .trees import height, profile

    if height(tau0) != R:
        raise ValueError(f"tree has height {height(tau0)}, expected {R}")
    M = profile(tau0, R)
    deg = tau0.nchild + 1
    inner = (tau0.level >= 1) & (tau0.level <= R - 1)
    W = 1.0
    for s in deg[inner]:
        W *= crit.spec.weight(int(s))
    return M * W * crit.z0 ** (M - 1) * crit.zeta0 ** (tau0.size - M)
