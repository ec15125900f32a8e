"""Monte Carlo averages over infinite-spine trees and exponent fits.

Every sample ``i`` draws from its own stream ``rng.substream(i)`` and the
per-sample numbers are reduced with ``math.fsum``, so results do not
depend on the number of workers or on chunking.  The same trees are
reused for every point of an x or R grid.

Spine samples are grown as balls: when a bracket is too wide the ball
radius is doubled and the larger ball, which contains the smaller one,
is regrown from the same stream.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ensemble import CriticalData
from .series import ball_volume_pmf
from .samplers import RngStream, TreeTooLarge, sample_spine, sample_spine_ball
from .walk import green_spine_bounds, spine_sweep

log = logging.getLogger(__name__)

DEFAULT_CHUNK = 256
FAILURE_FLAG_RATE = 0.01


@dataclass(frozen=True)
class EstimateRecord:
    """Sample mean at one grid point.

    ``bracket_residual`` bounds the bias from truncated trees and is
    added to ``stderr`` in :attr:`total_uncertainty`.
    """

    abscissa: float
    mean: float
    stderr: float
    n_samples: int
    censored: int = 0
    bracket_residual: float = 0.0
    failures: int = 0
    flagged: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def total_uncertainty(self) -> float:
        return self.stderr + self.bracket_residual


@dataclass(frozen=True)
class FitResult:
    exponent: float
    exponent_stderr: float
    window: tuple[float, float]
    residual_diagnostic: float
    intercept: float = 0.0
    derived: dict = field(default_factory=dict, compare=False)


def _mean_stderr(v: np.ndarray) -> tuple[float, float]:
    n = len(v)
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(v) / n
    if n == 1:
        return m, math.inf
    var = math.fsum((v - m) ** 2) / (n - 1)
    return m, math.sqrt(var / n)


# ---------------------------------------------------------------- sample execution
def _run(fn: Callable, n_samples: int, rng: RngStream, args: tuple, workers: int, chunk: int) -> list:
    """Evaluate ``fn(args, rng.substream(i))`` for i < n_samples, in index order."""
    starts = list(range(0, n_samples, chunk))
    jobs = [(fn, args, rng.seed, rng.ids, s, min(s + chunk, n_samples)) for s in starts]
    if workers <= 1:
        parts = [_chunk(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_chunk_star, jobs))
    return [r for p in parts for r in p]


def _chunk(fn, args, seed, ids, start, stop):
    base = RngStream(seed, tuple(ids))
    return [fn(args, base.substream(i)) for i in range(start, stop)]


def _chunk_star(job):
    return _chunk(*job)


# ---------------------------------------------------------------- return generating function
def adaptive_cap(x: float) -> int:
    """Largest ball radius tried before a sample is declared a failure."""
    return max(16, int(math.ceil(16.0 / math.sqrt(x))))


def _q_sample(args, stream):
    crit, xs, tol, R0, size_cap, continuation = args
    nx = len(xs)
    caps = np.array([adaptive_cap(x) for x in xs])
    R = R0
    while True:
        try:
            sec = sample_spine_ball(crit, R, stream, size_cap=size_cap)
        except TreeTooLarge:
            return None
        lo = np.empty(nx)
        hi = np.empty(nx)
        for j, x in enumerate(xs):
            if x >= 1.0:
                lo[j] = hi[j] = 0.0
                continue
            a, b = spine_sweep(sec, x, continuation=continuation)
            lo[j], hi[j] = a[1], min(b[1], 1.0)
        qlo, qhi = 1.0 / (1.0 - lo), 1.0 / (1.0 - hi)
        bad = (qhi - qlo) > tol * qlo
        if not bad.any() or 2 * R > caps[bad].max():
            break
        R *= 2
    pmid = 0.5 * (lo + hi)
    qmid = 1.0 / (1.0 - pmid)
    resid = np.maximum(qhi - qmid, qmid - qlo)
    return qmid, resid, 1.0 - pmid, bad, R


def estimate_q(crit: CriticalData, x_grid: Sequence[float], n_samples: int, rng: RngStream,
               bracket_tol: float = 1e-3, *, workers: int = 1, chunk: int = DEFAULT_CHUNK,
               start_radius: int = 16, size_cap: int = 10_000_000,
               continuation: str = "half_line") -> list[EstimateRecord]:
    """Ensemble average of the return generating function at each x.

    Each record also carries ``extra["mean_field"] = 1/<1 - P>`` and the
    mean final radius.
    """
    xs = np.asarray(x_grid, dtype=float)
    if ((xs <= 0) | (xs > 1)).any():
        raise ValueError("x values must lie in (0, 1]")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    out = _run(_q_sample, n_samples, rng, (crit, xs, bracket_tol, start_radius, size_cap, continuation),
               workers, chunk)
    good = [r for r in out if r is not None]
    censored = len(out) - len(good)
    q = np.array([r[0] for r in good]).reshape(len(good), len(xs))
    res = np.array([r[1] for r in good]).reshape(len(good), len(xs))
    omp = np.array([r[2] for r in good]).reshape(len(good), len(xs))
    bad = np.array([r[3] for r in good]).reshape(len(good), len(xs))
    radii = np.array([r[4] for r in good], dtype=float)
    records = []
    for j, x in enumerate(xs):
        m, se = _mean_stderr(q[:, j])
        fails = int(bad[:, j].sum())
        flagged = fails > FAILURE_FLAG_RATE * len(good) or censored > FAILURE_FLAG_RATE * len(out)
        mf = 1.0 / (math.fsum(omp[:, j]) / len(good)) if len(good) else math.nan
        records.append(EstimateRecord(float(x), m, se, len(good), censored,
                                      math.fsum(res[:, j]) / max(len(good), 1), fails, flagged,
                                      {"mean_field": mf, "mean_radius": float(np.mean(radii))}))
        if flagged:
            log.warning("x=%g: %d bracket failures, %d censored", x, fails, censored)
    return records


# ---------------------------------------------------------------- fits
def weighted_line_fit(t: np.ndarray, y: np.ndarray, sy: np.ndarray) -> tuple[float, float, float, float, float]:
    """Weighted least squares ``y = a + b t``: returns ``(b, se_b, a, se_a, chi2/dof)``."""
    t, y, sy = (np.asarray(v, dtype=float) for v in (t, y, sy))
    sy = np.where(sy > 0, sy, np.min(sy[sy > 0]) if (sy > 0).any() else 1.0)
    w = 1.0 / sy ** 2
    A = np.vstack([np.ones_like(t), t]).T
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    a, b = cov @ (A.T @ (w * y))
    resid = y - (a + b * t)
    dof = max(len(t) - 2, 1)
    chi2 = float(np.sum(w * resid ** 2) / dof)
    return float(b), float(math.sqrt(cov[1, 1])), float(a), float(math.sqrt(cov[0, 0])), chi2


def fit_power_law(abscissa, mean, unc, *, sign: float = 1.0, drop_threshold: float | None = None,
                  min_points: int = 4) -> FitResult:
    """Fit ``mean ~ C * abscissa**(sign * exponent)`` on log-log axes.

    With ``drop_threshold`` the largest-abscissa point is removed while
    the reduced chi-square exceeds it and more than ``min_points`` remain.
    """
    a = np.asarray(abscissa, dtype=float)
    m = np.asarray(mean, dtype=float)
    u = np.asarray(unc, dtype=float)
    order = np.argsort(a)
    a, m, u = a[order], m[order], u[order]
    while True:
        b, sb, c, _, chi2 = weighted_line_fit(np.log(a), np.log(m), u / m)
        if drop_threshold is None or chi2 <= drop_threshold or len(a) <= min_points:
            break
        log.info("dropping abscissa %g from fit (chi2/dof=%.3g)", a[-1], chi2)
        a, m, u = a[:-1], m[:-1], u[:-1]
    return FitResult(sign * b, sb, (float(a[0]), float(a[-1])), chi2, c)


def fit_spectral(records: Sequence[EstimateRecord], drop_threshold: float | None = None) -> FitResult:
    """``Q(x) ~ x^{-alpha}``; ``derived`` holds ``d_s = 2 - 2 alpha`` and its stderr."""
    recs = [r for r in records if r.abscissa < 1.0]
    if len(recs) < 4:
        raise ValueError("need at least 4 grid points below x = 1")
    xs = np.array([r.abscissa for r in recs])
    if xs.max() / xs.min() < 100.0:
        raise ValueError("x grid must span at least two decades")
    fit = fit_power_law(xs, [r.mean for r in recs], [r.total_uncertainty for r in recs],
                        sign=-1.0, drop_threshold=drop_threshold)
    fit.derived.update(d_s=2.0 - 2.0 * fit.exponent, d_s_stderr=2.0 * fit.exponent_stderr)
    return fit


# ---------------------------------------------------------------- volumes
def _volume_sample(args, stream):
    crit, Rs, size_cap = args
    try:
        sec = sample_spine_ball(crit, int(max(Rs)), stream, size_cap=size_cap)
    except TreeTooLarge:
        return None
    return np.array([sec.ball_volume(int(R)) for R in Rs], dtype=float)


def estimate_volume(crit: CriticalData, R_grid: Sequence[int], n_samples: int, rng: RngStream, *,
                    workers: int = 1, chunk: int = DEFAULT_CHUNK, size_cap: int = 10_000_000,
                    fit_range: tuple[int, int] | None = None):
    """Mean ball volume and mean inverse volume against R, with power-law fits.

    Returns ``(volume_records, inverse_records, d_h_fit, inverse_fit)``;
    ``inverse_fit.exponent`` is the log-log slope of ``<1/|B_R|>`` (negative).
    """
    Rs = [int(R) for R in R_grid]
    if min(Rs) < 1:
        raise ValueError("R values must be >= 1")
    out = _run(_volume_sample, n_samples, rng, (crit, Rs, size_cap), workers, chunk)
    good = np.array([r for r in out if r is not None])
    censored = len(out) - len(good)
    vol, inv = [], []
    for j, R in enumerate(Rs):
        m, se = _mean_stderr(good[:, j])
        vol.append(EstimateRecord(R, m, se, len(good), censored))
        m, se = _mean_stderr(1.0 / good[:, j])
        inv.append(EstimateRecord(R, m, se, len(good), censored))
    lo, hi = fit_range if fit_range is not None else (min(Rs), max(Rs))
    sel = [j for j, R in enumerate(Rs) if lo <= R <= hi]
    fits = []
    for recs in (vol, inv):
        if len(sel) >= 2:
            fits.append(fit_power_law([recs[j].abscissa for j in sel], [recs[j].mean for j in sel],
                                      [recs[j].total_uncertainty for j in sel]))
        else:
            fits.append(None)
    return vol, inv, fits[0], fits[1]


# ---------------------------------------------------------------- mass
def default_n_max(x: float) -> int:
    return max(8, int(math.ceil(6.0 * x ** (-1.0 / 3.0))))


def _mass_sample(args, stream):
    crit, xs, n_maxs, tol, size_cap = args
    caps = [max(adaptive_cap(x), 2 * n + 2) for x, n in zip(xs, n_maxs)]
    R = max(16, 2 * max(n_maxs))
    while True:
        try:
            sec = sample_spine_ball(crit, R, stream, size_cap=size_cap)
        except TreeTooLarge:
            return None
        mids, resids, bad = [], [], []
        for x, n in zip(xs, n_maxs):
            a, b = spine_sweep(sec, x)
            qlo, qhi = 1.0 / (1.0 - a[1]), 1.0 / (1.0 - min(b[1], 1.0))
            glo, ghi = green_spine_bounds(sec, x, n)
            lo, hi = qlo * glo, qhi * ghi
            mids.append(0.5 * (lo + hi))
            resids.append(0.5 * (hi - lo))
            bad.append(bool((hi - lo)[-1] > tol * lo[-1]) or not np.all(lo > 0))
        bad = np.array(bad)
        if not bad.any() or 2 * R > max(c for c, f in zip(caps, bad) if f):
            break
        R *= 2
    return mids, resids, bad, R


def estimate_two_point(crit: CriticalData, x_grid: Sequence[float], n_samples: int, rng: RngStream, *,
                       n_max: Sequence[int] | None = None, bracket_tol: float = 1e-3, workers: int = 1,
                       chunk: int = DEFAULT_CHUNK, size_cap: int = 10_000_000) -> dict[float, list[EstimateRecord]]:
    """Averages of ``Q(x) G(x; n)`` (walks from the root to spine vertex ``s_n``) for n = 1..n_max(x)."""
    xs = [float(x) for x in x_grid]
    if any(not (0 < x < 1) for x in xs):
        raise ValueError("x values must lie in (0, 1)")
    nm = [int(n) for n in n_max] if n_max is not None else [default_n_max(x) for x in xs]
    out = _run(_mass_sample, n_samples, rng, (crit, xs, nm, bracket_tol, size_cap), workers, chunk)
    good = [r for r in out if r is not None]
    censored = len(out) - len(good)
    table = {}
    for j, x in enumerate(xs):
        vals = np.array([r[0][j] for r in good])
        res = np.array([r[1][j] for r in good])
        fails = int(sum(r[2][j] for r in good))
        recs = []
        for k in range(nm[j]):
            m, se = _mean_stderr(vals[:, k])
            recs.append(EstimateRecord(k + 1, m, se, len(good), censored, math.fsum(res[:, k]) / len(good),
                                       fails, fails > FAILURE_FLAG_RATE * len(good)))
        table[x] = recs
    return table


def fit_mass(records: Sequence[EstimateRecord], n_min: int = 5) -> FitResult:
    """Decay rate of ``Q(x; n)`` in n from a weighted fit of ``-log Q`` against n."""
    recs = [r for r in records if r.abscissa >= n_min]
    # a mean consistent with zero cannot be put on a log scale
    keep = [r for r in recs if r.mean > 3 * r.total_uncertainty]
    if len(keep) < len(recs):
        log.warning("dropping %d points whose mean is consistent with zero", len(recs) - len(keep))
    if len(keep) < 3:
        raise ValueError("fewer than 3 usable points for the mass fit")
    n = np.array([r.abscissa for r in keep])
    y = -np.log([r.mean for r in keep])
    sy = np.array([r.total_uncertainty / r.mean for r in keep])
    b, sb, a, _, chi2 = weighted_line_fit(n, y, sy)
    return FitResult(b, sb, (float(n[0]), float(n[-1])), chi2, a,
                     {"flagged": len(keep) < len(recs)})


def estimate_mass(crit: CriticalData, x_grid: Sequence[float], n_grid: Sequence[int] | None, n_samples: int,
                  rng: RngStream, *, n_min: int = 5, bracket_tol: float = 1e-3, workers: int = 1,
                  chunk: int = DEFAULT_CHUNK, drop_threshold: float | None = None):
    """Mass ``m(x)`` per x and the exponent of ``m(x) ~ x^nu``.

    ``n_grid`` gives the largest n used at each x (default ``6 x^{-1/3}``).
    Returns ``(per_x_fits, exponent_fit, two_point_table)``.
    """
    table = estimate_two_point(crit, x_grid, n_samples, rng, n_max=n_grid, bracket_tol=bracket_tol,
                               workers=workers, chunk=chunk)
    per_x = {x: fit_mass(recs, n_min) for x, recs in table.items()}
    xs = sorted(per_x)
    overall = None
    if len(xs) >= 2:
        overall = fit_power_law(xs, [per_x[x].exponent for x in xs], [per_x[x].exponent_stderr for x in xs],
                                drop_threshold=drop_threshold, min_points=2)
    return per_x, overall, table


# ---------------------------------------------------------------- tail checks
def _tail_sample(args, stream):
    crit, R, Y_radii, size_cap = args
    try:
        sec = sample_spine_ball(crit, R, stream.substream(0), size_cap=size_cap)
        branch = sample_spine(crit, 1, max(Y_radii), stream.substream(1), size_cap=size_cap)
    except TreeTooLarge:
        return None
    # branch volumes at s_1 within each radius
    mask = (~branch.spine) & (branch.anc == 1)
    dist = branch.level[mask] - 1
    ys = np.array([np.count_nonzero(dist <= r) for r in Y_radii], dtype=float)
    return float(sec.ball_volume(R)), ys


def _line_shape(t: np.ndarray, p: np.ndarray) -> tuple[float, float]:
    ok = p > 0
    if ok.sum() < 3:
        return math.nan, math.nan
    y = np.log(p[ok])
    return float(np.polyfit(t[ok], y, 1)[0]), float(np.corrcoef(t[ok], y)[0, 1])


@dataclass
class TailReport:
    """Small-ball and large-branch tail diagnostics.

    ``probabilities`` are Monte Carlo frequencies of ``|B_R| < lambda R^2``
    and ``exact`` the same probabilities from the exact volume law.
    ``slope``/``correlation`` describe ``log P`` against ``lambda^{-1/2}``
    on the exact values (zero probabilities excluded); ``inv_correlation``
    is the same against ``1/lambda``.  ``mc_max_z`` is the largest
    standardized Monte Carlo deviation over lambdas with at least
    ``min_events`` hits.
    """

    R: int
    lambdas: np.ndarray
    probabilities: np.ndarray
    counts: np.ndarray
    exact: np.ndarray
    slope: float
    correlation: float
    inv_correlation: float
    bound_c0: float
    mc_max_z: float
    monotone: bool
    Y_radii: tuple[int, ...]
    c_prime: float
    scaled_tail: np.ndarray
    scaled_tail_stderr: np.ndarray
    n_samples: int
    censored: int
    min_events: int

    @property
    def shape_ok(self) -> bool:
        return self.monotone and self.slope < 0 and self.correlation <= -0.98

    @property
    def mc_ok(self) -> bool:
        return bool(self.mc_max_z <= 3.0)

    @property
    def ygeq_ok(self) -> bool:
        s, e = self.scaled_tail, self.scaled_tail_stderr
        # bounded below: positive, and the largest radius is not below half the smallest
        return bool((s - 3 * e > 0).all() and s[-1] + 3 * e[-1] >= 0.5 * s[0])


def tail_checks(crit: CriticalData, R: int, lambda_grid: Sequence[float], n_samples: int, rng: RngStream, *,
                Y_radii: Sequence[int] = (16, 32, 64), c_prime_grid: Sequence[float] | None = None,
                min_events: int = 20, workers: int = 1, chunk: int = DEFAULT_CHUNK,
                size_cap: int = 10_000_000) -> TailReport:
    """Small-volume tail of ``|B_R|`` and large-volume tail of single-vertex branch balls.

    Monte Carlo frequencies resolve only moderately small lambdas, so the
    shape fit uses the exact law and the samples are checked against it.
    For the branch tail, ``c'`` is picked from ``c_prime_grid`` to
    maximize ``min_R R P(Y_R >= c' R^2)``.
    """
    lam = np.sort(np.asarray(lambda_grid, dtype=float))
    Yr = tuple(int(r) for r in Y_radii)
    out = _run(_tail_sample, n_samples, rng, (crit, int(R), Yr, size_cap), workers, chunk)
    good = [r for r in out if r is not None]
    n = len(good)
    vols = np.array([g[0] for g in good])
    ys = np.array([g[1] for g in good])
    counts = np.array([np.count_nonzero(vols < l * R * R) for l in lam])
    probs = counts / n
    cdf = np.cumsum(ball_volume_pmf(crit, int(R), int(math.ceil(lam.max() * R * R))))
    # P(|B| < t) = P(|B| <= ceil(t) - 1)
    exact = np.array([cdf[int(math.ceil(l * R * R)) - 1] if l * R * R > 0 else 0.0 for l in lam])
    slope, corr = _line_shape(lam ** -0.5, exact)
    _, inv_corr = _line_shape(1.0 / lam, exact)
    pos = exact > 0
    bound_c0 = float(np.min(-np.log(exact[pos]) * np.sqrt(lam[pos]))) if pos.any() else math.inf
    use = counts >= min_events
    z = np.abs(probs - exact)[use] / np.sqrt(exact[use] * (1 - exact[use]) / n) if use.any() else np.zeros(0)
    grid = np.asarray(c_prime_grid if c_prime_grid is not None else np.linspace(0.05, 2.0, 40) * crit.fpp1 ** 2)
    best, best_val, best_tab = None, -1.0, None
    for c in grid:
        tab = np.array([np.mean(ys[:, k] >= c * r * r) for k, r in enumerate(Yr)])
        val = float(np.min(np.array(Yr) * tab))
        if val > best_val:
            best, best_val, best_tab = float(c), val, tab
    se = np.sqrt(best_tab * (1 - best_tab) / n)
    return TailReport(int(R), lam, probs, counts, exact, slope, corr, inv_corr, bound_c0,
                      float(z.max()) if len(z) else 0.0, bool(np.all(np.diff(exact) >= 0)),
                      Yr, best, np.array(Yr) * best_tab, np.array(Yr) * se, n, len(out) - n, min_events)


# ---------------------------------------------------------------- relations
def dimension_relation_holds(d_h: float, d_h_se: float, d_s: float, d_s_se: float, k: float = 3.0) -> bool:
    """``d_h >= d_s >= 2 d_h / (1 + d_h)`` up to ``k`` combined standard errors."""
    lower = 2 * d_h / (1 + d_h)
    dlower = 2 / (1 + d_h) ** 2 * d_h_se
    return d_h + k * d_h_se >= d_s - k * d_s_se and d_s + k * d_s_se >= lower - k * dlower


def half_line_q(x: float) -> float:
    """``Q(x)`` on the bare half-line, ``x^{-1/2}``."""
    return x ** -0.5


__all__ = [
    "EstimateRecord", "FitResult", "TailReport", "estimate_q", "fit_spectral", "estimate_volume",
    "estimate_two_point", "fit_mass", "estimate_mass", "tail_checks", "weighted_line_fit", "fit_power_law",
    "adaptive_cap", "dimension_relation_holds", "half_line_q",
]
