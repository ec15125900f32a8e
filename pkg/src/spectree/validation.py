"""Self-checks: exact identities, oracle agreement and distributional tests.

Each check returns a :class:`CheckResult`.  Sample sizes default to
values that run in seconds; the acceptance suite passes larger ones.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np
from scipy import stats

from . import _kernels as K
from . import oracle
from .ensemble import (CriticalData, FAMILIES, branch_pair_prob, half_line, measure_ball,
                       solve_criticality)
from .estimators import tail_checks
from .samplers import (RngStream, TreeTooLarge, lemma4_check, sample_gw, sample_nu_N, sample_pairs,
                       sample_spine, sample_spine_ball)
from .series import ball_series, ball_volume_pmf, lemma1_ratio, nu_ball_mean, partition_coeffs
from .trees import Tree, ball, canonical_code, height, profile
from .walk import (chain_green_closed, green_finite, green_spine_bounds, p_finite, p_spine_bounds,
                   p_subtrees, q_from_p, r_l_closed, spine_sweep)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _crit(name: str) -> CriticalData:
    return solve_criticality(FAMILIES[name]())


def _chi2_pvalue(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0) -> float:
    """Pearson test after pooling the cells with small expectation into one."""
    observed = np.asarray(observed, dtype=float)
    expected = np.asarray(expected, dtype=float)
    big = expected >= min_expected
    obs = np.r_[observed[big], observed[~big].sum()]
    exp = np.r_[expected[big], expected[~big].sum()]
    if exp[-1] < min_expected:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    exp = exp * obs.sum() / exp.sum()
    if len(obs) < 2:
        return 1.0
    return float(stats.chisquare(obs, exp).pvalue)


def random_small_tree(crit: CriticalData, rng: RngStream, max_edges: int = 20) -> Tree:
    """A GW tree conditioned on at most ``max_edges`` edges (rejection)."""
    i = 0
    while True:
        try:
            t = sample_gw(crit, rng.substream(i), size_cap=max_edges)
        except TreeTooLarge:
            i += 1
            continue
        return t


# ---------------------------------------------------------------- partition functions
def check_partition_functions(N_max: int = 8, ratio_N: int = 200) -> CheckResult:
    worst = 0.0
    for name in ("uniform", "binary", "motzkin", "poisson"):
        c = _crit(name)
        z = partition_coeffs(c.spec, c, N_max)
        for N in range(1, N_max + 1):
            exact = float(oracle.exact_partition(c.spec, N))
            err = abs(z[N - 1] - exact) / exact if exact else abs(z[N - 1])
            worst = max(worst, err)
    u = _crit("uniform")
    ratio = lemma1_ratio(u.spec, u, ratio_N)
    b = _crit("binary")
    zb = partition_coeffs(b.spec, b, 200)
    n = np.arange(1, 201)
    pattern = bool(np.all((zb == 0) == ((n - 1) % b.divisor_d != 0)))
    ok = worst <= 1e-9 and abs(ratio - 1) <= 0.02 and pattern and b.divisor_d == 2
    return CheckResult("partition functions", ok,
                       f"max rel err vs enumeration {worst:.2e}; ratio(N={ratio_N}) = {ratio:.5f}; "
                       f"binary zero pattern {'matches' if pattern else 'differs'} (d={b.divisor_d})",
                       {"max_rel_err": worst, "ratio": ratio, "pattern": pattern})


# ---------------------------------------------------------------- measures
def check_fixed_size_sampler(family: str = "uniform", Ns=(1, 2, 3, 4, 5), n_samples: int = 20_000,
                             seed: int = 1) -> CheckResult:
    c = _crit(family)
    rng = RngStream(seed, (50,))
    pvals = {}
    acc_z = {}
    for N in Ns:
        exact = oracle.exact_nu_N(c.spec, N)
        codes = [canonical_code(t) for t, _ in exact]
        index = {k: i for i, k in enumerate(codes)}
        counts = np.zeros(len(codes))
        attempts = 0
        for i in range(n_samples):
            t, a = sample_nu_N(c, N, rng.substream(N, i), with_attempts=True)
            counts[index[canonical_code(t)]] += 1
            attempts += a
        probs = np.array([float(p) for _, p in exact])
        pvals[N] = _chi2_pvalue(counts, probs * n_samples)
        # attempts per accepted tree are geometric with mean 1/acc
        acc = float(oracle.exact_partition(c.spec, N)) * c.zeta0 ** N / c.z0
        se = math.sqrt((1 - acc) / n_samples) / acc
        acc_z[N] = abs(attempts / n_samples - 1 / acc) / se if se else 0.0
    ok = all(p > 1e-3 for p in pvals.values()) and all(z <= 3 for z in acc_z.values())
    return CheckResult("fixed-size sampler", ok,
                       "chi2 p-values " + ", ".join(f"N={k}: {v:.3g}" for k, v in pvals.items())
                       + f"; acceptance-rate max |z| {max(acc_z.values()):.2f}",
                       {"pvalues": pvals, "acceptance_z": acc_z})


def enumerate_ball_shapes(counts_allowed, R: int) -> list[Tree]:
    """Every possible radius-R ball (height exactly R) with child counts from ``counts_allowed``."""
    allowed = sorted(set(int(c) for c in counts_allowed))
    out = []

    def grow(levels, width, depth):
        if depth == R:
            if width > 0:
                out.append(Tree(np.array([1] + [c for lev in levels for c in lev] + [0] * width)))
            return
        for combo in product(allowed, repeat=width):
            if sum(combo) == 0:
                continue
            grow(levels + [list(combo)], sum(combo), depth + 1)

    grow([], 1, 1)
    return out


def check_ball_measure(n_samples: int = 20_000, seed: int = 2) -> CheckResult:
    # normalization on finite families
    norm_err = 0.0
    for name in ("binary", "motzkin"):
        c = _crit(name)
        support = np.flatnonzero(c.offspring)
        for R in (2, 3):
            total = sum(measure_ball(c, t, R) for t in enumerate_ball_shapes(support, R))
            norm_err = max(norm_err, abs(total - 1.0))
    # B_2 shapes one by one, B_3 shapes jointly
    worst_z = 0.0
    tested = 0
    pvals = {}
    rng = RngStream(seed, (60,))
    for j, (name, R) in enumerate((("uniform", 2), ("binary", 2), ("motzkin", 2), ("uniform", 3), ("motzkin", 3))):
        c = _crit(name)
        seen = Counter()
        trees = {}
        for i in range(n_samples):
            t = sample_spine_ball(c, R, rng.substream(j, i)).ball_tree(R)
            k = canonical_code(t)
            seen[k] += 1
            trees[k] = t
        keys = list(trees)
        probs = np.array([measure_ball(c, trees[k], R) for k in keys])
        obs = np.array([seen[k] for k in keys], dtype=float)
        if R == 2:
            for p, o in zip(probs, obs):
                if p * n_samples < 20:
                    continue
                se = math.sqrt(p * (1 - p) / n_samples)
                dev = abs(o / n_samples - p)
                worst_z = max(worst_z, dev / se if se else (0.0 if dev < 1e-12 else math.inf))
                tested += 1
        else:
            # frequent shapes one cell each, everything else (seen or not) in one cell
            big = probs * n_samples >= 5
            rest_p = max(1.0 - probs[big].sum(), 0.0)
            pvals[name] = _chi2_pvalue(np.r_[obs[big], n_samples - obs[big].sum()],
                                       np.r_[probs[big], rest_p] * n_samples)
    ok = norm_err < 1e-9 and worst_z <= 3.0 and all(p > 1e-3 for p in pvals.values())
    return CheckResult("ball measure", ok,
                       f"normalization err {norm_err:.1e}; radius-2 shapes max |z| {worst_z:.2f} over {tested}; "
                       "radius-3 chi2 " + ", ".join(f"{k}: p={v:.3g}" for k, v in pvals.items()),
                       {"norm_err": norm_err, "max_z": worst_z, "pvalues": pvals})


def check_branch_pairs(n_draws: int = 1_000_000, seed: int = 3) -> CheckResult:
    pvals = {}
    for name in ("uniform", "motzkin"):
        c = _crit(name)
        k, l = sample_pairs(c, n_draws, RngStream(seed, (70, len(name))))
        m = int(max(k.max(), l.max())) + 1
        obs = np.zeros((m, m))
        np.add.at(obs, (k, l), 1)
        exp = np.array([[branch_pair_prob(c, a, b) for b in range(m)] for a in range(m)]) * n_draws
        pvals[name] = _chi2_pvalue(obs.ravel(), exp.ravel())
    ok = all(p > 1e-3 for p in pvals.values())
    return CheckResult("branch pairs", ok, ", ".join(f"{k}: p={v:.3g}" for k, v in pvals.items()), {"pvalues": pvals})


# ---------------------------------------------------------------- walk generating functions
def check_walk_gf(n_trees: int = 200, seed: int = 4) -> CheckResult:
    u = _crit("uniform")
    rng = RngStream(seed, (80,))
    draws = rng.substream(0).uniforms(3 * n_trees).reshape(n_trees, 3)
    err_p = err_q = err_g = 0.0
    for i in range(n_trees):
        t = random_small_tree(u, rng.substream(1, i))
        x = 0.05 + 0.85 * draws[i, 0]
        r = oracle.walk_sum_q(t, x, 0, 0, "first_return")
        err_p = max(err_p, abs(p_finite(t, x) - r.value))
        q = oracle.walk_sum_q(t, x, 0, 0, "all_walks")
        err_q = max(err_q, abs(q_from_p(p_finite(t, x)) - q.value) / q.value)
        v = 1 + int(draws[i, 1] * (t.n_vertices - 1))
        g = oracle.walk_sum_q(t, x, 0, v, "first_passage")
        err_g = max(err_g, abs(green_finite(t, x, v) - g.value))
    # closed forms against the recursion on the bare half-line
    h = half_line()
    err_r = err_chain = err_hl = 0.0
    for x in (1e-4, 0.01, 0.1, 0.25, 0.6, 1.0):
        sec = sample_spine(h, 60, 0, RngStream(0))
        for L in (1, 2, 3, 10, 40, 60):
            if L >= 2:
                err_r = max(err_r, abs(p_spine_bounds(sec, x, L - 1).lower - r_l_closed(x, L)))
            err_chain = max(err_chain, abs(green_finite(Tree.path(L), x, L) - chain_green_closed(x, L)))
        if x < 1:
            lo, hi = green_spine_bounds(sec, x, 20)
            n = np.arange(1, 21)
            exact = 2 * (1 - x) ** (-n / 2) * (1 - math.sqrt(x)) ** n
            err_hl = max(err_hl, float(np.max(np.abs(hi - exact) / exact)))
    br = _bracket_invariants(u, rng.substream(2), 100)
    ok = max(err_p, err_g) <= 1e-8 and err_q <= 1e-8 and err_r <= 1e-12 and err_chain <= 1e-12 \
        and err_hl <= 1e-12 and br["violations"] == 0
    return CheckResult("walk generating functions", ok,
                       f"P err {err_p:.1e}, Q rel err {err_q:.1e}, G err {err_g:.1e}, segment err {err_r:.1e}, "
                       f"chain err {err_chain:.1e}, half-line G err {err_hl:.1e}, bracket violations {br['violations']}"
                       f"/{br['cases']} (spine G err {br['green_err']:.1e})",
                       {"p": err_p, "q": err_q, "g": err_g, "r": err_r, "chain": err_chain, **br})


def _bracket_invariants(crit: CriticalData, rng: RngStream, n_cases: int) -> dict:
    """Brackets versus exact values on the finite realization of small spine samples."""
    bad = 0
    cases = 0
    green_err = 0.0
    for i in range(n_cases):
        s = rng.substream(i)
        L = 2 + i % 4
        sec = sample_spine(crit, L, 1 + i % 3, s.substream(0))
        tree, sidx = sec.realization()
        if tree.n_vertices > 200:
            continue
        x = 0.05 + 0.9 * s.substream(1).uniforms(1)[0]
        lo, hi = p_spine_bounds(sec, x), p_spine_bounds(sec, x, continuation="delete")
        exact = oracle.walk_sum_q(tree, x, 0, 0, "first_return")
        cases += 1
        if not (lo.lower <= lo.upper <= hi.upper + 1e-15 and lo.lower == hi.lower):
            bad += 1
        if not (hi.lower - 1e-12 <= exact.value <= hi.upper + exact.tail_bound + 1e-12):
            bad += 1
        # G to spine vertices before the cut is exact on the realization
        glo, ghi = green_spine_bounds(sec, x, L - 1, continuation="delete")
        for n in range(1, L):
            g = oracle.walk_sum_q(tree, x, 0, int(sidx[n]), "first_passage")
            green_err = max(green_err, abs(ghi[n - 1] - g.value))
            if glo[n - 1] > g.value + 1e-12:
                bad += 1
        if green_err > 1e-8:
            bad += 1
    return {"violations": bad, "cases": cases, "green_err": green_err}


# ---------------------------------------------------------------- inequalities
def _spine_full(crit, L, rng, size_cap=20_000):
    i = 0
    while True:
        try:
            return sample_spine(crit, L, None, rng.substream(i), size_cap=size_cap)
        except TreeTooLarge:
            i += 1


def check_inequalities(n_cases: int = 1000, seed: int = 5) -> CheckResult:
    u = _crit("uniform")
    rng = RngStream(seed, (90,))
    viol = Counter()
    xs = rng.substream(0).uniforms(n_cases)
    inv_vol = []
    vol = []
    for i in range(n_cases):
        s = rng.substream(1, i)
        x = float(10 ** (-4 * xs[i]))  # log-uniform on [1e-4, 1]
        # finite trees: lower bound by size, removal monotonicity, monotonicity in x
        t = random_small_tree(u, s.substream(0), max_edges=60)
        p = p_finite(t, x)
        if p < 1 - t.size * x - 1e-12:
            viol["finite lower bound"] += 1
        if t.n_vertices > 2:
            w = 2 + int(s.substream(1).uniforms(1)[0] * (t.n_vertices - 2))
            keep = np.ones(t.n_vertices, dtype=bool)
            stack = [w]
            while stack:
                v = stack.pop()
                keep[v] = False
                stack.extend(t.children(v))
            counts = t.nchild.copy()
            counts[t.parent[w]] -= 1
            if p_finite(Tree(counts[keep]), x) < p - 1e-12:
                viol["branch removal"] += 1
        if x > 1e-4 and p_finite(t, x / 2) < p - 1e-12:
            viol["monotone in x"] += 1
        # z23: the walk weights to all vertices of a ball sum to at most 2/x
        if t.n_vertices <= 30 and x >= 0.01:
            vec, tail = oracle.walk_sum_vector(t, x)
            R = 1 + i % max(height(t), 1)
            inside = t.level <= R
            if vec[inside].sum() > 2 / x + 1e-9:
                viol["ball walk sum"] += 1
            # the same from the recursion, Q(x) G(x; v)
            q = q_from_p(p)
            rec = np.array([q * green_finite(t, x, v) if v else q for v in range(t.n_vertices)])
            if rec[inside].sum() > 2 / x + 1e-9 or np.max(np.abs(rec - vec) - tail) > 1e-8:
                viol["ball walk sum"] += 1
            # first passage back to the root is dominated by the bare path
            v = t.n_vertices - 1
            g = oracle.walk_sum_q(t, x, v, 0, "first_passage")
            if g.value > chain_green_closed(x, int(t.level[v])) + 1e-12:
                viol["path domination"] += 1
        # spine samples
        L = 1 + i % 20
        sec = _spine_full(u, L, s.substream(2))
        lo, hi = spine_sweep(sec, x, L=L)
        branch_sum = _branch_defect(sec, x, L)
        rhs = 1 - 1 / L - L * x - branch_sum
        if lo[1] < rhs - 1e-12:
            viol["truncated spine lower bound"] += 1
        if 1 / (1 - r_l_closed(x, L)) > L * (1 + 1e-12):
            viol["segment bound"] += 1
        R = max(1, int(x ** (-1 / 3)))
        ballsec = sample_spine_ball(u, max(R, 2), s.substream(3))
        b = p_spine_bounds(ballsec, x)
        qhi = q_from_p(b.upper)
        if qhi > (R + 2 / (x * ballsec.ball_volume(R))) * (1 + 1e-12):
            viol["volume bound"] += 1
        if qhi > x ** -0.5 * (1 + 1e-12):
            viol["inverse sqrt bound"] += 1
        D = np.array([ballsec.sphere(r) for r in range(1, R + 1)], dtype=float)
        if 1 / D.sum() > math.exp(-np.mean(np.log(D))) / R * (1 + 1e-12):
            viol["inverse volume"] += 1
        if R == 4:
            vol.append(D.sum())
            inv_vol.append(1 / D.sum())
    # Jensen on the empirical measure
    if vol and np.mean(inv_vol) < 1 / np.mean(vol):
        viol["inverse volume"] += 1
    names = ["finite lower bound", "branch removal", "monotone in x", "ball walk sum", "path domination",
             "truncated spine lower bound", "segment bound", "volume bound", "inverse sqrt bound", "inverse volume"]
    total = sum(viol.values())
    return CheckResult("inequalities", total == 0,
                       f"{n_cases} cases; violations: " + ", ".join(f"{k}={viol[k]}" for k in names),
                       {"violations": dict(viol), "cases": n_cases})


def _branch_defect(sec, x, L) -> float:
    """Sum of ``1 - P_T`` over the finite branches at ``s_1..s_L`` (fully generated)."""
    nchild = np.maximum(sec.nchild, 0)
    vals = K.finite_p(nchild, sec.parent, x)
    par = sec.parent
    roots = np.flatnonzero((~sec.spine) & (par >= 0))
    roots = roots[sec.spine[par[roots]] & (sec.anc[roots] <= L) & (sec.level[roots] >= 2)]
    return float(np.sum(1 - vals[roots]))


# ---------------------------------------------------------------- series
def check_series_moments(R: int = 200) -> CheckResult:
    worst_first = 0.0
    worst_second = 0.0
    worst_tail = 0.0
    for name in ("uniform", "binary", "poisson", "motzkin"):
        c = _crit(name)
        fpp = c.fpp1
        for which, target in (("f_R", R), ("g_R", fpp * R), ("k_n", 1.0), ("h_n", fpp)):
            worst_first = max(worst_first, abs(ball_series(c, R, which)[0] - target) / target)
        worst_second = max(worst_second, abs(ball_series(c, R, "f_R")[1] / R ** 3 / (fpp / 3) - 1),
                           abs(ball_series(c, R, "g_R")[1] / R ** 3 / (fpp ** 2 / 3) - 1))
        # height beyond R and occupation of level n along a branch
        tail_h = ball_series(c, R + 1, "k_n", "at0")[1] * R * fpp / 2
        tail_x = ball_series(c, R, "h_n", "at0")[1] * R / 2
        worst_tail = max(worst_tail, abs(tail_h - 1), abs(tail_x - 1))
    ok = worst_first <= 1e-9 and worst_second <= 0.05 and worst_tail <= 0.05
    return CheckResult("ball series", ok, f"first-moment err {worst_first:.1e}, second-moment coefficient err "
                       f"{worst_second:.3f}, tail-constant err {worst_tail:.3f} at R={R}",
                       {"first": worst_first, "second": worst_second, "tail": worst_tail})


def check_tail_shapes(n_samples: int = 20_000, R: int = 64, seed: int = 6) -> CheckResult:
    u = _crit("uniform")
    rep = tail_checks(u, R, np.geomspace(0.01, 0.3, 8), n_samples, RngStream(seed, (100,)))
    ok = rep.shape_ok and rep.ygeq_ok and rep.mc_ok
    return CheckResult("tail shapes", ok,
                       f"small-ball corr vs lambda^-1/2 {rep.correlation:.4f} (vs 1/lambda {rep.inv_correlation:.4f}), "
                       f"slope {rep.slope:.2f}, MC max |z| {rep.mc_max_z:.2f}; branch tail R*P(Y_R>=c'R^2) "
                       f"{np.round(rep.scaled_tail, 3).tolist()} at c'={rep.c_prime:.3g}",
                       {"report": rep})


def check_spine_gw_identity(n_samples: int = 20_000, R: int = 5, seed: int = 7) -> CheckResult:
    u = _crit("uniform")
    funcs: dict[str, Callable[[Tree], float]] = {
        "one": lambda t: 1.0,
        "volume": lambda t: float(t.size),
        "single sphere vertex": lambda t: float(profile(t, R) == 1),
    }
    out = {}
    ok = True
    for k, (name, fn) in enumerate(funcs.items()):
        (a, sa), (b, sb) = lemma4_check(u, R, fn, n_samples, RngStream(seed, (110, k)))
        z = abs(a - b) / math.hypot(sa, sb) if (sa or sb) else 0.0
        out[name] = (a, sa, b, sb, z)
        ok &= z <= 3.0
    one = out["one"]
    vol = out["volume"]
    ok &= abs(vol[0] - nu_ball_mean(u, R)) <= 3 * vol[1]
    return CheckResult("spine/GW identity", ok, "; ".join(f"{k}: {v[0]:.4f}±{v[1]:.4f} vs {v[2]:.4f}±{v[3]:.4f}"
                                                          for k, v in out.items()), {"estimates": out})


def check_ball_volume_law(R: int = 4, K: int = 3000) -> CheckResult:
    """The exact law of the ball volume reproduces the closed-form mean."""
    worst = 0.0
    for name in ("uniform", "binary", "motzkin"):
        c = _crit(name)
        pmf = ball_volume_pmf(c, R, K)
        mean = float(np.dot(np.arange(K + 1), pmf))
        worst = max(worst, abs(mean - nu_ball_mean(c, R)) / nu_ball_mean(c, R), abs(pmf.sum() - 1))
    return CheckResult("ball volume law", worst < 1e-9, f"max err {worst:.1e}", {"err": worst})


def check_mass_bounds(crit: CriticalData, per_x: dict, fits: dict) -> CheckResult:
    """Two-sided exponential bounds on the two-point function given its fitted decay rate.

    ``per_x`` maps x to records over n (as from ``estimate_two_point``)
    and ``fits`` maps x to the fitted rate.  The upper constant is
    ``(f''(1) + 2) / E[1/(k + l + 2)]``.
    """
    k = np.arange(64)
    phi = np.array([[branch_pair_prob(crit, a, b) for b in k] for a in k])
    c_tilde = float(np.sum(phi / (k[:, None] + k[None, :] + 2)))
    C = crit.fpp1 + 2
    bad = 0
    cases = 0
    for x, recs in per_x.items():
        m = fits[x].exponent
        for r in recs:
            n = r.abscissa
            u = r.total_uncertainty
            lo = math.sqrt(x) * math.exp(-m * n)
            hi = C / c_tilde / x * math.exp(-m * n)
            cases += 1
            bad += not (r.mean + 3 * u >= lo and r.mean - 3 * u <= hi)
    return CheckResult("two-point bounds", bad == 0, f"{bad} violations over {cases} (x, n) points",
                       {"violations": bad, "cases": cases, "c_tilde": c_tilde})


QUICK_CHECKS: dict[str, Callable[[], CheckResult]] = {
    "partition": lambda: check_partition_functions(),
    "fixed_size": lambda: check_fixed_size_sampler(n_samples=5000),
    "ball_measure": lambda: check_ball_measure(n_samples=5000),
    "branch_pairs": lambda: check_branch_pairs(n_draws=200_000),
    "walk_gf": lambda: check_walk_gf(n_trees=60),
    "inequalities": lambda: check_inequalities(n_cases=200),
    "series": lambda: check_series_moments(),
    "ball_volume_law": lambda: check_ball_volume_law(),
    "spine_gw": lambda: check_spine_gw_identity(n_samples=5000),
}


def run_checks(names=None, checks=QUICK_CHECKS) -> list[CheckResult]:
    return [checks[n]() for n in (names or checks)]
