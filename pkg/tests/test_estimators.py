import math

import numpy as np
import pytest

from spectree import estimators as E
from spectree.ensemble import half_line
from spectree.samplers import RngStream
from spectree.series import nu_ball_mean
from spectree.walk import half_line_mass


def synthetic(xs, f):
    return [E.EstimateRecord(x, f(x), 1e-3 * f(x), 100) for x in xs]


def test_fit_identity():
    xs = 2.0 ** -np.arange(6, 15, 2)
    fit = E.fit_spectral(synthetic(xs, lambda x: x ** (-1 / 3)))
    assert fit.exponent == pytest.approx(1 / 3, abs=1e-12)
    assert fit.derived["d_s"] == pytest.approx(4 / 3, abs=1e-12)
    assert fit.residual_diagnostic == pytest.approx(0.0, abs=1e-12)


def test_fit_needs_span():
    with pytest.raises(ValueError):
        E.fit_spectral(synthetic([0.1, 0.05, 0.02, 0.01], lambda x: x ** -0.5))
    with pytest.raises(ValueError):
        E.fit_spectral(synthetic([0.1, 1e-4, 1e-5], lambda x: x ** -0.5))


def test_weighted_line_fit_recovers_line():
    t = np.linspace(0, 5, 9)
    b, sb, a, sa, chi2 = E.weighted_line_fit(t, 2.0 - 0.7 * t, np.full(9, 0.1))
    assert (b, a) == pytest.approx((-0.7, 2.0), abs=1e-12)
    assert chi2 == pytest.approx(0, abs=1e-20)


def test_drop_threshold_removes_curved_end():
    xs = 2.0 ** -np.arange(2, 16, 2)
    recs = synthetic(xs, lambda x: x ** -0.4 * (1 + 5 * x))
    loose = E.fit_spectral(recs)
    tight = E.fit_spectral(recs, drop_threshold=2.0)
    assert abs(tight.exponent - 0.4) < abs(loose.exponent - 0.4)
    assert tight.window[1] < loose.window[1]


def test_q_at_one_is_one(uniform):
    rec = E.estimate_q(uniform, [1.0, 0.1], 50, RngStream(1))
    assert rec[0].mean == 1.0 and rec[0].stderr == 0.0


def test_half_line_q():
    h = half_line()
    xs = [0.25, 0.01, 1e-4]
    recs = E.estimate_q(h, xs, 4, RngStream(2), bracket_tol=1e-9)
    for r, x in zip(recs, xs):
        assert r.mean == pytest.approx(E.half_line_q(x), rel=1e-6)
        assert abs(r.mean - E.half_line_q(x)) <= r.total_uncertainty + 1e-9


def test_q_estimate_deterministic_across_workers(uniform):
    a = E.estimate_q(uniform, [0.01, 0.001], 40, RngStream(3), workers=1, chunk=8)
    b = E.estimate_q(uniform, [0.01, 0.001], 40, RngStream(3), workers=2, chunk=8)
    assert [r.mean for r in a] == [r.mean for r in b]
    assert [r.stderr for r in a] == [r.stderr for r in b]


def test_q_estimate_reasonable(uniform):
    recs = E.estimate_q(uniform, [0.01], 400, RngStream(4))
    r = recs[0]
    # Q <= x^{-1/2} pathwise and Q >= 1
    assert 1 < r.mean < 10
    assert r.censored == 0 and not r.flagged
    assert r.extra["mean_field"] <= r.mean + 3 * r.total_uncertainty  # Jensen: 1/<1-P> <= <1/(1-P)>


def test_volume(uniform):
    vol, inv, fit, inv_fit = E.estimate_volume(uniform, [4, 8, 16, 32], 600, RngStream(5))
    for r in vol:
        assert abs(r.mean - nu_ball_mean(uniform, int(r.abscissa))) <= 4 * r.total_uncertainty
    assert fit.exponent == pytest.approx(2, abs=0.15)
    assert inv_fit.exponent == pytest.approx(-2, abs=0.3)  # <1/|B_R|> ~ R^-2
    assert all(a.mean * b.mean >= 1 for a, b in zip(vol, inv))  # Jensen


def test_half_line_mass_control():
    h = half_line()
    xs = [2.0 ** -6, 2.0 ** -10]
    per_x, overall, table = E.estimate_mass(h, xs, None, 4, RngStream(6), bracket_tol=1e-10)
    for x in xs:
        assert per_x[x].exponent == pytest.approx(half_line_mass(x), abs=1e-6)
    assert overall is not None


def test_mass_records(uniform):
    table = E.estimate_two_point(uniform, [2.0 ** -6], 100, RngStream(7), n_max=[12])
    recs = table[2.0 ** -6]
    means = [r.mean for r in recs]
    assert len(recs) == 12 and means[0] > means[-1] > 0


def test_dimension_relation():
    assert E.dimension_relation_holds(2.0, 0.01, 4 / 3, 0.02)
    assert not E.dimension_relation_holds(2.0, 0.01, 1.0, 0.02)
    assert not E.dimension_relation_holds(2.0, 0.01, 2.5, 0.02)


def test_tail_checks_small(uniform):
    rep = E.tail_checks(uniform, 16, [0.05, 0.1, 0.2, 0.3], 1500, RngStream(8), Y_radii=(8, 16))
    assert rep.monotone
    assert np.all(np.diff(rep.probabilities) >= 0)
    assert rep.mc_ok
    assert rep.bound_c0 > 0
