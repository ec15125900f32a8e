import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectree.ensemble import (DomainError, GenericityError, WeightSpec, binary_family, branch_pair_prob,
                               eval_f, eval_g, explicit_weights, half_line, measure_ball, motzkin_family,
                               solve_criticality, uniform_family)
from spectree.trees import Tree


def test_eval_g_examples():
    assert eval_g(uniform_family(), 0.5) == pytest.approx(2.0, rel=1e-15)
    assert eval_g(binary_family(), 1.0, 1) == pytest.approx(2.0)
    spec = explicit_weights([0.7, 0.2, 1.3])
    assert eval_g(spec, 0.0) == 0.7


def test_eval_g_closed_form_matches_truncated_sum():
    u = uniform_family()
    z = 0.5
    assert eval_g(u, z) == pytest.approx(sum(z ** (n - 1) for n in range(1, 201)), rel=1e-14)


def test_eval_g_domain():
    with pytest.raises(DomainError):
        eval_g(uniform_family(), 1.0)
    with pytest.raises(DomainError):
        eval_g(binary_family(), -0.1)


def test_uniform_constants(uniform):
    assert uniform.z0 == pytest.approx(0.5, abs=1e-13)
    assert uniform.zeta0 == pytest.approx(0.25, abs=1e-13)
    assert uniform.fpp1 == pytest.approx(2.0, abs=1e-11)
    assert uniform.divisor_d == 1
    n = np.arange(10)
    assert np.allclose(uniform.offspring[:10], 2.0 ** -(n + 1), rtol=1e-12)


def test_binary_constants(binary):
    assert (binary.z0, binary.zeta0, binary.fpp1, binary.divisor_d) == pytest.approx((1.0, 0.5, 1.0, 2))
    assert np.allclose(binary.offspring, [0.5, 0.0, 0.5])


def test_poisson_and_motzkin(crits):
    p, m = crits["poisson"], crits["motzkin"]
    assert p.z0 == pytest.approx(1.0, abs=1e-12)
    assert p.zeta0 == pytest.approx(1 / math.e, abs=1e-12)
    assert p.fpp1 == pytest.approx(1.0, abs=1e-10)
    assert m.zeta0 == pytest.approx(1 / 3, abs=1e-13)
    assert m.fpp1 == pytest.approx(2 / 3, abs=1e-12)


def test_invalid_weights():
    with pytest.raises(ValueError):
        WeightSpec((1.0, 1.0))  # nothing beyond degree 2
    with pytest.raises(ValueError):
        explicit_weights([0.0, 1.0, 1.0])


def test_nongeneric_family_rejected():
    # g(z) = sum z^{n-1}/n^3 hits its radius of convergence before criticality
    spec = WeightSpec(tuple(1.0 / n ** 3 for n in range(1, 20001)), rho=1.0)
    with pytest.raises(GenericityError):
        solve_criticality(spec)


def test_half_line_control():
    h = half_line()
    assert list(h.offspring) == [0.0, 1.0]
    assert h.fpp1 == 0.0


_weight = st.one_of(st.just(0.0), st.floats(1e-3, 5.0))


@given(st.lists(_weight, min_size=2, max_size=8), st.floats(0.05, 5.0))
def test_offspring_law_is_critical(rest, w1):
    if not any(v > 0 for v in rest[1:]):
        rest = rest[:1] + [1.0] + rest[2:]
    crit = solve_criticality(explicit_weights([w1] + rest))
    n = np.arange(len(crit.offspring))
    assert crit.offspring.sum() == pytest.approx(1.0, abs=1e-10)
    assert (n * crit.offspring).sum() == pytest.approx(1.0, abs=1e-9)
    assert crit.fpp1 == pytest.approx(crit.mean_branches, rel=1e-8)
    assert eval_f(crit, 1.0) == pytest.approx(1.0, abs=1e-10)
    assert eval_f(crit, 1.0, 1) == pytest.approx(1.0, abs=1e-9)


def test_eval_f_examples(uniform):
    assert eval_f(uniform, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert eval_f(uniform, 1.0, 1) == pytest.approx(1.0, abs=1e-12)
    # f(z) = 1/(2 - z), so f(0) = p_0 = 1/2
    assert eval_f(uniform, 0.0) == pytest.approx(0.5, abs=1e-13)
    with pytest.raises(DomainError):
        eval_f(uniform, 2.0)


def test_branch_pair_prob(uniform, binary):
    assert branch_pair_prob(uniform, 0, 0) == pytest.approx(0.25)
    assert branch_pair_prob(binary, 1, 1) == 0.0
    for crit in (uniform, binary):
        total = sum(branch_pair_prob(crit, k, l) for k in range(80) for l in range(80 - k))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_measure_ball_examples(uniform, binary):
    assert measure_ball(uniform, Tree.path(2), 2) == pytest.approx(0.25)
    for crit in (uniform, binary):
        assert measure_ball(crit, Tree.path(1), 1) == 1.0
    cherry = Tree(np.array([1, 2, 0, 0]))
    assert measure_ball(binary, cherry, 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        measure_ball(binary, cherry, 3)


def test_measure_ball_radius_two_uniform_sums_to_one(uniform):
    # B_2 is a star with c >= 1 leaves; nu(c) = c p_c
    stars = [Tree(np.array([1, c] + [0] * c)) for c in range(1, 80)]
    assert sum(measure_ball(uniform, t, 2) for t in stars) == pytest.approx(1.0, abs=1e-12)
