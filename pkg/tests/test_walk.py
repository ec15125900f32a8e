import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectree import oracle
from spectree.ensemble import DomainError, half_line
from spectree.samplers import RngStream, SpineSection, sample_spine, sample_spine_ball
from spectree.trees import Tree
from spectree.walk import (BoundedGF, chain_green_closed, green_finite, green_spine_bounds,
                           green_to_spine_vertex, half_line_mass, half_line_p, p_finite, p_spine_bounds,
                           p_tree_bounds, q_from_p, q_upper_bound_check, r_l_closed)

from test_trees import trees


def spine_with_two_leaves(L):
    """Bare spine of length L with one leaf left of s_2 (at s_1) and one right of s_3 (at s_2)."""
    n = L + 4
    nchild = [1, 2, 0, 2, 1, 0] + [1] * (n - 7) + [-1]
    parent = [-1, 0, 1, 1, 3, 3, 4] + [6 + i for i in range(n - 7)]
    level = [0, 1, 2, 2, 3, 3] + list(range(4, n - 2))
    spine = [0, 1, 0, 1, 1, 0] + [1] * (n - 6)
    anc = [0, 1, 1, 2, 3, 2] + list(range(4, n - 2))
    return SpineSection(length=L, branch_depth_cap=None, nchild=np.array(nchild), parent=np.array(parent),
                        level=np.array(level), spine=np.array(spine, dtype=bool), anc=np.array(anc))


def test_p_finite_examples():
    for x in (0.01, 0.3, 1.0):
        assert p_finite(Tree.path(1), x) == pytest.approx(1 - x, abs=1e-15)
    assert p_finite(Tree.path(2), 0.19) == pytest.approx(81 / 119, abs=1e-15)
    o = oracle.walk_sum_q(Tree.path(2), 0.19, 0, 0, "first_return")
    assert abs(p_finite(Tree.path(2), 0.19) - o.value) < 1e-10
    with pytest.raises(DomainError):
        p_finite(Tree.path(1), 0.0)
    with pytest.raises(DomainError):
        p_finite(Tree.path(1), 1.5)


def test_q_from_p():
    assert q_from_p(1 - 0.3) == pytest.approx(1 / 0.3)
    assert q_from_p(0.0) == 1.0
    assert q_from_p(0.5) == 2.0
    with pytest.raises(ZeroDivisionError):
        q_from_p(1.0)


def test_closed_forms():
    assert r_l_closed(0.7, 1) == 0.0
    assert r_l_closed(0.25, 2) == pytest.approx(0.375, abs=1e-15)
    assert chain_green_closed(0.4, 0) == 1.0
    assert chain_green_closed(0.19, 1) == pytest.approx(0.9, abs=1e-15)
    assert chain_green_closed(1e-12, 7) == pytest.approx(1.0, abs=1e-5) and chain_green_closed(1e-12, 7) < 1
    # long segments converge to the bare half-line
    assert r_l_closed(0.01, 5000) == pytest.approx(half_line_p(0.01), abs=1e-14)
    assert half_line_mass(0.04) == pytest.approx(0.5 * math.log(1.2 / 0.8))


@pytest.mark.parametrize("L", [1, 2, 3, 7])
def test_chain_green_is_path_green(L):
    for x in (0.05, 0.5):
        o = oracle.walk_sum_q(Tree.path(L), x, 0, L, "first_passage")
        assert chain_green_closed(x, L) == pytest.approx(o.value, abs=1e-12)


@given(trees(30), st.floats(0.02, 1.0))
def test_p_finite_matches_oracle(t, x):
    o = oracle.walk_sum_q(t, x, 0, 0, "first_return")
    assert abs(p_finite(t, x) - o.value) <= o.tail_bound + 1e-12


@given(trees(25), st.floats(0.02, 0.99), st.data())
def test_green_finite_matches_oracle(t, x, data):
    v = data.draw(st.integers(1, t.n_vertices - 1))
    o = oracle.walk_sum_q(t, x, 0, v, "first_passage")
    assert abs(green_finite(t, x, v) - o.value) <= o.tail_bound + 1e-12


@given(trees(30), st.floats(0.001, 1.0))
def test_finite_tree_bounds(t, x):
    p = p_finite(t, x)
    assert 0 <= p <= 1 - x + 1e-15
    assert p >= 1 - t.size * x - 1e-12


def test_depth_capped_bracket(uniform):
    t = Tree(np.array([1, 2, 1, 3, 0, 0, 0, 1, 0]))
    cut = Tree(np.array([1, 2, 1, 3, 0, 0, 0, 0]), truncated_at=3)
    b = p_tree_bounds(cut, 0.2)
    assert b.lower <= p_finite(t, 0.2) <= b.upper
    assert p_tree_bounds(t, 0.2).width == 0.0


def test_bounded_gf_validation():
    with pytest.raises(ValueError):
        BoundedGF(0.6, 0.5, 1)
    b = BoundedGF(0.2, 0.6, 3)
    assert b.mid == pytest.approx(0.4) and b.q() == pytest.approx((1.25, 2.5))


def test_half_line_spine():
    h = half_line()
    sec = sample_spine(h, 50, 0, RngStream(0))
    for x in (0.01, 0.2):
        b = p_spine_bounds(sec, x)
        assert b.lower == pytest.approx(r_l_closed(x, 51), abs=1e-14)
        assert b.upper == pytest.approx(half_line_p(x), abs=1e-14)
        lo, hi = green_spine_bounds(sec, x, 10)
        n = np.arange(1, 11)
        assert hi == pytest.approx(2 * (1 - x) ** (-n / 2) * (1 - math.sqrt(x)) ** n, rel=1e-12)
    assert p_spine_bounds(sec, 1.0) == BoundedGF(0.0, 0.0, 0)


def test_green_to_spine_vertex_hand_tree():
    sec = spine_with_two_leaves(60)
    tree, idx = sec.realization()
    assert list(sec.sigma[:3]) == [3, 3, 2]
    assert list(sec.k[:2]) == [1, 0] and list(sec.l[:2]) == [0, 1]
    x = 0.3
    for n in (1, 2, 5):
        o = oracle.walk_sum_q(tree, x, 0, int(idx[n]), "first_passage")
        assert green_to_spine_vertex(sec, x, n) == pytest.approx(o.value, abs=1e-8)
    b = p_spine_bounds(sec, x)
    assert b.upper == pytest.approx(oracle.walk_sum_q(tree, x, 0, 0, "first_return").value, abs=1e-12)
    with pytest.raises(ValueError):
        green_to_spine_vertex(spine_with_two_leaves(4), 0.01, 3)


def test_bracket_contains_realization(uniform):
    for i in range(40):
        sec = sample_spine(uniform, 2 + i % 4, 1 + i % 3, RngStream(11, (i,)))
        tree, idx = sec.realization()
        if tree.n_vertices > 400:
            continue
        for x in (0.05, 0.4):
            lo = p_spine_bounds(sec, x)
            hi = p_spine_bounds(sec, x, continuation="delete")
            exact = oracle.walk_sum_q(tree, x, 0, 0, "first_return")
            assert lo.lower <= exact.value + 1e-12
            assert exact.value <= hi.upper + exact.tail_bound + 1e-12
            assert lo.upper <= hi.upper + 1e-15


def test_brackets_shrink_with_radius(uniform):
    sec = sample_spine_ball(uniform, 64, RngStream(5))
    widths = [p_spine_bounds(sec, 0.01, R=R).width for R in (8, 16, 32, 64)]
    assert all(a >= b for a, b in zip(widths, widths[1:]))
    lows = [p_spine_bounds(sec, 0.01, R=R).lower for R in (8, 16, 32, 64)]
    assert all(a <= b + 1e-15 for a, b in zip(lows, lows[1:]))


def test_spine_monotone_in_x(uniform):
    sec = sample_spine_ball(uniform, 32, RngStream(6))
    xs = [0.5, 0.1, 0.02, 0.004]
    lows = [p_spine_bounds(sec, x).lower for x in xs]
    highs = [p_spine_bounds(sec, x).upper for x in xs]
    assert lows == sorted(lows) and highs == sorted(highs)


def test_q_upper_bound_check(uniform):
    for i in range(20):
        sec = sample_spine_ball(uniform, 16, RngStream(7, (i,)))
        assert q_upper_bound_check(sec, 0.01, 16)
    assert q_upper_bound_check(Tree.path(4), 0.1, 2)
