from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedim.potential import PotentialSpec
from sparsedim.solution import (
    length_scale,
    norm_L,
    norm_profile,
    omega,
    omega_bruteforce,
    solve,
    solve_companion,
    subordinacy_ratio,
    subordinate_theta,
    wronskian,
    wronskian_deviation_mp,
)

spec_st = st.lists(st.tuples(st.integers(1, 30), st.floats(0.1, 10.0)), max_size=4,
                   unique_by=lambda t: t[0]).map(PotentialSpec.from_values)


def test_hand_solutions(free):
    u = solve(free, 0.0, 0.0, 5).true_values()
    assert np.allclose(u[:6], [0, 1, 0, -1, 0, 1])
    v = solve_companion(free, 0.0, 0.0, 4).true_values()
    assert np.allclose(v[:5], [1, 0, -1, 0, 1])
    w = solve(free, 0.0, math.pi / 2, 4).true_values()
    assert np.allclose(w[:2], [-1, 0])


def test_norm_examples(free):
    u = solve(free, 0.0, 0.0, 10)
    assert norm_L(u, 4) == pytest.approx(math.sqrt(2))
    assert norm_L(u, 4.5) == pytest.approx(math.sqrt(2.5))


def test_omega_examples(free):
    assert omega(free, 0.0, 4) == pytest.approx(2.0)
    assert length_scale(free, 0.0, 0.5) == pytest.approx(4.0)
    target = omega(free, 0.3, 7)
    assert length_scale(free, 0.3, 1.0 / target) == pytest.approx(7.0, abs=1e-8)


def test_subordinacy_examples(free):
    assert subordinacy_ratio(free, 0.0, 0.0, 4) == pytest.approx(1.0)
    assert subordinacy_ratio(free, 0.0, math.pi / 4, 4) == pytest.approx(1.0)
    assert subordinate_theta(free, 0.0, 4).degenerate


def test_subordinate_theta_huge_barrier():
    spec = PotentialSpec.from_values([(3, 1e6)])
    E, L = 0.0, 400
    st_ = subordinate_theta(spec, E, L)
    grid = np.arange(1000) * math.pi / 1000
    norms = [norm_L(solve(spec, E, t, L + 1), L) for t in grid]
    best = grid[int(np.argmin(norms))]
    d = abs(st_.theta - best) % math.pi
    assert min(d, math.pi - d) <= 1e-3 + math.pi / 1000
    assert 0.0 <= st_.theta < math.pi


@given(spec_st, st.floats(-1.99, 1.99), st.floats(0, math.pi))
def test_wronskian_double(spec, E, th):
    N = 300
    u, v = solve(spec, E, th, N), solve_companion(spec, E, th, N)
    w = wronskian(u, v)
    scale = np.abs(u.true_values()[1:-1]) * np.abs(v.true_values()[2:]) + 1.0
    assert np.all(np.abs(w - 1.0) <= 1e-13 * scale * N)


def test_wronskian_extended(sparse4):
    assert wronskian_deviation_mp(sparse4.with_barrier(sparse4.barriers[0]), 0.4, 0.3, 30, bits=512) <= 1e-25


def _grid_tol(spec, E, L, n):
    """The eta-grid min misses the true min by at most ``kappa (pi/2n)^2`` relative."""
    lmin, lmax = norm_profile(spec, E, L).eigenvalues()
    return (lmax / lmin) * (math.pi / (2 * n)) ** 2 + 1e-12


@given(spec_st, st.floats(-2.5, 2.5), st.floats(2.0, 40.0))
def test_omega_matches_bruteforce(spec, E, L):
    brute = omega_bruteforce(spec, E, L, 1000)
    exact = omega(spec, E, L)
    assert exact * (1 - 1e-12) <= brute <= exact * (1 + _grid_tol(spec, E, L, 1000))


@given(spec_st, st.floats(-2.5, 2.5))
def test_omega_exact_at_two(spec, E):
    u, v = solve(spec, E, 0.0, 2).true_values(), solve_companion(spec, E, 0.0, 2).true_values()
    det = abs(u[1] * v[2] - u[2] * v[1])
    assert omega(spec, E, 2) == pytest.approx(det, rel=1e-12)
    assert omega_bruteforce(spec, E, 2, 1000) == pytest.approx(det, rel=_grid_tol(spec, E, 2, 1000))


@given(spec_st, st.floats(-2.5, 2.5), st.lists(st.floats(1.0, 60.0), min_size=2, max_size=6))
def test_omega_monotone(spec, E, Ls):
    Ls = sorted(Ls)
    vals = [omega(spec, E, L) for L in Ls]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


@given(spec_st, st.floats(-1.9, 1.9), st.floats(1e-3, 0.4), st.floats(1.01, 10.0))
def test_length_scale_monotone(spec, E, eps, f):
    assert length_scale(spec, E, eps / f) >= length_scale(spec, E, eps)


@given(spec_st, st.floats(-1.9, 1.9), st.floats(0, math.pi), st.floats(1.0, 50.0))
def test_circle_sum_identity(spec, E, th, L):
    N = int(L) + 1
    tr = np.trace(norm_profile(spec, E, L).gram)
    s = norm_L(solve(spec, E, th, N), L) ** 2 + norm_L(solve_companion(spec, E, th, N), L) ** 2
    assert s == pytest.approx(tr, rel=1e-10)


@given(spec_st, st.floats(-1.9, 1.9), st.floats(0, math.pi), st.floats(2.0, 50.0))
def test_ratio_product_bound(spec, E, th, L):
    lmin, lmax = norm_profile(spec, E, L).eigenvalues()
    r = subordinacy_ratio(spec, E, th, L) * subordinacy_ratio(spec, E, (th + math.pi / 2) % math.pi, L)
    assert r >= (lmin / lmax) * (1 - 1e-9)


def test_free_tail_growth_exponent():
    spec = PotentialSpec.from_values([(3, 2.0), (7, 0.5)])
    for E in (-1.3, 0.4, 1.1):
        u = solve(spec, E, 0.2, 100001)
        logs = [math.log(norm_L(u, L)) for L in (1e3, 1e4, 1e5)]
        for a, b in zip(logs, logs[1:]):
            assert 0.4 < (b - a) / math.log(10.0) < 0.6
