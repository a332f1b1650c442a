from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedim.herglotz import (
    RANK_ONE,
    WEYL,
    HerglotzError,
    M_wholeline,
    certificate_report,
    certificate_smallness,
    check_dkl,
    check_dt,
    check_jl,
    dt_general_bound,
    m_free,
    m_halfline,
    m_minus,
    m_plus,
    m_weyl,
    mobius_theta,
    sup_over_theta,
    sup_over_theta_grid,
    theta_family,
    weyl_sup,
    weyl_sup_grid,
)
from sparsedim.herglotz import _family_from
from sparsedim.oracle import m_truncated, truncated_measure
from sparsedim.potential import WHOLE_LINE, PotentialSpec
from sparsedim.solution import length_scale

from conftest import random_sparse

spec_st = st.lists(st.tuples(st.integers(1, 40), st.floats(0.1, 1e4)), max_size=4,
                   unique_by=lambda t: t[0]).map(PotentialSpec.from_values)
z_st = st.tuples(st.floats(-3.0, 3.0), st.floats(1e-3, 3.0)).map(lambda t: complex(*t))
theta_st = st.floats(0.0, math.pi, exclude_max=True)


def test_m_free_examples():
    assert m_free(1j) == pytest.approx(0.5j * (math.sqrt(5) - 1), abs=1e-14)
    assert m_free(1e-12j) == pytest.approx(1j, abs=1e-9)
    zs = np.linspace(-3, 3, 10)[:, None] + 1j * np.geomspace(1e-3, 3, 10)[None, :]
    assert np.all(m_free(zs).imag > 0)
    with pytest.raises(HerglotzError):
        m_free(1.0 + 0j)


def test_m_free_against_truncation():
    meas = truncated_measure(PotentialSpec.free(), "+", 0.0, 4000)
    assert m_truncated(meas, 1j) == pytest.approx(m_free(1j), abs=1e-10)


def test_halfline_examples(free):
    assert m_halfline(free, 0.0, 1j).value == pytest.approx(0.6180339887j, abs=1e-10)
    m = 0.5j * (math.sqrt(5) - 1)
    assert mobius_theta(m, math.pi / 4) == pytest.approx(-0.2764 + 0.4472j, abs=1e-4)
    assert m_halfline(free, math.pi / 4, 1j).value == pytest.approx(mobius_theta(m, math.pi / 4))
    with pytest.raises(HerglotzError):
        mobius_theta(m, math.pi / 2)


def test_shifted_operator_is_continued_fraction():
    spec = PotentialSpec.from_values([(1, 2.0), (3, 0.5)])
    shifted = PotentialSpec.from_values([(2, 0.5)])
    z = 0.3 + 0.2j
    assert m_halfline(spec, math.pi / 2, z).value == pytest.approx(m_halfline(shifted, 0.0, z).value)


def test_truncation_flag_and_tail_bound():
    spec = PotentialSpec.from_values([(3, 2.0), (50, 5.0)])
    z = 0.4 + 0.1j
    exact = m_halfline(spec, 0.3, z).value
    cut = m_halfline(spec, 0.3, z, depth=10)
    assert cut.truncated and not m_halfline(spec, 0.3, z).truncated
    assert abs(cut.value - exact) <= cut.tail_bound


@given(spec_st, z_st, theta_st)
def test_herglotz_property(spec, z, theta):
    assert m_halfline(spec, theta, z).is_herglotz()
    assert m_weyl(spec, theta, z).imag > 0


@given(spec_st, z_st, theta_st)
def test_weyl_versus_rank_one(spec, z, theta):
    """``im m_halfline = cos^2 im m_weyl``; they coincide at ``theta = 0``."""
    mw = m_weyl(spec, theta, z)
    mr = m_halfline(spec, theta, z).value if abs(theta - math.pi / 2) > 1e-15 else None
    if mr is not None and abs(mr) < 1e8:
        assert mr.imag == pytest.approx(math.cos(theta) ** 2 * mw.imag, rel=1e-7, abs=1e-12)
    assert m_weyl(spec, 0.0, z) == pytest.approx(m_halfline(spec, 0.0, z).value)


def test_sup_examples(free):
    # m = i: the family i / (1 - i t) has modulus 1 / sqrt(1 + t^2)
    center, radius = _family_from(np.array([1j]), np.array([1j]))
    assert abs(center[0]) + radius[0] == pytest.approx(1.0)
    t = np.tan(np.linspace(0, math.pi, 513)[:-1])
    assert np.abs(mobius_theta(1j, 0.3)) == pytest.approx(1 / math.sqrt(1 + math.tan(0.3) ** 2))
    assert np.abs(1j / (1 - 1j * t)).max() == pytest.approx(1.0)
    z = 0.5 + 0.2j
    assert sup_over_theta(free, z) == pytest.approx(sup_over_theta_grid(free, z), rel=2e-4)
    assert sup_over_theta(free, z) >= abs(m_halfline(free, 0.0, z).value)


def test_circle_base_on_circle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        spec = random_sparse(rng)
        z = complex(rng.uniform(-2, 2), rng.uniform(0.01, 1))
        fam = theta_family(spec, z)
        assert abs(abs(fam.base.value - fam.center) - fam.radius) < 1e-9 * fam.radius
        assert fam.center.imag - fam.radius >= -1e-12


@given(spec_st, z_st)
def test_weyl_sup_closed_form(spec, z):
    exact = weyl_sup(spec, z)
    grid = weyl_sup_grid(spec, z, 512)
    assert grid <= exact * (1 + 1e-12)
    assert exact >= 1.0 - 1e-12
    # after a Cayley map the family is a circle of radius r run at angle 2 theta,
    # so the grid is within pi/n of the peak
    r = (exact - 1) / (exact + 1)
    c = math.cos(math.pi / 512)
    floor = math.sqrt((1 + r * r + 2 * r * c) / (1 + r * r - 2 * r * c))
    assert grid >= floor * (1 - 1e-9)


def test_weyl_sup_dense_grid_agreement():
    spec = PotentialSpec.from_values([(4, 3.0)])
    z = 0.7 + 0.05j
    assert weyl_sup_grid(spec, z, 1 << 16) == pytest.approx(weyl_sup(spec, z), rel=1e-6)


def test_M_free_line():
    line = PotentialSpec.free(WHOLE_LINE)
    M = M_wholeline(line, 1j)
    assert M.value == pytest.approx(2j / math.sqrt(5), abs=1e-8)
    zs = np.array([0.1 + 0.05j, -1.5 + 0.3j, 2.5 + 1j])
    assert M_wholeline(line, zs).is_herglotz()


def test_m_plus_minus_symmetric():
    spec = PotentialSpec.from_values([(3, 2.0), (-2, 2.0)], domain=WHOLE_LINE)
    z = 0.2 + 0.1j
    assert m_minus(spec, 0.0, z).value == pytest.approx(m_plus(spec, math.pi / 2, z).value)


def test_dkl_weyl_holds_rank_one_fails():
    spec = PotentialSpec.from_values([(4, 3.0), (-6, 2.0), (15, 20.0)], domain=WHOLE_LINE)
    rng = np.random.default_rng(0)
    z = rng.uniform(-2, 2, 300) + 1j * 10 ** rng.uniform(-3, 0, 300)
    ok, M, sup = check_dkl(spec, z)
    assert ok.all()
    ok_r, _, _ = check_dkl(spec, z, convention=RANK_ONE)
    assert not ok_r.all()


def test_jl_examples(free):
    rep = check_jl(free, 0.0, 0.0, 0.5)
    assert rep.ratio == pytest.approx(1.0)
    assert rep.passed
    assert rep.upper / rep.lower == pytest.approx(7 + 4 * math.sqrt(3))


def test_jl_barrier_spec(sparse4):
    for theta in (0.0, 0.7, math.pi / 2, 2.5):
        assert check_jl(sparse4, 0.3, theta, 1e-3).passed


def test_jl_rank_one_variant_fails():
    spec = PotentialSpec.from_values([(10, 3.0)])
    bad = [check_jl(spec, E, th, 1e-2, convention=RANK_ONE).passed
           for E in np.linspace(-1.8, 1.8, 12) for th in np.linspace(0.2, 3.0, 8)]
    assert not all(bad)


def test_dt_examples(free):
    rep = check_dt(free, 0.0, 0.0, 0.5)
    assert rep.L == pytest.approx(4.0)
    assert rep.bound == pytest.approx(0.25)
    assert rep.passed
    assert check_dt(free, 0.0, 0.0, 0.5, power=1).bound == pytest.approx(1 / (4 * 0.5 * math.sqrt(2)))


def test_dt_general_form(sparse4):
    E, theta = 0.4, 1.1
    im = m_weyl(sparse4, theta, complex(E, 1e-2)).imag
    L0 = length_scale(sparse4, E, 1e-2)
    for L in (0.5 * L0, 2.0 * L0, 5.0 * L0):
        assert dt_general_bound(sparse4, E, theta, 1e-2, L) <= im


def test_certificate_examples(free):
    assert certificate_smallness(free, 0.5, 0.1, 0.5, 201, 16, (-1.0, 1.0))
    bad = PotentialSpec.from_values([(3, 1e6)])
    rep = certificate_report(bad, 0.5, 1e-2, 1.5e-2, 401, 8)
    assert not rep.holds and rep.worst > 5
    with pytest.raises(HerglotzError):
        certificate_report(free, 1.5, 0.1, 1.0)
    with pytest.raises(HerglotzError):
        certificate_report(free, 0.5, 0.1, 1.0, family="other")


@pytest.mark.parametrize("family", [RANK_ONE, WEYL])
def test_certificate_padding_monotone(family):
    alpha = 0.5 if family == RANK_ONE else 0.4
    held = [certificate_report(PotentialSpec.from_values([(s, 1e6)]), alpha, 1e-2, 2e-2,
                               301, 8, (-1.5, 1.5), family).holds
            for s in range(2, 120, 4)]
    assert held[-1]
    first = held.index(True)
    assert all(held[first:])


def test_oracle_equivalence():
    rng = np.random.default_rng(11)
    for _ in range(5):
        spec = random_sparse(rng)
        theta = float(rng.uniform(0, math.pi))
        meas = truncated_measure(spec, "+", theta, 2000)
        z = complex(rng.uniform(-2.5, 2.5), rng.uniform(0.05, 1))
        assert m_truncated(meas, z) == pytest.approx(m_halfline(spec, theta, z).value, abs=1e-6)
