from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsedim.fractal import (
    ORACLE,
    FractalError,
    G_values,
    PowerLawMeasure,
    ScalingWindow,
    alpha_derivatives,
    classify_line_energy,
    classify_series,
    dimension_report,
    gamma_estimates,
    jlt_check,
    probe_classes,
    qr_probes,
    scaling_window,
)
from sparsedim.potential import WHOLE_LINE, PotentialSpec

EPS = np.geomspace(1e-1, 1e-8, 15)


def power_window(s: float, c: float = 1.0, eps=EPS) -> ScalingWindow:
    return ScalingWindow(0.0, eps, c * eps ** s, "synthetic")


def test_atom_window(free):
    w = scaling_window(free, "+", 0.0, 0.0, EPS[:6], source=ORACLE, N=1)
    assert np.all(w.masses == 1.0)
    assert gamma_estimates(w) == (0.0, 0.0)
    assert any("resolution" in msg for msg in w.warnings)


@pytest.mark.parametrize("s", [0.0, 0.3, 0.7, 1.0])
def test_power_law_exact(s):
    gm, gp = gamma_estimates(power_window(s, 2.5))
    assert abs(gm - s) <= 1e-9 and abs(gp - s) <= 1e-9


@pytest.mark.parametrize("s", [0.0, 0.3, 0.7, 1.0])
@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_alpha_flags_match_sign(s, alpha):
    d = alpha_derivatives(power_window(s), alpha)
    assert d.upper_divergent == (s < alpha)
    assert d.lower_divergent == (s < alpha)


def test_alpha_derivative_examples():
    atom = alpha_derivatives(power_window(0.0, eps=np.geomspace(1e-1, 1e-14, 8)), 0.5)
    assert atom.D_upper > 1e6 and atom.upper_divergent
    d = alpha_derivatives(power_window(0.7), 0.5)
    assert d.D_upper < 1 and d.D_lower < 1 and not d.upper_divergent
    with pytest.raises(FractalError):
        alpha_derivatives(power_window(0.7), 1.0)


def test_lower_derivative_diverges_below_exponent():
    """``gamma_plus < eta`` makes the lower eta-derivative blow up as the window shrinks."""
    eta = 0.5
    for s in (0.1, 0.3, 0.45):
        w = power_window(s)
        assert gamma_estimates(w)[1] < eta
        assert alpha_derivatives(w, eta).lower_divergent
        shallow, deep = power_window(s, eps=EPS[:5]), power_window(s, eps=EPS[-5:])
        assert alpha_derivatives(deep, eta).D_lower > alpha_derivatives(shallow, eta).D_lower


@given(st.lists(st.floats(1e-6, 1.0), min_size=5, max_size=12).map(sorted))
def test_flags_monotone(masses):
    eps = np.geomspace(1e-1, 1e-6, len(masses))
    window = ScalingWindow(0.0, eps, np.array(masses)[::-1], "synthetic")
    rep = dimension_report(window, alphas=(0.2, 0.4, 0.6, 0.8))
    assert rep.gamma_minus <= rep.gamma_plus
    for a, b in zip(rep.T_flags, rep.T_flags[1:]):
        assert b or not a
    for u, t in zip(rep.U_flags, rep.T_flags):
        assert t or not u


def test_window_validation():
    with pytest.raises(FractalError):
        ScalingWindow(0.0, np.array([1e-3, 1e-2]), np.array([1.0, 1.0]), "synthetic")
    with pytest.raises(FractalError):
        ScalingWindow(0.0, np.array([1e-2, 1e-3]), np.array([1.0, -1.0]), "synthetic")
    with pytest.raises(FractalError):
        gamma_estimates(power_window(0.5, eps=EPS[:3]))


def test_free_proxy_window(free):
    eps = np.geomspace(1e-1, 1e-3, 12)
    w = scaling_window(free, "+", 0.0, 0.0, eps)
    gm, gp = gamma_estimates(w)
    assert 0.8 < gm <= gp < 1.2
    ratio = w.masses / eps
    assert ratio.max() / ratio.min() < 1.2


def test_proxy_dominates_oracle():
    spec = PotentialSpec.from_values([(5, 2.0), (12, 0.7)])
    eps = np.geomspace(1e-1, 1e-2, 6)
    for E in (-0.9, 0.4):
        p = scaling_window(spec, "+", 0.3, E, eps)
        o = scaling_window(spec, "+", 0.3, E, eps, source=ORACLE)
        assert np.all(p.masses >= o.masses)


def test_proxy_vs_oracle_free(free):
    eps = np.geomspace(1e-1, 1e-3, 8)
    for E in (0.0, 1.1):
        p = gamma_estimates(scaling_window(free, "+", 0.0, E, eps))
        o = scaling_window(free, "+", 0.0, E, eps, source=ORACLE)
        assert not o.warnings
        g = gamma_estimates(o)
        assert abs(p[0] - g[0]) <= 0.15 and abs(p[1] - g[1]) <= 0.15


def test_qr_examples(free):
    eps = np.geomspace(1e-2, 1e-8, 7)
    q, r = qr_probes(free, "+", 0.0, 0.0, 1.0, eps)
    assert q == pytest.approx(1.0, abs=1e-2) and r == pytest.approx(1.0, abs=1e-2)
    atom = PowerLawMeasure(0.3, 0.0, 0.5)
    assert probe_classes(eps, atom.mass(eps), atom.borel(eps), 0.5) == ("infinite",) * 3


def test_power_law_borel_matches_quadrature():
    from scipy.integrate import quad

    meas = PowerLawMeasure(0.0, 0.5, 1.0)
    eps = 0.03
    # substitute x = t^2 to remove the endpoint singularity
    f = lambda t: 4.0 * eps / (t ** 4 + eps * eps)  # noqa: E731
    ref, _ = quad(f, 0.0, 1.0, points=[math.sqrt(eps)], limit=200)
    assert meas.borel(eps).imag == pytest.approx(ref, rel=1e-8)


def test_probe_panel_agreement():
    eps = np.geomspace(1e-2, 1e-12, 21)
    for s in (0.0, 0.5, 1.0):
        meas = PowerLawMeasure(0.0, s, 0.7)
        for alpha in (0.25, 0.5, 0.75):
            d, q, r = probe_classes(eps, meas.mass(eps), meas.borel(eps), alpha)
            assert d == q == r
            expect = "infinite" if s < alpha else ("finite" if s == alpha else "zero")
            assert d == expect


def test_classify_series_threshold():
    eps = np.geomspace(1e-1, 1e-4, 5)
    assert classify_series(eps, np.full(5, 2e6)) == "infinite"
    assert classify_series(eps, np.full(5, 3.0)) == "finite"
    assert classify_series(eps, eps) == "zero"


def test_jlt_examples():
    rep = jlt_check(0.0, 0.03, 0.0, 0.5)
    assert rep.applicable and rep.passed and rep.bound == 0.0
    assert jlt_check(0.0, 0.1, 0.0, 0.5).passed is False
    assert jlt_check(0.0, 0.5, 0.5, 1.0).bound == pytest.approx(2 / 3)
    skipped = jlt_check(0.2, 0.9, 0.1, 1e-5)
    assert skipped.passed is None


@pytest.mark.parametrize("s", [0.0, 0.5])
def test_jlt_on_power_laws(s):
    """The hypothesis ``liminf eps^(1-eta) im m > 0`` holds for ``eta = s``."""
    eps = np.geomspace(1e-2, 1e-10, 12)
    meas = PowerLawMeasure(0.0, s, 1.0)
    gm, gp = gamma_estimates(meas.window(eps))
    probe = float((eps ** (1 - s) * meas.borel(eps).imag).min())
    rep = jlt_check(gm, gp, s, probe)
    assert rep.applicable and rep.passed


def test_G_symmetric():
    spec = PotentialSpec.from_values([(3, 2.0), (-2, 2.0), (7, 0.5), (-6, 0.5)], domain=WHOLE_LINE)
    G = G_values(spec, math.pi / 4, 0.37, np.geomspace(1e-1, 1e-5, 9))
    assert np.allclose(G, 0.5, atol=1e-10)


@given(st.floats(-1.9, 1.9), st.floats(0.0, math.pi, exclude_max=True))
def test_G_in_unit_interval(E, theta):
    spec = PotentialSpec.from_values([(4, 3.0), (-3, 1.0), (9, 0.2)], domain=WHOLE_LINE)
    G = G_values(spec, theta, E, np.geomspace(1e-1, 1e-6, 6))
    assert np.all((G >= 0) & (G <= 1))


def test_classify_line_energy():
    line = PotentialSpec.free(WHOLE_LINE)
    rec = classify_line_energy(line, 0.5, 200, np.geomspace(1e-1, 1e-4, 6))
    assert rec.matched and np.allclose(rec.G_values, 0.5, atol=1e-2) and rec.liminf_flag is False
    spec = PotentialSpec.from_values([(4, 3.0), (-3, 1.0)], domain=WHOLE_LINE)
    rec = classify_line_energy(spec, 0.5, 400, np.geomspace(1e-1, 1e-4, 6))
    if rec.G_values is not None:
        assert 0 <= rec.min_G <= 1
    with pytest.raises(FractalError):
        classify_line_energy(PotentialSpec.free(), 0.5, 100, np.geomspace(1e-1, 1e-4, 6))
