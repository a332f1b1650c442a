"""Finite-window estimators of local scaling exponents.

Every asymptotic quantity (liminf/limsup as ``eps -> 0``) is replaced by the
min/max over an explicit, decreasing ``eps``-window, and the window travels
with the result.  Nothing here extrapolates below the smallest ``eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import hyp2f1

from .herglotz import M_wholeline, m_halfline, m_minus, m_plus
from .oracle import interval_mass, local_measure, truncated_measure
from .potential import HALF_LINE, WHOLE_LINE, PotentialSpec
from .solution import SolutionError, subordinate_theta

DIVERGENCE_THRESHOLD = 1e6
G_THRESHOLD = 1e-2
SLOPE_TOL = 1e-9
CLASS_TOL = 1e-3
ORACLE = "oracle"
ORACLE_RESOLUTION = 32
ORACLE_N_MAX = 1 << 18
PROXY = "proxy"


class FractalError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingWindow:
    """Masses ``mu(E - eps, E + eps)`` over a decreasing ``eps`` grid."""

    E: float
    eps_values: np.ndarray
    masses: np.ndarray
    source: str
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        eps = np.asarray(self.eps_values, dtype=float)
        mass = np.asarray(self.masses, dtype=float)
        if eps.shape != mass.shape or eps.ndim != 1:
            raise FractalError("eps_values and masses must be 1-D of equal length")
        if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise FractalError("eps_values must be positive and strictly decreasing")
        if np.any(mass < 0):
            raise FractalError("masses must be nonnegative")
        object.__setattr__(self, "eps_values", eps)
        object.__setattr__(self, "masses", mass)


def _side_m(spec: PotentialSpec, side: str, theta: float, z):
    if side == "line":
        return M_wholeline(spec, z).value
    if spec.domain == HALF_LINE:
        if side != "+":
            raise FractalError("a half-line spec only has the '+' side")
        return m_halfline(spec, theta, z).value
    return (m_plus if side == "+" else m_minus)(spec, theta, z).value


def scaling_window(spec: PotentialSpec, side: str, theta: float, E: float, eps_grid,
                   source: str = PROXY, N: int | None = None) -> ScalingWindow:
    """Masses from the truncation oracle or from the proxy ``2 eps im m(E + i eps)``.

    The proxy dominates the true mass: the Poisson kernel is at least
    ``1/(2 eps)`` on ``(E - eps, E + eps)``.  With ``N`` given the oracle uses
    one ``N``-site truncation; otherwise each ``eps`` gets its own truncation
    with about ``ORACLE_RESOLUTION`` eigenvalues inside the interval.
    """
    eps = np.asarray(eps_grid, dtype=float)
    warnings = []
    if source == PROXY:
        m = _side_m(spec, side, theta, E + 1j * eps)
        masses = 2.0 * eps * np.imag(m)
    elif source == ORACLE:
        span = max(abs(spec.support_max), abs(spec.support_min), 1)
        if N is not None:
            mu = truncated_measure(spec, side, theta, N)
            masses = np.array([interval_mass(mu, E - e, E + e) for e in eps])
            near = int(np.sum(np.abs(mu.energies - E) < eps.min()))
        else:
            masses, near = np.zeros(len(eps)), math.inf
            for j, e in enumerate(eps):
                n_e = max(2 * span, int(math.ceil(ORACLE_RESOLUTION * math.pi / e)))
                if n_e > ORACLE_N_MAX:
                    n_e = ORACLE_N_MAX
                    warnings.append(f"oracle size capped at {ORACLE_N_MAX} for eps={e:.3g}")
                mu = local_measure(spec, side, theta, E, e, n_e)
                masses[j] = mu.total
                near = min(near, len(mu))
        if near < 10:
            warnings.append(f"oracle resolution: {int(near)} eigenvalues within eps_min of E")
    else:
        raise FractalError(f"unknown source {source!r}")
    return ScalingWindow(float(E), eps, masses, source, tuple(warnings))


def local_slopes(eps: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``log(v_{j+1}/v_j) / log(eps_{j+1}/eps_j)`` over consecutive positive values."""
    keep = values > 0
    e, v = eps[keep], values[keep]
    if len(e) < 2:
        return np.zeros(0)
    return np.diff(np.log(v)) / np.diff(np.log(e))


def gamma_estimates(window: ScalingWindow) -> tuple[float, float]:
    """``(gamma_minus, gamma_plus)``: min and max local log-log slope of the masses.

    Points with zero mass are dropped.
    """
    if len(window.eps_values) < 4:
        raise FractalError("need at least 4 eps points")
    s = local_slopes(window.eps_values, window.masses)
    if len(s) == 0:
        return math.inf, math.inf
    return float(s.min()), float(s.max())


def classify_series(eps: np.ndarray, values: np.ndarray, threshold: float = DIVERGENCE_THRESHOLD,
                    tol: float = CLASS_TOL) -> str:
    """Finite-window surrogate of ``lim_{eps->0} f(eps)``: 'infinite', 'zero' or 'finite'.

    'infinite' when ``f`` exceeds ``threshold`` or still grows at the
    smallest scales (last local slope below ``-tol``); 'zero' when it still
    decays there; otherwise 'finite'.
    """
    v = np.asarray(values, dtype=float)
    if np.any(v > threshold):
        return "infinite"
    s = local_slopes(np.asarray(eps, dtype=float), v)
    if len(s) == 0:
        return "zero"
    if s[-1] < -tol:
        return "infinite"
    if s[-1] > tol:
        return "zero"
    return "finite"


@dataclass(frozen=True)
class AlphaDerivatives:
    alpha: float
    D_upper: float
    D_lower: float
    upper_divergent: bool     # E in T_inf^alpha
    lower_divergent: bool     # E in U_inf^alpha
    threshold: float


def alpha_derivatives(window: ScalingWindow, alpha: float,
                      threshold: float = DIVERGENCE_THRESHOLD, tol: float = SLOPE_TOL) -> AlphaDerivatives:
    """Max/min of ``mass / eps^alpha`` over the window with divergence flags.

    The upper derivative diverges when the ratio passes ``threshold`` or still
    grows at the smallest scale; the lower one when its minimum passes
    ``threshold`` or it grows at every scale of the window.
    """
    if not 0 < alpha < 1:
        raise FractalError("alpha must lie in (0, 1)")
    eps, mass = window.eps_values, window.masses
    r = mass / eps ** alpha
    s = local_slopes(eps, r)
    upper = bool(r.max() > threshold or (len(s) and s[-1] < -tol))
    lower = bool(r.min() > threshold or (len(s) and np.all(s < -tol)))
    return AlphaDerivatives(alpha, float(r.max()), float(r.min()), upper, lower, threshold)


@dataclass(frozen=True)
class DimensionReport:
    E: float
    gamma_minus: float
    gamma_plus: float
    alphas: tuple[float, ...]
    T_flags: tuple[bool, ...]
    U_flags: tuple[bool, ...]
    eps_max: float
    eps_min: float
    n_eps: int
    source: str
    threshold: float


def dimension_report(window: ScalingWindow, alphas=(0.25, 0.5, 0.75),
                     threshold: float = DIVERGENCE_THRESHOLD) -> DimensionReport:
    gm, gp = gamma_estimates(window)
    ds = [alpha_derivatives(window, a, threshold) for a in alphas]
    return DimensionReport(window.E, gm, gp, tuple(alphas), tuple(d.upper_divergent for d in ds),
                           tuple(d.lower_divergent for d in ds), float(window.eps_values[0]),
                           float(window.eps_values[-1]), len(window.eps_values), window.source, threshold)


# ----------------------------------------------------------------------------
# Borel-transform probes


def qr_from_values(eps, m_values, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Series ``eps^(1-alpha) im m`` and ``eps^(1-alpha) |m|``."""
    eps = np.asarray(eps, dtype=float)
    m = np.asarray(m_values, dtype=complex)
    w = eps ** (1.0 - alpha)
    return w * m.imag, w * np.abs(m)


def qr_probes(spec: PotentialSpec, side: str, theta: float, E: float, alpha: float, eps_grid):
    """``(Q, R)``: max over the grid of ``eps^(1-alpha) im m`` and ``eps^(1-alpha) |m|``."""
    eps = np.asarray(eps_grid, dtype=float)
    q, r = qr_from_values(eps, _side_m(spec, side, theta, E + 1j * eps), alpha)
    return float(q.max()), float(r.max())


def probe_classes(eps, masses, m_values, alpha: float, threshold: float = DIVERGENCE_THRESHOLD,
                  tol: float = CLASS_TOL):
    """Classify the ``(D_upper, Q, R)`` series; in the limit the three always agree."""
    eps = np.asarray(eps, dtype=float)
    d = np.asarray(masses, dtype=float) / eps ** alpha
    q, r = qr_from_values(eps, m_values, alpha)
    return tuple(classify_series(eps, x, threshold, tol) for x in (d, q, r))


@dataclass(frozen=True)
class PowerLawMeasure:
    """Density ``c |x - E0|^(s-1)`` on ``[E0 - 1, E0 + 1]``; ``s = 0`` is the atom ``c delta_E0``.

    Masses and the Borel transform above ``E0`` are exact, so windows built
    from it have known exponents.
    """

    E0: float
    s: float
    c: float = 1.0

    def __post_init__(self):
        if not 0 <= self.s <= 1:
            raise FractalError("s must lie in [0, 1]")

    def mass(self, eps) -> np.ndarray:
        eps = np.minimum(np.asarray(eps, dtype=float), 1.0)
        if self.s == 0:
            return np.full_like(eps, self.c)
        return 2.0 * self.c * eps ** self.s / self.s

    def borel(self, eps) -> np.ndarray:
        """``m(E0 + i eps)``; purely imaginary by symmetry."""
        eps = np.asarray(eps, dtype=float)
        if self.s == 0:
            return 1j * self.c / eps
        X = 1.0 / eps
        s = self.s
        # int_0^X t^(s-1)/(1+t^2) dt in closed form
        integral = X ** s / s * hyp2f1(1.0, 0.5 * s, 1.0 + 0.5 * s, -X * X)
        return 2j * self.c * eps ** (s - 1.0) * integral

    def window(self, eps_grid) -> ScalingWindow:
        eps = np.asarray(eps_grid, dtype=float)
        return ScalingWindow(self.E0, eps, self.mass(eps), "synthetic")


@dataclass(frozen=True)
class JLTReport:
    applicable: bool
    eta: float
    gamma_minus: float
    gamma_plus: float
    bound: float
    weak_bound: float
    slack: float

    @property
    def passed(self) -> bool | None:
        """None when the hypothesis is unmet (check skipped)."""
        if not self.applicable:
            return None
        return self.gamma_plus <= self.bound + self.slack and self.gamma_plus <= self.weak_bound + self.slack


def jlt_check(gamma_minus: float, gamma_plus: float, eta: float, probe_liminf: float,
              threshold: float = 1e-3, slack: float = 0.05) -> JLTReport:
    """``gamma_plus <= eta (2 - gamma_minus) / (2 - eta)`` when ``liminf eps^(1-eta) im m > 0``."""
    if not 0 <= eta < 1:
        raise FractalError("eta must lie in [0, 1)")
    bound = eta * (2.0 - gamma_minus) / (2.0 - eta)
    weak = 2.0 * eta / (2.0 - eta)
    return JLTReport(probe_liminf > threshold, eta, gamma_minus, gamma_plus, bound, weak, slack)


# ----------------------------------------------------------------------------
# whole-line energy classification


@dataclass(frozen=True)
class LineEnergyRecord:
    E: float
    theta_E: float | None
    theta_minus: float | None
    matched: bool
    G_values: np.ndarray | None
    min_G: float | None
    liminf_flag: bool | None
    reason: str = ""


def _angle_gap(a: float, b: float) -> float:
    d = (a - b) % math.pi
    return min(d, math.pi - d)


def G_values(spec: PotentialSpec, theta: float, E: float, delta_grid) -> np.ndarray:
    """``im m_+^theta / (im m_+^theta + im m_-^theta)`` at ``E + i delta``."""
    z = E + 1j * np.asarray(delta_grid, dtype=float)
    a = np.imag(m_plus(spec, theta, z).value)
    b = np.imag(m_minus(spec, theta, z).value)
    return a / (a + b)


def classify_line_energy(spec: PotentialSpec, E: float, L: float, delta_grid,
                         threshold: float = G_THRESHOLD, match_tol: float = 1e-2) -> LineEnergyRecord:
    """Subordinate phase on both sides at length ``L`` and the ``G`` profile.

    The left side is reflected, so a whole-line solution with phase
    ``theta`` appears there with phase ``pi/2 - theta``.
    """
    if spec.domain != WHOLE_LINE:
        raise FractalError("needs a whole-line spec")
    try:
        p = subordinate_theta(spec.restrict("+"), E, L)
        q = subordinate_theta(spec.restrict("-"), E, L)
    except SolutionError as exc:
        return LineEnergyRecord(E, None, None, False, None, None, None, f"no-classification: {exc}")
    if p.degenerate or q.degenerate:
        return LineEnergyRecord(E, None, None, False, None, None, None, "no-classification: degenerate Gram")
    theta_minus = (0.5 * math.pi - q.theta) % math.pi
    matched = _angle_gap(p.theta, theta_minus) <= match_tol
    G = G_values(spec, p.theta, E, delta_grid)
    mg = float(G.min())
    return LineEnergyRecord(E, p.theta, theta_minus, matched, G, mg, mg < threshold,
                            "" if matched else "no-subordinate: phases differ")


# ----------------------------------------------------------------------------
# half-line versus whole-line contrast


@dataclass(frozen=True)
class ContrastRecord:
    E: float
    half_gammas: tuple[float, ...]     # gamma_minus per (side, theta)
    line_gamma: float


def dimension_contrast(spec: PotentialSpec, energies, eps_hi: float, eps_lo: float, n_eps: int = 16,
                       thetas=None) -> list[ContrastRecord]:
    """Lower exponents of half-line proxies (both sides, theta grid) against the whole-line proxy."""
    if thetas is None:
        thetas = [j * math.pi / 8 for j in range(8)]
    eps = np.geomspace(eps_hi, eps_lo, n_eps)
    out = []
    for E in energies:
        hg = []
        for side in ("+", "-"):
            for th in thetas:
                w = scaling_window(spec, side, th, E, eps)
                hg.append(gamma_estimates(w)[0])
        wl = scaling_window(spec, "line", 0.0, E, eps)
        out.append(ContrastRecord(float(E), tuple(hg), gamma_estimates(wl)[0]))
    return out
