"""Half-line m-functions, their boundary-condition family and the whole-line transform.

Conventions
-----------
``m(z) = <delta_1, (H - z)^{-1} delta_1>`` for the half-line operator on
sites ``1, 2, ...``.  It obeys the backward continued fraction

    m_n = 1 / (V(n) - z - m_{n+1}),

closed beyond the last barrier by the free value ``m_free(z)``, so the result
is exact (up to rounding) once the depth covers the support.  Zero stretches
are applied as powers of the Möbius matrix ``[[0, 1], [-1, -z]]``.

The boundary-condition family is ``m_theta = m / (1 - tan(theta) m)`` for
``theta != pi/2``; ``theta = pi/2`` is the once-shifted operator, whose
m-function is ``m_2``.  Everything is vectorized over ``z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potential import HALF_LINE, WHOLE_LINE, PotentialSpec
from .solution import SolutionError, length_scale, log_norm_L, omega, solve, solve_companion

HALF_PI = 0.5 * math.pi
SQRT3 = math.sqrt(3.0)
# beyond this a barrier decouples to rounding: 1/V^2 < 1e-300
_WALL_LOG = 345.0


WEYL = "weyl"
RANK_ONE = "rank_one"


class HerglotzError(ValueError):
    pass


@dataclass(frozen=True)
class HerglotzSample:
    """Value of a Herglotz function at ``z`` (scalars or matching arrays).

    ``truncated`` is set when barriers past the requested depth were ignored;
    ``tail_bound`` then bounds ``|value - exact|``.
    """

    z: complex | np.ndarray
    value: complex | np.ndarray
    truncated: bool = False
    tail_bound: float | np.ndarray = 0.0

    def is_herglotz(self) -> bool:
        return bool(np.all(np.imag(self.value) > 0))


def _as_z(z) -> tuple[np.ndarray, bool]:
    arr = np.asarray(z, dtype=complex)
    if np.any(arr.imag <= 0):
        raise HerglotzError("z must lie in the open upper half-plane")
    return np.atleast_1d(arr), arr.ndim == 0


def _out(x: np.ndarray, scalar: bool):
    return complex(x[0]) if scalar else x


def _m_free_arr(z: np.ndarray) -> np.ndarray:
    r = np.sqrt(z * z - 4.0)
    big = np.where(np.abs(-z + r) >= np.abs(-z - r), (-z + r) / 2.0, (-z - r) / 2.0)
    # the two roots multiply to 1; take the small one without cancellation
    return 1.0 / big


def m_free(z):
    """m-function of the zero potential, ``(-z + sqrt(z^2 - 4)) / 2`` with ``|m| < 1``."""
    arr, scalar = _as_z(z)
    return _out(_m_free_arr(arr), scalar)


# ----------------------------------------------------------------------------
# continued fraction


def _free_power(z: np.ndarray, g: int):
    """Entries of ``[[0, 1], [-1, -z]]**g``, normalized per ``z``."""
    one = np.ones_like(z)
    a, b, c, d = one, 0 * z, 0 * z, one          # identity
    pa, pb, pc, pd = 0 * z, one, -one, -z
    while g > 0:
        if g & 1:
            a, b, c, d = pa * a + pb * c, pa * b + pb * d, pc * a + pd * c, pc * b + pd * d
            s = np.maximum.reduce([abs(a), abs(b), abs(c), abs(d)])
            a, b, c, d = a / s, b / s, c / s, d / s
        g >>= 1
        if g:
            pa, pb, pc, pd = pa * pa + pb * pc, pa * pb + pb * pd, pc * pa + pd * pc, pc * pb + pd * pd
            s = np.maximum.reduce([abs(pa), abs(pb), abs(pc), abs(pd)])
            pa, pb, pc, pd = pa / s, pb / s, pc / s, pd / s
    return a, b, c, d


def _free_steps(w: np.ndarray, z: np.ndarray, g: int) -> np.ndarray:
    """Apply ``w -> 1/(-z - w)`` ``g`` times."""
    if g <= 0:
        return w
    if g <= 4:
        for _ in range(g):
            w = 1.0 / (-z - w)
        return w
    a, b, c, d = _free_power(z, g)
    return (a * w + b) / (c * w + d)


def _barrier_step(w: np.ndarray, z: np.ndarray, log_value: float, value: float | None) -> np.ndarray:
    if value is None or log_value > _WALL_LOG:
        # 1/(V - z - w) with V beyond double range: |m_n| ~ 1/V, im m_n ~ (im z)/V^2
        return np.full_like(w, math.exp(-log_value) if log_value < 700 else 0.0)
    return 1.0 / (value - z - w)


def _chain(spec: PotentialSpec, z: np.ndarray, depth: int | None):
    """``(m_1, m_2, truncated, ignored)`` for a half-line spec."""
    bars = list(spec.barriers)
    ignored = []
    if depth is not None:
        ignored = [b for b in bars if b.site > depth]
        bars = [b for b in bars if b.site <= depth]
    w = _m_free_arr(z)          # value at the site just past the last kept barrier
    pos = (bars[-1].site + 1) if bars else 2
    v1 = None
    for b in reversed(bars):
        if b.site == 1:
            v1 = b
            break
        w = _free_steps(w, z, pos - (b.site + 1))
        w = _barrier_step(w, z, b.log_value, b.value)
        pos = b.site
    # walk down to site 2
    w = _free_steps(w, z, max(pos - 2, 0)) if pos >= 2 else w
    m2 = w
    if v1 is None:
        m1 = 1.0 / (-z - m2)
    else:
        m1 = _barrier_step(m2, z, v1.log_value, v1.value)
    return m1, m2, bool(ignored), ignored


def _tail_bound(spec: PotentialSpec, z: np.ndarray, depth: int) -> np.ndarray:
    """Diameter of the image of the disk ``|w| <= 1/im z`` at site ``depth+1``.

    The exact ``m_{depth+1}`` lies in that disk, so this bounds the truncation error.
    """
    r = 1.0 / z.imag
    pts = [r * np.exp(1j * t) for t in (0.0, 2.0943951023931953, 4.1887902047863905)]
    imgs = []
    for p in pts:
        w = p + 0 * z
        pos = depth + 1
        kept = [b for b in spec.barriers if b.site <= depth]
        for b in reversed(kept):
            w = _free_steps(w, z, pos - (b.site + 1))
            w = _barrier_step(w, z, b.log_value, b.value)
            pos = b.site
        w = _free_steps(w, z, pos - 1)
        imgs.append(w)
    p1, p2, p3 = imgs
    # circumradius of the three image points
    a, b, c = abs(p2 - p3), abs(p1 - p3), abs(p1 - p2)
    area2 = abs(((p2 - p1) * np.conj(p3 - p1)).imag)
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(area2 > 0, a * b * c / (2.0 * area2), np.inf)
    return 2.0 * R


def _half(spec: PotentialSpec) -> PotentialSpec:
    if spec.domain != HALF_LINE:
        raise HerglotzError("expected a half-line spec; use restrict('+') or restrict('-')")
    return spec


def _is_shift(theta: float) -> bool:
    return abs(float(theta) - HALF_PI) < 1e-15


def mobius_theta(m, theta: float):
    """``m / (1 - tan(theta) m)`` for ``theta != pi/2``."""
    if _is_shift(theta):
        raise HerglotzError("theta = pi/2 is the shifted operator, not a Möbius image")
    t = math.tan(theta)
    return m / (1.0 - t * m)


def m_halfline(spec: PotentialSpec, theta: float, z, depth: int | None = None) -> HerglotzSample:
    """m-function of the half-line operator with boundary phase ``theta``.

    Parameters
    ----------
    spec : PotentialSpec
        Half-line potential.
    theta : float
        Boundary phase in ``[0, pi)``; ``pi/2`` selects the shifted operator.
    z : complex or array_like
        Spectral parameter(s), ``im z > 0``.
    depth : int, optional
        Ignore barriers past this site.  When that drops barriers the sample
        is flagged and carries a rigorous tail bound.
    """
    spec = _half(spec)
    zz, scalar = _as_z(z)
    m1, m2, trunc, _ = _chain(spec, zz, depth)
    if _is_shift(theta):
        val = m2
    else:
        val = mobius_theta(m1, theta)
    bound = 0.0
    if trunc:
        tb = _tail_bound(spec, zz, depth)
        if not _is_shift(theta):
            # the Möbius map is Lipschitz with constant |1/(1 - t m)|^2 near m
            tb = tb * np.abs(1.0 / (1.0 - math.tan(theta) * m1)) ** 2
        bound = float(tb[0]) if scalar else tb
    return HerglotzSample(_out(zz, scalar), _out(val, scalar), trunc, bound)


def m_weyl(spec: PotentialSpec, theta: float, z, depth: int | None = None):
    """Weyl m-function of the pair ``(u_theta, v_theta)``.

    The decaying solution is proportional to ``v_theta - m u_theta``, which
    gives ``(m_0 cos(theta) + sin(theta)) / (cos(theta) - m_0 sin(theta))``
    with ``m_0`` the Dirichlet function.  It agrees with ``m_halfline`` only
    at ``theta = 0``; in general ``im m_halfline = cos(theta)^2 im m_weyl``.
    """
    m0 = m_halfline(spec, 0.0, z, depth).value
    c, s = math.cos(theta), math.sin(theta)
    return (m0 * c + s) / (c - m0 * s)


def m_minus(spec: PotentialSpec, theta: float, z, depth: int | None = None) -> HerglotzSample:
    """``m_-^theta``: spectral measure of ``delta_0`` for ``H_- - cot(theta) <delta_0,.> delta_0``.

    The left half-line is reflected (site ``n <= 0`` to ``1 - n``), so the
    perturbation ``cot(theta)`` is the reflected operator's ``tan(pi/2 - theta)``.
    ``theta = 0`` gives the reflected operator shifted once.
    """
    if spec.domain != WHOLE_LINE:
        raise HerglotzError("m_minus needs a whole-line spec")
    left = spec.restrict("-")
    if float(theta) == 0.0:
        return m_halfline(left, HALF_PI, z, depth)
    zz, scalar = _as_z(z)
    m1, _, trunc, _ = _chain(left, zz, depth)
    # sin/cos form: cot(theta) overflows for tiny theta
    co, si = math.cos(theta), math.sin(theta)
    val = si * m1 / (si - co * m1)
    bound = 0.0
    if trunc:
        tb = _tail_bound(left, zz, depth) * np.abs(si / (si - co * m1)) ** 2
        bound = float(tb[0]) if scalar else tb
    return HerglotzSample(_out(zz, scalar), _out(val, scalar), trunc, bound)


def m_plus(spec: PotentialSpec, theta: float, z, depth: int | None = None) -> HerglotzSample:
    """``m_+^theta`` of a whole-line spec (its ``'+'`` restriction)."""
    return m_halfline(spec.restrict("+"), theta, z, depth)


# ----------------------------------------------------------------------------
# theta family


@dataclass(frozen=True)
class ThetaFamily:
    """The Möbius circle ``{m_theta(z) : theta != pi/2}`` plus the shifted value.

    With ``k = im m / |m|^2`` the circle passes through 0 and has center
    ``i / (2k)`` and radius ``1 / (2k)``.
    """

    base: HerglotzSample
    center: complex | np.ndarray
    radius: float | np.ndarray
    shifted: complex | np.ndarray

    def circle_sup(self):
        return np.abs(self.center) + self.radius

    def sup(self):
        return np.maximum(self.circle_sup(), np.abs(self.shifted))


def _family_from(m1: np.ndarray, m2: np.ndarray):
    k = m1.imag / np.abs(m1) ** 2
    radius = 0.5 / k
    return 1j * radius, radius


def theta_family(spec: PotentialSpec, z, depth: int | None = None) -> ThetaFamily:
    spec = _half(spec)
    zz, scalar = _as_z(z)
    m1, m2, trunc, _ = _chain(spec, zz, depth)
    if np.any(m1.imag <= 0):
        raise HerglotzError("degenerate circle: m is real")
    center, radius = _family_from(m1, m2)
    base = HerglotzSample(_out(zz, scalar), _out(m1, scalar), trunc)
    if scalar:
        return ThetaFamily(base, complex(center[0]), float(radius[0]), complex(m2[0]))
    return ThetaFamily(base, center, radius, m2)


def sup_over_theta(spec: PotentialSpec, z, depth: int | None = None):
    """``sup_theta |m_theta(z)|``: top of the Möbius circle, or ``|m_2|`` if larger."""
    return theta_family(spec, z, depth).sup()


def sup_over_theta_grid(spec: PotentialSpec, z, n_theta: int = 512):
    """Test oracle: max of ``|m_theta(z)|`` over ``n_theta`` equispaced phases.

    The grid ``j pi / n`` contains ``pi/2`` when ``n`` is even.
    """
    spec = _half(spec)
    zz, scalar = _as_z(z)
    m1, m2, _, _ = _chain(spec, zz, None)
    best = np.zeros(zz.shape)
    for j in range(n_theta):
        th = j * math.pi / n_theta
        val = m2 if _is_shift(th) else m1 / (1.0 - math.tan(th) * m1)
        best = np.maximum(best, np.abs(val))
    return float(best[0]) if scalar else best


def weyl_sup(spec: PotentialSpec, z, depth: int | None = None):
    """``sup_theta |m_weyl(theta, z)|`` in closed form.

    The Weyl family is the image of the real line under
    ``t -> (m_0 + t)/(1 - m_0 t)``: the circle with center ``i h`` and radius
    ``sqrt(h^2 - 1)``, ``h = (1 + |m_0|^2) / (2 im m_0)``.
    """
    m0 = m_halfline(spec, 0.0, z, depth).value
    h = (1.0 + np.abs(m0) ** 2) / (2.0 * np.imag(m0))
    return h + np.sqrt(np.maximum((h - 1.0) * (h + 1.0), 0.0))


def weyl_sup_grid(spec: PotentialSpec, z, n_theta: int = 512):
    """Test oracle: max of ``|m_weyl|`` over ``n_theta`` equispaced phases."""
    m0 = np.atleast_1d(np.asarray(m_halfline(spec, 0.0, z).value, dtype=complex))
    th = np.arange(n_theta) * (math.pi / n_theta)
    c, s = np.cos(th)[:, None], np.sin(th)[:, None]
    best = np.abs((m0[None, :] * c + s) / (c - m0[None, :] * s)).max(axis=0)
    return float(best[0]) if np.ndim(z) == 0 else best


# ----------------------------------------------------------------------------
# whole line


def M_wholeline(spec: PotentialSpec, z, N: int | None = None) -> HerglotzSample:
    """Borel transform of ``mu_{delta_0} + mu_{delta_1}`` for a whole-line spec.

    ``G(1,1) = 1/(V(1) - z - m_+^{(2)} - m_-^{(0)})`` and symmetrically for
    ``G(0,0)``, where the half-line values come from the continued fractions.
    ``N`` plays the role of the depth on both sides.
    """
    if spec.domain != WHOLE_LINE:
        raise HerglotzError("M_wholeline needs a whole-line spec")
    zz, scalar = _as_z(z)
    right, left = spec.restrict("+"), spec.restrict("-")
    p1, p2, tr, _ = _chain(right, zz, N)
    q1, q2, tl, _ = _chain(left, zz, N)
    g11 = _site_green(right, 1, zz, p2, q1)
    g00 = _site_green(left, 1, zz, q2, p1)
    val = g00 + g11
    trunc = tr or tl
    bound = 0.0
    if trunc:
        # first-order propagation of the side bounds through the two Schur complements
        tb = 0.0
        if tr:
            tb = tb + _tail_bound(right, zz, N) * (np.abs(g11) ** 2 + np.abs(g00) ** 2)
        if tl:
            tb = tb + _tail_bound(left, zz, N) * (np.abs(g11) ** 2 + np.abs(g00) ** 2)
        bound = float(tb[0]) if scalar else tb
    return HerglotzSample(_out(zz, scalar), _out(val, scalar), trunc, bound)


def _site_green(half: PotentialSpec, site: int, z, m_out, m_other):
    b = half.barrier_at(site)
    if b is None:
        return 1.0 / (-z - m_out - m_other)
    if b.value is None or b.log_value > _WALL_LOG:
        return np.full_like(z, math.exp(-b.log_value) if b.log_value < 700 else 0.0)
    return 1.0 / (b.value - z - m_out - m_other)


def check_dkl(spec: PotentialSpec, z, slack: float = 1e-9, convention: str = WEYL):
    """``|M(z)| <= sup_theta |m_+^theta(z)| + slack`` per sample; returns (ok, M, sup).

    The sup runs over the Weyl family by default.  ``'rank_one'`` uses the
    family ``m_halfline(theta)``, for which the bound is false in general.
    """
    M = np.abs(np.atleast_1d(M_wholeline(spec, z).value))
    plus = spec.restrict("+")
    if convention == WEYL:
        sup = np.atleast_1d(weyl_sup(plus, z))
    elif convention == RANK_ONE:
        sup = np.atleast_1d(sup_over_theta(plus, z))
    else:
        raise HerglotzError(f"unknown convention {convention!r}")
    return M <= sup + slack, M, sup


# ----------------------------------------------------------------------------
# boundary-value inequalities


@dataclass(frozen=True)
class JLReport:
    """Sandwich ``(2-sqrt3)/|m| < ratio < (2+sqrt3)/|m|`` at ``L(eps)``."""

    E: float
    theta: float
    eps: float
    L: float
    ratio: float
    abs_m: float
    lower: float
    upper: float
    slack: float

    @property
    def passed(self) -> bool:
        return (1.0 - self.slack) * self.lower < self.ratio < (1.0 + self.slack) * self.upper

    @property
    def margin(self) -> float:
        """Smallest log-distance to a (slackened) bound; negative on failure."""
        lo = math.log(self.ratio) - math.log((1.0 - self.slack) * self.lower)
        hi = math.log((1.0 + self.slack) * self.upper) - math.log(self.ratio)
        return min(lo, hi)


def _probe_m(spec: PotentialSpec, theta: float, z: complex, convention: str) -> complex:
    if convention == WEYL:
        return complex(m_weyl(spec, theta, z))
    if convention == RANK_ONE:
        return complex(m_halfline(spec, theta, z).value)
    raise HerglotzError(f"unknown convention {convention!r}")


def check_jl(spec: PotentialSpec, E: float, theta: float, eps: float, slack: float = 0.05,
             convention: str = WEYL) -> JLReport:
    """Sandwich at ``L(eps)``.

    ``convention='weyl'`` pairs the norms with ``m_weyl``, the function the
    inequality is about.  ``'rank_one'`` uses ``m_halfline`` instead; that
    variant fails for ``theta != 0`` already on mild single-barrier specs.
    """
    L = length_scale(spec, E, eps)
    N = int(math.floor(L)) + 1
    u = solve(spec, E, theta, N)
    v = solve_companion(spec, E, theta, N)
    ratio = math.exp(log_norm_L(u, L) - log_norm_L(v, L))
    am = abs(_probe_m(spec, theta, complex(E, eps), convention))
    return JLReport(E, theta, eps, L, ratio, am, (2.0 - SQRT3) / am, (2.0 + SQRT3) / am, slack)


@dataclass(frozen=True)
class DTReport:
    """``im m_theta(E + i eps) >= (1 - slack) / (4 eps b)`` with ``b = ||u_theta||^power``."""

    E: float
    theta: float
    eps: float
    L: float
    im_m: float
    b: float
    bound: float
    slack: float
    power: int

    @property
    def passed(self) -> bool:
        return self.im_m >= (1.0 - self.slack) * self.bound


def check_dt(spec: PotentialSpec, E: float, theta: float, eps: float, slack: float = 0.02,
             power: int = 2, convention: str = WEYL) -> DTReport:
    """Lower bound on ``im m_theta`` at the length scale ``L(eps)``.

    ``power=2`` uses the squared truncated norm, the form under which the
    bound is valid; ``power=1`` is the unsquared variant, which the free
    operator already violates for small ``eps``.
    """
    L = length_scale(spec, E, eps)
    u = solve(spec, E, theta, int(math.floor(L)) + 1)
    b = math.exp(power * log_norm_L(u, L))
    im_m = _probe_m(spec, theta, complex(E, eps), convention).imag
    return DTReport(E, theta, eps, L, im_m, b, 1.0 / (4.0 * eps * b), slack, power)


def dt_general_bound(spec: PotentialSpec, E: float, theta: float, eps: float, L: float) -> float:
    """``eps w^2 / (b (1 + eps w)^2)`` at an arbitrary ``L``, ``b = ||u_theta||_L^2``."""
    w = omega(spec, E, L)
    u = solve(spec, E, theta, int(math.floor(L)) + 1)
    b = math.exp(2.0 * log_norm_L(u, L))
    return eps * w * w / (b * (1.0 + eps * w) ** 2)


# ----------------------------------------------------------------------------
# smallness certificate


@dataclass(frozen=True)
class CertificateReport:
    """``delta^alpha * sup_theta |m_theta(E + i delta)| <= 1`` on a grid."""

    alpha: float
    delta_lo: float
    delta_hi: float
    n_energy: int
    n_delta: int
    worst: float                 # max of delta^alpha * sup over the grid
    worst_E: float
    worst_delta: float
    e_range: tuple[float, float] = (-2.0, 2.0)
    extra: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.worst <= 1.0

    def __bool__(self) -> bool:
        return self.holds


def certificate_grid(delta_lo: float, delta_hi: float, n_delta: int) -> np.ndarray:
    return np.geomspace(delta_hi, delta_lo, n_delta)


def certificate_report(spec: PotentialSpec, alpha: float, delta_lo: float, delta_hi: float,
                       n_energy: int = 1000, n_delta: int = 64,
                       e_range: tuple[float, float] = (-2.0, 2.0),
                       family: str = RANK_ONE) -> CertificateReport:
    """Evaluate the smallness certificate for a half-line spec on an ``(E, delta)`` grid.

    ``family`` selects the boundary-condition family whose sup is bounded:
    ``'rank_one'`` (``sup_over_theta``, the default) or ``'weyl'``, the
    family the whole-line comparison ``check_dkl`` needs.
    """
    if not 0 < delta_lo < delta_hi:
        raise HerglotzError("need 0 < delta_lo < delta_hi")
    if not 0 < alpha < 1:
        raise HerglotzError("alpha must lie in (0, 1)")
    if family not in (WEYL, RANK_ONE):
        raise HerglotzError(f"unknown family {family!r}")
    sup = weyl_sup if family == WEYL else sup_over_theta
    spec = _half(spec)
    Es = np.linspace(e_range[0], e_range[1], n_energy)
    worst, wE, wd = -math.inf, math.nan, math.nan
    for d in certificate_grid(delta_lo, delta_hi, n_delta):
        vals = d ** alpha * sup(spec, Es + 1j * d)
        j = int(np.argmax(vals))
        if vals[j] > worst:
            worst, wE, wd = float(vals[j]), float(Es[j]), float(d)
    return CertificateReport(alpha, delta_lo, delta_hi, n_energy, n_delta, worst, wE, wd, tuple(e_range))


def certificate_smallness(spec: PotentialSpec, alpha: float, delta_lo: float, delta_hi: float,
                          n_energy: int = 1000, n_delta: int = 64,
                          e_range: tuple[float, float] = (-2.0, 2.0), family: str = RANK_ONE) -> bool:
    return certificate_report(spec, alpha, delta_lo, delta_hi, n_energy, n_delta, e_range, family).holds
