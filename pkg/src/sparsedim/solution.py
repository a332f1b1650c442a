"""Generalized eigenfunctions, truncated norms and the length scale ``L(eps)``.

Solutions of ``u(n-1) + u(n+1) + V(n) u(n) = E u(n)`` are computed by the
three-term recursion.  Values carry a per-index power-of-two exponent so huge
barriers never overflow.

``omega(L)`` (max times min truncated norm over the circle of normalized
initial data) equals ``sqrt(det G_L)`` for the Gram matrix ``G_L`` of the
basis ``u_0, v_0``.  The determinant is accumulated from Wronskian sums
``P_n = sum_{j<n} W(j, n)^2`` with ``W(j, n) = u_0(j) v_0(n) - u_0(n) v_0(j)``,
which obey an O(1) recurrence in ``n`` and avoid the cancellation in
``g11 g22 - g12^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .potential import PotentialSpec

LN2 = math.log(2.0)
_BIG_EXP = 500               # rescale working values past 2**500
_BIG = 2.0 ** _BIG_EXP
_HUGE_LOG = 200.0            # barriers with ln V above this use the scaled step


class SolutionError(ValueError):
    pass


@dataclass(frozen=True)
class SolutionFrame:
    """Sampled solution ``u(0..N+1)``: ``u(n) = values[n] * 2**exp2[n]``.

    ``cumsq[n] * 4**exp2[n]`` is ``sum_{k=1}^n u(k)^2``.
    """

    theta: float
    E: float
    values: np.ndarray
    exp2: np.ndarray
    cumsq: np.ndarray

    @property
    def N(self) -> int:
        return len(self.values) - 2

    def value(self, n: int) -> float:
        return math.ldexp(float(self.values[n]), int(self.exp2[n]))

    def true_values(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.ldexp(self.values, self.exp2.astype(np.int64))

    def log_sq_prefix(self, n: int) -> float:
        """``ln sum_{k=1}^n u(k)^2`` (``-inf`` for an all-zero prefix)."""
        c = float(self.cumsq[n])
        if c <= 0:
            return -math.inf
        return math.log(c) + 2.0 * LN2 * int(self.exp2[n])


def _recurse(spec: PotentialSpec, E: float, x1: float, x0: float, N: int):
    """Mantissas/exponents of the solution with ``u(1)=x1, u(0)=x0`` on ``0..N+1``."""
    vals = np.empty(N + 2)
    exps = np.zeros(N + 2, dtype=np.int64)
    cum = np.zeros(N + 2)
    huge = {}
    dense = [0.0] * (N + 1)
    for b in spec.barriers:
        if 1 <= b.site <= N:
            if b.value is None or b.log_value > _HUGE_LOG:
                k = int(math.floor(b.log_value / LN2))
                huge[b.site] = (k, math.exp(b.log_value - k * LN2))
            else:
                dense[b.site] = b.value
    vals[0], vals[1] = x0, x1
    prev, cur, e = x0, x1, 0
    run = x1 * x1
    cum[1] = run
    for n in range(1, N + 1):
        if n in huge:
            k, vm = huge[n]
            nxt = (math.ldexp(E, -k) - vm) * cur - math.ldexp(prev, -k)
            cur = math.ldexp(cur, -k)
            e += k
            run = math.ldexp(run, -2 * k)
        else:
            nxt = (E - dense[n]) * cur - prev
        prev, cur = cur, nxt
        if abs(cur) > _BIG:
            prev = math.ldexp(prev, -_BIG_EXP)
            cur = math.ldexp(cur, -_BIG_EXP)
            run = math.ldexp(run, -2 * _BIG_EXP)
            e += _BIG_EXP
        vals[n + 1] = cur
        exps[n + 1] = e
        if n + 1 <= N + 1:
            run += cur * cur
            cum[n + 1] = run
    return vals, exps, cum


def solve(spec: PotentialSpec, E: float, theta: float, N: int) -> SolutionFrame:
    """``u_theta`` with ``(u(1), u(0)) = (cos theta, -sin theta)`` on sites ``0..N+1``."""
    if N < 1:
        raise SolutionError("N must be >= 1")
    vals, exps, cum = _recurse(spec, float(E), math.cos(theta), -math.sin(theta), N)
    return SolutionFrame(float(theta), float(E), vals, exps, cum)


def solve_companion(spec: PotentialSpec, E: float, theta: float, N: int) -> SolutionFrame:
    """``v_theta`` with ``(v(1), v(0)) = (sin theta, cos theta)``."""
    if N < 1:
        raise SolutionError("N must be >= 1")
    vals, exps, cum = _recurse(spec, float(E), math.sin(theta), math.cos(theta), N)
    return SolutionFrame(float(theta), float(E), vals, exps, cum)


def wronskian(u: SolutionFrame, v: SolutionFrame) -> np.ndarray:
    """``u(n+1) v(n) - u(n) v(n+1)`` for ``n = 1..N``."""
    uu, vv = u.true_values(), v.true_values()
    return uu[2:] * vv[1:-1] - uu[1:-1] * vv[2:]


def wronskian_deviation_mp(spec: PotentialSpec, E: float, theta: float, N: int, bits: int = 256) -> float:
    """Max ``|W(n) - 1|`` over ``n <= N`` with the recursion run at ``bits`` bits.

    Values are held as Python integers scaled by ``2**bits`` (fixed point), so
    each step only truncates once below ``2**-bits``.  The coefficient
    ``E - V(n)`` is the double-precision value converted exactly.
    """
    import mpmath

    if N < 1:
        raise SolutionError("N must be positive")
    ctx = mpmath.mp.clone()
    ctx.prec = bits + 64
    one = 1 << bits

    def fixed(x) -> int:
        return int(ctx.nint(ctx.ldexp(x, bits)))

    th = ctx.mpf(theta)
    s, c = fixed(ctx.sin(th)), fixed(ctx.cos(th))
    u_prev, u_cur = -s, c
    v_prev, v_cur = c, s
    free = fixed(ctx.mpf(E))
    worst = 0
    for n in range(1, N + 1):
        lv = spec.log_eval(n)
        if lv == -math.inf:
            a = free
        else:
            a = fixed(ctx.mpf(E) - ctx.exp(ctx.mpf(lv)))
        u_next = ((a * u_cur) >> bits) - u_prev
        v_next = ((a * v_cur) >> bits) - v_prev
        w = (u_next * v_cur - u_cur * v_next) >> bits
        worst = max(worst, abs(w - one))
        u_prev, u_cur = u_cur, u_next
        v_prev, v_cur = v_cur, v_next
    return float(ctx.ldexp(worst, -bits))


def _log_norm_sq(frame: SolutionFrame, L: float) -> float:
    if not (1.0 <= L <= frame.N):
        raise SolutionError(f"L={L} outside [1, {frame.N}]")
    n = int(math.floor(L))
    f = L - n
    base = frame.log_sq_prefix(n)
    if f == 0.0:
        return base
    x = float(frame.values[n + 1])
    if x == 0.0:
        return base
    tail = math.log(f) + 2.0 * (math.log(abs(x)) + LN2 * int(frame.exp2[n + 1]))
    if base == -math.inf:
        return tail
    hi = max(base, tail)
    return hi + math.log(math.exp(base - hi) + math.exp(tail - hi))


def log_norm_L(frame: SolutionFrame, L: float) -> float:
    """``ln ||u||_L``."""
    return 0.5 * _log_norm_sq(frame, L)


def norm_L(frame: SolutionFrame, L: float) -> float:
    """``(sum_{k<=floor L} u(k)^2 + (L - floor L) u(floor L + 1)^2)^(1/2)``."""
    return math.exp(log_norm_L(frame, L))


# ----------------------------------------------------------------------------
# Gram matrix and omega


@dataclass(frozen=True)
class _GramTable:
    """Prefix data of the basis ``u_0, v_0`` up to site ``N``.

    ``logdet[n] = ln det G_n`` (``-inf`` for n <= 1); ``g`` holds
    ``(g11, g22, g12)`` prefix sums with a common exponent per index.
    """

    N: int
    logdet: np.ndarray
    logP: np.ndarray
    g: np.ndarray
    gexp: np.ndarray


def _gram_table(spec: PotentialSpec, E: float, N: int) -> _GramTable:
    u_vals, u_exp, _ = _recurse(spec, E, 1.0, 0.0, N)
    v_vals, v_exp, _ = _recurse(spec, E, 0.0, 1.0, N)
    # u_0 and v_0 are rescaled at the same sites, so their exponents agree
    e = np.maximum(u_exp, v_exp)
    uu = np.ldexp(u_vals, (u_exp - e).astype(np.int64))
    vv = np.ldexp(v_vals, (v_exp - e).astype(np.int64))

    g = np.zeros((N + 2, 3))
    gexp = np.zeros(N + 2, dtype=np.int64)
    s11 = s22 = s12 = 0.0
    ce = 0
    for n in range(1, N + 2):
        en = int(e[n])
        if en != ce:
            sh = -2 * (en - ce)
            s11, s22, s12 = math.ldexp(s11, sh), math.ldexp(s22, sh), math.ldexp(s12, sh)
            ce = en
        a, b = uu[n], vv[n]
        s11 += a * a
        s22 += b * b
        s12 += a * b
        g[n] = (s11, s22, s12)
        gexp[n] = ce

    # Wronskian sums: P_{n+1} = c^2 P_n - 2 c Q_n + R_n + 1, Q_{n+1} = c P_n - Q_n, R_{n+1} = P_n
    logdet = np.full(N + 2, -math.inf)
    logP = np.full(N + 2, -math.inf)
    huge = {}
    for b in spec.barriers:
        if 1 <= b.site <= N + 1:
            huge[b.site] = b
    P, Q, R, pe = 0.0, 0.0, 0.0, 0     # true values are x * 2**pe
    det_log = -math.inf
    for n in range(1, N + 1):
        # step from (P_n, Q_n, R_n) to n+1 uses c = E - V(n)
        b = huge.get(n)
        if b is not None and (b.value is None or b.log_value > _HUGE_LOG):
            k = int(math.floor(b.log_value / LN2))
            vm = math.exp(b.log_value - k * LN2)
            cm = math.ldexp(E, -k) - vm          # c = cm * 2**k
            Pn = cm * cm * P - 2.0 * cm * math.ldexp(Q, -k) + math.ldexp(R, -2 * k) + math.ldexp(1.0, -2 * k - pe)
            Qn = math.ldexp(cm * P, -k) - math.ldexp(Q, -2 * k)
            Rn = math.ldexp(P, -2 * k)
            P, Q, R = Pn, Qn, Rn
            pe += 2 * k
        else:
            c = E - (b.value if b is not None else 0.0)
            P, Q, R = c * c * P - 2.0 * c * Q + R + math.ldexp(1.0, -pe), c * P - Q, P
        if abs(P) > _BIG or abs(R) > _BIG:
            P, Q, R = math.ldexp(P, -_BIG_EXP), math.ldexp(Q, -_BIG_EXP), math.ldexp(R, -_BIG_EXP)
            pe += _BIG_EXP
        lp = math.log(P) + pe * LN2 if P > 0 else -math.inf
        logP[n + 1] = lp
        if lp > -math.inf:
            if det_log == -math.inf:
                det_log = lp
            else:
                hi = max(det_log, lp)
                det_log = hi + math.log(math.exp(det_log - hi) + math.exp(lp - hi))
        logdet[n + 1] = det_log
    return _GramTable(N, logdet, logP, g, gexp)


@lru_cache(maxsize=256)
def _cached_table(spec: PotentialSpec, E: float, N: int) -> _GramTable:
    return _gram_table(spec, E, N)


def _table_for(spec: PotentialSpec, E: float, L: float) -> _GramTable:
    need = max(int(math.floor(L)) + 1, 4)
    N = 64
    while N < need:
        N *= 2
    return _cached_table(spec, float(E), N)


def _log_det_at(tab: _GramTable, L: float) -> float:
    n = int(math.floor(L))
    f = L - n
    base = tab.logdet[n]
    if f == 0.0 or tab.logP[n + 1] == -math.inf:
        return float(base)
    inc = math.log(f) + tab.logP[n + 1]
    if base == -math.inf:
        return inc
    hi = max(base, inc)
    return hi + math.log(math.exp(base - hi) + math.exp(inc - hi))


@dataclass(frozen=True)
class NormProfile:
    """Gram matrix ``G_L`` of ``(u_0, v_0)`` at length ``L``.

    ``gram`` may overflow to ``inf`` for huge barriers; ``log_det`` does not.
    """

    L: float
    gram: np.ndarray
    log_det: float

    @property
    def omega(self) -> float:
        return math.exp(0.5 * self.log_det)

    def eigenvalues(self) -> tuple[float, float]:
        """``(lambda_min, lambda_max)`` with ``lambda_min = det / lambda_max``."""
        g11, g12, g22 = self.gram[0, 0], self.gram[0, 1], self.gram[1, 1]
        lmax = 0.5 * (g11 + g22 + math.hypot(g11 - g22, 2.0 * g12))
        lmin = math.exp(self.log_det) / lmax if lmax > 0 else 0.0
        return lmin, lmax


def norm_profile(spec: PotentialSpec, E: float, L: float) -> NormProfile:
    if L < 1:
        raise SolutionError("L must be >= 1")
    tab = _table_for(spec, E, L)
    n = int(math.floor(L))
    f = L - n
    g = tab.g[n].copy()
    if f > 0:
        # fractional part adds f * (u(n+1)^2, v(n+1)^2, u v)
        nxt = tab.g[n + 1] * 1.0
        sc = math.ldexp(1.0, 2 * int(tab.gexp[n + 1] - tab.gexp[n])) if tab.gexp[n + 1] != tab.gexp[n] else 1.0
        g = g + f * (nxt * sc - g)
    with np.errstate(over="ignore"):
        s = np.ldexp(1.0, 2 * int(tab.gexp[n]))
        g11, g22, g12 = g * s
    gram = np.array([[g11, g12], [g12, g22]])
    return NormProfile(float(L), gram, _log_det_at(tab, L))


def log_omega(spec: PotentialSpec, E: float, L: float) -> float:
    if L < 1:
        raise SolutionError("L must be >= 1")
    return 0.5 * _log_det_at(_table_for(spec, E, L), L)


def omega(spec: PotentialSpec, E: float, L: float) -> float:
    """``(max_eta ||u_eta||_L) * (min_eta ||u_eta||_L)`` as ``sqrt(det G_L)``."""
    return math.exp(log_omega(spec, E, L))


def omega_bruteforce(spec: PotentialSpec, E: float, L: float, n_eta: int = 1000) -> float:
    """Test oracle: explicit max times min of ``||u_eta||_L`` over an eta grid."""
    N = int(math.floor(L)) + 1
    norms = [norm_L(solve(spec, E, eta, N), L) for eta in np.linspace(0.0, math.pi, n_eta, endpoint=False)]
    return max(norms) * min(norms)


class BelowRangeError(SolutionError):
    """``1/eps`` lies below ``omega(1)``."""


def length_scale(spec: PotentialSpec, E: float, eps: float, max_N: int = 1 << 22) -> float:
    """Leftmost ``L`` with ``omega(L) = 1/eps``.

    ``det G_L`` is linear between integers, so once the integer bracket is
    found the crossing is solved exactly.
    """
    if eps <= 0:
        raise SolutionError("eps must be positive")
    target = -2.0 * math.log(eps)           # ln det G at the crossing
    if log_omega(spec, E, 1.0) > -math.log(eps):
        raise BelowRangeError(f"1/eps={1/eps} below omega(1)")
    N = 64
    while True:
        tab = _cached_table(spec, float(E), N)
        if tab.logdet[N] >= target:
            break
        N *= 2
        if N > max_N:
            raise SolutionError(f"omega did not reach 1/eps={1/eps} within N={max_N}")
    ld = tab.logdet
    n = int(np.searchsorted(ld[1:N + 1], target, side="left"))  # first index (from 1) with ld >= target
    n_hi = n + 1
    n_lo = n_hi - 1
    if ld[n_hi] == target:
        return float(n_hi)
    lo = ld[n_lo]
    hi_val = ld[n_hi]
    if lo == -math.inf:
        f = math.exp(target - hi_val)
    else:
        f = (math.exp(target - hi_val) - math.exp(lo - hi_val)) / (1.0 - math.exp(lo - hi_val))
    return n_lo + min(max(f, 0.0), 1.0)


def subordinacy_ratio(spec: PotentialSpec, E: float, theta: float, L: float) -> float:
    """``||u_theta||_L / ||v_theta||_L``."""
    if L < 1:
        raise SolutionError("L must be >= 1")
    N = int(math.floor(L)) + 1
    u = solve(spec, E, theta, N)
    v = solve_companion(spec, E, theta, N)
    return math.exp(log_norm_L(u, L) - log_norm_L(v, L))


@dataclass(frozen=True)
class SubordinateTheta:
    theta: float
    degenerate: bool
    eig_ratio: float   # lambda_min / lambda_max of G_L


def subordinate_theta(spec: PotentialSpec, E: float, L: float, tol: float = 1e-12) -> SubordinateTheta:
    """Boundary phase minimizing ``||u_theta||_L``: smallest eigendirection of ``G_L``."""
    if L < 2:
        raise SolutionError("L must be >= 2")
    prof = norm_profile(spec, E, L)
    g = prof.gram
    if not np.all(np.isfinite(g)):
        raise SolutionError("Gram matrix overflowed; use a shorter L")
    lmin, lmax = prof.eigenvalues()
    g11, g12, g22 = g[0, 0], g[0, 1], g[1, 1]
    degenerate = (lmax - lmin) <= tol * lmax
    # eigenvector (x1, x2) of lambda_min, better conditioned of the two forms
    c1 = np.array([g12, lmin - g11])
    c2 = np.array([lmin - g22, g12])
    x = c1 if np.hypot(*c1) >= np.hypot(*c2) else c2
    if not np.any(x):
        x = np.array([1.0, 0.0])
    # u_eta = cos(eta) u_0 - sin(eta) v_0 corresponds to (cos eta, -sin eta)
    theta = math.atan2(-x[1], x[0]) % math.pi
    if theta >= math.pi:
        theta -= math.pi
    return SubordinateTheta(theta, bool(degenerate), lmin / lmax if lmax > 0 else 1.0)
