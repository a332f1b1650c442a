"""Transfer matrices and overflow-safe cocycle products.

``Phi_{k,m}(E) = T_m(E) T_{m-1}(E) ... T_k(E)`` maps ``(u(k), u(k-1))`` to
``(u(m+1), u(m))``.  Products are carried as a unit matrix times
``exp(log_scale)``; rescaling is done by exact powers of two so the unit
entries never pick up rounding from the bookkeeping.

Everything is vectorized over an array of energies; free stretches between
barriers are raised to their power by repeated squaring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .potential import PotentialSpec

LN2 = math.log(2.0)
_HI = 2.0 ** 32
_LO = 2.0 ** -32


class CocycleError(ValueError):
    pass


def transfer_matrix(v: float, E: float) -> np.ndarray:
    """``T(E) = [[E - v, -1], [1, 0]]``."""
    if not (math.isfinite(v) and math.isfinite(E)):
        raise CocycleError(f"non-finite transfer-matrix input v={v!r}, E={E!r}")
    return np.array([[E - v, -1.0], [1.0, 0.0]])


def spectral_norm(a, b, c, d):
    """2-norm of ``[[a, b], [c, d]]`` in closed form (vectorized)."""
    p = np.hypot(a + d, c - b)
    q = np.hypot(a - d, b + c)
    return 0.5 * (p + q)


@dataclass(frozen=True)
class ScaledMatrix:
    """``exp(log_scale) * unit`` with ``max|unit| in [1/2, 2)``.

    ``log_abs_det`` is ``ln|det|`` of the represented matrix, accumulated
    from the determinants of the individual factors.
    """

    unit: np.ndarray
    log_scale: float
    log_abs_det: float = 0.0

    @property
    def matrix(self) -> np.ndarray:
        """Represented matrix; overflows to ``inf`` when ``log_scale`` is large."""
        with np.errstate(over="ignore"):
            return self.unit * np.exp(self.log_scale)

    def log_norm(self) -> float:
        a, b, c, d = self.unit.ravel()
        return self.log_scale + math.log(float(spectral_norm(a, b, c, d)))

    def norm(self) -> float:
        return math.exp(self.log_norm())

    def det(self) -> float:
        """Tracked determinant; every factor has determinant ``+1`` (or a positive scale)."""
        return math.exp(self.log_abs_det)

    def det_direct(self) -> float:
        """``det(unit) * exp(2 log_scale)`` from the unit entries; only meaningful for moderate norms."""
        a, b, c, d = self.unit.ravel()
        return float(a * d - b * c) * math.exp(2.0 * self.log_scale)

    def apply(self, x: np.ndarray) -> tuple[np.ndarray, float]:
        """``(unit @ x, log_scale)``; the image is ``exp(log_scale) * unit @ x``."""
        return self.unit @ np.asarray(x, dtype=float), self.log_scale


class _Batch:
    """2x2 matrices over an energy grid: entries ``a, b, c, d`` times ``2**e2 * exp(lx)``."""

    __slots__ = ("a", "b", "c", "d", "e2", "lx", "ldet")

    def __init__(self, a, b, c, d, e2=None, lx=None, ldet=None):
        self.a, self.b, self.c, self.d = a, b, c, d
        n = a.shape
        self.e2 = np.zeros(n, dtype=np.int64) if e2 is None else e2
        self.lx = np.zeros(n) if lx is None else lx
        self.ldet = np.zeros(n) if ldet is None else ldet

    @classmethod
    def identity(cls, n):
        one, zero = np.ones(n), np.zeros(n)
        return cls(one, zero.copy(), zero.copy(), one.copy())

    def copy(self):
        return _Batch(self.a.copy(), self.b.copy(), self.c.copy(), self.d.copy(),
                      self.e2.copy(), self.lx.copy(), self.ldet.copy())

    def _rescale(self, force=False):
        mx = np.maximum(np.maximum(np.abs(self.a), np.abs(self.b)), np.maximum(np.abs(self.c), np.abs(self.d)))
        need = (mx > _HI) | (mx < _LO) if not force else np.ones(mx.shape, dtype=bool)
        need &= mx > 0
        if not need.any():
            return
        _, ex = np.frexp(np.where(need, mx, 1.0))
        ex = np.where(need, ex, 0)
        self.a = np.ldexp(self.a, -ex)
        self.b = np.ldexp(self.b, -ex)
        self.c = np.ldexp(self.c, -ex)
        self.d = np.ldexp(self.d, -ex)
        self.e2 = self.e2 + ex

    def lmul(self, o: "_Batch"):
        """``self <- o @ self``."""
        a = o.a * self.a + o.b * self.c
        b = o.a * self.b + o.b * self.d
        c = o.c * self.a + o.d * self.c
        d = o.c * self.b + o.d * self.d
        self.a, self.b, self.c, self.d = a, b, c, d
        self.e2 = self.e2 + o.e2
        self.lx = self.lx + o.lx
        self.ldet = self.ldet + o.ldet
        self._rescale()

    def log_scale(self):
        return self.e2 * LN2 + self.lx


def _barrier_factor(E: np.ndarray, barrier) -> _Batch:
    one = np.ones_like(E)
    if barrier.value is not None:
        f = _Batch(E - barrier.value, -one, one.copy(), np.zeros_like(E))
        f.ldet = _log_abs_det(f)
        f._rescale(force=True)
        return f
    # log-only barrier: T = V * [[E/V - 1, -1/V], [1/V, 0]]
    inv = math.exp(-barrier.log_value)
    f = _Batch(E * inv - 1.0, -inv * one, inv * one, np.zeros_like(E))
    f.lx = np.full(E.shape, barrier.log_value)
    if inv * inv > 0:
        f.ldet = _log_abs_det(f) + 2.0 * barrier.log_value
    else:
        # 1/V^2 underflows; the factor is a transfer matrix, det = 1
        f.ldet = np.zeros(E.shape)
    f._rescale(force=True)
    return f


def _log_abs_det(f: _Batch) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(f.a * f.d - f.b * f.c))


def _free_power(E: np.ndarray, n: int) -> _Batch:
    """``[[E, -1], [1, 0]]**n`` by repeated squaring."""
    result = _Batch.identity(E.shape)
    if n <= 0:
        return result
    one = np.ones_like(E)
    base = _Batch(E.copy(), -one, one.copy(), np.zeros_like(E))
    base.ldet = _log_abs_det(base)
    base._rescale(force=True)
    while True:
        if n & 1:
            result.lmul(base)
        n >>= 1
        if not n:
            break
        sq = base.copy()
        sq.lmul(base)
        base = sq
    return result


def _product(spec: PotentialSpec, E: np.ndarray, k: int, m: int) -> _Batch:
    """``T_m ... T_k`` over the grid ``E`` (identity when ``k > m``)."""
    acc = _Batch.identity(E.shape)
    pos = k
    for b in spec.barriers:
        if b.site < k:
            continue
        if b.site > m:
            break
        if b.site > pos:
            acc.lmul(_free_power(E, b.site - pos))
        acc.lmul(_barrier_factor(E, b))
        pos = b.site + 1
    if m >= pos:
        acc.lmul(_free_power(E, m - pos + 1))
    acc._rescale(force=True)
    return acc


def _check_range(spec: PotentialSpec, k: int, m: int) -> None:
    if k > m:
        raise CocycleError(f"propagate needs k <= m, got k={k}, m={m}")
    if spec.domain == "half_line" and k < 1:
        raise CocycleError(f"site {k} outside the half-line")


def propagate(spec: PotentialSpec, E: float, k: int, m: int) -> ScaledMatrix:
    """Scaled ``Phi_{k,m}(E) = T_m(E) ... T_k(E)``."""
    _check_range(spec, k, m)
    if not math.isfinite(E):
        raise CocycleError("energy must be finite")
    p = _product(spec, np.array([float(E)]), k, m)
    unit = np.array([[p.a[0], p.b[0]], [p.c[0], p.d[0]]])
    return ScaledMatrix(unit, float(p.log_scale()[0]), float(p.ldet[0]))


def propagate_grid(spec: PotentialSpec, energies, k: int, m: int):
    """Vectorized :func:`propagate`: returns ``(units (n,2,2), log_scales (n,))``."""
    _check_range(spec, k, m)
    E = np.asarray(energies, dtype=float)
    p = _product(spec, E, k, m)
    units = np.stack([np.stack([p.a, p.b], -1), np.stack([p.c, p.d], -1)], -2)
    return units, p.log_scale()


def log_norm_grid(spec: PotentialSpec, energies, k: int, m: int) -> np.ndarray:
    """``ln ||Phi_{k,m}(E)||_2`` over an energy grid; 0 for the empty product."""
    E = np.asarray(energies, dtype=float)
    if k > m:
        return np.zeros(E.shape)
    p = _product(spec, E, k, m)
    return p.log_scale() + np.log(spectral_norm(p.a, p.b, p.c, p.d))


def lyapunov_estimate(spec: PotentialSpec, E: float, n: int) -> float:
    """Finite-``n`` Lyapunov exponent ``(1/n) ln ||Phi_n(E)||``."""
    if n < 1:
        raise CocycleError("n must be >= 1")
    return propagate(spec, E, 1, n).log_norm() / n


def lyapunov_grid(spec: PotentialSpec, energies, n: int) -> np.ndarray:
    if n < 1:
        raise CocycleError("n must be >= 1")
    return log_norm_grid(spec, energies, 1, n) / n


def _block_bounds(spec: PotentialSpec, last: int, e_max: float = 2.0):
    """Sup-norm and derivative bounds of the blocks of ``Phi_{1,last}`` for ``|E| <= e_max``.

    Free stretch of length l: ``||T0^l|| <= 2(l+1)`` on ``[-2, 2]`` (Chebyshev
    bound), derivative ``<= sum_j B(l-1-j) B(j)``.  Barrier ``v``:
    ``||T|| <= |v| + e_max + 1``, derivative 1.
    """
    blocks = []
    pos = 1
    for b in spec.barriers:
        if b.site > last:
            break
        if b.site > pos:
            blocks.append(("free", b.site - pos))
        blocks.append(("bar", b.log_value))
        pos = b.site + 1
    if last >= pos:
        blocks.append(("free", last - pos + 1))
    logB, D = [], []
    for kind, val in blocks:
        if kind == "free":
            l = val
            logB.append(math.log(2.0 * (l + 1)))
            D.append(sum(4.0 * (l - j) * (j + 1) for j in range(l)))
        else:
            v = math.exp(val) if val < 700 else math.inf
            logB.append(math.log(v + e_max + 1.0) if math.isfinite(v) else val)
            D.append(1.0)
    return logB, D


def lipschitz_log_bound(spec: PotentialSpec, last: int) -> float:
    """``ln`` of a Lipschitz constant of ``E -> ||Phi_{1,last}(E)||`` on ``[-2, 2]``."""
    logB, D = _block_bounds(spec, last)
    if not logB:
        return -math.inf
    total = sum(logB)
    terms = [math.log(d) + total - lb for d, lb in zip(D, logB) if d > 0]
    if not terms:
        return -math.inf
    mx = max(terms)
    return mx + math.log(sum(math.exp(t - mx) for t in terms))


@dataclass(frozen=True)
class InverseNormEstimate:
    value: float          # certified lower bound on C_n
    grid_value: float     # plain grid minimum of 1/||Phi_{n-1}||
    band: float           # Lipschitz correction added to the grid maximum of ||Phi_{n-1}||
    grid_step: float


def min_inverse_norm_report(spec: PotentialSpec, n: int, grid_step: float) -> InverseNormEstimate:
    if grid_step <= 0:
        raise CocycleError("grid_step must be positive")
    if n < 2:
        return InverseNormEstimate(1.0, 1.0, 0.0, grid_step)
    npts = int(math.ceil(4.0 / grid_step)) + 1
    E = np.linspace(-2.0, 2.0, npts)
    h = 4.0 / (npts - 1)
    lognorm = log_norm_grid(spec, E, 1, n - 1)
    lmax = float(lognorm.max())
    lband = lipschitz_log_bound(spec, n - 1) + math.log(h / 2.0)
    # ||Phi|| <= max_grid + Lip * h/2 everywhere on [-2, 2]
    hi = max(lmax, lband)
    log_upper = hi + math.log(math.exp(lmax - hi) + math.exp(lband - hi))
    return InverseNormEstimate(math.exp(-log_upper), math.exp(-lmax), math.exp(lband), h)


def min_inverse_norm(spec: PotentialSpec, n: int, grid_step: float) -> float:
    """Certified lower estimate of ``C_n = min_{|E|<=2} 1/||Phi_{n-1}(E)||``."""
    return min_inverse_norm_report(spec, n, grid_step).value
