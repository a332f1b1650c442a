"""Ground truth from finite symmetric tridiagonal truncations.

The truncated operator has unit off-diagonals and the potential on the
diagonal, with a Dirichlet cut at the window edge.  Barriers of size
``>= WALL`` are treated as walls: the window is cut just before them.  A wall
of height ``V`` couples to its neighbours only at order ``1/V``, while keeping
it in the matrix would cost a backward error of ``eps * V`` on every
eigenvalue.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.sparse.linalg import eigsh

from .potential import HALF_LINE, WHOLE_LINE, PotentialSpec

WALL_LOG = math.log(1e10)
HALF_PI = 0.5 * math.pi
# below this size a dense eigen-decomposition is cheaper than shift-invert Lanczos
DENSE_MAX = 3000


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite measure ``sum_j w_j delta_{E_j}`` with sorted energies."""

    energies: np.ndarray
    weights: np.ndarray
    note: str = ""

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.energies)


def _merge(E: np.ndarray, w: np.ndarray, tol: float = 1e-12, note: str = "") -> AtomicMeasure:
    order = np.argsort(E, kind="stable")
    E, w = E[order], w[order]
    if len(E) > 1:
        keep = np.concatenate(([True], np.diff(E) > tol))
        if not keep.all():
            groups = np.cumsum(keep) - 1
            w = np.bincount(groups, weights=w)
            E = E[keep]
    return AtomicMeasure(E, w, note)


def _diagonal(half: PotentialSpec, lo: int, hi: int) -> tuple[np.ndarray, int | None]:
    """Diagonal on sites ``lo..hi`` and the first wall site (or None)."""
    d = np.zeros(hi - lo + 1)
    wall = None
    for b in half.barriers:
        if lo <= b.site <= hi:
            if b.log_value >= WALL_LOG:
                if wall is None or b.site < wall:
                    wall = b.site
            else:
                d[b.site - lo] = b.value
    return d, wall


def _half_diag(half: PotentialSpec, theta: float, N: int, cot: bool = False) -> np.ndarray:
    """Diagonal of the ``N``-site truncation with boundary phase ``theta``.

    ``cot=True`` uses the left-side convention ``V(1) - cot(theta)``.
    """
    shift = (float(theta) == 0.0) if cot else abs(float(theta) - HALF_PI) < 1e-15
    lo = 2 if shift else 1
    d, wall = _diagonal(half, lo, lo + N - 1)
    if wall is not None:
        d = d[: wall - lo]
    if len(d) == 0:
        raise OracleError("boundary site is a wall; the measure is a single far atom")
    if not shift:
        d[0] -= (math.cos(theta) / math.sin(theta)) if cot else math.tan(theta)
    return d


def truncated_measure(spec: PotentialSpec, side: str, theta: float, N: int) -> AtomicMeasure:
    """Spectral measure of the ``N``-site truncation.

    Parameters
    ----------
    spec : PotentialSpec
    side : {'+', '-', 'line'}
        ``'+'``: ``delta_1`` for ``H_+ - tan(theta) <delta_1,.> delta_1``;
        ``'-'``: ``delta_0`` for ``H_- - cot(theta) <delta_0,.> delta_0``;
        ``'line'``: ``mu_{delta_0} + mu_{delta_1}`` on the window ``-N..N``.
    theta : float
        Ignored for ``'line'``.
    N : int
        Sites per side.
    """
    if N < 1:
        raise OracleError("N must be >= 1")
    if side == "line":
        if spec.domain != WHOLE_LINE:
            raise OracleError("'line' needs a whole-line spec")
        return _line_measure(spec, N)
    if side == "-" and spec.domain != WHOLE_LINE:
        raise OracleError("'-' needs a whole-line spec")
    half = spec.restrict(side)
    d = _half_diag(half, theta, N, cot=(side == "-"))
    note = "" if N > half.support_max else "window shorter than barrier support"
    if len(d) == 1:
        return AtomicMeasure(d.copy(), np.ones(1), note)
    try:
        w, v = eigh_tridiagonal(d, np.ones(len(d) - 1))
    except np.linalg.LinAlgError as exc:      # pragma: no cover
        raise OracleError(f"eigensolver failed: {exc}") from exc
    return _merge(w, v[0] ** 2, note=note)


def _line_diag(spec: PotentialSpec, N: int) -> tuple[np.ndarray, int]:
    """Diagonal of the window ``-N..N`` cut at walls, and the row of site 0."""
    d, _ = _diagonal(spec, -N, N)
    lo, hi = -N, N
    for b in spec.barriers:
        if b.log_value >= WALL_LOG and -N <= b.site <= N:
            if b.site >= 2:
                hi = min(hi, b.site - 1)
            elif b.site <= -1:
                lo = max(lo, b.site + 1)
            else:
                raise OracleError("wall at site 0 or 1 is not supported")
    return d[lo + N: hi + N + 1], -lo


def _line_measure(spec: PotentialSpec, N: int) -> AtomicMeasure:
    d, r0 = _line_diag(spec, N)
    w, v = eigh_tridiagonal(d, np.ones(len(d) - 1))
    return _merge(w, v[r0] ** 2 + v[r0 + 1] ** 2)


def _side_problem(spec: PotentialSpec, side: str, theta: float, N: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Diagonal of the truncation and the rows carrying the cyclic vector(s)."""
    if side == "line":
        if spec.domain != WHOLE_LINE:
            raise OracleError("'line' needs a whole-line spec")
        d, r0 = _line_diag(spec, N)
        return d, (r0, r0 + 1)
    if side == "-" and spec.domain != WHOLE_LINE:
        raise OracleError("'-' needs a whole-line spec")
    half = spec.restrict(side) if spec.domain == WHOLE_LINE else spec
    return _half_diag(half, theta, N, cot=(side == "-")), (0,)


def local_measure(spec: PotentialSpec, side: str, theta: float, E: float, radius: float,
                  N: int) -> AtomicMeasure:
    """Atoms of the ``N``-site truncation inside ``(E - radius, E + radius)``.

    Large truncations use shift-invert Lanczos at ``E``; the number of
    requested eigenpairs doubles until the returned set reaches past the
    interval, so no atom inside it is missed.
    """
    if N < 1 or radius <= 0:
        raise OracleError("need N >= 1 and radius > 0")
    d, rows = _side_problem(spec, side, theta, N)
    n = len(d)
    if n <= DENSE_MAX:
        mu = truncated_measure(spec, side, theta, N)
        keep = np.abs(mu.energies - E) < radius
        return AtomicMeasure(mu.energies[keep], mu.weights[keep], mu.note)
    off = np.ones(n - 1)
    A = sparse.diags([off, d, off], [-1, 0, 1], format="csc")
    # eigenvalue spacing is at least about pi / n inside the band
    k = min(n - 2, int(2 * radius * n / math.pi) + 16)
    # keep the shift off the spectrum; it only steers the iteration
    sigma = E + 1e-3 * radius * (math.sqrt(5.0) - 1.0)
    while True:
        try:
            w, v = eigsh(A, k=k, sigma=sigma, which="LM")
        except Exception as exc:      # pragma: no cover
            raise OracleError(f"shift-invert eigensolver failed: {exc}") from exc
        if np.abs(w - sigma).max() >= radius + abs(sigma - E) or k >= n - 2:
            break
        k = min(n - 2, 2 * k)
    keep = np.abs(w - E) < radius
    weights = sum(v[r] ** 2 for r in rows)
    return _merge(w[keep], weights[keep])


def m_truncated(measure: AtomicMeasure, z):
    """``sum_j w_j / (E_j - z)``."""
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag <= 0):
        raise OracleError("z must lie in the upper half-plane")
    out = (measure.weights[:, None] / (measure.energies[:, None] - zz.ravel()[None, :])).sum(axis=0)
    return complex(out[0]) if zz.ndim == 0 else out.reshape(zz.shape)


def interval_mass(measure: AtomicMeasure, a: float, b: float) -> float:
    """Mass of the open interval ``(a, b)``."""
    if not a < b:
        raise OracleError("need a < b")
    lo = np.searchsorted(measure.energies, a, side="right")
    hi = np.searchsorted(measure.energies, b, side="left")
    return float(measure.weights[lo:hi].sum())


@dataclass(frozen=True)
class FillReport:
    N: int
    resolution: float
    max_gap_in_window: float
    outliers: int               # eigenvalues outside [-2, 2]
    barrier_count: int


def ess_fill(spec: PotentialSpec, N: int, resolution: float = 0.05) -> FillReport:
    """Largest eigenvalue gap of the ``N``-site half-line truncation inside ``[-2+r, 2-r]``.

    Walls split the matrix into independent blocks; each wall contributes one
    eigenvalue near its height.
    """
    half = spec.restrict("+") if spec.domain == WHOLE_LINE else spec
    d = half.dense(1, N)
    walls = [b.site for b in half.barriers if b.site <= N and b.log_value >= WALL_LOG]
    evs = []
    start = 1
    for s in walls + [N + 1]:
        block = d[start - 1: s - 1]
        if len(block) == 1:
            evs.append(block.copy())
        elif len(block) > 1:
            evs.append(eigh_tridiagonal(block, np.ones(len(block) - 1), eigvals_only=True))
        start = s + 1
    ev = np.sort(np.concatenate(evs)) if evs else np.zeros(0)
    inside = ev[(ev >= -2 + resolution) & (ev <= 2 - resolution)]
    pts = np.concatenate(([-2 + resolution], inside, [2 - resolution]))
    gap = float(np.diff(pts).max())
    outliers = int(np.sum((ev < -2) | (ev > 2))) + len(walls)
    nbar = sum(1 for b in half.barriers if b.site <= N)
    return FillReport(N, resolution, gap, outliers, nbar)


def decay_pad(z: complex, tol: float = 1e-8) -> int:
    """Sites of free tail after which the free resolvent has decayed below ``tol``.

    Off-diagonal Green entries decay like ``|m_free(z)|^n``.
    """
    from .herglotz import m_free

    q = abs(m_free(complex(z)))
    return max(int(math.ceil(math.log(tol) / (2.0 * math.log(q)))), 1)


def green_diagonal(spec: PotentialSpec, z: complex, pad: int | None = None, tol: float = 1e-8):
    """``G(0,0) + G(1,1)`` of the Dirichlet-truncated whole-line operator.

    The window extends ``pad`` free sites past the outermost barriers (walls
    cut the window instead).  Returns ``(value, pad)``.
    """
    if spec.domain != WHOLE_LINE:
        raise OracleError("needs a whole-line spec")
    z = complex(z)
    if pad is None:
        pad = decay_pad(z, tol)
    hi = max(spec.support_max, 1) + pad
    lo = min(spec.support_min, 0) - pad
    for b in spec.barriers:
        if b.log_value >= WALL_LOG:
            if b.site >= 2:
                hi = min(hi, b.site - 1)
            elif b.site <= -1:
                lo = max(lo, b.site + 1)
    d, _ = _diagonal(spec, lo, hi)
    n = hi - lo + 1
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = 1.0
    ab[1] = d - z
    ab[2, :-1] = 1.0
    rhs = np.zeros((n, 2), dtype=complex)
    rhs[-lo, 0] = 1.0
    rhs[1 - lo, 1] = 1.0
    x = solve_banded((1, 1), ab, rhs)
    return complex(x[-lo, 0] + x[1 - lo, 1]), pad
