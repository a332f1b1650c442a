"""The three sparse-potential constructions.

``build_thm1``
    Barriers on the squares ``k^2`` with values forcing
    ``||T_n(E)|| C_n > (k+1)^(k+1)`` on ``[-2, 2]``.
``build_sparse``
    Barriers on a doubling schedule meeting the growth condition
    ``ln V(L_n) - sum_{k<n} ln V(L_k) >= L_n + 1 + n^2``.
``build_wholeline``
    The alternating two-sided construction with a stage ledger.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cocycle import log_norm_grid, min_inverse_norm_report, spectral_norm
from .herglotz import RANK_ONE, WEYL, certificate_report
from .potential import (
    WHOLE_LINE,
    LOG_VALUE_CUTOFF,
    Barrier,
    GrowthSchedule,
    PotentialSpec,
    check_growth,
    growth_threshold,
)
from .solution import norm_profile

BARRIER_MARGIN = 1e-2


class ConstructionError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# square-site construction


@dataclass(frozen=True)
class Thm1Stage:
    k: int
    site: int
    C_n: float
    value: float


def build_thm1_stages(k_max: int, grid_step: float = 1e-3, margin: float = BARRIER_MARGIN):
    """Spec plus per-stage ``(k, n=k^2, C_n, V(n))``.

    ``V(k^2) = max(2 (k+1)^(k+1) / C_n, 4) * (1 + margin)``; the floor 4
    gives ``|E - V| >= V/2`` for ``E`` in ``[-2, 2]``.  ``C_n`` is the
    certified lower estimate, so ``||T_n|| C_n > (k+1)^(k+1)`` holds with
    the true constant as well.
    """
    if k_max < 2:
        raise ConstructionError("k_max must be >= 2")
    spec = PotentialSpec.free()
    stages = []
    for k in range(1, k_max + 1):
        n = k * k
        C = min_inverse_norm_report(spec, n, grid_step).value
        if not C > 0 or not math.isfinite(1.0 / C):
            raise ConstructionError(f"C_n underflow at k={k}")
        log_val = math.log(max(2.0 * (k + 1) ** (k + 1) / C, 4.0)) + math.log1p(margin)
        if log_val > LOG_VALUE_CUTOFF:
            raise ConstructionError(f"barrier value at k={k} exceeds double range")
        b = Barrier.from_log(n, log_val)
        spec = spec.with_barrier(b)
        stages.append(Thm1Stage(k, n, C, b.value))
    return spec, stages


def build_thm1(k_max: int, grid_step: float = 1e-3) -> PotentialSpec:
    return build_thm1_stages(k_max, grid_step)[0]


def thm1_stages_from_spec(spec: PotentialSpec, grid_step: float = 1e-3) -> list[Thm1Stage]:
    """Recover the per-stage records of a square-site spec, recomputing ``C_n``."""
    stages = []
    for k, b in enumerate(spec.barriers, start=1):
        if b.site != k * k or b.value is None:
            raise ConstructionError(f"barrier {k} sits at {b.site}, expected {k * k}")
        C = min_inverse_norm_report(spec, b.site, grid_step).value
        stages.append(Thm1Stage(k, b.site, C, b.value))
    return stages


@dataclass(frozen=True)
class Thm1Audit:
    k: int
    site: int
    min_product: float          # min over the E-grid of ||T_n(E)|| * C_n
    target: float               # (k+1)^(k+1)
    max_sol_norm: float         # min over E of max_u ||u||_{k^2}
    max_sol_norm_next: float    # same at L = k^2 + 1

    @property
    def eq10_holds(self) -> bool:
        return self.min_product > self.target

    @property
    def cor_holds(self) -> bool:
        return self.max_sol_norm >= self.target


def audit_thm1(spec: PotentialSpec, stages, n_energy: int = 1000) -> list[Thm1Audit]:
    """Re-check ``||T_n|| C_n > (k+1)^(k+1)`` and ``max_u ||u||_{k^2} >= (k+1)^(k+1)``."""
    E = np.linspace(-2.0, 2.0, n_energy)
    out = []
    for st in stages:
        if st.k < 2:
            continue
        tn = spectral_norm(E - st.value, -np.ones_like(E), np.ones_like(E), np.zeros_like(E))
        target = float((st.k + 1) ** (st.k + 1))
        lam = []
        lam_next = []
        for e in E:
            lam.append(norm_profile(spec, e, st.site).eigenvalues()[1])
            lam_next.append(norm_profile(spec, e, st.site + 1).eigenvalues()[1])
        out.append(Thm1Audit(st.k, st.site, float((tn * st.C_n).min()), target,
                             math.sqrt(min(lam)), math.sqrt(min(lam_next))))
    return out


# ----------------------------------------------------------------------------
# growth-condition construction


def growth_log_values(sites, slack: float) -> list[float]:
    """Log-values meeting the growth condition with the given per-index slack."""
    out = []
    running = 0.0
    for i, s in enumerate(sites, start=1):
        lv = running + growth_threshold(s, i) + slack
        out.append(lv)
        running += lv
    return out


def build_sparse(first_site: int = 10, n_stages: int = 4, slack: float = BARRIER_MARGIN,
                 extended: bool = False) -> PotentialSpec:
    """Sites ``first_site * 2^(n-1)``, log-values at the growth bound plus ``slack``.

    Past ``ln(1e300)`` a value only exists in log form; that requires
    ``extended=True``.
    """
    if first_site < 1 or n_stages < 1:
        raise ConstructionError("need first_site >= 1 and n_stages >= 1")
    if slack < 0:
        raise ConstructionError("slack must be nonnegative")
    sites = [first_site * 2 ** (n - 1) for n in range(1, n_stages + 1)]
    lvs = growth_log_values(sites, slack)
    for n, lv in enumerate(lvs, start=1):
        if lv > LOG_VALUE_CUTOFF and not extended:
            raise ConstructionError(
                f"stage {n}: ln V = {lv:.1f} overflows double precision; pass extended=True")
    return PotentialSpec.from_logs(zip(sites, lvs))


# ----------------------------------------------------------------------------
# alternating whole-line construction


def side_of(stage: int) -> str:
    return "+" if stage % 2 == 1 else "-"


def alpha_of(stage: int) -> float:
    return 1.0 / (stage + 1)


@dataclass(frozen=True)
class CertificateGrids:
    n_energy: int = 1000
    n_delta: int = 64
    e_lo: float = -1.6
    e_hi: float = 1.6
    family: str = WEYL

    def to_dict(self) -> dict:
        return {"n_energy": self.n_energy, "n_delta": self.n_delta,
                "e_lo": repr(self.e_lo), "e_hi": repr(self.e_hi), "family": self.family}

    @classmethod
    def from_dict(cls, d: dict) -> "CertificateGrids":
        return cls(int(d["n_energy"]), int(d["n_delta"]), float(d["e_lo"]), float(d["e_hi"]),
                   str(d.get("family", RANK_ONE)))


@dataclass(frozen=True)
class StageRecord:
    stage: int
    side: str
    site: int
    log_value: float
    alpha: float
    eps: float
    eps_next: float
    padding: int
    windows: tuple            # ((alpha, lo, hi), ...) certified for this side
    grids: CertificateGrids
    worst: float              # max of delta^alpha * sup over all windows at build time

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "side": self.side,
            "site": self.site,
            "log_value": repr(self.log_value),
            "alpha": repr(self.alpha),
            "eps": repr(self.eps),
            "eps_next": repr(self.eps_next),
            "padding": self.padding,
            "windows": [[repr(a), repr(lo), repr(hi)] for a, lo, hi in self.windows],
            "grids": self.grids.to_dict(),
            "worst": repr(self.worst),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageRecord":
        return cls(
            int(d["stage"]), d["side"], int(d["site"]), float(d["log_value"]), float(d["alpha"]),
            float(d["eps"]), float(d["eps_next"]), int(d["padding"]),
            tuple((float(a), float(lo), float(hi)) for a, lo, hi in d["windows"]),
            CertificateGrids.from_dict(d["grids"]), float(d["worst"]),
        )


@dataclass(frozen=True)
class ConstructionLedger:
    stages: tuple[StageRecord, ...]

    def dumps(self) -> str:
        return json.dumps([s.to_dict() for s in self.stages], indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ConstructionLedger":
        return cls(tuple(StageRecord.from_dict(d) for d in json.loads(text)))

    def replace_stage(self, index: int, **changes) -> "ConstructionLedger":
        rows = list(self.stages)
        rows[index] = StageRecord(**{**asdict_shallow(rows[index]), **changes})
        return ConstructionLedger(tuple(rows))


def asdict_shallow(rec: StageRecord) -> dict:
    return {f: getattr(rec, f) for f in rec.__dataclass_fields__}


def _side_half(spec: PotentialSpec, side: str) -> PotentialSpec:
    return spec.restrict(side)


def _worst_over(half: PotentialSpec, windows, grids: CertificateGrids) -> float:
    worst = -math.inf
    for a, lo, hi in windows:
        rep = certificate_report(half, a, lo, hi, grids.n_energy, grids.n_delta, (grids.e_lo, grids.e_hi),
                                 grids.family)
        worst = max(worst, rep.worst)
        if worst > 1.0:
            break
    return worst


def _half_site(side: str, site: int) -> int:
    return site if side == "+" else 1 - site


def _whole_site(side: str, half_site: int) -> int:
    return half_site if side == "+" else 1 - half_site


def build_wholeline(n_stages: int = 3, eps0: float = 1e-2, grids: CertificateGrids | None = None,
                    ratio: float = 2.5, slack: float = BARRIER_MARGIN, K_max: int = 1 << 24):
    """Alternating two-sided construction.

    Stage ``k`` (``k = 1 .. 2 n_stages``) acts on side ``+`` for odd ``k`` and
    ``-`` for even ``k``, with ``alpha_k = 1/(k+1)`` and
    ``eps_{k+1} = eps_k / ratio``.  The active side's padding ``K`` is the
    smallest value (doubling, then bisection) for which the candidate, i.e.
    the current side followed by ``K`` zeros and the new barrier, satisfies
    the smallness certificate on every window ``[eps_{j+1}, eps_j]`` with
    ``alpha_j`` for the stages ``j >= k`` that belong to this side.  Later
    padding sits behind the new barrier and cannot change the inner cavity,
    so the certificate has to hold for those later windows already now.
    Stage 1 also certifies the (still free) ``-`` side on its window.

    Returns
    -------
    (PotentialSpec, ConstructionLedger)
    """
    if n_stages < 1:
        raise ConstructionError("n_stages must be >= 1")
    if not 0 < eps0 < 1:
        raise ConstructionError("eps0 must lie in (0, 1)")
    if ratio <= 2:
        raise ConstructionError("ratio must exceed 2 so that eps_{k+1} < eps_k / 2")
    grids = grids or CertificateGrids()
    total = 2 * n_stages
    eps = [eps0 / ratio ** j for j in range(total + 1)]       # eps[k-1] = eps_k
    spec = PotentialSpec.free(WHOLE_LINE)
    last_half = {"+": 0, "-": 0}       # last barrier site per side in half-line coordinates
    last_gap = {"+": 0, "-": 0}
    records = []
    for k in range(1, total + 1):
        side = side_of(k)
        windows = tuple((alpha_of(j), eps[j], eps[j - 1]) for j in range(k, total + 1) if side_of(j) == side)
        if k == 2:
            windows = ((alpha_of(1), eps[1], eps[0]),) + windows
        base_half = _side_half(spec, side)
        n_index = len(base_half.barriers) + 1
        prev_lvs = [b.log_value for b in base_half.barriers]

        def candidate(K: int):
            hs = last_half[side] + K + 1
            lv = sum(prev_lvs) + growth_threshold(hs, n_index) + slack
            return hs, lv, base_half.with_barrier(Barrier.from_log(hs, lv))

        def passes(K: int) -> tuple[bool, float]:
            _, _, half = candidate(K)
            w = _worst_over(half, windows, grids)
            return w <= 1.0, w

        K_lo = max(last_gap[side], 1) if last_half[side] > 0 else 1
        K = K_lo
        ok, _ = passes(K)
        if not ok:
            lo = K
            K = max(2 * K, 2)
            while True:
                ok, _ = passes(K)
                if ok:
                    break
                lo = K
                K *= 2
                if K > K_max:
                    raise ConstructionError(f"stage {k} ({side}): certificate fails for all K <= {K_max}")
            hi = K
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if passes(mid)[0]:
                    hi = mid
                else:
                    lo = mid
            K = hi
        if k == 1:
            # the other side is still free; record that its certificate holds too
            free_w = _worst_over(PotentialSpec.free(), ((alpha_of(1), eps[1], eps[0]),), grids)
            if free_w > 1.0:
                raise ConstructionError("stage 1: free side fails its certificate; adjust eps0 or the E-range")
        hs, lv, new_half = candidate(K)
        worst = _worst_over(new_half, windows, grids)
        site = _whole_site(side, hs)
        spec = spec.with_barrier(Barrier.from_log(site, lv))
        if last_half[side] > 0:
            last_gap[side] = hs - last_half[side]
        last_half[side] = hs
        records.append(StageRecord(k, side, site, lv, alpha_of(k), eps[k - 1], eps[k], K,
                                   windows, grids, worst))
    return spec, ConstructionLedger(tuple(records))


# ----------------------------------------------------------------------------
# replay


class LedgerIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class StageCheck:
    stage: int
    side: str
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, ok in self.checks.items() if not ok]


@dataclass(frozen=True)
class ReplayReport:
    stages: tuple[StageCheck, ...]
    coverage_ok: bool
    growth_ok: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.coverage_ok and all(s.passed for s in self.stages)

    def failing_stages(self) -> list[int]:
        return [s.stage for s in self.stages if not s.passed]


def replay_ledger(spec: PotentialSpec, ledger: ConstructionLedger) -> ReplayReport:
    """Re-check every ledger invariant and stage certificate against the final spec.

    Raises
    ------
    LedgerIntegrityError
        If the spec's barrier sites differ from the ledger's.
    """
    if spec.domain != WHOLE_LINE:
        raise LedgerIntegrityError("ledger replay needs a whole-line spec")
    if sorted(spec.sites) != sorted(r.site for r in ledger.stages):
        raise LedgerIntegrityError("barrier sites of spec and ledger differ")
    # growth slack per side, indexed back to the stage that placed each barrier
    growth_by_stage = {}
    growth_ok = {}
    for side in ("+", "-"):
        sched = GrowthSchedule.from_spec(spec, side)
        rep = check_growth(sched) if sched.sites else None
        growth_ok[side] = rep.holds if rep else True
        if rep is None:
            continue
        by_half = dict(zip(sched.sites, rep.slack))
        for r in ledger.stages:
            if r.side == side:
                growth_by_stage[r.stage] = by_half.get(_half_site(side, r.site), -math.inf) >= 0
    out = []
    prev = None
    for i, r in enumerate(ledger.stages):
        k = i + 1
        checks = {
            "index": r.stage == k,
            "side": r.side == side_of(k),
            "alpha": abs(r.alpha - alpha_of(k)) <= 1e-15,
            "eps_next": r.eps_next < r.eps / 2,
            "eps_chain": prev is None or (r.eps == prev.eps_next and r.eps < prev.eps / 2),
            "growth": growth_by_stage.get(r.stage, False),
        }
        half = spec.restrict(r.side)
        windows = r.windows if r.windows else ((r.alpha, r.eps_next, r.eps),)
        primary = any(abs(a - r.alpha) <= 1e-15 and lo == r.eps_next and hi == r.eps for a, lo, hi in windows)
        checks["window"] = primary
        checks["certificate"] = _worst_over(half, windows, r.grids) <= 1.0
        out.append(StageCheck(r.stage, r.side, checks))
        prev = r
    # every delta in (eps_last, eps_1] lies in a certified window of some side
    cover = sorted((r.eps_next, r.eps) for r in ledger.stages)
    coverage_ok = all(a[1] >= b[0] for a, b in zip(cover, cover[1:]))
    return ReplayReport(tuple(out), coverage_ok, growth_ok)
