"""Sparse barrier potentials on the half-line and the whole line.

A potential is a finite list of barriers (site, value) on a zero baseline.
Values above ``1e300`` are kept in logarithmic form only; every consumer in
the package accepts either representation through :meth:`PotentialSpec.log_eval`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HALF_LINE = "half_line"
WHOLE_LINE = "whole_line"
DOMAINS = (HALF_LINE, WHOLE_LINE)

# above this the float value is dropped and only the log is kept
LOG_VALUE_CUTOFF = math.log(1e300)


class PotentialError(ValueError):
    """Invalid potential, schedule, or out-of-domain evaluation."""


@dataclass(frozen=True)
class Barrier:
    site: int
    log_value: float
    value: float | None = None

    @classmethod
    def from_value(cls, site: int, value: float) -> "Barrier":
        if not (value > 0 and math.isfinite(value)):
            raise PotentialError(f"barrier value at site {site} must be positive and finite, got {value!r}")
        return cls(int(site), math.log(value), float(value))

    @classmethod
    def from_log(cls, site: int, log_value: float) -> "Barrier":
        if not math.isfinite(log_value):
            raise PotentialError(f"barrier log-value at site {site} must be finite")
        value = math.exp(log_value) if log_value <= LOG_VALUE_CUTOFF else None
        return cls(int(site), float(log_value), value)

    @property
    def is_log_only(self) -> bool:
        return self.value is None

    def as_float(self) -> float:
        """Float value; ``inf`` when only the log is stored."""
        return self.value if self.value is not None else math.inf


@dataclass(frozen=True)
class PotentialSpec:
    """Sparse potential: ``barriers`` on a zero baseline.

    Half-line specs live on sites ``1, 2, ...``; whole-line specs on all of
    the integers.
    """

    domain: str = HALF_LINE
    barriers: tuple[Barrier, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise PotentialError(f"unknown domain {self.domain!r}")
        bars = tuple(sorted(self.barriers, key=lambda b: b.site))
        sites = [b.site for b in bars]
        if len(set(sites)) != len(sites):
            raise PotentialError("barrier sites must be pairwise distinct")
        if self.domain == HALF_LINE and sites and sites[0] < 1:
            raise PotentialError("half-line barrier sites must be >= 1")
        for b in bars:
            if b.value is not None and not b.value > 0:
                raise PotentialError(f"barrier value at site {b.site} must be positive")
        object.__setattr__(self, "barriers", bars)
        object.__setattr__(self, "_index", {b.site: b for b in bars})

    # construction helpers

    @classmethod
    def free(cls, domain: str = HALF_LINE) -> "PotentialSpec":
        return cls(domain, ())

    @classmethod
    def from_values(cls, pairs: Iterable[tuple[int, float]], domain: str = HALF_LINE) -> "PotentialSpec":
        return cls(domain, tuple(Barrier.from_value(s, v) for s, v in pairs))

    @classmethod
    def from_logs(cls, pairs: Iterable[tuple[int, float]], domain: str = HALF_LINE) -> "PotentialSpec":
        return cls(domain, tuple(Barrier.from_log(s, lv) for s, lv in pairs))

    def with_barrier(self, barrier: Barrier) -> "PotentialSpec":
        """Copy with ``barrier`` added, replacing any barrier at the same site."""
        kept = tuple(b for b in self.barriers if b.site != barrier.site)
        return PotentialSpec(self.domain, kept + (barrier,))

    # evaluation

    def _check_site(self, n: int) -> None:
        if self.domain == HALF_LINE and n < 1:
            raise PotentialError(f"site {n} outside the half-line domain")

    def eval(self, n: int) -> float:
        self._check_site(n)
        b = self._index.get(n)
        if b is None:
            return 0.0
        return b.as_float()

    def log_eval(self, n: int) -> float:
        """``ln V(n)``, ``-inf`` off the barrier sites."""
        self._check_site(n)
        b = self._index.get(n)
        return -math.inf if b is None else b.log_value

    def barrier_at(self, n: int) -> Barrier | None:
        return self._index.get(n)

    @property
    def sites(self) -> list[int]:
        return [b.site for b in self.barriers]

    @property
    def support_max(self) -> int:
        """Largest barrier site, 0 when there are none."""
        return self.barriers[-1].site if self.barriers else 0

    @property
    def support_min(self) -> int:
        return self.barriers[0].site if self.barriers else 1

    def dense(self, lo: int, hi: int) -> np.ndarray:
        """Float values on sites ``lo..hi`` inclusive (``inf`` for log-only barriers)."""
        out = np.zeros(max(hi - lo + 1, 0))
        for b in self.barriers:
            if lo <= b.site <= hi:
                out[b.site - lo] = b.as_float()
        return out

    # half-line restrictions of a whole-line spec

    def restrict(self, side: str) -> "PotentialSpec":
        """Half-line potential of the ``'+'`` (sites >= 1) or ``'-'`` (sites <= 0) side.

        The negative side is reflected: whole-line site ``n <= 0`` becomes
        half-line site ``1 - n``, so site 0 is the new boundary site 1.
        """
        if self.domain == HALF_LINE:
            if side != "+":
                raise PotentialError("a half-line spec has only the '+' side")
            return self
        if side == "+":
            bars = tuple(b for b in self.barriers if b.site >= 1)
            return PotentialSpec(HALF_LINE, bars)
        if side == "-":
            bars = tuple(Barrier(1 - b.site, b.log_value, b.value) for b in self.barriers if b.site <= 0)
            return PotentialSpec(HALF_LINE, bars)
        raise PotentialError(f"side must be '+' or '-', got {side!r}")

    # serialization

    def to_dict(self) -> dict:
        rows = []
        for b in self.barriers:
            row = {"site": b.site, "log_value": repr(b.log_value)}
            if b.value is not None:
                row["value"] = repr(b.value)
            rows.append(row)
        return {"domain": self.domain, "barriers": rows}

    @classmethod
    def from_dict(cls, payload: dict) -> "PotentialSpec":
        if not isinstance(payload, dict) or "domain" not in payload or "barriers" not in payload:
            raise PotentialError("potential document needs 'domain' and 'barriers'")
        bars = []
        for row in payload["barriers"]:
            unknown = set(row) - {"site", "log_value", "value"}
            if unknown:
                raise PotentialError(f"unknown barrier keys: {sorted(unknown)}")
            site = row["site"]
            if not isinstance(site, int) or isinstance(site, bool):
                raise PotentialError(f"barrier site must be an integer, got {site!r}")
            log_value = float(row["log_value"])
            if "value" in row:
                bars.append(Barrier(site, log_value, float(row["value"])))
            else:
                bars.append(Barrier.from_log(site, log_value))
        return cls(payload["domain"], tuple(bars))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "PotentialSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GrowthSchedule:
    """Barrier sites ``L_n`` with log-values ``ln V(L_n)`` for one half-line."""

    sites: tuple[int, ...]
    log_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.sites) != len(self.log_values):
            raise PotentialError("sites and log_values differ in length")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "log_values", tuple(float(x) for x in self.log_values))

    @classmethod
    def from_spec(cls, spec: PotentialSpec, side: str = "+") -> "GrowthSchedule":
        half = spec.restrict(side)
        return cls(tuple(b.site for b in half.barriers), tuple(b.log_value for b in half.barriers))


@dataclass(frozen=True)
class GrowthReport:
    slack: tuple[float, ...]

    @property
    def holds(self) -> bool:
        return all(s >= 0 for s in self.slack)

    def first_failure(self) -> int | None:
        """1-based index of the first violated stage, or None."""
        for i, s in enumerate(self.slack):
            if s < 0:
                return i + 1
        return None


def growth_threshold(site: int, index: int) -> float:
    """Right-hand side ``L_n + 1 + n^2`` of the growth condition (``index`` is 1-based)."""
    return site + 1.0 + index * index


def check_growth(schedule: GrowthSchedule) -> GrowthReport:
    """Per-index slack of ``ln V(L_n) - sum_{k<n} ln V(L_k) >= L_n + 1 + n^2``."""
    sites = schedule.sites
    if any(b <= a for a, b in zip(sites, sites[1:])):
        raise PotentialError("schedule sites must be strictly increasing")
    slack = []
    running = 0.0
    for i, (site, lv) in enumerate(zip(sites, schedule.log_values), start=1):
        slack.append(lv - running - growth_threshold(site, i))
        running += lv
    return GrowthReport(tuple(slack))


def _gaps_increasing(sites: Sequence[int]) -> bool:
    gaps = [b - a for a, b in zip(sites, sites[1:])]
    return all(g2 > g1 for g1, g2 in zip(gaps, gaps[1:]))


def check_gaps(spec: PotentialSpec) -> bool:
    """True iff consecutive barrier gaps are strictly increasing on each side of the origin."""
    if spec.domain == HALF_LINE:
        return _gaps_increasing(spec.sites)
    plus = [s for s in spec.sites if s >= 1]
    minus = sorted((1 - s for s in spec.sites if s <= 0))
    return _gaps_increasing(plus) and _gaps_increasing(minus)
