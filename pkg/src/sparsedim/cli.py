"""Command-line entry point: ``sparsedim <command> [options]``.

Commands
--------
construct   build a potential (``--kind thm1|sparse|wholeline``)
mfunc       m-function sweeps over an ``(E, eps, theta)`` grid
dims        scaling windows and dimension flags per energy
verify      one invariant suite; exit ``10 + suite index`` on failure
report      JSON summary of a spec (and ledger)

Options may come from a JSON config (``--config``); flags override it.
Every output embeds the config hash and the tool version.  The hash skips
``workers`` and ``out``, which never change the data.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cocycle import lyapunov_grid
from .constructor import (
    ConstructionLedger,
    LedgerIntegrityError,
    audit_thm1,
    build_sparse,
    build_thm1_stages,
    build_wholeline,
    replay_ledger,
    thm1_stages_from_spec,
)
from .fractal import (
    alpha_derivatives,
    classify_line_energy,
    gamma_estimates,
    qr_probes,
    scaling_window,
)
from .herglotz import M_wholeline, check_dkl, check_dt, check_jl, m_halfline, m_minus, m_plus
from .potential import WHOLE_LINE, GrowthSchedule, PotentialSpec, check_gaps, check_growth
from .solution import solve, solve_companion, wronskian, wronskian_deviation_mp

COMMANDS = ("construct", "mfunc", "dims", "verify", "report")
SUITES = ("jl", "dt", "dkl", "eq10", "growth", "lyapunov", "ledger", "wronskian")
KINDS = ("thm1", "sparse", "wholeline")
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SUITE_BASE = 10
UNHASHED = ("workers", "out")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    out: str
    spec: str | None = None
    ledger: str | None = None
    kind: str | None = None
    stages: int = 3
    suite: str | None = None
    e_grid: str = "-1.9:1.9:50"
    eps_grid: str = "1e-3:1e-1:16"
    delta_grid: str = "1e-3:1e-1:16"
    theta_points: int = 8
    alphas: tuple = (0.25, 0.5, 0.75)
    source: str = "proxy"
    precision: str = "double"
    n_sites: int = 10000
    samples: int = 500
    jl_slack: float = 0.05
    dt_slack: float = 0.02
    dkl_slack: float = 1e-9
    divergence_threshold: float = 1e6
    g_threshold: float = 1e-2
    wronskian_tol: float = 1e-10
    seed: int = 0
    workers: int = 1

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["alphas"] = list(self.alphas)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in UNHASHED}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in fields(RunConfig)}
_REQUIRED = ("command", "out")


def _coerce(name: str, value):
    kind = {"stages": int, "theta_points": int, "n_sites": int, "samples": int, "seed": int, "workers": int,
            "jl_slack": float, "dt_slack": float, "dkl_slack": float, "divergence_threshold": float,
            "g_threshold": float, "wronskian_tol": float}.get(name)
    if value is None:
        return None
    if name == "alphas":
        if not isinstance(value, (list, tuple)):
            raise ConfigError("alphas must be a list")
        return tuple(float(a) for a in value)
    if kind is not None:
        if isinstance(value, bool):
            raise ConfigError(f"{name} must be a number")
        try:
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: cannot read {value!r} as {kind.__name__}") from None
    if not isinstance(value, str):
        raise ConfigError(f"{name} must be a string")
    return value


def config_from_dict(d: dict) -> RunConfig:
    """Validate keys, fill defaults and check values."""
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(d) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    d = {k: v for k, v in d.items() if v is not None}
    missing = [k for k in _REQUIRED if k not in d]
    cmd = d.get("command")
    if cmd == "construct" and "kind" not in d:
        missing.append("kind")
    if cmd == "verify":
        missing += [k for k in ("suite", "spec") if k not in d]
        if d.get("suite") == "ledger" and "ledger" not in d:
            missing.append("ledger")
    if cmd in ("mfunc", "dims", "report") and "spec" not in d:
        missing.append("spec")
    if missing:
        raise ConfigError(f"missing required keys: {missing}")
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in d.items()})
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}")
    if cfg.kind is not None and cfg.kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}")
    if cfg.suite is not None and cfg.suite not in SUITES:
        raise ConfigError(f"suite must be one of {SUITES}")
    if cfg.source not in ("proxy", "oracle"):
        raise ConfigError("source must be 'proxy' or 'oracle'")
    parse_precision(cfg.precision)
    parse_grid(cfg.e_grid, log=False)
    parse_grid(cfg.eps_grid, log=True)
    parse_grid(cfg.delta_grid, log=True)
    if cfg.theta_points < 1 or cfg.workers < 1 or cfg.stages < 1:
        raise ConfigError("theta_points, workers and stages must be >= 1")
    if not all(0 < a < 1 for a in cfg.alphas):
        raise ConfigError("alphas must lie in (0, 1)")


def parse_config(path) -> RunConfig:
    """Read a JSON config file; unknown keys and missing keys are errors."""
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(d)


def parse_grid(text: str, log: bool) -> np.ndarray:
    """``lo:hi:n``; linear and increasing, or log-spaced and decreasing from ``hi``."""
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"grid {text!r} is not lo:hi:n") from None
    if n < 1 or not lo <= hi or (log and lo <= 0):
        raise ConfigError(f"bad grid {text!r}")
    if n == 1:
        return np.array([hi if log else lo])
    return np.geomspace(hi, lo, n) if log else np.linspace(lo, hi, n)


def parse_precision(text: str) -> int | None:
    """``double`` gives None, ``ext:<bits>`` the mantissa bits."""
    if text == "double":
        return None
    if text.startswith("ext:"):
        try:
            bits = int(text[4:])
        except ValueError:
            bits = 0
        if bits >= 53:
            return bits
    raise ConfigError(f"precision must be 'double' or 'ext:<bits>' with bits >= 53, got {text!r}")


def theta_grid(n: int) -> np.ndarray:
    return np.arange(n) * (math.pi / n)


# ----------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header, rows, cfg: RunConfig) -> None:
    buf = io.StringIO()
    buf.write(f"# sparsedim {__version__} config={cfg.hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue())


def write_json(path: Path, payload: dict, cfg: RunConfig) -> None:
    doc = {"version": __version__, "config_hash": cfg.hash(), "config": cfg.to_dict(), **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_fmt) + "\n")


def _load_spec(path: str) -> PotentialSpec:
    return PotentialSpec.loads(Path(path).read_text())


def _map(fn, tasks, workers: int):
    """Ordered map; results are independent of ``workers``."""
    if workers == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


# ----------------------------------------------------------------------------
# construct


def cmd_construct(cfg: RunConfig, out: Path) -> int:
    extra = {}
    if cfg.kind == "thm1":
        spec, stages = build_thm1_stages(cfg.stages)
        extra["stages"] = [{"k": s.k, "site": s.site, "C_n": s.C_n, "value": s.value} for s in stages]
    elif cfg.kind == "sparse":
        spec = build_sparse(n_stages=cfg.stages)
        extra["growth_slack"] = list(check_growth(GrowthSchedule.from_spec(spec)).slack)
    else:
        spec, ledger = build_wholeline(cfg.stages)
        Path(cfg.ledger or out / "ledger.json").write_text(ledger.dumps() + "\n")
    (out / "spec.json").write_text(spec.dumps() + "\n")
    write_json(out / "construct.json", {"kind": cfg.kind, "barriers": len(spec.barriers), **extra}, cfg)
    return EXIT_OK


# ----------------------------------------------------------------------------
# mfunc


def _mfunc_row(task):
    spec_text, E, eps, thetas = task
    spec = PotentialSpec.loads(spec_text)
    z = complex(E, eps)
    rows = []
    for th in thetas:
        if spec.domain == WHOLE_LINE:
            for side, fn in (("+", m_plus), ("-", m_minus)):
                m = fn(spec, th, z).value
                rows.append((E, eps, side, th, m.real, m.imag))
        else:
            m = m_halfline(spec, th, z).value
            rows.append((E, eps, "+", th, m.real, m.imag))
    if spec.domain == WHOLE_LINE:
        M = M_wholeline(spec, z).value
        rows.append((E, eps, "line", "", M.real, M.imag))
    return rows


def cmd_mfunc(cfg: RunConfig, out: Path) -> int:
    text = Path(cfg.spec).read_text()
    thetas = tuple(theta_grid(cfg.theta_points))
    tasks = [(text, float(E), float(e), thetas) for E in parse_grid(cfg.e_grid, False)
             for e in parse_grid(cfg.eps_grid, True)]
    rows = [r for chunk in _map(_mfunc_row, tasks, cfg.workers) for r in chunk]
    write_csv(out / "mfunc.csv", ("E", "eps", "side", "theta", "re_m", "im_m"), rows, cfg)
    return EXIT_OK


# ----------------------------------------------------------------------------
# dims


def _dims_row(task):
    spec_text, E, cfgd = task
    cfg = config_from_dict(cfgd)
    spec = PotentialSpec.loads(spec_text)
    eps = parse_grid(cfg.eps_grid, True)
    side = "line" if spec.domain == WHOLE_LINE else "+"
    w = scaling_window(spec, side, 0.0, E, eps, source=cfg.source)
    gm, gp = gamma_estimates(w)
    masses = [(E, w.source, e, m) for e, m in zip(w.eps_values, w.masses)]
    dims = []
    for a in cfg.alphas:
        d = alpha_derivatives(w, a, cfg.divergence_threshold)
        q, r = qr_probes(spec, side, 0.0, E, a, eps)
        dims.append((E, gm, gp, a, d.upper_divergent, d.lower_divergent, q, r))
    cls = None
    if spec.domain == WHOLE_LINE:
        L = 1.0 / float(eps.min())
        rec = classify_line_energy(spec, E, L, parse_grid(cfg.delta_grid, True), cfg.g_threshold)
        cls = (E, "" if rec.theta_E is None else rec.theta_E, "" if rec.min_G is None else rec.min_G,
               "" if rec.liminf_flag is None else rec.liminf_flag, rec.matched, rec.reason)
    return masses, dims, cls, list(w.warnings)


def cmd_dims(cfg: RunConfig, out: Path) -> int:
    text = Path(cfg.spec).read_text()
    tasks = [(text, float(E), cfg.to_dict()) for E in parse_grid(cfg.e_grid, False)]
    res = _map(_dims_row, tasks, cfg.workers)
    write_csv(out / "masses.csv", ("E", "source", "eps", "mass"), [r for m, _, _, _ in res for r in m], cfg)
    write_csv(out / "dims.csv", ("E", "gamma_minus", "gamma_plus", "alpha", "T_flag", "U_flag", "Q", "R"),
              [r for _, d, _, _ in res for r in d], cfg)
    if res and res[0][2] is not None:
        write_csv(out / "classification.csv", ("E", "theta_E", "min_G", "liminf_flag", "matched", "note"),
                  [c for _, _, c, _ in res], cfg)
    warnings = [w for *_, ws in res for w in ws]
    write_json(out / "dims.json", {"warnings": warnings}, cfg)
    return EXIT_OK


# ----------------------------------------------------------------------------
# verify


def _grid_tasks(cfg: RunConfig, text: str):
    Es = parse_grid(cfg.e_grid, False)
    eps = tuple(float(e) for e in parse_grid(cfg.eps_grid, True))
    thetas = tuple(float(t) for t in theta_grid(cfg.theta_points))
    return [(text, float(E), eps, thetas, cfg.to_dict()) for E in Es]


def _halves(spec: PotentialSpec):
    if spec.domain == WHOLE_LINE:
        return [("+", spec.restrict("+")), ("-", spec.restrict("-"))]
    return [("+", spec)]


def _jl_rows(task):
    text, E, eps, thetas, cfgd = task
    spec = PotentialSpec.loads(text)
    rows = []
    for side, half in _halves(spec):
        for th in thetas:
            for e in eps:
                r = check_jl(half, E, th, e, cfgd["jl_slack"])
                rows.append((side, E, th, e, r.L, r.ratio, r.lower, r.upper, r.passed))
    return rows


def _dt_rows(task):
    text, E, eps, thetas, cfgd = task
    spec = PotentialSpec.loads(text)
    rows = []
    for side, half in _halves(spec):
        for th in thetas:
            for e in eps:
                r = check_dt(half, E, th, e, cfgd["dt_slack"])
                rows.append((side, E, th, e, r.L, r.im_m, r.bound, r.passed))
    return rows


def _dkl_rows(task):
    text, zs, slack = task
    spec = PotentialSpec.loads(text)
    rows = []
    for zr, zi in zs:
        ok, M, sup = check_dkl(spec, complex(zr, zi), slack)
        rows.append((zr, zi, float(M[0]), float(sup[0]), bool(ok[0])))
    return rows


def _wronskian_rows(task):
    text, E, eps, thetas, cfgd = task
    spec = PotentialSpec.loads(text)
    half = spec.restrict("+") if spec.domain == WHOLE_LINE else spec
    bits = parse_precision(cfgd["precision"])
    N = cfgd["n_sites"]
    rows = []
    for th in thetas:
        if bits is None:
            dev = float(np.max(np.abs(wronskian(solve(half, E, th, N), solve_companion(half, E, th, N)) - 1.0)))
        else:
            dev = wronskian_deviation_mp(half, E, th, N, bits)
        rows.append((E, th, N, dev, dev <= cfgd["wronskian_tol"]))
    return rows


def _verify_growth(spec: PotentialSpec):
    rows = []
    for side, _ in _halves(spec):
        sched = GrowthSchedule.from_spec(spec, side)
        if not sched.sites:
            continue
        rep = check_growth(sched)
        for i, (s, sl) in enumerate(zip(sched.sites, rep.slack), start=1):
            rows.append((side, i, s, sl, sl >= 0))
    return ("side", "index", "site", "slack", "passed"), rows


def _verify_lyapunov(spec: PotentialSpec, cfg: RunConfig):
    Es = parse_grid(cfg.e_grid, False)
    rows = []
    for side, half in _halves(spec):
        for i, s in enumerate(half.sites, start=1):
            if i < 2:
                continue
            lam = lyapunov_grid(half, Es, s)
            j = int(np.argmin(lam))
            rows.append((side, i, s, float(lam[j]), float(Es[j]), bool(lam.min() >= 1.0)))
    return ("side", "index", "site", "min_log_norm_per_site", "argmin_E", "passed"), rows


def _verify_eq10(spec: PotentialSpec, cfg: RunConfig):
    n_energy = int(parse_grid(cfg.e_grid, False).size)
    stages = thm1_stages_from_spec(spec)
    rows = []
    for a in audit_thm1(spec, stages, n_energy=max(n_energy, 2)):
        rows.append((a.k, a.site, a.min_product, a.target, a.eq10_holds))
    return ("k", "site", "min_product", "target", "passed"), rows


def _verify_ledger(spec: PotentialSpec, cfg: RunConfig):
    ledger = ConstructionLedger.loads(Path(cfg.ledger).read_text())
    rep = replay_ledger(spec, ledger)
    rows = [(s.stage, s.side, ";".join(s.failures()), s.passed) for s in rep.stages]
    rows.append(("coverage", "", "" if rep.coverage_ok else "coverage", rep.coverage_ok))
    return ("stage", "side", "failures", "passed"), rows


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    text = Path(cfg.spec).read_text()
    spec = PotentialSpec.loads(text)
    suite = cfg.suite
    if suite == "jl":
        header = ("side", "E", "theta", "eps", "L", "ratio", "lower", "upper", "passed")
        rows = [r for c in _map(_jl_rows, _grid_tasks(cfg, text), cfg.workers) for r in c]
    elif suite == "dt":
        header = ("side", "E", "theta", "eps", "L", "im_m", "bound", "passed")
        rows = [r for c in _map(_dt_rows, _grid_tasks(cfg, text), cfg.workers) for r in c]
    elif suite == "wronskian":
        header = ("E", "theta", "N", "deviation", "passed")
        rows = [r for c in _map(_wronskian_rows, _grid_tasks(cfg, text), cfg.workers) for r in c]
    elif suite == "dkl":
        if spec.domain != WHOLE_LINE:
            raise ConfigError("suite dkl needs a whole-line spec")
        Es = parse_grid(cfg.e_grid, False)
        eps = parse_grid(cfg.eps_grid, True)
        rng = np.random.default_rng(cfg.seed)
        re = rng.uniform(Es.min(), Es.max(), cfg.samples)
        im = np.exp(rng.uniform(math.log(eps.min()), math.log(eps.max()), cfg.samples))
        zs = [(float(a), float(b)) for a, b in zip(re, im)]
        chunks = [(text, zs[i:i + 50], cfg.dkl_slack) for i in range(0, len(zs), 50)]
        header = ("re_z", "im_z", "abs_M", "sup_theta", "passed")
        rows = [r for c in _map(_dkl_rows, chunks, cfg.workers) for r in c]
    elif suite == "growth":
        header, rows = _verify_growth(spec)
    elif suite == "lyapunov":
        header, rows = _verify_lyapunov(spec, cfg)
    elif suite == "eq10":
        header, rows = _verify_eq10(spec, cfg)
    else:
        try:
            header, rows = _verify_ledger(spec, cfg)
        except LedgerIntegrityError as exc:
            header, rows = ("stage", "side", "failures", "passed"), [("all", "", str(exc), False)]
    failed = [r for r in rows if not r[-1]]
    write_csv(out / f"verify_{suite}.csv", header, rows, cfg)
    summary = {"suite": suite, "checks": len(rows), "failed": len(failed), "passed": not failed}
    if suite == "ledger":
        summary["failing_stages"] = [r[0] for r in failed]
    write_json(out / f"verify_{suite}.json", summary, cfg)
    if failed:
        print(json.dumps(summary), file=sys.stderr)
        return EXIT_SUITE_BASE + SUITES.index(suite)
    return EXIT_OK


# ----------------------------------------------------------------------------
# report


def cmd_report(cfg: RunConfig, out: Path) -> int:
    spec = _load_spec(cfg.spec)
    payload = {"domain": spec.domain, "barriers": [[b.site, b.log_value] for b in spec.barriers],
               "gaps_increasing": check_gaps(spec)}
    growth = {}
    for side, _ in _halves(spec):
        sched = GrowthSchedule.from_spec(spec, side)
        if sched.sites:
            growth[side] = list(check_growth(sched).slack)
    payload["growth_slack"] = growth
    if cfg.ledger:
        try:
            rep = replay_ledger(spec, ConstructionLedger.loads(Path(cfg.ledger).read_text()))
            payload["ledger"] = {"passed": rep.passed, "failing_stages": rep.failing_stages(),
                                 "coverage_ok": rep.coverage_ok}
        except LedgerIntegrityError as exc:
            payload["ledger"] = {"passed": False, "error": str(exc)}
    write_json(out / "report.json", payload, cfg)
    return EXIT_OK


HANDLERS = {"construct": cmd_construct, "mfunc": cmd_mfunc, "dims": cmd_dims,
            "verify": cmd_verify, "report": cmd_report}


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return HANDLERS[cfg.command](cfg, out)


# ----------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsedim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config; flags override it")
        s.add_argument("--spec")
        s.add_argument("--ledger")
        s.add_argument("--out")
        s.add_argument("--e-grid", dest="e_grid", help="lo:hi:n, linear")
        s.add_argument("--eps-grid", dest="eps_grid", help="lo:hi:n, log-spaced")
        s.add_argument("--delta-grid", dest="delta_grid", help="lo:hi:n, log-spaced")
        s.add_argument("--theta-points", dest="theta_points", type=int)
        s.add_argument("--precision", help="double or ext:<bits>")
        s.add_argument("--workers", type=int)
        s.add_argument("--seed", type=int)
        if name == "construct":
            s.add_argument("--kind", choices=KINDS)
            s.add_argument("--stages", type=int)
        if name == "verify":
            s.add_argument("--suite", choices=SUITES)
            s.add_argument("--samples", type=int)
        if name == "dims":
            s.add_argument("--source", choices=("proxy", "oracle"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        base = {}
        if args.config:
            base = parse_config(args.config).to_dict()
            if base["command"] != args.command:
                raise ConfigError(f"config is for {base['command']!r}, not {args.command!r}")
        flags = {k: v for k, v in vars(args).items() if k != "config" and v is not None}
        cfg = config_from_dict({**base, **flags})
    except ConfigError as exc:
        print(json.dumps({"error": "config", "detail": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "detail": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":      # pragma: no cover
    sys.exit(main())
