"""Batch front end: ``gpseg {relax,minimax,sweep,check}``.

Configuration is a plain ``key = value`` file (``#`` starts a comment).
Command-line flags override the file.  Every output carries the hash of the
resolved configuration, so identical configs give identical bytes.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from .checks import format_table, run_checks, smooth_positive
from .discretization import SolverError, build_grid, load_snapshot, save_snapshot
from .flows import FlowCollapseError, FlowConfig, StepperError, relax_beta, relax_infty
from .functionals import DegenerateStateError, StatePair, make_signed, make_state, multipliers, tilde_multipliers
from .minimax import FamilyError, build_phi_basis, extract_critical, minimax_level, psi_map
from .sweep import DEFAULT_SCHEDULE, SweepError, limit_point_check, run_sweep

NUMERICAL_ERRORS = (FlowCollapseError, StepperError, SolverError, DegenerateStateError, FamilyError,
                    SweepError, FloatingPointError)
INITIAL_CONDITIONS = ("two-bump", "random-equivariant", "snapshot")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _beta(text: str) -> float:
    low = text.strip().lower()
    value = math.inf if low in ("inf", "infinity") else float(low)
    if not value > 0:
        raise ValueError("beta must be positive")
    return value


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _choice(options):
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


# key -> (parser, default); flow settings are added from FlowConfig below
KEYS = {
    "dimension": (int, 1),
    "n": (int, 127),
    "lengths": (_floats, (1.0,)),
    "k": (int, 1),
    "beta": (_beta, 10.0),
    "schedule": (_floats, DEFAULT_SCHEDULE),
    "m": (int, 0),
    "seed": (int, 0),
    "init": (_choice(INITIAL_CONDITIONS), "two-bump"),
    "snapshot": (str, ""),
    "out": (str, "out"),
    "time_budget": (float, 1.0),
    "max_rounds": (int, 200),
    "limit_tol": (float, 0.05),
    "check_n": (int, 63),
    "check_samples": (int, 100),
    "emit_traces": (_bool, True),
    "emit_snapshots": (_bool, True),
}
_FLOW_FIELDS = {f.name: f for f in dataclasses.fields(FlowConfig)}
for _name, _f in _FLOW_FIELDS.items():
    KEYS[_name] = (int if _f.type in ("int", int) else float, _f.default)


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into raw strings, rejecting unknown keys."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        raw[key] = value
    return raw


def resolve_config(raw: dict) -> dict:
    cfg = {key: default for key, (_, default) in KEYS.items()}
    for key, value in raw.items():
        if key not in KEYS:
            raise ConfigError(key, "unknown key")
        parser = KEYS[key][0]
        try:
            cfg[key] = parser(value) if isinstance(value, str) else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"bad value {value!r} ({exc})") from None
    if cfg["dimension"] not in (1, 2):
        raise ConfigError("dimension", "must be 1 or 2")
    if cfg["n"] < 3:
        raise ConfigError("n", "must be >= 3")
    if len(cfg["lengths"]) == 1 and cfg["dimension"] == 2:
        cfg["lengths"] = cfg["lengths"] * 2
    if len(cfg["lengths"]) != cfg["dimension"] or min(cfg["lengths"]) <= 0:
        raise ConfigError("lengths", "need one positive length per axis")
    if cfg["k"] < 1:
        raise ConfigError("k", "must be >= 1")
    if cfg["m"] < 0 or cfg["m"] % 2:
        raise ConfigError("m", "must be even (0 selects the default for k)")
    sched = cfg["schedule"]
    if not sched or any(b <= 0 for b in sched) or any(b2 <= b1 for b1, b2 in zip(sched, sched[1:])):
        raise ConfigError("schedule", "must be positive and strictly increasing")
    if cfg["init"] == "snapshot" and not cfg["snapshot"]:
        raise ConfigError("snapshot", "required when init = snapshot")
    try:
        flow_config(cfg)
    except ValueError as exc:
        raise ConfigError("flow", str(exc)) from None
    return cfg


def flow_config(cfg: dict) -> FlowConfig:
    return FlowConfig(**{name: cfg[name] for name in _FLOW_FIELDS})


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={_canon(cfg[k])}" for k in sorted(cfg) if k != "out")
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _canon(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_canon(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _beta_text(beta: float) -> str:
    return "inf" if math.isinf(beta) else repr(beta)


# Initial conditions


def two_bump(grid):
    """Smooth, separated bumps: u around the left third, v around the right."""
    x = grid.coordinates()
    L = grid.lengths
    envelope = np.prod([np.sin(np.pi * xi / Li) for xi, Li in zip(x, L)], axis=0)
    s = x[0] / L[0]
    u = envelope * np.exp(-((s - 0.3) ** 2) / (2 * 0.12**2))
    v = envelope * np.exp(-((s - 0.7) ** 2) / (2 * 0.12**2))
    return u, v


def initial_pair(cfg: dict, grid, rng: np.random.Generator) -> StatePair:
    if cfg["init"] == "two-bump":
        return make_state(grid, *two_bump(grid))
    if cfg["init"] == "random-equivariant":
        # a random member of the symmetric family, lifted off the segregated set
        basis = build_phi_basis(grid, cfg["k"])
        t = rng.standard_normal(cfg["k"])
        base = psi_map(basis, t / np.linalg.norm(t))
        lift_u, lift_v = smooth_positive(grid, rng), smooth_positive(grid, rng)
        return make_state(grid, base.u + 0.1 * lift_u, base.v + 0.1 * lift_v)
    root = Path(cfg["snapshot"])
    g_u, u = load_snapshot(root / "u.txt")
    g_v, v = load_snapshot(root / "v.txt")
    if g_u != g_v:
        raise ConfigError("snapshot", "u and v snapshots live on different grids")
    return make_state(g_u, u, v)


def initial_signed(cfg: dict, grid, rng: np.random.Generator):
    """Returns ``(grid, w)``; a snapshot brings its own grid."""
    if cfg["init"] == "snapshot":
        path = Path(cfg["snapshot"]) / "w.txt"
        if path.exists():
            g, w = load_snapshot(path)
            return g, make_signed(g, w)
    s = initial_pair(cfg, grid, rng)
    return s.grid, make_signed(s.grid, s.u - s.v)


# Commands


class Runner:
    def __init__(self, cfg: dict, quiet: bool):
        self.cfg = cfg
        self.quiet = quiet
        self.hash = config_hash(cfg)
        self.out = Path(cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.rng = np.random.default_rng(cfg["seed"])
        self.grid = build_grid(cfg["dimension"], cfg["n"], cfg["lengths"])
        self.flow = flow_config(cfg)

    @property
    def header(self) -> str:
        return f"config_hash={self.hash}"

    def say(self, text: str) -> None:
        if not self.quiet:
            print(text)

    def write_text(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)

    def write_json(self, name: str, payload: dict) -> None:
        body = {"config_hash": self.hash}
        body.update(payload)
        self.write_text(name, json.dumps(body, indent=2, sort_keys=True) + "\n")

    def snapshot(self, name: str, grid, f) -> None:
        if self.cfg["emit_snapshots"]:
            save_snapshot(self.out / name, grid, f, self.header)

    def relax(self) -> int:
        beta = self.cfg["beta"]
        if math.isinf(beta):
            grid, w0 = initial_signed(self.cfg, self.grid, self.rng)
            w, trace = relax_infty(grid, w0, self.flow)
            tm = tilde_multipliers(grid, w)
            self.snapshot("w.txt", grid, w)
            lam, mu = tm.lam, tm.mu
        else:
            s0 = initial_pair(self.cfg, self.grid, self.rng)
            s, trace = relax_beta(s0, beta, self.flow)
            m = multipliers(s, beta)
            self.snapshot("u.txt", s.grid, s.u)
            self.snapshot("v.txt", s.grid, s.v)
            lam, mu = m.lam, m.mu
        if self.cfg["emit_traces"]:
            self.write_text("trace.csv", trace.to_csv(self.header))
        summary = {
            "command": "relax", "beta": _beta_text(beta), "steps": len(trace) - 1,
            "energy": trace.energy[-1], "residual": trace.residual[-1], "lambda": lam, "mu": mu,
            "converged": trace.converged, "rejected": trace.rejected,
        }
        self.write_json("summary.json", summary)
        self.say(f"relax beta={_beta_text(beta)}: {summary['steps']} steps, energy {trace.energy[-1]:.12g}, "
                 f"residual {trace.residual[-1]:.3e}, converged={trace.converged}")
        return 0

    def minimax(self) -> int:
        cfg, k, beta = self.cfg, self.cfg["k"], self.cfg["beta"]
        basis = build_phi_basis(self.grid, k)
        est = minimax_level(k, beta, basis, cfg["m"] or None, self.flow, max_rounds=cfg["max_rounds"],
                            time_budget=cfg["time_budget"], rng=self.rng,
                            on_round=lambda r, v, _: self.say(f"  round {r}: sup {v:.12g}"))
        cp = extract_critical(est, cfg=self.flow)
        self.write_text("estimate.json", est.to_json({"config_hash": self.hash}) + "\n")
        pair = cp.pair()
        self.snapshot("u.txt", pair.grid, pair.u)
        self.snapshot("v.txt", pair.grid, pair.v)
        self.write_json("critical.json", {
            "beta": _beta_text(beta), "energy": cp.energy, "residual": cp.residual,
            "stationary": cp.stationary, "lambda": cp.multipliers.lam, "mu": cp.multipliers.mu,
        })
        self.say(f"minimax k={k} beta={_beta_text(beta)}: level {est.value:.12g}, argmax {est.argmax}, "
                 f"residual {est.residual:.3e}, critical energy {cp.energy:.12g}")
        return 0

    def sweep(self) -> int:
        cfg = self.cfg

        def progress(rec):
            self.say(f"  beta={_beta_text(rec.beta)}: level {rec.level:.10g}, segregation {rec.segregation:.3e}, "
                     f"dist to limit {rec.dist_to_limit:.4g}")

        report = run_sweep(cfg["k"], cfg["schedule"], self.grid, self.flow, cfg["m"] or None,
                           cfg["time_budget"], cfg["max_rounds"], progress)
        diag = limit_point_check(report, cfg["limit_tol"])
        self.write_text("sweep.csv", report.to_csv(self.header))
        self.write_text("sweep.json", report.to_json({"config_hash": self.hash}) + "\n")
        self.write_json("limit_point.json", dataclasses.asdict(diag))
        if cfg["emit_snapshots"]:
            for i, rec in enumerate(report.records + [report.infinity]):
                self.snapshot(f"u_{i}.txt", rec.state.grid, rec.state.u)
                self.snapshot(f"v_{i}.txt", rec.state.grid, rec.state.v)
        self.say(f"sweep k={cfg['k']}: {len(report.records)} beta rows + limit row; {diag.summary()}")
        return 0

    def check(self) -> int:
        results = run_checks(self.cfg["seed"], self.cfg["check_n"], self.cfg["check_samples"])
        table = format_table(results)
        self.write_text("check.txt", f"# {self.header}\n{table}\n")
        print(table)
        return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpseg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("relax", "minimax", "sweep", "check"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="key = value configuration file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = parse_config_text(args.config.read_text()) if args.config else {}
        for item in args.set:
            raw.update(parse_config_text(item))
        if args.out is not None:
            raw["out"] = args.out
        if args.seed is not None:
            raw["seed"] = str(args.seed)
        cfg = resolve_config(raw)
    except ConfigError as exc:
        print(f"error: kind=config key={exc.key} message={json.dumps(str(exc))}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: kind=config key=--config message={json.dumps(str(exc))}", file=sys.stderr)
        return 2
    try:
        runner = Runner(cfg, args.quiet)
        return getattr(runner, args.command)()
    except ConfigError as exc:
        print(f"error: kind=config key={exc.key} message={json.dumps(str(exc))}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"error: kind={type(exc).__name__} message={json.dumps(str(exc))}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: kind=io message={json.dumps(str(exc))}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
