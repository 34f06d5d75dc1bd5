"""Flat ``key = value`` scenario files.

Lines are ``key = value``; ``#`` starts a comment.  Numbers may be simple
arithmetic in ``pi`` (``pi/2``, ``3*pi/4``).  Vectors are comma separated.
Unknown keys are rejected and every problem is reported, not just the first.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, fields
from pathlib import Path

__all__ = ["ScenarioConfig", "ConfigError", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def _eval_number(text: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(f"not a number: {text!r}")

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _vector(text: str):
    text = text.strip()
    if text.lower() == "zero":
        return []
    return [_eval_number(p) for p in text.split(",") if p.strip()]


def _interval(text: str):
    vals = _vector(text)
    if len(vals) != 2:
        raise ValueError(f"expected two comma-separated endpoints, got {text!r}")
    return tuple(vals)


def _int(text: str):
    v = _eval_number(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _choice(*options):
    def conv(text):
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return t
    return conv


def _str(text):
    return text.strip()


@dataclass
class ScenarioConfig:
    preset: str = "wave"
    n: int = 8
    a: float = 1.0
    lambdas: list = field(default_factory=list)
    damp_interval: tuple = (0.0, math.pi)
    delay_interval: tuple = (0.0, math.pi / 2)
    beta: float = 0.0
    c_h: float | None = None
    calibration_seed: int = 0
    k: float | None = None
    k_csv: str | None = None
    tau: float = 1.0
    dt: float = 0.01
    t_end: float = 10.0
    u0: list = field(default_factory=lambda: [1.0])
    v0: list = field(default_factory=list)
    history: str = "constant"
    history_profile: list | None = None
    history_frequency: float = 1.0
    history_phase: float = 0.0
    scale: float = 1.0
    ceiling: float = 1e8
    decay_margin: float = 0.01
    omega_grid_size: int = 512
    fit_horizon: float | None = None
    slope_slack: float = 0.0
    envelope_tolerance: float = 0.05
    energy_tolerance: float = 0.01
    trajectory_csv: str | None = None
    certificate_report: str | None = None
    envelope_csv: str | None = None
    sweep_csv: str | None = None
    source: str = "<string>"
    base_dir: str = "."
    lines: dict = field(default_factory=dict)

    def resolve(self, p: str | None, suffix: str) -> Path:
        """Output or input path relative to the config file directory."""
        if p is None:
            stem = Path(self.source).stem if self.source != "<string>" else "scenario"
            p = f"{stem}.{suffix}"
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path


_CONVERTERS = {
    "preset": _choice("wave", "plate", "custom"),
    "n": _int,
    "a": _eval_number,
    "lambdas": _vector,
    "damp_interval": _interval,
    "delay_interval": _interval,
    "beta": _eval_number,
    "c_h": _eval_number,
    "calibration_seed": _int,
    "k": _eval_number,
    "k_csv": _str,
    "tau": _eval_number,
    "dt": _eval_number,
    "t_end": _eval_number,
    "u0": _vector,
    "v0": _vector,
    "history": _choice("zero", "constant", "sinusoid"),
    "history_profile": _vector,
    "history_frequency": _eval_number,
    "history_phase": _eval_number,
    "scale": _eval_number,
    "ceiling": _eval_number,
    "decay_margin": _eval_number,
    "omega_grid_size": _int,
    "fit_horizon": _eval_number,
    "slope_slack": _eval_number,
    "envelope_tolerance": _eval_number,
    "energy_tolerance": _eval_number,
    "trajectory_csv": _str,
    "certificate_report": _str,
    "envelope_csv": _str,
    "sweep_csv": _str,
}
assert set(_CONVERTERS) <= {f.name for f in fields(ScenarioConfig)}


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc.strerror})"]) from None
    return parse_config_text(text, source=str(path), base_dir=str(path.parent))


def parse_config_text(text: str, source: str = "<string>", base_dir: str = ".") -> ScenarioConfig:
    cfg = ScenarioConfig(source=source, base_dir=base_dir)
    errors = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            errors.append(f"{where}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONVERTERS:
            errors.append(f"{where}: unknown key {key!r}")
            continue
        if key in seen:
            errors.append(f"{where}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        try:
            setattr(cfg, key, _CONVERTERS[key](value))
        except ValueError as exc:
            errors.append(f"{where}: {key}: {exc}")
    cfg.lines = seen
    errors.extend(_validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate(cfg: ScenarioConfig):
    errs = []

    def err(key, msg):
        line = cfg.lines.get(key)
        where = f"{cfg.source}:{line}" if line else cfg.source
        errs.append(f"{where}: {key}: {msg}")

    def positive(key):
        v = getattr(cfg, key)
        if v is not None and not (math.isfinite(v) and v > 0.0):
            err(key, f"must be positive, got {v}")
            return False
        return True

    if cfg.preset == "custom":
        if not cfg.lambdas:
            err("lambdas", "custom preset needs explicit eigenvalues")
        else:
            if any(x <= 0.0 for x in cfg.lambdas):
                err("lambdas", "eigenvalues must be positive")
            if any(y < x for x, y in zip(cfg.lambdas, cfg.lambdas[1:])):
                err("lambdas", "eigenvalues must be nondecreasing")
            if "n" in cfg.lines and cfg.n != len(cfg.lambdas):
                err("n", f"n = {cfg.n} disagrees with {len(cfg.lambdas)} eigenvalues")
            cfg.n = len(cfg.lambdas)
    elif cfg.lambdas:
        err("lambdas", "only allowed with preset = custom")
    if cfg.n < 1:
        err("n", f"must be a positive integer, got {cfg.n}")
    positive("a")
    for key in ("damp_interval", "delay_interval"):
        lo, hi = getattr(cfg, key)
        if not (0.0 <= lo < hi <= math.pi):
            err(key, f"must satisfy 0 <= lo < hi <= pi, got ({lo}, {hi})")
    if cfg.beta < 0.0 or not math.isfinite(cfg.beta):
        err("beta", f"must be >= 0 (0 selects the linear model), got {cfg.beta}")
    if cfg.c_h is not None:
        positive("c_h")
    if (cfg.k is None) == (cfg.k_csv is None):
        err("k", "give exactly one of 'k' (constant) or 'k_csv'")
    tau_ok = positive("tau")
    dt_ok = positive("dt")
    if tau_ok and dt_ok:
        m = round(cfg.tau / cfg.dt)
        if m < 1 or abs(m * cfg.dt - cfg.tau) > 1e-9 * cfg.tau:
            err("dt", f"tau/dt must be a positive integer, got tau = {cfg.tau}, dt = {cfg.dt}")
    if not (math.isfinite(cfg.t_end) and cfg.t_end >= 0.0):
        err("t_end", f"must be >= 0, got {cfg.t_end}")
    if cfg.n >= 1:
        for key in ("u0", "v0", "history_profile"):
            vec = getattr(cfg, key)
            if vec is not None and len(vec) > cfg.n:
                err(key, f"has {len(vec)} entries but the system has {cfg.n} modes")
    if cfg.history != "sinusoid" and cfg.history_profile is not None:
        err("history_profile", "only used with history = sinusoid")
    if cfg.history == "sinusoid":
        if not math.isfinite(cfg.history_frequency):
            err("history_frequency", "must be finite")
        if cfg.history_profile is None and abs(math.cos(cfg.history_phase)) < 1e-12:
            err("history_phase", "cos(phase) vanishes; give history_profile explicitly")
    if not (math.isfinite(cfg.scale) and cfg.scale >= 0.0):
        err("scale", f"must be >= 0, got {cfg.scale}")
    positive("ceiling")
    if not 0.0 <= cfg.decay_margin < 1.0:
        err("decay_margin", f"must lie in [0, 1), got {cfg.decay_margin}")
    if cfg.omega_grid_size < 1:
        err("omega_grid_size", "must be positive")
    if cfg.fit_horizon is not None and tau_ok and cfg.fit_horizon < cfg.tau:
        err("fit_horizon", f"must be at least tau = {cfg.tau}")
    if cfg.slope_slack < 0.0:
        err("slope_slack", "must be >= 0")
    for key in ("envelope_tolerance", "energy_tolerance"):
        if getattr(cfg, key) < 0.0:
            err(key, "must be >= 0")
    return errs
