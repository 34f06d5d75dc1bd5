"""Scenario pipeline: decay estimate, admissibility fit, certificate, simulation, checks."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .delay import DelayCoefficient, fit_gamma_omega, window_bound_K
from .energy import (
    CheckResult,
    check_energy_growth,
    check_lower_bound,
    decay_envelope,
    format_value,
    history_forcing_norm,
    initial_data_size,
    smallness_program,
)
from .integrator import ConstantHistory, Scenario, SinusoidHistory, ZeroHistory, simulate
from .nonlinearity import PowerNonlinearity, ZeroNonlinearity
from .semigroup import NoExponentialDecay, assemble_generator, estimate_decay
from .spectral import custom_preset, plate_preset, wave_preset

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


def _pad(vec, n):
    out = np.zeros(n)
    out[: len(vec)] = vec
    return out


def build_system(cfg: ScenarioConfig):
    if cfg.preset == "wave":
        return wave_preset(cfg.n, cfg.a, cfg.damp_interval, cfg.delay_interval)
    if cfg.preset == "plate":
        return plate_preset(cfg.n, cfg.a, cfg.damp_interval, cfg.delay_interval)
    return custom_preset(cfg.lambdas, cfg.a, cfg.damp_interval, cfg.delay_interval)


def build_k(cfg: ScenarioConfig) -> DelayCoefficient:
    if cfg.k is not None:
        return DelayCoefficient.constant(cfg.k, cfg.tau)
    path = cfg.resolve(cfg.k_csv, "k.csv")
    if not path.exists():
        raise FileNotFoundError(f"k CSV not found: {path}")
    return DelayCoefficient.from_csv(path, cfg.tau)


def build_nonlinearity(cfg: ScenarioConfig, sys):
    if cfg.beta == 0.0:
        return ZeroNonlinearity()
    return PowerNonlinearity(sys, cfg.beta, c_h=cfg.c_h, seed=cfg.calibration_seed)


def build_initial_data(cfg: ScenarioConfig, n: int, scale: float):
    u0 = _pad(cfg.u0, n)
    v0 = _pad(cfg.v0, n)
    if cfg.history == "zero":
        hist = ZeroHistory(n)
    elif cfg.history == "constant":
        hist = ConstantHistory(v0)
    else:
        profile = (
            _pad(cfg.history_profile, n)
            if cfg.history_profile is not None
            else v0 / math.cos(cfg.history_phase)
        )
        hist = SinusoidHistory(profile, cfg.history_frequency, cfg.history_phase)
    return scale * u0, scale * v0, hist.scaled(scale)


@dataclass
class CertifyResult:
    sys: object
    k: DelayCoefficient
    nl: object
    cert: object
    report_items: list
    valid: bool
    fit: object = None


def _default_horizon(cfg, k):
    return max(cfg.t_end, 10.0 * cfg.tau, float(k.breakpoints[-1]) + 2.0 * cfg.tau)


def certify_config(cfg: ScenarioConfig) -> CertifyResult:
    """Certificate without simulation; input errors propagate as exceptions."""
    sys = build_system(cfg)
    k = build_k(cfg)
    nl = build_nonlinearity(cfg, sys)
    horizon = cfg.fit_horizon if cfg.fit_horizon is not None else _default_horizon(cfg, k)
    items = [("preset", sys.label), ("n_modes", sys.n), ("horizon", horizon)]
    if isinstance(nl, PowerNonlinearity):
        items += [("beta", nl.beta), ("c_h", nl.c_h), ("c_h_sampled_ratio", nl.sampled_ratio),
                  ("c_h_safety", nl.safety)]
    try:
        est = estimate_decay(assemble_generator(sys), margin=cfg.decay_margin)
    except NoExponentialDecay as exc:
        items += [("valid", False), ("status", str(exc))]
        return CertifyResult(sys, k, nl, None, items, False)

    fit = fit_gamma_omega(k, est.M, est.omega, sys.b, horizon=horizon,
                          omega_grid_size=cfg.omega_grid_size, slope_slack=cfg.slope_slack)
    K = window_bound_K(k, horizon)
    if not fit.feasible:
        items += [("valid", False), ("status", fit.status), ("M", est.M), ("omega", est.omega),
                  ("K", K), ("tail_slope", fit.tail_slope)]
        return CertifyResult(sys, k, nl, None, items, False, fit)

    extra = {
        "abscissa": est.abscissa,
        "semigroup_horizon": est.horizon,
        "fit_margin": fit.achieved_margin,
        "fit_tail_slope": fit.tail_slope,
        "fit_horizon": fit.horizon,
        "K_horizon_limited": True,
    }
    fit_check = CheckResult("delay_mass_majorant", -fit.achieved_margin, 0.0,
                            fit.achieved_margin, fit.achieved_margin >= 0.0)
    cert = smallness_program(est.M, est.omega, fit.gamma, fit.omega_prime, K, sys.b, cfg.tau,
                             nl, k, extra=extra, extra_checks=(fit_check,))
    return CertifyResult(sys, k, nl, cert, items + cert.items(), cert.valid, fit)


@dataclass
class ScenarioOutcome:
    scale: float
    data_size: float
    certified: bool
    diverged: bool
    status: str
    final_w_norm: float
    max_ratio: float
    checks_passed: bool
    report_items: list
    trajectory: object = None
    envelope_rows: np.ndarray | None = None


def run_scenario(cfg: ScenarioConfig, cr: CertifyResult, scale: float) -> ScenarioOutcome:
    sys, k, nl, cert = cr.sys, cr.k, cr.nl, cr.cert
    u0, v0, hist = build_initial_data(cfg, sys.n, scale)
    scn = Scenario(sys, k, nl, u0, v0, hist, cfg.dt, cfg.t_end, ceiling=cfg.ceiling)
    traj = simulate(scn)
    size = initial_data_size(sys, k, u0, v0, hist)
    certified = cert is not None and size < cert.rho

    lower = check_lower_bound(traj, k)
    growth = check_energy_growth(traj, k, sys.b, tol=cfg.energy_tolerance)
    items = [
        ("run.scale", scale),
        ("run.status", traj.status),
        ("run.data_size", size),
        ("run.data_certified", certified),
        ("run.lower_bound.passed", lower.passed),
        ("run.lower_bound.min_w_margin", lower.min_w_margin),
        ("run.lower_bound.first_failure", lower.first_w_failure if lower.first_w_failure is not None else "none"),
        ("run.energy_growth.hypothesis_ok", growth.hypothesis_ok),
        ("run.energy_growth.passed", growth.passed),
        ("run.energy_growth.worst_ratio", growth.worst_ratio),
        ("run.final_w_norm", float(traj.w_norms[-1])),
    ]
    max_ratio = math.nan
    rows = None
    if cert is not None and cert.valid:
        env = decay_envelope(cert, float(traj.w_norms[0]), k, history_forcing_norm(sys, hist, k.tau))
        bound = env.working(traj.times)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0.0, traj.w_norms / bound, 0.0)
        max_ratio = float(ratio.max())
        rows = np.column_stack([traj.times, traj.w_norms, bound, ratio])
        items += [("run.envelope.prefactor", env.prefactor), ("run.envelope.max_ratio", max_ratio)]

    checks_passed = cr.valid
    if certified:
        env_ok = max_ratio <= 1.0 + cfg.envelope_tolerance
        growth_ok = growth.passed or not lower.passed
        checks_passed = checks_passed and not traj.diverged and lower.passed and growth_ok and env_ok
    elif cr.valid:
        # outside the certified ball only the certificate itself is binding
        items.append(("run.warning", "data not certified"))
    items.append(("run.checks_passed", checks_passed))
    return ScenarioOutcome(scale, size, certified, traj.diverged, traj.status,
                           float(traj.w_norms[-1]), max_ratio, checks_passed, items, traj, rows)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_report(items) -> str:
    return "".join(f"{name} = {format_value(v)}\n" for name, v in items)


def render_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(x) if not isinstance(x, str) else x for x in row])
    return buf.getvalue()


def run(cfg: ScenarioConfig) -> int:
    cr = certify_config(cfg)
    if cr.cert is None:
        write_atomic(cfg.resolve(cfg.certificate_report, "certificate.txt"), render_report(cr.report_items))
        log.error("no certificate: %s", dict(cr.report_items).get("status"))
        return EXIT_CHECK
    out = run_scenario(cfg, cr, cfg.scale)
    write_atomic(cfg.resolve(cfg.trajectory_csv, "trajectory.csv"), out.trajectory.to_csv())
    write_atomic(cfg.resolve(cfg.certificate_report, "certificate.txt"),
                 render_report(cr.report_items + out.report_items))
    if out.envelope_rows is not None:
        write_atomic(cfg.resolve(cfg.envelope_csv, "envelope.csv"),
                     render_table(["time", "w_norm", "envelope", "ratio"], out.envelope_rows.astype(float)))
    # every admissible (omega', gamma) pair on the grid, not only the selected one
    frontier = np.column_stack([cr.fit.frontier_omega_prime, cr.fit.frontier_gamma])
    write_atomic(cfg.resolve(None, "frontier.csv"), render_table(["omega_prime", "gamma"], frontier))
    if not cr.valid:
        log.error("certificate inequalities fail")
        return EXIT_CHECK
    if not out.certified:
        log.warning("initial data size %.6g is not below rho = %.6g: data not certified",
                    out.data_size, cr.cert.rho)
    return EXIT_OK if out.checks_passed else EXIT_CHECK


SWEEP_HEADER = ["scale", "data_size", "certified", "max_ratio", "diverged", "final_w_norm", "checks_passed"]


def sweep(cfg: ScenarioConfig, scales, output: Path | None = None) -> int:
    cr = certify_config(cfg)
    rows = []
    ok = cr.cert is not None and cr.valid
    for s in scales:
        if cr.cert is None:
            break
        out = run_scenario(cfg, cr, float(s))
        ratio = 0.0 if out.data_size == 0.0 else out.max_ratio
        rows.append([float(s), out.data_size, out.certified, ratio, out.diverged,
                     out.final_w_norm, out.checks_passed])
        ok = ok and out.checks_passed
    path = output if output is not None else cfg.resolve(cfg.sweep_csv, "sweep.csv")
    write_atomic(Path(path), render_table(SWEEP_HEADER, rows))
    return EXIT_OK if ok else EXIT_CHECK


def certify(cfg: ScenarioConfig, output: Path | None = None) -> tuple[int, str]:
    cr = certify_config(cfg)
    text = render_report(cr.report_items)
    if output is not None:
        write_atomic(Path(output), text)
    return (EXIT_OK if cr.valid else EXIT_CHECK), text
