"""End-to-end acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line with the measured quantity; the lines are
printed in the "acceptance criteria" section of the pytest summary.
"""

import math
import time

import numpy as np
import pytest

from delaywave.delay import (
    DelayCoefficient,
    abs_integral,
    fit_gamma_omega,
    shifted_cumulative,
    window_bound_K,
)
from delaywave.energy import (
    cbar,
    check_energy_growth,
    check_lower_bound,
    decay_envelope,
    energy_rate,
    history_forcing_norm,
    initial_data_size,
    smallness_program,
)
from delaywave.integrator import (
    ConstantHistory,
    HistoryBuffer,
    Scenario,
    SinusoidHistory,
    ZeroHistory,
    rk4_delay_step,
    simulate,
)
from delaywave.nonlinearity import PowerNonlinearity, ZeroNonlinearity
from delaywave.semigroup import assemble_generator, decay_violations, estimate_decay
from delaywave.spectral import State, plate_preset, w_norm, wave_preset
from oracles import expm_solution, random_pl_k, riemann_abs, riemann_window_max, scalar_dde_exact

FULL = (0.0, math.pi)
HALF = (0.0, math.pi / 2)


def test_c1_linear_limit_oracle(accept):
    start = time.perf_counter()
    sys = wave_preset(8, 1.0, FULL, HALF)
    rng = np.random.default_rng(2024)
    u0 = rng.standard_normal(8) / sys.lambdas
    v0 = rng.standard_normal(8) / np.arange(1, 9)
    scn = Scenario(sys, DelayCoefficient.constant(0.0, 0.5), ZeroNonlinearity(), u0, v0,
                   ConstantHistory(v0), 1e-3, 1.0)
    rec = simulate(scn)
    elapsed = time.perf_counter() - start
    u, v = expm_solution(sys.lambdas, sys.damping, u0, v0, 1.0)
    err = w_norm(sys, State(rec.u[-1] - u, rec.v[-1] - v))
    passed = err <= 1e-8 and elapsed < 5.0
    accept("C1 linear limit vs matrix exponential", passed, f"W-error {err:.2e} (<= 1e-8), {elapsed:.2f} s (< 5 s)")
    assert passed


def test_c2_gradient_check(accept):
    sys = wave_preset(8, 1.0, FULL, HALF)
    rng = np.random.default_rng(99)
    eps = 1e-5
    worst = 0.0
    for beta in (1.0, 2.0):
        nl = PowerNonlinearity(sys, beta, c_h=1.0)
        for _ in range(100):
            u = rng.standard_normal(8) / np.arange(1, 9)
            v = rng.standard_normal(8) / np.arange(1, 9)
            fd = (nl.psi(u + eps * v) - nl.psi(u - eps * v)) / (2 * eps)
            exact = float(nl.grad_psi(u) @ v)
            worst = max(worst, abs(fd - exact) / abs(exact))
    passed = worst <= 1e-6
    accept("C2 gradient vs central difference", passed, f"max relative error {worst:.2e} (<= 1e-6) over 200 pairs")
    assert passed


def _rate_error(m):
    sys = wave_preset(6, 1.0, FULL, HALF)
    tau = 0.5
    k = DelayCoefficient([0.0, 0.3, 1.0], [0.3, -0.2, 0.25], tau)
    v0 = np.array([0.3, 0.1, -0.2, 0.05, 0.0, 0.02])
    scn = Scenario(sys, k, ZeroNonlinearity(), [1.0, -0.5, 0.2, 0.1, 0.0, 0.05], v0,
                   SinusoidHistory(v0, 1.5), tau / m, 1.2)
    rec = simulate(scn)
    errs = []
    for t_probe in (0.65, 0.8, 0.95, 1.1):
        i = int(round(t_probe / scn.dt))
        fd = (rec.energy[i + 1] - rec.energy[i - 1]) / (2 * scn.dt)
        exact = energy_rate(sys, k, rec.times[i], rec.v[i], rec.v[i - scn.m])
        errs.append(abs(fd - exact))
    return max(errs)


def test_c3_energy_derivative_identity(accept):
    errs = [_rate_error(m) for m in (50, 100, 200)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    passed = min(ratios) >= 3.5
    accept("C3 energy derivative identity", passed,
           f"error reduction per halving {ratios[0]:.2f}, {ratios[1]:.2f} (>= 3.5)")
    assert passed


def test_c4_energy_growth_bound(accept):
    wave = wave_preset(6, 1.0, FULL, HALF)
    plate = plate_preset(4, 1.0, (0.5, 2.5), HALF)
    nl = PowerNonlinearity(wave, 2.0, n_calibration=2000)
    v_w = np.array([0.2, -0.1, 0.05, 0, 0, 0])
    cases = [
        ("constant k", wave, DelayCoefficient.constant(0.3, 0.5), ZeroNonlinearity(),
         [1.0, 0.5, 0, 0, 0, 0], v_w, ConstantHistory(v_w)),
        ("negative constant k", wave, DelayCoefficient.constant(-0.8, 1.0), ZeroNonlinearity(),
         [0.5, 0, 0.3, 0, 0, 0], v_w, SinusoidHistory(v_w, 2.0)),
        ("piecewise k", wave, DelayCoefficient([0.0, 1.0, 2.5, 4.0], [0.0, 1.2, -0.6, 0.1], 0.7),
         ZeroNonlinearity(), [0.2, 0.4, 0, 0.1, 0, 0], np.zeros(6), ZeroHistory(6)),
        ("power source, small data", wave, DelayCoefficient.constant(0.1, 0.5), nl,
         0.1 * np.array([1.0, 0.5, 0, 0, 0, 0]), 0.1 * v_w, ConstantHistory(0.1 * v_w)),
        ("plate", plate, DelayCoefficient.constant(0.5, 0.25), ZeroNonlinearity(),
         [0.1, 0.01, 0, 0], [0.0, 0.5, 0, 0], ConstantHistory([0.0, 0.5, 0, 0])),
    ]
    applicable = 0
    worst = 0.0
    failures = []
    for name, sys, k, nl_, u0, v0, hist in cases:
        rec = simulate(Scenario(sys, k, nl_, u0, v0, hist, 0.005, 6.0))
        if not check_lower_bound(rec, k).passed:
            continue
        applicable += 1
        rep = check_energy_growth(rec, k, sys.b, tol=0.01)
        worst = max(worst, rep.worst_ratio)
        if not rep.passed:
            failures.append(name)
    k = DelayCoefficient.constant(0.3, 0.5)
    t = np.linspace(0, 6, 13)
    closed_form_err = float(np.max(np.abs(cbar(k, 1.0, t) / np.exp(4 * 0.3 * t) - 1.0)))
    passed = not failures and applicable == len(cases) and closed_form_err <= 1e-13
    accept("C4 energy growth bound", passed,
           f"{applicable}/{len(cases)} scenarios with the lower bound, worst E/(Cbar E0) {worst:.3f}, "
           f"constant-k factor error {closed_form_err:.1e}")
    assert passed


def test_c5_envelope_dominance(accept):
    start = time.perf_counter()
    sys = wave_preset(8, 1.0, FULL, HALF)
    tau = 1.0
    kc = 0.02
    k = DelayCoefficient.constant(kc, tau)
    nl = PowerNonlinearity(sys, 2.0)
    est = estimate_decay(assemble_generator(sys))
    fit = fit_gamma_omega(k, est.M, est.omega, sys.b, horizon=40.0)
    expected_slope = est.M * sys.b**2 * math.exp(est.omega * tau) * kc
    assert fit.omega_prime == pytest.approx(expected_slope, rel=1e-12)
    assert fit.omega_prime < est.omega
    K = window_bound_K(k, 40.0)
    cert = smallness_program(est.M, est.omega, fit.gamma, fit.omega_prime, K, sys.b, tau, nl, k)
    assert cert.valid
    t_end = 5 * cert.N * tau

    shapes = [
        (np.array([1.0, 0.5, 0, 0, 0, 0, 0, 0]), np.zeros(8), "zero"),
        (np.array([0.3, 0, -0.2, 0, 0.1, 0, 0, 0]), np.array([0.5, 0.2, 0, 0, 0, 0, 0, 0.1]), "constant"),
        (np.array([0, 0.4, 0, 0, 0, 0, 0, 0]), np.array([0.0, 0, 0.3, -0.3, 0, 0, 0, 0]), "sinusoid"),
    ]
    worst = 0.0
    for u_shape, v_shape, kind in shapes:
        hist = {"zero": ZeroHistory(8), "constant": ConstantHistory(v_shape),
                "sinusoid": SinusoidHistory(v_shape, 2.0)}[kind]
        size1 = initial_data_size(sys, k, u_shape, v_shape, hist)
        s = 0.9 * cert.rho / size1
        u0, v0, h0 = s * u_shape, s * v_shape, hist.scaled(s)
        assert initial_data_size(sys, k, u0, v0, h0) < cert.rho
        rec = simulate(Scenario(sys, k, nl, u0, v0, h0, 0.01, t_end))
        env = decay_envelope(cert, float(rec.w_norms[0]), k, history_forcing_norm(sys, h0, tau))
        worst = max(worst, float(np.max(rec.w_norms / env.working(rec.times))))
    elapsed = time.perf_counter() - start
    passed = worst <= 1.05 and elapsed < 60.0
    accept("C5 decay envelope dominance", passed,
           f"max |U|/envelope {worst:.3f} (<= 1.05) on [0, {t_end:g}], N = {cert.N}, {elapsed:.1f} s (< 60 s)")
    assert passed


def test_c6_smallness_closed_forms(accept):
    worst_n = 0
    for n, a, tau in [(4, 1.0, 1.0), (8, 0.5, 0.5), (6, 1.5, 2.0), (3, 0.2, 0.3)]:
        sys = wave_preset(n, a, FULL, HALF)
        est = estimate_decay(assemble_generator(sys))
        k = DelayCoefficient.constant(0.0, tau)
        cert = smallness_program(est.M, est.omega, 0.0, 0.0, 0.0, sys.b, tau, ZeroNonlinearity(), k)
        expected = math.ceil(math.log(2 * est.M**2) / (est.omega * tau))
        worst_n = max(worst_n, abs(cert.N - expected))
    sys = wave_preset(4, 1.0, FULL, HALF)
    round_trip = 0.0
    for beta, c_h in [(1.0, 0.3), (2.0, 0.7), (0.5, 2.0), (3.0, 1.1)]:
        nl = PowerNonlinearity(sys, beta, c_h=c_h)
        assert nl.h_inverse(0.5) == pytest.approx((1 / (2 * c_h)) ** (1 / beta), rel=1e-15)
        for y in np.geomspace(1e-6, 10.0, 25):
            round_trip = max(round_trip, abs(float(nl.h_bound(nl.h_inverse(y))) / y - 1.0))
    passed = worst_n == 0 and round_trip <= 1e-12
    accept("C6 smallness closed forms", passed,
           f"N mismatches {worst_n}, h round-trip relative error {round_trip:.1e} (<= 1e-12)")
    assert passed


def test_c7_delay_quadrature(accept):
    rng = np.random.default_rng(31415)
    n = 100_000
    horizon = 8.0
    h = horizon / n
    worst = {"abs_integral": 0.0, "window_bound_K": 0.0, "shifted_cumulative": 0.0}
    for _ in range(50):
        tau = h * int(rng.integers(2_000, 20_000))
        bp, vals = random_pl_k(rng, tau)
        k = DelayCoefficient(bp, vals, tau)
        a, b = np.sort(rng.uniform(0.0, 6.0, 2))
        t = float(rng.uniform(0.5, 6.0))
        pairs = {
            "abs_integral": (abs_integral(k, a, b), riemann_abs(bp, vals, a, b, n)),
            "window_bound_K": (window_bound_K(k, horizon), riemann_window_max(bp, vals, tau, horizon, n)),
            "shifted_cumulative": (shifted_cumulative(k, t), riemann_abs(bp, vals, tau, t + tau, n)),
        }
        for name, (got, want) in pairs.items():
            worst[name] = max(worst[name], abs(got - want) / abs(want))
    passed = max(worst.values()) <= 1e-6
    accept("C7 delay coefficient quadrature", passed,
           ", ".join(f"{k_} {v:.1e}" for k_, v in worst.items()) + " (<= 1e-6)")
    assert passed


def test_c8_scalar_method_of_steps(accept):
    worst = 0.0
    for kc, tau, v0 in [(0.5, 1.0, 1.0), (-0.8, 0.7, 2.0), (2.0, 0.4, -1.5)]:
        m = 1000
        dt = tau / m
        buf = HistoryBuffer(tau, dt, ConstantHistory([v0]), 1, sample0=[v0])
        y = np.array([v0])
        rhs = lambda t, y, vd, kc=kc: -y - kc * vd
        for i in range(2 * m):
            y = rk4_delay_step(rhs, i * dt, y, dt, buf.delayed_stages())
            buf.push(y)
            worst = max(worst, abs(float(y[0]) - scalar_dde_exact((i + 1) * dt, kc, v0, tau)))
    passed = worst <= 1e-7
    accept("C8 scalar delay equation oracle", passed, f"max error on [0, 2 tau] {worst:.1e} (<= 1e-7)")
    assert passed


def _terminal(m):
    sys = wave_preset(8, 1.0, (0.3, 2.5), HALF)
    tau = 0.5
    k = DelayCoefficient([0.0, 0.25, 1.0, 1.75], [0.4, -0.3, 0.2, 0.1], tau)
    v0 = np.array([0.2, -0.1, 0.05, 0.0, 0.02, 0, 0, 0])
    u0 = np.array([1.0, 0.3, -0.2, 0.1, 0, 0.05, 0, 0])
    rec = simulate(Scenario(sys, k, ZeroNonlinearity(), u0, v0, SinusoidHistory(v0, 2.0), tau / m, 2.5))
    return np.concatenate([np.sqrt(sys.lambdas) * rec.u[-1], rec.v[-1]])


def test_c9_convergence_order(accept):
    coarse = 10
    ref = _terminal(8 * coarse)
    e1 = np.linalg.norm(_terminal(coarse) - ref)
    e2 = np.linalg.norm(_terminal(2 * coarse) - ref)
    order = math.log2(e1 / e2)
    passed = order >= 3.5
    accept("C9 RK4 convergence order", passed, f"observed order {order:.2f} (>= 3.5)")
    assert passed


def test_c10_semigroup_estimate(accept):
    rng = np.random.default_rng(271828)
    total = 0
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(2, 9))
        a = float(rng.uniform(0.2, 3.0))
        lo = float(rng.uniform(0.0, 2.0))
        hi = float(rng.uniform(lo + 0.5, math.pi)) if lo + 0.5 < math.pi else math.pi
        d_lo = float(rng.uniform(0.0, 2.5))
        d_hi = float(rng.uniform(d_lo + 0.3, math.pi)) if d_lo + 0.3 < math.pi else math.pi
        gen = assemble_generator(wave_preset(n, a, (lo, hi), (d_lo, d_hi)))
        est = estimate_decay(gen)
        times = np.unique(np.concatenate([
            np.linspace(0.0, 3.0 * est.horizon, 5_000),
            np.logspace(-4, math.log10(3.0 * est.horizon), 5_000),
        ]))
        count, ratio = decay_violations(gen, est, times)
        total += count
        worst = max(worst, ratio)
    passed = total == 0
    accept("C10 semigroup estimate validity", passed,
           f"{total} violations over 10 presets x 10^4 times, max norm/bound {worst:.6f}")
    assert passed
