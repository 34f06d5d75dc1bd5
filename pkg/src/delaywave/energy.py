"""Energy functional, Gronwall factor, decay envelopes and the smallness program.

Energy of a state with velocity history on ``[t - tau, t]``::

    E = 1/2 |v|^2 + 1/2 |A^1/2 u|^2 - psi(u) + 1/2 int_{t-tau}^t |k(s+tau)| <BB* v(s), v(s)> ds
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .delay import DelayCoefficient, abs_integral, shifted_cumulative
from .nonlinearity import ZeroNonlinearity
from .spectral import SpectralSystem, State

__all__ = [
    "EnergyTerms",
    "energy_terms",
    "energy",
    "energy_rate",
    "cbar",
    "check_energy_growth",
    "check_lower_bound",
    "CheckResult",
    "StabilityCertificate",
    "smallness_program",
    "minimal_N",
    "DecayEnvelope",
    "decay_envelope",
    "initial_data_size",
    "history_forcing_norm",
]


@dataclass(frozen=True)
class EnergyTerms:
    kinetic: float
    elastic: float
    psi: float
    history_integral: float

    @property
    def energy(self) -> float:
        return self.kinetic + self.elastic - self.psi + 0.5 * self.history_integral


def _history_integral(sys: SpectralSystem, k: DelayCoefficient, history) -> float:
    # trapezoid on the buffer grid, |k(s + tau)| exact at the nodes
    vals = history.window()
    q = np.einsum("ij,jk,ik->i", vals, sys.delay_op, vals)
    w = np.abs(k(history.times() + k.tau))
    f = w * q
    return float(history.dt * (f.sum() - 0.5 * (f[0] + f[-1])))


def energy_terms(sys, nl, k, u, v, history) -> EnergyTerms:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return EnergyTerms(
        kinetic=0.5 * float(v @ v),
        elastic=0.5 * float(sys.lambdas @ (u * u)),
        psi=float(nl.psi(u)),
        history_integral=_history_integral(sys, k, history),
    )


def energy(sys, nl, k, state: State, history, t: float | None = None) -> float:
    """Energy of ``state`` with the velocity history held in ``history``."""
    if len(history) < 2:
        raise ValueError("history buffer does not cover a delay window")
    if t is not None and abs(history.t_head - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"history ends at {history.t_head}, energy requested at {t}")
    if state.u.size != sys.n:
        raise ValueError(f"state has {state.u.size} modes, system has {sys.n}")
    return energy_terms(sys, nl, k, state.u, state.v, history).energy


def energy_rate(sys: SpectralSystem, k: DelayCoefficient, t, v, v_delayed):
    """Exact ``dE/dt``: dissipation, delay coupling and the two window-boundary terms.

    ``t``, ``v`` and ``v_delayed`` may be stacked along a leading time axis.
    """
    v = np.asarray(v, dtype=float)
    vd = np.asarray(v_delayed, dtype=float)
    G, D = sys.delay_op, sys.damping
    kt = k(t)
    kt_tau = k(np.asarray(t) + k.tau)
    dissip = np.einsum("...i,ij,...j->...", v, D, v)
    cross = np.einsum("...i,ij,...j->...", v, G, vd)
    q_now = np.einsum("...i,ij,...j->...", v, G, v)
    q_del = np.einsum("...i,ij,...j->...", vd, G, vd)
    return -dissip - kt * cross + 0.5 * np.abs(kt_tau) * q_now - 0.5 * np.abs(kt) * q_del


def cbar(k: DelayCoefficient, b: float, t):
    """Gronwall factor ``exp(2 b^2 int_0^t (|k(s)| + |k(s+tau)|) ds)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be nonnegative")
    mass = abs_integral(k, np.zeros_like(t), t) + shifted_cumulative(k, t)
    out = np.exp(2.0 * b * b * mass)
    return out if out.ndim else float(out)


# --- trajectory checks -------------------------------------------------------


@dataclass(frozen=True)
class EnergyGrowthReport:
    hypothesis_ok: bool
    first_hypothesis_violation: float | None
    bound_ok: bool
    worst_margin: float
    worst_ratio: float
    first_bound_violation: float | None

    @property
    def passed(self) -> bool:
        return self.hypothesis_ok and self.bound_ok


def check_energy_growth(traj, k: DelayCoefficient, b: float, tol: float = 0.01) -> EnergyGrowthReport:
    """Check ``E(t) <= Cbar(t) E(0) (1 + tol)`` after confirming ``E >= |v|^2 / 4``."""
    t = traj.times
    E = traj.energy
    quarter_kin = 0.25 * np.sum(traj.v * traj.v, axis=1)
    hyp = E >= quarter_kin
    first_hyp = None if hyp.all() else float(t[np.argmin(hyp)])
    bound = cbar(k, b, t) * E[0] * (1.0 + tol)
    margin = bound - E
    ok = margin >= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0.0, E / (bound / (1.0 + tol)), 0.0)
    return EnergyGrowthReport(
        hypothesis_ok=first_hyp is None,
        first_hypothesis_violation=first_hyp,
        bound_ok=bool(ok.all()),
        worst_margin=float(margin.min()),
        worst_ratio=float(ratio.max()),
        first_bound_violation=None if ok.all() else float(t[np.argmin(ok)]),
    )


@dataclass(frozen=True)
class LowerBoundReport:
    full_ok: bool
    w_ok: bool
    first_full_failure: float | None
    first_w_failure: float | None
    min_full_margin: float
    min_w_margin: float

    @property
    def passed(self) -> bool:
        return self.full_ok and self.w_ok


def _strict_ok(E, rhs):
    # E > rhs, except the null solution where both sides vanish
    return (E > rhs) | ((E == 0.0) & (rhs == 0.0))


def check_lower_bound(traj, k: DelayCoefficient | None = None) -> LowerBoundReport:
    """Pointwise ``E > (|v|^2 + |A^1/2 u|^2 + history)/4`` and ``E > |U|_W^2 / 4``."""
    E = traj.energy
    kin = np.sum(traj.v * traj.v, axis=1)
    ela = np.sum(traj.lambdas * traj.u * traj.u, axis=1)
    rhs_full = 0.25 * (kin + ela + traj.history_integrals)
    rhs_w = 0.25 * (kin + ela)
    ok_full = _strict_ok(E, rhs_full)
    ok_w = _strict_ok(E, rhs_w)
    t = traj.times
    return LowerBoundReport(
        full_ok=bool(ok_full.all()),
        w_ok=bool(ok_w.all()),
        first_full_failure=None if ok_full.all() else float(t[np.argmin(ok_full)]),
        first_w_failure=None if ok_w.all() else float(t[np.argmin(ok_w)]),
        min_full_margin=float(np.min(E - rhs_full)),
        min_w_margin=float(np.min(E - rhs_w)),
    )


# --- certificate ---------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    bound: float
    margin: float
    passed: bool


def _le(name, value, bound):
    return CheckResult(name, value, bound, bound - value, bool(value <= bound))


def _lt(name, value, bound):
    return CheckResult(name, value, bound, bound - value, bool(value < bound))


@dataclass(frozen=True)
class StabilityCertificate:
    M: float
    omega: float
    b: float
    K: float
    gamma: float
    omega_prime: float
    tau: float
    N: int
    C_N: float
    rho: float
    C_rho: float
    decay_rate: float
    general_rate: float
    L_C_rho: float
    cbar_N: float
    h_inv_half: float
    rho_strict: float
    rho_sqrt: float
    rho_halvings: int
    rho_constrained: bool
    checks: tuple = ()
    extra: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(c.passed for c in self.checks)

    def items(self):
        """Flat ``(name, value)`` pairs in report order."""
        out = [
            ("valid", self.valid),
            ("M", self.M),
            ("omega", self.omega),
            ("b", self.b),
            ("K", self.K),
            ("gamma", self.gamma),
            ("omega_prime", self.omega_prime),
            ("tau", self.tau),
            ("N", self.N),
            ("C_N", self.C_N),
            ("cbar_N_tau", self.cbar_N),
            ("h_inv_half", self.h_inv_half),
            ("rho_strict", self.rho_strict),
            ("rho_sqrt", self.rho_sqrt),
            ("rho_halvings", self.rho_halvings),
            ("rho_constrained", self.rho_constrained),
            ("rho", self.rho),
            ("C_rho", self.C_rho),
            ("L_C_rho", self.L_C_rho),
            ("decay_rate", self.decay_rate),
            ("general_rate", self.general_rate),
        ]
        out.extend(sorted(self.extra.items()))
        for c in self.checks:
            out.extend(
                [
                    (f"check.{c.name}.value", c.value),
                    (f"check.{c.name}.bound", c.bound),
                    (f"check.{c.name}.margin", c.margin),
                    (f"check.{c.name}.passed", c.passed),
                ]
            )
        return out

    def to_report(self) -> str:
        return "".join(f"{name} = {format_value(v)}\n" for name, v in self.items())


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _cn(M, gamma, K, omega, tau, b, omega_prime, N):
    return (
        2.0 * M * M * math.exp(2.0 * gamma)
        * (1.0 + K * math.exp(omega * tau) * b * b)
        * (1.0 + math.exp(2.0 * omega * tau) * K)
        * math.exp(-(omega - omega_prime) * N * tau)
    )


def minimal_N(M, omega, gamma, omega_prime, K, b, tau) -> int:
    """Smallest ``N >= 1`` with ``C_N <= 1``."""
    log_pref = (
        math.log(2.0 * M * M) + 2.0 * gamma
        + math.log1p(K * math.exp(omega * tau) * b * b)
        + math.log1p(math.exp(2.0 * omega * tau) * K)
    )
    N = max(1, math.ceil(log_pref / ((omega - omega_prime) * tau)))
    while N > 1 and _cn(M, gamma, K, omega, tau, b, omega_prime, N - 1) <= 1.0:
        N -= 1
    while _cn(M, gamma, K, omega, tau, b, omega_prime, N) > 1.0:
        N += 1
    return N


def smallness_program(
    M: float,
    omega: float,
    gamma: float,
    omega_prime: float,
    K: float,
    b: float,
    tau: float,
    nl,
    k: DelayCoefficient,
    max_halvings: int = 2000,
    extra: dict | None = None,
    extra_checks: tuple = (),
) -> StabilityCertificate:
    """Choose ``N``, ``rho`` and ``C_rho`` for the small-data global decay result."""
    if not omega_prime < omega:
        raise ValueError(f"omega' = {omega_prime} must be below omega = {omega}")
    if M < 1.0 or omega <= 0.0 or gamma < 0.0 or K < 0.0 or b < 0.0 or tau <= 0.0:
        raise ValueError("certificate inputs out of range")
    N = minimal_N(M, omega, gamma, omega_prime, K, b, tau)
    C_N = _cn(M, gamma, K, omega, tau, b, omega_prime, N)
    cb = cbar(k, b, N * tau)
    h_inv = nl.h_inverse(0.5)
    lip_bound = (omega - omega_prime) / (2.0 * M)

    if math.isinf(h_inv):
        rho_strict = rho_sqrt = rho = C_rho = math.inf
        L_C_rho = 0.0
        halvings = 0
        constrained = False
    else:
        rho_strict = h_inv / (2.0 * cb)
        rho_sqrt = h_inv / (2.0 * math.sqrt(cb))
        rho = rho_strict
        halvings = 0
        while float(nl.lipschitz_L(2.0 * math.sqrt(cb) * rho)) >= lip_bound:
            if halvings >= max_halvings:
                break
            rho *= 0.5
            halvings += 1
        C_rho = 2.0 * math.sqrt(cb) * rho
        L_C_rho = float(nl.lipschitz_L(C_rho))
        constrained = True

    decay_rate = 0.5 * (omega - omega_prime)
    general_rate = omega - omega_prime - M * L_C_rho
    checks = [
        _lt("omega_prime_below_omega", omega_prime, omega),
        _le("C_N_at_most_one", C_N, 1.0),
        _lt("lipschitz_at_C_rho", L_C_rho, lip_bound),
        _lt("decay_rate_positive", -decay_rate, 0.0),
    ]
    if constrained:
        checks.append(_le("h_at_C_rho_at_most_half", float(nl.h_bound(C_rho)), 0.5))
    checks.extend(extra_checks)
    return StabilityCertificate(
        M=float(M), omega=float(omega), b=float(b), K=float(K), gamma=float(gamma),
        omega_prime=float(omega_prime), tau=float(tau), N=int(N), C_N=float(C_N),
        rho=float(rho), C_rho=float(C_rho), decay_rate=decay_rate, general_rate=general_rate,
        L_C_rho=L_C_rho, cbar_N=float(cb), h_inv_half=float(h_inv), rho_strict=float(rho_strict),
        rho_sqrt=float(rho_sqrt), rho_halvings=halvings, rho_constrained=constrained,
        checks=tuple(checks), extra=dict(extra or {}),
    )


# --- envelopes -------------------------------------------------------------------


def _abs_k_weighted_integral(k: DelayCoefficient, func) -> float:
    """``int_0^tau |k(s)| func(s) ds`` with quadrature breaks at the kinks of ``k``."""
    tau = k.tau
    pts = [p for p in k.kinks if 0.0 < p < tau]
    val, _ = integrate.quad(
        lambda s: abs(float(k(s))) * func(s), 0.0, tau,
        points=pts or None, limit=500, epsabs=1e-14, epsrel=1e-12,
    )
    return val


def history_forcing_norm(sys: SpectralSystem, history, tau: float):
    """``s -> ||BB* g(s - tau)||`` on ``[0, tau]``."""
    def f(s):
        return float(np.linalg.norm(sys.delay_op @ np.asarray(history(s - tau)).reshape(sys.n)))
    return f


def initial_data_size(sys: SpectralSystem, k: DelayCoefficient, u0, v0, history) -> float:
    """``sqrt(|U0|_W^2 + int_{-tau}^0 |k(s+tau)| |B* g(s)|^2 ds)``."""
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    w2 = float(sys.lambdas @ (u0 * u0) + v0 @ v0)
    G = sys.delay_op

    def q(s):
        g = np.asarray(history(s - k.tau), dtype=float).reshape(sys.n)
        return float(g @ G @ g)

    return math.sqrt(w2 + _abs_k_weighted_integral(k, q))


@dataclass(frozen=True)
class DecayEnvelope:
    prefactor: float
    general_rate: float
    working_rate: float

    def general(self, t):
        return self.prefactor * np.exp(-self.general_rate * np.asarray(t, dtype=float))

    def working(self, t):
        return self.prefactor * np.exp(-self.working_rate * np.asarray(t, dtype=float))

    def __call__(self, t):
        return self.general(t), self.working(t)


def decay_envelope(cert: StabilityCertificate, U0_wnorm: float, k: DelayCoefficient, f_norm=None):
    """Exponential envelopes for ``||U(t)||_W``.

    ``f_norm(s)`` gives ``||f(s - tau)||_W`` on ``[0, tau]``; ``None`` means zero
    initial history.  The prefactor is
    ``M e^gamma (||U0|| + int_0^tau e^{omega s} |k(s)| f_norm(s) ds)``.
    """
    if not cert.valid:
        failed = ", ".join(c.name for c in cert.checks if not c.passed)
        raise ValueError(f"certificate is not valid (failed: {failed})")
    if not math.isclose(cert.tau, k.tau, rel_tol=1e-12):
        raise ValueError("certificate and delay coefficient disagree on tau")
    integral = 0.0
    if f_norm is not None:
        integral = _abs_k_weighted_integral(k, lambda s: math.exp(cert.omega * s) * f_norm(s))
    prefactor = cert.M * math.exp(cert.gamma) * (U0_wnorm + integral)
    return DecayEnvelope(prefactor, cert.general_rate, cert.decay_rate)
