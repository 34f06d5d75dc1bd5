"""Method-of-steps RK4 integrator for the delayed damped wave system.

The modal system is

    u' = v
    v' = -A u - CC* v - k(t) BB* v(t - tau) + grad psi(u)

and on each delay interval the delayed velocity is a known forcing read from
the history buffer.  ``dt`` divides ``tau`` so delayed grid times are exact
samples; half-step stage values are interpolated with a four-point cubic that
never straddles a multiple of ``tau`` (the solution is only piecewise smooth
across those seams).  Delayed times ``s <= 0`` are read straight from the
initial-history descriptor.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .delay import DelayCoefficient
from .energy import energy_terms
from .nonlinearity import ZeroNonlinearity
from .spectral import SpectralSystem, State

__all__ = [
    "ZeroHistory",
    "ConstantHistory",
    "SinusoidHistory",
    "HistoryBuffer",
    "Scenario",
    "TrajectoryRecord",
    "initial_history",
    "rk4_delay_step",
    "step",
    "simulate",
    "steps_per_delay",
]

_GUARD = 2


# --- initial history descriptors -------------------------------------------


@dataclass(frozen=True, eq=False)
class ZeroHistory:
    n: int

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.zeros(s.shape + (self.n,))

    def scaled(self, c):
        return self


@dataclass(frozen=True, eq=False)
class ConstantHistory:
    value: np.ndarray

    def __post_init__(self):
        value = np.array(self.value, dtype=float, ndmin=1)
        value.setflags(write=False)
        object.__setattr__(self, "value", value)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(np.asarray(self.value, dtype=float), s.shape + (len(self.value),)).copy()

    def scaled(self, c):
        return ConstantHistory(c * np.asarray(self.value, dtype=float))


@dataclass(frozen=True, eq=False)
class SinusoidHistory:
    """``g(s) = profile * cos(frequency * s + phase)``."""

    profile: np.ndarray
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        profile = np.array(self.profile, dtype=float, ndmin=1)
        profile.setflags(write=False)
        object.__setattr__(self, "profile", profile)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        c = np.cos(self.frequency * s + self.phase)
        return c[..., None] * np.asarray(self.profile, dtype=float)

    def scaled(self, c):
        return SinusoidHistory(c * np.asarray(self.profile, dtype=float), self.frequency, self.phase)


# --- history buffer ----------------------------------------------------------


def steps_per_delay(tau: float, dt: float) -> int:
    if not (dt > 0.0 and tau > 0.0):
        raise ValueError(f"tau and dt must be positive, got tau={tau}, dt={dt}")
    m = int(round(tau / dt))
    if m < 1 or abs(m * dt - tau) > 1e-9 * tau:
        raise ValueError(f"tau/dt must be a positive integer, got tau={tau}, dt={dt}")
    return m


def _lagrange_midpoint_weights(nodes, x):
    nodes = np.asarray(nodes, dtype=float)
    w = np.ones(nodes.size)
    for i, xi in enumerate(nodes):
        for j, xj in enumerate(nodes):
            if i != j:
                w[i] *= (x - xj) / (xi - xj)
    return w


class HistoryBuffer:
    """Ring buffer of delayed-quantity samples on ``[t - tau, t]``.

    Holds ``tau/dt + 1`` window samples plus two older guard samples used only
    by one-sided interpolation stencils next to a seam.
    """

    def __init__(self, tau: float, dt: float, history, dim: int, sample0=None):
        self.m = steps_per_delay(tau, dt)
        self.tau = float(tau)
        self.dt = self.tau / self.m
        self.history = history
        self.dim = dim
        self.step_index = 0
        cap = self.m + 1 + _GUARD
        times = (np.arange(cap) - (cap - 1)) * self.dt
        self._data = np.array(history(times), dtype=float).reshape(cap, dim)
        if sample0 is not None:
            self._data[-1] = sample0
        self._start = 0
        self._weights = {}

    @property
    def t_head(self) -> float:
        return self.step_index * self.dt

    def __len__(self):
        return self.m + 1

    def _slot(self, j):
        # j indexes the window: 0 -> t - tau, m -> t; guards are j = -1, -2
        return (self._start + _GUARD + j) % (self.m + 1 + _GUARD)

    def sample(self, j: int) -> np.ndarray:
        if not -_GUARD <= j <= self.m:
            raise IndexError(f"history gap: window index {j} outside [-{_GUARD}, {self.m}]")
        return self._data[self._slot(j)]

    def times(self) -> np.ndarray:
        return (self.step_index - self.m + np.arange(self.m + 1)) * self.dt

    def window(self) -> np.ndarray:
        idx = [self._slot(j) for j in range(self.m + 1)]
        return self._data[idx]

    def push(self, value) -> None:
        self._data[self._start] = value
        self._start = (self._start + 1) % (self.m + 1 + _GUARD)
        self.step_index += 1

    def _segment(self, j):
        """Window-index range of the inter-seam segment containing cell ``[j, j+1]``."""
        m, K = self.m, self.step_index
        first = K - m + j  # absolute step index of the cell's left end
        seg_lo = (first // m) * m
        return seg_lo - (K - m), seg_lo + m - (K - m)

    def midpoint(self, j: int = 0) -> np.ndarray:
        """Value at the middle of window cell ``[j, j+1]``."""
        s = (self.step_index - self.m + j + 0.5) * self.dt
        if s <= 0.0:
            return np.asarray(self.history(s), dtype=float).reshape(self.dim)
        lo, hi = self._segment(j)
        lo = max(lo, -_GUARD)
        hi = min(hi, self.m)
        start = min(max(j - 1, lo), max(hi - 3, lo))
        idx = tuple(range(start, min(start + 4, hi + 1)))
        key = tuple(i - j for i in idx)
        w = self._weights.get(key)
        if w is None:
            w = _lagrange_midpoint_weights(key, 0.5)
            self._weights[key] = w
        return sum(wi * self.sample(i) for wi, i in zip(w, idx))

    def delayed_stages(self):
        """Delayed values at ``t - tau``, ``t - tau + dt/2`` and ``t - tau + dt``."""
        return self.sample(0), self.midpoint(0), self.sample(1)


def rk4_delay_step(rhs, t, y, dt, delayed):
    """Classical RK4 step for ``y' = rhs(t, y, y_delayed)`` with stage-wise delayed values."""
    d0, dm, d1 = delayed
    h2 = 0.5 * dt
    k1 = rhs(t, y, d0)
    k2 = rhs(t + h2, y + h2 * k1, dm)
    k3 = rhs(t + h2, y + h2 * k2, dm)
    k4 = rhs(t + dt, y + dt * k3, d1)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# --- scenario and trajectory -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    sys: SpectralSystem
    k: DelayCoefficient
    nl: object
    u0: np.ndarray
    v0: np.ndarray
    history: object
    dt: float
    t_end: float
    ceiling: float = 1e8
    m: int = field(init=False)
    n_steps: int = field(init=False)

    def __post_init__(self):
        n = self.sys.n
        u0 = np.array(self.u0, dtype=float, ndmin=1)
        v0 = np.array(self.v0, dtype=float, ndmin=1)
        if u0.shape != (n,) or v0.shape != (n,):
            raise ValueError(f"initial data must have {n} modal coefficients")
        if not (self.t_end >= 0.0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be a nonnegative real, got {self.t_end}")
        m = steps_per_delay(self.k.tau, self.dt)
        dt = self.k.tau / m
        n_steps = int(math.ceil(self.t_end / dt - 1e-9)) if self.t_end > 0 else 0
        dt_max = 2.8 / math.sqrt(float(self.sys.lambdas[-1]))
        if dt > dt_max:
            warnings.warn(
                f"dt = {dt:g} exceeds the RK4 stability guideline 2.8/sqrt(max lambda) = {dt_max:g}",
                stacklevel=2,
            )
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n_steps", n_steps)


@dataclass(eq=False)
class TrajectoryRecord:
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    w_norms: np.ndarray
    delayed_forcing_norms: np.ndarray
    history_integrals: np.ndarray
    psi_values: np.ndarray
    lambdas: np.ndarray
    status: str = "ok"

    @property
    def diverged(self) -> bool:
        return self.status != "ok"

    @property
    def states(self):
        return [State(u, v) for u, v in zip(self.u, self.v)]

    def to_csv(self, fh=None) -> str:
        """Columns ``time, E, w_norm, delayed_forcing_norm, u_1..u_n, v_1..v_n``."""
        n = self.u.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["time", "E", "w_norm", "delayed_forcing_norm"]
            + [f"u_{i}" for i in range(1, n + 1)]
            + [f"v_{i}" for i in range(1, n + 1)]
        )
        cols = np.column_stack(
            [self.times, self.energy, self.w_norms, self.delayed_forcing_norms, self.u, self.v]
        )
        for row in cols:
            writer.writerow([f"{x:.17g}" for x in row])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


def initial_history(scn: Scenario) -> HistoryBuffer:
    """History buffer on ``[-tau, 0]`` filled from the descriptor; ``g(0)`` must equal ``v0``."""
    g0 = np.asarray(scn.history(0.0), dtype=float).reshape(scn.sys.n)
    if np.max(np.abs(g0 - scn.v0), initial=0.0) > 1e-10:
        raise ValueError(
            f"initial history at s=0 ({g0}) is incompatible with the initial velocity ({scn.v0})"
        )
    return HistoryBuffer(scn.k.tau, scn.dt, scn.history, scn.sys.n, sample0=scn.v0)


def _rhs_factory(scn: Scenario):
    lam = scn.sys.lambdas
    D = scn.sys.damping
    G = scn.sys.delay_op
    k = scn.k
    grad = scn.nl.grad_psi
    n = scn.sys.n
    linear = isinstance(scn.nl, ZeroNonlinearity)

    def rhs(t, y, vd):
        u = y[:n]
        v = y[n:]
        acc = -lam * u - D @ v - float(k(t)) * (G @ vd)
        if not linear:
            acc = acc + grad(u)
        return np.concatenate([v, acc])

    return rhs


def step(scn: Scenario, state: State, history: HistoryBuffer, t: float, rhs=None) -> State:
    """Advance ``state`` from ``t`` to ``t + dt``; ``history`` must cover ``[t - tau, t]``."""
    if abs(history.t_head - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"history gap: buffer ends at {history.t_head}, step starts at {t}")
    rhs = rhs or _rhs_factory(scn)
    y = np.concatenate([state.u, state.v])
    y_new = rk4_delay_step(rhs, t, y, scn.dt, history.delayed_stages())
    n = scn.sys.n
    return State(y_new[:n], y_new[n:])


def simulate(scn: Scenario) -> TrajectoryRecord:
    """Integrate from 0 to ``t_end``, recording energy and norms at every step."""
    n = scn.sys.n
    G = scn.sys.delay_op
    history = initial_history(scn)
    rhs = _rhs_factory(scn)
    N = scn.n_steps
    times = np.arange(N + 1) * scn.dt
    us = np.zeros((N + 1, n))
    vs = np.zeros((N + 1, n))
    energy = np.zeros(N + 1)
    wn = np.zeros(N + 1)
    dfn = np.zeros(N + 1)
    hist = np.zeros(N + 1)
    psis = np.zeros(N + 1)
    status = "ok"

    y = np.concatenate([scn.u0, scn.v0])
    last = N
    for i in range(N + 1):
        t = times[i]
        u, v = y[:n], y[n:]
        terms = energy_terms(scn.sys, scn.nl, scn.k, u, v, history)
        us[i], vs[i] = u, v
        energy[i] = terms.energy
        psis[i] = terms.psi
        hist[i] = terms.history_integral
        wn[i] = math.sqrt(2.0 * (terms.kinetic + terms.elastic))
        dfn[i] = abs(float(scn.k(t))) * float(np.linalg.norm(G @ history.sample(0)))
        if not (math.isfinite(wn[i]) and wn[i] <= scn.ceiling):
            status = f"diverged at t={t:.17g}"
            last = i
            break
        if i == N:
            break
        y = rk4_delay_step(rhs, t, y, scn.dt, history.delayed_stages())
        history.push(y[n:])

    sl = slice(0, last + 1)
    return TrajectoryRecord(
        times=times[sl],
        u=us[sl],
        v=vs[sl],
        energy=energy[sl],
        w_norms=wn[sl],
        delayed_forcing_norms=dfn[sl],
        history_integrals=hist[sl],
        psi_values=psis[sl],
        lambdas=scn.sys.lambdas,
        status=status,
    )
