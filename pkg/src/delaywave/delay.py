"""Piecewise-linear delay feedback coefficient ``k(t)``.

``k`` is linear between breakpoints and constant after the last one.  The
absolute value ``|k|`` is integrated exactly: pieces are split at their zero
crossings so that ``|k|`` is linear on every refined piece.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DelayCoefficient",
    "AdmissibilityFit",
    "abs_integral",
    "window_bound_K",
    "shifted_cumulative",
    "fit_gamma_omega",
]


@dataclass(frozen=True, eq=False)
class DelayCoefficient:
    breakpoints: np.ndarray
    values: np.ndarray
    tau: float
    _knots: np.ndarray = field(init=False, repr=False)
    _knot_vals: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)
    _pieces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = np.array(self.breakpoints, dtype=float, ndmin=1)
        y = np.array(self.values, dtype=float, ndmin=1)
        if t.ndim != 1 or t.size < 1 or t.shape != y.shape:
            raise ValueError("breakpoints and values must be non-empty vectors of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("breakpoints and values must be finite")
        if t[0] != 0.0:
            raise ValueError(f"first breakpoint must be 0, got {t[0]}")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        tau = float(self.tau)
        if not (math.isfinite(tau) and tau > 0.0):
            raise ValueError(f"tau must be a positive real, got {self.tau}")

        knots = [t[0]]
        kv = [y[0]]
        for i in range(t.size - 1):
            y0, y1 = y[i], y[i + 1]
            if y0 * y1 < 0.0:
                xc = t[i] + (t[i + 1] - t[i]) * (y0 / (y0 - y1))
                if t[i] < xc < t[i + 1]:
                    knots.append(xc)
                    kv.append(0.0)
            knots.append(t[i + 1])
            kv.append(y1)
        knots = np.asarray(knots)
        kv = np.asarray(kv)
        pieces = 0.5 * (np.abs(kv[:-1]) + np.abs(kv[1:])) * np.diff(knots)
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        pieces = np.append(pieces, 0.0)
        for arr in (t, y, knots, kv, cum, pieces):
            arr.setflags(write=False)
        object.__setattr__(self, "breakpoints", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_knot_vals", kv)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_pieces", pieces)

    @classmethod
    def constant(cls, c: float, tau: float) -> "DelayCoefficient":
        return cls([0.0], [float(c)], tau)

    @classmethod
    def from_csv(cls, path, tau: float) -> "DelayCoefficient":
        """Load a two-column ``time,value`` table; a header row is optional."""
        path = Path(path)
        times, vals = [], []
        with path.open(newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
                try:
                    tv, kv = float(row[0]), float(row[1])
                except ValueError:
                    if lineno == 1 and not times:
                        continue  # header
                    raise ValueError(f"{path}:{lineno}: non-numeric entry {row!r}") from None
                if times and tv <= times[-1]:
                    raise ValueError(
                        f"{path}:{lineno}: times must be strictly increasing ({tv} after {times[-1]})"
                    )
                times.append(tv)
                vals.append(kv)
        if not times:
            raise ValueError(f"{path}: no data rows")
        return cls(times, vals, tau)

    def scaled(self, s: float) -> "DelayCoefficient":
        return DelayCoefficient(self.breakpoints, s * self.values, self.tau)

    @property
    def tail_value(self) -> float:
        """Value of ``k`` on ``[t_m, inf)``."""
        return float(self.values[-1])

    @property
    def kinks(self) -> np.ndarray:
        """Breakpoints together with the zero crossings of ``k``."""
        return self._knots

    def __call__(self, t):
        return np.interp(t, self.breakpoints, self.values)

    def antiderivative(self, t):
        """``int_0^t |k(s)| ds`` for ``t >= 0`` (vectorised)."""
        t = np.asarray(t, dtype=float)
        x, y, cum = self._knots, self._knot_vals, self._cum
        last = x.size - 1
        i = np.clip(np.searchsorted(x, t, side="right") - 1, 0, max(last - 1, 0))
        out = np.empty_like(t)
        tail = t >= x[last]
        out[tail] = cum[last] + abs(y[last]) * (t[tail] - x[last])
        if last > 0:
            inner = ~tail
            ii = i[inner]
            s = t[inner] - x[ii]
            slope = (y[ii + 1] - y[ii]) / (x[ii + 1] - x[ii])
            out[inner] = cum[ii] + np.abs(y[ii] * s + 0.5 * slope * s * s)
        return out if out.ndim else float(out)


def _interval(k: DelayCoefficient, a, width):
    """``int_a^{a+width} |k|`` assembled piece by piece.

    Differencing the global antiderivative loses relative accuracy when the
    interval is short compared with its left end, so the partial pieces at
    both ends are integrated directly from ``width`` and whole pieces are
    summed without differencing.  ``|k|`` is linear on
    every piece, so the trapezoid rule is exact there.
    """
    a, w = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(width, dtype=float))
    x, y = k._knots, k._knot_vals
    last = x.size - 1
    slopes = np.append(np.diff(y) / np.diff(x), 0.0)
    b = a + w
    ia = np.clip(np.searchsorted(x, a, side="right") - 1, 0, last)
    ib = np.clip(np.searchsorted(x, b, side="right") - 1, 0, last)
    ib = np.maximum(ib, ia)
    ka = y[ia] + slopes[ia] * (a - x[ia])
    out = np.empty(a.shape)
    same = ib == ia
    kb = ka[same] + slopes[ia[same]] * w[same]
    out[same] = 0.5 * w[same] * (np.abs(ka[same]) + np.abs(kb))
    d = ~same
    if np.any(d):
        ja, jb = ia[d], ib[d]
        head_w = x[ja + 1] - a[d]
        head = 0.5 * head_w * (np.abs(ka[d]) + np.abs(y[ja + 1]))
        tail_w = b[d] - x[jb]
        tail = 0.5 * tail_w * (np.abs(y[jb]) + np.abs(y[jb] + slopes[jb] * tail_w))
        # full pieces are summed directly; prefix-sum differences would cancel
        idx = np.empty(2 * ja.size, dtype=np.intp)
        idx[0::2], idx[1::2] = ja + 1, jb
        middle = np.where(jb > ja + 1, np.add.reduceat(k._pieces, idx)[0::2], 0.0)
        out[d] = head + middle + tail
    return out if out.ndim else float(out)


def abs_integral(k: DelayCoefficient, a, b):
    """Exact ``int_a^b |k(s)| ds``."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(a_arr < 0.0):
        raise ValueError("integration bounds must be nonnegative")
    if np.any(a_arr > b_arr):
        raise ValueError(f"lower bound exceeds upper bound ({a} > {b})")
    return _interval(k, a_arr, b_arr - a_arr)


def shifted_cumulative(k: DelayCoefficient, t):
    """``int_0^t |k(s + tau)| ds``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("t must be nonnegative")
    return _interval(k, k.tau, t)


def _window(k: DelayCoefficient, t):
    t = np.asarray(t, dtype=float)
    return _interval(k, t - k.tau, np.full_like(t, k.tau))


def window_bound_K(k: DelayCoefficient, horizon: float, n_grid: int = 2048) -> float:
    """Largest ``int_{t-tau}^t |k|`` over ``t`` in ``[tau, horizon]``.

    The window integral is piecewise quadratic in ``t`` with kinks where
    ``t`` or ``t - tau`` crosses a kink of ``k``; its maximum is attained at a
    kink or at a root of ``|k(t)| - |k(t - tau)|`` inside a piece, so those
    candidates are evaluated alongside a uniform grid.
    """
    tau = k.tau
    if horizon < tau:
        raise ValueError(f"horizon {horizon} is shorter than the delay {tau}")
    x = k.kinks
    cand = np.concatenate([x, x + tau, [tau, horizon]])
    cand = np.unique(cand[(cand >= tau) & (cand <= horizon)])
    roots = []
    if cand.size > 1:
        p, q = cand[:-1], cand[1:]
        t1 = p + 0.25 * (q - p)
        t2 = p + 0.75 * (q - p)
        g1 = np.abs(k(t1)) - np.abs(k(t1 - tau))
        g2 = np.abs(k(t2)) - np.abs(k(t2 - tau))
        with np.errstate(divide="ignore", invalid="ignore"):
            r = t1 - g1 * (t2 - t1) / (g2 - g1)
        ok = np.isfinite(r) & (r > p) & (r < q)
        roots = r[ok]
    grid = np.linspace(tau, horizon, n_grid)
    pts = np.concatenate([cand, roots, grid])
    return float(np.max(_window(k, pts)))


def _stationary_times(k: DelayCoefficient, weight: float, slopes) -> np.ndarray:
    """Times ``t >= 0`` with ``weight * |k(t + tau)| == slope``, one column per linear piece.

    These are the interior extrema of ``weight * int_0^t |k(s+tau)| ds - slope * t``;
    entries without a crossing are NaN.
    """
    x = k.kinks
    a = np.abs(k._knot_vals)
    if x.size < 2 or weight == 0.0:
        return np.empty((len(slopes), 0))
    level = np.asarray(slopes, dtype=float)[:, None] / weight
    a0, a1 = a[:-1][None, :], a[1:][None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = (level - a0) / (a1 - a0)
    t = x[:-1][None, :] + theta * np.diff(x)[None, :] - k.tau
    ok = (theta > 0.0) & (theta < 1.0) & (t >= 0.0)
    return np.where(ok, t, np.nan)


def _nan_shifted(k, t):
    out = np.full(t.shape, np.nan)
    ok = np.isfinite(t)
    out[ok] = shifted_cumulative(k, t[ok])
    return out


@dataclass(frozen=True)
class AdmissibilityFit:
    """Affine majorant ``gamma + omega' t`` of the weighted cumulative delay mass."""

    gamma: float
    omega_prime: float
    achieved_margin: float
    feasible: bool
    status: str
    tail_slope: float
    horizon: float
    frontier_omega_prime: np.ndarray
    frontier_gamma: np.ndarray


def fit_gamma_omega(
    k: DelayCoefficient,
    M: float,
    omega: float,
    b: float,
    tau: float | None = None,
    horizon: float | None = None,
    omega_grid_size: int = 512,
    n_samples: int = 2048,
    slope_slack: float = 0.0,
) -> AdmissibilityFit:
    """Fit ``(gamma, omega')`` with ``M b^2 e^{omega tau} int_0^t |k(s+tau)| ds <= gamma + omega' t``.

    Because ``k`` is constant after its last breakpoint, the left-hand side is
    eventually affine with slope ``M b^2 e^{omega tau} |k_tail|``; any
    admissible ``omega'`` must dominate that slope.  Among admissible slopes
    the smallest one (fastest decay) is selected.  The left-hand side is
    piecewise quadratic, so ``gamma`` is the excess maximised over a uniform
    grid, every kink, and every interior stationary point; the inequality
    then holds for all ``t >= 0``, not only on the horizon.
    """
    if tau is not None and not math.isclose(tau, k.tau, rel_tol=1e-12):
        raise ValueError(f"tau {tau} does not match the coefficient's delay {k.tau}")
    tau = k.tau
    if M < 1.0:
        raise ValueError(f"M must be >= 1, got {M}")
    if omega <= 0.0:
        raise ValueError(f"omega must be positive, got {omega}")
    if horizon is None:
        horizon = max(10.0 * tau, float(k.breakpoints[-1]) + 2.0 * tau)
    if horizon < tau:
        raise ValueError(f"horizon {horizon} is shorter than the delay {tau}")

    weight = M * b * b * math.exp(omega * tau)
    tail_slope = weight * abs(k.tail_value)
    kinks = k.kinks
    shifted = np.concatenate([kinks - tau, kinks + tau, kinks])
    samples = np.concatenate([np.linspace(0.0, horizon, n_samples), shifted[shifted >= 0.0]])
    samples = np.unique(samples)
    lhs = weight * shifted_cumulative(k, samples)

    lo = tail_slope + slope_slack
    if lo >= omega:
        return AdmissibilityFit(
            gamma=math.inf,
            omega_prime=math.nan,
            achieved_margin=-math.inf,
            feasible=False,
            status=(
                f"infeasible: asymptotic slope {tail_slope:.6g} of the weighted delay mass "
                f"is not below omega = {omega:.6g}"
            ),
            tail_slope=tail_slope,
            horizon=float(horizon),
            frontier_omega_prime=np.empty(0),
            frontier_gamma=np.empty(0),
        )

    wp = np.linspace(lo, omega, omega_grid_size, endpoint=False)
    excess = lhs[None, :] - wp[:, None] * samples[None, :]
    gammas = np.maximum(excess.max(axis=1), 0.0)
    stat = _stationary_times(k, weight, wp)
    if stat.size:
        stat_excess = weight * _nan_shifted(k, stat) - wp[:, None] * stat
        gammas = np.maximum(gammas, np.nanmax(stat_excess, axis=1, initial=0.0))

    omega_prime = float(wp[0])
    gamma = float(gammas[0])
    if stat.size:
        extra = stat[0][np.isfinite(stat[0])]
        samples = np.unique(np.concatenate([samples, extra]))
        lhs = weight * shifted_cumulative(k, samples)
    margin = float(np.min(gamma + omega_prime * samples - lhs))
    while margin < 0.0:
        # rounding in the max/min pair can leave a sub-ulp deficit
        gamma = float(np.nextafter(gamma - margin, math.inf))
        margin = float(np.min(gamma + omega_prime * samples - lhs))
    return AdmissibilityFit(
        gamma=gamma,
        omega_prime=omega_prime,
        achieved_margin=margin,
        feasible=True,
        status="feasible",
        tail_slope=tail_slope,
        horizon=float(horizon),
        frontier_omega_prime=wp,
        frontier_gamma=gammas,
    )
