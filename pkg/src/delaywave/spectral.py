"""Modal representation of the damped wave-type operators on (0, pi).

Everything lives in the sine basis ``phi_i(x) = sqrt(2/pi) sin(i x)``, which
diagonalises the stiffness operator.  Damping and delay feedback supported on
subintervals become Gram matrices of the indicator function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralSystem",
    "State",
    "gram_matrix",
    "wave_preset",
    "plate_preset",
    "custom_preset",
    "w_norm",
    "w_inner",
]

_SYM_TOL = 1e-12


def _check_interval(interval, name="interval"):
    try:
        lo, hi = (float(x) for x in interval)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a pair of numbers, got {interval!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(f"{name} endpoints must be finite, got ({lo}, {hi})")
    if lo < 0.0 or hi > math.pi or lo >= hi:
        raise ValueError(f"{name} must satisfy 0 <= lo < hi <= pi, got ({lo}, {hi})")
    return lo, hi


def gram_matrix(interval, n: int) -> np.ndarray:
    """Gram matrix of the sine basis restricted to ``interval``.

    Entry ``(i, j)`` is ``int_lo^hi (2/pi) sin(i x) sin(j x) dx`` evaluated in
    closed form (1-based mode numbers).
    """
    lo, hi = _check_interval(interval)
    if n < 1:
        raise ValueError(f"mode count must be positive, got {n}")
    idx = np.arange(1, n + 1, dtype=float)
    i = idx[:, None]
    j = idx[None, :]
    diff = i - j
    summ = i + j

    def sin_over(m, x):
        # sin(m x) / m with the m == 0 limit x
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(m == 0, x, np.sin(m * x) / np.where(m == 0, 1.0, m))
        return out

    prim_hi = sin_over(diff, hi) - sin_over(summ, hi)
    prim_lo = sin_over(diff, lo) - sin_over(summ, lo)
    g = (prim_hi - prim_lo) / math.pi
    return 0.5 * (g + g.T)


@dataclass(frozen=True, eq=False)
class SpectralSystem:
    """Truncated modal system: stiffness eigenvalues, damping and delay operators."""

    lambdas: np.ndarray
    damping: np.ndarray
    delay_op: np.ndarray
    b: float
    label: str = "custom"
    n: int = field(init=False)

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float).copy()
        damping = np.asarray(self.damping, dtype=float).copy()
        delay_op = np.asarray(self.delay_op, dtype=float).copy()
        if lambdas.ndim != 1 or lambdas.size < 1:
            raise ValueError("lambdas must be a non-empty vector")
        n = lambdas.size
        if not np.all(np.isfinite(lambdas)) or np.any(lambdas <= 0.0):
            raise ValueError("all eigenvalues must be finite and strictly positive")
        if np.any(np.diff(lambdas) < 0.0):
            raise ValueError("eigenvalues must be nondecreasing")
        for name, mat in (("damping", damping), ("delay_op", delay_op)):
            if mat.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} has non-finite entries")
            scale = max(1.0, float(np.max(np.abs(mat))))
            if np.max(np.abs(mat - mat.T)) > _SYM_TOL * scale:
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(mat).min() < -1e-10 * scale:
                raise ValueError(f"{name} is not positive semidefinite")
        b = float(self.b)
        if not math.isfinite(b) or b < 0.0:
            raise ValueError(f"b must be a nonnegative real, got {self.b}")
        delay_norm = float(np.linalg.norm(delay_op, 2))
        if delay_norm > b * b * (1.0 + 1e-10) + 1e-14:
            raise ValueError(
                f"b**2 = {b * b:g} is smaller than the delay operator norm {delay_norm:g}"
            )
        for arr in (lambdas, damping, delay_op):
            arr.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "damping", damping)
        object.__setattr__(self, "delay_op", delay_op)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", n)


@dataclass(frozen=True, eq=False)
class State:
    """Modal coefficients of displacement ``u`` and velocity ``v``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float, ndmin=1)
        v = np.array(self.v, dtype=float, ndmin=1)
        if u.shape != v.shape or u.ndim != 1:
            raise ValueError(f"u and v must be vectors of equal length, got {u.shape}, {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("state has non-finite entries")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, n: int) -> "State":
        return cls(np.zeros(n), np.zeros(n))


def _sine_preset(lambdas, n, a, damp_interval, delay_interval, label):
    if int(n) != n or n < 1:
        raise ValueError(f"mode count must be a positive integer, got {n}")
    n = int(n)
    if not (math.isfinite(a) and a > 0.0):
        raise ValueError(f"damping amplitude must be positive, got {a}")
    damp = _check_interval(damp_interval, "damp_interval")
    delay = _check_interval(delay_interval, "delay_interval")
    return SpectralSystem(
        lambdas=lambdas,
        damping=a * gram_matrix(damp, n),
        delay_op=gram_matrix(delay, n),
        b=1.0,
        label=label,
    )


def wave_preset(n: int, a: float, damp_interval, delay_interval) -> SpectralSystem:
    """Dirichlet wave equation on (0, pi): eigenvalues ``i**2``."""
    lambdas = np.arange(1, int(n) + 1, dtype=float) ** 2 if n >= 1 else np.zeros(0)
    return _sine_preset(lambdas, n, a, damp_interval, delay_interval, "wave")


def plate_preset(n: int, a: float, damp_interval, delay_interval) -> SpectralSystem:
    """Hinged 1-D plate on (0, pi): eigenvalues ``i**4``, same sine basis."""
    lambdas = np.arange(1, int(n) + 1, dtype=float) ** 4 if n >= 1 else np.zeros(0)
    return _sine_preset(lambdas, n, a, damp_interval, delay_interval, "plate")


def custom_preset(lambdas, a: float, damp_interval, delay_interval) -> SpectralSystem:
    """User-supplied eigenvalues with the sine-basis damping and delay operators."""
    lambdas = np.asarray(lambdas, dtype=float)
    return _sine_preset(lambdas, lambdas.size, a, damp_interval, delay_interval, "custom")


def _check_dims(sys: SpectralSystem, st: State):
    if st.u.size != sys.n:
        raise ValueError(f"state has {st.u.size} modes, system has {sys.n}")


def w_inner(sys: SpectralSystem, st: State, other: State) -> float:
    """Phase-space inner product ``<A^1/2 u, A^1/2 u~> + <v, v~>``."""
    _check_dims(sys, st)
    _check_dims(sys, other)
    return float(np.dot(sys.lambdas * st.u, other.u) + np.dot(st.v, other.v))


def w_norm(sys: SpectralSystem, st: State) -> float:
    """Phase-space norm ``sqrt(sum lambda_i u_i**2 + sum v_i**2)``."""
    _check_dims(sys, st)
    return math.sqrt(float(np.dot(sys.lambdas * st.u, st.u) + np.dot(st.v, st.v)))
