"""Power-law source term ``u |u|**beta`` and the bounds it must satisfy.

The potential is ``psi(u) = 1/(beta+2) int |u|**(beta+2) dx``.  Integrals run
on a composite Simpson grid over (0, pi); the modal gradient is the exact
derivative of that discrete potential, so finite differences of ``psi``
reproduce ``grad_psi`` to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .spectral import SpectralSystem

__all__ = ["PowerNonlinearity", "ZeroNonlinearity", "simpson_grid"]


def simpson_grid(size: int):
    """Nodes and composite Simpson weights on ``[0, pi]`` (``size`` odd, >= 3)."""
    if size < 3 or size % 2 == 0:
        raise ValueError(f"Simpson grid needs an odd node count >= 3, got {size}")
    x = np.linspace(0.0, math.pi, size)
    h = math.pi / (size - 1)
    w = np.full(size, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * (h / 3.0)


@dataclass(frozen=True)
class ZeroNonlinearity:
    """``psi = 0``: the linear model."""

    beta: float = 0.0
    c_h: float = 0.0

    def psi(self, u) -> float:
        return 0.0

    def grad_psi(self, u) -> np.ndarray:
        return np.zeros_like(np.asarray(u, dtype=float))

    def h_bound(self, r):
        return 0.0 * np.asarray(r, dtype=float) if np.ndim(r) else 0.0

    def lipschitz_L(self, r):
        return 0.0 * np.asarray(r, dtype=float) if np.ndim(r) else 0.0

    def h_inverse(self, y: float) -> float:
        # h never reaches a positive level
        return math.inf


@dataclass(frozen=True, eq=False)
class PowerNonlinearity:
    """Source ``u |u|**beta`` projected on the modal basis of ``sys``.

    When ``c_h`` is not given it is calibrated by sampling the ratio
    ``||grad psi(u)|| / ||A^1/2 u||**(beta+1)`` (scale invariant), polishing
    the best samples with a local optimiser and multiplying by ``safety``.
    """

    sys: SpectralSystem
    beta: float
    c_h: float | None = None
    grid_size: int | None = None
    n_calibration: int = 10_000
    safety: float = 1.2
    seed: int = 0
    sampled_ratio: float = field(init=False, default=math.nan)
    synthesis: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)
    quadrature_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        beta = float(self.beta)
        if not (math.isfinite(beta) and beta > 0.0):
            raise ValueError(f"beta must be a positive real, got {self.beta}")
        n = self.sys.n
        size = self.grid_size
        if size is None:
            size = max(4 * n, 128)
            size += 1 - size % 2
        elif size < 4 * n:
            raise ValueError(f"grid_size {size} is below the 4x oversampling floor {4 * n}")
        x, w = simpson_grid(size)
        modes = np.arange(1, n + 1)[:, None]
        synthesis = math.sqrt(2.0 / math.pi) * np.sin(modes * x[None, :])
        for arr in (x, w, synthesis):
            arr.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "grid_size", size)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "quadrature_weights", w)
        object.__setattr__(self, "synthesis", synthesis)
        if self.c_h is None:
            ratio = self._calibrate()
            object.__setattr__(self, "sampled_ratio", ratio)
            object.__setattr__(self, "c_h", self.safety * ratio)
        elif not (math.isfinite(self.c_h) and self.c_h > 0.0):
            raise ValueError(f"c_h must be positive, got {self.c_h}")

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.sys.n:
            raise ValueError(f"expected {self.sys.n} modal coefficients, got {u.shape[-1]}")
        return u

    def physical(self, u) -> np.ndarray:
        """Values of the modal field at the quadrature nodes."""
        return self._check(u) @ self.synthesis

    def psi(self, u):
        ux = self.physical(u)
        return (np.abs(ux) ** (self.beta + 2.0)) @ self.quadrature_weights / (self.beta + 2.0)

    def grad_psi(self, u) -> np.ndarray:
        ux = self.physical(u)
        g = np.abs(ux) ** self.beta * ux
        return (g * self.quadrature_weights) @ self.synthesis.T

    def h_bound(self, r):
        if np.any(np.asarray(r) < 0.0):
            raise ValueError("h is defined for nonnegative arguments")
        return self.c_h * np.power(r, self.beta)

    def lipschitz_L(self, r):
        if np.any(np.asarray(r) < 0.0):
            raise ValueError("L is defined for nonnegative arguments")
        return (self.beta + 1.0) * self.c_h * np.power(r, self.beta)

    def h_inverse(self, y: float) -> float:
        if y < 0.0:
            raise ValueError("h takes nonnegative values only")
        return (y / self.c_h) ** (1.0 / self.beta)

    def growth_ratio(self, u):
        """``||grad psi(u)|| / ||A^1/2 u||**(beta+1)`` (vectorised over rows)."""
        u = self._check(u)
        num = np.linalg.norm(self.grad_psi(u), axis=-1)
        den = np.sqrt(np.sum(self.sys.lambdas * u * u, axis=-1)) ** (self.beta + 1.0)
        return num / den

    def _calibrate(self) -> float:
        n = self.sys.n
        root_lam = np.sqrt(self.sys.lambdas)
        rng = np.random.default_rng(self.seed)
        z = rng.standard_normal((self.n_calibration, n))
        z = np.vstack([z, np.eye(n)])
        ratios = self.growth_ratio(z / root_lam)
        best = float(ratios.max())

        def neg(zz):
            nz = np.linalg.norm(zz)
            if nz == 0.0:
                return 0.0
            return -float(self.growth_ratio(zz / (nz * root_lam)))

        for idx in np.argsort(ratios)[-5:]:
            res = optimize.minimize(neg, z[idx], method="Nelder-Mead",
                                    options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 2000 * n})
            best = max(best, -float(res.fun))
        return best
