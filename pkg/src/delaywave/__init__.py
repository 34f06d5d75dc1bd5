"""Spectral-Galerkin simulation and decay certificates for delayed damped wave equations."""

from .delay import (
    AdmissibilityFit,
    DelayCoefficient,
    abs_integral,
    fit_gamma_omega,
    shifted_cumulative,
    window_bound_K,
)
from .energy import (
    StabilityCertificate,
    cbar,
    check_energy_growth,
    check_lower_bound,
    decay_envelope,
    energy,
    energy_rate,
    smallness_program,
)
from .integrator import (
    ConstantHistory,
    HistoryBuffer,
    Scenario,
    SinusoidHistory,
    TrajectoryRecord,
    ZeroHistory,
    initial_history,
    simulate,
    step,
)
from .nonlinearity import PowerNonlinearity, ZeroNonlinearity
from .semigroup import NoExponentialDecay, assemble_generator, estimate_decay
from .spectral import SpectralSystem, State, gram_matrix, plate_preset, w_norm, wave_preset

__version__ = "0.1.0"
