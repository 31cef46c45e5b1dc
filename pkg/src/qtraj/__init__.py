"""Reduced quantum trajectories for decoherent two-slit interference."""

from .decoherence import (
    DecoherenceModel,
    SlitLabel,
    alpha_magnitude,
    classical_density,
    coherence_degree,
    reduced_density_diagonal,
    screening_coefficients,
)
from .dynamics import IntegratorSettings, Trajectory, crossing_count, integrate_trajectory, run_ensemble
from .errors import ConfigError, EnsembleFailure, NodeProximity, NoFringes, QTrajError, StepUnderflow
from .velocity_field import FieldContext, reduced_current, reduced_velocity
from .wavepacket import GaussianPacket, evaluate_wave, single_wave_velocity, wave_gradient

__version__ = "0.1.0"
