"""Nanbu particle simulation of the homogeneous Boltzmann equation with cutoff."""

__version__ = "0.1.0"

from .errors import CapacityError, ConfigError, DomainError, InputError, QuadratureError
from .kernel import (
    Family,
    KernelSpec,
    angular_mass,
    beta,
    cutoff_weight,
    deviation_angle,
    maxwell_weight,
    scaled_angle,
    tail_weight,
)
from .geometry import azimuth_vector, deviation, frame, jump, post_collision, tanaka_angles, truncated_jump
from .sim import (
    CollisionEvent,
    FromFile,
    Maxwellian,
    ParticleState,
    PointMass,
    SimConfig,
    Trajectory,
    TwoPoint,
    UniformBall,
    apply_event,
    diagnostics,
    next_event,
    run,
    run_coupled_cutoffs,
    run_replicas,
    sample_initial,
)
from .transport import (
    TransportResult,
    epsilon_N_estimate,
    slope_fit,
    sobolev_distance_sq,
    sobolev_expectation,
    w2_exact,
    w2_unequal,
)
