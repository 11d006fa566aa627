"""Beamforming optimization for reflecting-surface-aided downlinks under a
phase-dependent reflection amplitude, with a seeded Monte Carlo harness."""

from .channel import (
    BeamformingSolution,
    ChannelSet,
    Status,
    SystemGeometry,
    all_sinr,
    composite_matrix,
    effective_channel,
    effective_rows,
    generate_channels,
    path_loss,
    sinr,
    trial_rng,
)
from .numerics import (
    BracketError,
    FixedPointError,
    Interval,
    SolverTolerances,
    TraceEntry,
    bisect_root,
    fixed_point,
    quad_fit_extremum,
)
from .phase_model import (
    CircuitElement,
    PhaseShiftModel,
    ReflectionState,
    SingularCircuitError,
    circuit_impedance,
    circuit_reflection,
    sample_circuit_curve,
    wrap_phase,
)
from .single_user import (
    ElementSubproblem,
    PenaltySchedule,
    PhaseSolution,
    ZeroChannelError,
    ao_solve,
    cccp_v_update,
    channel_gain,
    discrete_phase_search,
    element_subproblem,
    ideal_alignment_phases,
    match_phase_update,
    mrt_beamformer,
    penalty_solve,
    random_phase_init,
    required_power,
    trust_region_p2,
    trust_region_p34,
)
from .multi_user import (
    AuxiliarySignals,
    MultiuserPenaltyState,
    PrecoderInfeasibleError,
    ZeroSignalError,
    extended_penalty_solve,
    mmse_precoder,
    no_irs_baseline,
    theta_update,
    two_stage_solve,
    v_update,
    w_update,
    weighted_gain_solve,
    x_update,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
