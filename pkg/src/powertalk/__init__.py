"""Droop-controlled DC microgrids as communication channels.

Models the steady state of multibus droop-controlled grids, linearizes
the map from converter reference voltages to bus voltages and supplied
powers, allocates power-deviation budgets over signaling inputs, tunes
virtual resistances for one-way received SNR, and validates the whole
chain with slot-based Monte-Carlo transmission runs.
"""

from .budget import BudgetAllocation, allocate_input_variance, vr_power_investment
from .cases import CASE_STUDY_SIGMA_Z, case_study, case_study_document
from .channel import ChannelModel, linearize, power_coefficients, predict_outputs, single_bus_channel
from .comsim import (
    CHUNK_SLOTS,
    ComplianceRow,
    SimConfig,
    SimReport,
    chunk_bits,
    chunk_noise,
    measure_power_compliance,
    run_transmission,
)
from .errors import (
    BudgetExceededWarning,
    ConfigError,
    DisconnectedGraph,
    DuplicateLine,
    EmptySearchSpace,
    InfeasibleBudget,
    InputOnLoadBus,
    InvalidGridSpec,
    NoConverter,
    NonConvergence,
    NonpositiveResistance,
    NoRealRoot,
    NumericError,
    ParseError,
    PowerTalkError,
    SchemaError,
    SingularSystem,
    TopologyMismatch,
)
from .grid import (
    Bus,
    GridSpec,
    LineSpec,
    LoadSpec,
    ValidatedGrid,
    VscSpec,
    network_matrices,
    validate_grid,
)
from .optimizer import (
    ConcavityReport,
    OptimizationResult,
    SweepRow,
    capacity,
    capacity_sweep,
    concavity_probe,
    default_r_max,
    maximize_snr_grid,
    one_way_snr,
)
from .steady_state import (
    BatchSolve,
    DroopState,
    SteadyState,
    ViabilityViolation,
    check_viability,
    nominal_droop,
    solve_steady_state,
    solve_steady_state_many,
    two_source_closed_form,
    vsc_outputs,
)

__version__ = "0.1.0"

__all__ = [
    "BatchSolve",
    "BudgetAllocation",
    "BudgetExceededWarning",
    "CASE_STUDY_SIGMA_Z",
    "CHUNK_SLOTS",
    "Bus",
    "ChannelModel",
    "ComplianceRow",
    "ConcavityReport",
    "ConfigError",
    "DisconnectedGraph",
    "DroopState",
    "DuplicateLine",
    "EmptySearchSpace",
    "GridSpec",
    "InfeasibleBudget",
    "InputOnLoadBus",
    "InvalidGridSpec",
    "LineSpec",
    "LoadSpec",
    "NoConverter",
    "NonConvergence",
    "NonpositiveResistance",
    "NoRealRoot",
    "NumericError",
    "OptimizationResult",
    "ParseError",
    "PowerTalkError",
    "SchemaError",
    "SimConfig",
    "SimReport",
    "SingularSystem",
    "SteadyState",
    "SweepRow",
    "TopologyMismatch",
    "ValidatedGrid",
    "ViabilityViolation",
    "VscSpec",
    "allocate_input_variance",
    "capacity",
    "capacity_sweep",
    "case_study",
    "case_study_document",
    "check_viability",
    "chunk_bits",
    "chunk_noise",
    "concavity_probe",
    "default_r_max",
    "linearize",
    "maximize_snr_grid",
    "measure_power_compliance",
    "network_matrices",
    "nominal_droop",
    "one_way_snr",
    "power_coefficients",
    "predict_outputs",
    "run_transmission",
    "single_bus_channel",
    "solve_steady_state",
    "solve_steady_state_many",
    "two_source_closed_form",
    "validate_grid",
    "vr_power_investment",
    "vsc_outputs",
]
