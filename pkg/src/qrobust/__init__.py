"""Robust quantum optimal control toolkit.

Pathway-resolved propagation of small driven quantum systems, asymptotic
moments of control objectives under field noise and Hamiltonian
uncertainty, first-order (PMP) optimality verification, and evolutionary
mean-variance optimization.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DecodingError,
    IntegrationError,
    QRobustError,
    ValidationError,
)
from .system import (
    Chromosome,
    ControlField,
    DipoleElement,
    FieldBounds,
    ModeAmplitude,
    ParameterDistribution,
    QuantumSystem,
    UncertainParameter,
    default_amplitude_noise,
    default_dipole_uncertainty,
    example_system,
    field_evaluate,
)
from .propagation import (
    DysonDecomposition,
    GateDistance,
    InterferenceTable,
    LandscapeScan,
    ObservableExpectation,
    PropagationResult,
    TimeGrid,
    TransitionProbability,
    dyson_terms,
    landscape_scan,
    objective_value,
    order_interference,
    propagate,
)
from .pathways import (
    EncodingScheme,
    HessianSpectrum,
    ParameterSensitivity,
    Pathway,
    PathwayTable,
    decode_pathways,
    encoded_propagate,
    hessian_rank_check,
    reconstruct_amplitude,
    significant_parameters,
)
from .moments import (
    InterferenceBreakdown,
    LeadingOrderReport,
    McEstimate,
    MomentSpec,
    RobustnessReport,
    asymptotic_moments,
    calibrate_samples,
    interference_breakdown,
    leading_order_moments,
    mc_estimate,
)
from .pmp import (
    CostateTrajectory,
    GradientTrace,
    costate_trajectory,
    expected_gradient,
    nominal_gradient,
    pmp_residual,
    terminal_gradient,
)
from .optimizers import (
    AcromuseResult,
    DiversityTrace,
    GAConfig,
    Individual,
    ParetoFront,
    ParetoPoint,
    TgaResult,
    acromuse_optimize,
    hpd,
    nsga2_optimize,
    seed_from_front,
    spd,
    tga_optimize,
)
