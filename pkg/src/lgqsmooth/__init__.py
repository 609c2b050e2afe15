"""Simulation, filtering, retrofiltering, and smoothing of continuously
monitored linear Gaussian quantum systems."""

from .estimate import (
    EffectState,
    NumericalError,
    Trajectory,
    innovations,
    run_filter,
    run_ltl_filter,
    run_retrofilter,
)
from .ingest import (
    RawTrace,
    demodulate,
    inject_noise,
    normalize_shot_noise,
    segment,
)
from .metrics import (
    EnsembleStats,
    VacfResult,
    consistency_check,
    gaussian_hs_sq,
    hs_avg_theory,
    hs_avg_theory_classical,
    sev,
    std_delta_theory,
    vacf,
)
from .model import (
    EffectiveParams,
    GaussianState,
    PhysicalParams,
    SystemMatrices,
    effective_params,
    isotropic_state,
    retro_precision,
    system_matrices,
    unconditional_state,
    v_filter,
    v_filter_ss,
    v_retro,
    v_retro_ss,
    v_true,
    v_true_ss,
)
from .smooth import (
    TargetSpec,
    check_physicality,
    smooth_classical,
    smooth_general,
    z_factor,
)
from .simulate import (
    MeasurementRecord,
    TruthBundle,
    TruthEnsemble,
    SurrogateEnsemble,
    simulate_surrogate_ensemble,
    simulate_surrogate_record,
    simulate_true_and_record,
    simulate_truth_ensemble,
    synthesize_raw,
)

__version__ = "0.1.0"

__all__ = [
    "EffectState",
    "EffectiveParams",
    "EnsembleStats",
    "GaussianState",
    "MeasurementRecord",
    "NumericalError",
    "PhysicalParams",
    "RawTrace",
    "SurrogateEnsemble",
    "SystemMatrices",
    "TargetSpec",
    "Trajectory",
    "TruthBundle",
    "TruthEnsemble",
    "VacfResult",
    "__version__",
    "check_physicality",
    "consistency_check",
    "demodulate",
    "effective_params",
    "gaussian_hs_sq",
    "hs_avg_theory",
    "hs_avg_theory_classical",
    "inject_noise",
    "innovations",
    "isotropic_state",
    "normalize_shot_noise",
    "retro_precision",
    "run_filter",
    "run_ltl_filter",
    "run_retrofilter",
    "segment",
    "sev",
    "simulate_surrogate_ensemble",
    "simulate_surrogate_record",
    "simulate_true_and_record",
    "simulate_truth_ensemble",
    "smooth_classical",
    "smooth_general",
    "std_delta_theory",
    "synthesize_raw",
    "system_matrices",
    "unconditional_state",
    "v_filter",
    "v_filter_ss",
    "v_retro",
    "v_retro_ss",
    "v_true",
    "v_true_ss",
    "vacf",
    "z_factor",
]
