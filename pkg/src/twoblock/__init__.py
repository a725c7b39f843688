"""Two-block simultaneous dimension reduction, dense, sparse and robust."""

from .core import (
    DeflationError,
    ModelHyperparams,
    TwoblockModel,
    coefficients_from_weights,
    fit_twoblock,
    leading_left_singular_vector,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    soft_threshold,
)
from .evaluate import (
    CvEntry,
    MethodSpec,
    ScenarioResult,
    cross_validate,
    default_methods,
    run_scenario_grid,
    scenario_results_to_csv,
)
from .preprocess import (
    ConvergenceError,
    PreprocessParams,
    ZeroScaleError,
    apply_preprocess,
    column_location,
    column_mad,
    fit_preprocess,
    invert_preprocess,
    l1_median,
    tau2_scale,
)
from .rtb import (
    DegenerateWeightsError,
    RtbConfig,
    RtbFit,
    default_rtb_config,
    export_weights_csv,
    fit_rtb,
    load_fit,
    reweight_rows,
    save_fit,
    unweight_scores,
)
from .simulate import (
    SimulationConfig,
    contaminate,
    f1_selection,
    generate_latent_data,
    generate_latent_parts,
    mse_coefficients,
)
from .weighting import (
    AGGRESSIVE_PROBS,
    CUTOFF_PRESETS,
    STANDARD_PROBS,
    WeightFunctionSpec,
    chi_cutoffs,
    distance_weights,
    hampel_psi,
    resolve_cutoffs,
    score_distances,
    starting_weights,
    weight_function,
)

__version__ = "0.1.0"
