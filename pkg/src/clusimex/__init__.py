"""Misclassification-corrected regression on unsupervised cluster labels.

Workflow: fit a clustering model (`mixture`), estimate the label
confusion it induces (`misclass`), fit the naive outcome model
(`regress`), and correct it by simulation and extrapolation (`mcsimex`).
`simbench` runs replicated simulation studies; `cli` wraps everything
into a command line.
"""

from .mixture import (
    EmConfig,
    GmmFit,
    GmmParams,
    KmeansConfig,
    KmeansFit,
    LabeledSample,
    align_labels,
    apply_alignment,
    classify_gmm,
    classify_kmeans,
    fit_gmm,
    fit_kmeans,
    gmm_loglik,
    label_points_gmm,
    label_points_kmeans,
    permute_components,
    sample_gmm,
)
from .misclass import (
    MisclassMatrix,
    PowerExistenceError,
    PowerValidity,
    check_power_validity,
    estimate_misclass_mc,
    estimate_misclass_oob,
    load_misclass_csv,
    matrix_power,
    save_misclass_csv,
)
from .regress import (
    MonotoneLikelihoodError,
    Outcome,
    RegressionFit,
    SeparationError,
    cox_partial_loglik,
    design_matrix,
    fit_cox,
    fit_logistic,
    logistic_loglik,
)
from .mcsimex import (
    BootstrapResult,
    SimexConfig,
    SimexFit,
    bootstrap_simex,
    extrapolate,
    fit_extrapolant,
    jackknife_variance,
    run_mcsimex,
    simulate_labels,
)
from .simbench import (
    CoxScenario,
    LogisticScenario,
    MetricsTable,
    gen_cox_dataset,
    gen_logistic_dataset,
    parse_scenario_config,
    run_replications,
)

__version__ = "0.1.0"
