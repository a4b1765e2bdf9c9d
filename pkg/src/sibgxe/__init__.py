"""sibgxe: sibling-cohort simulation and within-family gene-by-environment
estimation.

The package provides synthetic multi-sibling cohorts with Mendelian
genotype transmission, polygenic-score discovery and construction, a
fixed-effect / cluster-robust / stacked-IV estimation engine, declarative
model specifications, within-family randomization inference, and a
configuration-driven pipeline with a command-line interface.
"""

from .cohort import (
    Cohort,
    DgpParams,
    Family,
    Individual,
    SnpPanel,
    StructuralParams,
    cohort_table,
    generate_cohort,
    genotype_matrix,
    transmit,
)
from .config import RunConfig, load_config
from .errors import InputError, NumericalError, SibgxeError
from .estimators import ClusterRobustOLS, StackedScoreIV, TwoStageLeastSquares
from .genoscore import (
    MeasurementModel,
    WeightSet,
    classify_relatedness,
    compute_pcs,
    inject_noisy_scores,
    residualize,
    run_scan,
    score,
    split_scan,
    standardize,
)
from .linreg import (
    DesignMatrix,
    FitResult,
    IvFitResult,
    absorb,
    cragg_donald,
    incremental_r2,
    ols,
    oriv,
    tsls,
)
from .modelspecs import (
    ModelSpec,
    build_design,
    fit_spec,
    isced_years,
    orthogonality_check,
)
from .pipeline import run_pipeline
from .ri import RiConfig, RiResult, permute_within_family, randomization_test
from .streams import substream

__version__ = "0.1.0"

__all__ = [
    "ClusterRobustOLS", "Cohort", "DesignMatrix", "DgpParams", "Family",
    "FitResult", "Individual", "InputError", "IvFitResult",
    "MeasurementModel", "ModelSpec", "NumericalError", "RiConfig",
    "RiResult", "RunConfig", "SibgxeError", "SnpPanel", "StackedScoreIV",
    "StructuralParams", "TwoStageLeastSquares", "WeightSet", "absorb",
    "build_design", "classify_relatedness", "cohort_table", "compute_pcs",
    "cragg_donald", "fit_spec", "generate_cohort", "genotype_matrix",
    "incremental_r2", "inject_noisy_scores", "isced_years", "load_config",
    "ols", "oriv", "orthogonality_check", "permute_within_family",
    "randomization_test", "residualize", "run_pipeline", "run_scan",
    "score", "split_scan", "standardize", "substream", "transmit", "tsls",
]
