"""Known / unknown / uncertain domain division for open-set and generalized
zero-shot recognition."""

__version__ = "0.1.0"

from .boundary import (
    BootstrapConfig,
    ClassBoundary,
    KsResult,
    ShrinkConfig,
    bootstrap_threshold,
    ecdf,
    ks_critical_value,
    ks_two_sample,
    openness,
    shrink_boundary,
    wsvm_delta,
)
from .data import (
    ClassSplit,
    Dataset,
    PrototypeTable,
    SyntheticConfig,
    generate_synthetic,
    load_dataset,
    load_prototypes,
    write_dataset,
    write_prototypes,
)
from .division import (
    Domain,
    DomainDecision,
    GeneratedPrototypes,
    divide,
    generate_osl_prototypes,
)
from .embedding import (
    NOVEL,
    EmbeddingModel,
    compute_feature_prototypes,
    fit_embedding,
    recognize,
    recognize_osl,
)
from .evt import (
    EvtModel,
    WeibullParams,
    fit_evt,
    reverse_weibull_cdf,
    weibull_cdf,
    wsvm_statistic,
)
from .metrics import GzslReport, OslReport, evaluate_gzsl, evaluate_osl, harmonic_mean
from .pipeline import (
    ExperimentConfig,
    TrainedModel,
    fit_model,
    run_ablation_suite,
    run_experiment,
)
from .scorer import ScorerConfig, ScorerModel, argmax_score, score, train_scorers

__all__ = [
    "NOVEL",
    "BootstrapConfig",
    "ClassBoundary",
    "ClassSplit",
    "Dataset",
    "Domain",
    "DomainDecision",
    "EmbeddingModel",
    "EvtModel",
    "ExperimentConfig",
    "GeneratedPrototypes",
    "GzslReport",
    "KsResult",
    "OslReport",
    "PrototypeTable",
    "ScorerConfig",
    "ScorerModel",
    "ShrinkConfig",
    "SyntheticConfig",
    "TrainedModel",
    "WeibullParams",
    "__version__",
    "argmax_score",
    "bootstrap_threshold",
    "compute_feature_prototypes",
    "divide",
    "ecdf",
    "evaluate_gzsl",
    "evaluate_osl",
    "fit_embedding",
    "fit_evt",
    "fit_model",
    "generate_osl_prototypes",
    "generate_synthetic",
    "harmonic_mean",
    "ks_critical_value",
    "ks_two_sample",
    "load_dataset",
    "load_prototypes",
    "openness",
    "recognize",
    "recognize_osl",
    "reverse_weibull_cdf",
    "run_ablation_suite",
    "run_experiment",
    "score",
    "shrink_boundary",
    "train_scorers",
    "weibull_cdf",
    "write_dataset",
    "write_prototypes",
    "wsvm_delta",
    "wsvm_statistic",
]
