"""Positive-unlabeled learning with augmented classes.

Three training bags -- labeled positives, an unlabeled positive/negative
mixture, and a bag that also contains a class never seen as labeled data --
are turned into an unbiased estimate of the fully supervised three-class
risk, which small scorers are trained to minimize.
"""

__version__ = "0.1.0"

from .datagen import GaussianClassSpec, GenConfig, load_csv, sample_puac, save_csv, standard_benchmark
from .evaluation import ExperimentGrid, Metrics, bayes_accuracy, bayes_predict, evaluate, run_experiment
from .models import Scorer, init_scorer, load_scorer, predict, save_scorer
from .prior_estimation import estimate_puac_priors
from .risk import RewriteCoefficients, empirical_puac_risk, rewrite_coefficients, supervised_risk
from .training import TrainReport, train
from .types import (
    AggregatedPriors,
    ClassLabel,
    LabeledSet,
    PriorMatrix,
    PuacDataset,
    RunConfig,
    SourceBag,
    aggregate_priors,
    validate_priors,
)

__all__ = [
    "AggregatedPriors",
    "ClassLabel",
    "ExperimentGrid",
    "GaussianClassSpec",
    "GenConfig",
    "LabeledSet",
    "Metrics",
    "PriorMatrix",
    "PuacDataset",
    "RewriteCoefficients",
    "RunConfig",
    "Scorer",
    "SourceBag",
    "TrainReport",
    "aggregate_priors",
    "bayes_accuracy",
    "bayes_predict",
    "empirical_puac_risk",
    "estimate_puac_priors",
    "evaluate",
    "init_scorer",
    "load_csv",
    "load_scorer",
    "predict",
    "rewrite_coefficients",
    "run_experiment",
    "sample_puac",
    "save_csv",
    "save_scorer",
    "standard_benchmark",
    "supervised_risk",
    "train",
    "validate_priors",
]
