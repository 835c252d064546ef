"""Classifier-based mutual-information estimation."""

from .estimate import (
    CURVE_HEADER,
    CurveTable,
    LogisticMIEstimator,
    MiEstimate,
    ScalingCurve,
    estimate_mi,
    read_curve_csv,
    scaling_curve,
    write_curve_csv,
)
from .mlp import Adam, MLPLogOddsClassifier, bce_with_logits
from .readout import (
    ClassifierLogOdds,
    TrainConfig,
    direct_kl_estimate,
    dv_estimate,
    log_odds,
    make_marginal_samples,
    train_classifier,
)

__all__ = [
    "Adam",
    "CURVE_HEADER",
    "ClassifierLogOdds",
    "CurveTable",
    "LogisticMIEstimator",
    "MLPLogOddsClassifier",
    "MiEstimate",
    "ScalingCurve",
    "TrainConfig",
    "bce_with_logits",
    "direct_kl_estimate",
    "dv_estimate",
    "estimate_mi",
    "log_odds",
    "make_marginal_samples",
    "read_curve_csv",
    "scaling_curve",
    "train_classifier",
    "write_curve_csv",
]
