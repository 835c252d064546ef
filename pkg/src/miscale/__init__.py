"""Mutual-information scaling of spatial bipartitions."""

from .entangle import (
    BinnedDataset,
    EmpiricalState,
    SchmidtSpectrum,
    UniformBinner,
    bin_featurize,
    boundary_law_bound,
    build_empirical_state,
    discrete_kl,
    discrete_mi,
    entanglement_entropy,
    network_entanglement_bound,
    schmidt_spectrum,
    schmidt_values,
)
from .estimator import (
    LogisticMIEstimator,
    MiEstimate,
    MLPLogOddsClassifier,
    ScalingCurve,
    TrainConfig,
    direct_kl_estimate,
    dv_estimate,
    estimate_mi,
    make_marginal_samples,
    scaling_curve,
    train_classifier,
)
from .gmrf import (
    GaussianMIEstimator,
    GmrfModel,
    analytic_logit,
    analytic_mi,
    build_nearest_neighbor,
    build_random_sparse,
    build_uniform,
    check_diagonal_dominance,
    fit_gmrf,
    gaussian_entropy,
    mc_mi_oracle,
    precision_to_covariance,
    sample,
)
from .grid import Bipartition, GridShape, inner_square_partition, merge_sample, split_sample
from .linalg import cholesky, jacobi_eigvalsh, log_det

__version__ = "0.1.0"
