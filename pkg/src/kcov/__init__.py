"""Kernelized covariance descriptors and the SPD recognition pipeline.

The library generalizes the sampling covariance of a multivariate time
series through dot-product kernels evaluated against canonical-basis
probes, keeps the result on the SPD manifold via regularized matrix
logarithms, classifies trials with a log-Euclidean kernel SVM, and ships
a random-feature Monte-Carlo validator for the underlying kernel identity.
"""

from .covariance import (
    CenteringMatrix,
    ExpDotKernel,
    Kernel,
    LinearKernel,
    PolynomialKernel,
    SpdDescriptor,
    TrialMatrix,
    centering_apply,
    classical_covariance,
    gram_probe_matrix,
    kernel_by_name,
    kernel_eval,
    kernelized_covariance,
    load_descriptors,
    regularize_and_log,
    save_descriptors,
)
from .datasets import (
    DatasetProfile,
    SplitRule,
    TrialIndex,
    apply_split,
    build_trial_index,
    load_canonical,
    load_msr3d,
    load_profile,
    write_canonical,
)
from .features import (
    FeatureConfig,
    SkeletonTrial,
    assemble_trial_matrix,
    clean_missing,
    normalize,
)
from .linalg import (
    EigenDecomposition,
    eig_sym,
    expm_sym,
    frobenius_distance,
    logm_spd,
    symmetrize,
)
from .random_features import (
    EstimatorReport,
    RandomFeatureMap,
    apply_map,
    estimate_kernel,
    rademacher_moment_check,
    replicate_seed,
    sample_map,
)
from .svm import (
    CvReport,
    GramMatrix,
    PipelineProvenance,
    SvmModel,
    cross_validate,
    gram_rows_between,
    load_model,
    log_euclidean_gram,
    log_linear_gram,
    make_subject_folds,
    save_model,
    svm_predict,
    svm_train,
)

__version__ = "0.1.0"
