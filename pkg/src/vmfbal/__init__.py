"""Balance long-tailed embedding datasets on the unit hypersphere.

Estimate each class's latent distribution with a vMF kernel density,
sample synthetic embeddings until all classes match the largest one,
and fit a linear softmax head on the result.
"""
from .balance import (
    METHODS,
    BalancedSet,
    BalancePlan,
    balance,
    balance_gaussian_kde,
    balance_none,
    balance_random_oversample,
    balance_smote,
    balance_vmf_kde,
    compute_targets,
)
from .classifier import (
    EvalReport,
    LinearClassifier,
    TrainConfig,
    TrainingError,
    evaluate,
    group_map_from_counts,
    loss_and_grad,
    predict,
    predict_many,
    train_logreg,
)
from .data import (
    BadMagic,
    EmbeddingDataset,
    FormatError,
    InsufficientSamples,
    LabelOutOfRange,
    LongTailProfile,
    Truncated,
    VersionMismatch,
    ZeroVector,
    class_counts,
    longtail_counts,
    make_longtail_subset,
    normalize_all,
    read_embeddings,
    read_model,
    write_embeddings,
    write_model,
)
from .kde import (
    ClassKde,
    NoNeighbor,
    VmfComponent,
    build_class_kde,
    estimate_local_kappa,
    kde_log_density,
    kde_log_density_many,
    nearest_same_class,
    sample_kde,
)
from .rng import RngHandle
from .vmf import (
    KAPPA_MAX,
    VmfParams,
    check_unit,
    estimate_kappa_banerjee,
    log_bessel_i,
    log_norm_const,
    mean_cosine_expectation,
    mean_resultant_length,
    rotate_from_pole,
    sample_vmf,
    vmf_log_pdf,
)

__version__ = "0.1.0"
