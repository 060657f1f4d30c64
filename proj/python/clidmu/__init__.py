"""Cross-layer information divergence (CLID) and bilevel sample reweighting for noisy labels.

Thin bindings over the C++ core. Arrays are float64 numpy arrays, labels are
lists of ints.
"""

from ._clidmu import (
    Classifier,
    DataError,
    Dataset,
    NumericError,
    TrainConfig,
    TrainingResult,
    __version__,
    accuracy,
    class_prob_graph,
    clid_loss,
    embedding_graph,
    exponential_bound,
    generate_blobs,
    inject_noise,
    pearson,
    read_csv,
    row_normalize,
    run_training,
    select_meta_set,
    select_pseudo_clean_gmm,
    truncated_normal_mean,
    write_csv,
)

__all__ = [
    "Classifier",
    "DataError",
    "Dataset",
    "NumericError",
    "TrainConfig",
    "TrainingResult",
    "accuracy",
    "class_prob_graph",
    "clid_loss",
    "embedding_graph",
    "exponential_bound",
    "generate_blobs",
    "inject_noise",
    "pearson",
    "read_csv",
    "row_normalize",
    "run_training",
    "select_meta_set",
    "select_pseudo_clean_gmm",
    "truncated_normal_mean",
    "write_csv",
]
