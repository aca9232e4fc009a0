"""Random-forest proximities (RF-GAP) and the uncertainty estimates built on them."""

from .classification import (
    TrustReport,
    conformity_scores,
    ecr_scores,
    misclassification_vector,
    proba_diff,
    tree_conformity,
)
from .evaluation import (
    AccuracyRejectionCurve,
    BISInput,
    accuracy_rejection_curve,
    ar_auc,
    bis,
    coverage,
    mean_width,
)
from .forest import (
    Dataset,
    Forest,
    ForestConfig,
    load_forest,
    oob_predict,
    predict,
    predict_proba,
    save_forest,
    train_forest,
)
from .io import DataError, load_csv, standardize_response
from .proximity import ProximityMatrix, reconstruct_predictions, rf_gap_test, rf_gap_train
from .regression import (
    IntervalReport,
    PredictionInterval,
    fire_interval,
    fire_intervals,
    global_oob_intervals,
    oob_residuals,
    qrf_intervals,
    weighted_error_bands,
)

__version__ = "0.1.0"
