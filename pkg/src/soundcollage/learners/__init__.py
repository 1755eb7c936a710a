from .forest import (
    ForestModel,
    Metrics,
    Tree,
    classification_metrics,
    cross_validate,
    forest_eval,
    forest_train,
    load_forest,
    save_forest,
    stratified_folds,
)
from .mlp import (
    DivergenceError,
    MlpModel,
    load_mlp,
    mlp_init,
    mlp_predict,
    mlp_train,
    predict_labels,
    predict_proba,
    save_mlp,
    with_standardization,
)
