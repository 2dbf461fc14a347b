"""Tree ensembles for insurance claim severity."""

from .dataset import (
    Dataset,
    claims_size,
    filter_positive_claims,
    load_csv,
    log_transform_response,
    read_csv,
    split_by_year,
    write_csv,
)
from .ensembles import (
    BoostConfig,
    EnsembleModel,
    fit_bagging,
    fit_gradient_boosting,
    fit_random_forest,
    fit_single_tree,
    load_model,
    oob_error,
    oob_predictions,
    predict,
    save_model,
)
from .errors import ClaimTreesError
from .evaluation import compare_models, fit_ols, mse, summary_stats
from .interpretation import (
    oob_permutation_importance,
    partial_dependence,
    partial_dependence_2way,
    permutation_importance,
)
from .schema import FeatureSpec, Schema, insurance_schema
from .synthetic import GeneratorConfig, generate_synthetic
from .tree import RegressionTree, TreeConfig, best_split, fit_tree, predict_tree

__version__ = "0.1.0"
