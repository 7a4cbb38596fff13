"""Performance prediction, scale projection, and acquisition optimization
for mixtures of partially revealed data sources."""

from .dataspace import (
    Bernoulli,
    DataSource,
    Dataset,
    MixingRatio,
    MixtureSpec,
    Permutation,
    apportion,
    compose,
    corrupt_labels,
    read_dataset_csv,
    sample_pilot,
    strip_labels,
    write_dataset_csv,
)
from .errors import OtmixError
from .learners import (
    EvalResult,
    LearnerSpec,
    LogisticRegression,
    NearestCentroid,
    SyntheticLogLinear,
    replicate_accuracy,
    scale_model_from_synthetic,
    synthetic_pre_clamp,
    train_eval,
)
from .predictors import (
    Kind,
    PredictorModel,
    TrainingTuple,
    fit_baseline,
    fit_cs,
    fit_pq,
    fit_value_based,
    load_model,
    loo_values,
    model_from_json,
    model_to_json,
    predict,
    predict_performance,
    save_model,
    selection_ratio_from_values,
    shapley_values,
)
from .projection import (
    ProjectionQuery,
    ScalePair,
    auto_scales,
    project,
    project_query,
    scaling_exponent,
)
from .selection import (
    BudgetSearchConfig,
    Constant,
    OptimizerConfig,
    RobbinsMonro,
    SelectionResult,
    TrajectoryPoint,
    objective_gradient,
    search_min_budget,
    select_fixed_budget,
)
from .transport import (
    CostSpec,
    SinkhornConfig,
    SourceGradient,
    TransportResult,
    calibrated_gradient,
    cost_matrix,
    default_label_weight,
    exact_from_cost,
    exact_ot,
    mixture_weights,
    sinkhorn,
    sinkhorn_from_cost,
)

__version__ = "0.1.0"
