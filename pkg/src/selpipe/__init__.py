"""Valid selective inference for feature-selection pipelines.

Declare a pipeline of missing-value imputation, outlier detection, and
feature-selection steps as a DAG; run it; and get p-values for the selected
features that account for the whole selection process, via conditional
inference on a truncated normal identified by a parametric line search.
"""

from .components import (
    ImputationMap,
    PipelineOutput,
    build_imputation_map,
    combine_sets,
    detect_outliers_cook,
    detect_outliers_dffits,
    detect_outliers_soft_ipod,
    run_pipeline,
    select_lasso,
    select_marginal,
    select_stepwise,
)
from .crossval import (
    CandidateSet,
    cv_error,
    select_pipeline_cv,
    test_features_cv,
)
from .data import (
    GaussianModel,
    MaskedDataset,
    estimate_variance,
    load_dataset,
)
from .estimator import PipelineFeatureSelector, PipelineFeatureSelectorCV
from .events import EventResult, ParamLine, fs_event, od_event
from .graph import (
    Node,
    PipelineGraph,
    load_pipeline,
    parse_pipeline,
    topological_order,
)
from .inference import (
    SelectiveTestResult,
    TestDirection,
    build_test_direction,
    decompose,
    test_features,
    tn_two_sided_p,
)
from .intervals import Interval, IntervalSet, solve_quadratic_inequality
from .presets import candidate_grid, option1, option2
from .search import (
    NodeState,
    SearchContext,
    apply_update_rule,
    line_search_truncation,
    update_interval,
)
from .simulate import run_simulation

__version__ = "0.1.0"

__all__ = [
    "CandidateSet",
    "EventResult",
    "GaussianModel",
    "ImputationMap",
    "Interval",
    "IntervalSet",
    "MaskedDataset",
    "Node",
    "NodeState",
    "ParamLine",
    "PipelineFeatureSelector",
    "PipelineFeatureSelectorCV",
    "PipelineGraph",
    "PipelineOutput",
    "SearchContext",
    "SelectiveTestResult",
    "TestDirection",
    "apply_update_rule",
    "build_imputation_map",
    "build_test_direction",
    "candidate_grid",
    "combine_sets",
    "cv_error",
    "decompose",
    "detect_outliers_cook",
    "detect_outliers_dffits",
    "detect_outliers_soft_ipod",
    "estimate_variance",
    "fs_event",
    "line_search_truncation",
    "load_dataset",
    "load_pipeline",
    "od_event",
    "option1",
    "option2",
    "parse_pipeline",
    "run_pipeline",
    "run_simulation",
    "select_lasso",
    "select_marginal",
    "select_pipeline_cv",
    "select_stepwise",
    "test_features",
    "test_features_cv",
    "tn_two_sided_p",
    "topological_order",
    "update_interval",
]
