"""Scikit-learn style front end.

:class:`PipelineFeatureSelector` runs a declared pipeline on ``(X, y)`` (NaN
entries of ``y`` mark missing responses), exposes the selected features
through the usual ``get_support`` / ``transform`` surface, and attaches the
selective p-values of every selected feature.
:class:`PipelineFeatureSelectorCV` does the same after choosing the pipeline
from candidates by cross-validation, conditioning the inference on that
choice as well.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin

from .components import build_imputation_map, run_pipeline
from .crossval import CandidateSet, test_features_cv
from .data import GaussianModel, MaskedDataset, as_float_matrix, estimate_variance
from .graph import PipelineGraph, parse_pipeline
from .inference import test_features


def _as_graph(pipeline) -> PipelineGraph:
    if isinstance(pipeline, PipelineGraph):
        return pipeline
    return parse_pipeline(pipeline)


def _build_dataset(X, y) -> MaskedDataset:
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(
            f"X and y disagree on the number of rows: {X.shape[0]} vs "
            f"{y.shape[0]}"
        )
    return MaskedDataset.from_response(X, y)


class _SelectorBase(SelectorMixin, BaseEstimator):
    """Shared fit plumbing for the plain and CV selectors."""

    def _resolve_sigma(self, dataset: MaskedDataset, imputer_method) -> float:
        if isinstance(self.sigma, numbers.Real) and not isinstance(self.sigma, bool):
            return float(self.sigma)
        if self.sigma == "estimate":
            if dataset.n_obs == dataset.n:
                y_full = dataset.y_obs
            else:
                if imputer_method is None:
                    raise ValueError(
                        "cannot estimate sigma: responses are missing and "
                        "the pipeline has no imputation node"
                    )
                imp = build_imputation_map(imputer_method, dataset.X,
                                           dataset.miss_mask)
                y_full = imp.apply(dataset.y_obs)
            return float(np.sqrt(estimate_variance(dataset.X, y_full)))
        raise ValueError(
            f"sigma must be a positive number or 'estimate', got {self.sigma!r}"
        )

    def _finish_fit(self, dataset: MaskedDataset, results, outliers) -> None:
        self.n_features_in_ = dataset.d
        self.results_ = results
        self.outliers_ = outliers
        self.selected_features_ = tuple(r.feature for r in results)
        self.p_values_ = np.array([r.p_selective for r in results])
        mask = np.zeros(dataset.d, dtype=bool)
        mask[list(self.selected_features_)] = True
        self.support_mask_ = mask

    def _get_support_mask(self):
        return self.support_mask_

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.required = True
        tags.input_tags.allow_nan = True
        return tags


class PipelineFeatureSelector(_SelectorBase):
    """Feature selector with valid post-selection p-values.

    Args:
        pipeline: a :class:`PipelineGraph`, config dict, or config JSON text.
        sigma: noise standard deviation, or ``"estimate"`` to plug in the
            residual-based estimate from the (imputed) data.

    After ``fit``, ``results_`` holds one :class:`SelectiveTestResult` per
    selected feature and ``transform`` keeps the selected columns.
    """

    def __init__(self, pipeline, sigma=1.0):
        self.pipeline = pipeline
        self.sigma = sigma

    def fit(self, X, y):
        graph = _as_graph(self.pipeline)
        dataset = _build_dataset(X, y)
        mvi = graph.mvi_node
        sigma = self._resolve_sigma(dataset,
                                    mvi.method if mvi is not None else None)
        self.sigma_used_ = sigma
        results = test_features(graph, dataset, GaussianModel(sigma))
        output = run_pipeline(graph, dataset)
        self._finish_fit(dataset, results, output.outliers)
        return self


class PipelineFeatureSelectorCV(_SelectorBase):
    """Cross-validated pipeline choice plus selective inference.

    Args:
        candidates: list of pipelines (graphs or configs).
        folds: number of CV folds.
        seed: seed of the fold shuffle.
        sigma: as in :class:`PipelineFeatureSelector`.
    """

    def __init__(self, candidates, folds=2, seed=0, sigma=1.0):
        self.candidates = candidates
        self.folds = folds
        self.seed = seed
        self.sigma = sigma

    def fit(self, X, y):
        graphs = tuple(_as_graph(c) for c in self.candidates)
        cands = CandidateSet(graphs, n_folds=self.folds, seed=self.seed)
        dataset = _build_dataset(X, y)
        mvi = graphs[0].mvi_node
        sigma = self._resolve_sigma(dataset,
                                    mvi.method if mvi is not None else None)
        self.sigma_used_ = sigma
        results, s_star = test_features_cv(cands, dataset,
                                           GaussianModel(sigma))
        self.best_index_ = s_star
        self.best_pipeline_ = graphs[s_star]
        output = run_pipeline(graphs[s_star], dataset)
        self._finish_fit(dataset, results, output.outliers)
        return self
