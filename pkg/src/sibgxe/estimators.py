"""Thin scikit-learn-style wrappers around the functional estimators.

These exist for interoperability with sklearn tooling (clone,
get_params/set_params, pipelines); the functional API in
:mod:`sibgxe.linreg` remains the primary interface.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .linreg import DesignMatrix, ols, oriv, tsls


class ClusterRobustOLS(BaseEstimator):
    """OLS with optional fixed-effect absorption and clustered covariance.

    Parameters mirror :func:`sibgxe.linreg.ols`; ``fit(X, y)`` accepts a
    plain array plus optional ``cluster_ids`` / ``fe_groups`` keyword
    labels and exposes ``coef_``, ``vcov_`` and the full ``result_``.
    """

    def __init__(self, on_collinear="raise", cluster_dim=None):
        self.on_collinear = on_collinear
        self.cluster_dim = cluster_dim

    def fit(self, X, y, *, cluster_ids=(), fe_groups=(), column_names=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        names = list(column_names or [f"x{j}" for j in range(X.shape[1])])
        design = DesignMatrix(column_names=names, values=X,
                              cluster_ids=list(cluster_ids),
                              fe_groups=list(fe_groups),
                              outcome=np.asarray(y, dtype=float))
        self.result_ = ols(design, cluster_dim=self.cluster_dim,
                           on_collinear=self.on_collinear)
        self.coef_ = self.result_.coefficients
        self.vcov_ = self.result_.vcov
        self.terms_ = self.result_.terms
        return self

    def std_errors(self):
        return self.result_.std_errors


class TwoStageLeastSquares(BaseEstimator):
    """2SLS with clustered covariance; wraps :func:`sibgxe.linreg.tsls`."""

    def __init__(self, on_collinear="raise", cluster_dim=None):
        self.on_collinear = on_collinear
        self.cluster_dim = cluster_dim

    def fit(self, X, y, *, instruments, exogenous=None, cluster_ids=(),
            fe_groups=(), endog_names=None, exog_names=None):
        self.result_ = tsls(np.asarray(y, dtype=float), X, exogenous,
                            instruments, cluster_ids=list(cluster_ids),
                            fe_groups=list(fe_groups),
                            endog_names=endog_names, exog_names=exog_names,
                            cluster_dim=self.cluster_dim,
                            on_collinear=self.on_collinear)
        self.coef_ = self.result_.coefficients
        self.vcov_ = self.result_.vcov
        self.terms_ = self.result_.terms
        self.first_stage_F_ = self.result_.first_stage_F
        return self


class StackedScoreIV(BaseEstimator):
    """Stacked two-score IV; wraps :func:`sibgxe.linreg.oriv`."""

    def __init__(self, within=True, include_interaction=True,
                 score_name="score", moderator_name="moderator",
                 on_collinear="drop"):
        self.within = within
        self.include_interaction = include_interaction
        self.score_name = score_name
        self.moderator_name = moderator_name
        self.on_collinear = on_collinear

    def fit(self, X, y, *, score_a, score_b, family_ids, moderator=None,
            individual_ids=None, control_names=()):
        controls = None
        if X is not None:
            controls = np.atleast_2d(np.asarray(X, dtype=float))
            if controls.size == 0:
                controls = None
        self.result_ = oriv(
            np.asarray(y, dtype=float), score_a, score_b,
            moderator=moderator, controls=controls, family_ids=family_ids,
            individual_ids=individual_ids, within=self.within,
            control_names=control_names, score_name=self.score_name,
            moderator_name=self.moderator_name,
            include_interaction=self.include_interaction,
            on_collinear=self.on_collinear)
        self.coef_ = self.result_.coefficients
        self.vcov_ = self.result_.vcov
        self.terms_ = self.result_.terms
        self.first_stage_F_ = self.result_.first_stage_F
        return self
