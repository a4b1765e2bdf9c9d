import numpy as np
import pytest
from sklearn.base import clone

from sibgxe.estimators import (
    ClusterRobustOLS,
    StackedScoreIV,
    TwoStageLeastSquares,
)
from sibgxe.linreg import DesignMatrix, ols


def test_cluster_robust_ols_matches_functional_api():
    rng = np.random.default_rng(0)
    n = 200
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    clusters = rng.integers(0, 20, n)
    y = X @ [1.0, 0.5] + rng.standard_normal(n)
    est = ClusterRobustOLS().fit(X, y, cluster_ids=[clusters],
                                 column_names=["const", "x"])
    direct = ols(DesignMatrix(column_names=["const", "x"], values=X,
                              cluster_ids=[clusters], outcome=y))
    np.testing.assert_allclose(est.coef_, direct.coefficients)
    np.testing.assert_allclose(est.vcov_, direct.vcov)
    np.testing.assert_allclose(est.std_errors(), direct.std_errors)
    assert est.terms_ == direct.terms


def test_estimators_are_cloneable():
    est = ClusterRobustOLS(on_collinear="drop")
    cl = clone(est)
    assert cl.get_params() == est.get_params()
    iv = StackedScoreIV(within=False, score_name="pgs")
    assert clone(iv).get_params()["score_name"] == "pgs"


def test_two_stage_wrapper():
    rng = np.random.default_rng(1)
    n = 1000
    z = rng.standard_normal(n)
    e = rng.standard_normal(n)
    x = 0.8 * z + 0.5 * e + rng.standard_normal(n)
    y = 1.5 * x + e
    est = TwoStageLeastSquares().fit(
        x, y, instruments=z, exogenous=np.ones((n, 1)),
        endog_names=["x"], exog_names=["const"])
    zc = z - z.mean()
    assert est.coef_[est.terms_.index("x")] == pytest.approx(
        (zc @ y) / (zc @ x), abs=1e-10)
    assert est.first_stage_F_ > 50


def test_stacked_score_iv_wrapper():
    rng = np.random.default_rng(2)
    n_fam = 4000
    n = 2 * n_fam
    fam = np.repeat(np.arange(n_fam), 2)
    lam = 0.7
    latent = np.sqrt(lam) * rng.standard_normal(n)
    a = latent + np.sqrt(1 - lam) * rng.standard_normal(n)
    b = latent + np.sqrt(1 - lam) * rng.standard_normal(n)
    a -= a.mean()
    b -= b.mean()
    y = 0.6 * latent + rng.standard_normal(n)
    est = StackedScoreIV(include_interaction=False, score_name="pgs").fit(
        None, y, score_a=a, score_b=b, family_ids=fam)
    assert est.coef_[est.terms_.index("pgs")] == pytest.approx(0.6, abs=0.06)
