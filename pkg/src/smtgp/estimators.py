"""scikit-learn style estimators around the TGP predictor and the two baselines."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import _resolve_method, predict, train
from .datasets import Dataset, knn_subset
from .divergence import SMParams
from .evaluation import DEFAULT_WKNN_K, gpr_predict, wknn_predict
from .kernels import KernelConfig
from .optimizer import OptimizerOptions

__all__ = ["TwinGaussianProcessRegressor", "GPRegressor", "WeightedKNNRegressor"]


def _fit_arrays(X, y):
    X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
    return X, y, y.ndim == 1


class TwinGaussianProcessRegressor(RegressorMixin, BaseEstimator):
    """Structured-output regressor minimizing a divergence between twin GPs.

    Parameters
    ----------
    method : {"sm", "sm_quadratic", "sm_cubic", "kl", "ikl"}
        Cost minimized at prediction time.
    alpha, beta : float
        Sharma-Mittal order and degree; ignored by ``kl`` and ``ikl``.
    bandwidth2_x, bandwidth2_y : float
        ``2 rho^2`` of the input and output RBF kernels.
    lambda_x, lambda_y : float
        Diagonal regularizers.
    max_iterations : int
        BFGS iteration cap per test point.
    k_tr : int or None
        If set, each test point is predicted from its ``k_tr`` nearest
        training rows instead of the whole training set.

    Attributes
    ----------
    model_ : TrainedModel or None
        Precomputed model on the full training set (``None`` when ``k_tr``
        is set).
    n_features_in_ : int
    """

    def __init__(
        self,
        method="sm",
        alpha=0.9,
        beta=1.5,
        bandwidth2_x=5.0,
        bandwidth2_y=0.05,
        lambda_x=1e-4,
        lambda_y=1e-4,
        max_iterations=50,
        k_tr=None,
    ):
        self.method = method
        self.alpha = alpha
        self.beta = beta
        self.bandwidth2_x = bandwidth2_x
        self.bandwidth2_y = bandwidth2_y
        self.lambda_x = lambda_x
        self.lambda_y = lambda_y
        self.max_iterations = max_iterations
        self.k_tr = k_tr

    def _configs(self):
        return (
            KernelConfig(self.bandwidth2_x, self.lambda_x),
            KernelConfig(self.bandwidth2_y, self.lambda_y),
            SMParams(self.alpha, self.beta),
        )

    def fit(self, X, y):
        X, y, self._single_output = _fit_arrays(X, y)
        self._method = _resolve_method(self.method)
        cfg_x, cfg_y, params = self._configs()
        self.n_features_in_ = X.shape[1]
        self.train_ = Dataset(X, y)
        if self.k_tr is not None and not 1 <= self.k_tr <= X.shape[0]:
            raise ValueError(f"k_tr must lie in [1, {X.shape[0]}], got {self.k_tr}")
        self.model_ = None if self.k_tr is not None else train(X, y, cfg_x, cfg_y, params)
        return self

    def predict_detailed(self, X):
        """Per-row :class:`Prediction` objects with certainty diagnostics."""
        check_is_fitted(self, "train_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        cfg_x, cfg_y, params = self._configs()
        opts = OptimizerOptions(max_iterations=self.max_iterations)
        out = []
        for x in X:
            model = self.model_
            if model is None:
                local = knn_subset(self.train_, x, self.k_tr)
                model = train(local.inputs, local.outputs, cfg_x, cfg_y, params)
            out.append(predict(model, x, self._method, opts=opts))
        return out

    def predict(self, X):
        y = np.vstack([p.y_hat for p in self.predict_detailed(X)])
        return y[:, 0] if self._single_output else y


class GPRegressor(RegressorMixin, BaseEstimator):
    """Zero-mean GP posterior mean with a regularized RBF kernel."""

    def __init__(self, bandwidth2=5.0, lam=1e-4):
        self.bandwidth2 = bandwidth2
        self.lam = lam

    def fit(self, X, y):
        X, y, self._single_output = _fit_arrays(X, y)
        self.n_features_in_ = X.shape[1]
        self.train_ = Dataset(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "train_")
        X = check_array(X)
        y = gpr_predict(self.train_, X, KernelConfig(self.bandwidth2, self.lam)).reshape(X.shape[0], -1)
        return y[:, 0] if self._single_output else y


class WeightedKNNRegressor(RegressorMixin, BaseEstimator):
    """RBF-weighted k-nearest-neighbour mean."""

    def __init__(self, n_neighbors=DEFAULT_WKNN_K, bandwidth2=5.0):
        self.n_neighbors = n_neighbors
        self.bandwidth2 = bandwidth2

    def fit(self, X, y):
        X, y, self._single_output = _fit_arrays(X, y)
        self.n_features_in_ = X.shape[1]
        self.train_ = Dataset(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "train_")
        X = check_array(X)
        k = min(self.n_neighbors, len(self.train_))
        y = wknn_predict(self.train_, X, k, KernelConfig(self.bandwidth2)).reshape(X.shape[0], -1)
        return y[:, 0] if self._single_output else y
