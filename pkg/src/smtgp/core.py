"""Twin Gaussian Process costs, analytic gradients, prediction and certainty.

All cost functions take a :class:`TrainedModel`, a test input ``x`` and a
candidate output ``y`` and return ``(cost, gradient with respect to y)``.
Everything that depends only on training data is cached at :func:`train`
time, so the KL, inverse-KL and quadratic Sharma-Mittal costs are O(N^2)
per evaluation. The cubic Sharma-Mittal cost is kept as an independent
cross-check of the quadratic one.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .divergence import SMParams
from .kernels import (
    KernelConfig,
    KernelMatrix,
    NotPositiveDefiniteError,
    bordered,
    cholesky_lower,
    eta,
    extend_inverse,
    floor_positive,
    kernel_matrix,
    kernel_vector,
    kernel_vector_jacobian,
)
from .optimizer import OptimizerOptions, minimize

__all__ = [
    "METHODS",
    "TrainedModel",
    "Prediction",
    "train",
    "kltgp_cost_grad",
    "ikltgp_cost_grad",
    "smtgp_cubic_cost_grad",
    "smtgp_quadratic_cost_grad",
    "certainty_phi",
    "log_phi_bound",
    "log_z_alpha",
    "predict",
    "default_init",
]

logger = logging.getLogger(__name__)

METHODS = ("kl", "ikl", "sm_quadratic", "sm_cubic")
_ALIASES = {"sm": "sm_quadratic", "sm-cubic": "sm_cubic", "sm-quadratic": "sm_quadratic"}

# log arguments below -LOG_GUARD are genuine failures, not round-off
LOG_GUARD = 1e-8


@dataclass(frozen=True)
class TrainedModel:
    """Training data plus every O(N^3) quantity prediction reuses.

    ``mixed`` is the factored ``(1 - alpha) K_X + alpha K_Y`` for
    ``params.alpha``; use :meth:`with_params` to re-key it for another alpha.
    """

    X: np.ndarray
    Y: np.ndarray
    kx: KernelMatrix
    ky: KernelMatrix
    mixed: KernelMatrix
    cfg_x: KernelConfig
    cfg_y: KernelConfig
    params: SMParams

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def mixed_inverse(self) -> np.ndarray:
        return self.mixed.inverse

    @property
    def mixed_log_det(self) -> float:
        return self.mixed.log_det

    def with_params(self, params):
        """Model for new (alpha, beta); refactors the mixed kernel only if alpha changed."""
        if params.alpha == self.params.alpha:
            return replace(self, params=params)
        return replace(self, params=params, mixed=_mixed_kernel(self.kx, self.ky, params.alpha))


@dataclass(frozen=True)
class Prediction:
    y_hat: np.ndarray
    final_cost: float
    phi: float
    eta_x: float
    eta_y: float
    eta_xy: float
    iterations: int
    converged: bool


def _mixed_kernel(kx, ky, alpha):
    return KernelMatrix.from_matrix((1.0 - alpha) * kx.matrix + alpha * ky.matrix)


def _as_2d(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {a.shape}")
    return a


def train(X, Y, cfg_x, cfg_y, params):
    """Precompute kernel matrices, inverses and log-determinants; O(N^3)."""
    X = _as_2d(X, "X")
    Y = _as_2d(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X and Y row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    if X.shape[0] < 2:
        raise ValueError("training needs at least two examples")
    kx = kernel_matrix(X, cfg_x)
    ky = kernel_matrix(Y, cfg_y)
    mixed = _mixed_kernel(kx, ky, params.alpha)
    X = X.copy()
    Y = Y.copy()
    X.setflags(write=False)
    Y.setflags(write=False)
    return TrainedModel(X, Y, kx, ky, mixed, cfg_x, cfg_y, params)


@dataclass(frozen=True)
class _InputTerms:
    k: np.ndarray  # K_X^x
    u: np.ndarray  # K_X^{-1} K_X^x
    eta: float
    kxx: float


@dataclass(frozen=True)
class _OutputTerms:
    k: np.ndarray  # K_Y^y
    jac: np.ndarray  # d K_Y^y / d y, (N, d_y)
    u: np.ndarray  # K_Y^{-1} K_Y^y
    eta: float
    kyy: float


def _input_terms(model, x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k = kernel_vector(model.X, x, model.cfg_x)
    kxx = model.cfg_x.self_value
    raw, u = model.kx.schur(k, kxx)
    value = floor_positive(raw, LOG_GUARD, "eta_x")
    return _InputTerms(k, u, value, kxx)


def _output_terms(model, y):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    k = kernel_vector(model.Y, y, model.cfg_y)
    jac = kernel_vector_jacobian(model.Y, y, k, model.cfg_y)
    kyy = model.cfg_y.self_value
    raw, u = model.ky.schur(k, kyy)
    value = floor_positive(raw, LOG_GUARD, "eta_y")
    return _OutputTerms(k, jac, u, value, kyy)


def kltgp_cost_grad(model, x, y, x_terms=None):
    """KL(input process || output process) cost and its gradient in ``y``.

    ``L = k_Y(y,y) - 2 K_Y^y . u_x - eta_x log(eta_y)``.
    """
    xt = x_terms or _input_terms(model, x)
    yt = _output_terms(model, y)
    cost = yt.kyy - 2.0 * float(yt.k @ xt.u) - xt.eta * np.log(yt.eta)
    grad = yt.jac.T @ (-2.0 * xt.u + (2.0 * xt.eta / yt.eta) * yt.u)
    return float(cost), grad


def ikltgp_cost_grad(model, x, y, x_terms=None):
    """Inverse-KL cost ``-2 K_X^x . u_y + u_y^T K_X u_y + eta_y (log eta_y - log eta_x)``."""
    xt = x_terms or _input_terms(model, x)
    yt = _output_terms(model, y)
    kx_uy = model.kx.matrix @ yt.u
    log_ratio = np.log(yt.eta) - np.log(xt.eta)
    cost = -2.0 * float(xt.k @ yt.u) + float(yt.u @ kx_uy) + yt.eta * log_ratio
    r = model.ky.inverse @ (-2.0 * xt.k + 2.0 * kx_uy) - 2.0 * (log_ratio + 1.0) * yt.u
    return float(cost), yt.jac.T @ r


def smtgp_cubic_cost_grad(model, x, y, x_terms=None):
    """Log of the Sharma-Mittal cost written through the extended inverses.

    Returns ``-(1-b)/2 log eta_y - (1-b)/(2(1-a)) log|a K_{X+x}^{-1} + (1-a) K_{Y+y}^{-1}|``
    and its gradient, which needs one (N+1)-sized linear solve, O(N^3).
    This equals ``(1-b)/(2(1-a)) log Z_alpha(y)`` up to a constant, so it must be
    maximized when ``beta < 1``; :func:`predict` handles the sign.
    """
    a, b = model.params.alpha, model.params.beta
    xt = x_terms or _input_terms(model, x)
    yt = _output_terms(model, y)
    kx_inv_ext = extend_inverse(model.kx, xt.k, xt.kxx)
    ky_inv_ext = extend_inverse(model.ky, yt.k, yt.kyy)
    ky_ext = bordered(model.ky, yt.k, yt.kyy)
    blend = a * kx_inv_ext + (1.0 - a) * ky_inv_ext
    log_det_blend = 2.0 * float(np.sum(np.log(np.diag(cholesky_lower(blend)))))
    cost = -0.5 * (1.0 - b) * np.log(yt.eta) - 0.5 * (1.0 - b) / (1.0 - a) * log_det_blend

    system = a * ky_ext @ kx_inv_ext @ ky_ext + (1.0 - a) * ky_ext
    rhs = np.zeros(model.n + 1)
    rhs[-1] = 1.0
    try:
        mu_ext = linalg.solve(system, rhs, assume_a="pos")
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefiniteError("gradient system of the cubic SM cost is singular") from exc
    mu = mu_ext[: model.n]
    grad = (1.0 - b) * (yt.jac.T @ (yt.u / yt.eta + mu))
    return float(cost), grad


def _mixed_terms(model, xt, yt):
    a = model.params.alpha
    v = (1.0 - a) * xt.k + a * yt.k
    kzz = (1.0 - a) * xt.kxx + a * yt.kyy
    raw, w = model.mixed.schur(v, kzz)
    value = floor_positive(raw, LOG_GUARD, "eta_xy")
    return value, w


def smtgp_quadratic_cost_grad(model, x, y, x_terms=None):
    """Sharma-Mittal cost through the three uncertainty extensions, O(N^2).

    ``L' = eta_y^(a e) * eta_xy^(-e) / (b - 1)`` with ``e = (1-b)/(2(1-a))``,
    where ``eta_xy`` is the extension of the mixed kernel
    ``(1-a) K_X + a K_Y`` by ``(1-a) K_X^x + a K_Y^y``.
    """
    a, b = model.params.alpha, model.params.beta
    e = model.params.exponent
    xt = x_terms or _input_terms(model, x)
    yt = _output_terms(model, y)
    eta_xy, w = _mixed_terms(model, xt, yt)
    p_exp, q_exp = a * e, -e
    cost = np.exp(p_exp * np.log(yt.eta) + q_exp * np.log(eta_xy)) / (b - 1.0)
    d_eta_y = -2.0 * (yt.jac.T @ yt.u)
    d_eta_xy = -2.0 * a * (yt.jac.T @ w)
    grad = cost * (p_exp * d_eta_y / yt.eta + q_exp * d_eta_xy / eta_xy)
    return float(cost), grad


_COSTS = {
    "kl": kltgp_cost_grad,
    "ikl": ikltgp_cost_grad,
    "sm_quadratic": smtgp_quadratic_cost_grad,
    "sm_cubic": smtgp_cubic_cost_grad,
}


def certainty_phi(model, x, y):
    """Certainty ``phi = eta_x^(1-a) eta_y^a / eta_xy`` and its three factors."""
    a = model.params.alpha
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    kx = kernel_vector(model.X, x, model.cfg_x)
    ky = kernel_vector(model.Y, y, model.cfg_y)
    kxx, kyy = model.cfg_x.self_value, model.cfg_y.self_value
    eta_x = eta(model.kx, kx, kxx)
    eta_y = eta(model.ky, ky, kyy)
    eta_xy = eta(model.mixed, (1.0 - a) * kx + a * ky, (1.0 - a) * kxx + a * kyy)
    phi = float(np.exp((1.0 - a) * np.log(eta_x) + a * np.log(eta_y) - np.log(eta_xy)))
    return phi, eta_x, eta_y, eta_xy


def log_phi_bound(model):
    """log of ``|a K_Y + (1-a) K_X| / (|K_X|^(1-a) |K_Y|^a)``, an upper bound on log phi."""
    a = model.params.alpha
    return model.mixed.log_det - (1.0 - a) * model.kx.log_det - a * model.ky.log_det


def log_z_alpha(model, x, y):
    """log of ``|K_{X+x}|^(1-a) |K_{Y+y}|^a / |a K_{Y+y} + (1-a) K_{X+x}|`` (always <= 0)."""
    a = model.params.alpha
    phi, eta_x, eta_y, eta_xy = certainty_phi(model, x, y)
    return (
        (1.0 - a) * (model.kx.log_det + np.log(eta_x))
        + a * (model.ky.log_det + np.log(eta_y))
        - (model.mixed.log_det + np.log(eta_xy))
    )


def _resolve_method(method):
    method = _ALIASES.get(method, method)
    if method not in _COSTS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return method


def default_init(model, x):
    """Training output paired with the nearest training input."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.einsum("ij,ij->i", model.X - x, model.X - x)
    return model.Y[int(np.argmin(d))].copy()


def predict(model, x, method="sm_quadratic", init=None, opts=None):
    """Predict the output for ``x`` by minimizing the chosen TGP cost.

    Without ``init``, KL and inverse-KL start from the nearest neighbour's
    output and the Sharma-Mittal variants start from the KL prediction.
    Optimizer failures are reported through ``converged=False`` with the best
    iterate retained.
    """
    method = _resolve_method(method)
    opts = opts or OptimizerOptions()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if init is None:
        init = default_init(model, x)
        if method.startswith("sm"):
            init = predict(model, x, "kl", init=init, opts=opts).y_hat
    init = np.atleast_1d(np.asarray(init, dtype=float))
    if init.shape != (model.Y.shape[1],):
        raise ValueError(f"init must have shape ({model.Y.shape[1]},), got {init.shape}")

    # keep the first trial inside the output kernel's length scale so the
    # search explores the basin of the initial guess before leaving it
    length_scale = float(np.sqrt(0.5 * model.cfg_y.bandwidth2))
    opts = replace(opts, initial_step=min(opts.initial_step, length_scale))

    xt = _input_terms(model, x)
    cost_grad = _COSTS[method]
    # the cubic cost is an increasing function of Z_alpha when beta < 1
    sign = np.sign(model.params.beta - 1.0) if method == "sm_cubic" else 1.0

    def objective(y):
        c, g = cost_grad(model, x, y, x_terms=xt)
        return sign * c, sign * g

    try:
        res = minimize(objective, init, opts)
        y_hat, cost, iterations, converged = res.x, sign * res.cost, res.iterations, res.converged
    except ValueError as exc:
        logger.warning("prediction failed at the initial point: %s", exc)
        y_hat, cost, iterations, converged = init, np.nan, 0, False

    try:
        phi, eta_x, eta_y, eta_xy = certainty_phi(model, x, y_hat)
    except NotPositiveDefiniteError:
        phi = eta_x = eta_y = eta_xy = np.nan
    return Prediction(y_hat, float(cost), phi, eta_x, eta_y, eta_xy, iterations, converged)
