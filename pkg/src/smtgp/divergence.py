"""Sharma-Mittal divergence between multivariate Gaussians.

Two closed forms are provided. :func:`sm_divergence_original` works through
the precision matrices (two inversions plus three factorizations), while
:func:`sm_divergence_simplified` needs only the three log-determinants of
``Sigma_p``, ``Sigma_q`` and ``alpha * Sigma_q + (1 - alpha) * Sigma_p``.
Both agree to round-off. All determinant algebra is done in log space.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg
from scipy.linalg import lapack
from scipy.stats import multivariate_normal

from .kernels import NotPositiveDefiniteError, cholesky_lower

__all__ = [
    "GaussianSpec",
    "SMParams",
    "BenchReport",
    "sm_divergence_original",
    "sm_divergence_simplified",
    "renyi_divergence",
    "tsallis_divergence",
    "kl_divergence",
    "bhattacharyya_divergence",
    "log_alpha_integral",
    "sm_from_alpha_integral",
    "alpha_integral_quadrature",
    "benchmark_forms",
    "flop_model",
]

BETA_GUARD = 1e-12


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector and SPD covariance of a multivariate Gaussian."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ValueError(f"covariance must be square, got {cov.shape}")
        if mean.shape != (cov.shape[0],):
            raise ValueError(f"mean shape {mean.shape} does not match covariance {cov.shape}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise ValueError("covariance is not symmetric")
        cholesky_lower(cov, hint="covariance must be symmetric positive definite")
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @classmethod
    def centered(cls, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(np.zeros(cov.shape[0]), cov)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


@dataclass(frozen=True)
class SMParams:
    """Order parameters of the Sharma-Mittal family, ``0 < alpha < 1``, ``beta != 1``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(
                f"alpha must lie strictly inside (0, 1), got {self.alpha}; "
                "use alpha=0.99 for KL-like behaviour"
            )
        if not np.isfinite(self.beta) or abs(self.beta - 1.0) <= BETA_GUARD:
            raise ValueError(
                f"beta must differ from 1, got {self.beta}; use renyi_divergence "
                "or kl_divergence for the beta -> 1 limits"
            )

    @property
    def exponent(self) -> float:
        """``(1 - beta) / (2 (1 - alpha))``, the power applied to determinant ratios."""
        return (1.0 - self.beta) / (2.0 * (1.0 - self.alpha))


def _check_pair(p, q):
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")


def _logdet_from_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _inverse_from_chol(chol):
    # potri costs ~n^3/3 given the factor
    inv, info = lapack.dpotri(chol, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"inverse from Cholesky factor failed (info={info})")
    return np.tril(inv) + np.tril(inv, -1).T


def _sm_from_log_power(log_power, beta):
    # (exp(log_power) - 1) / (beta - 1) without cancellation near 0
    return float(np.expm1(log_power) / (beta - 1.0))


def sm_divergence_original(p, q, params):
    """Closed form written through precision matrices.

    Factors ``Sigma_p`` and ``Sigma_q``, inverts both, factors
    ``A = alpha Sigma_p^{-1} + (1 - alpha) Sigma_q^{-1}`` and evaluates::

        D = [ (|Sigma_p|^a |Sigma_q|^(1-a) |A|)^(-(1-b)/(2(1-a)))
              * exp(-a(1-b)/2 * dmu^T Sigma_q^{-1} A^{-1} Sigma_p^{-1} dmu) - 1 ] / (b - 1)

    The quadratic form equals ``dmu^T (alpha Sigma_q + (1-alpha) Sigma_p)^{-1} dmu``.
    """
    _check_pair(p, q)
    a, b = params.alpha, params.beta
    chol_p = cholesky_lower(p.cov)
    chol_q = cholesky_lower(q.cov)
    prec_p = _inverse_from_chol(chol_p)
    prec_q = _inverse_from_chol(chol_q)
    A = a * prec_p + (1.0 - a) * prec_q
    chol_a = cholesky_lower(A, hint="alpha-blend of precisions is not positive definite")
    log_ratio = a * _logdet_from_chol(chol_p) + (1.0 - a) * _logdet_from_chol(chol_q) + _logdet_from_chol(chol_a)
    log_power = -params.exponent * log_ratio

    dmu = p.mean - q.mean
    if np.any(dmu != 0.0):
        a_inv = _inverse_from_chol(chol_a)
        quad = float((prec_q @ dmu) @ a_inv @ (prec_p @ dmu))
        log_power += -0.5 * a * (1.0 - b) * quad
    return _sm_from_log_power(log_power, b)


def _simplified_parts(p, q, alpha):
    """Log-determinant term and blended-covariance factor used by the simplified form."""
    chol_p = cholesky_lower(p.cov)
    chol_q = cholesky_lower(q.cov)
    blend = alpha * q.cov + (1.0 - alpha) * p.cov
    chol_s = cholesky_lower(blend)
    log_z = (1.0 - alpha) * _logdet_from_chol(chol_p) + alpha * _logdet_from_chol(chol_q) - _logdet_from_chol(chol_s)
    return log_z, chol_s


def sm_divergence_simplified(p, q, params):
    """Closed form through three log-determinants.

    With ``Z = |Sigma_p|^(1-a) |Sigma_q|^a / |a Sigma_q + (1-a) Sigma_p|``::

        D = [ Z^((1-b)/(2(1-a))) * exp(-a(1-b)/2 * dmu^T (a Sigma_q + (1-a) Sigma_p)^{-1} dmu) - 1 ] / (b - 1)

    When the means coincide no inverse is formed at all.
    """
    _check_pair(p, q)
    a, b = params.alpha, params.beta
    log_z, chol_s = _simplified_parts(p, q, a)
    log_power = params.exponent * log_z
    dmu = p.mean - q.mean
    if np.any(dmu != 0.0):
        quad = float(dmu @ linalg.cho_solve((chol_s, True), dmu))
        log_power += -0.5 * a * (1.0 - b) * quad
    return _sm_from_log_power(log_power, b)


def log_alpha_integral(p, q, alpha):
    """``log of the integral of p^alpha q^(1-alpha)`` in closed form."""
    _check_pair(p, q)
    log_z, chol_s = _simplified_parts(p, q, alpha)
    dmu = p.mean - q.mean
    quad = float(dmu @ linalg.cho_solve((chol_s, True), dmu))
    return 0.5 * log_z - 0.5 * alpha * (1.0 - alpha) * quad


def sm_from_alpha_integral(integral, params):
    """Sharma-Mittal divergence from a (possibly numerically computed) alpha-integral."""
    log_power = (1.0 - params.beta) / (1.0 - params.alpha) * np.log(integral)
    return _sm_from_log_power(log_power, params.beta)


def renyi_divergence(p, q, alpha):
    """Renyi divergence of order ``alpha``: ``log(int p^a q^(1-a)) / (a - 1)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return log_alpha_integral(p, q, alpha) / (alpha - 1.0)


def tsallis_divergence(p, q, alpha):
    """Tsallis divergence, the ``beta = alpha`` member of the family."""
    return sm_divergence_simplified(p, q, SMParams(alpha, alpha))


def kl_divergence(p, q):
    """Classical Gaussian KL(p || q)."""
    _check_pair(p, q)
    chol_p = cholesky_lower(p.cov)
    chol_q = cholesky_lower(q.cov)
    dmu = q.mean - p.mean
    trace = float(np.trace(linalg.cho_solve((chol_q, True), p.cov)))
    maha = float(dmu @ linalg.cho_solve((chol_q, True), dmu))
    return 0.5 * (trace + maha - p.dim + _logdet_from_chol(chol_q) - _logdet_from_chol(chol_p))


def bhattacharyya_divergence(p, q):
    """Bhattacharyya divergence as the ``alpha -> 1/2, beta -> 1`` limit, doubled.

    This is ``2 * R_{1/2}(p:q) = -4 log BC(p, q)``. The classical
    Bhattacharyya distance ``-log BC`` is a quarter of the returned value.
    ``BC`` is evaluated from its own closed form with the averaged covariance
    ``(Sigma_p + Sigma_q) / 2``.
    """
    _check_pair(p, q)
    avg = 0.5 * (p.cov + q.cov)
    chol_avg = cholesky_lower(avg)
    dmu = p.mean - q.mean
    distance = 0.125 * float(dmu @ linalg.cho_solve((chol_avg, True), dmu)) + 0.5 * (
        _logdet_from_chol(chol_avg)
        - 0.5 * (_logdet_from_chol(cholesky_lower(p.cov)) + _logdet_from_chol(cholesky_lower(q.cov)))
    )
    return 4.0 * distance


def alpha_integral_quadrature(p, q, alpha, grid_points=400, width=40.0):
    """Numerically integrate ``p^alpha q^(1-alpha)`` for 1-D or 2-D Gaussians.

    1-D uses adaptive Gauss-Kronrod over ``mean +- width * sigma``; 2-D uses a
    trapezoidal tensor grid of ``grid_points`` per axis spanning both
    densities. Independent of the closed forms; used as their oracle.
    """
    _check_pair(p, q)
    if p.dim == 1:
        sp, sq = np.sqrt(p.cov[0, 0]), np.sqrt(q.cov[0, 0])
        mp, mq = p.mean[0], q.mean[0]

        def integrand(t):
            lp = -0.5 * (t - mp) ** 2 / sp**2 - np.log(sp * np.sqrt(2 * np.pi))
            lq = -0.5 * (t - mq) ** 2 / sq**2 - np.log(sq * np.sqrt(2 * np.pi))
            return np.exp(alpha * lp + (1 - alpha) * lq)

        lo = min(mp - width * sp, mq - width * sq)
        hi = max(mp + width * sp, mq + width * sq)
        center = 0.5 * (mp + mq)
        # split at the means so the adaptive rule sees the mass
        points = sorted({mp, mq, center})
        value, _ = integrate.quad(integrand, lo, hi, points=points, limit=400, epsabs=1e-14, epsrel=1e-12)
        return float(value)
    if p.dim == 2:
        sd = np.sqrt(np.maximum(np.diag(p.cov), np.diag(q.cov)))
        half = 12.0 * sd
        lo = np.minimum(p.mean, q.mean) - half
        hi = np.maximum(p.mean, q.mean) + half
        ax0 = np.linspace(lo[0], hi[0], grid_points)
        ax1 = np.linspace(lo[1], hi[1], grid_points)
        g0, g1 = np.meshgrid(ax0, ax1, indexing="ij")
        pts = np.stack([g0.ravel(), g1.ravel()], axis=1)
        lp = multivariate_normal(p.mean, p.cov).logpdf(pts)
        lq = multivariate_normal(q.mean, q.cov).logpdf(pts)
        vals = np.exp(alpha * lp + (1 - alpha) * lq).reshape(g0.shape)
        return float(integrate.trapezoid(integrate.trapezoid(vals, ax1, axis=1), ax0))
    raise ValueError("quadrature oracle supports only 1-D and 2-D Gaussians")


def flop_model(delta_mu_zero):
    """Leading cubic operation counts (original, simplified) in units of N^3."""
    if delta_mu_zero:
        return 5.0 / 3.0, 1.0
    return 2.0, 4.0 / 3.0


@dataclass(frozen=True)
class BenchReport:
    dim: int
    reps: int
    delta_mu_zero: bool
    original_seconds: float
    simplified_seconds: float
    model_original: float
    model_simplified: float

    @property
    def model_ratio(self) -> float:
        return self.model_original / self.model_simplified

    @property
    def measured_ratio(self) -> float:
        return self.original_seconds / self.simplified_seconds


def _random_spd(rng, dim):
    a = rng.standard_normal((dim, dim))
    return a @ a.T / dim + np.eye(dim)


def benchmark_forms(dim, reps, delta_mu_zero=True, seed=0):
    """Time both closed forms on a random SPD pair; medians over ``reps`` runs."""
    if dim < 16 or reps < 3:
        raise ValueError("benchmark needs dim >= 16 and reps >= 3")
    rng = np.random.default_rng(seed)
    mean_q = np.zeros(dim) if delta_mu_zero else rng.standard_normal(dim)
    p = GaussianSpec(np.zeros(dim), _random_spd(rng, dim))
    q = GaussianSpec(mean_q, _random_spd(rng, dim))
    params = SMParams(0.5, 0.5)
    # warm up BLAS/LAPACK
    sm_divergence_original(p, q, params)
    sm_divergence_simplified(p, q, params)
    t_orig, t_simp = [], []
    for _ in range(reps):
        t0 = time.perf_counter()
        sm_divergence_original(p, q, params)
        t1 = time.perf_counter()
        sm_divergence_simplified(p, q, params)
        t2 = time.perf_counter()
        t_orig.append(t1 - t0)
        t_simp.append(t2 - t1)
    model_orig, model_simp = flop_model(delta_mu_zero)
    return BenchReport(
        dim=dim,
        reps=reps,
        delta_mu_zero=delta_mu_zero,
        original_seconds=float(np.median(t_orig)),
        simplified_seconds=float(np.median(t_simp)),
        model_original=model_orig,
        model_simplified=model_simp,
    )
