"""Regularized Gaussian-RBF kernels and the N -> N+1 extension algebra."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "NotPositiveDefiniteError",
    "KernelConfig",
    "KernelMatrix",
    "rbf_kernel",
    "kernel_matrix",
    "kernel_vector",
    "kernel_vector_jacobian",
    "bordered",
    "extend_inverse",
    "eta",
    "ETA_ROUNDOFF",
    "ETA_FLOOR",
]

# eta values in [-ETA_ROUNDOFF, 0] are treated as round-off and floored.
ETA_ROUNDOFF = 1e-10
ETA_FLOOR = 1e-12


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix that must be SPD fails Cholesky factorization."""


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidth and diagonal regularizer of one RBF kernel.

    Parameters
    ----------
    bandwidth2 : float
        The quantity ``2 * rho**2``; the kernel is ``exp(-|a-b|^2 / bandwidth2)``.
    lam : float
        Regularizer added on the diagonal of same-index pairs.
    """

    bandwidth2: float
    lam: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.bandwidth2) or self.bandwidth2 <= 0:
            raise ValueError(f"bandwidth2 must be positive, got {self.bandwidth2}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")

    @property
    def self_value(self) -> float:
        """k(z, z) for a point paired with its own index."""
        return 1.0 + self.lam


@dataclass(frozen=True)
class KernelMatrix:
    """An SPD kernel matrix with its Cholesky factor, inverse and log-determinant."""

    matrix: np.ndarray
    chol_factor: np.ndarray
    inverse: np.ndarray
    log_det: float
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", self.matrix.shape[0])

    @classmethod
    def from_matrix(cls, matrix, hint="increase the regularizer lambda"):
        """Factor a symmetric matrix and cache everything prediction needs."""
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {matrix.shape}")
        chol = cholesky_lower(matrix, hint=hint)
        inverse = linalg.cho_solve((chol, True), np.eye(matrix.shape[0]))
        inverse = 0.5 * (inverse + inverse.T)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        for arr in (matrix, chol, inverse):
            arr.setflags(write=False)
        return cls(matrix=matrix, chol_factor=chol, inverse=inverse, log_det=log_det)

    def solve(self, b):
        return linalg.cho_solve((self.chol_factor, True), b)

    def schur(self, v, kzz):
        """``(kzz - v^T K^{-1} v, K^{-1} v)`` through two triangular solves.

        Subtracting ``|L^{-1} v|^2`` loses about ``sqrt(cond K)`` times machine
        precision, where the explicit-inverse product loses ``cond K`` times;
        the difference matters because eta is often near the regularizer.
        """
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"v must have shape ({self.n},), got {v.shape}")
        w = linalg.solve_triangular(self.chol_factor, v, lower=True, check_finite=False)
        u = linalg.solve_triangular(self.chol_factor, w, lower=True, trans="T", check_finite=False)
        return float(kzz - w @ w), u


def cholesky_lower(matrix, hint="increase the regularizer lambda"):
    try:
        return linalg.cholesky(matrix, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NotPositiveDefiniteError(
            f"matrix of size {matrix.shape[0]} is not numerically positive "
            f"definite; {hint}"
        ) from exc


def _as_points(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2:
        raise ValueError(f"points must be an (N, d) array, got shape {points.shape}")
    return points


def _sq_dists(a, b):
    # direct differences: the expanded |a|^2 + |b|^2 - 2ab form loses
    # precision for nearby points, which the gradients are sensitive to
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def rbf_kernel(a, b, same_point, cfg):
    """Evaluate ``exp(-|a-b|^2 / bandwidth2) + lam * [same_point]``.

    ``same_point`` refers to the identity of the indices, not the values:
    a test point that coincides with a training point gets no regularizer.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    value = float(np.exp(-np.dot(diff, diff) / cfg.bandwidth2))
    if same_point:
        value += cfg.lam
    return value


def kernel_matrix(points, cfg):
    """Build and factor the N x N regularized kernel matrix of ``points``."""
    points = _as_points(points)
    if points.shape[0] < 1:
        raise ValueError("kernel_matrix needs at least one point")
    k = np.exp(-_sq_dists(points, points) / cfg.bandwidth2)
    k[np.diag_indices_from(k)] = 1.0 + cfg.lam
    return KernelMatrix.from_matrix(k)


def kernel_vector(points, z, cfg):
    """Kernel values between every row of ``points`` and a new point ``z``."""
    points = _as_points(points)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (points.shape[1],):
        raise ValueError(
            f"dimension mismatch: points have d={points.shape[1]}, z has shape {z.shape}"
        )
    diff = points - z
    return np.exp(-np.einsum("ij,ij->i", diff, diff) / cfg.bandwidth2)


def kernel_vector_jacobian(points, z, kvec, cfg):
    """Derivative of :func:`kernel_vector` with respect to ``z``.

    Returns an (N, d) array whose column ``d`` is the derivative of the
    kernel vector with respect to ``z[d]``. The self-kernel ``k(z, z)`` has
    zero derivative because the regularizer is attached to the index.
    """
    points = _as_points(points)
    return (-2.0 / cfg.bandwidth2) * (z[None, :] - points) * kvec[:, None]


def bordered(K, v, kzz):
    """Dense (N+1) x (N+1) matrix ``[[K, v], [v^T, kzz]]``."""
    base = K.matrix if isinstance(K, KernelMatrix) else np.asarray(K, dtype=float)
    n = base.shape[0]
    out = np.empty((n + 1, n + 1))
    out[:n, :n] = base
    out[:n, n] = v
    out[n, :n] = v
    out[n, n] = kzz
    return out


def extend_inverse(K, v, kzz):
    """Inverse of the bordered matrix from the cached inverse of ``K``, in O(N^2).

    Uses the block inversion lemma with Schur complement
    ``c = kzz - v^T K^{-1} v``.
    """
    c, kinv_v = K.schur(v, kzz)
    if not c > 0:
        raise NotPositiveDefiniteError(
            f"bordered matrix is not positive definite (Schur complement {c:.3g})"
        )
    n = K.n
    out = np.empty((n + 1, n + 1))
    out[:n, :n] = K.inverse + np.outer(kinv_v, kinv_v) / c
    out[:n, n] = -kinv_v / c
    out[n, :n] = -kinv_v / c
    out[n, n] = 1.0 / c
    return out


def floor_positive(value, tolerance, what="eta"):
    """Clamp round-off negatives to ``ETA_FLOOR``; reject genuine negatives."""
    if value > ETA_FLOOR:
        return value
    if value < -tolerance or not np.isfinite(value):
        raise NotPositiveDefiniteError(
            f"{what} = {value:.3g} is negative beyond round-off; "
            "the extended kernel matrix is not positive definite"
        )
    return ETA_FLOOR


def eta(K, v, kzz):
    """Uncertainty extension ``kzz - v^T K^{-1} v``.

    Equals ``|K^{N+1}| / |K^N|`` for the bordered matrix and lies in
    ``(0, kzz]``.
    """
    value, _ = K.schur(v, kzz)
    return floor_positive(value, ETA_ROUNDOFF)
