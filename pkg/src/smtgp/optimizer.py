"""BFGS quasi-Newton minimizer with a cubic-interpolation strong-Wolfe line search."""

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = ["OptimizerOptions", "OptimizeResult", "minimize", "line_search"]

logger = logging.getLogger(__name__)

C1 = 1e-4
C2 = 0.9


@dataclass(frozen=True)
class OptimizerOptions:
    max_iterations: int = 50
    grad_tolerance: float = 1e-6
    step_tolerance: float = 1e-10
    max_line_search_evals: int = 20
    # length of the very first trial displacement, before any curvature is known
    initial_step: float = 1.0

    def __post_init__(self):
        for name in ("max_iterations", "grad_tolerance", "step_tolerance", "max_line_search_evals", "initial_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class OptimizeResult(NamedTuple):
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool


def _safe_eval(objective, x):
    try:
        f, g = objective(x)
    except (ValueError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError):
        return np.inf, None
    f = float(f)
    g = np.asarray(g, dtype=float)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return np.inf, None
    return f, g


def _cubic_min(a0, f0, d0, a1, f1, d1):
    """Minimizer of the cubic through two (value, slope) samples, or None."""
    if a0 == a1:
        return None
    t1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1)
    disc = t1 * t1 - d0 * d1
    if disc < 0:
        return None
    t2 = np.copysign(np.sqrt(disc), a1 - a0)
    denom = d1 - d0 + 2.0 * t2
    if denom == 0:
        return None
    return a1 - (a1 - a0) * (d1 + t2 - t1) / denom


class _Probe(NamedTuple):
    step: float
    f: float
    g: np.ndarray
    slope: float


def line_search(objective, x, f0, g0, direction, step0, max_evals=20):
    """Strong-Wolfe step along ``direction``.

    Returns the accepted :class:`_Probe` and the number of evaluations, or
    ``(None, evals)`` when no step with sufficient decrease was found. Trial
    steps that produce non-finite values are treated as overshooting.
    """
    d0 = float(g0 @ direction)
    evals = 0

    def probe(step):
        nonlocal evals
        evals += 1
        f, g = _safe_eval(objective, x + step * direction)
        slope = float(g @ direction) if g is not None else np.nan
        return _Probe(step, f, g, slope)

    def armijo_fails(pr, prev_f):
        return pr.f > f0 + C1 * pr.step * d0 or pr.f >= prev_f

    def zoom(lo, hi):
        while evals < max_evals:
            step = None
            if np.isfinite(hi.f) and np.isfinite(hi.slope):
                step = _cubic_min(lo.step, lo.f, lo.slope, hi.step, hi.f, hi.slope)
            width = hi.step - lo.step
            a, b = sorted((lo.step, hi.step))
            margin = 0.1 * abs(width)
            if step is None or not (a + margin <= step <= b - margin):
                step = lo.step + 0.5 * width
            if abs(width) < 1e-16 * max(1.0, abs(lo.step)):
                break
            pr = probe(step)
            if armijo_fails(pr, lo.f) or pr.g is None:
                hi = pr
            else:
                if abs(pr.slope) <= -C2 * d0:
                    return pr
                if pr.slope * (hi.step - lo.step) >= 0:
                    hi = lo
                lo = pr
        return lo if lo.step > 0 else None

    prev = _Probe(0.0, f0, g0, d0)
    step = step0
    while evals < max_evals:
        pr = probe(step)
        if pr.g is None or pr.f > f0 + C1 * step * d0 or (prev.step > 0 and pr.f >= prev.f):
            return zoom(prev, pr), evals
        if abs(pr.slope) <= -C2 * d0:
            return pr, evals
        if pr.slope >= 0:
            return zoom(pr, prev), evals
        prev = pr
        step = 2.0 * step
    return (prev if prev.step > 0 else None), evals


def minimize(objective: Callable, x0, opts: OptimizerOptions | None = None) -> OptimizeResult:
    """Minimize ``objective(x) -> (cost, gradient)`` from ``x0`` with BFGS.

    The inverse-Hessian approximation starts at the identity and is rescaled
    by ``s^T y / y^T y`` before the first update; updates violating the
    curvature condition are skipped. Accepted costs never increase.

    Raises
    ------
    ValueError
        If the objective is not finite at ``x0``.
    """
    opts = opts or OptimizerOptions()
    x = np.array(x0, dtype=float).ravel()
    f, g = _safe_eval(objective, x)
    if g is None:
        raise ValueError("objective is not finite at the initial point")
    n = x.size
    H = np.eye(n)
    scaled = False
    if np.linalg.norm(g) < opts.grad_tolerance:
        return OptimizeResult(x, f, 0, True)

    for it in range(1, opts.max_iterations + 1):
        direction = -H @ g
        if not float(g @ direction) < 0:
            H = np.eye(n)
            direction = -g
        step0 = 1.0 if scaled else min(1.0, opts.initial_step / np.linalg.norm(g))
        accepted, _ = line_search(objective, x, f, g, direction, step0, opts.max_line_search_evals)
        if accepted is None:
            logger.debug("line search failed at iteration %d", it)
            return OptimizeResult(x, f, it - 1, False)
        s = accepted.step * direction
        y = accepted.g - g
        x, f, g = x + s, accepted.f, accepted.g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                H = (sy / float(y @ y)) * np.eye(n)
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            H = 0.5 * (H + H.T)
        if np.linalg.norm(g) < opts.grad_tolerance or np.linalg.norm(s) < opts.step_tolerance:
            return OptimizeResult(x, f, it, True)
    return OptimizeResult(x, f, opts.max_iterations, False)
