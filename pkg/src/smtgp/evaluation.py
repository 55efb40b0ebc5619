"""Baselines, cross-validation, the batch experiment runner and certainty reports."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import _resolve_method, default_init, predict, train
from .datasets import Dataset, error_metric, format_rows, knn_subset, toy_ground_truth_error
from .divergence import SMParams
from .kernels import NotPositiveDefiniteError, kernel_matrix
from .optimizer import OptimizerOptions

__all__ = [
    "BASELINES",
    "TGP_METHODS",
    "CVResult",
    "ExperimentReport",
    "CertaintyReport",
    "EtaCurves",
    "gpr_predict",
    "wknn_predict",
    "cross_validate",
    "run_experiment",
    "certainty_report",
    "emit_eta_blend_curves",
    "report_csv",
    "report_summary",
    "DEFAULT_WKNN_K",
    "ROOT_METRICS",
]

logger = logging.getLogger(__name__)

BASELINES = ("gpr", "wknn")
TGP_METHODS = ("kl", "ikl", "sm_quadratic", "sm_cubic")
ROOT_METRICS = {"toy1_root": "toy1", "toy2_root": "toy2"}
DEFAULT_WKNN_K = 10


def _query_matrix(x, d_x):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and x.size == d_x
    x = x.reshape(-1, d_x)
    return x, single


def gpr_predict(train_set, x, cfg_x):
    """Zero-mean GP posterior mean ``k_x^T K_X^{-1} Y`` for one or many queries."""
    queries, single = _query_matrix(x, train_set.d_x)
    kx = kernel_matrix(train_set.inputs, cfg_x)
    weights = kx.solve(train_set.outputs)
    diff = queries[:, None, :] - train_set.inputs[None, :, :]
    kq = np.exp(-np.einsum("mnd,mnd->mn", diff, diff) / cfg_x.bandwidth2)
    out = kq @ weights
    return out[0] if single else out


def wknn_predict(train_set, x, k, cfg_x):
    """RBF-weighted mean output of the ``k`` nearest training inputs."""
    n = len(train_set)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    queries, single = _query_matrix(x, train_set.d_x)
    out = np.empty((queries.shape[0], train_set.d_y))
    for i, q in enumerate(queries):
        d2 = np.einsum("ij,ij->i", train_set.inputs - q, train_set.inputs - q)
        idx = np.argsort(d2, kind="stable")[:k]
        # shift by the nearest distance so far queries do not underflow to 0/0
        w = np.exp(-(d2[idx] - d2[idx].min()) / cfg_x.bandwidth2)
        out[i] = w @ train_set.outputs[idx] / w.sum()
    return out[0] if single else out


def _point_error(y_hat, truth, x, metric_kind):
    if metric_kind in ROOT_METRICS:
        return toy_ground_truth_error(float(x[0]), y_hat, ROOT_METRICS[metric_kind])
    if truth is None:
        return np.nan
    return error_metric(y_hat, truth, metric_kind)


@dataclass
class ExperimentReport:
    """Per-point results of one method on one test set."""

    method: str
    predictions: np.ndarray
    errors: np.ndarray
    phi: np.ndarray | None
    iterations: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    wall_time: float
    has_truth: bool = True

    @property
    def n_failed(self) -> int:
        return int(np.sum(self.failed))

    @property
    def valid_errors(self) -> np.ndarray:
        return self.errors[~self.failed & np.isfinite(self.errors)]

    @property
    def mean_error(self) -> float:
        e = self.valid_errors
        return float(np.mean(e)) if e.size else float("nan")

    @property
    def std_error(self) -> float:
        e = self.valid_errors
        return float(np.std(e)) if e.size else float("nan")


def _split_test(test, d_x):
    if isinstance(test, Dataset):
        return test.inputs, test.outputs
    inputs = np.asarray(test, dtype=float)
    if inputs.size == 0:
        return inputs.reshape(0, d_x), None
    return inputs.reshape(-1, d_x), None


def run_experiment(
    train_set,
    test,
    method,
    params,
    cfg_x,
    cfg_y,
    metric_kind,
    k_tr=None,
    opts=None,
    k_nn=DEFAULT_WKNN_K,
):
    """Predict every test point with one method and score it.

    ``test`` is a :class:`Dataset` or a bare input matrix; without outputs the
    errors are NaN unless ``metric_kind`` is a toy root metric
    (``toy1_root``/``toy2_root``), which needs only the inputs. With ``k_tr``
    each point is predicted from its ``k_tr`` nearest training rows.
    Exceptions raised for a single point are recorded in ``failed`` and
    excluded from the summary statistics.
    """
    if method not in BASELINES:
        method = _resolve_method(method)
    inputs, outputs = _split_test(test, train_set.d_x)
    if outputs is not None and outputs.shape[1] != train_set.d_y:
        raise ValueError(f"test outputs have {outputs.shape[1]} columns, training has {train_set.d_y}")
    m = inputs.shape[0]
    is_sm = method.startswith("sm")
    preds = np.full((m, train_set.d_y), np.nan)
    errors = np.full(m, np.nan)
    phi = np.full(m, np.nan) if is_sm else None
    iterations = np.zeros(m, dtype=int)
    converged = np.ones(m, dtype=bool)
    failed = np.zeros(m, dtype=bool)
    opts = opts or OptimizerOptions()

    start = time.perf_counter()
    shared = None
    if k_tr is None and m:
        shared = _fit_shared(train_set, method, params, cfg_x, cfg_y)
    for i in range(m):
        x = inputs[i]
        try:
            if k_tr is None:
                local_model = shared
                local_train = train_set
            else:
                local_train = knn_subset(train_set, x, k_tr)
                local_model = _fit_shared(local_train, method, params, cfg_x, cfg_y)
            if method == "gpr":
                preds[i] = gpr_predict(local_train, x, cfg_x) if local_model is None else local_model(x)
            elif method == "wknn":
                preds[i] = wknn_predict(local_train, x, min(k_nn, len(local_train)), cfg_x)
            else:
                res = predict(local_model, x, method, opts=opts)
                preds[i] = res.y_hat
                iterations[i] = res.iterations
                converged[i] = res.converged
                if is_sm:
                    phi[i] = res.phi
            truth = None if outputs is None else outputs[i]
            errors[i] = _point_error(preds[i], truth, x, metric_kind)
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.warning("test point %d failed: %s", i, exc)
            failed[i] = True
    wall = time.perf_counter() - start
    has_truth = outputs is not None or metric_kind in ROOT_METRICS
    return ExperimentReport(method, preds, errors, phi, iterations, converged, failed, wall, has_truth)


def _fit_shared(train_set, method, params, cfg_x, cfg_y):
    if method == "wknn":
        return None
    if method == "gpr":
        kx = kernel_matrix(train_set.inputs, cfg_x)
        weights = kx.solve(train_set.outputs)
        X = train_set.inputs

        def gpr(x):
            d = X - x
            return np.exp(-np.einsum("ij,ij->i", d, d) / cfg_x.bandwidth2) @ weights

        return gpr
    return train(train_set.inputs, train_set.outputs, cfg_x, cfg_y, params)


@dataclass
class CVResult:
    best_alpha: float
    best_beta: float
    grid: list
    folds: int
    iterations: dict = field(default_factory=dict)

    @property
    def best_error(self) -> float:
        for a, b, e in self.grid:
            if a == self.best_alpha and b == self.best_beta:
                return e
        raise LookupError("best cell missing from grid")


def _clip_alpha(a):
    if a <= 0.0:
        return 0.01
    if a >= 1.0:
        return 0.99
    return float(a)


def _cell_rank(cell):
    """Sort key for (alpha, beta, error) cells: error, then alpha, then |beta - 1|."""
    a, b, err = cell
    return (err, a, abs(b - 1.0))


def _fold_ids(n, folds, seed):
    rng = np.random.default_rng(seed)
    ids = np.arange(n) % folds
    rng.shuffle(ids)
    return ids


def cross_validate(
    train_set,
    cfg_x,
    cfg_y,
    alpha_grid,
    beta_set,
    folds=5,
    seed=0,
    metric_kind="mean_abs_1d",
    method="sm_quadratic",
    opts=None,
):
    """Grid search over (alpha, beta) by k-fold validation error.

    Alpha values of 0 and 1 are replaced by 0.01 and 0.99. A cell whose
    training or prediction fails on any fold scores ``inf``. Ties go to the
    smaller alpha, then the smaller ``|beta - 1|``. Mean optimizer iteration
    counts per cell are returned in ``iterations``.
    """
    if folds < 2:
        raise ValueError(f"folds must be at least 2, got {folds}")
    if len(train_set) < folds:
        raise ValueError(f"cannot split {len(train_set)} rows into {folds} folds")
    method = _resolve_method(method)
    if not method.startswith("sm"):
        raise ValueError("cross-validation applies to the Sharma-Mittal methods")
    alphas = sorted({_clip_alpha(a) for a in alpha_grid})
    betas = sorted({float(b) for b in beta_set}, key=lambda b: (abs(b - 1.0), b))
    if not alphas or not betas:
        raise ValueError("alpha_grid and beta_set must be non-empty")
    opts = opts or OptimizerOptions()
    ids = _fold_ids(len(train_set), folds, seed)

    totals = {(a, b): 0.0 for a in alphas for b in betas}
    counts = {(a, b): 0 for a in alphas for b in betas}
    iters = {(a, b): 0 for a in alphas for b in betas}
    for f in range(folds):
        fit = train_set.subset(ids != f)
        val = train_set.subset(ids == f)
        try:
            base = train(fit.inputs, fit.outputs, cfg_x, cfg_y, SMParams(alphas[0], betas[0]))
        except NotPositiveDefiniteError as exc:
            logger.warning("fold %d: training failed: %s", f, exc)
            for key in totals:
                totals[key] = np.inf
            continue
        # KL starts do not depend on (alpha, beta); compute them once per fold
        kl_inits = [predict(base, x, "kl", init=default_init(base, x), opts=opts).y_hat for x in val.inputs]
        for a in alphas:
            try:
                model_a = base.with_params(SMParams(a, betas[0]))
            except NotPositiveDefiniteError:
                for b in betas:
                    totals[(a, b)] = np.inf
                continue
            for b in betas:
                if not np.isfinite(totals[(a, b)]):
                    continue
                model = model_a.with_params(SMParams(a, b))
                try:
                    for x, y, init in zip(val.inputs, val.outputs, kl_inits):
                        res = predict(model, x, method, init=init, opts=opts)
                        totals[(a, b)] += error_metric(res.y_hat, y, metric_kind)
                        counts[(a, b)] += 1
                        iters[(a, b)] += res.iterations
                except (ValueError, np.linalg.LinAlgError) as exc:
                    logger.warning("cell alpha=%g beta=%g failed: %s", a, b, exc)
                    totals[(a, b)] = np.inf

    grid = []
    for a in alphas:
        for b in betas:
            n = counts[(a, b)]
            err = totals[(a, b)] / n if np.isfinite(totals[(a, b)]) and n else np.inf
            grid.append((a, b, float(err)))
    best = min(grid, key=_cell_rank)
    mean_iters = {(a, b): iters[(a, b)] / max(counts[(a, b)], 1) for a, b, _ in grid}
    return CVResult(best[0], best[1], grid, folds, mean_iters)


@dataclass(frozen=True)
class CertaintyReport:
    log_phi: np.ndarray
    errors: np.ndarray
    spearman_rho: float
    degenerate: bool

    def pairs(self):
        return list(zip(self.log_phi.tolist(), self.errors.tolist()))


def certainty_report(report):
    """(log phi, error) pairs of a Sharma-Mittal run and their Spearman correlation.

    If either column is constant the rank correlation is undefined; it is
    then reported as 0 with ``degenerate=True``.
    """
    if report.phi is None:
        raise ValueError(f"certainty needs a Sharma-Mittal report, got method {report.method!r}")
    keep = ~report.failed & np.isfinite(report.errors) & np.isfinite(report.phi) & (report.phi > 0)
    log_phi = np.log(report.phi[keep])
    errors = report.errors[keep]
    if log_phi.size < 2 or np.ptp(log_phi) == 0 or np.ptp(errors) == 0:
        return CertaintyReport(log_phi, errors, 0.0, True)
    rho = float(stats.spearmanr(log_phi, errors).statistic)
    return CertaintyReport(log_phi, errors, rho, False)


@dataclass(frozen=True)
class EtaCurves:
    alpha: np.ndarray
    f1: np.ndarray
    f2: np.ndarray


def emit_eta_blend_curves(eta1, eta2, n=101):
    """Sample the geometric blend ``eta1^(1-a) eta2^a`` and the arithmetic blend."""
    if not (eta1 > 0 and eta2 > 0):
        raise ValueError("eta1 and eta2 must be positive")
    alpha = np.linspace(0.0, 1.0, n)
    f1 = np.exp((1.0 - alpha) * np.log(eta1) + alpha * np.log(eta2))
    f2 = (1.0 - alpha) * eta1 + alpha * eta2
    # keep the sampled values inside [min, max] despite exp/log round-off
    lo, hi = min(eta1, eta2), max(eta1, eta2)
    f1 = np.clip(f1, lo, hi)
    return EtaCurves(alpha, np.minimum(f1, f2), f2)


def report_csv(report):
    """Per-point rows: index, prediction components, error, phi, iterations."""
    d_y = report.predictions.shape[1]
    header = ["index"] + [f"y{j + 1}" for j in range(d_y)]
    if report.has_truth:
        header.append("error")
    if report.phi is not None:
        header.append("phi")
    header += ["iterations", "converged", "failed"]
    rows = []
    for i in range(report.predictions.shape[0]):
        row = [str(i)] + report.predictions[i].tolist()
        if report.has_truth:
            row.append(float(report.errors[i]))
        if report.phi is not None:
            row.append(float(report.phi[i]))
        row += [str(int(report.iterations[i])), str(int(report.converged[i])), str(int(report.failed[i]))]
        rows.append(row)
    return format_rows(header, rows)


def report_summary(report):
    """Compact ``key: value`` block with six significant digits."""
    lines = [
        f"method: {report.method}",
        f"n_points: {report.predictions.shape[0]}",
        f"n_failed: {report.n_failed}",
        f"n_not_converged: {int(np.sum(~report.converged))}",
    ]
    if report.has_truth:
        lines += [f"mean_error: {report.mean_error:.6g}", f"std_error: {report.std_error:.6g}"]
    lines.append(f"wall_time_s: {report.wall_time:.6g}")
    return "\n".join(lines) + "\n"
