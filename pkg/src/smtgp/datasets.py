"""Toy generators, CSV ingestion, k-NN training subsets and error metrics."""

import csv
import os
import tempfile
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "forward_toy",
    "generate_toy1",
    "generate_toy2",
    "generate_toy_holdout",
    "toy_roots",
    "toy_ground_truth_error",
    "load_csv",
    "save_csv",
    "knn_subset",
    "error_metric",
    "METRIC_DIMS",
    "CSVFormatError",
]

TOY_NOISE_STD = 0.005
TOY_TRAIN_SIZE = 250


class CSVFormatError(ValueError):
    """Malformed CSV input; the message names the offending line."""


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    name: str = ""

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        outputs = np.asarray(self.outputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs[:, None]
        if outputs.ndim == 1:
            outputs = outputs[:, None]
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError(f"row count mismatch: {inputs.shape[0]} inputs vs {outputs.shape[0]} outputs")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def d_x(self) -> int:
        return self.inputs.shape[1]

    @property
    def d_y(self) -> int:
        return self.outputs.shape[1]

    def subset(self, idx, name=None):
        return Dataset(self.inputs[idx], self.outputs[idx], name or self.name)


def forward_toy(y):
    """The S-shaped forward relation ``x = y + 0.3 sin(2 pi y)``."""
    return y + 0.3 * np.sin(2.0 * np.pi * y)


def _toy1_pairs(rng, n):
    y = rng.uniform(0.0, 1.0, n)
    x = forward_toy(y) + rng.normal(0.0, TOY_NOISE_STD, n)
    return x, y


def _toy2_pairs(rng, n):
    # two S shapes side by side: the left copy is shifted by -1 in x
    y = rng.uniform(0.0, 1.0, n)
    x = forward_toy(y) + rng.normal(0.0, TOY_NOISE_STD, n)
    x[: n // 2] -= 1.0
    return x, y


def _open_grid(lo, hi, n):
    return np.linspace(lo, hi, n + 2)[1:-1]


def generate_toy1(seed):
    """250 noisy training pairs on one S curve and 250 equally spaced test inputs in (0, 1)."""
    rng = np.random.default_rng(seed)
    x, y = _toy1_pairs(rng, TOY_TRAIN_SIZE)
    return Dataset(x, y, "toy1"), _open_grid(0.0, 1.0, 250)


def generate_toy2(seed):
    """Double-S training set (500 pairs down-sampled by 2) and 500 test inputs in (-1, 1)."""
    rng = np.random.default_rng(seed)
    x, y = _toy2_pairs(rng, 2 * TOY_TRAIN_SIZE)
    return Dataset(x[::2], y[::2], "toy2"), _open_grid(-1.0, 1.0, 500)


def generate_toy_holdout(which, seed, n_test=None):
    """Training set of :func:`generate_toy1`/``2`` plus held-out pairs from the same generator.

    The training part is identical to the grid variant for the same seed; the
    test pairs are drawn afterwards from the same stream, so their outputs are
    the values that generated each test input.
    """
    rng = np.random.default_rng(seed)
    if which in (1, "1", "toy1"):
        x, y = _toy1_pairs(rng, TOY_TRAIN_SIZE)
        train = Dataset(x, y, "toy1")
        xt, yt = _toy1_pairs(rng, n_test or 250)
        return train, Dataset(xt, yt, "toy1-test")
    if which in (2, "2", "toy2"):
        x, y = _toy2_pairs(rng, 2 * TOY_TRAIN_SIZE)
        train = Dataset(x[::2], y[::2], "toy2")
        xt, yt = _toy2_pairs(rng, n_test or 500)
        return train, Dataset(xt, yt, "toy2-test")
    raise ValueError(f"unknown toy example {which!r}")


_ROOT_GRID = np.linspace(0.0, 1.0, 10_001)


def _branch_roots(x):
    residual = forward_toy(_ROOT_GRID) - x
    roots = list(_ROOT_GRID[residual == 0.0])
    sign_change = np.nonzero(residual[:-1] * residual[1:] < 0)[0]
    for i in sign_change:
        lo, hi = _ROOT_GRID[i], _ROOT_GRID[i + 1]
        r_lo = residual[i]
        while hi - lo > 1e-10:
            mid = 0.5 * (lo + hi)
            r_mid = forward_toy(mid) - x
            if (r_mid < 0) == (r_lo < 0):
                lo, r_lo = mid, r_mid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    return roots


def toy_roots(test_x, shape="toy1"):
    """All outputs in [0, 1] whose noise-free forward image is ``test_x``."""
    if shape == "toy1":
        roots = _branch_roots(test_x)
    elif shape == "toy2":
        roots = _branch_roots(test_x) + _branch_roots(test_x + 1.0)
    else:
        raise ValueError(f"unknown toy shape {shape!r}")
    return np.sort(np.asarray(roots))


def toy_ground_truth_error(test_x, y_hat, shape="toy1"):
    """Distance from ``y_hat`` to the nearest exact inverse of ``test_x``."""
    roots = toy_roots(float(test_x), shape)
    if roots.size == 0:
        raise ValueError(f"no inverse found for x={test_x} on {shape}")
    return float(np.min(np.abs(roots - float(np.ravel(y_hat)[0]))))


def load_csv(path, d_x):
    """Read a dataset whose header is ``x1..xD,y1..yM``; the first ``d_x`` columns are inputs."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CSVFormatError(f"{path}: empty file, expected a header row") from None
        if not header or not all(h.strip() and h.strip()[0] in "xy" for h in header):
            raise CSVFormatError(f"{path}:1: missing header row (expected x1,...,y1,...)")
        width = len(header)
        if not 1 <= d_x <= width:
            raise CSVFormatError(f"{path}: d_x={d_x} but the header has {width} columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CSVFormatError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise CSVFormatError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
    data = np.asarray(rows, dtype=float).reshape(-1, width)
    name = os.path.splitext(os.path.basename(path))[0]
    return Dataset(data[:, :d_x], data[:, d_x:], name)


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_rows(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def save_csv(dataset, path):
    header = [f"x{i + 1}" for i in range(dataset.d_x)] + [f"y{j + 1}" for j in range(dataset.d_y)]
    rows = np.hstack([dataset.inputs, dataset.outputs])
    atomic_write_text(path, format_rows(header, rows.tolist()))


def knn_subset(train, x, k_tr):
    """Rows with the ``k_tr`` smallest input distances to ``x``, in original order."""
    n = len(train)
    if not 1 <= k_tr <= n:
        raise ValueError(f"k_tr must lie in [1, {n}], got {k_tr}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.einsum("ij,ij->i", train.inputs - x, train.inputs - x)
    # stable sort breaks ties by lower row index
    idx = np.sort(np.argsort(d, kind="stable")[:k_tr])
    return train.subset(idx)


METRIC_DIMS = {"mean_abs_1d": 1, "usps_center_norm": 16, "poser_deg_mod360": 54, "heva_marker_mm": 60}


def error_metric(y_hat, y_star, kind):
    """Per-example error for one of the supported tasks."""
    y_hat = np.atleast_1d(np.asarray(y_hat, dtype=float))
    y_star = np.atleast_1d(np.asarray(y_star, dtype=float))
    if kind not in METRIC_DIMS:
        raise ValueError(f"unknown metric {kind!r}; expected one of {sorted(METRIC_DIMS)}")
    dim = METRIC_DIMS[kind]
    if y_hat.shape != (dim,) or y_star.shape != (dim,):
        raise ValueError(f"{kind} expects {dim}-vectors, got {y_hat.shape} and {y_star.shape}")
    diff = y_hat - y_star
    if kind == "mean_abs_1d":
        return float(abs(diff[0]))
    if kind == "usps_center_norm":
        return float(np.linalg.norm(diff))
    if kind == "poser_deg_mod360":
        # wrap into (-180, 180]
        wrapped = 180.0 - np.mod(180.0 - diff, 360.0)
        return float(np.mean(np.abs(wrapped)))
    return float(np.mean(np.linalg.norm(diff.reshape(20, 3), axis=1)))
