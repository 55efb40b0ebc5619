"""Command-line entry point.

Exit codes: 0 on success, 1 on runtime or numeric failure, 2 on usage errors.
Output files are written atomically.
"""

import argparse
import logging
import sys
from fractions import Fraction

import numpy as np

from .config import PRESETS, RunConfig
from .datasets import (
    CSVFormatError,
    METRIC_DIMS,
    atomic_write_text,
    format_rows,
    generate_toy1,
    generate_toy2,
    generate_toy_holdout,
    load_csv,
    save_csv,
)
from .divergence import (
    GaussianSpec,
    SMParams,
    benchmark_forms,
    bhattacharyya_divergence,
    flop_model,
    kl_divergence,
    renyi_divergence,
    sm_divergence_original,
    sm_divergence_simplified,
    tsallis_divergence,
)
from .evaluation import (
    DEFAULT_WKNN_K,
    ROOT_METRICS,
    certainty_report,
    cross_validate,
    emit_eta_blend_curves,
    report_csv,
    report_summary,
    run_experiment,
)

logger = logging.getLogger("smtgp")

PREDICT_METHODS = ("kl", "ikl", "sm", "sm-cubic", "gpr", "wknn")
METRIC_CHOICES = sorted(METRIC_DIMS) + sorted(ROOT_METRICS)


class UsageError(Exception):
    pass


def _parse_grid(text):
    """``start:step:stop`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            start, step, stop = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(n)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}") from None


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _load_config(args):
    base = RunConfig.preset(args.preset) if args.preset else RunConfig()
    cfg = RunConfig.load(args.config, base) if args.config else base
    if getattr(args, "ktr", None) is not None:
        cfg = RunConfig.from_mapping({"k_tr": args.ktr}, cfg)
    if getattr(args, "seed", None) is not None:
        cfg = RunConfig.from_mapping({"seed": args.seed}, cfg)
    return cfg


def _default_metric(d_y):
    for kind, dim in METRIC_DIMS.items():
        if dim == d_y:
            return kind
    raise UsageError(f"no default metric for {d_y}-dimensional outputs; pass --metric")


def _add_model_args(p):
    p.add_argument("--train", required=True, help="training CSV (x1..xD,y1..yM)")
    p.add_argument("--dx", required=True, type=_positive_int, help="number of input columns")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="JSON file with RunConfig keys; overrides --preset")
    p.add_argument("--metric", choices=METRIC_CHOICES)
    p.add_argument("--seed", type=int)


def _add_predict_args(p, methods):
    _add_model_args(p)
    p.add_argument("--test", required=True, help="test CSV; output columns are optional")
    p.add_argument("--method", required=True, choices=methods)
    p.add_argument("--ktr", type=_positive_int, help="train each point on its K nearest rows")
    p.add_argument("--k-nn", type=_positive_int, default=None, help=f"WKNN neighbours (default {DEFAULT_WKNN_K})")
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="smtgp", description="Twin Gaussian process regression tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy", help="write a toy training/test pair")
    p.add_argument("--which", required=True, type=int, choices=(1, 2))
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.add_argument("--holdout", action="store_true", help="test set of held-out (x, y) pairs instead of an x grid")

    _add_predict_args(sub.add_parser("predict", help="predict a test set and score it"), PREDICT_METHODS)
    _add_predict_args(sub.add_parser("certainty", help="(log phi, error) pairs of an SM run"), ("sm", "sm-cubic"))

    p = sub.add_parser("crossval", help="grid search over (alpha, beta)")
    _add_model_args(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--alpha-grid", type=_parse_grid, default=_parse_grid("0.05:0.05:0.95"))
    p.add_argument("--betas", type=_parse_grid, default=[0.5, 0.99, 1.5])
    p.add_argument("--method", choices=("sm", "sm-cubic"), default="sm")
    p.add_argument("--out", required=True)

    p = sub.add_parser("divergence", help="SM divergence between two Gaussians")
    p.add_argument("--dim", required=True, type=_positive_int)
    p.add_argument("--p-cov", required=True)
    p.add_argument("--q-cov", required=True)
    p.add_argument("--p-mean")
    p.add_argument("--q-mean")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--form", required=True, choices=("original", "simplified", "renyi", "tsallis", "kl", "bhatt"))

    p = sub.add_parser("bench-divergence", help="time the two closed forms")
    p.add_argument("--dim", required=True, type=_positive_int)
    p.add_argument("--reps", required=True, type=_positive_int)
    p.add_argument("--nonzero-mean", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eta-curves", help="geometric vs arithmetic blends of two etas")
    p.add_argument("--eta1", required=True, type=float)
    p.add_argument("--eta2", required=True, type=float)
    p.add_argument("--out", required=True)
    return parser


def _cmd_gen_toy(args):
    if args.holdout:
        train, test = generate_toy_holdout(args.which, args.seed)
    else:
        train, grid = (generate_toy1 if args.which == 1 else generate_toy2)(args.seed)
        test = None
        atomic_write_text(args.test_out, format_rows(["x1"], [[v] for v in grid.tolist()]))
    save_csv(train, args.train_out)
    if test is not None:
        save_csv(test, args.test_out)
    return 0


def _run(args):
    cfg = _load_config(args)
    train = load_csv(args.train, args.dx)
    test = load_csv(args.test, args.dx)
    if test.d_y not in (0, train.d_y):
        raise CSVFormatError(f"{args.test}: has {test.d_y} output columns, training has {train.d_y}")
    metric = args.metric or _default_metric(train.d_y)
    test_arg = test if test.d_y else test.inputs
    k_nn = args.k_nn or DEFAULT_WKNN_K
    method = {"sm": "sm_quadratic", "sm-cubic": "sm_cubic"}.get(args.method, args.method)
    return run_experiment(
        train, test_arg, method, cfg.params, cfg.cfg_x, cfg.cfg_y, metric, cfg.k_tr, cfg.optimizer, k_nn
    )


def _cmd_predict(args):
    report = _run(args)
    atomic_write_text(args.out, report_csv(report))
    sys.stdout.write(report_summary(report))
    return 0


def _cmd_certainty(args):
    report = _run(args)
    if not report.has_truth:
        raise UsageError("certainty needs test outputs or a toy root metric to score errors")
    cert = certainty_report(report)
    atomic_write_text(args.out, format_rows(["log_phi", "error"], cert.pairs()))
    print(f"spearman_rho: {cert.spearman_rho:.6g}")
    if cert.degenerate:
        print("degenerate: true")
    return 0


def _cmd_crossval(args):
    if args.folds < 2:
        raise UsageError(f"--folds must be at least 2, got {args.folds}")
    cfg = _load_config(args)
    train = load_csv(args.train, args.dx)
    metric = args.metric or _default_metric(train.d_y)
    if metric in ROOT_METRICS:
        raise UsageError("cross-validation scores held-out outputs; pick a non-root metric")
    method = "sm_cubic" if args.method == "sm-cubic" else "sm_quadratic"
    res = cross_validate(
        train, cfg.cfg_x, cfg.cfg_y, args.alpha_grid, args.betas, args.folds, cfg.seed, metric, method, cfg.optimizer
    )
    rows = [[a, b, e, res.iterations[(a, b)]] for a, b, e in res.grid]
    atomic_write_text(args.out, format_rows(["alpha", "beta", "mean_validation_error", "mean_iterations"], rows))
    print(f"best_alpha: {res.best_alpha:.6g}")
    print(f"best_beta: {res.best_beta:.6g}")
    print(f"best_error: {res.best_error:.6g}")
    return 0


def _read_matrix(path, shape):
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise CSVFormatError(f"{path}: {exc}") from None
    if data.size != int(np.prod(shape)):
        raise CSVFormatError(f"{path}: expected {shape} values, got {data.shape}")
    return data.reshape(shape)


def _cmd_divergence(args):
    d = args.dim
    p_mean = _read_matrix(args.p_mean, (d,)) if args.p_mean else np.zeros(d)
    q_mean = _read_matrix(args.q_mean, (d,)) if args.q_mean else np.zeros(d)
    p = GaussianSpec(p_mean, _read_matrix(args.p_cov, (d, d)))
    q = GaussianSpec(q_mean, _read_matrix(args.q_cov, (d, d)))
    needs = {"original": ("alpha", "beta"), "simplified": ("alpha", "beta"), "renyi": ("alpha",), "tsallis": ("alpha",)}
    for name in needs.get(args.form, ()):
        if getattr(args, name) is None:
            raise UsageError(f"--form {args.form} requires --{name}")
    if args.form == "original":
        value = sm_divergence_original(p, q, SMParams(args.alpha, args.beta))
    elif args.form == "simplified":
        value = sm_divergence_simplified(p, q, SMParams(args.alpha, args.beta))
    elif args.form == "renyi":
        value = renyi_divergence(p, q, args.alpha)
    elif args.form == "tsallis":
        value = tsallis_divergence(p, q, args.alpha)
    elif args.form == "kl":
        value = kl_divergence(p, q)
    else:
        value = bhattacharyya_divergence(p, q)
    print(f"{value:.12g}")
    return 0


def _ratio_text(zero_mean):
    orig, simp = flop_model(zero_mean)
    r = Fraction(orig / simp).limit_denominator(100)
    return f"{r.numerator}/{r.denominator} = {float(r):.6g}"


def _cmd_bench(args):
    if args.dim < 16 or args.reps < 3:
        raise UsageError("bench-divergence needs --dim >= 16 and --reps >= 3")
    rep = benchmark_forms(args.dim, args.reps, delta_mu_zero=not args.nonzero_mean, seed=args.seed)
    print(f"flop_model_ratio_zero_mean: {_ratio_text(True)}")
    print(f"flop_model_ratio_nonzero_mean: {_ratio_text(False)}")
    print(f"dim: {rep.dim}")
    print(f"delta_mu_zero: {str(rep.delta_mu_zero).lower()}")
    print(f"original_seconds: {rep.original_seconds:.6g}")
    print(f"simplified_seconds: {rep.simplified_seconds:.6g}")
    print(f"model_ratio: {rep.model_ratio:.6g}")
    print(f"measured_ratio: {rep.measured_ratio:.6g}")
    return 0


def _cmd_eta_curves(args):
    if not (args.eta1 > 0 and args.eta2 > 0):
        raise UsageError("--eta1 and --eta2 must be positive")
    curves = emit_eta_blend_curves(args.eta1, args.eta2)
    rows = np.column_stack([curves.alpha, curves.f1, curves.f2]).tolist()
    atomic_write_text(args.out, format_rows(["alpha", "f1", "f2"], rows))
    return 0


COMMANDS = {
    "gen-toy": _cmd_gen_toy,
    "predict": _cmd_predict,
    "certainty": _cmd_certainty,
    "crossval": _cmd_crossval,
    "divergence": _cmd_divergence,
    "bench-divergence": _cmd_bench,
    "eta-curves": _cmd_eta_curves,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        # ConfigError, CSVFormatError and NotPositiveDefiniteError are ValueErrors
        print(f"smtgp {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
