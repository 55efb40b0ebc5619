import numpy as np
import pytest
from scipy import stats

from smtgp.datasets import Dataset, generate_toy1
from smtgp.divergence import SMParams
from smtgp.evaluation import (
    CVResult,
    ExperimentReport,
    certainty_report,
    cross_validate,
    emit_eta_blend_curves,
    gpr_predict,
    report_csv,
    report_summary,
    run_experiment,
    wknn_predict,
)
from smtgp.evaluation import _cell_rank
from smtgp.kernels import KernelConfig
from smtgp.optimizer import OptimizerOptions


def small_toy(n=40, seed=0):
    train, _ = generate_toy1(seed)
    return train.subset(np.arange(n))


class TestGPR:
    def test_two_point_literal(self):
        # K = [[1+l, e],[e, 1+l]], e = exp(-1/bw2); query at x = 0
        cfg = KernelConfig(2.0, 0.1)
        ds = Dataset(np.array([[0.0], [1.0]]), np.array([[1.0], [3.0]]))
        e = np.exp(-0.5)
        K = np.array([[1.1, e], [e, 1.1]])
        want = np.array([1.0, e]) @ np.linalg.solve(K, [1.0, 3.0])
        assert gpr_predict(ds, [0.0], cfg)[0] == pytest.approx(want, rel=1e-12)

    def test_interpolates_with_tiny_regularizer(self):
        x = np.linspace(0, 1, 12)
        ds = Dataset(x, np.sin(3 * x))
        pred = gpr_predict(ds, ds.inputs, KernelConfig(0.01, 1e-10))
        np.testing.assert_allclose(pred, ds.outputs, atol=1e-5)

    def test_far_query_goes_to_zero(self):
        ds = small_toy(20)
        assert abs(gpr_predict(ds, [50.0], KernelConfig(1.0, 1e-3))[0]) < 1e-100

    def test_batch_equals_single(self):
        ds = small_toy(20)
        cfg = KernelConfig(5.0, 1e-4)
        xs = np.array([[0.1], [0.5]])
        batch = gpr_predict(ds, xs, cfg)
        np.testing.assert_allclose(batch[1], gpr_predict(ds, [0.5], cfg), rtol=1e-9)


class TestWKNN:
    def test_k1_is_nearest_neighbour(self):
        ds = small_toy(30)
        q = ds.inputs[7] + 1e-9
        assert wknn_predict(ds, q, 1, KernelConfig(1.0))[0] == ds.outputs[7, 0]

    def test_constant_outputs(self):
        ds = Dataset(np.linspace(0, 1, 10), np.full(10, 2.5))
        assert wknn_predict(ds, [0.3], 4, KernelConfig(0.1))[0] == pytest.approx(2.5, rel=1e-15)

    def test_far_query_is_finite(self):
        ds = small_toy(30)
        assert np.isfinite(wknn_predict(ds, [1e3], 5, KernelConfig(0.01))).all()

    def test_brute_force(self):
        ds = small_toy(30)
        cfg = KernelConfig(0.3)
        q = 0.42
        d2 = (ds.inputs[:, 0] - q) ** 2
        idx = np.argsort(d2, kind="stable")[:6]
        w = np.exp(-d2[idx] / 0.3)
        assert wknn_predict(ds, [q], 6, cfg)[0] == pytest.approx(w @ ds.outputs[idx, 0] / w.sum(), rel=1e-12)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            wknn_predict(small_toy(5), [0.1], 6, KernelConfig(1.0))


class TestRunExperiment:
    def setup_method(self):
        self.train = small_toy(60)
        self.cfg_x = KernelConfig(5.0, 1e-4)
        self.cfg_y = KernelConfig(0.05, 1e-4)
        self.params = SMParams(0.9, 1.5)

    def test_mean_matches_errors(self):
        test = small_toy(8, seed=1)
        rep = run_experiment(self.train, test, "sm", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d")
        np.testing.assert_allclose(rep.errors, np.abs(rep.predictions[:, 0] - test.outputs[:, 0]))
        assert rep.mean_error == pytest.approx(np.mean(rep.errors))
        assert rep.phi is not None and np.all((rep.phi > 0) & (rep.phi <= 1 + 1e-9))

    def test_inputs_only_gives_nan_errors(self):
        rep = run_experiment(self.train, np.array([0.2, 0.4]), "kl", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d")
        assert np.isnan(rep.errors).all() and not rep.has_truth
        assert "error" not in report_csv(rep).splitlines()[0]

    def test_root_metric_without_outputs(self):
        rep = run_experiment(self.train, np.array([0.2, 0.4]), "wknn", self.params, self.cfg_x, self.cfg_y, "toy1_root")
        assert rep.has_truth and np.all(rep.errors >= 0)

    def test_empty_test_set(self):
        rep = run_experiment(self.train, np.zeros((0, 1)), "sm", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d")
        assert rep.predictions.shape == (0, 1) and np.isnan(rep.mean_error)

    def test_local_model_with_all_rows_matches_global(self):
        test = small_toy(3, seed=2)
        full = run_experiment(self.train, test, "kl", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d")
        local = run_experiment(self.train, test, "kl", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d", k_tr=60)
        np.testing.assert_allclose(local.predictions, full.predictions, atol=1e-8)

    def test_failed_point_is_recorded(self):
        # a root metric on an x outside the forward range cannot be scored
        rep = run_experiment(self.train, np.array([0.3, 9.0]), "gpr", self.params, self.cfg_x, self.cfg_y, "toy1_root")
        assert rep.failed.tolist() == [False, True] and rep.n_failed == 1
        assert np.isfinite(rep.mean_error)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            run_experiment(self.train, np.array([0.2]), "svm", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d")

    def test_summary_format(self):
        test = small_toy(4, seed=3)
        rep = run_experiment(self.train, test, "gpr", self.params, self.cfg_x, self.cfg_y, "mean_abs_1d")
        text = report_summary(rep)
        assert text.startswith("method: gpr\nn_points: 4\nn_failed: 0\n")
        assert f"mean_error: {rep.mean_error:.6g}" in text


class TestCrossValidate:
    def setup_method(self):
        self.train = small_toy(30)
        self.cfg_x = KernelConfig(5.0, 1e-4)
        self.cfg_y = KernelConfig(0.05, 1e-4)
        self.opts = OptimizerOptions(max_iterations=20)

    def test_single_cell(self):
        res = cross_validate(self.train, self.cfg_x, self.cfg_y, [0.5], [0.9], folds=3, opts=self.opts)
        assert (res.best_alpha, res.best_beta) == (0.5, 0.9)
        assert len(res.grid) == 1 and np.isfinite(res.best_error)

    def test_endpoints_clipped(self):
        res = cross_validate(self.train, self.cfg_x, self.cfg_y, [0.0, 1.0], [0.99], folds=3, opts=self.opts)
        assert sorted(a for a, _, _ in res.grid) == [0.01, 0.99]

    def test_deterministic(self):
        a = cross_validate(self.train, self.cfg_x, self.cfg_y, [0.3, 0.7], [0.5, 1.5], folds=3, seed=4, opts=self.opts)
        b = cross_validate(self.train, self.cfg_x, self.cfg_y, [0.3, 0.7], [0.5, 1.5], folds=3, seed=4, opts=self.opts)
        assert a.grid == b.grid and (a.best_alpha, a.best_beta) == (b.best_alpha, b.best_beta)

    def test_best_is_grid_minimum(self):
        res = cross_validate(self.train, self.cfg_x, self.cfg_y, [0.2, 0.6, 0.9], [0.5, 1.5], folds=3, opts=self.opts)
        assert res.best_error == min(e for _, _, e in res.grid)

    def test_tie_break(self):
        grid = [(0.5, 1.5, 0.1), (0.2, 0.5, 0.1), (0.2, 0.9, 0.1)]
        assert min(grid, key=_cell_rank)[:2] == (0.2, 0.9)
        assert min(grid + [(0.1, 3.0, 0.2)], key=_cell_rank)[:2] == (0.2, 0.9)

    def test_best_error_lookup(self):
        res = CVResult(0.2, 0.9, [(0.2, 0.9, 0.05)], 3)
        assert res.best_error == 0.05
        with pytest.raises(LookupError):
            CVResult(0.3, 0.9, [(0.2, 0.9, 0.05)], 3).best_error

    def test_rejects_non_sm(self):
        with pytest.raises(ValueError):
            cross_validate(self.train, self.cfg_x, self.cfg_y, [0.5], [0.5], method="kl")

    def test_rejects_one_fold(self):
        with pytest.raises(ValueError):
            cross_validate(self.train, self.cfg_x, self.cfg_y, [0.5], [0.5], folds=1)


def fake_report(phi, errors, method="sm_quadratic"):
    m = len(errors)
    return ExperimentReport(
        method,
        np.zeros((m, 1)),
        np.asarray(errors, float),
        None if phi is None else np.asarray(phi, float),
        np.zeros(m, int),
        np.ones(m, bool),
        np.zeros(m, bool),
        0.0,
    )


class TestCertainty:
    def test_anti_monotone(self):
        rep = certainty_report(fake_report([0.9, 0.5, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]))
        assert rep.spearman_rho == pytest.approx(-1.0) and not rep.degenerate

    def test_matches_scipy(self):
        rng = np.random.default_rng(0)
        phi, err = rng.uniform(0.1, 1, 30), rng.uniform(0, 1, 30)
        rep = certainty_report(fake_report(phi, err))
        assert rep.spearman_rho == pytest.approx(stats.spearmanr(np.log(phi), err)[0], rel=1e-12)
        assert len(rep.pairs()) == 30

    def test_constant_is_degenerate(self):
        rep = certainty_report(fake_report([0.5, 0.5, 0.5], [0.1, 0.2, 0.3]))
        assert rep.degenerate and rep.spearman_rho == 0.0

    def test_non_sm(self):
        with pytest.raises(ValueError):
            certainty_report(fake_report(None, [0.1, 0.2], method="kl"))


class TestEtaCurves:
    def test_endpoints_and_order(self):
        c = emit_eta_blend_curves(0.2, 3.0)
        assert c.alpha.size == 101 and c.alpha[0] == 0.0 and c.alpha[-1] == 1.0
        assert c.f1[0] == pytest.approx(0.2) and c.f1[-1] == pytest.approx(3.0)
        assert np.all(c.f1 <= c.f2)

    def test_equal_inputs(self):
        c = emit_eta_blend_curves(0.7, 0.7)
        assert np.all(c.f1 == 0.7) and np.all(c.f2 == pytest.approx(0.7))

    def test_midpoint(self):
        c = emit_eta_blend_curves(1.0, 4.0, n=3)
        assert c.f1[1] == pytest.approx(2.0) and c.f2[1] == pytest.approx(2.5)

    def test_non_positive(self):
        with pytest.raises(ValueError):
            emit_eta_blend_curves(0.0, 1.0)
