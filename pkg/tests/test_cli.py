import subprocess
import sys

import numpy as np
import pytest

from smtgp.cli import _parse_grid, main
from smtgp.datasets import generate_toy1, load_csv, save_csv
from smtgp.divergence import GaussianSpec, SMParams, sm_divergence_simplified


@pytest.fixture
def toy_files(tmp_path):
    train, grid = generate_toy1(0)
    save_csv(train.subset(np.arange(60)), tmp_path / "train.csv")
    (tmp_path / "test.csv").write_text("x1\n" + "\n".join(repr(float(v)) for v in grid[::50]) + "\n")
    return tmp_path


def write_matrix(path, m):
    np.savetxt(path, np.atleast_2d(m), delimiter=",")
    return str(path)


class TestGenToy:
    @pytest.mark.parametrize("which", [1, 2])
    def test_same_seed_same_bytes(self, tmp_path, which):
        for tag in ("a", "b"):
            assert main(["gen-toy", "--which", str(which), "--seed", "3",
                         "--train-out", str(tmp_path / f"{tag}_tr.csv"), "--test-out", str(tmp_path / f"{tag}_te.csv")]) == 0
        assert (tmp_path / "a_tr.csv").read_bytes() == (tmp_path / "b_tr.csv").read_bytes()
        assert (tmp_path / "a_te.csv").read_bytes() == (tmp_path / "b_te.csv").read_bytes()

    def test_grid_file(self, tmp_path):
        main(["gen-toy", "--which", "1", "--seed", "0", "--train-out", str(tmp_path / "tr.csv"), "--test-out", str(tmp_path / "te.csv")])
        lines = (tmp_path / "te.csv").read_text().splitlines()
        assert lines[0] == "x1" and len(lines) == 251
        assert len(load_csv(tmp_path / "tr.csv", 1)) == 250

    def test_holdout_has_outputs(self, tmp_path):
        main(["gen-toy", "--which", "2", "--seed", "0", "--holdout", "--train-out", str(tmp_path / "tr.csv"), "--test-out", str(tmp_path / "te.csv")])
        assert load_csv(tmp_path / "te.csv", 1).d_y == 1


class TestPredict:
    @pytest.mark.parametrize("method", ["kl", "ikl", "sm", "sm-cubic", "gpr", "wknn"])
    def test_methods(self, toy_files, capsys, method):
        out = toy_files / f"{method}.csv"
        code = main(["predict", "--train", str(toy_files / "train.csv"), "--dx", "1", "--test", str(toy_files / "test.csv"),
                     "--method", method, "--preset", "toy1", "--metric", "toy1_root", "--out", str(out)])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0].startswith("index,y1,error") and len(rows) == 6
        assert "n_points: 5" in capsys.readouterr().out

    def test_inputs_only_without_metric_has_no_errors(self, toy_files):
        out = toy_files / "p.csv"
        assert main(["predict", "--train", str(toy_files / "train.csv"), "--dx", "1", "--test", str(toy_files / "test.csv"),
                     "--method", "kl", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "index,y1,iterations,converged,failed"

    def test_unknown_method_is_usage_error(self, toy_files):
        with pytest.raises(SystemExit) as exc:
            main(["predict", "--train", str(toy_files / "train.csv"), "--dx", "1", "--test", str(toy_files / "test.csv"),
                  "--method", "svm", "--out", str(toy_files / "p.csv")])
        assert exc.value.code == 2

    def test_missing_file_exits_1(self, toy_files, capsys):
        assert main(["predict", "--train", str(toy_files / "nope.csv"), "--dx", "1", "--test", str(toy_files / "test.csv"),
                     "--method", "kl", "--out", str(toy_files / "p.csv")]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_config_exits_1(self, toy_files):
        cfg = toy_files / "c.json"
        cfg.write_text('{"alpha": 2.0}')
        assert main(["predict", "--train", str(toy_files / "train.csv"), "--dx", "1", "--test", str(toy_files / "test.csv"),
                     "--method", "kl", "--config", str(cfg), "--out", str(toy_files / "p.csv")]) == 1

    def test_certainty(self, toy_files, capsys):
        out = toy_files / "c.csv"
        assert main(["certainty", "--train", str(toy_files / "train.csv"), "--dx", "1", "--test", str(toy_files / "test.csv"),
                     "--method", "sm", "--metric", "toy1_root", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "log_phi,error"
        assert "spearman_rho:" in capsys.readouterr().out


class TestCrossval:
    def test_grid_output(self, toy_files, capsys):
        out = toy_files / "cv.csv"
        assert main(["crossval", "--train", str(toy_files / "train.csv"), "--dx", "1", "--folds", "3",
                     "--alpha-grid", "0.3,0.7", "--betas", "0.5", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 3
        assert "best_alpha:" in capsys.readouterr().out

    def test_one_fold_is_usage_error(self, toy_files):
        with pytest.raises(SystemExit) as exc:
            main(["crossval", "--train", str(toy_files / "train.csv"), "--dx", "1", "--folds", "1", "--out", str(toy_files / "cv.csv")])
        assert exc.value.code == 2

    def test_grid_parser(self):
        assert _parse_grid("0:0.25:1") == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert _parse_grid("0.5,1.5") == [0.5, 1.5]


class TestDivergence:
    def test_forms_agree_with_library(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        P, Q = a @ a.T + np.eye(3), b @ b.T + np.eye(3)
        args = ["divergence", "--dim", "3", "--p-cov", write_matrix(tmp_path / "p.csv", P),
                "--q-cov", write_matrix(tmp_path / "q.csv", Q), "--alpha", "0.4", "--beta", "0.7"]
        values = []
        for form in ("original", "simplified"):
            assert main(args + ["--form", form]) == 0
            values.append(float(capsys.readouterr().out))
        want = sm_divergence_simplified(GaussianSpec.centered(P), GaussianSpec.centered(Q), SMParams(0.4, 0.7))
        assert values == pytest.approx([want, want], rel=1e-10)

    def test_missing_alpha_is_usage_error(self, tmp_path):
        p = write_matrix(tmp_path / "p.csv", np.eye(2))
        with pytest.raises(SystemExit) as exc:
            main(["divergence", "--dim", "2", "--p-cov", p, "--q-cov", p, "--form", "renyi"])
        assert exc.value.code == 2

    def test_non_spd_exits_1(self, tmp_path, capsys):
        bad = write_matrix(tmp_path / "bad.csv", [[1.0, 2.0], [2.0, 1.0]])
        good = write_matrix(tmp_path / "good.csv", np.eye(2))
        assert main(["divergence", "--dim", "2", "--p-cov", bad, "--q-cov", good, "--form", "kl"]) == 1
        assert "error" in capsys.readouterr().err

    def test_wrong_size_exits_1(self, tmp_path):
        p = write_matrix(tmp_path / "p.csv", np.eye(2))
        assert main(["divergence", "--dim", "3", "--p-cov", p, "--q-cov", p, "--form", "kl"]) == 1


class TestBench:
    def test_output(self, capsys):
        assert main(["bench-divergence", "--dim", "32", "--reps", "3"]) == 0
        out = capsys.readouterr().out
        assert "flop_model_ratio_zero_mean: 5/3 = 1.66667" in out
        assert "flop_model_ratio_nonzero_mean: 3/2 = 1.5" in out
        assert "measured_ratio:" in out

    def test_too_small(self):
        with pytest.raises(SystemExit) as exc:
            main(["bench-divergence", "--dim", "4", "--reps", "3"])
        assert exc.value.code == 2


class TestEtaCurves:
    def test_equal_etas(self, tmp_path):
        out = tmp_path / "e.csv"
        assert main(["eta-curves", "--eta1", "0.3", "--eta2", "0.3", "--out", str(out)]) == 0
        data = np.loadtxt(out, delimiter=",", skiprows=1)
        assert data.shape == (101, 3)
        np.testing.assert_allclose(data[:, 1], data[:, 2], rtol=1e-14)

    def test_non_positive(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["eta-curves", "--eta1", "-1", "--eta2", "0.3", "--out", str(tmp_path / "e.csv")])
        assert exc.value.code == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "smtgp.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gen-toy" in res.stdout
