import json

import numpy as np
import pytest

from blnm.cli import load_run_config, main
from blnm.data import NormalizationInfo, load_dataset, save_dataset
from blnm.errors import ValidationError
from blnm.net import ArchitectureSpec, build, load_model, save_model
from blnm.synth import generate_dataset
from blnm.train import predict


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["generate", "--n", "6", "--dt-ms", "50", "--seed", "1",
                 "--out", str(root / "data")]) == 0
    return root


def _train(root, name="m.json", iters="5", seed="0"):
    return main(["train", "--data", str(root / "data"), "--layers", "2", "--neurons", "6",
                 "--states", "10", "--level", "1", "--iters", iters, "--seed", seed,
                 "--out-model", str(root / name)])


class TestCountParams:
    def test_reference_spec(self, capsys):
        assert main(["count-params", "--layers", "7", "--neurons", "19", "--states", "10",
                     "--level", "2"]) == 0
        assert capsys.readouterr().out.strip() == "2398"

    def test_dense_baseline(self, capsys):
        assert main(["count-params", "--level", "0", "--states", "9"]) == 0
        assert capsys.readouterr().out.strip() == "2631"

    def test_invalid_spec(self, capsys):
        assert main(["count-params", "--level", "9"]) == 2
        assert "error" in capsys.readouterr().err


class TestGenerate:
    def test_full_sized_dataset(self, tmp_path, capsys):
        assert main(["generate", "--n", "200", "--dt-ms", "5", "--out", str(tmp_path / "d")]) == 0
        ds = load_dataset(tmp_path / "d")
        assert ds.signals.shape == (200, 121, 9)
        assert "200 samples" in capsys.readouterr().out

    def test_zero_samples(self, tmp_path):
        assert main(["generate", "--n", "0", "--out", str(tmp_path / "d")]) == 2

    def test_same_seed_identical_files(self, tmp_path):
        for name in ("a", "b"):
            assert main(["generate", "--n", "3", "--dt-ms", "100", "--seed", "4",
                         "--out", str(tmp_path / name)]) == 0
        for f in (tmp_path / "a").rglob("*"):
            if f.is_file():
                assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BLNM_SEED", "4")
        main(["generate", "--n", "2", "--dt-ms", "100", "--out", str(tmp_path / "e")])
        main(["generate", "--n", "2", "--dt-ms", "100", "--seed", "4", "--out", str(tmp_path / "f")])
        assert load_dataset(tmp_path / "e") == load_dataset(tmp_path / "f")


class TestTrain:
    def test_report_within_budget(self, small_data, capsys):
        assert _train(small_data, iters="7") == 0
        rep = json.loads((small_data / "m.report.json").read_text())
        assert rep["iterations_used"] <= 7
        assert len(rep["loss_history"]) == rep["iterations_used"]
        assert rep["architecture"]["n_layers"] == 2
        assert "train_mse" in capsys.readouterr().out

    def test_byte_identical_models(self, small_data):
        assert _train(small_data, "x.json") == 0 and _train(small_data, "y.json") == 0
        assert (small_data / "x.json").read_bytes() == (small_data / "y.json").read_bytes()

    def test_test_data_prints_mse(self, small_data, capsys):
        assert main(["train", "--data", str(small_data / "data"), "--test-data",
                     str(small_data / "data"), "--layers", "1", "--neurons", "4", "--states", "9",
                     "--level", "1", "--iters", "2", "--out-model", str(small_data / "t.json")]) == 0
        assert "test_mse" in capsys.readouterr().out

    def test_missing_dataset(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--iters", "1"]) == 2

    def test_reference_architecture_flags(self, small_data):
        assert main(["train", "--data", str(small_data / "data"), "--layers", "7",
                     "--neurons", "19", "--states", "10", "--level", "2", "--iters", "1",
                     "--out-model", str(small_data / "p.json")]) == 0
        w, norm = load_model(small_data / "p.json")
        assert w.flat.size == 2398 and norm is not None


class TestTune:
    def test_report_lists_every_fold(self, small_data):
        out = small_data / "tune.json"
        assert main(["tune", "--data", str(small_data / "data"), "--configs", "3", "--k", "2",
                     "--iters", "2", "--out-report", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert sum(len(c["fold_losses"]) for c in doc["configs"]) == 3 * 2

    def test_k_one(self, small_data):
        assert main(["tune", "--data", str(small_data / "data"), "--k", "1"]) == 2

    def test_byte_identical_reports(self, small_data):
        paths = [small_data / "t1.json", small_data / "t2.json"]
        for p in paths:
            assert main(["tune", "--data", str(small_data / "data"), "--configs", "2", "--k", "2",
                         "--iters", "2", "--seed", "5", "--out-report", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestEval:
    def test_row_per_step(self, small_data, capsys):
        _train(small_data)
        capsys.readouterr()
        assert main(["eval", "--model", str(small_data / "m.json"), "--data",
                     str(small_data / "data"), "--dt-ms", "10", "50", "100"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 1 + 3
        assert lines[0].split() == ["dt_ms", "mse"]

    def test_step_beyond_horizon(self, small_data):
        _train(small_data)
        assert main(["eval", "--model", str(small_data / "m.json"), "--data",
                     str(small_data / "data"), "--dt-ms", "700"]) == 2

    def test_perfect_model(self, tmp_path, capsys):
        spec = ArchitectureSpec(7, 2, 6, 9, 9, 1)
        w = build(spec, 3)
        ds = generate_dataset(3, 100.0, seed=0)
        norm = NormalizationInfo.from_dataset(ds)
        ds.signals = np.stack([predict(w, norm, p, ds.times) for p in ds.params])
        ds.generator = None
        save_dataset(ds, tmp_path / "d")
        save_model(tmp_path / "m.json", w, norm)
        assert main(["eval", "--model", str(tmp_path / "m.json"), "--data", str(tmp_path / "d"),
                     "--dt-ms", "100", "200"]) == 0
        mses = [float(l.split()[1]) for l in capsys.readouterr().out.strip().splitlines()[1:]]
        assert mses == [0.0, 0.0]


class TestEstimate:
    def test_truth_prints_errors_and_is_deterministic(self, small_data, capsys):
        _train(small_data)
        reports = [small_data / "e1.json", small_data / "e2.json"]
        for rp in reports:
            capsys.readouterr()
            assert main(["estimate", "--model", str(small_data / "m.json"), "--observation",
                         str(small_data / "data"), "--sample", "2", "--truth", "--seed", "3",
                         "--de-generations", "5", "--out-report", str(rp)]) == 0
        out = capsys.readouterr().out
        assert "abs_error" in out
        a, b = (json.loads(p.read_text()) for p in reports)
        assert a["theta_hat"] == b["theta_hat"]
        assert len(a["abs_error"]) == 7

    def test_csv_observation_channel_mismatch(self, small_data, tmp_path):
        _train(small_data)
        csv = tmp_path / "obs.csv"
        csv.write_text("t_ms,a,b\n0,1,2\n50,1,2\n")
        assert main(["estimate", "--model", str(small_data / "m.json"),
                     "--observation", str(csv)]) == 2

    def test_restarts_keep_best(self, small_data, tmp_path):
        _train(small_data)
        one, three = tmp_path / "1.json", tmp_path / "3.json"
        common = ["estimate", "--model", str(small_data / "m.json"), "--observation",
                  str(small_data / "data"), "--de-generations", "3", "--seed", "0"]
        assert main(common + ["--out-report", str(one)]) == 0
        assert main(common + ["--restarts", "3", "--out-report", str(three)]) == 0
        assert (json.loads(three.read_text())["best_loss"]
                <= json.loads(one.read_text())["best_loss"])


class TestRunConfig:
    def test_unknown_key(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"train": {"max_iter": 3}}))
        with pytest.raises(ValidationError, match="max_iter"):
            load_run_config(p)

    def test_flags_override_config(self, small_data, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"train": {"max_iters": 50}, "architecture": {"n_layers": 1}}))
        out = tmp_path / "m.json"
        assert main(["--config", str(p), "train", "--data", str(small_data / "data"),
                     "--neurons", "4", "--states", "9", "--level", "1", "--iters", "2",
                     "--out-model", str(out)]) == 0
        rep = json.loads((tmp_path / "m.report.json").read_text())
        assert rep["config"]["max_iters"] == 2
        assert rep["architecture"]["n_layers"] == 1

    def test_unknown_key_exit_code(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"bogus": 1}))
        assert main(["--config", str(p), "count-params"]) == 2
