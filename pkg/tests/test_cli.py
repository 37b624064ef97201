"""Command-line surface: extraction, training, evaluation, CV, reports.

Commands are exercised through ``kcov.cli.main`` with explicit argv, so
exit codes and primary outputs are checked exactly as a shell user would
see them.
"""

import json

import numpy as np
import pytest

from conftest import make_oscillation_trials
from kcov.cli import main
from kcov.covariance import ExpDotKernel, LinearKernel, load_descriptors
from kcov.datasets import write_canonical
from kcov.reports import read_report


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Canonical trial file + profile for a small separable corpus."""
    root = tmp_path_factory.mktemp("data")
    trials = make_oscillation_trials(
        seed=7, joints=4, frames=24, subjects=range(1, 7), per_class=2
    )
    data = root / "trials.jsonl"
    write_canonical(data, trials, dataset="osc")
    profile = root / "profile.json"
    profile.write_text(
        json.dumps(
            {
                "name": "osc",
                "joint_count": 4,
                "root_joint_index": 0,
                "split_rule": {"kind": "odd_even_subjects"},
            }
        )
    )
    return data, profile


def extract(dataset, out, *extra):
    data, profile = dataset
    return main(
        [
            "extract",
            "--input", str(data),
            "--format", "canonical",
            "--dataset-profile", str(profile),
            "--kernel", "expdot",
            "--sigma", "2",
            "--out", str(out),
            *extra,
        ]
    )


class TestExtract:
    def test_writes_descriptors_and_meta(self, dataset, tmp_path, capsys):
        out = tmp_path / "d.kcov"
        assert extract(dataset, out) == 0
        printed = capsys.readouterr().out
        assert "train 18" in printed and "test 18" in printed
        descs = load_descriptors(out)
        assert len(descs) == 36
        assert all(d.kernel == ExpDotKernel(2.0) for d in descs)
        meta = read_report(str(out) + ".meta")
        assert meta["count.train"] == "18"
        assert meta["config.sigma"] == "2.0"

    def test_rerun_byte_identical(self, dataset, tmp_path):
        out1, out2 = tmp_path / "a.kcov", tmp_path / "b.kcov"
        assert extract(dataset, out1) == 0
        assert extract(dataset, out2) == 0
        assert out1.read_bytes() == out2.read_bytes()
        meta1 = (tmp_path / "a.kcov.meta").read_text()
        meta2 = (tmp_path / "b.kcov.meta").read_text()
        assert meta1 == meta2

    def test_kernel_changes_payload_not_ids(self, dataset, tmp_path):
        data, profile = dataset
        out_a, out_b = tmp_path / "a.kcov", tmp_path / "b.kcov"
        assert extract(dataset, out_a) == 0
        assert main(
            [
                "extract",
                "--input", str(data),
                "--format", "canonical",
                "--dataset-profile", str(profile),
                "--kernel", "linear",
                "--out", str(out_b),
            ]
        ) == 0
        a, b = load_descriptors(out_a), load_descriptors(out_b)
        assert [d.trial_id for d in a] == [d.trial_id for d in b]
        assert a[0].kernel != b[0].kernel
        assert out_a.read_bytes() != out_b.read_bytes()

    def test_threads_match_serial(self, dataset, tmp_path):
        out1, out2 = tmp_path / "s.kcov", tmp_path / "p.kcov"
        assert extract(dataset, out1) == 0
        assert extract(dataset, out2, "--threads", "4") == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_input_is_config_error(self, dataset, tmp_path):
        _, profile = dataset
        rc = main(
            ["extract", "--dataset-profile", str(profile),
             "--out", str(tmp_path / "x.kcov")]
        )
        assert rc == 2

    def test_nonexistent_input_is_dataset_error(self, dataset, tmp_path):
        _, profile = dataset
        rc = main(
            [
                "extract",
                "--input", str(tmp_path / "nope.jsonl"),
                "--dataset-profile", str(profile),
                "--out", str(tmp_path / "x.kcov"),
            ]
        )
        assert rc == 3

    def test_bad_feature_list(self, dataset, tmp_path):
        out = tmp_path / "x.kcov"
        assert extract(dataset, out, "--features", "pos,warp") == 2
        assert extract(dataset, out, "--features", "vel,acc") == 2

    def test_no_partial_output_on_failure(self, dataset, tmp_path):
        out = tmp_path / "x.kcov"
        assert extract(dataset, out, "--features", "pos,warp") == 2
        assert not out.exists()


@pytest.fixture(scope="module")
def artifacts(dataset, tmp_path_factory):
    root = tmp_path_factory.mktemp("artifacts")
    desc = root / "d.kcov"
    assert extract(dataset, desc) == 0
    model = root / "m.ksvm"
    rc = main(
        ["train", "--input", str(desc), "--gamma", "0.01",
         "--svm-c", "10", "--out", str(model)]
    )
    assert rc == 0
    return desc, model


class TestTrainEval:
    def test_eval_accuracy_and_report(self, artifacts, tmp_path, capsys):
        desc, model = artifacts
        report = tmp_path / "eval.txt"
        rc = main(["eval", str(model), "--input", str(desc), "--out", str(report)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "test accuracy" in out
        fields = read_report(report)
        assert fields["report"] == "eval"
        assert float(fields["accuracy"]) >= 0.95
        assert fields["confusion.labels"] == "1,2,3"
        assert (tmp_path / "eval.confusion.png").exists()

    def test_eval_self_consistency_on_train(self, artifacts):
        # the model separates its own training split perfectly; checked
        # through the library since the CLI always evaluates the test side
        from kcov.svm import load_model, svm_predict, gram_rows_between

        desc, model_path = artifacts
        model = load_model(model_path)
        descs = {d.trial_id: d for d in load_descriptors(desc)}
        train = [descs[t] for t in model.training_ids]
        rows = gram_rows_between(train, train, model.gamma)
        pred = svm_predict(model, rows)
        truth = np.array([d.label for d in train])
        assert (pred == truth).all()

    def test_provenance_mismatch_sigma(self, dataset, artifacts, tmp_path):
        _, model = artifacts
        other = tmp_path / "other.kcov"
        assert extract(dataset, other, "--sigma", "4") == 0
        rc = main(["eval", str(model), "--input", str(other)])
        assert rc == 4

    def test_provenance_mismatch_gamma_flag(self, artifacts):
        desc, model = artifacts
        rc = main(["eval", str(model), "--input", str(desc), "--gamma", "9.0"])
        assert rc == 4

    def test_eval_missing_model(self, artifacts, tmp_path):
        desc, _ = artifacts
        rc = main(["eval", str(tmp_path / "none.ksvm"), "--input", str(desc)])
        assert rc == 3

    def test_train_missing_meta(self, artifacts, tmp_path):
        desc, _ = artifacts
        orphan = tmp_path / "orphan.kcov"
        orphan.write_bytes(desc.read_bytes())
        rc = main(
            ["train", "--input", str(orphan), "--out", str(tmp_path / "m.ksvm")]
        )
        assert rc == 3

    def test_model_rerun_byte_identical(self, artifacts, tmp_path):
        desc, model = artifacts
        again = tmp_path / "again.ksvm"
        rc = main(
            ["train", "--input", str(desc), "--gamma", "0.01",
             "--svm-c", "10", "--out", str(again)]
        )
        assert rc == 0
        assert again.read_bytes() == model.read_bytes()


class TestCv:
    def test_planted_optimum_selected(self, dataset, tmp_path, capsys):
        data, profile = dataset
        cfg = tmp_path / "cv.json"
        cfg.write_text(
            json.dumps(
                {"cv": {"sigma_grid": [2.0], "gamma_grid": [1e9, 0.01],
                        "c_grid": [10.0], "folds": 3}}
            )
        )
        rc = main(
            [
                "cv",
                "--config", str(cfg),
                "--input", str(data),
                "--format", "canonical",
                "--dataset-profile", str(profile),
                "--kernel", "expdot",
                "--out", str(tmp_path / "cv.txt"),
            ]
        )
        assert rc == 0
        fields = read_report(tmp_path / "cv.txt")
        assert fields["selected.gamma"] == "0.01"

    def test_single_cell_and_report(self, dataset, tmp_path, capsys):
        data, profile = dataset
        cfg = tmp_path / "cv.json"
        cfg.write_text(
            json.dumps(
                {"cv": {"sigma_grid": [2.0], "gamma_grid": [0.01],
                        "c_grid": [10.0], "folds": 3}}
            )
        )
        report = tmp_path / "cv.txt"
        rc = main(
            [
                "cv",
                "--config", str(cfg),
                "--input", str(data),
                "--format", "canonical",
                "--dataset-profile", str(profile),
                "--kernel", "expdot",
                "--out", str(report),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "selected sigma=2" in out
        fields = read_report(report)
        assert fields["selected.gamma"] == "0.01"
        assert fields["folds"] == "3"
        assert (tmp_path / "cv.grid.png").exists()


class TestGram:
    def test_report_and_figure(self, dataset, tmp_path):
        desc = tmp_path / "d.kcov"
        assert extract(dataset, desc) == 0
        report = tmp_path / "gram.txt"
        rc = main(
            ["gram", "--input", str(desc), "--gamma", "0.25", "--out", str(report)]
        )
        assert rc == 0
        fields = read_report(report)
        assert fields["report"] == "gram"
        assert int(fields["n_trials"]) == 36
        first_row = [float(v) for v in fields["row.0"].split(",")]
        assert first_row[0] == 1.0 and len(first_row) == 36
        assert (tmp_path / "gram.heatmap.png").exists()


class TestSelfcheckCommand:
    def test_passes_and_enumerates(self, capsys):
        rc = main(["selfcheck", "--seed", "0"])
        out = capsys.readouterr().out
        assert rc == 0
        lines = [l for l in out.splitlines() if l.startswith("PASS")]
        assert len(lines) >= 15

    def test_injected_failure(self, capsys):
        rc = main(["selfcheck", "--seed", "0", "--inject-failure"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "FAIL harness.injected-failure" in out


class TestBench:
    def test_quick_run(self, tmp_path, capsys):
        cfg = tmp_path / "bench.json"
        cfg.write_text(json.dumps({"bench": {"frames": 64, "runs": 3}}))
        report = tmp_path / "bench.txt"
        rc = main(
            ["bench", "--config", str(cfg), "--probes", "16", "--out", str(report)]
        )
        assert rc == 0
        fields = read_report(report)
        assert fields["report"] == "bench"
        assert float(fields["ratio"]) > 0.0
        assert (tmp_path / "bench.times.png").exists()
        assert "ratio" in capsys.readouterr().out


class TestConfigPrecedence:
    def test_flag_overrides_config(self, dataset, tmp_path):
        data, profile = dataset
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"sigma": 4.0, "kernel": "expdot"}))
        out = tmp_path / "d.kcov"
        rc = main(
            [
                "extract",
                "--config", str(cfg),
                "--input", str(data),
                "--dataset-profile", str(profile),
                "--sigma", "2",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert load_descriptors(out)[0].kernel == ExpDotKernel(2.0)

    def test_config_supplies_defaults(self, dataset, tmp_path):
        data, profile = dataset
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kernel": "linear"}))
        out = tmp_path / "d.kcov"
        rc = main(
            [
                "extract",
                "--config", str(cfg),
                "--input", str(data),
                "--dataset-profile", str(profile),
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert load_descriptors(out)[0].kernel == LinearKernel()

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"sigm": 4.0}))
        assert main(["selfcheck", "--config", str(cfg)]) == 2

    def test_env_thread_fallback(self, dataset, tmp_path, monkeypatch):
        monkeypatch.setenv("KCOV_THREADS", "3")
        out = tmp_path / "d.kcov"
        assert extract(dataset, out) == 0
        assert out.exists()
