import json
from pathlib import Path

import numpy as np
import pytest

from gbmpatch.cli import format_report, main
from gbmpatch.data import CLASS_CODES, DatasetManifest, generate_synthetic
from gbmpatch.metrics import METRIC_NAMES

SMALL_NET = ["--image-size", "28", "--tile-size", "14", "--dim", "8",
             "--depth", "1", "--heads", "2", "--registers", "2",
             "--mlp-ratio", "2", "--bottleneck", "4"]
QUICK_TRAIN = ["--folds", "3", "--epochs", "2", "--warmup-epochs", "1",
               "--batch-size", "16", "--lr-max", "1e-3", "--lr-min", "1e-4"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    generate_synthetic(root, [3] * 9, seed=0, size=28)
    return root


@pytest.fixture(scope="module")
def finished_run(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    code = main(["cv", "--data", str(dataset), "--out", str(out), "--seed",
                 "1"] + SMALL_NET + QUICK_TRAIN)
    assert code == 0
    runs = sorted(p for p in out.iterdir() if p.name.startswith("run-"))
    assert len(runs) == 1
    return out, runs[0]


class TestGenData:
    def test_writes_dataset(self, tmp_path, capsys):
        out = tmp_path / "d"
        code = main(["gen-data", "--out", str(out), "--counts",
                     "2,2,2,2,2,2,2,2,2", "--seed", "3", "--size", "16"])
        assert code == 0
        manifest = DatasetManifest.load(out)
        assert len(manifest.entries) == 18
        assert "18 patches" in capsys.readouterr().out

    def test_refuses_nonempty_without_force(self, tmp_path, capsys):
        out = tmp_path / "d"
        out.mkdir()
        (out / "junk.txt").write_text("x")
        code = main(["gen-data", "--out", str(out), "--counts",
                     "1,1,1,1,1,1,1,1,1", "--size", "16"])
        assert code == 2
        assert "--force" in capsys.readouterr().err
        code = main(["gen-data", "--out", str(out), "--counts",
                     "1,1,1,1,1,1,1,1,1", "--size", "16", "--force"])
        assert code == 0

    def test_bad_counts_string_is_usage_error(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "x"),
                     "--counts", "1,2,banana"]) == 2

    def test_wrong_count_arity_is_data_error(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "y"),
                     "--counts", "1,2,3", "--size", "16"]) == 3


class TestCv:
    def test_artifacts_and_manifest(self, finished_run):
        out, run = finished_run
        for name in ("metrics.csv", "confusion.txt", "report.txt",
                     "model.ckpt", "run.json"):
            assert (run / name).is_file(), name

        payload = json.loads((run / "run.json").read_text())
        assert payload["settings"]["dim"] == 8
        assert payload["settings"]["folds"] == 3
        assert len(payload["per_class"]) == 9
        assert len(payload["folds"]) == 3
        assert np.asarray(payload["confusion"]).shape == (9, 9)
        assert sum(sum(row) for row in payload["confusion"]) == 27
        assert set(payload["fold_average"]) == set(METRIC_NAMES)

    def test_csv_column_order(self, finished_run):
        _, run = finished_run
        header = (run / "metrics.csv").read_text().splitlines()[0]
        assert header == "class,accuracy,precision,recall,specificity,f1,mcc"
        lines = (run / "metrics.csv").read_text().splitlines()
        assert len(lines) == 1 + 9 + 1
        assert lines[1].startswith("CT,")
        assert lines[-1].startswith("micro,")

    def test_report_table_shape(self, finished_run):
        _, run = finished_run
        text = (run / "report.txt").read_text()
        lines = text.splitlines()
        assert lines[0].split() == ["metric"] + list(CLASS_CODES) + ["Average"]
        mcc_row = [l for l in lines if l.startswith("mcc")][0]
        assert mcc_row.count("--") == 9

    def test_latest_symlink(self, finished_run):
        out, run = finished_run
        link = out / "latest"
        assert link.is_symlink()
        assert (link / "run.json").is_file()
        assert link.resolve() == run.resolve()

    def test_missing_data_dir_is_data_error(self, tmp_path):
        assert main(["cv", "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "runs")]) == 3

    def test_stratification_failure_is_data_error(self, dataset, tmp_path,
                                                  capsys):
        # 3 samples per class cannot fill the default 5 folds
        code = main(["cv", "--data", str(dataset),
                     "--out", str(tmp_path / "runs")] + SMALL_NET)
        assert code == 3
        assert "fewer than" in capsys.readouterr().err

    def test_bad_flag_value_is_usage_error(self, dataset, tmp_path):
        code = main(["cv", "--data", str(dataset),
                     "--out", str(tmp_path / "runs"),
                     "--folds", "1"] + SMALL_NET)
        assert code == 2


class TestConfigFile:
    def test_config_applies_and_flags_override(self, dataset, tmp_path):
        cfg = {key.replace("-", "_"): v for key, v in
               (("image_size", 28), ("tile_size", 14), ("dim", 8),
                ("depth", 1), ("heads", 2), ("registers", 2),
                ("mlp_ratio", 2), ("bottleneck", 4), ("folds", 3),
                ("epochs", 1), ("warmup_epochs", 0), ("batch_size", 16),
                ("lr_max", 1e-3), ("lr_min", 1e-4))}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        out = tmp_path / "runs"
        code = main(["cv", "--data", str(dataset), "--out", str(out),
                     "--config", str(path), "--epochs", "2"])
        assert code == 0
        run = json.loads((out / "latest" / "run.json").read_text())
        assert run["settings"]["epochs"] == 2          # flag wins
        assert run["settings"]["warmup_epochs"] == 0   # config wins
        assert run["settings"]["batch_size"] == 16

    def test_unknown_key_rejected(self, dataset, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"learningrate": 1e-3}))
        code = main(["cv", "--data", str(dataset),
                     "--out", str(tmp_path / "runs"), "--config", str(path)])
        assert code == 2
        assert "learningrate" in capsys.readouterr().err

    def test_missing_config_rejected(self, dataset, tmp_path):
        assert main(["cv", "--data", str(dataset),
                     "--out", str(tmp_path / "runs"),
                     "--config", str(tmp_path / "nope.json")]) == 2


class TestEval:
    def test_checkpoint_on_dataset(self, dataset, finished_run, tmp_path,
                                   capsys):
        _, run = finished_run
        csv_path = tmp_path / "m.csv"
        code = main(["eval", "--checkpoint", str(run / "model.ckpt"),
                     "--data", str(dataset), "--csv", str(csv_path),
                     "--confusion"])
        assert code == 0
        out = capsys.readouterr().out
        assert "Average" in out
        header = csv_path.read_text().splitlines()[0]
        assert header == "class,accuracy,precision,recall,specificity,f1,mcc"

    def test_garbage_checkpoint_is_data_error(self, dataset, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"nonsense")
        assert main(["eval", "--checkpoint", str(bad),
                     "--data", str(dataset)]) == 3


class TestReport:
    def test_rerenders_finished_run(self, finished_run, capsys):
        _, run = finished_run
        assert main(["report", "--run", str(run)]) == 0
        out = capsys.readouterr().out
        assert "Average" in out
        assert "fold-average micro metrics" in out

    def test_works_through_latest_symlink(self, finished_run, capsys):
        out_dir, _ = finished_run
        assert main(["report", "--run", str(out_dir / "latest")]) == 0

    def test_unfinished_run_is_data_error(self, tmp_path):
        assert main(["report", "--run", str(tmp_path)]) == 3


class TestFormatReport:
    def test_layout(self):
        per_class = [{m: 0.5 for m in METRIC_NAMES} for _ in range(9)]
        micro = {m: 0.25 for m in METRIC_NAMES}
        text = format_report(per_class, micro)
        lines = text.splitlines()
        assert len(lines) == 2 + len(METRIC_NAMES)
        assert lines[2].startswith("accuracy")
        assert lines[2].rstrip().endswith("0.2500")
        mcc_row = lines[2 + METRIC_NAMES.index("mcc")]
        assert mcc_row.count("--") == 9
        assert mcc_row.rstrip().endswith("0.2500")

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as info:
            main(["definitely-not-a-command"])
        assert info.value.code == 2
