import dataclasses

import pytest

from cellmaps.cli import main
from cellmaps.config import PipelineConfig, load_config, save_config

CONFIG_TEXT = """\
[io]
root = {root}

[splits]
seed = 7
trials = 2
n_test_slides = 6
val_fraction = 0.1
k = 2

[svm]
epochs = 40
seed = 7

[synth]
per_class = 2
base_seed = 7
extent = 1024
"""


@pytest.fixture()
def run(tmp_path):
    """A tiny end-to-end run directory driven through the real CLI."""
    root = tmp_path / "run"
    config = tmp_path / "pipeline.ini"
    config.write_text(CONFIG_TEXT.format(root=root))

    def cli(*argv):
        return main(["--config", str(config), *map(str, argv)])

    return root, cli


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = PipelineConfig()
        path = tmp_path / "cfg.ini"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_round_trip_non_defaults(self, tmp_path):
        cfg = dataclasses.replace(
            PipelineConfig(), root="elsewhere", split_seed=99, val_fraction=0.25
        )
        path = tmp_path / "cfg.ini"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_missing_file_is_config_error(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.ini"), "report"]) == 3

    def test_bad_value_is_config_error(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[raster]\ndisk_radius = many\n")
        assert main(["--config", str(path), "report"]) == 3


class TestPipeline:
    def test_full_chain(self, run, capsys):
        root, cli = run
        assert cli("synth", "--classes", "6") == 0
        assert (root / "manifest.csv").exists()
        assert (root / "slides.csv").exists()
        assert len(list((root / "slides").glob("*.json"))) == 12

        assert cli("ingest") == 0
        assert len(list((root / "records").glob("*.csv"))) == 12

        assert cli("rasterize") == 0
        assert len(list((root / "maps").glob("*.png"))) == 12

        assert cli("tile") == 0
        assert len(list((root / "tiles").glob("*.png"))) == 12
        assert (root / "tiles.csv").exists()

        assert cli("featurize") == 0
        assert (root / "features.csv").exists()

        assert cli("split", "--policy", "wsi", "--trials", "2", "--test-slides", "6") == 0
        assert cli("split", "--policy", "kfold", "--trials", "1") == 0
        wsi_plan = root / "plans" / "plan_wsi_t0.csv"
        kfold_plan = root / "plans" / "plan_kfold_t0.csv"
        assert wsi_plan.exists() and (root / "plans" / "plan_wsi_t1.csv").exists()
        assert kfold_plan.exists()

        assert cli("train-svm", "--plan", wsi_plan) == 0
        wsi_scores = root / "scores" / "svm_plan_wsi_t0.csv"
        assert wsi_scores.exists()
        assert cli("train-svm", "--plan", kfold_plan) == 0
        fold_scores = root / "scores" / "svm_plan_kfold_t0_f0.csv"
        assert fold_scores.exists()

        assert cli("evaluate", "--plan", wsi_plan, "--scores", wsi_scores) == 0
        assert cli("evaluate", "--plan", kfold_plan, "--scores", fold_scores, "--part", "scored") == 0
        assert (root / "evals" / "eval_svm_plan_wsi_t0.csv").exists()

        assert cli("audit-splits", wsi_plan, kfold_plan) == 0
        out = capsys.readouterr().out
        assert "0 leaked" in out

        assert cli("export-dataset", "--plan", wsi_plan, "--out", root / "dataset") == 0
        assert (root / "dataset" / "manifest.csv").exists()
        assert len(list((root / "dataset" / "tiles").glob("*.png"))) == 12

        assert cli("report") == 0
        report = (root / "report.csv").read_text()
        assert report.startswith("protocol,n_trials")
        assert "wsi" in report and "kfold" in report

    def test_synth_deterministic_across_runs(self, run, tmp_path):
        root, cli = run
        assert cli("synth") == 0
        other = tmp_path / "other"
        assert cli("synth", "--root", other) == 0
        assert (root / "manifest.csv").read_bytes() == (other / "manifest.csv").read_bytes()
        first = sorted((root / "slides").glob("*.json"))[0]
        assert first.read_bytes() == (other / "slides" / first.name).read_bytes()


class TestExitCodes:
    def test_usage_error_is_2(self):
        assert main(["no-such-command"]) == 2

    def test_wrong_class_count_is_config_error(self, run):
        _, cli = run
        assert cli("synth", "--classes", "5") == 3

    def test_missing_artifact_is_data_error(self, run):
        _, cli = run
        assert cli("ingest") == 4  # no slides.csv yet
        assert cli("train-svm", "--plan", "missing_plan.csv") == 4

    def test_infeasible_split_is_5(self, run, capsys):
        root, cli = run
        assert cli("synth") == 0
        assert cli("split", "--policy", "wsi", "--trials", "1", "--test-slides", "12") == 5
        err = capsys.readouterr().err
        assert '"exit_code": 5' in err

    def test_error_line_is_machine_parsable_json(self, run, capsys):
        import json

        _, cli = run
        assert cli("tile") == 4
        err = capsys.readouterr().err.strip()
        payload = json.loads(err)
        assert payload["exit_code"] == 4


class TestSeedOverrides:
    def test_env_seed_changes_plans_and_flag_wins(self, run, tmp_path, monkeypatch, capsys):
        root, cli = run
        assert cli("synth") == 0
        assert cli("split", "--policy", "kfold", "--trials", "1") == 0
        base = (root / "plans" / "plan_kfold_t0.csv").read_bytes()

        monkeypatch.setenv("CELLMAP_SEED", "1234")
        assert cli("split", "--policy", "kfold", "--trials", "1") == 0
        env_plan = (root / "plans" / "plan_kfold_t0.csv").read_bytes()
        assert env_plan != base

        assert cli("split", "--policy", "kfold", "--trials", "1", "--seed", "7") == 0
        flag_plan = (root / "plans" / "plan_kfold_t0.csv").read_bytes()
        assert flag_plan == base

    def test_bad_env_seed_is_config_error(self, run, monkeypatch):
        _, cli = run
        monkeypatch.setenv("CELLMAP_SEED", "not-a-number")
        assert cli("report") == 3
