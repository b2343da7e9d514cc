"""
Test suite for the TYolo CLI
End-to-end runs of every command on a tiny synthetic dataset.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

import cli as cli_module
from cli import EXIT_CONFIG, EXIT_RUNTIME, TYoloCLI, cli, trial_config, video_frames
from tests.conftest import tiny_config
from tyolo.augment.pipeline import Technique
from tyolo.augment.temporal import random_erasing
from tyolo.core.config import reload_config
from tyolo.models import DetectorModel
from tyolo.temporal.state import TemporalKind
from tyolo.tensor import default_dtype
from tyolo.training import save_checkpoint
from tyolo.training.checkpoint import load_model, read_checkpoint

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

TINY_TRAINING = [
    "--preset", "desk",
    "--set", "static.epochs=1",
    "--set", "static.steps_per_epoch=1",
    "--set", "static.batch_size=2",
    "--set", "static.eval_every=1",
    "--set", "temporal.epochs=1",
    "--set", "temporal.steps_per_epoch=1",
    "--set", "temporal.batch_size=1",
    "--set", "temporal.eval_every=1",
]


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    """synth-data -> train-static -> train-temporal once for the whole module"""
    base = tmp_path_factory.mktemp("cli")
    data = base / "data"
    result = invoke(
        "synth-data", "--preset", "desk", "--out", data,
        "--sequences", 2, "--test-sequences", 1, "--frames", 4, "--size", 64,
    )
    assert result.exit_code == 0, result.output
    result = invoke("train-static", *TINY_TRAINING, "--data", data, "--out", base / "static")
    assert result.exit_code == 0, result.output
    result = invoke(
        "train-temporal", *TINY_TRAINING, "--data", data, "--out", base / "temporal",
        "--static-checkpoint", base / "static" / "checkpoints" / "best.tyck",
    )
    assert result.exit_code == 0, result.output
    return base


@pytest.mark.integration
class TestCLICommands:
    """Test CLI command functionality"""

    def setup_method(self):
        self.runner = CliRunner()

    def test_cli_help(self):
        result = self.runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for verb in ("synth-data", "train-static", "train-temporal", "eval", "augment-search", "benchmark", "detect"):
            assert verb in result.output

    def test_synth_data_manifest(self, pipeline_run):
        manifest = json.loads((pipeline_run / "data" / "manifest.json").read_text())
        assert manifest["command"] == "synth-data"
        assert manifest["counts"] == {"train": 8, "test": 4}
        assert manifest["config"]["synth"]["frames"] == 4
        assert "cpu" in manifest["environment"]

    def test_training_artifacts(self, pipeline_run):
        for stage in ("static", "temporal"):
            assert (pipeline_run / stage / "checkpoints" / "best.tyck").exists()
            assert (pipeline_run / stage / "checkpoints" / "last.tyck").exists()
            assert len(pd.read_csv(pipeline_run / stage / "logs" / "train.csv")) == 1
        manifest = json.loads((pipeline_run / "temporal" / "manifest.json").read_text())
        assert manifest["static_checkpoint"].endswith("best.tyck")

    def test_eval_checkpoint(self, pipeline_run, tmp_path):
        result = invoke(
            "eval", "--preset", "desk", "--data", pipeline_run / "data", "--out", tmp_path,
            "--checkpoint", pipeline_run / "temporal" / "checkpoints" / "best.tyck",
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "reports" / "eval.json").read_text())
        assert report["num_images"] == 4
        assert report["map50_95"] <= report["map50"]
        assert (tmp_path / "reports" / "pr_curves.csv").exists()

    def test_eval_perfect_predictions(self, pipeline_run, tmp_path):
        lines = []
        test_dir = pipeline_run / "data" / "test"
        for label_file in sorted(test_dir.rglob("*.txt")):
            for row in np.loadtxt(label_file, ndmin=2):
                lines.append(json.dumps({
                    "video": label_file.parent.name, "frame": int(label_file.stem), "class": int(row[0]),
                    "cx": row[1] * 64, "cy": row[2] * 64, "w": row[3] * 64, "h": row[4] * 64, "conf": 0.9,
                }))
        predictions = tmp_path / "predictions.jsonl"
        predictions.write_text("\n".join(lines) + "\n")
        result = invoke(
            "eval", "--preset", "desk", "--data", pipeline_run / "data", "--out", tmp_path / "eval",
            "--predictions", predictions,
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "eval" / "reports" / "eval.json").read_text())
        assert report["map50"] == pytest.approx(1.0)
        assert report["map50_95"] == pytest.approx(1.0)

    def test_eval_needs_one_source(self, pipeline_run, tmp_path):
        result = invoke("eval", "--preset", "desk", "--data", pipeline_run / "data", "--out", tmp_path)
        assert result.exit_code == EXIT_CONFIG

    def test_detect_streams_frames(self, pipeline_run, tmp_path):
        result = invoke(
            "detect", "--preset", "desk", "--out", tmp_path, "--conf", 0.0, "--with-latency",
            "--checkpoint", pipeline_run / "temporal" / "checkpoints" / "best.tyck",
            "--video-dir", pipeline_run / "data" / "test",
        )
        assert result.exit_code == 0, result.output
        records = [json.loads(line) for line in (tmp_path / "reports" / "detections.jsonl").read_text().splitlines()]
        assert records and all(r["video"] == "seq_000" for r in records)
        assert all("latency_ms" in r for r in records)
        assert {r["frame"] for r in records} <= {0, 1, 2, 3}
        assert len(list((tmp_path / "frames" / "seq_000").glob("*.png"))) == 4

    def test_benchmark_checkpoint(self, pipeline_run, tmp_path):
        result = invoke(
            "benchmark", "--preset", "desk", "--out", tmp_path,
            "--checkpoint", pipeline_run / "static" / "checkpoints" / "best.tyck",
        )
        assert result.exit_code == 0, result.output
        payload = json.loads((tmp_path / "reports" / "benchmark.json").read_text())
        assert payload["results"][0]["label"] == "small-none"
        assert "cpu" in payload["environment"]
        assert (tmp_path / "reports" / "benchmark.csv").exists()

    def test_augment_search_replay(self, tmp_path):
        result = invoke("augment-search", "--preset", "desk", "--out", tmp_path, "--replay", CONFIGS / "augment_replay.yaml")
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "reports" / "augment_search.json").read_text())
        assert summary["best_trial"] == "N"
        assert summary["best_score"] == 56.1
        assert len(pd.read_csv(tmp_path / "reports" / "augment_search.csv")) == 15


class TestCLIErrors:
    """Exit statuses and error reports"""

    @pytest.fixture
    def checkpoint(self, tmp_path):
        return save_checkpoint(tmp_path / "m.tyck", DetectorModel(tiny_config(TemporalKind.QRNN)), epoch=1).path

    def test_bad_override(self, tmp_path):
        result = invoke("synth-data", "--out", tmp_path, "--set", "synth.size=50")
        assert result.exit_code == EXIT_CONFIG
        error = json.loads((tmp_path / "reports" / "error.json").read_text())
        assert error["error"] == "ConfigError"
        assert error["details"]["fields"][0]["field"] == "synth.size"

    def test_unknown_preset(self, tmp_path):
        assert invoke("synth-data", "--out", tmp_path, "--preset", "huge").exit_code == EXIT_CONFIG

    def test_class_count_mismatch(self, tmp_path):
        result = invoke("synth-data", "--out", tmp_path, "--set", "data.classes=[a, b]")
        assert result.exit_code == EXIT_CONFIG

    def test_missing_dataset(self, tmp_path):
        result = invoke("train-static", "--preset", "desk", "--data", tmp_path / "absent", "--out", tmp_path / "run")
        assert result.exit_code == EXIT_RUNTIME
        error = json.loads((tmp_path / "run" / "reports" / "error.json").read_text())
        assert error["error"] == "DatasetValidationError"
        assert error["details"]["issues"]

    def test_corrupt_checkpoint(self, tmp_path):
        bad = tmp_path / "bad.tyck"
        bad.write_bytes(b"not a checkpoint at all")
        video = tmp_path / "video"
        video.mkdir()
        result = invoke("detect", "--preset", "desk", "--out", tmp_path / "run", "--checkpoint", bad, "--video-dir", video)
        assert result.exit_code == EXIT_RUNTIME
        assert json.loads((tmp_path / "run" / "reports" / "error.json").read_text())["error"] == "CheckpointError"

    def test_detect_empty_directory(self, checkpoint, tmp_path):
        video = tmp_path / "video"
        video.mkdir()
        result = invoke("detect", "--preset", "desk", "--out", tmp_path / "run", "--checkpoint", checkpoint, "--video-dir", video)
        assert result.exit_code == 0, result.output
        assert (tmp_path / "run" / "reports" / "detections.jsonl").read_text() == ""

    def test_temporal_stage_needs_temporal_cells(self, checkpoint, tmp_path):
        result = invoke(
            "train-temporal", "--preset", "desk", "--set", "detector.temporal_kind=none",
            "--data", tmp_path, "--out", tmp_path / "run", "--static-checkpoint", checkpoint,
        )
        assert result.exit_code == EXIT_CONFIG


class TestTYoloCLI:
    """Test main CLI application class"""

    def test_detector_for_each_stage(self, tmp_path):
        app = TYoloCLI("train-temporal", tmp_path)
        app.resolve(None, ["temporal.seq_len=3"], "desk")
        assert app.detector(temporal=False).temporal_kind == TemporalKind.NONE
        assert app.detector(temporal=True).seq_len == 3

    def test_trial_config_extends_temporal_stage(self, tmp_path):
        app = TYoloCLI("augment-search", tmp_path)
        run = app.resolve(None, ["search.epochs=3", "temporal.seq_len=4"], "desk")
        config = trial_config(run, ["r_erasing", "t_mixup"])
        assert [spec.technique for spec in config.augment] == [Technique.STATIC, Technique.ERASING, Technique.MIXUP]
        assert config.epochs == config.eval_every == 3
        assert config.seq_len == 4
        assert config.passthrough_init and config.freeze_policy == run.temporal.freeze_policy

    def test_video_frames_layouts(self, tmp_path):
        for name in ("b", "a"):
            (tmp_path / "videos" / name).mkdir(parents=True)
            (tmp_path / "videos" / name / "1.png").write_bytes(b"")
        (tmp_path / "videos" / "a" / "10.png").write_bytes(b"")
        (tmp_path / "videos" / "a" / "2.png").write_bytes(b"")
        videos = video_frames(tmp_path / "videos")
        assert [name for name, _ in videos] == ["a", "b"]
        assert [p.name for p in videos[0][1]] == ["1.png", "2.png", "10.png"]
        assert video_frames(tmp_path / "videos" / "b")[0][0] == "b"


@pytest.fixture
def settings_env(monkeypatch):
    """Set TYOLO_* variables for one test and reload the process settings around it"""

    def apply(**env):
        for key, value in env.items():
            monkeypatch.setenv(key, str(value))
        return reload_config()

    yield apply
    monkeypatch.undo()
    reload_config()


@pytest.mark.integration
class TestAugmentSearchTrials:
    """Training trials fine-tune the temporal stage on clips"""

    def test_erasing_trial_reaches_later_frames(self, pipeline_run, tmp_path, mocker):
        erased = []

        def recording(seq, rng, *args):
            out = random_erasing(seq, rng, *args)
            erased.append((seq, out))
            return out

        mocker.patch("tyolo.augment.pipeline.random_erasing", side_effect=recording)
        temporal = mocker.spy(cli_module, "train_temporal")
        result = invoke(
            "augment-search", *TINY_TRAINING, "--out", tmp_path,
            "--set", "search.techniques=[r_erasing]", "--set", "search.epochs=1",
            "--set", "temporal.seq_len=3", "--set", "temporal.batch_size=2", "--set", "temporal.steps_per_epoch=2",
            "--data", pipeline_run / "data",
            "--static-checkpoint", pipeline_run / "static" / "checkpoints" / "best.tyck",
        )
        assert result.exit_code == 0, result.output
        assert temporal.call_count == 2
        assert all(call.args[0].config.is_temporal for call in temporal.call_args_list)

        assert erased and all(len(before) == 3 for before, _ in erased)
        changed = 0
        for before, after in erased:
            np.testing.assert_array_equal(after.frames[0], before.frames[0])
            changed += sum(not np.array_equal(after.frames[t], before.frames[t]) for t in range(1, 3))
        assert changed > 0

        summary = json.loads((tmp_path / "reports" / "augment_search.json").read_text())
        assert len(pd.read_csv(tmp_path / "reports" / "augment_search.csv")) == 2
        assert "best_trial" in summary

    def test_training_trials_need_static_checkpoint(self, pipeline_run, tmp_path):
        result = invoke("augment-search", "--preset", "desk", "--out", tmp_path, "--data", pipeline_run / "data")
        assert result.exit_code == EXIT_CONFIG

    def test_training_trials_need_clips(self, pipeline_run, tmp_path):
        result = invoke(
            "augment-search", "--preset", "desk", "--out", tmp_path, "--data", pipeline_run / "data",
            "--set", "temporal.seq_len=1",
            "--static-checkpoint", pipeline_run / "static" / "checkpoints" / "best.tyck",
        )
        assert result.exit_code == EXIT_CONFIG
        assert "seq_len" in json.loads((tmp_path / "reports" / "error.json").read_text())["message"]


class TestProcessSettings:
    """TYOLO_* settings applied by the CLI"""

    def test_output_root_default(self, settings_env, tmp_path):
        settings_env(TYOLO_OUTPUT_ROOT=tmp_path / "runs")
        result = invoke(
            "synth-data", "--preset", "desk", "--sequences", 1, "--test-sequences", 1, "--frames", 2, "--size", 64
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "runs" / "synth-data" / "manifest.json").exists()
        assert (tmp_path / "runs" / "synth-data" / "train").is_dir()

    @pytest.mark.integration
    def test_double_precision_weights(self, settings_env, pipeline_run, tmp_path):
        settings_env(TYOLO_PRECISION="double")
        with default_dtype(np.float32):
            result = invoke("train-static", *TINY_TRAINING, "--data", pipeline_run / "data", "--out", tmp_path)
        assert result.exit_code == 0, result.output
        stored = read_checkpoint(tmp_path / "checkpoints" / "best.tyck")
        assert stored.dtype == "float64"
        assert load_model(tmp_path / "checkpoints" / "best.tyck").dtype == np.float64
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["environment"]["precision"] == "float64"
