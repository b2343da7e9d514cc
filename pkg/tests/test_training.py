"""
Tests for the detection loss, optimizer, checkpoints, evaluation and both training stages.
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from tests.conftest import tiny_config
from tyolo.core.config import reload_config
from tyolo.core.errors import CheckpointError, ShapeError, TrainingDivergedError
from tyolo.data import load_dataset
from tyolo.models import DetectorModel
from tyolo.nn.module import parameter_census
from tyolo.tensor.gradcheck import grad_check
from tyolo.tensor.tensor import Tensor, default_dtype
from tyolo.temporal.state import TemporalKind
from tyolo.training import (
    SGD,
    FreezePolicy,
    LRSchedule,
    TrainConfig,
    Trainer,
    build_targets,
    detection_loss,
    evaluate_model,
    evaluate_predictions_file,
    load_model,
    load_weights,
    prepare_temporal,
    read_checkpoint,
    save_checkpoint,
    train_static,
    train_temporal,
)
from tyolo.training.evaluate import detection_records

LABELS = [np.array([[0, 0.55, 0.55, 0.25, 0.25]])]


def _logit(p):
    return np.log(p / (1 - p))


def perfect_raw(config, labels):
    """Head output whose decoded boxes, objectness and classes match every assigned target"""
    raw = []
    for scale, targets in enumerate(build_targets(labels, config)):
        grid = config.grid_sizes[scale]
        out = np.full((len(labels), 3, grid, grid, 5 + config.num_classes), -30.0)
        idx = (targets.image, targets.anchor, targets.gj, targets.gi)
        out[idx + (slice(0, 2),)] = _logit((targets.box[:, :2] + 0.5) / 2)
        out[idx + (slice(2, 4),)] = _logit(np.sqrt(targets.box[:, 2:] / targets.anchor_wh) / 2)
        out[idx + (4,)] = 30.0
        out[idx + (5 + targets.class_id,)] = 30.0
        raw.append(Tensor(out))
    return raw


def static_training(**overrides):
    base = {"epochs": 1, "batch_size": 2, "steps_per_epoch": 1, "warmup_epochs": 0, "eval_every": 1}
    return TrainConfig(**{**base, **overrides})


class TestTargets:
    """Anchor and cell assignment"""

    def test_assignments_stay_on_grid(self, static_config):
        for scale, targets in enumerate(build_targets(LABELS, static_config)):
            grid = static_config.grid_sizes[scale]
            assert ((targets.gi >= 0) & (targets.gi < grid)).all()
            assert ((targets.gj >= 0) & (targets.gj < grid)).all()
            assert ((targets.box[:, :2] >= -0.5) & (targets.box[:, :2] <= 1.5)).all()

    def test_neighbour_cells_added(self, static_config):
        targets = build_targets(LABELS, static_config)[2]
        # centre plus the left and upper neighbours for every matched anchor
        cells = set(zip(targets.anchor.tolist(), targets.gi.tolist(), targets.gj.tolist()))
        assert len(targets) == len(cells) == 3 * len(set(targets.anchor.tolist()))

    def test_small_anchors_reject_large_boxes(self, static_config):
        assert len(build_targets(LABELS, static_config)[0]) == 0

    def test_no_labels(self, static_config):
        assert all(len(t) == 0 for t in build_targets([np.zeros((0, 5))], static_config))


class TestDetectionLoss:
    """Box, objectness and class terms"""

    def test_perfect_predictions(self, static_config):
        terms = detection_loss(perfect_raw(static_config, LABELS), LABELS, static_config)
        assert terms.total.item() < 1e-6

    def test_background_only(self, static_config):
        raw = [Tensor(np.zeros((1, 3, g, g, 8))) for g in static_config.grid_sizes]
        values = detection_loss(raw, [np.zeros((0, 5))], static_config).values()
        assert values["box"] == 0.0 and values["cls"] == 0.0
        assert values["obj"] == pytest.approx(math.log(2) * (4.0 + 1.0 + 0.4))

    def test_gradients(self, static_config):
        rng = np.random.default_rng(0)
        raw = [Tensor(0.5 * rng.standard_normal((1, 3, g, g, 8))) for g in static_config.grid_sizes]
        error = grad_check(lambda *r: detection_loss(list(r), LABELS, static_config).total, raw)
        assert error < 1e-4

    def test_label_count_must_match_frames(self, static_config):
        raw = [Tensor(np.zeros((2, 3, g, g, 8))) for g in static_config.grid_sizes]
        with pytest.raises(ShapeError):
            detection_loss(raw, LABELS, static_config)


class TestOptimizer:
    """SGD and the learning-rate schedule"""

    def test_warmup_then_cosine(self):
        schedule = LRSchedule(0.01, 0.01, epochs=10, warmup_epochs=1, steps_per_epoch=4)
        assert schedule(0) == pytest.approx(0.0025)
        assert schedule(3) == pytest.approx(0.01)
        assert schedule(4) < 0.01
        assert schedule(40) == pytest.approx(0.0001)

    def test_no_warmup(self):
        assert LRSchedule(0.02, 0.1, 5, 0, 3)(0) == pytest.approx(0.02)

    def test_plain_step(self, static_config):
        model = DetectorModel(static_config)
        param = model.head.convs[0].bias
        param.grad = np.ones_like(param.data)
        before = param.data.copy()
        SGD([param], lr=0.1, momentum=0.0, weight_decay=0.0).step()
        np.testing.assert_allclose(param.data, before - 0.1)

    def test_frozen_parameters_excluded(self, qrnn_config):
        model = DetectorModel(qrnn_config)
        model.backbone.requires_grad_(False)
        assert SGD(model.parameters()).num_parameters == parameter_census(model)["trainable"]


class TestCheckpoints:
    """Saving, restoring and compatibility"""

    def test_round_trip(self, static_config, tmp_path):
        model = DetectorModel(static_config)
        saved = save_checkpoint(tmp_path / "m.tyck", model, epoch=3, map50=0.5, map50_95=0.25)
        meta = read_checkpoint(saved.path)
        assert (meta.epoch, meta.map50, meta.map50_95) == (3, 0.5, 0.25)
        assert meta.detector == static_config
        restored = load_model(saved.path)
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(restored.state_dict()[name], value)

    def test_float64_model_restores_as_float64(self, static_config, tmp_path):
        with default_dtype(np.float64):
            model = DetectorModel(static_config)
        save_checkpoint(tmp_path / "m.tyck", model, epoch=1)
        assert load_model(tmp_path / "m.tyck").dtype == np.float64

    def test_incompatible_variant(self, static_config, tmp_path):
        save_checkpoint(tmp_path / "m.tyck", DetectorModel(static_config), epoch=1)
        other = DetectorModel(tiny_config(TemporalKind.NONE, variant="medium"))
        with pytest.raises(CheckpointError, match="variant"):
            load_weights(other, tmp_path / "m.tyck")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            read_checkpoint(tmp_path / "absent.tyck")


class TestEvaluation:
    """Test-split evaluation"""

    def test_perfect_predictions_file(self, synth_root, tmp_path):
        dataset = load_dataset(synth_root, "test")
        path = tmp_path / "predictions.jsonl"
        with path.open("w") as handle:
            for sequence_id in dataset.sequence_ids:
                for index in range(dataset.frame_count(sequence_id)):
                    labels = dataset.labels(sequence_id, index)
                    for row in labels:
                        record = {"video": sequence_id, "frame": index, "class": int(row[0]), "conf": 0.9}
                        record.update(zip(("cx", "cy", "w", "h"), (row[1:] * 64).tolist()))
                        handle.write(json.dumps(record) + "\n")
        outcome = evaluate_predictions_file(path, dataset, 64)
        assert outcome.report.map50 == pytest.approx(1.0)
        assert outcome.report.map50_95 == pytest.approx(1.0)
        assert outcome.report.num_images == 4

    def test_malformed_predictions_file(self, synth_root, tmp_path):
        path = tmp_path / "predictions.jsonl"
        path.write_text('{"video": "seq_000"}\n')
        with pytest.raises(ValueError, match=":1:"):
            evaluate_predictions_file(path, load_dataset(synth_root, "test"), 64)

    def test_records_in_pixels(self):
        from tyolo.metrics.boxes import DetectionSet

        dets = DetectionSet(np.array([[10.0, 20.0, 4.0, 6.0]]), np.array([0.5]), np.array([2]))
        assert detection_records("v", 3, dets) == [
            {"video": "v", "frame": 3, "class": 2, "cx": 10.0, "cy": 20.0, "w": 4.0, "h": 6.0, "conf": 0.5}
        ]

    @pytest.mark.parametrize("kind", [TemporalKind.NONE, TemporalKind.QRNN])
    def test_model_evaluation(self, synth_root, kind):
        model = DetectorModel(tiny_config(kind))
        outcome = evaluate_model(model, load_dataset(synth_root, "test"))
        assert len(outcome.keys) == 4
        assert 0.0 <= outcome.report.map50_95 <= outcome.report.map50 <= 1.0
        assert model.training


class TestStaticStage:
    """Static training run"""

    def test_writes_log_and_checkpoints(self, synth_root, static_config, tmp_path):
        train = load_dataset(synth_root, "train", mode="static")
        test = load_dataset(synth_root, "test")
        result = train_static(DetectorModel(static_config), train, test, static_training(epochs=2), tmp_path)
        log = pd.read_csv(tmp_path / "logs" / "train.csv")
        assert list(log.epoch) == [1, 2]
        assert log[["box", "obj", "cls", "total"]].notna().all().all()
        assert (tmp_path / "checkpoints" / "best.tyck").exists()
        assert result.last.epoch == 2
        assert result.best.epoch in (1, 2)
        assert result.best.map50_95 == max(r.map50_95 for r in result.history)

    @pytest.mark.slow
    def test_same_seed_same_loss_trajectory(self, synth_root, static_config, tmp_path, monkeypatch):
        monkeypatch.setenv("TYOLO_REFERENCE_MODE", "true")
        assert reload_config().threads == 1
        try:
            train = load_dataset(synth_root, "train")
            test = load_dataset(synth_root, "test")
            config = static_training(epochs=5, eval_every=5, seed=3)
            runs = [
                train_static(DetectorModel(static_config), train, test, config, tmp_path / name).history
                for name in ("a", "b")
            ]
        finally:
            monkeypatch.undo()
            reload_config()
        assert len(runs[0]) == 5
        for key in ("box", "obj", "cls", "total", "lr"):
            assert [getattr(r, key) for r in runs[0]] == [getattr(r, key) for r in runs[1]]

    def test_rejects_temporal_model(self, synth_root, qrnn_config, tmp_path):
        data = load_dataset(synth_root, "train")
        with pytest.raises(ValueError):
            train_static(DetectorModel(qrnn_config), data, data, static_training(), tmp_path)

    def test_zero_learning_rate_keeps_weights(self, synth_root, static_config, tmp_path):
        model = DetectorModel(static_config)
        before = model.state_dict()
        data = load_dataset(synth_root, "train")
        Trainer(model, data, data, static_training(lr0=0.0, bn_momentum=0.0), tmp_path).step()
        after = model.state_dict()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_non_finite_loss_raises(self, synth_root, static_config, tmp_path, mocker):
        nan = float("nan")
        fake = mocker.patch("tyolo.training.trainer.detection_loss")
        fake.return_value.values.return_value = {"box": nan, "obj": 1.0, "cls": 0.0, "total": nan}
        data = load_dataset(synth_root, "train")
        trainer = Trainer(DetectorModel(static_config), data, data, static_training(), tmp_path)
        with pytest.raises(TrainingDivergedError) as info:
            trainer.step()
        assert info.value.details()["iteration"] == 0
        fake.return_value.total.backward.assert_not_called()


class TestTemporalStage:
    """Fine-tuning from static weights"""

    @pytest.fixture
    def static_checkpoint(self, static_config, tmp_path):
        return save_checkpoint(tmp_path / "static.tyck", DetectorModel(static_config), epoch=1).path

    def test_frozen_stages_unchanged(self, synth_root, qrnn_config, static_checkpoint, tmp_path):
        model = DetectorModel(qrnn_config)
        config = static_training(freeze_policy=FreezePolicy.THROUGH_NECK, passthrough_init=True, lr0=0.05)
        prepare_temporal(model, static_checkpoint, config)
        frozen = {k: v for k, v in model.state_dict().items() if k.startswith(("backbone.", "neck."))}
        head = model.state_dict()["head.convs.0.weight"]

        data = load_dataset(synth_root, "train", seq_len=2)
        trainer = Trainer(model, data, data, config, tmp_path, stage="temporal")
        assert trainer.optimizer.num_parameters == parameter_census(model)["trainable"]
        trainer.step()

        after = model.state_dict()
        assert all(np.array_equal(frozen[k], after[k]) for k in frozen)
        assert not np.array_equal(head, after["head.convs.0.weight"])

    def test_seeded_from_static_weights(self, qrnn_config, static_checkpoint):
        model = DetectorModel(qrnn_config.model_copy(update={"seed": 9}))
        prepare_temporal(model, static_checkpoint, static_training())
        stored = load_model(static_checkpoint).state_dict()
        np.testing.assert_array_equal(model.state_dict()["backbone.stem.conv.weight"], stored["backbone.stem.conv.weight"])

    @pytest.mark.parametrize("candidate, warned", [("sigmoid", True), ("tanh", False)])
    def test_sigmoid_candidate_passthrough_warns(self, static_checkpoint, mocker, candidate, warned):
        log = mocker.patch("tyolo.training.trainer.logger")
        model = DetectorModel(tiny_config(TemporalKind.CONVLSTM, candidate_activation=candidate))
        prepare_temporal(model, static_checkpoint, static_training(passthrough_init=True))
        messages = [c.args[0] for c in log.warning.call_args_list]
        assert any("tanh(sigmoid(x))" in m for m in messages) == warned

    def test_requires_temporal_model(self, static_config, static_checkpoint):
        with pytest.raises(ValueError):
            prepare_temporal(DetectorModel(static_config), static_checkpoint, static_training())

    def test_full_stage(self, synth_root, convlstm_config, static_checkpoint, tmp_path):
        config = static_training(batch_size=1, freeze_policy=FreezePolicy.THROUGH_NECK, passthrough_init=True)
        result = train_temporal(
            DetectorModel(convlstm_config),
            static_checkpoint,
            load_dataset(synth_root, "train", seq_len=2),
            load_dataset(synth_root, "test"),
            config,
            tmp_path / "temporal",
        )
        assert result.stage == "temporal"
        assert result.census["frozen"] > 0
        assert read_checkpoint(result.best.path).detector.temporal_kind == TemporalKind.CONVLSTM
