#!/usr/bin/env python3
"""
TYolo - Command Line Interface
Dataset generation, two-stage training, evaluation, augmentation search, benchmarking and
streaming detection.

Every command takes --config (YAML or a previous manifest.json), repeated --set key=value
overrides and --out, and writes manifest.json plus its artifacts under --out:
checkpoints/, logs/, reports/, frames/.
"""

import json
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from tyolo.core.config import get_config

# BLAS reads its thread count when numpy loads
get_config().apply_thread_limits()

import click  # noqa: E402
import cv2  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import ValidationError  # noqa: E402
from rich.console import Console  # noqa: E402
from rich.table import Table  # noqa: E402

from tyolo.augment.pipeline import AugmentSpec, Technique  # noqa: E402
from tyolo.augment.search import ReplayTable, SearchReport, greedy_search  # noqa: E402
from tyolo.core.errors import TYoloError  # noqa: E402
from tyolo.core.logging import configure_logging, get_logger  # noqa: E402
from tyolo.core.run_config import RunConfig, load_run_config, write_manifest  # noqa: E402
from tyolo.data.anchors import kmeans_anchors  # noqa: E402
from tyolo.data.manifest import IMAGE_SUFFIXES, VideoDataset, load_dataset, natural_key, read_image, write_image  # noqa: E402
from tyolo.data.sampling import combine_pools  # noqa: E402
from tyolo.data.synthetic import SynthConfig, synth_video_gen  # noqa: E402
from tyolo.metrics.benchmark import (  # noqa: E402
    BenchmarkResult,
    compare_variants,
    fps_benchmark,
    results_frame,
)
from tyolo.metrics.boxes import cxcywh_to_xyxy  # noqa: E402
from tyolo.metrics.report import write_pr_curves  # noqa: E402
from tyolo.models.config import DetectorConfig  # noqa: E402
from tyolo.models.detector import DetectorModel, detect_stream, new_stream  # noqa: E402
from tyolo.temporal.state import TemporalKind  # noqa: E402
from tyolo.tensor import set_default_dtype  # noqa: E402
from tyolo.training.checkpoint import load_model, read_checkpoint  # noqa: E402
from tyolo.training.config import TrainConfig  # noqa: E402
from tyolo.training.evaluate import (  # noqa: E402
    EvalOutcome,
    detection_records,
    evaluate_model,
    evaluate_predictions_file,
)
from tyolo.training.trainer import TrainResult, train_static, train_temporal  # noqa: E402
from tyolo.utils.system_checker import SystemChecker  # noqa: E402

console = Console()
logger = get_logger("tyolo.cli")

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
BOX_COLORS = ((255, 170, 0), (220, 40, 40), (40, 160, 255))


class ConfigProblem(Exception):
    """Invalid configuration or arguments; reported with exit status 2"""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.details = details or {}


class TYoloCLI:
    """Resolves the run configuration of one command and owns its output directory"""

    def __init__(self, command: str, out: Optional[Path]):
        self.command = command
        self.settings = get_config()
        self.out = Path(out) if out is not None else self.settings.output_root / command
        self.system_checker = SystemChecker(self.settings)
        self.run: Optional[RunConfig] = None

    @property
    def reports(self) -> Path:
        return self.out / "reports"

    def resolve(self, config_path: Optional[Path], overrides: Sequence[str], preset: Optional[str]) -> RunConfig:
        try:
            self.run = load_run_config(config_path, overrides, preset)
        except ValidationError as exc:
            errors = [
                {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]} for err in exc.errors()
            ]
            raise ConfigProblem(f"invalid configuration ({len(errors)} error(s))", {"fields": errors}) from exc
        except (ValueError, FileNotFoundError) as exc:
            raise ConfigProblem(str(exc)) from exc
        if len(self.run.data.classes) != self.run.detector.num_classes:
            raise ConfigProblem(
                f"data.classes has {len(self.run.data.classes)} names, "
                f"detector.num_classes is {self.run.detector.num_classes}"
            )
        return self.run

    def write_manifest(self, extra: Optional[Dict[str, Any]] = None) -> Path:
        assert self.run is not None
        return write_manifest(self.out, self.command, self.run, self.system_checker.environment(), extra)

    def write_error(self, error: Dict[str, Any]) -> Path:
        self.reports.mkdir(parents=True, exist_ok=True)
        path = self.reports / "error.json"
        path.write_text(json.dumps(error, indent=2, default=str))
        return path

    def execute(self, body: Callable[[], None]) -> None:
        """Run body; map failures to exit statuses with a machine-readable report"""
        try:
            body()
        except ConfigProblem as exc:
            self.write_error({"error": "ConfigError", "message": str(exc), "details": exc.details})
            console.print(f"[red]Configuration error:[/red] {exc}")
            for item in exc.details.get("fields", []):
                console.print(f"  {item['field']}: {item['message']}")
            sys.exit(EXIT_CONFIG)
        except TYoloError as exc:
            self.write_error(exc.to_report())
            logger.error("command failed", command=self.command, error=type(exc).__name__)
            console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
            sys.exit(EXIT_RUNTIME)
        except Exception as exc:
            self.write_error({"error": type(exc).__name__, "message": str(exc), "details": {}})
            logger.exception("command failed", command=self.command)
            console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
            sys.exit(EXIT_RUNTIME)

    # shared building blocks

    def data_root(self, override: Optional[Path]) -> Path:
        assert self.run is not None
        root = override or (Path(self.run.data.root) if self.run.data.root else None)
        if root is None:
            raise ConfigProblem("no dataset given: pass --data or set data.root")
        return Path(root)

    def load_split(self, root: Path, split: str, mode: str = "temporal", seq_len: int = 1) -> VideoDataset:
        assert self.run is not None
        return load_dataset(root, split, mode, self.run.data.classes, seq_len)

    def detector(self, temporal: bool) -> DetectorConfig:
        assert self.run is not None
        config = self.run.detector
        if not temporal:
            return config.model_copy(update={"temporal_kind": TemporalKind.NONE})
        if not config.is_temporal:
            raise ConfigProblem("temporal training needs detector.temporal_kind qrnn or convlstm")
        return config.model_copy(update={"seq_len": self.run.temporal.seq_len})


def _config_options(func: Callable) -> Callable:
    func = click.option(
        "--out", "out", type=click.Path(path_type=Path), default=None,
        help="Output directory [default: $TYOLO_OUTPUT_ROOT/<command>]",
    )(func)
    func = click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Config override, repeatable")(func)
    func = click.option("--preset", type=str, default=None, help="desk, full-small, full-medium or full-large")(func)
    func = click.option(
        "--config", "config_path", type=click.Path(path_type=Path), default=None,
        help="Run config (YAML) or a previous manifest.json",
    )(func)
    return func


def _show_eval(report_path: Path, outcome: EvalOutcome) -> None:
    table = Table(title="Average precision")
    table.add_column("Class", style="cyan")
    table.add_column("AP50", justify="right")
    table.add_column("AP50:95", justify="right")
    for name, values in outcome.report.per_class_ap.items():
        table.add_row(name, f"{values[0]:.4f}", f"{float(np.mean(values)):.4f}")
    table.add_row("all", f"{outcome.report.map50:.4f}", f"{outcome.report.map50_95:.4f}", style="bold")
    console.print(table)
    console.print(f"Report written to {report_path}", style="green")


def _show_training(result: TrainResult) -> None:
    console.print(
        f"[green]{result.stage} training finished[/green]: best epoch {result.best.epoch}, "
        f"mAP50 {result.best.map50:.4f}, mAP50:95 {result.best.map50_95:.4f} -> {result.best.path}"
    )


@click.group()
@click.version_option(package_name="tyolo", message="%(version)s")
def cli():
    """TYolo temporal object detection CLI"""
    settings = get_config()
    configure_logging(settings.log_level, settings.log_json)
    set_default_dtype(settings.precision.value)


@cli.command("synth-data")
@_config_options
@click.option("--seed", type=int, default=None, help="Generator seed")
@click.option("--sequences", type=int, default=None, help="Training sequences")
@click.option("--test-sequences", type=int, default=None, help="Test sequences")
@click.option("--frames", type=int, default=None, help="Frames per sequence")
@click.option("--size", type=int, default=None, help="Frame side in pixels (divisible by 32)")
def synth_data(config_path, preset, overrides, out, seed, sequences, test_sequences, frames, size):
    """Generate a synthetic moving-shapes dataset with exact labels"""
    app = TYoloCLI("synth-data", out)

    def body():
        flags = {"seed": seed, "sequences": sequences, "test_sequences": test_sequences, "frames": frames, "size": size}
        extra = [f"synth.{k}={v}" for k, v in flags.items() if v is not None]
        run = app.resolve(config_path, list(overrides) + extra, preset)
        synth: SynthConfig = run.synth
        counts = synth_video_gen(synth, app.out)
        app.write_manifest({"counts": counts})
        console.print(
            f"[green]Synthetic dataset written[/green] to {app.out}: "
            f"{counts['train']} train frames, {counts['test']} test frames"
        )

    app.execute(body)


def _mixed_pool(app: TYoloCLI, train: VideoDataset, static_data: Optional[Path]) -> Any:
    assert app.run is not None
    static_root = static_data or (Path(app.run.data.static_root) if app.run.data.static_root else None)
    if not app.run.static.mixed:
        return train
    if static_root is None:
        raise ConfigProblem("static.mixed needs --static-data or data.static_root")
    static = app.load_split(static_root, "train", mode="static")
    pool = combine_pools(static, train)
    logger.info("mixed frame pool", static=static.manifest.num_frames, temporal=train.manifest.num_frames, total=len(pool))
    return pool


@cli.command("train-static")
@_config_options
@click.option("--data", type=click.Path(path_type=Path), default=None, help="Dataset root with train/ and test/")
@click.option("--static-data", type=click.Path(path_type=Path), default=None, help="Static image dataset for mixed mode")
@click.option("--kmeans-anchors", is_flag=True, help="Fit anchors to the training boxes")
def train_static_cmd(config_path, preset, overrides, out, data, static_data, kmeans_anchors):
    """Train the static detector (no temporal cells) with per-epoch testing"""
    app = TYoloCLI("train-static", out)

    def body():
        run = app.resolve(config_path, overrides, preset)
        root = app.data_root(data)
        train = app.load_split(root, "train")
        test = app.load_split(root, "test")
        detector = app.detector(temporal=False)
        if kmeans_anchors and detector.anchors is None:
            anchors = kmeans_anchors_for(train, detector)
            detector = detector.model_copy(update={"anchors": anchors})
            run.detector.anchors = anchors
        app.write_manifest()
        model = DetectorModel(detector)
        result = train_static(model, _mixed_pool(app, train, static_data), test, run.static, app.out, run.eval)
        _show_training(result)

    app.execute(body)


def kmeans_anchors_for(dataset: VideoDataset, detector: DetectorConfig) -> List[List[Tuple[float, float]]]:
    anchors = kmeans_anchors(dataset.box_sizes(detector.input_size), detector.input_size, detector.seed)
    return [[(float(w), float(h)) for w, h in scale] for scale in anchors]


@cli.command("train-temporal")
@_config_options
@click.option("--data", type=click.Path(path_type=Path), default=None, help="Dataset root with train/ and test/")
@click.option(
    "--static-checkpoint", type=click.Path(path_type=Path), required=True, help="Best checkpoint of the static stage"
)
def train_temporal_cmd(config_path, preset, overrides, out, data, static_checkpoint):
    """Fine-tune temporal cells on top of a static checkpoint, backbone and neck frozen"""
    app = TYoloCLI("train-temporal", out)

    def body():
        run = app.resolve(config_path, overrides, preset)
        detector = app.detector(temporal=True)
        root = app.data_root(data)
        train = app.load_split(root, "train", seq_len=run.temporal.seq_len)
        test = app.load_split(root, "test")
        stored = read_checkpoint(static_checkpoint)
        detector = detector.model_copy(update={"anchors": stored.detector.anchors})
        app.write_manifest({"static_checkpoint": str(static_checkpoint)})
        model = DetectorModel(detector)
        result = train_temporal(model, static_checkpoint, train, test, run.temporal, app.out, run.eval)
        _show_training(result)

    app.execute(body)


@cli.command("eval")
@_config_options
@click.option("--data", type=click.Path(path_type=Path), default=None, help="Dataset root")
@click.option("--split", type=click.Choice(["train", "test"]), default="test")
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None, help="Model checkpoint to evaluate")
@click.option("--predictions", type=click.Path(path_type=Path), default=None, help="detections JSON-lines to evaluate")
@click.option("--with-timing", is_flag=True, help="Also benchmark the checkpoint and attach FPS")
def eval_cmd(config_path, preset, overrides, out, data, split, checkpoint, predictions, with_timing):
    """Compute per-class AP, mAP50 and mAP50:95 on a split"""
    app = TYoloCLI("eval", out)

    def body():
        run = app.resolve(config_path, overrides, preset)
        if (checkpoint is None) == (predictions is None):
            raise ConfigProblem("pass exactly one of --checkpoint or --predictions")
        dataset = app.load_split(app.data_root(data), split)
        app.write_manifest({"checkpoint": str(checkpoint) if checkpoint else None,
                            "predictions": str(predictions) if predictions else None, "split": split})
        if checkpoint is not None:
            model = load_model(checkpoint)
            outcome = evaluate_model(model, dataset, run.eval)
            if with_timing:
                timing = fps_benchmark(model, config=run.benchmark)
                outcome.report = timing.apply_to(outcome.report)
        else:
            outcome = evaluate_predictions_file(predictions, dataset, run.detector.input_size)
        report_path = outcome.report.save(app.reports / "eval.json")
        write_pr_curves(outcome.result, dataset.manifest.classes, app.reports / "pr_curves.csv")
        _show_eval(report_path, outcome)

    app.execute(body)


@cli.command("augment-search")
@_config_options
@click.option("--data", type=click.Path(path_type=Path), default=None, help="Dataset root")
@click.option(
    "--static-checkpoint", type=click.Path(path_type=Path), default=None,
    help="Static-stage checkpoint every trial fine-tunes from (not needed with --replay)",
)
@click.option("--replay", type=click.Path(path_type=Path), default=None, help="Recorded score table to replay")
def augment_search(config_path, preset, overrides, out, data, static_checkpoint, replay):
    """Greedy forward selection of augmentation techniques"""
    app = TYoloCLI("augment-search", out)

    def body():
        run = app.resolve(config_path, overrides, preset)
        techniques = [t.value for t in run.search.techniques]
        replay_path = replay or (Path(run.search.replay) if run.search.replay else None)
        app.write_manifest({
            "replay": str(replay_path) if replay_path else None,
            "static_checkpoint": str(static_checkpoint) if static_checkpoint else None,
        })
        if replay_path is not None:
            score_fn = ReplayTable.load(replay_path)
        else:
            if static_checkpoint is None:
                raise ConfigProblem("training trials need --static-checkpoint (or --replay)")
            score_fn = _training_trials(app, app.data_root(data), static_checkpoint)
        report = greedy_search(techniques, score_fn)
        _write_search(app, report)
        if report.aborted:
            raise TYoloError(f"search aborted after {len(report.trials)} trials: {report.error}")

    app.execute(body)


def _training_trials(app: TYoloCLI, root: Path, static_checkpoint: Path) -> Callable[[Tuple[str, ...]], float]:
    """Each trial fine-tunes a temporal detector from the static checkpoint and scores mAP50:95 in percent"""
    run = app.run
    assert run is not None
    if run.temporal.seq_len < 2:
        raise ConfigProblem(
            f"augmentation trials train on clips, temporal.seq_len must be >= 2, got {run.temporal.seq_len}"
        )
    detector = app.detector(temporal=True)
    detector = detector.model_copy(update={"anchors": read_checkpoint(static_checkpoint).detector.anchors})
    train = app.load_split(root, "train", seq_len=run.temporal.seq_len)
    test = app.load_split(root, "test")
    counter = {"n": 0}

    def score(combo: Tuple[str, ...]) -> float:
        counter["n"] += 1
        config = trial_config(run, combo)
        model = DetectorModel(detector)
        result = train_temporal(
            model, static_checkpoint, train, test, config, app.out / "trials" / f"{counter['n']:02d}", run.eval
        )
        return round(result.best.map50_95 * 100.0, 4)

    return score


def trial_config(run: RunConfig, combo: Sequence[str]) -> TrainConfig:
    """Temporal-stage settings of one search trial: static augmentations plus the combination under test"""
    return run.temporal.model_copy(
        update={
            "epochs": run.search.epochs,
            "eval_every": run.search.epochs,
            "augment": [AugmentSpec(technique=Technique.STATIC)] + [AugmentSpec(technique=Technique(t)) for t in combo],
        }
    )


def _write_search(app: TYoloCLI, report: SearchReport) -> None:
    csv_path = report.write_csv(app.reports / "augment_search.csv")
    (app.reports / "augment_search.json").write_text(json.dumps(report.summary(), indent=2))
    table = Table(title="Augmentation search")
    table.add_column("Trial", style="cyan")
    table.add_column("Combination")
    table.add_column("mAP50:95", justify="right")
    for trial in report.trials:
        style = "bold green" if trial.trial_id == report.best_trial else None
        table.add_row(trial.trial_id, trial.combination, f"{trial.score:.2f}", style=style)
    console.print(table)
    console.print(f"Selected: {', '.join(report.selected) or 'baseline'} ({report.best_score}) -> {csv_path}")


@cli.command("benchmark")
@_config_options
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None, help="Benchmark one checkpoint")
def benchmark(config_path, preset, overrides, out, checkpoint):
    """Batch-1 latency and FPS: median model time plus median NMS time"""
    app = TYoloCLI("benchmark", out)

    def body():
        run = app.resolve(config_path, overrides, preset)
        app.write_manifest({"checkpoint": str(checkpoint) if checkpoint else None})
        if checkpoint is not None:
            results: List[BenchmarkResult] = [fps_benchmark(load_model(checkpoint), config=run.benchmark)]
        else:
            results = compare_variants(run.detector, run.benchmark)
        app.reports.mkdir(parents=True, exist_ok=True)
        payload = {
            "environment": app.system_checker.environment(),
            "results": [r.model_dump(exclude={"environment"}) for r in results],
        }
        (app.reports / "benchmark.json").write_text(json.dumps(payload, indent=2))
        results_frame(results).to_csv(app.reports / "benchmark.csv", index=False)

        table = Table(title=f"Benchmark ({run.benchmark.mode}, batch 1, median of {run.benchmark.runs})")
        for column in ("Model", "t_model ms", "t_nms ms", "FPS"):
            table.add_column(column, justify="right" if column != "Model" else "left")
        for r in results:
            table.add_row(r.label, f"{r.t_model_ms:.2f}", f"{r.t_nms_ms:.2f}", f"{r.fps:.1f}")
        console.print(table)

    app.execute(body)


def video_frames(video_dir: Path) -> List[Tuple[str, List[Path]]]:
    """(video name, frame paths) pairs: the directory itself if it holds frames, else each subdirectory"""
    def frames_in(directory: Path) -> List[Path]:
        return sorted(
            (p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
            key=lambda p: natural_key(p.stem),
        )

    own = frames_in(video_dir)
    if own:
        return [(video_dir.name, own)]
    videos = []
    for sub in sorted((d for d in video_dir.iterdir() if d.is_dir()), key=lambda d: natural_key(d.name)):
        frames = frames_in(sub)
        if frames:
            videos.append((sub.name, frames))
    return videos


def annotate(frame: np.ndarray, boxes: np.ndarray, class_ids: np.ndarray, scores: np.ndarray, names: List[str]) -> np.ndarray:
    image = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8).copy()
    for (x1, y1, x2, y2), cls, score in zip(cxcywh_to_xyxy(boxes), class_ids, scores):
        color = BOX_COLORS[int(cls) % len(BOX_COLORS)]
        cv2.rectangle(image, (int(x1), int(y1)), (int(x2), int(y2)), color, 1)
        label = f"{names[int(cls)] if int(cls) < len(names) else cls} {score:.2f}"
        cv2.putText(image, label, (int(x1), max(int(y1) - 2, 8)), cv2.FONT_HERSHEY_SIMPLEX, 0.3, color, 1)
    return image


@cli.command("detect")
@_config_options
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True, help="Model checkpoint")
@click.option("--video-dir", type=click.Path(path_type=Path, exists=True, file_okay=False), required=True)
@click.option("--conf", type=float, default=None, help="Confidence threshold (default 0.25)")
@click.option("--with-latency", is_flag=True, help="Append per-frame latency_ms to each record")
@click.option("--no-frames", is_flag=True, help="Skip writing annotated frames")
def detect(config_path, preset, overrides, out, checkpoint, video_dir, conf, with_latency, no_frames):
    """Causal streaming detection over video frame directories"""
    app = TYoloCLI("detect", out)

    def body():
        run = app.resolve(config_path, overrides, preset)
        model = load_model(checkpoint)
        model.eval()
        conf_thresh = conf if conf is not None else run.benchmark.conf_thresh
        app.write_manifest({"checkpoint": str(checkpoint), "video_dir": str(video_dir), "conf": conf_thresh})
        app.reports.mkdir(parents=True, exist_ok=True)
        out_path = app.reports / "detections.jsonl"
        names = model.config.class_names or []
        total = 0
        with open(out_path, "w") as sink:
            for video, paths in video_frames(Path(video_dir)):
                state = new_stream(model)
                for index, path in enumerate(paths):
                    frame = read_image(path)
                    start = time.perf_counter()
                    dets, state = detect_stream(model, frame, state, conf_thresh, run.eval.iou_thresh)
                    latency = (time.perf_counter() - start) * 1000.0
                    for record in detection_records(video, index, dets):
                        if with_latency:
                            record["latency_ms"] = round(latency, 3)
                        sink.write(json.dumps(record, sort_keys=True) + "\n")
                    total += len(dets)
                    if not no_frames:
                        write_image(
                            app.out / "frames" / video / f"{path.stem}.png",
                            annotate(frame, dets.boxes, dets.class_ids, dets.scores, names),
                        )
        console.print(f"[green]{total} detections[/green] written to {out_path}")

    app.execute(body)


if __name__ == "__main__":
    cli()
