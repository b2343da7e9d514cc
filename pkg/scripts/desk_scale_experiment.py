#!/usr/bin/env python3
"""
Desk-scale experiment: synthetic data, static stage, then a temporal stage per cell kind,
each scored for mAP and FPS. Writes <out>/summary.csv and prints a comparison table.
"""

import json
import subprocess
import sys
from pathlib import Path
from typing import List, Optional

import click
import pandas as pd
from rich.console import Console
from rich.table import Table

ROOT = Path(__file__).resolve().parent.parent
CLI = ROOT / "cli.py"
KINDS = ("qrnn", "convlstm")

console = Console()


def tyolo(*args: str) -> None:
    cmd = [sys.executable, str(CLI), *args]
    console.print(f"[dim]$ tyolo {' '.join(args)}[/dim]")
    result = subprocess.run(cmd, cwd=ROOT)
    if result.returncode != 0:
        raise click.ClickException(f"tyolo {args[0]} exited with {result.returncode}")


def evaluate(label: str, checkpoint: Path, data: Path, out: Path, common: List[str]) -> dict:
    tyolo("eval", *common, "--data", str(data), "--checkpoint", str(checkpoint), "--with-timing", "--out", str(out))
    report = json.loads((out / "reports" / "eval.json").read_text())
    return {
        "model": label,
        "map50": report["map50"],
        "map50_95": report["map50_95"],
        "t_model_ms": report.get("t_model_ms"),
        "t_nms_ms": report.get("t_nms_ms"),
        "fps": report.get("fps"),
    }


@click.command()
@click.option("--out", type=click.Path(path_type=Path), default=Path("runs/desk-experiment"), show_default=True)
@click.option("--epochs", type=int, default=None, help="Override epochs for both stages")
@click.option("--kinds", multiple=True, type=click.Choice(KINDS), default=KINDS, show_default=True)
@click.option("--skip-data", is_flag=True, help="Reuse an existing <out>/data")
def main(out: Path, epochs: Optional[int], kinds: List[str], skip_data: bool):
    """Run the desk preset end to end and compare temporal cells against the static detector"""
    out = out.resolve()
    data = out / "data"
    common = ["--preset", "desk"]
    if epochs is not None:
        common += ["--set", f"static.epochs={epochs}", "--set", f"temporal.epochs={epochs}"]

    if not skip_data:
        tyolo("synth-data", *common, "--out", str(data))

    tyolo("train-static", *common, "--data", str(data), "--out", str(out / "static"))
    static_ckpt = out / "static" / "checkpoints" / "best.tyck"
    rows = [evaluate("static", static_ckpt, data, out / "static" / "eval", common)]

    for kind in kinds:
        stage = out / kind
        tyolo(
            "train-temporal", *common, "--set", f"detector.temporal_kind={kind}",
            "--data", str(data), "--static-checkpoint", str(static_ckpt), "--out", str(stage),
        )
        rows.append(evaluate(kind, stage / "checkpoints" / "best.tyck", data, stage / "eval", common))

    summary = pd.DataFrame(rows)
    summary.to_csv(out / "summary.csv", index=False)

    table = Table(title="Desk-scale comparison")
    for column in ("Model", "mAP50", "mAP50:95", "FPS"):
        table.add_column(column, justify="left" if column == "Model" else "right")
    for row in rows:
        fps = f"{row['fps']:.1f}" if row["fps"] is not None else "-"
        table.add_row(row["model"], f"{row['map50']:.4f}", f"{row['map50_95']:.4f}", fps)
    console.print(table)
    console.print(f"Summary written to {out / 'summary.csv'}", style="green")


if __name__ == "__main__":
    main()
