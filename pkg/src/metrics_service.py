# src/metrics_service.py
"""
Metrics Service
================
This module merges per-model evaluation records (`evaluation.json`) into one results table,
one row per model, in the column layout used when comparing architectures.

The "Time Taken" column comes from the `timing.json` next to each record (copied
there by `evaluate`); the records themselves carry no wall-clock figures.
"""
import json
from pathlib import Path

import pandas as pd

from .log_utils import info, warn
from .trainer import read_timing

RESULTS_COLUMNS = {
    "model": "Model",
    "best_val_accuracy": "Best Val Accuracy",
    "test_accuracy": "Test Accuracy",
    "test_loss": "Test Loss",
    "precision": "Precision",
    "recall": "Recall",
    "f1": "F1-Score",
    "epoch_converged": "Epoch Converged",
    "time_taken_minutes": "Time Taken (minutes)",
}


def load_evaluation_records(paths: list[str | Path]) -> list[dict]:
    records = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "evaluation.json"
        if not p.exists():
            warn(f"No evaluation record at {p}; skipping.")
            continue
        record = json.loads(p.read_text(encoding="utf-8"))
        timing = read_timing(p.parent)
        record["time_taken_minutes"] = timing.get("time_taken_minutes") if timing else None
        records.append(record)
    return records


def build_results_table(records: list[dict]) -> pd.DataFrame:
    if not records:
        return pd.DataFrame(columns=list(RESULTS_COLUMNS.values()))

    # Keep input order; a missing training summary shows up as NaN.
    df = pd.DataFrame(records).reindex(columns=list(RESULTS_COLUMNS))
    averaging = {r.get("averaging") for r in records}
    if len(averaging) > 1:
        warn(f"Evaluation records mix averaging conventions {sorted(map(str, averaging))}.")
    return df.rename(columns=RESULTS_COLUMNS)


def write_results_table(table: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, lineterminator="\n")
    info(f"Results table with {len(table)} model(s) written to {path}.")
    return path
