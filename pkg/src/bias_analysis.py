# src/bias_analysis.py
"""
bias_analysis.py
================

Per-group accuracy across speaker metadata (gender, accent).

Groups are defined by the TRUE speaker's metadata: a misclassified female
speaker counts against the female group whatever the predicted speaker is.
Rankings sort by accuracy descending and break ties alphabetically.

Outputs (`write_bias_report`)
-----------------------------
- `bias-report.json`  both GroupReports plus the top-3 / bottom-3 accents
- `bias-gender.csv`, `bias-accent.csv`  (group, accuracy, support)
"""

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import pandas as pd

from .audio_ingest import SpeakerMetadata
from .errors import MetadataError
from .log_utils import info

GROUPINGS = ("gender", "accent")
REPORT_FILE = "bias-report.json"


@dataclass
class GroupReport:
    grouping: str
    per_group_accuracy: dict[str, float]
    support: dict[str, int]
    correct: dict[str, int]
    disparity: float
    ranking: list[str]

    def to_dict(self) -> dict:
        return {
            "grouping": self.grouping,
            "per_group_accuracy": self.per_group_accuracy,
            "support": self.support,
            "correct": self.correct,
            "disparity": self.disparity,
            "ranking": self.ranking,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "group": self.ranking,
                "accuracy": [self.per_group_accuracy[g] for g in self.ranking],
                "support": [self.support[g] for g in self.ranking],
            }
        )


def _group_of(speaker_id: str, metadata: Mapping[str, SpeakerMetadata], grouping: str) -> str:
    try:
        meta = metadata[speaker_id]
    except KeyError:
        raise MetadataError(f"Speaker '{speaker_id}' has no metadata entry.") from None
    return getattr(meta, grouping)


def group_accuracy(
    true_speakers: Sequence[str],
    predicted_speakers: Sequence[str],
    metadata: Mapping[str, SpeakerMetadata],
    grouping: str,
) -> GroupReport:
    if grouping not in GROUPINGS:
        raise ValueError(f"Unknown grouping '{grouping}'; expected one of {GROUPINGS}.")
    true_speakers, predicted_speakers = list(true_speakers), list(predicted_speakers)
    if len(true_speakers) != len(predicted_speakers):
        raise ValueError(
            f"true and predicted speakers differ in length ({len(true_speakers)} vs {len(predicted_speakers)})."
        )

    support: Counter[str] = Counter()
    correct: Counter[str] = Counter()
    for t, p in zip(true_speakers, predicted_speakers):
        group = _group_of(t, metadata, grouping)
        support[group] += 1
        correct[group] += int(t == p)

    accuracy = {g: correct[g] / support[g] for g in sorted(support)}
    ranking = sorted(accuracy, key=lambda g: (-accuracy[g], g))
    disparity = max(accuracy.values()) - min(accuracy.values()) if accuracy else 0.0
    return GroupReport(
        grouping=grouping,
        per_group_accuracy=accuracy,
        support={g: support[g] for g in sorted(support)},
        correct={g: correct[g] for g in sorted(support)},
        disparity=float(disparity),
        ranking=ranking,
    )


def bias_report(predictions: pd.DataFrame, metadata: Mapping[str, SpeakerMetadata], n_extremes: int = 3) -> dict:
    """Gender and accent reports from a predictions table (true_speaker, predicted_speaker)."""
    t = predictions["true_speaker"].astype(str).tolist()
    p = predictions["predicted_speaker"].astype(str).tolist()
    reports = {g: group_accuracy(t, p, metadata, g) for g in GROUPINGS}
    accent = reports["accent"]
    report = {
        "num_predictions": len(t),
        "gender": reports["gender"].to_dict(),
        "accent": accent.to_dict(),
        "top_accents": accent.ranking[:n_extremes],
        "bottom_accents": accent.ranking[::-1][:n_extremes],
    }
    info(
        f"Bias: gender disparity {reports['gender'].disparity:.3f}, "
        f"accent disparity {accent.disparity:.3f} over {len(accent.ranking)} accent(s)."
    )
    return report


def write_bias_report(report: dict, out_dir: str | Path) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"report": out_dir / REPORT_FILE}
    paths["report"].write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for grouping in GROUPINGS:
        r = report[grouping]
        frame = GroupReport(
            grouping, r["per_group_accuracy"], r["support"], r["correct"], r["disparity"], r["ranking"]
        ).to_frame()
        paths[grouping] = out_dir / f"bias-{grouping}.csv"
        frame.to_csv(paths[grouping], index=False, lineterminator="\n")
    info(f"Bias report written to {out_dir}.")
    return paths
