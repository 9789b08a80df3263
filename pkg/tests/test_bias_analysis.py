import json

import numpy as np
import pandas as pd
import pytest

from src.audio_ingest import SpeakerMetadata
from src.bias_analysis import bias_report, group_accuracy, write_bias_report
from src.errors import MetadataError


def _metadata():
    rows = [
        SpeakerMetadata("f1", "female", "accent_00"),
        SpeakerMetadata("f2", "female", "accent_01"),
        SpeakerMetadata("m1", "male", "accent_00"),
        SpeakerMetadata("m2", "male", "accent_02"),
    ]
    return {r.speaker_id: r for r in rows}


def test_gender_accuracy_and_disparity():
    true = ["f1", "f1", "f2", "f2", "m1", "m1", "m1", "m2", "m2"]
    pred = ["f1", "f1", "f2", "m1", "m1", "m1", "m1", "m2", "f1"]
    report = group_accuracy(true, pred, _metadata(), "gender")
    assert report.per_group_accuracy == {"female": 0.75, "male": 0.8}
    assert np.isclose(report.disparity, 0.05)
    assert report.ranking == ["male", "female"]
    assert report.support == {"female": 4, "male": 5}


def test_perfect_predictions_have_no_disparity():
    true = ["f1", "f2", "m1", "m2"]
    report = group_accuracy(true, true, _metadata(), "accent")
    assert set(report.per_group_accuracy.values()) == {1.0}
    assert report.disparity == 0.0
    assert report.ranking == ["accent_00", "accent_01", "accent_02"]


def test_single_group_has_zero_disparity():
    report = group_accuracy(["f1", "f2"], ["f2", "f2"], _metadata(), "gender")
    assert report.per_group_accuracy == {"female": 0.5}
    assert report.disparity == 0.0


def test_missing_speaker_is_named():
    with pytest.raises(MetadataError, match="'x9'"):
        group_accuracy(["f1", "x9"], ["f1", "f1"], _metadata(), "gender")


def test_group_is_taken_from_the_true_speaker():
    report = group_accuracy(["f1"], ["m1"], _metadata(), "gender")
    assert report.support == {"female": 1}
    assert report.per_group_accuracy == {"female": 0.0}


def test_counts_are_conserved_on_random_predictions():
    rng = np.random.default_rng(0)
    speakers = list(_metadata())
    for _ in range(100):
        true = rng.choice(speakers, size=30).tolist()
        pred = rng.choice(speakers, size=30).tolist()
        for grouping in ("gender", "accent"):
            report = group_accuracy(true, pred, _metadata(), grouping)
            assert sum(report.support.values()) == 30
            assert sum(report.correct.values()) == sum(t == p for t, p in zip(true, pred))
            expected = sorted(report.per_group_accuracy, key=lambda g: (-report.per_group_accuracy[g], g))
            assert report.ranking == expected
            assert report.disparity >= 0.0


def test_always_wrong_accent_ranks_last():
    frame = pd.DataFrame(
        {
            "true_speaker": ["f1", "f2", "m1", "m2", "m2"],
            "predicted_speaker": ["f1", "f2", "m1", "f1", "m1"],
        }
    )
    report = bias_report(frame, _metadata())
    assert report["accent"]["ranking"][-1] == "accent_02"
    assert report["accent"]["per_group_accuracy"]["accent_02"] == 0.0
    assert report["bottom_accents"][0] == "accent_02"
    assert report["top_accents"] == ["accent_00", "accent_01", "accent_02"]
    assert report["num_predictions"] == 5


def test_report_files(tmp_path):
    frame = pd.DataFrame({"true_speaker": ["f1", "m1"], "predicted_speaker": ["f1", "f2"]})
    paths = write_bias_report(bias_report(frame, _metadata()), tmp_path)
    doc = json.loads(paths["report"].read_text())
    assert doc["gender"]["per_group_accuracy"] == {"female": 1.0, "male": 0.0}
    gender = pd.read_csv(paths["gender"])
    assert gender["group"].tolist() == ["female", "male"]
    assert list(gender.columns) == ["group", "accuracy", "support"]
    assert paths["accent"].exists()
