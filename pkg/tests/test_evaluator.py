import json

import numpy as np
import pandas as pd
import pytest

from src.errors import ShapeError
from src.evaluator import (
    PREDICTION_COLUMNS,
    evaluate,
    evaluation_record,
    predictions_frame,
    write_evaluation,
)
from src.metrics_service import build_results_table, load_evaluation_records, write_results_table
from src.model_zoo import build, preset
from src.trainer import TIMING_FILE

SMALL = (16, 24)


def _zero_head_network(num_classes):
    net = build(preset("model-5", num_classes), SMALL, seed=0)
    params = net.named_parameters()
    params["dense1.weight"].data[...] = 0.0
    params["dense1.bias"].data[...] = 0.0
    return net


def _inputs(n, seed=0):
    return np.random.default_rng(seed).normal(size=(n, *SMALL)).astype(np.float32)


def test_uniform_logits_give_log_k_loss_and_lowest_index_predictions():
    net = _zero_head_network(285)
    y = np.array([0, 5, 9, 284])
    result = evaluate(net, _inputs(4), y)
    assert np.isclose(result.report.test_loss, np.log(285), atol=1e-4)
    assert result.predictions.tolist() == [0, 0, 0, 0]
    assert result.report.test_accuracy == 0.25
    assert result.confusion.total == 4


def test_evaluation_is_deterministic():
    net = build(preset("model-5", 3), SMALL, seed=4)
    x, y = _inputs(6, seed=1), np.array([0, 1, 2, 0, 1, 2])
    a, b = evaluate(net, x, y, batch_size=4), evaluate(net, x, y, batch_size=4)
    assert a.report == b.report
    assert np.array_equal(a.probabilities, b.probabilities)


def test_shape_mismatch_names_both_shapes():
    net = build(preset("model-5", 3), SMALL)
    with pytest.raises(ShapeError, match=r"\(13, 24\).*\(16, 24\)"):
        evaluate(net, np.zeros((2, 13, 24), np.float32), [0, 1])


def test_label_count_must_match_head():
    net = build(preset("model-5", 3), SMALL)
    with pytest.raises(ShapeError):
        evaluate(net, _inputs(2), [0, 1], class_labels=["a", "b"])


def test_predictions_frame_and_artifacts(tmp_path):
    net = build(preset("model-5", 3), SMALL, seed=2)
    labels = ["spk_a", "spk_b", "spk_c"]
    result = evaluate(net, _inputs(6), np.array([0, 1, 2, 0, 1, 2]), labels)
    ids = [f"u{i}-0" for i in range(6)]

    frame = predictions_frame(result, ids)
    assert list(frame.columns) == PREDICTION_COLUMNS
    assert frame["true_speaker"].tolist() == ["spk_a", "spk_b", "spk_c"] * 2
    assert ((frame["confidence"] > 0) & (frame["confidence"] <= 1)).all()

    paths = write_evaluation(tmp_path, result, ids, "model-5-mel", best_val_accuracy=0.5, best_epoch=3)
    record = json.loads(paths["evaluation"].read_text())
    assert record["model"] == "model-5-mel"
    assert record["epoch_converged"] == 3
    assert record["averaging"] == "weighted"
    assert record["num_test_samples"] == 6

    confusion = pd.read_csv(paths["confusion"], index_col=0)
    assert list(confusion.columns) == labels
    assert confusion.to_numpy().sum() == 6
    assert len(pd.read_csv(paths["per_class"])) == 3
    assert len(pd.read_csv(paths["predictions"])) == 6


# -------------------------
# results table
# -------------------------

def test_results_table_keeps_order_and_columns(tmp_path):
    net = _zero_head_network(3)
    result = evaluate(net, _inputs(3), np.array([0, 1, 2]))
    for name in ("model-2-mel", "model-1-mfcc"):
        write_evaluation(tmp_path / name, result, ["a", "b", "c"], name, best_val_accuracy=0.4, best_epoch=2)
    records = load_evaluation_records([tmp_path / "model-2-mel", tmp_path / "model-1-mfcc" / "evaluation.json"])
    table = build_results_table(records)
    assert table["Model"].tolist() == ["model-2-mel", "model-1-mfcc"]
    assert list(table.columns) == [
        "Model", "Best Val Accuracy", "Test Accuracy", "Test Loss", "Precision", "Recall",
        "F1-Score", "Epoch Converged", "Time Taken (minutes)",
    ]
    path = write_results_table(table, tmp_path / "results.csv")
    assert len(pd.read_csv(path)) == 2


def test_time_taken_comes_from_timing_file(tmp_path):
    result = evaluate(_zero_head_network(2), _inputs(2), np.array([0, 1]))
    for name in ("timed", "untimed"):
        write_evaluation(tmp_path / name, result, ["a", "b"], name)
    (tmp_path / "timed" / TIMING_FILE).write_text(json.dumps({"time_taken_minutes": 2.5}))

    record = json.loads((tmp_path / "timed" / "evaluation.json").read_text())
    assert "time_taken_minutes" not in record

    table = build_results_table(load_evaluation_records([tmp_path / "timed", tmp_path / "untimed"]))
    assert table["Time Taken (minutes)"].iloc[0] == 2.5
    assert pd.isna(table["Time Taken (minutes)"].iloc[1])


def test_missing_record_is_skipped_with_a_warning(tmp_path, capsys):
    assert load_evaluation_records([tmp_path / "nowhere"]) == []
    assert "No evaluation record" in capsys.readouterr().err
    assert build_results_table([]).empty


def test_training_summary_defaults_to_none():
    net = _zero_head_network(2)
    record = evaluation_record(evaluate(net, _inputs(2), np.array([0, 1])), "m")
    assert record["best_val_accuracy"] is None
    assert record["epoch_converged"] is None
