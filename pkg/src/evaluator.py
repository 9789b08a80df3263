# src/evaluator.py
"""
Evaluator
=========
Runs a trained network over a test set in inference mode and writes the
evaluation artifacts:

- `evaluation.json`   test accuracy / loss, weighted precision / recall / F1,
                      plus best validation accuracy, converged epoch and
                      training time carried over from the checkpoint
- `confusion.csv`     full confusion matrix with speaker ids as header row/column
- `confusion-top20.csv` the 20 highest-support speakers
- `per-class.csv`     per-speaker precision / recall / F1 / support
- `predictions.csv`   one row per test chunk (consumed by bias analysis)
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import tensor_engine as te
from .errors import ShapeError
from .layers import Network
from .log_utils import info
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    argmax_predictions,
    confusion_matrix,
    metrics_from_confusion,
    per_class_metrics,
    topk_confusion,
)
from .trainer import batch_slices

EVALUATION_FILE = "evaluation.json"
CONFUSION_FILE = "confusion.csv"
TOPK_CONFUSION_FILE = "confusion-top20.csv"
PER_CLASS_FILE = "per-class.csv"
PREDICTIONS_FILE = "predictions.csv"
PREDICTION_COLUMNS = ["utterance_id", "true_speaker", "predicted_speaker", "confidence"]
TOP_K = 20


@dataclass(eq=False)
class EvaluationResult:
    report: MetricsReport
    confusion: ConfusionMatrix
    probabilities: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray


def evaluate(
    network: Network,
    x_test: np.ndarray,
    y_test: np.ndarray,
    class_labels: list[str] | None = None,
    batch_size: int = 64,
) -> EvaluationResult:
    """Inference-mode loss, argmax predictions and metrics over a test set."""
    x_test = np.asarray(x_test)
    y_test = np.asarray(y_test, dtype=np.int64)
    if x_test.ndim < 3 or tuple(x_test.shape[1:3]) != network.input_shape:
        raise ShapeError(
            f"Test features have shape {tuple(x_test.shape[1:3])} but network '{network.name}' "
            f"expects {network.input_shape}."
        )
    if len(x_test) == 0:
        raise ShapeError("Test set is empty.")
    k = network.num_classes
    labels = list(class_labels) if class_labels is not None else [str(i) for i in range(k)]
    if len(labels) != k:
        raise ShapeError(f"{len(labels)} class labels given for a network with {k} outputs.")

    probs, total_loss = [], 0.0
    with te.no_grad():
        for sl in batch_slices(len(x_test), batch_size):
            loss, p = te.softmax_cross_entropy(network.forward(x_test[sl], training=False), y_test[sl])
            total_loss += loss.item() * (sl.stop - sl.start)
            probs.append(p)
    probabilities = np.concatenate(probs)
    predictions = argmax_predictions(probabilities)

    cm = confusion_matrix(y_test, predictions, k, labels)
    report = metrics_from_confusion(cm)
    report.test_loss = total_loss / len(x_test)
    info(
        f"Evaluated {len(x_test)} chunks: accuracy {report.test_accuracy:.4f}, loss {report.test_loss:.4f}, "
        f"weighted F1 {report.f1:.4f}."
    )
    return EvaluationResult(report, cm, probabilities, predictions, y_test)


def predictions_frame(result: EvaluationResult, utterance_ids) -> pd.DataFrame:
    labels = result.confusion.class_labels
    return pd.DataFrame(
        {
            "utterance_id": list(utterance_ids),
            "true_speaker": [labels[i] for i in result.labels],
            "predicted_speaker": [labels[i] for i in result.predictions],
            "confidence": result.probabilities[np.arange(len(result.predictions)), result.predictions],
        },
        columns=PREDICTION_COLUMNS,
    )


def evaluation_record(result: EvaluationResult, model_name: str, **training_summary) -> dict:
    """The results-table row for one model (see metrics_service)."""
    r = result.report
    return {
        "model": model_name,
        "best_val_accuracy": training_summary.get("best_val_accuracy"),
        "test_accuracy": r.test_accuracy,
        "test_loss": r.test_loss,
        "precision": r.precision,
        "recall": r.recall,
        "f1": r.f1,
        "epoch_converged": training_summary.get("best_epoch"),
        "averaging": r.averaging,
        "num_test_samples": result.confusion.total,
    }


def write_evaluation(
    out_dir: str | Path,
    result: EvaluationResult,
    utterance_ids,
    model_name: str,
    **training_summary,
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "evaluation": out_dir / EVALUATION_FILE,
        "confusion": out_dir / CONFUSION_FILE,
        "confusion_top": out_dir / TOPK_CONFUSION_FILE,
        "per_class": out_dir / PER_CLASS_FILE,
        "predictions": out_dir / PREDICTIONS_FILE,
    }
    record = evaluation_record(result, model_name, **training_summary)
    paths["evaluation"].write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    result.confusion.to_frame().to_csv(paths["confusion"], lineterminator="\n")
    top = topk_confusion(result.confusion, min(TOP_K, result.confusion.num_classes))
    top.to_frame().to_csv(paths["confusion_top"], lineterminator="\n")
    per_class_metrics(result.confusion).to_csv(paths["per_class"], index=False, lineterminator="\n")
    predictions_frame(result, utterance_ids).to_csv(paths["predictions"], index=False, lineterminator="\n")
    info(f"Evaluation artifacts written to {out_dir}.")
    return paths

