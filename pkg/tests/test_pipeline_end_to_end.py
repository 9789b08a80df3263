"""
Full pipeline on a small synthetic corpus through the command-line entry point.
Marked slow: run with `pytest -m slow`.
"""

import json
import time

import pandas as pd
import pytest

from src.cli import EXIT_OK, dispatch


@pytest.mark.slow
def test_synth_extract_train_evaluate_bias_report(tmp_path):
    out = tmp_path / "run"
    common = ["--out", str(out), "--seed", "3", "--threads", "2"]

    assert dispatch(["synth", "--speakers", "4", "--accents", "2", "--utterances", "10", "--duration", "3.0",
                     *common]) == EXIT_OK
    assert dispatch(["extract", "--corpus", str(out / "corpus"), "--features", "mel", "--preview", *common]) == EXIT_OK
    store = out / "features-mel"
    assert len(pd.read_csv(store / "index.csv")) == 40

    assert dispatch(["train", "--data", str(store), "--model", "model-5", "--epochs", "2", "--batch-size", "8",
                     "--name", "m5", *common]) == EXIT_OK
    ckpt = out / "m5"
    assert (ckpt / "model.vxw").exists()
    assert len((ckpt / "train-log.jsonl").read_text().splitlines()) <= 2

    assert dispatch(["evaluate", "--checkpoint", str(ckpt), *common]) == EXIT_OK
    eval_dir = out / "eval-m5"
    record = json.loads((eval_dir / "evaluation.json").read_text())
    assert record["num_test_samples"] == 4
    assert 0.0 <= record["test_accuracy"] <= 1.0
    assert (eval_dir / "confusion-top20.png").exists()

    assert dispatch(["bias", "--predictions", str(eval_dir / "predictions.csv"),
                     "--metadata", str(out / "corpus" / "metadata.csv"), *common]) == EXIT_OK
    bias = json.loads((out / "bias" / "bias-report.json").read_text())
    assert set(bias["gender"]["per_group_accuracy"]) <= {"female", "male"}
    assert sum(bias["accent"]["support"].values()) == 4

    assert dispatch(["report", str(eval_dir), *common]) == EXIT_OK
    table = pd.read_csv(out / "results.csv")
    assert table["Model"].tolist() == ["model-5-mel"]

    for command in ("synth", "extract", "train", "evaluate", "bias", "report"):
        assert (out / f"manifest-{command}.json").exists()


# Desk-scale acceptance run. The corpus, features, preset and split are the
# defaults (10 speakers x 40 three-second utterances, Mel 64x298, model-5,
# 80/10/10). Training is shortened to fit the wall-clock limit: at most 10
# epochs, patience 3, batch size 16, learning rate left at 1e-3.
ACCEPTANCE_TRAINING = {"train": {"max_epochs": 10, "patience": 3, "batch_size": 16}}
ACCEPTANCE_MINUTES = 15.0


@pytest.mark.slow
def test_acceptance_run_reaches_ninety_percent_and_mel_beats_mfcc(tmp_path):
    started = time.perf_counter()
    config = tmp_path / "acceptance.json"
    config.write_text(json.dumps(ACCEPTANCE_TRAINING))
    out = tmp_path / "run"
    common = ["--out", str(out), "--config", str(config), "--threads", "4", "--no-plots"]

    assert dispatch(["synth", *common]) == EXIT_OK
    accuracy = {}
    for kind in ("mel", "mfcc"):
        assert dispatch(["extract", "--corpus", str(out / "corpus"), "--features", kind, *common]) == EXIT_OK
        assert len(pd.read_csv(out / f"features-{kind}" / "index.csv")) == 400
        assert dispatch(["train", "--data", str(out / f"features-{kind}"), "--model", "model-5", *common]) == EXIT_OK
        assert dispatch(["evaluate", "--checkpoint", str(out / f"model-5-{kind}"), *common]) == EXIT_OK
        record = json.loads((out / f"eval-model-5-{kind}" / "evaluation.json").read_text())
        assert record["num_test_samples"] == 40
        accuracy[kind] = record["test_accuracy"]

    sidecar = json.loads((out / "model-5-mel" / "model.json").read_text())
    assert sidecar["input_shape"] == [64, 298]
    assert accuracy["mel"] >= 0.90
    assert accuracy["mel"] >= accuracy["mfcc"]
    assert (time.perf_counter() - started) / 60.0 < ACCEPTANCE_MINUTES
