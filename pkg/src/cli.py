# src/cli.py
"""
cli.py
======

Command-line entry point: `python -m src <subcommand> [options]`.

Subcommands
-----------
- `synth`     write a synthetic speaker corpus (`<out>/corpus`)
- `extract`   ingest a corpus and write a Mel or MFCC feature store
- `train`     train a preset or spec-file model on a feature store
- `evaluate`  evaluate a checkpoint on its held-out test split
- `tune`      random hyperparameter search
- `bias`      per-gender / per-accent accuracy from a predictions file
- `report`    merge evaluation records into the results table CSV

Every subcommand accepts `--seed`, `--config`, `--out`, `--threads`,
`--verbose` and `--no-plots`; flags override the config file, which
overrides the built-in defaults. Exit codes: 0 success, 1 usage error,
2 runtime error. Logs go to stderr; results go to files under `--out`.
"""

import argparse
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from .audio_ingest import ingest_corpus, load_metadata
from .bias_analysis import bias_report, write_bias_report
from .config import apply_overrides, feature_kind, load_config, split_fractions, stft_config, train_config
from .errors import VoxSentinelError
from .evaluator import evaluate, write_evaluation
from .feature_store import extract_to_store, load_feature_set
from .features_dsp import MEL_SPECTROGRAM, MFCC, compute_feature_stats, extract, normalize_array
from .hyper_tuner import BEST_TRIAL_FILE, RESULTS_FILE, SearchSpace, run_search, sample_trials, write_best_trial
from .log_utils import error, info, set_verbose
from .metrics import topk_confusion
from .metrics_service import build_results_table, load_evaluation_records, write_results_table
from .model_zoo import PRESET_NAMES, build, resolve_spec, write_spec
from .run_manifest import RunManifest
from .synth_corpus import generate_corpus, generate_profiles
from .trainer import (
    SIDECAR_FILE,
    TIMING_FILE,
    TRAIN_LOG_FILE,
    WEIGHTS_FILE,
    load_checkpoint,
    save_checkpoint,
    split_dataset,
    train,
    write_timing,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="Master seed (default 0).")
    g.add_argument("--config", type=Path, default=None, help="JSON config file layered over the defaults.")
    g.add_argument("--out", type=Path, default=None, help="Output directory (default 'runs').")
    g.add_argument("--threads", type=int, default=None, help="Worker threads for parallel stages.")
    g.add_argument("-v", "--verbose", action="store_true", help="Show progress (INFO) logs.")
    g.add_argument("--debug", action="store_true", help="Show DEBUG logs as well.")
    g.add_argument("--no-plots", action="store_true", help="Skip figure generation.")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voxsentinel", description="Speaker identification pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>", required=True)
    common = [_common_flags()]

    p = sub.add_parser("synth", parents=common, help="Generate a synthetic speaker corpus.")
    p.add_argument("--speakers", type=int, default=None, help="Number of speakers.")
    p.add_argument("--accents", type=int, default=None, help="Number of accent (formant) clusters.")
    p.add_argument("--utterances", type=int, default=None, help="Utterances per speaker.")
    p.add_argument("--duration", type=float, default=None, help="Utterance length in seconds.")

    p = sub.add_parser("extract", parents=common, help="Extract Mel or MFCC features from a corpus.")
    p.add_argument("--corpus", type=Path, required=True, help="Corpus directory (<speaker>/<utterance>.wav).")
    p.add_argument("--features", choices=["mel", "mfcc"], default=None, help="Feature kind (default from config).")
    p.add_argument("--preview", action="store_true", help="Plot Mel vs MFCC for the first chunk.")

    p = sub.add_parser("train", parents=common, help="Train a model on a feature store.")
    p.add_argument("--data", type=Path, required=True, help="Feature store directory written by 'extract'.")
    p.add_argument("--model", default="model-1", help=f"Preset ({', '.join(PRESET_NAMES)}) or spec JSON path.")
    p.add_argument("--epochs", type=int, default=None, help="Maximum epochs.")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate.")
    p.add_argument("--patience", type=int, default=None, help="Early-stopping patience.")
    p.add_argument("--name", default=None, help="Run directory name (default <model>-<features>).")

    p = sub.add_parser("evaluate", parents=common, help="Evaluate a checkpoint on its test split.")
    p.add_argument("--checkpoint", type=Path, required=True, help="Directory holding model.vxw and model.json.")
    p.add_argument("--data", type=Path, default=None, help="Feature store (default: the one used for training).")

    p = sub.add_parser("tune", parents=common, help="Random hyperparameter search.")
    p.add_argument("--data", type=Path, required=True, help="Feature store directory.")
    p.add_argument("--trials", type=int, default=None, help="Number of trials.")
    p.add_argument("--model", default=None, help="Base preset or spec JSON (default from config).")
    p.add_argument("--epochs", type=int, default=None, help="Maximum epochs per trial.")

    p = sub.add_parser("bias", parents=common, help="Gender / accent accuracy breakdown.")
    p.add_argument("--predictions", type=Path, required=True, help="predictions.csv written by 'evaluate'.")
    p.add_argument("--metadata", type=Path, required=True, help="speaker_id,gender,accent table.")

    p = sub.add_parser("report", parents=common, help="Merge evaluation records into the results table.")
    p.add_argument("evaluations", nargs="+", type=Path, help="evaluation.json files or their directories.")
    p.add_argument("--output", type=Path, default=None, help="CSV path (default <out>/results.csv).")
    return parser


# -------------------------
# helpers
# -------------------------

def _resolve_config(args) -> dict:
    overrides = {"seed": args.seed, "threads": args.threads, "out": str(args.out) if args.out else None}
    command_overrides = {
        "synth": {
            "synth.n_speakers": "speakers",
            "synth.n_accent_clusters": "accents",
            "synth.utterances_per_speaker": "utterances",
            "synth.duration_s": "duration",
        },
        "train": {
            "train.max_epochs": "epochs",
            "train.batch_size": "batch_size",
            "train.learning_rate": "lr",
            "train.patience": "patience",
        },
        "tune": {"train.max_epochs": "epochs", "tune.trials": "trials", "tune.base_model": "model"},
    }
    for key, attr in command_overrides.get(args.command, {}).items():
        overrides[key] = getattr(args, attr)
    if getattr(args, "features", None):
        overrides["features.kind"] = args.features
    return apply_overrides(load_config(args.config), overrides)


def _feature_params(config: dict, kind: str) -> dict:
    f = config["features"]
    params = {"n_mels": int(f["n_mels"]), "f_min": float(f["f_min"]), "f_max": float(f["f_max"])}
    if kind == MFCC:
        params["n_mfcc"] = int(f["n_mfcc"])
    return params


def _prepare_dataset(data_dir: Path, config: dict):
    """Load a store, split it, and standardise with training-split statistics."""
    data = load_feature_set(data_dir)
    class_labels = data.class_labels()
    y = data.encode_labels(class_labels)
    split = split_dataset(data.speaker_ids, split_fractions(config), int(config["seed"]))
    stats = compute_feature_stats(data.values[split.train])
    x = normalize_array(data.values, stats).astype(np.float32)
    return data, class_labels, x, y, split, stats


def _short_kind(kind: str) -> str:
    return "mel" if kind == MEL_SPECTROGRAM else "mfcc"


# -------------------------
# subcommands
# -------------------------

def cmd_synth(args, config, manifest: RunManifest, out: Path) -> None:
    s = config["synth"]
    profiles = generate_profiles(int(s["n_speakers"]), int(s["n_accent_clusters"]), int(config["seed"]))
    corpus = out / "corpus"
    paths = generate_corpus(
        profiles,
        int(s["utterances_per_speaker"]),
        float(s["duration_s"]),
        corpus,
        seed=int(config["seed"]),
        threads=int(config["threads"]),
        sample_rate_hz=int(config["audio"]["sample_rate_hz"]),
    )
    manifest.add_outputs(*paths, corpus / "metadata.csv")


def cmd_extract(args, config, manifest: RunManifest, out: Path) -> None:
    a = config["audio"]
    kind = feature_kind(config)
    cfg = stft_config(config)
    manifest.add_input(args.corpus)
    chunks = ingest_corpus(
        args.corpus, int(a["sample_rate_hz"]), float(a["preemphasis"]), float(a["chunk_seconds"]),
        int(config["threads"]),
    )
    if not chunks:
        raise VoxSentinelError(f"No usable audio chunks found under {args.corpus}.")
    store = out / f"features-{_short_kind(kind)}"
    index = extract_to_store(chunks, store, kind, cfg, int(config["threads"]), **_feature_params(config, kind))
    manifest.add_outputs(*(store / f for f in index["file"]), store / "index.csv", store / "extraction.json")

    if args.preview and not args.no_plots:
        from .plots import plot_feature_comparison

        first = chunks[0]
        mel = extract(first, MEL_SPECTROGRAM, cfg, **_feature_params(config, MEL_SPECTROGRAM))
        cep = extract(first, MFCC, cfg, **_feature_params(config, MFCC))
        manifest.add_outputs(plot_feature_comparison(mel, cep, store / "feature-comparison.png", first.utterance_id))


def cmd_train(args, config, manifest: RunManifest, out: Path) -> None:
    manifest.add_input(args.data)
    data, class_labels, x, y, split, stats = _prepare_dataset(args.data, config)
    spec = resolve_spec(args.model, len(class_labels), data.kind)
    cfg = train_config(config)
    run_dir = out / (args.name or f"{spec.name}-{_short_kind(data.kind)}")

    network = build(spec, data.input_shape, seed=cfg.seed)
    result = train(
        network, x[split.train], y[split.train], x[split.val], y[split.val], cfg, log_path=run_dir / TRAIN_LOG_FILE
    )
    save_checkpoint(
        run_dir, network, spec, cfg, class_labels, stats, split,
        best_val_accuracy=result.best_val_accuracy,
        best_epoch=result.best_epoch,
        epochs_run=result.epochs_run,
        stopped_early=result.stopped_early,
        data_dir=Path(os.path.relpath(args.data, run_dir)).as_posix(),
    )
    manifest.add_outputs(
        run_dir / WEIGHTS_FILE, run_dir / SIDECAR_FILE, run_dir / TRAIN_LOG_FILE, write_timing(run_dir, result)
    )
    if not args.no_plots:
        from .plots import plot_training_curves

        manifest.add_outputs(plot_training_curves(result.history, run_dir / "training-curves.png", spec.name))


def cmd_evaluate(args, config, manifest: RunManifest, out: Path) -> None:
    manifest.add_input(args.checkpoint)
    ckpt = load_checkpoint(args.checkpoint)
    # the sidecar stores the training store relative to the checkpoint directory
    data_dir = args.data or Path(args.checkpoint) / ckpt.extras.get("data_dir", "")
    manifest.add_input(data_dir)
    data = load_feature_set(data_dir)
    if ckpt.split is None or ckpt.feature_stats is None:
        raise VoxSentinelError(f"Checkpoint {args.checkpoint} carries no split or feature statistics.")

    test = ckpt.split.test
    x = normalize_array(data.values[test], ckpt.feature_stats).astype(np.float32)
    y = data.subset(test).encode_labels(ckpt.class_labels)
    result = evaluate(ckpt.network, x, y, ckpt.class_labels)

    model_name = f"{ckpt.spec.name}-{_short_kind(data.kind)}"
    eval_dir = out / f"eval-{Path(args.checkpoint).name}"
    paths = write_evaluation(
        eval_dir, result, data.utterance_ids[test], model_name,
        best_val_accuracy=ckpt.extras.get("best_val_accuracy"),
        best_epoch=ckpt.extras.get("best_epoch"),
    )
    manifest.add_outputs(*paths.values())
    timing = Path(args.checkpoint) / TIMING_FILE
    if timing.exists():
        manifest.add_outputs(shutil.copyfile(timing, eval_dir / TIMING_FILE))
    if not args.no_plots:
        from .plots import plot_confusion_heatmap

        top = topk_confusion(result.confusion, min(20, result.confusion.num_classes))
        manifest.add_outputs(plot_confusion_heatmap(top, eval_dir / "confusion-top20.png", f"{model_name}: top speakers"))


def cmd_tune(args, config, manifest: RunManifest, out: Path) -> None:
    manifest.add_input(args.data)
    data, class_labels, x, y, split, _ = _prepare_dataset(args.data, config)
    t = config["tune"]
    base_spec = resolve_spec(t["base_model"], len(class_labels), data.kind)
    trials = sample_trials(int(t["trials"]), base_spec, SearchSpace(), int(config["seed"]))
    tune_dir = out / "tune"
    outcome = run_search(
        trials, base_spec, (x[split.train], y[split.train], x[split.val], y[split.val]), train_config(config),
        results_path=tune_dir / RESULTS_FILE, workers=int(config["threads"]),
    )
    manifest.add_outputs(
        tune_dir / RESULTS_FILE,
        write_best_trial(outcome, tune_dir / BEST_TRIAL_FILE),
        write_spec(outcome.best_spec, tune_dir / "best-model.json"),
    )


def cmd_bias(args, config, manifest: RunManifest, out: Path) -> None:
    import pandas as pd

    manifest.add_input(args.predictions)
    manifest.add_input(args.metadata)
    predictions = pd.read_csv(args.predictions, dtype={"true_speaker": str, "predicted_speaker": str})
    report = bias_report(predictions, load_metadata(args.metadata))
    paths = write_bias_report(report, out / "bias")
    manifest.add_outputs(*paths.values())
    if not args.no_plots:
        from .plots import plot_group_accuracy

        manifest.add_outputs(plot_group_accuracy(report, out / "bias" / "group-accuracy.png"))


def cmd_report(args, config, manifest: RunManifest, out: Path) -> None:
    for p in args.evaluations:
        manifest.add_input(p)
    table = build_results_table(load_evaluation_records(args.evaluations))
    manifest.add_outputs(write_results_table(table, args.output or out / "results.csv"))


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "bias": cmd_bias,
    "report": cmd_report,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)

    set_verbose(args.verbose or args.debug, debug=args.debug)
    try:
        config = _resolve_config(args)
        out = Path(config["out"])
        out.mkdir(parents=True, exist_ok=True)
        snapshot = {
            "settings": config,
            "args": {k: str(v) for k, v in sorted(vars(args).items()) if k not in ("verbose", "debug")},
        }
        manifest = RunManifest(args.command, snapshot)
        COMMANDS[args.command](args, config, manifest, out)
        path = manifest.write(out)
        info(f"{args.command} finished; manifest written to {path}.")
        return EXIT_OK
    except (VoxSentinelError, OSError, ValueError, LookupError, ArithmeticError) as e:
        error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME


def main() -> int:
    return dispatch(sys.argv[1:])
