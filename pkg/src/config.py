# src/config.py
"""
config.py
=========

Default pipeline settings and the layering used by every run:

    DEFAULTS  <  JSON config file (--config)  <  command-line flags

Settings live in one nested dictionary so a whole run can be snapshotted into
its manifest. Typed views (`stft_config`, `train_config`, ...) convert the
relevant section into the dataclasses the modules consume.
"""

import copy
import json
from pathlib import Path
from typing import Any

from .errors import ConfigurationError

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "out": "runs",
    "audio": {
        "sample_rate_hz": 16000,
        "chunk_seconds": 3.0,
        "preemphasis": 0.97,
    },
    "features": {
        "kind": "mel",
        "window_length_samples": 400,
        "hop_samples": 160,
        "fft_size": 512,
        "window": "hann",
        "n_mels": 64,
        "n_mfcc": 13,
        "f_min": 0.0,
        "f_max": 8000.0,
    },
    "split": {"train": 0.8, "val": 0.1, "test": 0.1},
    "train": {
        "learning_rate": 0.001,
        "batch_size": 32,
        "max_epochs": 50,
        "patience": 5,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
    },
    "synth": {
        "n_speakers": 10,
        "n_accent_clusters": 3,
        "utterances_per_speaker": 40,
        "duration_s": 3.0,
    },
    "tune": {"trials": 15, "base_model": "model-1"},
}

# CLI spellings of feature kinds -> FeatureMatrix kinds
FEATURE_KINDS = {"mel": "mel_spectrogram", "mfcc": "mfcc"}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigurationError(f"Unknown configuration key '{where}'.")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigurationError(f"Configuration key '{where}' must be an object.")
            merged[key] = _merge(base[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(path: str | Path | None = None) -> dict[str, Any]:
    """Return DEFAULTS deep-merged with the JSON file at `path` (if any)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        override = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(override, dict):
        raise ConfigurationError(f"Config file {path} must contain a JSON object.")
    return _merge(DEFAULTS, override)


def apply_overrides(config: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """
    Apply flag values given as dotted keys (``"train.max_epochs": 3``).
    `None` values mean "flag not given" and are ignored.
    """
    nested: dict[str, Any] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = nested
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    return _merge(config, nested)


def stft_config(config: dict[str, Any]):
    from .features_dsp import StftConfig

    f = config["features"]
    return StftConfig(
        window_length_samples=int(f["window_length_samples"]),
        hop_samples=int(f["hop_samples"]),
        fft_size=int(f["fft_size"]),
        window=f["window"],
    )


def feature_kind(config: dict[str, Any]) -> str:
    kind = config["features"]["kind"]
    if kind not in FEATURE_KINDS:
        raise ConfigurationError(f"Unknown feature kind '{kind}'; expected one of {sorted(FEATURE_KINDS)}.")
    return FEATURE_KINDS[kind]


def train_config(config: dict[str, Any]):
    from .trainer import TrainConfig

    return TrainConfig(seed=int(config["seed"]), **config["train"])


def split_fractions(config: dict[str, Any]) -> tuple[float, float, float]:
    s = config["split"]
    return float(s["train"]), float(s["val"]), float(s["test"])
