# src/trainer.py
"""
trainer.py
==========

Mini-batch training with Adam and early stopping on validation loss.

Main entry points
-----------------
- `split_dataset(speaker_ids, fractions, seed)`: stratified per-speaker split
- `adam_step(params, grads, state, t, cfg)`: one in-place Adam update
- `early_stopping_update(state, epoch, val_loss, patience)`: patience counter
- `train(network, x_train, y_train, x_val, y_val, cfg)`: the epoch loop
- `save_checkpoint(...)` / `load_checkpoint(...)`: VXW1 weights + JSON sidecar
"""

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import tensor_engine as te
from .errors import ConfigurationError, DivergenceError, ShapeError, SplitError
from .features_dsp import FeatureStats
from .layers import Network
from .log_utils import debug, info, warn
from .model_zoo import ModelSpec, build, spec_from_dict, spec_to_dict
from .tensor_engine import Parameter

WEIGHTS_FILE = "model.vxw"
SIDECAR_FILE = "model.json"
TRAIN_LOG_FILE = "train-log.jsonl"
TIMING_FILE = "timing.json"

CONTINUE = "continue"
STOP = "stop"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}.")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError(
                f"batch_size and max_epochs must be >= 1, got {self.batch_size} and {self.max_epochs}."
            )
        if self.patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {self.patience}.")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0) or self.epsilon <= 0:
            raise ConfigurationError("Adam needs beta1, beta2 in [0, 1) and epsilon > 0.")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        """The logged fields; wall-clock time is kept out of the log and goes to `timing.json`."""
        d = asdict(self)
        del d["wall_seconds"]
        return d

    def deterministic_fields(self) -> tuple:
        """Every field except the wall-clock time."""
        return self.epoch, self.train_loss, self.train_accuracy, self.val_loss, self.val_accuracy


# -------------------------
# Adam
# -------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Sequence[Parameter],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    cfg: TrainConfig,
) -> AdamState:
    """
    Update `params` in place with bias-corrected Adam moments.

    Moments start at zero the first time a parameter name is seen. A
    non-finite gradient aborts before any parameter is touched.
    """
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}.")
    for p in params:
        if not np.all(np.isfinite(grads[p.name])):
            raise DivergenceError(f"Non-finite gradient for parameter '{p.name}' at step {t}.")

    b1, b2 = cfg.beta1, cfg.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for p in params:
        g = grads[p.name]
        m = state.m.setdefault(p.name, np.zeros_like(p.data))
        v = state.v.setdefault(p.name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)).astype(p.dtype)
    state.t = t
    return state


# -------------------------
# Early stopping
# -------------------------

@dataclass
class EarlyStoppingState:
    best_loss: float = math.inf
    best_epoch: int = 0
    bad_epochs: int = 0

    @property
    def improved_last(self) -> bool:
        return self.bad_epochs == 0


def early_stopping_update(state: EarlyStoppingState, epoch: int, val_loss: float, patience: int) -> tuple[str, int]:
    """
    Track the minimum validation loss; stop after `patience` consecutive
    epochs without strict improvement. Returns (decision, best_epoch).
    """
    if val_loss < state.best_loss:
        state.best_loss = float(val_loss)
        state.best_epoch = epoch
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
    decision = STOP if state.bad_epochs >= patience else CONTINUE
    return decision, state.best_epoch


# -------------------------
# Splitting
# -------------------------

@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def to_dict(self) -> dict[str, list[int]]:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(*(np.asarray(d[k], dtype=np.int64) for k in ("train", "val", "test")))


def _split_count(n: int, fraction: float) -> int:
    if fraction <= 0:
        return 0
    return max(1, int(math.floor(n * fraction + 1e-9)))


def split_dataset(speaker_ids: Sequence[str], fractions: tuple[float, float, float], seed: int = 0) -> DatasetSplit:
    """
    Stratified split of chunk indices: each speaker's chunks are shuffled
    (seeded) and cut into val/test by floor(n·fraction), at least one chunk
    when the fraction is positive; the remainder goes to train.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-6):
        raise ConfigurationError(f"Split fractions must be three non-negative values summing to 1, got {fractions}.")
    f_train, f_val, f_test = fractions
    needed = sum(f > 0 for f in fractions)

    ids = np.asarray(list(speaker_ids), dtype=object)
    rng = np.random.default_rng(seed)
    parts: dict[str, list[np.ndarray]] = {"train": [], "val": [], "test": []}
    for speaker in sorted(set(ids.tolist())):
        idx = np.flatnonzero(ids == speaker)
        if len(idx) < needed:
            raise SplitError(f"Speaker '{speaker}' has {len(idx)} chunk(s); the split needs at least {needed}.")
        idx = idx[rng.permutation(len(idx))]
        n_val, n_test = _split_count(len(idx), f_val), _split_count(len(idx), f_test)
        n_train = len(idx) - n_val - n_test
        if f_train > 0 and n_train < 1:
            raise SplitError(f"Speaker '{speaker}' has {len(idx)} chunk(s); none would remain for training.")
        parts["val"].append(idx[:n_val])
        parts["test"].append(idx[n_val:n_val + n_test])
        parts["train"].append(idx[n_val + n_test:])

    def merged(key: str) -> np.ndarray:
        return np.sort(np.concatenate(parts[key])).astype(np.int64) if parts[key] else np.zeros(0, np.int64)

    split = DatasetSplit(merged("train"), merged("val"), merged("test"))
    info(f"Split {len(ids)} chunks into train/val/test = {len(split.train)}/{len(split.val)}/{len(split.test)}.")
    return split


# -------------------------
# Training loop
# -------------------------

@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_val_loss: float
    best_val_accuracy: float
    stopped_early: bool
    wall_seconds: float

    @property
    def epochs_run(self) -> int:
        return len(self.history)


def batch_slices(n: int, batch_size: int) -> list[slice]:
    """Consecutive batches; a trailing batch of one joins the previous batch."""
    bounds = list(range(0, n, batch_size)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        del bounds[-2]
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def evaluate_loss_accuracy(network: Network, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> tuple[float, float]:
    """Inference-mode mean loss and accuracy, no graph recorded."""
    total_loss, correct = 0.0, 0
    with te.no_grad():
        for sl in batch_slices(len(x), batch_size):
            loss, probs = te.softmax_cross_entropy(network.forward(x[sl], training=False), y[sl])
            total_loss += loss.item() * (sl.stop - sl.start)
            correct += int(np.sum(np.argmax(probs, axis=1) == y[sl]))
    return total_loss / len(x), correct / len(x)


def _check_labels(y: np.ndarray, num_classes: int, label: str) -> None:
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise ConfigurationError(
            f"{label} labels span [{y.min()}, {y.max()}] but the network has {num_classes} classes."
        )


def train(
    network: Network,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    log_path: str | Path | None = None,
) -> TrainResult:
    """
    Train `network` in place and leave it holding the best-epoch weights.

    Each epoch shuffles with a generator seeded from `cfg.seed`, runs
    train-mode mini-batches, then validates in inference mode. One
    EpochRecord per epoch is appended to `log_path` as JSON lines.
    """
    x_train, x_val = np.asarray(x_train), np.asarray(x_val)
    y_train, y_val = np.asarray(y_train, dtype=np.int64), np.asarray(y_val, dtype=np.int64)
    if len(x_train) == 0:
        raise ConfigurationError("Training set is empty.")
    if len(x_val) == 0:
        raise ConfigurationError("Validation set is empty; early stopping needs validation data.")
    if len(x_train) != len(y_train) or len(x_val) != len(y_val):
        raise ShapeError("Feature and label arrays differ in length.")
    _check_labels(y_train, network.num_classes, "Training")
    _check_labels(y_val, network.num_classes, "Validation")

    shuffle_rng = np.random.default_rng(cfg.seed)
    network.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    params = network.parameters()
    adam = AdamState()
    stopper = EarlyStoppingState()
    best_state = network.state_dict()
    history: list[EpochRecord] = []
    stopped_early = False

    log_file = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_file = log_path.open("w", encoding="utf-8")

    info(
        f"Training '{network.name}' ({network.parameter_count():,} parameters) on {len(x_train)} samples, "
        f"validating on {len(x_val)}; lr={cfg.learning_rate}, batch={cfg.batch_size}, max_epochs={cfg.max_epochs}."
    )
    started = time.perf_counter()
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            epoch_start = time.perf_counter()
            order = shuffle_rng.permutation(len(x_train))
            total_loss, correct = 0.0, 0
            for batch_index, sl in enumerate(batch_slices(len(order), cfg.batch_size), start=1):
                idx = order[sl]
                network.zero_grad()
                loss, probs = network.loss(x_train[idx], y_train[idx], training=True)
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    raise DivergenceError(f"Non-finite training loss at epoch {epoch}, batch {batch_index}.")
                grads = network.backward()
                adam_step(params, grads, adam, adam.t + 1, cfg)
                total_loss += loss_value * len(idx)
                correct += int(np.sum(np.argmax(probs, axis=1) == y_train[idx]))

            val_loss, val_acc = evaluate_loss_accuracy(network, x_val, y_val, max(cfg.batch_size, 64))
            record = EpochRecord(
                epoch=epoch,
                train_loss=total_loss / len(x_train),
                train_accuracy=correct / len(x_train),
                val_loss=val_loss,
                val_accuracy=val_acc,
                wall_seconds=time.perf_counter() - epoch_start,
            )
            history.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record.to_dict()) + "\n")
                log_file.flush()
            info(
                f"Epoch {epoch:3d}: loss {record.train_loss:.4f} acc {record.train_accuracy:.3f} | "
                f"val_loss {val_loss:.4f} val_acc {val_acc:.3f} ({record.wall_seconds:.1f}s)"
            )

            decision, best_epoch = early_stopping_update(stopper, epoch, val_loss, cfg.patience)
            if stopper.improved_last:
                best_state = network.state_dict()
            else:
                debug(f"No val_loss improvement for {stopper.bad_epochs} epoch(s); best is epoch {best_epoch}.")
            if decision == STOP:
                stopped_early = True
                info(f"Early stopping at epoch {epoch}; restoring weights from epoch {best_epoch}.")
                break
    finally:
        if log_file is not None:
            log_file.close()

    if stopper.best_epoch == 0:
        warn("Validation loss never became finite; keeping the initial weights.")
    network.load_state_dict(best_state)
    best = history[stopper.best_epoch - 1] if stopper.best_epoch else history[-1]
    return TrainResult(
        history=history,
        best_epoch=stopper.best_epoch,
        best_val_loss=best.val_loss,
        best_val_accuracy=best.val_accuracy,
        stopped_early=stopped_early,
        wall_seconds=time.perf_counter() - started,
    )


def read_train_log(path: str | Path) -> list[EpochRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [EpochRecord(**json.loads(line)) for line in lines if line.strip()]


def write_timing(out_dir: str | Path, result: TrainResult) -> Path:
    """
    Wall-clock figures of one training run. This is the only training output
    that differs between two runs with the same seed.
    """
    timing = {
        "time_taken_minutes": result.wall_seconds / 60.0,
        "epoch_wall_seconds": [r.wall_seconds for r in result.history],
    }
    path = Path(out_dir) / TIMING_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    te.atomic_write_bytes(path, (json.dumps(timing, indent=2) + "\n").encode("utf-8"))
    return path


def read_timing(directory: str | Path) -> dict | None:
    path = Path(directory) / TIMING_FILE
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))


# -------------------------
# Checkpoints
# -------------------------

@dataclass
class Checkpoint:
    network: Network
    spec: ModelSpec
    config: TrainConfig
    class_labels: list[str]
    input_shape: tuple[int, int]
    feature_stats: FeatureStats | None
    split: DatasetSplit | None
    extras: dict[str, Any]


def save_checkpoint(
    out_dir: str | Path,
    network: Network,
    spec: ModelSpec,
    cfg: TrainConfig,
    class_labels: Iterable[str],
    feature_stats: FeatureStats | None = None,
    split: DatasetSplit | None = None,
    **extras,
) -> Path:
    """Write `model.vxw` and its `model.json` sidecar into `out_dir` (both atomically)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    network.save(out_dir / WEIGHTS_FILE)
    sidecar = {
        "spec": spec_to_dict(spec),
        "train_config": asdict(cfg),
        "class_labels": list(class_labels),
        "input_shape": list(network.input_shape),
        "feature_stats": feature_stats.to_dict() if feature_stats is not None else None,
        "split": split.to_dict() if split is not None else None,
        **extras,
    }
    te.atomic_write_bytes(out_dir / SIDECAR_FILE, (json.dumps(sidecar, indent=2) + "\n").encode("utf-8"))
    info(f"Checkpoint written to {out_dir}.")
    return out_dir


def load_checkpoint(ckpt_dir: str | Path) -> Checkpoint:
    ckpt_dir = Path(ckpt_dir)
    sidecar = json.loads((ckpt_dir / SIDECAR_FILE).read_text(encoding="utf-8"))
    spec = spec_from_dict(sidecar.pop("spec"))
    cfg = TrainConfig(**sidecar.pop("train_config"))
    input_shape = tuple(sidecar.pop("input_shape"))
    network = build(spec, input_shape, seed=cfg.seed)
    network.load(ckpt_dir / WEIGHTS_FILE)
    stats = sidecar.pop("feature_stats")
    split = sidecar.pop("split")
    return Checkpoint(
        network=network,
        spec=spec,
        config=cfg,
        class_labels=list(sidecar.pop("class_labels")),
        input_shape=input_shape,
        feature_stats=FeatureStats.from_dict(stats) if stats else None,
        split=DatasetSplit.from_dict(split) if split else None,
        extras=sidecar,
    )
