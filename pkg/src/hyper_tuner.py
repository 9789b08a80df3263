# src/hyper_tuner.py
"""
hyper_tuner.py
==============

Random search over learning rate, dropout rate and the activation used in
each activation slot of a base ModelSpec.

- `sample_trials` draws seeded, distinct TrialSpecs from the discrete grid.
- `run_search` trains every trial with early stopping (optionally on a
  thread pool), appends one TrialResult per line to `tuning-results.jsonl`
  in trial order, and resumes from that file when it already holds
  completed trials.
- The winner is the highest best-validation-accuracy trial; ties go to the
  lower validation loss, then the lower trial id.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import tensor_engine as te
from .errors import DivergenceError
from .log_utils import info, warn
from .model_zoo import LayerSpec, ModelSpec, build, spec_to_dict
from .trainer import TrainConfig, train

RESULTS_FILE = "tuning-results.jsonl"
BEST_TRIAL_FILE = "best-trial.json"
MAX_REDRAWS = 100


@dataclass(frozen=True)
class SearchSpace:
    learning_rates: tuple[float, ...] = (1e-2, 1e-3, 1e-4)
    dropout_rates: tuple[float, ...] = (0.2, 0.3, 0.4, 0.5)
    activations: tuple[str, ...] = ("relu", "tanh")

    def size(self, n_slots: int) -> int:
        return len(self.learning_rates) * len(self.dropout_rates) * len(self.activations) ** n_slots


@dataclass
class TrialSpec:
    trial_id: int
    learning_rate: float
    dropout_rate: float
    activation_assignment: dict[int, str]
    seed: int

    def key(self) -> tuple:
        return self.learning_rate, self.dropout_rate, tuple(sorted(self.activation_assignment.items()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["activation_assignment"] = {str(k): v for k, v in self.activation_assignment.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialSpec":
        return cls(
            trial_id=int(d["trial_id"]),
            learning_rate=float(d["learning_rate"]),
            dropout_rate=float(d["dropout_rate"]),
            activation_assignment={int(k): v for k, v in d["activation_assignment"].items()},
            seed=int(d["seed"]),
        )


@dataclass
class TrialResult:
    trial: TrialSpec
    best_val_accuracy: float
    best_val_loss: float
    epochs_run: int
    diverged: bool = False

    def rank_key(self) -> tuple:
        loss = self.best_val_loss if math.isfinite(self.best_val_loss) else math.inf
        return -self.best_val_accuracy, loss, self.trial.trial_id

    def to_dict(self) -> dict:
        return {
            "trial": self.trial.to_dict(),
            "best_val_accuracy": self.best_val_accuracy,
            "best_val_loss": self.best_val_loss if math.isfinite(self.best_val_loss) else None,
            "epochs_run": self.epochs_run,
            "diverged": self.diverged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialResult":
        loss = d.get("best_val_loss")
        return cls(
            trial=TrialSpec.from_dict(d["trial"]),
            best_val_accuracy=float(d["best_val_accuracy"]),
            best_val_loss=math.inf if loss is None else float(loss),
            epochs_run=int(d["epochs_run"]),
            diverged=bool(d.get("diverged", False)),
        )


@dataclass
class SearchOutcome:
    results: list[TrialResult]
    best: TrialResult
    best_spec: ModelSpec
    best_config: TrainConfig
    ranking: list[int] = field(default_factory=list)


def activation_slots(spec: ModelSpec) -> list[int]:
    """Layer indices of every activation layer, in order."""
    return [i for i, layer in enumerate(spec.layers) if layer.kind == "activation"]


def trial_seed(master_seed: int, trial_id: int) -> int:
    return int(np.random.SeedSequence([master_seed, trial_id]).generate_state(1)[0])


def sample_trials(
    n: int,
    base_spec: ModelSpec,
    space: SearchSpace = SearchSpace(),
    master_seed: int = 0,
    max_redraws: int = MAX_REDRAWS,
) -> list[TrialSpec]:
    if n < 1:
        raise ValueError(f"Need at least one trial, got {n}.")
    slots = activation_slots(base_spec)
    rng = np.random.default_rng(master_seed)

    def draw(trial_id: int) -> TrialSpec:
        return TrialSpec(
            trial_id=trial_id,
            learning_rate=float(rng.choice(space.learning_rates)),
            dropout_rate=float(rng.choice(space.dropout_rates)),
            activation_assignment={slot: str(rng.choice(space.activations)) for slot in range(len(slots))},
            seed=trial_seed(master_seed, trial_id),
        )

    trials, seen, duplicates = [], set(), 0
    for trial_id in range(n):
        trial = draw(trial_id)
        for _ in range(max_redraws):
            if trial.key() not in seen:
                break
            trial = draw(trial_id)
        if trial.key() in seen:
            duplicates += 1
        seen.add(trial.key())
        trials.append(trial)
    if duplicates:
        warn(
            f"{duplicates} of {n} trials repeat an earlier configuration; "
            f"the search space holds {space.size(len(slots))} distinct configuration(s)."
        )
    return trials


def apply_trial(base_spec: ModelSpec, trial: TrialSpec, name: str | None = None) -> ModelSpec:
    """Base spec with the trial's dropout rate and activation assignment."""
    slots = activation_slots(base_spec)
    layers = list(base_spec.layers)
    for slot, layer_index in enumerate(slots):
        if slot in trial.activation_assignment:
            layers[layer_index] = LayerSpec("activation", {"activation": trial.activation_assignment[slot]})
    for i, layer in enumerate(layers):
        if layer.kind == "dropout":
            layers[i] = LayerSpec("dropout", {"rate": trial.dropout_rate})
    return replace(base_spec, name=name or f"{base_spec.name}-trial-{trial.trial_id}", layers=tuple(layers))


def trial_config(template: TrainConfig, trial: TrialSpec) -> TrainConfig:
    return replace(template, learning_rate=trial.learning_rate, seed=trial.seed)


def run_trial(trial: TrialSpec, base_spec: ModelSpec, data: tuple, template: TrainConfig) -> TrialResult:
    x_train, y_train, x_val, y_val = data
    spec = apply_trial(base_spec, trial)
    cfg = trial_config(template, trial)
    network = build(spec, tuple(x_train.shape[1:3]), seed=trial.seed)
    try:
        result = train(network, x_train, y_train, x_val, y_val, cfg)
    except DivergenceError as e:
        warn(f"Trial {trial.trial_id} diverged ({e}); recording accuracy 0.")
        return TrialResult(trial, 0.0, math.inf, 0, diverged=True)
    info(
        f"Trial {trial.trial_id}: lr={trial.learning_rate:g} dropout={trial.dropout_rate} "
        f"activations={list(trial.activation_assignment.values())} -> best val_acc {result.best_val_accuracy:.4f}"
    )
    return TrialResult(trial, result.best_val_accuracy, result.best_val_loss, result.epochs_run)


def read_results(path: str | Path) -> list[TrialResult]:
    path = Path(path)
    if not path.exists():
        return []
    lines = path.read_text(encoding="utf-8").splitlines()
    return [TrialResult.from_dict(json.loads(line)) for line in lines if line.strip()]


def _reusable_results(results_path: str | Path, trials: list[TrialSpec]) -> dict[int, TrialResult]:
    """
    Stored results whose trial matches the requested one field for field.

    Anything else in the file (another master seed, another search space, a
    trial id no longer requested) is dropped and the file is rewritten, so
    those trials are trained again.
    """
    stored = read_results(results_path)
    wanted = {t.trial_id: t.to_dict() for t in trials}
    done = {r.trial.trial_id: r for r in stored if wanted.get(r.trial.trial_id) == r.trial.to_dict()}
    stale = len(stored) - len(done)
    if stale:
        warn(f"{stale} stored trial(s) in {results_path} do not match this search; retraining them.")
        kept = [done[t.trial_id] for t in trials if t.trial_id in done]
        lines = "".join(json.dumps(r.to_dict()) + "\n" for r in kept)
        te.atomic_write_bytes(Path(results_path), lines.encode("utf-8"))
    if done:
        info(f"Resuming search: {len(done)} of {len(trials)} trial(s) already in {results_path}.")
    return done


def run_search(
    trials: list[TrialSpec],
    base_spec: ModelSpec,
    data: tuple,
    template: TrainConfig,
    results_path: str | Path | None = None,
    workers: int = 1,
) -> SearchOutcome:
    """
    Train every trial and rank the results. `data` is
    (x_train, y_train, x_val, y_val).
    """
    if not trials:
        raise ValueError("run_search needs at least one trial.")

    done: dict[int, TrialResult] = {}
    if results_path is not None:
        done = _reusable_results(results_path, trials)
    pending = [t for t in trials if t.trial_id not in done]

    out = None
    if results_path is not None:
        Path(results_path).parent.mkdir(parents=True, exist_ok=True)
        out = Path(results_path).open("a", encoding="utf-8")
    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for result in pool.map(lambda t: run_trial(t, base_spec, data, template), pending):
                done[result.trial.trial_id] = result
                if out is not None:
                    out.write(json.dumps(result.to_dict()) + "\n")
                    out.flush()
    finally:
        if out is not None:
            out.close()

    results = [done[t.trial_id] for t in trials]
    ranked = sorted(results, key=TrialResult.rank_key)
    best = ranked[0]
    info(
        f"Best trial {best.trial.trial_id}: val_acc {best.best_val_accuracy:.4f}, "
        f"lr={best.trial.learning_rate:g}, dropout={best.trial.dropout_rate}."
    )
    return SearchOutcome(
        results=results,
        best=best,
        best_spec=apply_trial(base_spec, best.trial, name="best"),
        best_config=trial_config(template, best.trial),
        ranking=[r.trial.trial_id for r in ranked],
    )


def write_best_trial(outcome: SearchOutcome, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "trial": outcome.best.to_dict(),
        "spec": spec_to_dict(outcome.best_spec),
        "train_config": asdict(outcome.best_config),
        "ranking": outcome.ranking,
    }
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    info(f"Winning trial written to {path}.")
    return path
