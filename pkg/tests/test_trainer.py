import numpy as np
import pytest

from src.errors import ConfigurationError, DivergenceError, SplitError
from src.features_dsp import compute_feature_stats
from src.model_zoo import build, preset
from src.tensor_engine import Parameter
from src.trainer import (
    TRAIN_LOG_FILE,
    AdamState,
    EarlyStoppingState,
    TrainConfig,
    adam_step,
    batch_slices,
    early_stopping_update,
    evaluate_loss_accuracy,
    load_checkpoint,
    read_timing,
    read_train_log,
    save_checkpoint,
    split_dataset,
    train,
    write_timing,
)

SMALL = (16, 24)


def _toy_data(n=8, classes=4, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, *SMALL)).astype(np.float32)
    y = np.arange(n) % classes
    return x, y


# -------------------------
# Adam
# -------------------------

def test_zero_gradient_is_a_no_op():
    p = Parameter(np.array([0.5, -1.5]), "p")
    state = AdamState()
    for t in range(1, 6):
        adam_step([p], {"p": np.zeros(2)}, state, t, TrainConfig())
    np.testing.assert_array_equal(p.data, [0.5, -1.5])


def test_first_step_moves_by_learning_rate():
    p = Parameter(np.array([0.0]), "p")
    adam_step([p], {"p": np.array([1.0])}, AdamState(), 1, TrainConfig(learning_rate=0.001))
    assert np.isclose(p.data[0], -0.001, rtol=1e-6)


def test_constant_gradient_step_approaches_learning_rate():
    p = Parameter(np.array([0.0]), "p")
    state, cfg = AdamState(), TrainConfig(learning_rate=0.01)
    for t in range(1, 500):
        adam_step([p], {"p": np.array([-2.0])}, state, t, cfg)
    before = p.data.copy()
    adam_step([p], {"p": np.array([-2.0])}, state, 500, cfg)
    assert np.isclose(p.data[0] - before[0], 0.01, rtol=1e-4)


def test_non_finite_gradient_names_the_parameter():
    p = Parameter(np.zeros(2), "dense1.weight")
    with pytest.raises(DivergenceError, match="dense1.weight"):
        adam_step([p], {"dense1.weight": np.array([1.0, np.nan])}, AdamState(), 1, TrainConfig())
    np.testing.assert_array_equal(p.data, 0.0)


def test_step_index_starts_at_one():
    with pytest.raises(ValueError):
        adam_step([], {}, AdamState(), 0, TrainConfig())


def test_train_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(patience=0)


# -------------------------
# early stopping
# -------------------------

def _run_stopper(losses, patience):
    state = EarlyStoppingState()
    for epoch, loss in enumerate(losses, start=1):
        decision, best = early_stopping_update(state, epoch, loss, patience)
        if decision == "stop":
            return epoch, best
    return None, state.best_epoch


def test_patience_five_trace():
    assert _run_stopper([1.0, 0.9, 0.85, 0.86, 0.87, 0.88, 0.89, 0.90], 5) == (8, 3)


def test_patience_one():
    assert _run_stopper([0.5, 0.6], 1) == (2, 1)


def test_decreasing_losses_never_stop():
    stopped, best = _run_stopper([1.0 / k for k in range(1, 30)], 5)
    assert stopped is None
    assert best == 29


def test_equal_loss_is_not_an_improvement():
    assert _run_stopper([0.5, 0.5, 0.5], 2) == (3, 1)


# -------------------------
# splitting
# -------------------------

def test_split_ten_chunks_per_speaker():
    ids = [f"spk{s}" for s in range(3) for _ in range(10)]
    split = split_dataset(ids, (0.8, 0.1, 0.1), seed=4)
    ids = np.asarray(ids)
    for speaker in ("spk0", "spk1", "spk2"):
        assert np.sum(ids[split.train] == speaker) == 8
        assert np.sum(ids[split.val] == speaker) == 1
        assert np.sum(ids[split.test] == speaker) == 1
    joined = np.concatenate([split.train, split.val, split.test])
    assert sorted(joined.tolist()) == list(range(30))


def test_split_is_deterministic_per_seed():
    ids = [f"spk{i % 4}" for i in range(40)]
    a, b = split_dataset(ids, (0.8, 0.1, 0.1), 7), split_dataset(ids, (0.8, 0.1, 0.1), 7)
    assert a.to_dict() == b.to_dict()
    c = split_dataset(ids, (0.8, 0.1, 0.1), 8)
    assert a.to_dict() != c.to_dict()


def test_split_names_short_speaker():
    ids = ["a"] * 5 + ["b"] * 2
    with pytest.raises(SplitError, match="'b'"):
        split_dataset(ids, (0.8, 0.1, 0.1))


def test_split_all_train_leaves_validation_empty():
    split = split_dataset(["a"] * 4 + ["b"] * 4, (1.0, 0.0, 0.0))
    assert len(split.train) == 8 and len(split.val) == 0 and len(split.test) == 0


def test_split_fractions_must_sum_to_one():
    with pytest.raises(ConfigurationError):
        split_dataset(["a"] * 10, (0.5, 0.1, 0.1))


def test_batch_slices_merge_singleton_tail():
    assert batch_slices(10, 3) == [slice(0, 3), slice(3, 6), slice(6, 10)]
    assert batch_slices(9, 3) == [slice(0, 3), slice(3, 6), slice(6, 9)]
    assert batch_slices(1, 32) == [slice(0, 1)]


# -------------------------
# training loop
# -------------------------

def test_overfits_eight_samples():
    x, y = _toy_data()
    net = build(preset("model-5", 4), SMALL, seed=0)
    cfg = TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=200, patience=200, seed=0)
    result = train(net, x, y, x, y, cfg)
    assert result.best_val_loss < 0.01
    loss, accuracy = evaluate_loss_accuracy(net, x, y)
    assert accuracy == 1.0
    assert np.isclose(loss, result.best_val_loss, rtol=1e-4)


def test_single_epoch_produces_one_record(tmp_path):
    x, y = _toy_data()
    net = build(preset("model-5", 4), SMALL, seed=1)
    log = tmp_path / TRAIN_LOG_FILE
    result = train(net, x, y, x[:4], y[:4], TrainConfig(max_epochs=1, batch_size=4), log_path=log)
    assert result.epochs_run == 1
    assert result.best_epoch == 1
    records = read_train_log(log)
    assert [r.deterministic_fields() for r in records] == [result.history[0].deterministic_fields()]
    assert 0.0 <= records[0].train_accuracy <= 1.0 and records[0].train_loss >= 0.0


def test_same_seed_gives_identical_history_and_weights():
    x, y = _toy_data(n=12)
    cfg = TrainConfig(max_epochs=3, batch_size=4, seed=11)
    runs = []
    for _ in range(2):
        net = build(preset("model-5", 4), SMALL, seed=3)
        result = train(net, x, y, x[:4], y[:4], cfg)
        runs.append(([r.deterministic_fields() for r in result.history], net.state_dict()))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])


def test_train_log_is_byte_identical_and_timing_is_separate(tmp_path):
    x, y = _toy_data(n=12)
    cfg = TrainConfig(max_epochs=2, batch_size=4, seed=5)
    logs = []
    for run in ("a", "b"):
        net = build(preset("model-5", 4), SMALL, seed=3)
        result = train(net, x, y, x[:4], y[:4], cfg, log_path=tmp_path / run / TRAIN_LOG_FILE)
        write_timing(tmp_path / run, result)
        logs.append((tmp_path / run / TRAIN_LOG_FILE).read_bytes())
    assert logs[0] == logs[1]
    assert b"wall_seconds" not in logs[0]

    timing = read_timing(tmp_path / "a")
    assert len(timing["epoch_wall_seconds"]) == 2
    assert timing["time_taken_minutes"] >= 0.0
    assert read_timing(tmp_path / "missing") is None


def test_empty_validation_set_is_a_configuration_error():
    x, y = _toy_data()
    net = build(preset("model-5", 4), SMALL)
    with pytest.raises(ConfigurationError, match="Validation"):
        train(net, x, y, x[:0], y[:0], TrainConfig(max_epochs=1))


def test_labels_outside_the_head_are_rejected():
    x, _ = _toy_data()
    net = build(preset("model-5", 4), SMALL)
    with pytest.raises(ConfigurationError):
        train(net, x, np.full(8, 7), x, np.zeros(8, dtype=int), TrainConfig(max_epochs=1))


def test_non_finite_loss_reports_epoch_and_batch():
    x, y = _toy_data()
    x[5] = np.nan
    net = build(preset("model-5", 4), SMALL)
    with pytest.raises(DivergenceError, match="epoch 1, batch 1"):
        train(net, x, y, x, y, TrainConfig(max_epochs=2, batch_size=8))


def test_early_stopping_restores_best_weights():
    x, y = _toy_data()
    rng = np.random.default_rng(9)
    x_val = rng.normal(size=(8, *SMALL)).astype(np.float32)
    y_val = rng.permutation(y)
    net = build(preset("model-5", 4), SMALL, seed=2)
    cfg = TrainConfig(learning_rate=0.01, batch_size=8, max_epochs=40, patience=2)
    result = train(net, x, y, x_val, y_val, cfg)
    assert result.stopped_early
    assert result.epochs_run == result.best_epoch + 2
    loss, _ = evaluate_loss_accuracy(net, x_val, y_val)
    assert np.isclose(loss, result.best_val_loss, rtol=1e-4)


# -------------------------
# checkpoints
# -------------------------

def test_checkpoint_round_trip(tmp_path):
    x, y = _toy_data()
    spec = preset("model-6", 4)
    net = build(spec, SMALL, seed=5)
    cfg = TrainConfig(max_epochs=1, batch_size=4, seed=5)
    train(net, x, y, x, y, cfg)
    stats = compute_feature_stats(x)
    split = split_dataset([f"s{i % 4}" for i in range(16)], (0.5, 0.25, 0.25), 0)

    save_checkpoint(tmp_path, net, spec, cfg, ["a", "b", "c", "d"], stats, split, feature_kind="mel_spectrogram")
    ckpt = load_checkpoint(tmp_path)
    assert ckpt.spec == spec
    assert ckpt.config == cfg
    assert ckpt.class_labels == ["a", "b", "c", "d"]
    assert ckpt.input_shape == SMALL
    assert ckpt.feature_stats.digest() == stats.digest()
    assert ckpt.split.to_dict() == split.to_dict()
    assert ckpt.extras == {"feature_kind": "mel_spectrogram"}
    np.testing.assert_array_equal(ckpt.network.predict_proba(x), net.predict_proba(x))
