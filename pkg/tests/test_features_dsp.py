import numpy as np
import pytest

from src.audio_ingest import AudioClip
from src.errors import ConfigurationError, ShapeError
from src.features_dsp import (
    StftConfig,
    compute_feature_stats,
    dct_matrix,
    extract,
    hz_to_mel,
    inverse_mfcc,
    mel_center_frequencies,
    mel_filterbank,
    mel_spectrogram,
    mel_to_hz,
    mfcc,
    normalize_array,
    normalize_features,
    stft_power,
)


def _tone(freq_hz=440.0, seconds=3.0, rate=16000, amplitude=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq_hz * t), rate, "spk", "tone")


def _noise(seed=0, n=48000):
    return AudioClip(np.random.default_rng(seed).uniform(-0.5, 0.5, n), 16000, "spk", "noise")


# -------------------------
# Mel scale
# -------------------------

def test_hz_to_mel_reference_values():
    assert hz_to_mel(0.0) == 0.0
    assert np.isclose(hz_to_mel(700.0), 781.17, atol=0.01)


def test_mel_round_trip():
    freqs = np.array([0.0, 55.0, 700.0, 4000.0, 8000.0])
    np.testing.assert_allclose(mel_to_hz(hz_to_mel(freqs)), freqs, atol=1e-6)


def test_hz_to_mel_rejects_negative():
    with pytest.raises(ConfigurationError):
        hz_to_mel(-1.0)


def test_mel_centres_are_strictly_increasing():
    centres = mel_center_frequencies(64, 0.0, 8000.0)
    assert centres.size == 64
    assert np.all(np.diff(centres) > 0)
    assert 0.0 < centres[0] and centres[-1] < 8000.0


# -------------------------
# Filterbank
# -------------------------

def test_filterbank_shape_and_peaks():
    fb = mel_filterbank(64, 512, 16000)
    assert fb.shape == (64, 257)
    assert np.all(fb >= 0.0)
    np.testing.assert_allclose(fb.max(axis=1), 1.0)


def test_filterbank_rejects_empty_filter():
    with pytest.raises(ConfigurationError, match="collides"):
        mel_filterbank(200, 64, 16000)


def test_filterbank_rejects_bad_range():
    with pytest.raises(ConfigurationError):
        mel_filterbank(64, 512, 16000, f_min=0.0, f_max=9000.0)


# -------------------------
# Extractors
# -------------------------

def test_mel_spectrogram_shape_for_three_seconds():
    m = mel_spectrogram(_noise())
    assert m.kind == "mel_spectrogram"
    assert m.values.shape == (64, 298)
    assert np.all(np.isfinite(m.values))


def test_mfcc_shape_for_three_seconds():
    m = mfcc(_noise())
    assert m.kind == "mfcc"
    assert m.values.shape == (13, 298)


def test_frame_count_formula():
    cfg = StftConfig()
    assert cfg.n_frames(48000) == 298
    assert cfg.n_frames(400) == 1
    assert mel_spectrogram(AudioClip(np.ones(400) * 0.1, 16000)).frames == 1


def test_too_short_input_raises():
    with pytest.raises(ShapeError):
        mel_spectrogram(AudioClip(np.ones(399) * 0.1, 16000))


def test_silence_hits_log_floor():
    m = mel_spectrogram(AudioClip(np.zeros(48000), 16000))
    np.testing.assert_allclose(m.values, -100.0)


def test_amplitude_scaling_adds_twenty_db():
    quiet = _noise(seed=3)
    loud = AudioClip(quiet.samples * 10.0, 16000)
    diff = mel_spectrogram(loud).values - mel_spectrogram(quiet).values
    np.testing.assert_allclose(diff, 20.0, atol=1e-6)


def test_tone_energy_lands_in_matching_band():
    m = mel_spectrogram(_tone(1000.0))
    centres = mel_center_frequencies(64, 0.0, 8000.0)
    loudest = int(np.argmax(m.values.mean(axis=1)))
    assert abs(centres[loudest] - 1000.0) < 100.0


def test_extraction_is_deterministic_and_fingerprinted():
    a, b = mel_spectrogram(_noise(7)), mel_spectrogram(_noise(7))
    np.testing.assert_array_equal(a.values, b.values)
    assert a.config_fingerprint == b.config_fingerprint
    assert mfcc(_noise(7)).config_fingerprint != a.config_fingerprint
    assert mel_spectrogram(_noise(7), n_mels=40).config_fingerprint != a.config_fingerprint


def test_mfcc_rejects_more_coefficients_than_bands():
    with pytest.raises(ConfigurationError):
        mfcc(_noise(), n_mels=10, n_mfcc=13)


def test_extract_dispatch():
    assert extract(_noise(), "mfcc").values.shape == (13, 298)
    assert extract(_noise(), "mel_spectrogram", n_mfcc=13).values.shape == (64, 298)
    with pytest.raises(ConfigurationError):
        extract(_noise(), "chroma")


# -------------------------
# DCT
# -------------------------

def test_dct_matrix_is_orthonormal():
    d = dct_matrix(64)
    np.testing.assert_allclose(d @ d.T, np.eye(64), atol=1e-12)


def test_full_length_mfcc_inverts_to_log_mel():
    clip = _noise(11)
    log_mel = mel_spectrogram(clip).values
    coeffs = mfcc(clip, n_mfcc=64).values
    np.testing.assert_allclose(inverse_mfcc(coeffs, 64), log_mel, atol=1e-8)


def test_truncated_mfcc_inverts_to_smoothed_envelope():
    clip = _noise(12)
    coeffs = mfcc(clip).values
    recon = inverse_mfcc(coeffs, 64)
    assert recon.shape == (64, 298)
    np.testing.assert_allclose(dct_matrix(64)[:13] @ recon, coeffs, atol=1e-8)


# -------------------------
# Normalization
# -------------------------

def test_stats_standardize_training_stack():
    rng = np.random.default_rng(5)
    stack = rng.normal(loc=3.0, scale=2.0, size=(20, 8, 30))
    stats = compute_feature_stats(stack)
    assert stats.bands == 8 and stats.count == 20
    z = normalize_array(stack, stats)
    np.testing.assert_allclose(z.mean(axis=(0, 2)), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=(0, 2)), 1.0, atol=1e-10)


def test_constant_band_is_floored_not_divided_by_zero():
    stack = np.ones((4, 3, 5))
    z = normalize_array(stack, compute_feature_stats(stack))
    assert np.all(np.isfinite(z))
    np.testing.assert_array_equal(z, 0.0)


def test_normalization_band_mismatch():
    stats = compute_feature_stats(np.zeros((2, 13, 10)))
    with pytest.raises(ShapeError, match="64 bands"):
        normalize_features(mel_spectrogram(_noise()), stats)


def test_stats_dict_round_trip_keeps_digest():
    stats = compute_feature_stats(np.random.default_rng(0).normal(size=(3, 4, 6)))
    again = type(stats).from_dict(stats.to_dict())
    assert again.digest() == stats.digest()


def test_stft_power_shape_and_tone_bin():
    power = stft_power(_tone(1000.0).samples, StftConfig())
    assert power.shape == (257, 298)
    assert (np.argmax(power, axis=0) == 32).all()
    assert (power >= 0).all()


def test_stft_power_needs_one_full_window():
    with pytest.raises(ShapeError, match="400 samples"):
        stft_power(np.zeros(399), StftConfig())
