# src/features_dsp.py
"""
features_dsp.py: Mel-spectrogram and MFCC feature extraction.

Converts three-second audio chunks into 2-D time–frequency matrices
[bands × frames] that feed the CNN-LSTM classifiers.

Pipeline
--------
    samples → Hann-windowed frames → |rFFT|² (power spectrogram)
            → triangular mel filterbank → 10·log10(max(·, 1e-10))   (mel_spectrogram)
            → orthonormal DCT-II per frame, first n_mfcc rows          (mfcc)

Conventions
-----------
- Mel scale: mel = 2595 · log10(1 + f / 700).
- Framing has no centring/padding: frames = floor((n − window) / hop) + 1.
- Filters are continuous triangles evaluated at FFT bin frequencies and then
  peak-normalized, so every filter's maximum is exactly 1.0.
- Every FeatureMatrix carries a SHA-256 fingerprint of all extraction
  parameters; identical clip + parameters give bit-identical output.

Typical usage:
    from src.features_dsp import StftConfig, mel_spectrogram
    m = mel_spectrogram(clip, StftConfig(), n_mels=64)
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .audio_ingest import AudioClip
from .errors import ConfigurationError, ShapeError

MEL_SPECTROGRAM = "mel_spectrogram"
MFCC = "mfcc"
FEATURE_KINDS = (MEL_SPECTROGRAM, MFCC)

LOG_FLOOR = 1e-10
STD_FLOOR = 1e-8

DEFAULT_N_MELS = 64
DEFAULT_N_MFCC = 13
DEFAULT_F_MIN = 0.0
DEFAULT_F_MAX = 8000.0


@dataclass(frozen=True)
class StftConfig:
    window_length_samples: int = 400
    hop_samples: int = 160
    fft_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        if min(self.window_length_samples, self.hop_samples, self.fft_size) <= 0:
            raise ConfigurationError("STFT window, hop and FFT size must be positive.")
        if self.fft_size & (self.fft_size - 1):
            raise ConfigurationError(f"fft_size must be a power of two, got {self.fft_size}.")
        if self.window_length_samples > self.fft_size:
            raise ConfigurationError(
                f"window_length_samples ({self.window_length_samples}) exceeds fft_size ({self.fft_size})."
            )
        if self.hop_samples > self.window_length_samples:
            raise ConfigurationError(
                f"hop_samples ({self.hop_samples}) exceeds window_length_samples ({self.window_length_samples})."
            )
        if self.window != "hann":
            raise ConfigurationError(f"Unsupported window '{self.window}'; only 'hann' is available.")

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_length_samples) // self.hop_samples + 1


@dataclass(eq=False)
class FeatureMatrix:
    """[bands × frames] feature values plus the fingerprint of how they were made."""

    values: np.ndarray
    kind: str
    config_fingerprint: str

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigurationError(f"Unknown feature kind '{self.kind}'.")
        if self.values.ndim != 2:
            raise ShapeError(f"FeatureMatrix values must be 2-D, got shape {self.values.shape}.")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("FeatureMatrix contains non-finite values.")

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]


def fingerprint(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode("utf-8")).hexdigest()


# -------------------------
# Mel scale
# -------------------------

def hz_to_mel(f):
    """HTK mel scale; accepts scalars or arrays."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ConfigurationError("Frequencies must be non-negative.")
    mel = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(mel) if mel.ndim == 0 else mel


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    hz = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(hz) if hz.ndim == 0 else hz


def mel_center_frequencies(n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    """Filter centres: the interior points of n_mels + 2 mel-equidistant edges."""
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    return edges[1:-1]


# -------------------------
# Spectral analysis
# -------------------------

@lru_cache(maxsize=16)
def _window(kind: str, length: int) -> np.ndarray:
    w = get_window(kind, length, fftbins=True)
    w.setflags(write=False)
    return w


def stft_power(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """One-sided power spectrogram, shape [fft_size/2 + 1 × frames]."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < cfg.window_length_samples:
        raise ShapeError(
            f"Need at least {cfg.window_length_samples} samples for one analysis window, got {x.size}."
        )
    frames = sliding_window_view(x, cfg.window_length_samples)[::cfg.hop_samples]
    spectrum = np.fft.rfft(frames * _window(cfg.window, cfg.window_length_samples), n=cfg.fft_size, axis=1)
    return (spectrum.real ** 2 + spectrum.imag ** 2).T


@lru_cache(maxsize=16)
def _cached_filterbank(n_mels: int, fft_size: int, sample_rate_hz: int, f_min: float, f_max: float) -> np.ndarray:
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    bin_hz = np.fft.rfftfreq(fft_size, d=1.0 / sample_rate_hz)[None, :]

    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    peaks = weights.max(axis=1)
    empty = np.flatnonzero(peaks <= 0.0)
    if empty.size:
        i = int(empty[0])
        neighbours = [j for j in (i - 1, i + 1) if 0 <= j < n_mels]
        raise ConfigurationError(
            f"Mel filter {i} (centre {edges[i + 1]:.1f} Hz) collides with filter(s) {neighbours}: "
            f"no FFT bin of a {fft_size}-point transform falls inside its band; "
            f"use fewer mel bands or a larger fft_size."
        )
    weights /= peaks[:, None]
    weights.setflags(write=False)
    return weights


def mel_filterbank(
    n_mels: int,
    fft_size: int,
    sample_rate_hz: int,
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
) -> np.ndarray:
    """Triangular filters with peak 1.0, shape [n_mels × fft_size/2 + 1]."""
    if n_mels < 2:
        raise ConfigurationError(f"n_mels must be at least 2, got {n_mels}.")
    if not 0.0 <= f_min < f_max <= sample_rate_hz / 2:
        raise ConfigurationError(
            f"Need 0 <= f_min < f_max <= {sample_rate_hz / 2} Hz, got f_min={f_min}, f_max={f_max}."
        )
    return _cached_filterbank(int(n_mels), int(fft_size), int(sample_rate_hz), float(f_min), float(f_max))


# -------------------------
# Feature extractors
# -------------------------

def _extraction_params(kind: str, clip: AudioClip, cfg: StftConfig, **extra) -> dict:
    return {
        "kind": kind,
        "sample_rate_hz": clip.sample_rate_hz,
        "window_length_samples": cfg.window_length_samples,
        "hop_samples": cfg.hop_samples,
        "fft_size": cfg.fft_size,
        "window": cfg.window,
        "log_floor": LOG_FLOOR,
        **extra,
    }


def _log_mel(clip: AudioClip, cfg: StftConfig, n_mels: int, f_min: float, f_max: float) -> np.ndarray:
    fb = mel_filterbank(n_mels, cfg.fft_size, clip.sample_rate_hz, f_min, f_max)
    power = stft_power(clip.samples, cfg)
    return 10.0 * np.log10(np.maximum(fb @ power, LOG_FLOOR))


def mel_spectrogram(
    clip: AudioClip,
    cfg: StftConfig = StftConfig(),
    n_mels: int = DEFAULT_N_MELS,
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
) -> FeatureMatrix:
    values = _log_mel(clip, cfg, n_mels, f_min, f_max)
    params = _extraction_params(MEL_SPECTROGRAM, clip, cfg, n_mels=n_mels, f_min=f_min, f_max=f_max)
    return FeatureMatrix(values, MEL_SPECTROGRAM, fingerprint(params))


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix D with D @ x == dct(x, norm='ortho')."""
    return scipy.fft.dct(np.eye(n), type=2, norm="ortho", axis=0)


def mfcc(
    clip: AudioClip,
    cfg: StftConfig = StftConfig(),
    n_mels: int = DEFAULT_N_MELS,
    n_mfcc: int = DEFAULT_N_MFCC,
    f_min: float = DEFAULT_F_MIN,
    f_max: float = DEFAULT_F_MAX,
) -> FeatureMatrix:
    if n_mfcc > n_mels:
        raise ConfigurationError(f"n_mfcc ({n_mfcc}) cannot exceed n_mels ({n_mels}).")
    if n_mfcc < 1:
        raise ConfigurationError(f"n_mfcc must be positive, got {n_mfcc}.")
    log_mel = _log_mel(clip, cfg, n_mels, f_min, f_max)
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=0)[:n_mfcc]
    params = _extraction_params(MFCC, clip, cfg, n_mels=n_mels, n_mfcc=n_mfcc, f_min=f_min, f_max=f_max)
    return FeatureMatrix(coeffs, MFCC, fingerprint(params))


def inverse_mfcc(coeffs: np.ndarray, n_mels: int) -> np.ndarray:
    """Zero-pad truncated cepstra back to n_mels rows and invert the DCT."""
    padded = np.zeros((n_mels, coeffs.shape[1]))
    padded[:coeffs.shape[0]] = coeffs
    return scipy.fft.idct(padded, type=2, norm="ortho", axis=0)


def extract(clip: AudioClip, kind: str, cfg: StftConfig = StftConfig(), **params) -> FeatureMatrix:
    """Dispatch on feature kind; extra params are the extractor's keyword arguments."""
    if kind == MEL_SPECTROGRAM:
        params.pop("n_mfcc", None)
        return mel_spectrogram(clip, cfg, **params)
    if kind == MFCC:
        return mfcc(clip, cfg, **params)
    raise ConfigurationError(f"Unknown feature kind '{kind}'; expected one of {FEATURE_KINDS}.")


# -------------------------
# Normalization
# -------------------------

@dataclass(eq=False)
class FeatureStats:
    """Per-band mean/std computed over the training split."""

    mean: np.ndarray
    std: np.ndarray
    count: int = field(default=0)

    @property
    def bands(self) -> int:
        return self.mean.size

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mean, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.std, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64), int(d["count"]))


def compute_feature_stats(values: np.ndarray) -> FeatureStats:
    """
    Per-band statistics of a stack [N × bands × frames] (or a single
    [bands × frames] matrix) in one reduction pass.
    """
    stack = np.asarray(values, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ShapeError(f"Expected a nonempty [N × bands × frames] stack, got shape {stack.shape}.")
    return FeatureStats(stack.mean(axis=(0, 2)), stack.std(axis=(0, 2)), int(stack.shape[0]))


def normalize_array(values: np.ndarray, stats: FeatureStats) -> np.ndarray:
    """Standardize [..., bands, frames] arrays band by band."""
    if values.shape[-2] != stats.bands:
        raise ShapeError(
            f"Feature array has {values.shape[-2]} bands (shape {values.shape}) "
            f"but statistics cover {stats.bands} bands."
        )
    scale = np.maximum(stats.std, STD_FLOOR)
    return (values - stats.mean[:, None]) / scale[:, None]


def normalize_features(m: FeatureMatrix, stats: FeatureStats) -> FeatureMatrix:
    values = normalize_array(m.values, stats)
    return FeatureMatrix(values, m.kind, fingerprint({"source": m.config_fingerprint, "stats": stats.digest()}))
