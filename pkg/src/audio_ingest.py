# src/audio_ingest.py
"""
audio_ingest.py
===============

Loading, validating and segmenting raw speech recordings.

Every corpus is normalized to the same shape before feature extraction:
mono float samples in [-1, 1] at the pipeline rate (16 kHz), passed through a
pre-emphasis filter and cut into fixed three-second chunks labelled with their
speaker.

Features
--------
- RIFF/WAVE decoding (PCM 16-bit and IEEE float 32-bit, mono or stereo,
  including WAVE_FORMAT_EXTENSIBLE headers) with errors that name the
  offending chunk.
- A matching WAV writer used by the synthetic corpus generator.
- Linear-interpolation resampling, pre-emphasis, fixed-length chunking.
- Speaker metadata table (`speaker_id,gender,accent`) loading/writing.
- `ingest_corpus` walks `corpus/<speaker_id>/<utterance_id>.wav`; unreadable
  files are logged and skipped so one bad recording does not stop a run.

Notes
-----
All operations are pure apart from file I/O; `ingest_corpus` loads files in a
thread pool and returns chunks in sorted path order regardless of pool size.
"""

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .errors import ConfigurationError, DecodeError, MetadataError, UnsupportedFormatError
from .log_utils import error, info, warn

PIPELINE_SAMPLE_RATE_HZ = 16000
DEFAULT_CHUNK_SECONDS = 3.0
DEFAULT_PREEMPHASIS = 0.97

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# (format tag, bits per sample) -> numpy dtype and scale to [-1, 1]
_DECODERS = {
    (WAVE_FORMAT_PCM, 16): ("<i2", 1.0 / 32768.0),
    (WAVE_FORMAT_IEEE_FLOAT, 32): ("<f4", 1.0),
}
SUPPORTED_ENCODINGS = ("PCM 16-bit", "IEEE float 32-bit")

GENDERS = ("female", "male")
METADATA_COLUMNS = ["speaker_id", "gender", "accent"]


@dataclass(eq=False)
class AudioClip:
    """Mono speech segment with its speaker label."""

    samples: np.ndarray
    sample_rate_hz: int
    speaker_id: str = ""
    utterance_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError(f"AudioClip {self.utterance_id!r} needs a nonempty 1-D sample array.")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"AudioClip {self.utterance_id!r} contains non-finite samples.")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}.")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class SpeakerMetadata:
    speaker_id: str
    gender: str
    accent: str


# -------------------------
# WAV decoding / encoding
# -------------------------

def _parse_fmt(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise DecodeError(f"'fmt ' chunk: expected at least 16 bytes, found {len(body)}.")
    tag, channels, rate, _byte_rate, _block_align, bits = struct.unpack_from("<HHIIHH", body, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise DecodeError("'fmt ' chunk: WAVE_FORMAT_EXTENSIBLE header is missing its sub-format.")
        tag = struct.unpack_from("<H", body, 24)[0]
    if rate == 0:
        raise DecodeError("'fmt ' chunk: sample rate is zero.")
    return tag, channels, rate, bits


def _decode_wav_bytes(data: bytes, source: str) -> tuple[np.ndarray, int]:
    if len(data) < 12:
        raise DecodeError(f"RIFF header: {source} is only {len(data)} bytes long.")
    magic, _riff_size, form = struct.unpack_from("<4sI4s", data, 0)
    if magic != b"RIFF":
        raise DecodeError(f"RIFF header: expected magic b'RIFF', found {magic!r} in {source}.")
    if form != b"WAVE":
        raise DecodeError(f"RIFF header: expected form type b'WAVE', found {form!r} in {source}.")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise DecodeError(
                f"{chunk_id.decode('latin-1')!r} chunk: declares {size} bytes but only {len(body)} remain."
            )
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(body)
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise DecodeError(f"'fmt ' chunk: missing from {source}.")
    if payload is None:
        raise DecodeError(f"'data' chunk: missing from {source}.")

    tag, channels, rate, bits = fmt
    if (tag, bits) not in _DECODERS:
        raise UnsupportedFormatError(
            f"{source}: format tag 0x{tag:04x} with {bits} bits is not supported; "
            f"supported encodings: {', '.join(SUPPORTED_ENCODINGS)}."
        )
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{source}: {channels} channels; only mono and stereo are supported.")

    dtype, scale = _DECODERS[(tag, bits)]
    frame_bytes = channels * bits // 8
    n_frames = len(payload) // frame_bytes
    if n_frames == 0:
        raise DecodeError(f"'data' chunk: {source} contains no complete sample frames.")
    if len(payload) % frame_bytes:
        warn(f"{source}: dropping {len(payload) % frame_bytes} trailing bytes of a partial frame.")

    raw = np.frombuffer(payload[:n_frames * frame_bytes], dtype=dtype).astype(np.float64) * scale
    mono = raw.reshape(n_frames, channels).mean(axis=1)
    if not np.all(np.isfinite(mono)):
        raise DecodeError(f"'data' chunk: {source} contains non-finite float samples.")
    if np.any(np.abs(mono) > 1.0):
        warn(f"{source}: float samples exceed [-1, 1]; clipping.")
        mono = np.clip(mono, -1.0, 1.0)
    return mono, rate


def load_wav(path: str | Path, speaker_id: str = "", utterance_id: str | None = None) -> AudioClip:
    """
    Decode a RIFF/WAVE file into a mono AudioClip.

    Stereo is downmixed by channel mean; 16-bit integers are scaled by 1/32768.
    """
    path = Path(path)
    samples, rate = _decode_wav_bytes(path.read_bytes(), str(path))
    return AudioClip(
        samples=samples,
        sample_rate_hz=rate,
        speaker_id=speaker_id,
        utterance_id=path.stem if utterance_id is None else utterance_id,
    )


def encode_wav(samples: np.ndarray, sample_rate_hz: int, encoding: str = "pcm16") -> bytes:
    """
    Encode samples as RIFF/WAVE bytes.

    `samples` is 1-D (mono) or [frames × channels]. PCM16 uses
    round(x · 32768) clipped to the int16 range, the inverse of `load_wav`.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    frames, channels = arr.shape
    if encoding == "pcm16":
        tag, bits = WAVE_FORMAT_PCM, 16
        body = np.clip(np.round(arr * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif encoding == "float32":
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
        body = arr.astype("<f4").tobytes()
    else:
        raise ConfigurationError(f"Unknown WAV encoding '{encoding}'; expected 'pcm16' or 'float32'.")

    block_align = channels * bits // 8
    fmt = struct.pack(
        "<4sIHHIIHH", b"fmt ", 16, tag, channels, sample_rate_hz,
        sample_rate_hz * block_align, block_align, bits,
    )
    data = struct.pack("<4sI", b"data", len(body)) + body + (b"\x00" if len(body) & 1 else b"")
    return struct.pack("<4sI4s", b"RIFF", 4 + len(fmt) + len(data), b"WAVE") + fmt + data


def write_wav(path: str | Path, samples: np.ndarray, sample_rate_hz: int, encoding: str = "pcm16") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_wav(samples, sample_rate_hz, encoding))
    return path


# -------------------------
# Signal conditioning
# -------------------------

def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """Linear-interpolation resampling; identity (same object data) when rates match."""
    if target_rate_hz <= 0:
        raise ConfigurationError(f"target_rate_hz must be positive, got {target_rate_hz}.")
    if target_rate_hz == clip.sample_rate_hz:
        return clip
    n_in = clip.samples.size
    n_out = max(1, int(np.floor(n_in * target_rate_hz / clip.sample_rate_hz + 0.5)))
    positions = np.arange(n_out) * (clip.sample_rate_hz / target_rate_hz)
    samples = np.interp(positions, np.arange(n_in), clip.samples)
    return AudioClip(samples, target_rate_hz, clip.speaker_id, clip.utterance_id)


def preemphasis(clip: AudioClip, alpha: float = DEFAULT_PREEMPHASIS) -> AudioClip:
    """y[0] = x[0]; y[n] = x[n] − alpha·x[n−1]."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigurationError(f"Pre-emphasis alpha must lie in [0, 1), got {alpha}.")
    if alpha == 0.0:
        return AudioClip(clip.samples.copy(), clip.sample_rate_hz, clip.speaker_id, clip.utterance_id)
    filtered = lfilter([1.0, -alpha], [1.0], clip.samples)
    return AudioClip(filtered, clip.sample_rate_hz, clip.speaker_id, clip.utterance_id)


def chunk_fixed(clip: AudioClip, chunk_seconds: float = DEFAULT_CHUNK_SECONDS) -> list[AudioClip]:
    """
    Cut `clip` into consecutive non-overlapping windows of `chunk_seconds`.

    The trailing remainder shorter than one window is dropped; a clip shorter
    than one window yields an empty list.
    """
    if chunk_seconds <= 0:
        raise ConfigurationError(f"chunk_seconds must be positive, got {chunk_seconds}.")
    size = int(round(chunk_seconds * clip.sample_rate_hz))
    if size < 1:
        raise ConfigurationError(
            f"chunk_seconds={chunk_seconds} is shorter than one sample at {clip.sample_rate_hz} Hz; "
            f"use at least {1.0 / clip.sample_rate_hz:g} s."
        )
    count = clip.samples.size // size
    return [
        AudioClip(
            clip.samples[i * size:(i + 1) * size].copy(),
            clip.sample_rate_hz,
            clip.speaker_id,
            f"{clip.utterance_id}-{i}",
        )
        for i in range(count)
    ]


# -------------------------
# Metadata
# -------------------------

def load_metadata(path: str | Path) -> dict[str, SpeakerMetadata]:
    """Read the `speaker_id,gender,accent` table, keyed by speaker_id."""
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in METADATA_COLUMNS if c not in df.columns]
    if missing:
        raise MetadataError(f"Metadata table {path} lacks columns {missing}.")

    duplicated = df.loc[df["speaker_id"].duplicated(), "speaker_id"].tolist()
    if duplicated:
        raise MetadataError(f"Metadata table {path} lists speakers more than once: {duplicated}.")

    table = {}
    for row in df.itertuples(index=False):
        speaker, gender, accent = row.speaker_id.strip(), row.gender.strip(), row.accent.strip()
        if not gender or not accent:
            raise MetadataError(f"Speaker {speaker!r} has an empty gender or accent label.")
        if gender not in GENDERS:
            raise MetadataError(f"Speaker {speaker!r} has gender {gender!r}; expected one of {GENDERS}.")
        table[speaker] = SpeakerMetadata(speaker, gender, accent)
    return table


def write_metadata(rows: list[SpeakerMetadata], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame([[r.speaker_id, r.gender, r.accent] for r in rows], columns=METADATA_COLUMNS)
    df.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


# -------------------------
# Corpus ingest
# -------------------------

def _ingest_file(path: Path, target_rate_hz: int, alpha: float, chunk_seconds: float) -> list[AudioClip]:
    try:
        clip = load_wav(path, speaker_id=path.parent.name)
        clip = preemphasis(resample(clip, target_rate_hz), alpha)
        chunks = chunk_fixed(clip, chunk_seconds)
        if not chunks:
            warn(f"{path}: {clip.duration_s:.2f} s is shorter than one {chunk_seconds} s chunk, skipping.")
        return chunks
    except (DecodeError, UnsupportedFormatError, OSError) as e:
        error(f"Could not ingest {path}: {e}")
        return []


def list_corpus_files(corpus_dir: str | Path) -> list[Path]:
    """WAV files laid out as `<corpus>/<speaker_id>/<utterance_id>.wav`, sorted."""
    return sorted(p for p in Path(corpus_dir).glob("*/*.wav") if p.is_file())


def ingest_corpus(
    corpus_dir: str | Path,
    target_rate_hz: int = PIPELINE_SAMPLE_RATE_HZ,
    alpha: float = DEFAULT_PREEMPHASIS,
    chunk_seconds: float = DEFAULT_CHUNK_SECONDS,
    threads: int = 1,
) -> list[AudioClip]:
    """Load every WAV under `corpus_dir` and return its labelled chunks."""
    files = list_corpus_files(corpus_dir)
    if not files:
        warn(f"No WAV files found under {corpus_dir}.")
        return []
    info(f"Ingesting {len(files)} recordings from {corpus_dir} ...")

    def work(p: Path) -> list[AudioClip]:
        return _ingest_file(p, target_rate_hz, alpha, chunk_seconds)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_file = list(pool.map(work, files))
    chunks = [c for group in per_file for c in group]
    info(f"Produced {len(chunks)} chunks of {chunk_seconds} s.")
    return chunks
