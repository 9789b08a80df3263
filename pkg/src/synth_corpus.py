# src/synth_corpus.py
"""
synth_corpus.py
===============

Deterministic source-filter speaker corpus for desk-scale runs.

Each speaker is a `SpeakerProfile`: a fundamental frequency, three formant
resonances, an f0 wobble (jitter) and a noise level. An utterance is a sum of
harmonics of f0 whose amplitudes fall off as 1/k and are lifted near the
formants (two-pole resonators, evaluated with scipy.signal.freqz), plus white
noise, peak-normalised to 0.9.

Labels are functions of the synthesis parameters:
- gender = "female" when f0 >= 165 Hz, else "male"
- accent = the formant template (cluster) the speaker was drawn from

Output layout: `<out>/<speaker_id>/<utterance_id>.wav` and `<out>/metadata.csv`.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import freqz

from .audio_ingest import PIPELINE_SAMPLE_RATE_HZ, AudioClip, SpeakerMetadata, write_metadata, write_wav
from .errors import ConfigurationError
from .log_utils import info

F0_RANGE_HZ = (80.0, 300.0)
MIN_F0_SEPARATION_HZ = 5.0
FEMALE_F0_THRESHOLD_HZ = 165.0
PEAK_LEVEL = 0.9
FORMANT_BANDWIDTH_HZ = 120.0
RESONANCE_GAIN = 0.6
METADATA_FILE = "metadata.csv"

# lower/upper bounds for the three formant templates
_FORMANT_BOUNDS = ((300.0, 800.0), (900.0, 2200.0), (2400.0, 3400.0))
_SPEAKER_FORMANT_SPREAD = 0.08


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0_hz: float
    formants_hz: tuple[float, float, float]
    jitter: float
    noise_level: float
    gender: str
    accent: str

    def metadata(self) -> SpeakerMetadata:
        return SpeakerMetadata(self.speaker_id, self.gender, self.accent)


def _spaced_f0(rng: np.random.Generator, n: int) -> np.ndarray:
    lo, hi = F0_RANGE_HZ
    slack = (hi - lo) - MIN_F0_SEPARATION_HZ * (n - 1)
    if slack < 0:
        max_n = int((hi - lo) // MIN_F0_SEPARATION_HZ) + 1
        raise ConfigurationError(
            f"Cannot place {n} speakers {MIN_F0_SEPARATION_HZ:g} Hz apart in {lo:g}-{hi:g} Hz; "
            f"use at most {max_n} speakers."
        )
    # sorted offsets plus a fixed stride keep neighbours >= the separation apart
    offsets = np.sort(rng.uniform(0.0, slack, n))
    return lo + offsets + MIN_F0_SEPARATION_HZ * np.arange(n)


def _formant_templates(rng: np.random.Generator, n_clusters: int) -> np.ndarray:
    return np.array([[rng.uniform(lo, hi) for lo, hi in _FORMANT_BOUNDS] for _ in range(n_clusters)])


def generate_profiles(n_speakers: int, n_accent_clusters: int, seed: int = 0) -> list[SpeakerProfile]:
    if n_speakers < 2:
        raise ConfigurationError(f"Need at least 2 speakers, got {n_speakers}.")
    if n_accent_clusters < 1:
        raise ConfigurationError(f"Need at least 1 accent cluster, got {n_accent_clusters}.")
    rng = np.random.default_rng(seed)
    f0 = rng.permutation(_spaced_f0(rng, n_speakers))
    templates = _formant_templates(rng, n_accent_clusters)

    profiles = []
    for i in range(n_speakers):
        cluster = i % n_accent_clusters
        spread = rng.uniform(-_SPEAKER_FORMANT_SPREAD, _SPEAKER_FORMANT_SPREAD, 3)
        formants = np.sort(templates[cluster] * (1.0 + spread))
        profiles.append(
            SpeakerProfile(
                speaker_id=f"spk{i:03d}",
                f0_hz=float(f0[i]),
                formants_hz=tuple(float(f) for f in formants),
                jitter=float(rng.uniform(0.002, 0.01)),
                noise_level=float(rng.uniform(0.005, 0.03)),
                gender="female" if f0[i] >= FEMALE_F0_THRESHOLD_HZ else "male",
                accent=f"accent_{cluster:02d}",
            )
        )
    return profiles


def _resonance(frequencies: np.ndarray, formant_hz: float, sample_rate_hz: int) -> np.ndarray:
    """Two-pole resonator magnitude at `frequencies`, normalised to 1 at its peak."""
    r = np.exp(-np.pi * FORMANT_BANDWIDTH_HZ / sample_rate_hz)
    theta = 2.0 * np.pi * formant_hz / sample_rate_hz
    a = [1.0, -2.0 * r * np.cos(theta), r * r]
    _, h = freqz([1.0 - r], a, worN=np.append(frequencies, formant_hz), fs=sample_rate_hz)
    mag = np.abs(h)
    return mag[:-1] / mag[-1]


def harmonic_amplitudes(profile: SpeakerProfile, sample_rate_hz: int = PIPELINE_SAMPLE_RATE_HZ) -> np.ndarray:
    nyquist = sample_rate_hz / 2.0
    k = np.arange(1, int(0.95 * nyquist / profile.f0_hz) + 1)
    freqs = k * profile.f0_hz
    lift = sum(_resonance(freqs, f, sample_rate_hz) for f in profile.formants_hz)
    return (1.0 / k) * (1.0 + RESONANCE_GAIN * lift)


def synthesize_utterance(
    profile: SpeakerProfile,
    duration_s: float = 3.0,
    seed: int = 0,
    sample_rate_hz: int = PIPELINE_SAMPLE_RATE_HZ,
    utterance_id: str = "",
) -> AudioClip:
    if duration_s <= 0:
        raise ConfigurationError(f"duration_s must be positive, got {duration_s}.")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz

    wobble_hz = rng.uniform(3.0, 7.0)
    f_inst = profile.f0_hz * (1.0 + profile.jitter * np.sin(2.0 * np.pi * wobble_hz * t + rng.uniform(0, 2 * np.pi)))
    phase = 2.0 * np.pi * np.cumsum(f_inst) / sample_rate_hz

    amps = harmonic_amplitudes(profile, sample_rate_hz)
    offsets = rng.uniform(0.0, 2.0 * np.pi, amps.size)
    signal = np.zeros(n)
    for k, (a, phi) in enumerate(zip(amps, offsets), start=1):
        signal += a * np.sin(k * phase + phi)
    signal /= np.max(np.abs(signal))

    if profile.noise_level > 0:
        signal = signal + rng.normal(0.0, profile.noise_level, n)
    signal *= PEAK_LEVEL / np.max(np.abs(signal))
    return AudioClip(signal, sample_rate_hz, profile.speaker_id, utterance_id)


def utterance_seed(master_seed: int, speaker_index: int, utterance_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, speaker_index, utterance_index]).generate_state(1)[0])


def generate_corpus(
    profiles: list[SpeakerProfile],
    utterances_per_speaker: int,
    duration_s: float,
    out_dir: str | Path,
    seed: int = 0,
    threads: int = 1,
    sample_rate_hz: int = PIPELINE_SAMPLE_RATE_HZ,
) -> list[Path]:
    """Write every utterance as PCM16 WAV plus the metadata table; returns the WAV paths."""
    if utterances_per_speaker < 1:
        raise ConfigurationError(f"utterances_per_speaker must be >= 1, got {utterances_per_speaker}.")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(s, u) for s in range(len(profiles)) for u in range(utterances_per_speaker)]
    info(f"Synthesising {len(jobs)} utterances for {len(profiles)} speakers into {out_dir} ...")

    def work(job: tuple[int, int]) -> Path:
        s, u = job
        profile = profiles[s]
        utt = f"{profile.speaker_id}_u{u:03d}"
        clip = synthesize_utterance(profile, duration_s, utterance_seed(seed, s, u), sample_rate_hz, utt)
        return write_wav(out_dir / profile.speaker_id / f"{utt}.wav", clip.samples, sample_rate_hz)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        paths = list(pool.map(work, jobs))
    write_metadata([p.metadata() for p in profiles], out_dir / METADATA_FILE)
    info(f"Wrote {len(paths)} WAV files and {METADATA_FILE}.")
    return paths
