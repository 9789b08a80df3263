from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest

from src.audio_ingest import ingest_corpus, load_metadata
from src.errors import ConfigurationError
from src.features_dsp import mfcc
from src.synth_corpus import (
    METADATA_FILE,
    generate_corpus,
    generate_profiles,
    synthesize_utterance,
)


def test_profiles_are_deterministic_and_distinct():
    a, b = generate_profiles(10, 3, seed=1), generate_profiles(10, 3, seed=1)
    assert a == b
    assert len({p.speaker_id for p in a}) == 10
    assert len({p.f0_hz for p in a}) == 10
    assert generate_profiles(10, 3, seed=2) != a


def test_f0_pairs_are_separated_and_in_range():
    for seed in range(5):
        profiles = generate_profiles(30, 4, seed)
        for p, q in combinations(profiles, 2):
            assert abs(p.f0_hz - q.f0_hz) >= 5.0 - 1e-9
        for p in profiles:
            assert 80.0 <= p.f0_hz <= 300.0
            assert list(p.formants_hz) == sorted(p.formants_hz)
            assert 0.0 <= p.noise_level <= 0.2


def test_labels_follow_synthesis_parameters():
    profiles = generate_profiles(12, 3, seed=0)
    for i, p in enumerate(profiles):
        assert p.gender == ("female" if p.f0_hz >= 165.0 else "male")
        assert p.accent == f"accent_{i % 3:02d}"


def test_single_cluster_shares_accent():
    profiles = generate_profiles(2, 1, seed=0)
    assert profiles[0].accent == profiles[1].accent


def test_infeasible_speaker_count_suggests_a_smaller_one():
    generate_profiles(45, 2)
    with pytest.raises(ConfigurationError, match="at most 45"):
        generate_profiles(46, 2)


def test_utterance_length_peak_and_determinism():
    profile = generate_profiles(3, 1, seed=0)[0]
    a = synthesize_utterance(profile, 3.0, seed=7)
    b = synthesize_utterance(profile, 3.0, seed=7)
    assert a.samples.size == 48000
    assert a.sample_rate_hz == 16000
    assert np.isclose(np.max(np.abs(a.samples)), 0.9)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, synthesize_utterance(profile, 3.0, seed=8).samples)


def test_clean_voice_peaks_at_its_fundamental():
    for profile in generate_profiles(4, 2, seed=3):
        clean = replace(profile, jitter=0.0, noise_level=0.0)
        clip = synthesize_utterance(clean, 3.0, seed=0)
        spectrum = np.abs(np.fft.rfft(clip.samples))
        freqs = np.fft.rfftfreq(clip.samples.size, d=1.0 / clip.sample_rate_hz)
        below = freqs < 1.5 * clean.f0_hz
        assert abs(freqs[below][np.argmax(spectrum[below])] - clean.f0_hz) < 1.0


def test_speakers_are_separable_by_mean_mfcc():
    profiles = generate_profiles(10, 3, seed=0)
    enrol, query = [], []
    for s, profile in enumerate(profiles):
        for u in range(6):
            vector = mfcc(synthesize_utterance(profile, 1.0, seed=100 * s + u)).values.mean(axis=1)
            (enrol if u < 3 else query).append((s, vector))

    centroids = np.array([np.mean([v for s, v in enrol if s == k], axis=0) for k in range(10)])
    correct = sum(int(np.argmin(np.linalg.norm(centroids - v, axis=1)) == s) for s, v in query)
    assert correct / len(query) >= 0.95


def test_corpus_layout_and_byte_identical_regeneration(tmp_path):
    profiles = generate_profiles(3, 2, seed=0)
    paths = generate_corpus(profiles, 2, 3.5, tmp_path / "a", seed=5, threads=2)
    again = generate_corpus(profiles, 2, 3.5, tmp_path / "b", seed=5, threads=1)
    assert len(paths) == 6
    assert [p.relative_to(tmp_path / "a") for p in paths] == [p.relative_to(tmp_path / "b") for p in again]
    assert all(p.read_bytes() == q.read_bytes() for p, q in zip(paths, again))
    assert paths[0].relative_to(tmp_path / "a").as_posix() == "spk000/spk000_u000.wav"

    metadata = load_metadata(tmp_path / "a" / METADATA_FILE)
    assert sorted(metadata) == ["spk000", "spk001", "spk002"]
    assert metadata["spk001"].accent == "accent_01"

    chunks = ingest_corpus(tmp_path / "a")
    assert len(chunks) == 6
    assert {c.speaker_id for c in chunks} == set(metadata)
