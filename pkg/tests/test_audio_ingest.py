import struct

import numpy as np
import pytest

from src.audio_ingest import (
    AudioClip,
    SpeakerMetadata,
    chunk_fixed,
    encode_wav,
    ingest_corpus,
    load_metadata,
    load_wav,
    preemphasis,
    resample,
    write_metadata,
    write_wav,
)
from src.errors import ConfigurationError, DecodeError, MetadataError, UnsupportedFormatError


def _pcm16_bytes(frames, rate=16000, channels=1):
    body = np.asarray(frames, dtype="<i2").tobytes()
    block = channels * 2
    fmt = struct.pack("<4sIHHIIHH", b"fmt ", 16, 1, channels, rate, rate * block, block, 16)
    data = struct.pack("<4sI", b"data", len(body)) + body
    return struct.pack("<4sI4s", b"RIFF", 4 + len(fmt) + len(data), b"WAVE") + fmt + data


# -------------------------
# load_wav
# -------------------------

def test_load_wav_scales_pcm16(tmp_path):
    path = tmp_path / "a.wav"
    path.write_bytes(_pcm16_bytes([0, 16384, -32768]))
    clip = load_wav(path, speaker_id="spk")
    assert clip.sample_rate_hz == 16000
    np.testing.assert_array_equal(clip.samples, [0.0, 0.5, -1.0])
    assert clip.speaker_id == "spk"
    assert clip.utterance_id == "a"


def test_load_wav_downmixes_stereo_by_mean(tmp_path):
    path = tmp_path / "stereo.wav"
    path.write_bytes(encode_wav(np.array([[1.0, 0.0]]), 16000, encoding="float32"))
    clip = load_wav(path)
    np.testing.assert_allclose(clip.samples, [0.5])


def test_load_wav_rejects_rifx_magic(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFX" + _pcm16_bytes([0, 1])[4:])
    with pytest.raises(DecodeError, match="RIFF header"):
        load_wav(path)


def test_load_wav_reports_truncated_chunk(tmp_path):
    path = tmp_path / "short.wav"
    path.write_bytes(_pcm16_bytes([0, 1, 2, 3])[:-4])
    with pytest.raises(DecodeError, match="'data' chunk"):
        load_wav(path)


def test_load_wav_unsupported_encoding_lists_supported(tmp_path):
    body = np.zeros(4, dtype="<i4").tobytes()
    fmt = struct.pack("<4sIHHIIHH", b"fmt ", 16, 1, 1, 16000, 64000, 4, 32)
    data = struct.pack("<4sI", b"data", len(body)) + body
    path = tmp_path / "int32.wav"
    path.write_bytes(struct.pack("<4sI4s", b"RIFF", 4 + len(fmt) + len(data), b"WAVE") + fmt + data)
    with pytest.raises(UnsupportedFormatError, match="PCM 16-bit"):
        load_wav(path)


def test_pcm16_writer_round_trips_bit_exactly(tmp_path):
    ints = np.array([0, 1, -1, 12345, -32768, 32767], dtype=np.int16)
    samples = ints / 32768.0
    clip = load_wav(write_wav(tmp_path / "rt.wav", samples, 16000))
    np.testing.assert_array_equal(np.round(clip.samples * 32768).astype(np.int16), ints)


# -------------------------
# resample / preemphasis / chunking
# -------------------------

def test_resample_identity_when_rates_match():
    clip = AudioClip(np.array([0.1, -0.2, 0.3]), 16000)
    out = resample(clip, 16000)
    np.testing.assert_array_equal(out.samples, clip.samples)


def test_resample_upsamples_by_linear_interpolation():
    clip = AudioClip(np.array([0.0, 1.0, 0.0, -1.0]), 8000)
    out = resample(clip, 16000)
    assert out.samples.size == 8
    assert out.sample_rate_hz == 16000
    assert np.isclose(out.samples[1], 0.5)
    assert np.isclose(out.samples[2], 1.0)


def test_resample_length_arithmetic():
    clip = AudioClip(np.zeros(48000), 48000)
    assert resample(clip, 16000).samples.size == 16000


def test_resample_up_then_down_preserves_length():
    rng = np.random.default_rng(0)
    for n in (7, 100, 1001):
        clip = AudioClip(rng.uniform(-1, 1, n), 11025)
        back = resample(resample(clip, 22050), 11025)
        assert abs(back.samples.size - n) <= 1


def test_preemphasis_recurrence():
    clip = AudioClip(np.array([1.0, 1.0, 1.0]), 16000)
    np.testing.assert_allclose(preemphasis(clip, 0.97).samples, [1.0, 0.03, 0.03])


def test_preemphasis_alpha_zero_is_identity():
    rng = np.random.default_rng(1)
    clip = AudioClip(rng.uniform(-1, 1, 50), 16000)
    np.testing.assert_array_equal(preemphasis(clip, 0.0).samples, clip.samples)


def test_chunk_fixed_drops_remainder():
    clip = AudioClip(np.linspace(-1, 1, 120000), 16000, "spk", "utt")
    chunks = chunk_fixed(clip, 3.0)
    assert len(chunks) == 2
    assert all(c.samples.size == 48000 for c in chunks)
    assert [c.utterance_id for c in chunks] == ["utt-0", "utt-1"]
    assert all(c.speaker_id == "spk" for c in chunks)
    joined = np.concatenate([c.samples for c in chunks])
    np.testing.assert_array_equal(joined, clip.samples[:joined.size])


def test_chunk_fixed_boundaries():
    assert len(chunk_fixed(AudioClip(np.zeros(48000), 16000), 3.0)) == 1
    assert chunk_fixed(AudioClip(np.zeros(32000), 16000), 3.0) == []


def test_chunk_shorter_than_one_sample_is_a_configuration_error():
    clip = AudioClip(np.zeros(16000), 16000)
    with pytest.raises(ConfigurationError, match=r"at least 6.25e-05 s"):
        chunk_fixed(clip, 1e-5)
    with pytest.raises(ConfigurationError, match="positive"):
        chunk_fixed(clip, 0.0)
    assert len(chunk_fixed(clip, 1.0 / 16000)) == 16000


# -------------------------
# metadata / corpus
# -------------------------

def test_metadata_round_trip(tmp_path):
    rows = [SpeakerMetadata("s1", "female", "accent_00"), SpeakerMetadata("s2", "male", "accent_01")]
    table = load_metadata(write_metadata(rows, tmp_path / "metadata.csv"))
    assert table == {r.speaker_id: r for r in rows}


def test_metadata_rejects_duplicates(tmp_path):
    path = tmp_path / "metadata.csv"
    path.write_text("speaker_id,gender,accent\ns1,female,a\ns1,male,b\n")
    with pytest.raises(MetadataError, match="s1"):
        load_metadata(path)


def test_metadata_rejects_empty_accent(tmp_path):
    path = tmp_path / "metadata.csv"
    path.write_text("speaker_id,gender,accent\ns1,female,\n")
    with pytest.raises(MetadataError):
        load_metadata(path)


def test_ingest_corpus_skips_unreadable_files(tmp_path):
    write_wav(tmp_path / "spk1" / "u1.wav", np.zeros(16000 * 7), 16000)
    write_wav(tmp_path / "spk2" / "u1.wav", np.zeros(8000 * 3), 8000)
    (tmp_path / "spk2" / "broken.wav").write_bytes(b"not a wav file at all")
    chunks = ingest_corpus(tmp_path, chunk_seconds=3.0, threads=2)
    assert [(c.speaker_id, c.utterance_id) for c in chunks] == [
        ("spk1", "u1-0"),
        ("spk1", "u1-1"),
        ("spk2", "u1-0"),
    ]
    assert all(c.sample_rate_hz == 16000 and c.samples.size == 48000 for c in chunks)
