# src/feature_store.py
"""
feature_store.py
================

On-disk feature store: one `VXF1` container per chunk plus an `index.csv`
mapping each file to its speaker.

VXF1 layout (little endian)
---------------------------
    b"VXF1" | u32 kind | u32 bands | u32 frames | float32[bands*frames] row-major | UTF-8 fingerprint

kind codes: 0 = mel_spectrogram, 1 = mfcc.

Functions
---------
- `write_feature_file(path, m)` / `read_feature_file(path)`
- `extract_to_store(chunks, out_dir, kind, cfg, ...)`: extract features for
  every chunk (thread pool) and write files + index.
- `load_feature_set(store_dir)`: stack a store into a `LabeledFeatures`.
"""

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .audio_ingest import AudioClip
from .errors import DecodeError, ShapeError
from .features_dsp import FEATURE_KINDS, FeatureMatrix, StftConfig, extract
from .log_utils import info, warn

MAGIC = b"VXF1"
_HEADER = struct.Struct("<4sIII")
INDEX_FILE = "index.csv"
EXTRACTION_FILE = "extraction.json"
INDEX_COLUMNS = ["file", "speaker_id", "utterance_id"]


def encode_feature_matrix(m: FeatureMatrix) -> bytes:
    header = _HEADER.pack(MAGIC, FEATURE_KINDS.index(m.kind), m.bands, m.frames)
    body = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    return header + body + m.config_fingerprint.encode("utf-8")


def decode_feature_matrix(data: bytes, source: str = "<bytes>") -> FeatureMatrix:
    if len(data) < _HEADER.size:
        raise DecodeError(f"VXF1 header: {source} is only {len(data)} bytes long.")
    magic, kind, bands, frames = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DecodeError(f"VXF1 header: expected magic {MAGIC!r}, found {magic!r} in {source}.")
    if kind >= len(FEATURE_KINDS):
        raise DecodeError(f"VXF1 header: unknown kind code {kind} in {source}.")
    n_bytes = bands * frames * 4
    body = data[_HEADER.size:_HEADER.size + n_bytes]
    if len(body) != n_bytes:
        raise DecodeError(f"VXF1 payload: {source} holds {len(body)} of {n_bytes} value bytes.")
    values = np.frombuffer(body, dtype="<f4").reshape(bands, frames).astype(np.float32)
    fp = data[_HEADER.size + n_bytes:].decode("utf-8")
    return FeatureMatrix(values, FEATURE_KINDS[kind], fp)


def write_feature_file(path: str | Path, m: FeatureMatrix) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_feature_matrix(m))
    return path


def read_feature_file(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    return decode_feature_matrix(path.read_bytes(), str(path))


@dataclass(eq=False)
class LabeledFeatures:
    """A stack of feature matrices [N × bands × frames] with speaker labels."""

    values: np.ndarray
    speaker_ids: np.ndarray
    utterance_ids: np.ndarray
    kind: str
    fingerprint: str = ""

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError(f"Expected [N × bands × frames] features, got shape {self.values.shape}.")
        if not len(self.values) == len(self.speaker_ids) == len(self.utterance_ids):
            raise ShapeError("Feature, speaker and utterance arrays differ in length.")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def input_shape(self) -> tuple[int, int]:
        return int(self.values.shape[1]), int(self.values.shape[2])

    def class_labels(self) -> list[str]:
        return sorted(set(self.speaker_ids.tolist()))

    def encode_labels(self, class_labels: list[str]) -> np.ndarray:
        lookup = {s: i for i, s in enumerate(class_labels)}
        unknown = sorted(set(self.speaker_ids.tolist()) - lookup.keys())
        if unknown:
            raise ShapeError(f"Speakers {unknown} are not in the model's label space.")
        return np.array([lookup[s] for s in self.speaker_ids], dtype=np.int64)

    def subset(self, indices) -> "LabeledFeatures":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledFeatures(
            self.values[idx], self.speaker_ids[idx], self.utterance_ids[idx], self.kind, self.fingerprint
        )


def extract_to_store(
    chunks: list[AudioClip],
    out_dir: str | Path,
    kind: str,
    cfg: StftConfig = StftConfig(),
    threads: int = 1,
    **params,
) -> pd.DataFrame:
    """Extract `kind` features for every chunk and write one VXF1 file each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    info(f"Extracting {kind} features for {len(chunks)} chunks into {out_dir} ...")

    def work(clip: AudioClip) -> tuple[str, str, str]:
        m = extract(clip, kind, cfg, **params)
        rel = Path(clip.speaker_id) / f"{clip.utterance_id}.vxf"
        write_feature_file(out_dir / rel, m)
        return rel.as_posix(), clip.speaker_id, clip.utterance_id

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        rows = list(pool.map(work, chunks))

    index = pd.DataFrame(rows, columns=INDEX_COLUMNS)
    index.to_csv(out_dir / INDEX_FILE, index=False, lineterminator="\n")
    extraction = {"kind": kind, "stft": asdict(cfg), **params}
    (out_dir / EXTRACTION_FILE).write_text(json.dumps(extraction, indent=2, sort_keys=True) + "\n")
    info(f"Wrote {len(rows)} feature files and {INDEX_FILE}.")
    return index


def load_feature_set(store_dir: str | Path) -> LabeledFeatures:
    store_dir = Path(store_dir)
    index = pd.read_csv(store_dir / INDEX_FILE, dtype=str, keep_default_na=False)
    if index.empty:
        raise ShapeError(f"Feature store {store_dir} is empty.")
    matrices = [read_feature_file(store_dir / f) for f in index["file"]]

    kinds = {m.kind for m in matrices}
    shapes = {m.values.shape for m in matrices}
    if len(kinds) != 1 or len(shapes) != 1:
        raise ShapeError(f"Feature store {store_dir} mixes kinds {kinds} or shapes {shapes}.")
    prints = {m.config_fingerprint for m in matrices}
    if len(prints) != 1:
        warn(f"Feature store {store_dir} mixes {len(prints)} extraction fingerprints.")

    return LabeledFeatures(
        values=np.stack([m.values for m in matrices]).astype(np.float32),
        speaker_ids=index["speaker_id"].to_numpy(dtype=object),
        utterance_ids=index["utterance_id"].to_numpy(dtype=object),
        kind=matrices[0].kind,
        fingerprint=matrices[0].config_fingerprint,
    )
