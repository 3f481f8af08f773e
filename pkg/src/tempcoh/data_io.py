"""On-disk formats: frame features, labels, splits, datasets, checkpoints.

Feature files are little-endian binary:

    magic b"TCSL" | version u16 | video_id (u32 length + UTF-8)
    | num_frames u32 | feature_dim u32 | fps f32
    | num_frames * feature_dim float32, row-major

Labels ride in a CSV sidecar (`frame_index,phase_id` header, one row per
frame in order). Split assignments are text lines `video_id,set`. A dataset
directory is tied together by a JSON manifest. Checkpoints reuse the same
binary envelope followed by a named float32 parameter table and a JSON
metadata trailer.

All writers go through a temp file plus os.replace, so a crash never leaves
a half-written file under the final name. Readers reject truncated input
(reporting the byte offset) and non-finite values.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, DataFormatError
from .models import EncoderModel, PhaseModel

MAGIC = b"TCSL"
FORMAT_VERSION = 1
SPLIT_NAMES = ("A", "B", "C", "D")
LABELS_HEADER = "frame_index,phase_id"


@dataclass
class FrameSequence:
    """One video's per-frame feature vectors, with optional phase labels."""

    video_id: str
    features: np.ndarray  # (num_frames, feature_dim) float32
    fps: float
    labels: np.ndarray | None = None  # (num_frames,) int32 phase ids

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError("features must be a non-empty (num_frames, dim) array")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int32)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError("labels must have one entry per frame")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Dataset:
    """A directory of frame sequences plus their split assignment."""

    videos: list[FrameSequence]
    splits: dict[str, str]  # video_id -> split name
    num_phases: int
    fps: float

    def __post_init__(self):
        ids = [v.video_id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate video ids")
        if set(self.splits) != set(ids):
            raise ValueError("splits must assign exactly the dataset's video ids")
        bad = sorted(set(self.splits.values()) - set(SPLIT_NAMES))
        if bad:
            raise ValueError(f"unknown split name(s) {bad}; expected {SPLIT_NAMES}")

    @property
    def feature_dim(self) -> int:
        return self.videos[0].feature_dim

    def split(self, *names: str) -> list[FrameSequence]:
        for n in names:
            if n not in SPLIT_NAMES:
                raise ValueError(f"unknown split name {n!r}")
        return [v for v in self.videos if self.splits[v.video_id] in names]

    def by_id(self, video_id: str) -> FrameSequence:
        for v in self.videos:
            if v.video_id == video_id:
                return v
        raise KeyError(video_id)


def _atomic_write(path, write_fn) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as f:
            write_fn(f)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    _atomic_write(path, lambda f: f.write(data))


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


class _Reader:
    """Byte reader that reports the offset of any truncation."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.path = path
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DataFormatError(
                f"{self.path}: truncated while reading {what}: needed {n} bytes "
                f"at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32(self, what: str) -> float:
        return struct.unpack("<f", self.take(4, what))[0]

    def string(self, what: str) -> str:
        n = self.u32(f"{what} length")
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"{self.path}: {what} is not valid UTF-8") from exc

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise DataFormatError(
                f"{self.path}: {len(self.data) - self.pos} unexpected trailing "
                f"bytes at offset {self.pos}")


def _pack_string(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _check_envelope(r: _Reader) -> None:
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise DataFormatError(f"{r.path}: bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u16("format version")
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"{r.path}: unsupported format version {version}, "
            f"expected {FORMAT_VERSION}")


def save_features(path, seq: FrameSequence) -> None:
    arr = seq.features
    if not np.isfinite(arr).all():
        raise DataFormatError(f"refusing to write non-finite features for "
                              f"video {seq.video_id!r}")

    def write(f):
        f.write(MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(_pack_string(seq.video_id))
        f.write(struct.pack("<IIf", seq.num_frames, seq.feature_dim, seq.fps))
        f.write(arr.astype("<f4", copy=False).tobytes(order="C"))

    _atomic_write(path, write)


def load_features(path) -> FrameSequence:
    r = _Reader(Path(path).read_bytes(), path)
    _check_envelope(r)
    video_id = r.string("video id")
    num_frames = r.u32("frame count")
    feature_dim = r.u32("feature dim")
    fps = r.f32("fps")
    if num_frames == 0 or feature_dim == 0:
        raise DataFormatError(f"{path}: empty feature array "
                              f"({num_frames} frames x {feature_dim} dims)")
    if fps <= 0 or not np.isfinite(fps):
        raise DataFormatError(f"{path}: invalid fps {fps}")
    raw = r.take(num_frames * feature_dim * 4, "feature payload")
    r.expect_end()
    arr = np.frombuffer(raw, dtype="<f4").reshape(num_frames, feature_dim).copy()
    if not np.isfinite(arr).all():
        raise DataFormatError(f"{path}: feature payload contains non-finite values")
    return FrameSequence(video_id, arr, float(fps))


def save_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be one-dimensional")

    def write(f):
        lines = [LABELS_HEADER]
        lines.extend(f"{i},{int(p)}" for i, p in enumerate(labels))
        f.write(("\n".join(lines) + "\n").encode("utf-8"))

    _atomic_write(path, write)


def load_labels(path, expected_frames: int | None = None) -> np.ndarray | None:
    """Read a label sidecar; a file with no data rows means labels absent."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        return None
    if lines[0].strip() != LABELS_HEADER:
        raise DataFormatError(f"{path}: first line must be '{LABELS_HEADER}'")
    if len(lines) == 1:
        return None
    out = np.empty(len(lines) - 1, dtype=np.int32)
    for row, line in enumerate(lines[1:]):
        parts = line.strip().split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{path}: line {row + 2}: expected "
                                  f"'frame_index,phase_id', got {line!r}")
        try:
            idx, phase = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {row + 2}: non-integer "
                                  f"field in {line!r}") from exc
        if idx != row:
            raise DataFormatError(f"{path}: line {row + 2}: frame_index {idx} "
                                  f"out of order, expected {row}")
        if phase < 0:
            raise DataFormatError(f"{path}: line {row + 2}: negative phase id")
        out[row] = phase
    if expected_frames is not None and out.shape[0] != expected_frames:
        raise DataFormatError(f"{path}: {out.shape[0]} label rows for "
                              f"{expected_frames} frames")
    return out


def labels_path_for(features_path) -> Path:
    """Label sidecar convention: the feature file's path plus .labels.csv."""
    features_path = Path(features_path)
    return features_path.with_name(features_path.name + ".labels.csv")


def write_video(path, seq: FrameSequence) -> None:
    """Write one video's features and, when present, its label sidecar."""
    save_features(path, seq)
    sidecar = labels_path_for(path)
    if seq.labels is not None:
        save_labels(sidecar, seq.labels)
    else:
        sidecar.unlink(missing_ok=True)


def read_video(path) -> FrameSequence:
    """Read one video; labels attach when a non-empty sidecar exists."""
    seq = load_features(path)
    sidecar = labels_path_for(path)
    if sidecar.exists():
        seq.labels = load_labels(sidecar, seq.num_frames)
    return seq


def save_splits(path, splits: dict[str, str]) -> None:
    def write(f):
        lines = [f"{vid},{name}" for vid, name in splits.items()]
        f.write(("\n".join(lines) + "\n").encode("utf-8"))

    _atomic_write(path, write)


def load_splits(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{path}: line {ln}: expected 'video_id,set'")
        vid, name = parts[0].strip(), parts[1].strip()
        if name not in SPLIT_NAMES:
            raise DataFormatError(f"{path}: line {ln}: unknown split {name!r}, "
                                  f"expected one of {SPLIT_NAMES}")
        if vid in out:
            raise DataFormatError(f"{path}: line {ln}: duplicate video id {vid!r}")
        out[vid] = name
    if not out:
        raise DataFormatError(f"{path}: no split assignments found")
    return out


def save_dataset(directory, dataset: Dataset) -> Path:
    """Write features, labels, splits and the JSON manifest; returns the
    manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for seq in dataset.videos:
        feat_name = f"{seq.video_id}.feat"
        write_video(directory / feat_name, seq)
        entry = {
            "video_id": seq.video_id,
            "num_frames": seq.num_frames,
            "features": feat_name,
        }
        if seq.labels is not None:
            entry["labels"] = labels_path_for(feat_name).name
        entries.append(entry)
    save_splits(directory / "splits.txt", dataset.splits)
    manifest = {
        "format": "tempcoh-dataset",
        "version": FORMAT_VERSION,
        "fps": dataset.fps,
        "num_phases": dataset.num_phases,
        "feature_dim": dataset.feature_dim,
        "splits_file": "splits.txt",
        "videos": entries,
    }
    path = directory / "dataset.json"
    _atomic_write(path, lambda f: f.write(
        json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")))
    return path


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest_path = directory / "dataset.json"
    if not manifest_path.exists():
        raise DataFormatError(f"{manifest_path}: not found")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    for key in ("format", "version", "fps", "num_phases", "feature_dim",
                "splits_file", "videos"):
        if key not in manifest:
            raise DataFormatError(f"{manifest_path}: missing key {key!r}")
    if manifest["format"] != "tempcoh-dataset":
        raise DataFormatError(f"{manifest_path}: not a dataset manifest "
                              f"(format={manifest['format']!r})")
    if manifest["version"] != FORMAT_VERSION:
        raise DataFormatError(f"{manifest_path}: unsupported version "
                              f"{manifest['version']}")
    num_phases = int(manifest["num_phases"])
    fps = float(manifest["fps"])
    feature_dim = int(manifest["feature_dim"])
    videos = []
    for entry in manifest["videos"]:
        seq = load_features(directory / entry["features"])
        if seq.video_id != entry["video_id"]:
            raise DataFormatError(
                f"{directory / entry['features']}: holds video "
                f"{seq.video_id!r} but manifest names {entry['video_id']!r}")
        if seq.num_frames != entry["num_frames"]:
            raise DataFormatError(
                f"{directory / entry['features']}: {seq.num_frames} frames, "
                f"manifest says {entry['num_frames']}")
        if seq.feature_dim != feature_dim:
            raise DataFormatError(
                f"{directory / entry['features']}: feature dim "
                f"{seq.feature_dim}, manifest says {feature_dim}")
        if abs(seq.fps - fps) > 1e-5:
            raise DataFormatError(
                f"{directory / entry['features']}: fps {seq.fps}, "
                f"manifest says {fps}")
        if "labels" in entry:
            labels = load_labels(directory / entry["labels"], seq.num_frames)
            if labels is not None and labels.size and labels.max() >= num_phases:
                raise DataFormatError(
                    f"{directory / entry['labels']}: phase id {labels.max()} "
                    f">= num_phases {num_phases}")
            seq.labels = labels
        videos.append(seq)
    splits = load_splits(directory / manifest["splits_file"])
    return Dataset(videos, splits, num_phases, fps)


def save_checkpoint(path, kind: str, params: dict[str, np.ndarray],
                    metadata: dict) -> None:
    """Write a named-parameter checkpoint. Parameters are stored float32."""
    for name, arr in params.items():
        if not np.isfinite(arr).all():
            raise CheckpointError(f"refusing to write non-finite parameter "
                                  f"{name!r}")

    def write(f):
        f.write(MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(_pack_string(kind))
        f.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.asarray(params[name], dtype="<f4")
            f.write(_pack_string(name))
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))
        f.write(_pack_string(json.dumps(metadata, sort_keys=True)))

    _atomic_write(path, write)


def load_checkpoint(path):
    """Read a checkpoint; returns (kind, params, metadata)."""
    r = _Reader(Path(path).read_bytes(), path)
    try:
        _check_envelope(r)
        kind = r.string("checkpoint kind")
        count = r.u32("parameter count")
        params: dict[str, np.ndarray] = {}
        for i in range(count):
            name = r.string(f"parameter {i} name")
            ndim = r.u32(f"{name} ndim")
            if ndim > 8:
                raise DataFormatError(f"{path}: parameter {name!r} claims "
                                      f"{ndim} dimensions")
            shape = tuple(r.u32(f"{name} dim {d}") for d in range(ndim))
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = r.take(n * 4, f"{name} data")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            if not np.isfinite(arr).all():
                raise DataFormatError(f"{path}: parameter {name!r} contains "
                                      f"non-finite values")
            if name in params:
                raise DataFormatError(f"{path}: duplicate parameter {name!r}")
            params[name] = arr
        meta_raw = r.string("metadata")
        r.expect_end()
        metadata = json.loads(meta_raw)
    except DataFormatError as exc:
        raise CheckpointError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: metadata is not valid JSON: {exc}") from exc
    return kind, params, metadata


def _fill_params(model, params: dict[str, np.ndarray], path) -> None:
    expected = model.parameters()
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise CheckpointError(f"{path}: parameter names do not match model "
                              f"(missing {missing}, unexpected {extra})")
    for name, arr in expected.items():
        if params[name].shape != arr.shape:
            raise CheckpointError(f"{path}: parameter {name!r} has shape "
                                  f"{params[name].shape}, expected {arr.shape}")
        arr[...] = params[name]


def save_encoder(path, encoder: EncoderModel, extra_metadata: dict | None = None) -> None:
    metadata = {
        "layer_sizes": encoder.layer_sizes,
        "trainable": list(encoder.trainable),
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    save_checkpoint(path, "encoder", encoder.parameters(), metadata)


def load_encoder(path) -> tuple[EncoderModel, dict]:
    kind, params, metadata = load_checkpoint(path)
    if kind != "encoder":
        raise CheckpointError(f"{path}: checkpoint kind {kind!r}, expected 'encoder'")
    sizes = metadata.get("layer_sizes")
    if not isinstance(sizes, list) or len(sizes) < 2:
        raise CheckpointError(f"{path}: metadata lacks a valid layer_sizes list")
    encoder = EncoderModel.create(sizes[0], sizes[1:-1], sizes[-1])
    _fill_params(encoder, params, path)
    trainable = metadata.get("trainable")
    if isinstance(trainable, list) and len(trainable) == encoder.num_layers:
        encoder.trainable = [bool(t) for t in trainable]
    return encoder, metadata


def save_phase_model(path, model: PhaseModel, extra_metadata: dict | None = None) -> None:
    metadata = {
        "encoder_layer_sizes": model.encoder.layer_sizes,
        "encoder_trainable": list(model.encoder.trainable),
        "hidden_size": model.hidden_size,
        "num_phases": model.num_phases,
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    save_checkpoint(path, "phase_model", model.parameters(), metadata)


def load_phase_model(path) -> tuple[PhaseModel, dict]:
    kind, params, metadata = load_checkpoint(path)
    if kind != "phase_model":
        raise CheckpointError(f"{path}: checkpoint kind {kind!r}, "
                              f"expected 'phase_model'")
    sizes = metadata.get("encoder_layer_sizes")
    if not isinstance(sizes, list) or len(sizes) < 2:
        raise CheckpointError(f"{path}: metadata lacks encoder_layer_sizes")
    try:
        hidden_size = int(metadata["hidden_size"])
        num_phases = int(metadata["num_phases"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: metadata lacks hidden_size/num_phases") from exc
    encoder = EncoderModel.create(sizes[0], sizes[1:-1], sizes[-1])
    model = PhaseModel.create(encoder, hidden_size, num_phases)
    _fill_params(model, params, path)
    trainable = metadata.get("encoder_trainable")
    if isinstance(trainable, list) and len(trainable) == encoder.num_layers:
        encoder.trainable = [bool(t) for t in trainable]
    return model, metadata
