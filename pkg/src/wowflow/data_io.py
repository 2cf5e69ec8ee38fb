"""Synthetic datasets, CSV/IDX loaders and the ``.wowz`` snapshot format."""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import BadMagic, CountMismatch, MalformedRecord, ParseError, RaggedClasses, TruncatedFile
from .measures import MetaMeasure, PointCloud

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

RING_RADIUS = 1.0
RING_CENTER_RADIUS = 2.5


# ---------------------------------------------------------------- generators

def make_rings(n_per_ring: int = 80, n_rings: int = 3, seed: int = 0) -> MetaMeasure:
    """Circles of radius 1 whose centers sit on a circle of radius 2.5.

    The first center is at angle pi/2; the points of a ring are equally spaced
    in angle, starting from a seeded random offset.
    """
    if n_per_ring < 3:
        raise ValueError("a ring needs at least 3 points")
    if n_rings < 1:
        raise ValueError("need at least one ring")
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=n_rings)
    clouds = []
    for r in range(n_rings):
        phi = np.pi / 2 + 2.0 * np.pi * r / n_rings
        center = RING_CENTER_RADIUS * np.array([np.cos(phi), np.sin(phi)])
        angles = offsets[r] + 2.0 * np.pi * np.arange(n_per_ring) / n_per_ring
        pts = center + RING_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        clouds.append(PointCloud(pts))
    return MetaMeasure(clouds)


def make_gaussian_blobs(C: int, n: int, d: int = 2, spread: float = 0.5, seed: int = 0,
                        center_scale: float = 1.0) -> MetaMeasure:
    """C isotropic Gaussian clouds of n points with standard deviation ``spread``.

    Centers are drawn i.i.d. from N(0, center_scale^2 I).
    """
    if C < 1 or n < 1 or d < 1:
        raise ValueError("C, n and d must be positive")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    centers = center_scale * rng.standard_normal((C, d))
    noise = rng.standard_normal((C, n, d))
    return MetaMeasure.from_array(centers[:, None, :] + spread * noise)


# ---------------------------------------------------------------- CSV

def _class_key(label: str):
    try:
        return (0, int(label), label)
    except ValueError:
        return (1, 0, label)


def load_csv_labeled(path, allow_ragged: bool = False):
    """Read ``class,x0,...`` rows; return (class labels in cloud order, MetaMeasure)."""
    groups: dict = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        if len(header) < 2 or header[0].strip() != "class":
            raise ParseError("header must be class,x0,x1,...", line=1)
        d = len(header) - 1
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} fields, got {len(row)}", line=line)
            label = row[0].strip()
            try:
                coords = [float(x) for x in row[1:]]
            except ValueError as err:
                raise ParseError(str(err), line=line) from None
            if not all(math.isfinite(x) for x in coords):
                raise ParseError("non-finite coordinate", line=line)
            groups.setdefault(label, []).append(coords)
    if not groups:
        raise ParseError("no data rows", line=2)
    labels = sorted(groups, key=_class_key)
    counts = {lab: len(groups[lab]) for lab in labels}
    if len(set(counts.values())) > 1:
        if not allow_ragged:
            raise RaggedClasses(counts)
        keep = min(counts.values())
        groups = {lab: rows[:keep] for lab, rows in groups.items()}
    return labels, MetaMeasure([PointCloud(np.array(groups[lab])) for lab in labels])


def load_csv_dataset(path, allow_ragged: bool = False) -> MetaMeasure:
    return load_csv_labeled(path, allow_ragged)[1]


def write_csv_dataset(P: MetaMeasure, path, labels=None) -> None:
    """Write one row per point; floats use repr so the file reloads exactly."""
    labels = list(labels) if labels is not None else list(range(P.C))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class"] + [f"x{j}" for j in range(P.d)])
        for lab, cloud in zip(labels, P.clouds):
            for x in cloud.points:
                w.writerow([lab] + [repr(float(v)) for v in x])


# ---------------------------------------------------------------- IDX

def _read_idx(path, magic: int, rank: int):
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: file shorter than its magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagic(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    header_end = 4 + 4 * rank
    if len(raw) < header_end:
        raise TruncatedFile(f"{path}: header truncated")
    dims = struct.unpack(f">{rank}I", raw[4:header_end])
    size = int(np.prod(dims))
    if len(raw) < header_end + size:
        raise TruncatedFile(f"{path}: expected {size} data bytes, found {len(raw) - header_end}")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header_end)
    return data.reshape(dims)


def load_idx_images(images_path, labels_path, per_class: int, seed: int = 0) -> MetaMeasure:
    """Load an IDX image/label pair as one cloud of ``per_class`` images per label.

    Pixels are divided by 255 and each image is flattened row-major.
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    rng = np.random.default_rng(seed)
    clouds = []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if idx.size < per_class:
            raise CountMismatch(f"class {int(lab)} has {idx.size} samples, fewer than per_class={per_class}")
        chosen = rng.choice(idx, size=per_class, replace=False)
        clouds.append(PointCloud(flat[chosen]))
    return MetaMeasure(clouds)


def idx_bytes(array: np.ndarray) -> bytes:
    """Encode a uint8 array of rank 1 or 3 as an IDX byte string."""
    a = np.asarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}[a.ndim]
    return struct.pack(f">I{a.ndim}I", magic, *a.shape) + a.tobytes()


# ---------------------------------------------------------------- snapshots

@dataclass(eq=False)
class SnapshotRecord:
    iteration: int
    objective: float
    mix_weights: np.ndarray
    clouds: list

    @classmethod
    def of(cls, iteration: int, P: MetaMeasure, objective: float) -> "SnapshotRecord":
        return cls(int(iteration), float(objective), np.array(P.mix_weights), [np.array(c.points) for c in P.clouds])

    def to_meta_measure(self) -> MetaMeasure:
        return MetaMeasure([PointCloud(c) for c in self.clouds], self.mix_weights)

    def __eq__(self, other):
        if not isinstance(other, SnapshotRecord):
            return NotImplemented
        same_obj = self.objective == other.objective or (math.isnan(self.objective) and math.isnan(other.objective))
        return (self.iteration == other.iteration and same_obj
                and np.array_equal(self.mix_weights, other.mix_weights)
                and len(self.clouds) == len(other.clouds)
                and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.clouds, other.clouds)))


def _encode(record: SnapshotRecord) -> str:
    obj = {
        "iteration": int(record.iteration),
        "objective": float(record.objective),
        "mix_weights": [float(w) for w in np.asarray(record.mix_weights).ravel()],
        "clouds": [np.asarray(c, dtype=np.float64).tolist() for c in record.clouds],
    }
    return json.dumps(obj, separators=(",", ":")) + "\n"


def _decode(line: str, offset) -> SnapshotRecord:
    try:
        obj = json.loads(line)
        record = SnapshotRecord(
            iteration=int(obj["iteration"]),
            objective=float(obj["objective"]),
            mix_weights=np.array(obj["mix_weights"], dtype=np.float64),
            clouds=[np.array(c, dtype=np.float64) for c in obj["clouds"]],
        )
    except (ValueError, KeyError, TypeError) as err:
        raise MalformedRecord(f"cannot decode snapshot: {err}", offset=offset) from None
    if any(c.ndim != 2 for c in record.clouds) or record.mix_weights.size != len(record.clouds):
        raise MalformedRecord("inconsistent snapshot shapes", offset=offset)
    return record


def write_snapshot(record: SnapshotRecord, stream) -> None:
    stream.write(_encode(record))


def read_snapshot(stream) -> Optional[SnapshotRecord]:
    """Read one record; ``None`` signals end of stream."""
    try:
        offset = stream.tell()
    except (OSError, AttributeError):
        offset = None
    line = stream.readline()
    if not line:
        return None
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    return _decode(line, offset)


def iter_snapshots(stream) -> Iterator[SnapshotRecord]:
    """Yield every record of a stream, tracking byte offsets for error messages."""
    offset = 0
    for line in stream:
        raw = line if isinstance(line, bytes) else line.encode("utf-8")
        if raw.strip():
            yield _decode(raw.decode("utf-8"), offset)
        offset += len(raw)


class SnapshotWriter:
    """Sink for :func:`wowflow.flow.run_flow` that appends records to a ``.wowz`` file."""

    def __init__(self, stream):
        self.stream = stream
        self.count = 0

    def __call__(self, iteration: int, P: MetaMeasure, objective: float) -> None:
        write_snapshot(SnapshotRecord.of(iteration, P, objective), self.stream)
        self.count += 1
