"""Bit-exact interchange layer for feature matrices, alignments, and manifests.

Feature files are a fixed little-endian binary format so that files written by
any producer (the MFCC frontend, an external extractor bridge) parse
identically everywhere:

    magic "AFPR" | version u16 | reserved u16 | n_frames u32 | dim u32
    | frame_rate f32 | offset f32 | utterance_id_len u16
    | utterance_id UTF-8 | payload f32 row-major

Alignments are plain text ("start end phone" per line, sample units) and
manifests are 4-column TSV.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np

from .errors import DataError

MAGIC = b"AFPR"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIffH")  # fixed prefix through utterance_id_len

SPLITS = ("train", "validation", "test")


def _f32(value: float, name: str) -> float:
    quantized = float(np.float32(value))
    if not np.isfinite(quantized):
        raise DataError(f"{name} must be finite, got {value!r}")
    return quantized


@dataclass
class FeatureMatrix:
    """One utterance's frame-level features plus timing metadata.

    ``frame_rate`` (frames/second) and ``offset`` (seconds, center time of
    frame 0) are quantized to float32 at construction so that every valid
    instance round-trips bit-exactly through the file format. ``data`` is
    stored float32; downstream computation upcasts to float64.
    """

    utterance_id: str
    frame_rate: float
    offset: float
    data: np.ndarray

    def __post_init__(self) -> None:
        self.frame_rate = _f32(self.frame_rate, "frame_rate")
        self.offset = _f32(self.offset, "offset")
        if self.frame_rate <= 0:
            raise DataError(f"frame_rate must be > 0, got {self.frame_rate}")
        if self.offset < 0:
            raise DataError(f"offset must be >= 0, got {self.offset}")
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DataError(f"feature data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise DataError("feature dim must be >= 1")
        if not np.all(np.isfinite(data)):
            raise DataError(f"non-finite values in features for {self.utterance_id!r}")
        self.data = data

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def frame_times(self) -> np.ndarray:
        """Center time (seconds) of every frame: offset + i / frame_rate."""
        return self.offset + np.arange(self.n_frames, dtype=np.float64) / self.frame_rate

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.utterance_id == other.utterance_id
            and self.frame_rate == other.frame_rate
            and self.offset == other.offset
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


@dataclass(frozen=True)
class Segment:
    start_sample: int
    end_sample: int
    phone: str


@dataclass
class PhoneAlignment:
    """Time-aligned phone segments; half-open sample intervals [start, end)."""

    utterance_id: str
    sample_rate: int
    segments: list[Segment] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be > 0, got {self.sample_rate}")
        prev_end = None
        for seg in self.segments:
            if seg.start_sample < 0:
                raise DataError(f"negative start sample in {self.utterance_id!r}: {seg}")
            if seg.end_sample <= seg.start_sample:
                raise DataError(
                    f"segment end <= start in {self.utterance_id!r}: "
                    f"{seg.start_sample} {seg.end_sample} {seg.phone}"
                )
            if prev_end is not None and seg.start_sample < prev_end:
                raise DataError(
                    f"overlapping segments in {self.utterance_id!r} at sample {seg.start_sample}"
                )
            prev_end = seg.end_sample


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    feature_path: Path
    alignment_path: Path
    split: str


@dataclass
class Manifest:
    entries: list[ManifestEntry]

    def select(self, split: str) -> list[ManifestEntry]:
        if split == "all":
            return list(self.entries)
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}; expected one of {SPLITS} or 'all'")
        return [e for e in self.entries if e.split == split]


def write_features(m: FeatureMatrix, destination: str | Path | BinaryIO) -> None:
    """Serialize ``m`` to the AFPR binary format (bit-exact round trip)."""
    uid = m.utterance_id.encode("utf-8")
    if len(uid) > 0xFFFF:
        raise DataError(f"utterance_id too long ({len(uid)} bytes)")
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        0,
        m.n_frames,
        m.dim,
        np.float32(m.frame_rate),
        np.float32(m.offset),
        len(uid),
    )
    payload = np.ascontiguousarray(m.data, dtype="<f4").tobytes()
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as fh:
            fh.write(header)
            fh.write(uid)
            fh.write(payload)
    else:
        destination.write(header)
        destination.write(uid)
        destination.write(payload)


def read_features(source: str | Path | BinaryIO) -> FeatureMatrix:
    """Parse an AFPR file; bad magic, version mismatch, and truncation are
    reported as distinct errors."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return read_features(fh)
    name = getattr(source, "name", "<stream>")
    raw = source.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise DataError(f"{name}: truncated header ({len(raw)} bytes)")
    magic, version, _reserved, n_frames, dim, frame_rate, offset, uid_len = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DataError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"{name}: unsupported version {version}")
    uid_raw = source.read(uid_len)
    if len(uid_raw) < uid_len:
        raise DataError(f"{name}: truncated utterance id")
    try:
        uid = uid_raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"{name}: utterance id is not valid UTF-8") from exc
    expected = n_frames * dim * 4
    payload = source.read(expected)
    if len(payload) < expected:
        raise DataError(
            f"{name}: truncated payload ({len(payload)} of {expected} bytes)"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n_frames, dim)
    return FeatureMatrix(uid, frame_rate, offset, data.copy())


def read_alignment(
    source: str | Path | io.TextIOBase | Iterable[str],
    sample_rate: int,
    utterance_id: str | None = None,
) -> PhoneAlignment:
    """Parse a "start end phone" text alignment (TIMIT .phn convention).

    The sample rate is supplied out-of-band because the format omits it.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        uid = utterance_id if utterance_id is not None else path.stem
        with open(path, "r", encoding="utf-8") as fh:
            return read_alignment(fh, sample_rate, uid)
    uid = utterance_id if utterance_id is not None else "<stream>"
    segments = []
    for lineno, line in enumerate(source, start=1):
        text = line.strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 3:
            raise DataError(f"{uid}: line {lineno}: expected 'start end phone', got {text!r}")
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataError(f"{uid}: line {lineno}: non-integer bounds in {text!r}") from exc
        segments.append(Segment(start, end, parts[2]))
    segments.sort(key=lambda s: s.start_sample)
    return PhoneAlignment(uid, sample_rate, segments)


def read_manifest(source: str | Path) -> Manifest:
    """Load a 4-column TSV manifest; relative paths resolve against the
    manifest's own directory; every path must exist."""
    path = Path(source)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            cols = text.split("\t")
            if len(cols) != 4:
                raise DataError(f"{path}: line {lineno}: expected 4 TSV columns, got {len(cols)}")
            uid, feat, ali, split = cols
            if uid in seen:
                raise DataError(f"{path}: line {lineno}: duplicate utterance_id {uid!r}")
            seen.add(uid)
            if split not in SPLITS:
                raise DataError(f"{path}: line {lineno}: unknown split {split!r}")
            feat_path = (base / feat).resolve() if not Path(feat).is_absolute() else Path(feat)
            ali_path = (base / ali).resolve() if not Path(ali).is_absolute() else Path(ali)
            for p in (feat_path, ali_path):
                if not p.exists():
                    raise DataError(f"{path}: line {lineno}: path does not exist: {p}")
            entries.append(ManifestEntry(uid, feat_path, ali_path, split))
    return Manifest(entries)


def write_manifest(manifest: Manifest, destination: str | Path) -> None:
    with open(destination, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            fh.write(f"{e.utterance_id}\t{e.feature_path}\t{e.alignment_path}\t{e.split}\n")
