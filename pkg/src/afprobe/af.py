"""Articulatory-feature inventory, phone-to-AF mapping, and frame labeling.

The seven features and their quantized class sets are fixed; the phone map is
data (TSV), shipped with a default covering the 39-phone folded TIMIT set and
overridable for other corpora.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .store import FeatureMatrix, PhoneAlignment

FEATURE_NAMES = ("manner", "place", "voice", "high-low", "fr-back", "round", "static")

_DEFAULT_CLASSES: dict[str, tuple[str, ...]] = {
    "manner": ("approximate", "retroflex", "fricative", "nasal", "stop", "vowel", "nil"),
    "place": ("bilabial", "labiodental", "dental", "alveolar", "velar", "nil"),
    "voice": ("+voice", "-voice"),
    "high-low": ("high", "mid", "low", "nil"),
    "fr-back": ("front", "central", "back", "nil"),
    "round": ("+round", "-round", "nil"),
    "static": ("static", "dynamic"),
}

DEFAULT_DROP = frozenset({"sil", "h#", "pau", "epi", "q"})

_LABELED_MAGIC = b"AFLS"
_LABELED_VERSION = 1
_LABELED_HEADER = struct.Struct("<4sHHI")


@dataclass(frozen=True)
class AfInventory:
    """The ordered feature list and the ordered class list of each feature."""

    features: tuple[str, ...] = FEATURE_NAMES
    classes: Mapping[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(_DEFAULT_CLASSES)
    )

    def __post_init__(self) -> None:
        for name in self.features:
            if name not in self.classes or not self.classes[name]:
                raise DataError(f"inventory is missing classes for feature {name!r}")

    def class_index(self, feature: str, label: str) -> int:
        try:
            return self.classes[feature].index(label)
        except ValueError:
            raise DataError(f"unknown class {label!r} for feature {feature!r}") from None

    def to_jsonable(self) -> dict:
        return {
            "features": list(self.features),
            "classes": {f: list(self.classes[f]) for f in self.features},
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "AfInventory":
        return cls(
            features=tuple(obj["features"]),
            classes={f: tuple(c) for f, c in obj["classes"].items()},
        )


@dataclass(frozen=True)
class AfVector:
    """One class label per feature, in inventory feature order."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(FEATURE_NAMES):
            raise DataError(f"expected {len(FEATURE_NAMES)} labels, got {len(self.labels)}")

    def as_dict(self) -> dict[str, str]:
        return dict(zip(FEATURE_NAMES, self.labels))


@dataclass
class AfMap:
    """Total map from phone strings to validated AfVectors."""

    entries: dict[str, AfVector]
    inventory: AfInventory

    def __getitem__(self, phone: str) -> AfVector:
        return self.entries[phone]

    def __contains__(self, phone: str) -> bool:
        return phone in self.entries


def load_af_map(
    source: str | Path | io.TextIOBase | Iterable[str],
    inventory: AfInventory | None = None,
) -> AfMap:
    """Parse a phone-to-AF TSV with header
    "phone manner place voice high-low fr-back round static" and an optional
    trailing "comment" column. Every class token must exist in the inventory.
    """
    inventory = inventory or AfInventory()
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_af_map(fh, inventory)
    lines = [ln.rstrip("\n") for ln in source]
    rows = [ln for ln in lines if ln.strip()]
    if not rows:
        raise DataError("empty AF map")
    header = rows[0].split("\t")
    expected = ["phone", *FEATURE_NAMES]
    if header[: len(expected)] != expected:
        missing = [c for c in expected if c not in header]
        raise DataError(f"AF map header missing column(s) {missing}; got {header}")
    has_comment = len(header) > len(expected)
    entries: dict[str, AfVector] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        cols = row.split("\t")
        n_needed = len(expected)
        if len(cols) < n_needed or (not has_comment and len(cols) > n_needed):
            raise DataError(f"AF map line {lineno}: expected {n_needed} columns, got {len(cols)}")
        phone = cols[0]
        if phone in entries:
            raise DataError(f"AF map line {lineno}: duplicate phone {phone!r}")
        labels = tuple(cols[1 : n_needed])
        for feat, label in zip(FEATURE_NAMES, labels):
            if label not in inventory.classes[feat]:
                raise DataError(
                    f"AF map line {lineno}: unknown class {label!r} for feature {feat!r}"
                )
        entries[phone] = AfVector(labels)
    return AfMap(entries, inventory)


def default_af_map() -> AfMap:
    """The bundled map for the 39-phone folded TIMIT set (plus silence aliases)."""
    text = resources.files("afprobe").joinpath("data/timit39_af_map.tsv").read_text("utf-8")
    return load_af_map(io.StringIO(text))


@dataclass
class LabeledFrameSet:
    """Feature rows paired 1:1 with AF class-index rows and their provenance.

    ``labels`` holds class indices (n x 7, inventory order); ``utt_index`` and
    ``frame_index`` trace each row back to (utterance, frame). ``counts``
    records the kept / dropped / out-of-segment accounting of labeling.
    """

    vectors: np.ndarray
    labels: np.ndarray
    utterances: list[str]
    utt_index: np.ndarray
    frame_index: np.ndarray
    inventory: AfInventory
    counts: dict[str, int]

    def __post_init__(self) -> None:
        if self.vectors.ndim != 2 or self.labels.ndim != 2:
            raise DataError("vectors and labels must be 2-D")
        n = self.vectors.shape[0]
        if not (self.labels.shape[0] == self.utt_index.shape[0] == self.frame_index.shape[0] == n):
            raise DataError("vectors, labels, and provenance must align 1:1")
        if self.labels.shape[1] != len(self.inventory.features):
            raise DataError("label columns must match the inventory's feature count")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def label_at(self, row: int) -> AfVector:
        names = tuple(
            self.inventory.classes[f][self.labels[row, j]]
            for j, f in enumerate(self.inventory.features)
        )
        return AfVector(names)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledFrameSet):
            return NotImplemented
        return (
            np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.labels, other.labels)
            and self.utterances == other.utterances
            and np.array_equal(self.utt_index, other.utt_index)
            and np.array_equal(self.frame_index, other.frame_index)
            and self.inventory == other.inventory
            and self.counts == other.counts
        )


def _base_id(utterance_id: str) -> str:
    # extractor bridges may append a "#layer" style tag to the stored id
    return utterance_id.split("#", 1)[0]


def label_frames(
    m: FeatureMatrix,
    alignment: PhoneAlignment,
    af_map: AfMap,
    drop_list: frozenset[str] | set[str] = DEFAULT_DROP,
) -> LabeledFrameSet:
    """Assign each frame the AfVector of the segment containing its center.

    Frame i's center is offset + i / frame_rate; segments are half-open in
    time, so a center landing exactly on a boundary belongs to the later
    segment. Centers outside every segment, or inside a dropped phone, are
    omitted (and counted); a non-dropped phone missing from the map is an
    error naming all offending phones.
    """
    if m.utterance_id and alignment.utterance_id:
        if _base_id(m.utterance_id) != _base_id(alignment.utterance_id):
            raise DataError(
                f"features are for {m.utterance_id!r} but alignment is for "
                f"{alignment.utterance_id!r}"
            )
    fs = float(alignment.sample_rate)
    starts = np.array([s.start_sample for s in alignment.segments], dtype=np.float64) / fs
    ends = np.array([s.end_sample for s in alignment.segments], dtype=np.float64) / fs
    phones = [s.phone for s in alignment.segments]

    times = m.frame_times()
    if len(alignment.segments) == 0:
        seg_of = np.full(len(times), -1, dtype=np.int64)
    else:
        seg_of = np.searchsorted(starts, times, side="right") - 1
        valid = (seg_of >= 0) & (times < ends[np.clip(seg_of, 0, None)])
        seg_of = np.where(valid, seg_of, -1)

    kept_rows: list[int] = []
    kept_labels: list[tuple[int, ...]] = []
    dropped = 0
    out_of_segment = 0
    unmapped: set[str] = set()
    inv = af_map.inventory
    index_cache: dict[str, tuple[int, ...]] = {}
    for i, seg_idx in enumerate(seg_of):
        if seg_idx < 0:
            out_of_segment += 1
            continue
        phone = phones[seg_idx]
        if phone in drop_list:
            dropped += 1
            continue
        if phone not in af_map:
            unmapped.add(phone)
            continue
        if phone not in index_cache:
            vec = af_map[phone]
            index_cache[phone] = tuple(
                inv.class_index(f, lab) for f, lab in zip(inv.features, vec.labels)
            )
        kept_rows.append(i)
        kept_labels.append(index_cache[phone])
    if unmapped:
        raise DataError(f"phones missing from AF map: {sorted(unmapped)}")
    if not kept_rows:
        raise DataError(f"no labeled frames produced for {m.utterance_id!r}")

    rows = np.asarray(kept_rows, dtype=np.int64)
    return LabeledFrameSet(
        vectors=m.data[rows].copy(),
        labels=np.asarray(kept_labels, dtype=np.int16),
        utterances=[m.utterance_id],
        utt_index=np.zeros(len(rows), dtype=np.uint32),
        frame_index=rows.astype(np.uint32),
        inventory=inv,
        counts={
            "kept": len(rows),
            "dropped": dropped,
            "out_of_segment": out_of_segment,
        },
    )


def concat_labeled(sets: Sequence[LabeledFrameSet]) -> LabeledFrameSet:
    """Concatenate labeled sets in the given (manifest) order."""
    if not sets:
        raise DataError("cannot concatenate zero labeled sets")
    inv = sets[0].inventory
    for s in sets[1:]:
        if s.inventory != inv:
            raise DataError("labeled sets use different inventories")
        if s.dim != sets[0].dim:
            raise DataError(f"feature dim mismatch: {s.dim} != {sets[0].dim}")
    utterances: list[str] = []
    utt_offsets = []
    for s in sets:
        utt_offsets.append(len(utterances))
        utterances.extend(s.utterances)
    counts = {"kept": 0, "dropped": 0, "out_of_segment": 0}
    for s in sets:
        for k in counts:
            counts[k] += s.counts.get(k, 0)
    return LabeledFrameSet(
        vectors=np.concatenate([s.vectors for s in sets]),
        labels=np.concatenate([s.labels for s in sets]),
        utterances=utterances,
        utt_index=np.concatenate(
            [s.utt_index.astype(np.uint32) + off for s, off in zip(sets, utt_offsets)]
        ),
        frame_index=np.concatenate([s.frame_index for s in sets]),
        inventory=inv,
        counts=counts,
    )


def write_labeled(ls: LabeledFrameSet, destination: str | Path) -> None:
    """Serialize a LabeledFrameSet (little-endian, versioned, deterministic)."""
    header = {
        "schema": "afprobe-labeled/1",
        "n": len(ls),
        "dim": ls.dim,
        "inventory": ls.inventory.to_jsonable(),
        "utterances": ls.utterances,
        "counts": ls.counts,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(destination, "wb") as fh:
        fh.write(_LABELED_HEADER.pack(_LABELED_MAGIC, _LABELED_VERSION, 0, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(ls.vectors, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ls.labels, dtype="<i2").tobytes())
        fh.write(np.ascontiguousarray(ls.utt_index, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(ls.frame_index, dtype="<u4").tobytes())


def read_labeled(source: str | Path) -> LabeledFrameSet:
    with open(source, "rb") as fh:
        raw = fh.read(_LABELED_HEADER.size)
        if len(raw) < _LABELED_HEADER.size:
            raise DataError(f"{source}: truncated header")
        magic, version, _reserved, blob_len = _LABELED_HEADER.unpack(raw)
        if magic != _LABELED_MAGIC:
            raise DataError(f"{source}: bad magic {magic!r}")
        if version != _LABELED_VERSION:
            raise DataError(f"{source}: unsupported version {version}")
        blob = fh.read(blob_len)
        if len(blob) < blob_len:
            raise DataError(f"{source}: truncated JSON header")
        header = json.loads(blob.decode("utf-8"))
        n, dim = header["n"], header["dim"]
        inv = AfInventory.from_jsonable(header["inventory"])
        n_feat = len(inv.features)

        def _read(dtype: str, count: int, what: str) -> np.ndarray:
            nbytes = count * np.dtype(dtype).itemsize
            buf = fh.read(nbytes)
            if len(buf) < nbytes:
                raise DataError(f"{source}: truncated {what}")
            return np.frombuffer(buf, dtype=dtype)

        vectors = _read("<f4", n * dim, "vectors").reshape(n, dim).copy()
        labels = _read("<i2", n * n_feat, "labels").reshape(n, n_feat).copy()
        utt_index = _read("<u4", n, "utt_index").copy()
        frame_index = _read("<u4", n, "frame_index").copy()
    return LabeledFrameSet(
        vectors=vectors,
        labels=labels,
        utterances=list(header["utterances"]),
        utt_index=utt_index,
        frame_index=frame_index,
        inventory=inv,
        counts={k: int(v) for k, v in header["counts"].items()},
    )
