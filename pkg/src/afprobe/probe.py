"""One-vs-rest linear probes: soft-margin hinge loss + L2, trained by SGD.

Per articulatory feature there is one binary classifier per class; prediction
is the argmax of the per-class confidence scores on standardized features.
Each binary problem minimizes

    (1/n) sum_i max(0, 1 - y_i (w.x_i + b)) + alpha ||w||^2

with learning rate eta_t = 1 / (alpha (t0 + t)) and t0 set from the usual
typical-weight heuristic eta_1 ~ (1/alpha)^(1/4). Every binary problem runs
sequentially on its own seeded RNG, so training is deterministic regardless
of how problems are scheduled across threads.
"""

from __future__ import annotations

import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .af import AfInventory, LabeledFrameSet
from .errors import DataError

_PROBE_MAGIC = b"AFPB"
_PROBE_VERSION = 1
_PROBE_HEADER = struct.Struct("<4sHHI")

MIN_EPOCHS = 5
TARGET_UPDATES = 1_000_000
STD_FLOOR = 1e-12


def _sgd_hinge_epoch(X, y, order, w, b, t, alpha, t0):
    n_dim = X.shape[1]
    for oi in range(order.shape[0]):
        i = order[oi]
        t += 1.0
        eta = 1.0 / (alpha * (t0 + t))
        score = b
        for j in range(n_dim):
            score += w[j] * X[i, j]
        decay = 1.0 - 2.0 * eta * alpha
        for j in range(n_dim):
            w[j] *= decay
        if y[i] * score < 1.0:
            step = eta * y[i]
            for j in range(n_dim):
                w[j] += step * X[i, j]
            b += step
    return b, t


try:
    from numba import njit

    _sgd_hinge_epoch = njit(cache=True, nogil=True)(_sgd_hinge_epoch)
except ImportError:  # pragma: no cover - numba is a declared dependency
    pass


@dataclass(frozen=True)
class ProbeConfig:
    alpha: float = 1e-4
    epochs: int = 0  # 0 = auto: max(5, ceil(1e6 / n_samples))
    seed: int = 17
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise DataError("alpha must be > 0")
        if self.epochs < 0:
            raise DataError("epochs must be >= 0")

    def effective_epochs(self, n_samples: int) -> int:
        if self.epochs > 0:
            return self.epochs
        return max(MIN_EPOCHS, math.ceil(TARGET_UPDATES / max(n_samples, 1)))


@dataclass
class Standardizer:
    """Per-dimension z-scoring fit on training data only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0, dtype=np.float64)
        std = X.std(axis=0, dtype=np.float64)
        std = np.where(std < STD_FLOOR, 1.0, std)
        return cls(mean, std)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


@dataclass
class OvrBlock:
    """One feature's one-vs-rest classifiers: class-ordered weights and biases."""

    feature: str
    classes: tuple[str, ...]
    weights: np.ndarray  # n_classes x dim
    biases: np.ndarray  # n_classes
    untrained: tuple[bool, ...]  # classes absent from training data
    trainable: bool  # False when <2 distinct classes were present


@dataclass
class LinearProbe:
    inventory: AfInventory
    standardizer: Standardizer
    blocks: list[OvrBlock]
    config: ProbeConfig

    @property
    def dim(self) -> int:
        return self.blocks[0].weights.shape[1]


def _problem_seed(seed: int, af_idx: int, class_idx: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, af_idx, class_idx])))


def _fit_binary(
    X: np.ndarray, y: np.ndarray, cfg: ProbeConfig, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    n = X.shape[0]
    epochs = cfg.effective_epochs(n)
    alpha = cfg.alpha
    typw = math.sqrt(1.0 / math.sqrt(alpha))
    t0 = 1.0 / (typw * alpha)
    w = np.zeros(X.shape[1], dtype=np.float64)
    b, t = 0.0, 0.0
    base = np.arange(n, dtype=np.int64)
    for _ in range(epochs):
        order = rng.permutation(n).astype(np.int64) if cfg.shuffle else base
        b, t = _sgd_hinge_epoch(X, y, order, w, b, t, alpha, t0)
    return w, b


def fit_probe(
    train: LabeledFrameSet,
    inventory: AfInventory | None = None,
    cfg: ProbeConfig = ProbeConfig(),
    threads: int = 1,
) -> LinearProbe:
    """Train the 7 one-vs-rest blocks on a labeled frame set.

    Classes absent from the training data keep zero weights and are recorded
    as untrained; a feature with fewer than two distinct classes present is
    recorded as untrainable rather than raising.
    """
    if len(train) == 0:
        raise DataError("training set is empty")
    inventory = inventory or train.inventory
    standardizer = Standardizer.fit(train.vectors.astype(np.float64))
    X = np.ascontiguousarray(standardizer.apply(train.vectors))

    jobs = []
    blocks: list[OvrBlock] = []
    for af_idx, feature in enumerate(inventory.features):
        classes = inventory.classes[feature]
        labels = train.labels[:, af_idx]
        present = np.unique(labels)
        trainable = len(present) >= 2
        weights = np.zeros((len(classes), X.shape[1]), dtype=np.float64)
        biases = np.zeros(len(classes), dtype=np.float64)
        untrained = []
        for class_idx in range(len(classes)):
            absent = class_idx not in present
            untrained.append(absent or not trainable)
            if trainable and not absent:
                y = np.where(labels == class_idx, 1.0, -1.0)
                jobs.append((af_idx, class_idx, np.ascontiguousarray(y)))
        blocks.append(
            OvrBlock(feature, classes, weights, biases, tuple(untrained), trainable)
        )

    def run(job):
        af_idx, class_idx, y = job
        rng = _problem_seed(cfg.seed, af_idx, class_idx)
        return af_idx, class_idx, _fit_binary(X, y, cfg, rng)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    for af_idx, class_idx, (w, b) in results:
        blocks[af_idx].weights[class_idx] = w
        blocks[af_idx].biases[class_idx] = b
    return LinearProbe(inventory, standardizer, blocks, cfg)


def predict_scores(probe: LinearProbe, frames: np.ndarray) -> list[np.ndarray]:
    """Per-feature confidence score matrices (n x n_classes) on standardized input."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise DataError(f"frames must be 2-D, got shape {frames.shape}")
    if frames.shape[1] != probe.dim:
        raise DataError(f"feature dim {frames.shape[1]} != probe dim {probe.dim}")
    x_hat = probe.standardizer.apply(frames)
    return [x_hat @ blk.weights.T + blk.biases for blk in probe.blocks]


def predict(probe: LinearProbe, frames: np.ndarray) -> np.ndarray:
    """Predicted class indices (n x 7); score ties go to the lowest class index."""
    scores = predict_scores(probe, frames)
    return np.stack([s.argmax(axis=1) for s in scores], axis=1).astype(np.int16)


def subsample_per_utterance(ls: LabeledFrameSet, cap: int, seed: int) -> LabeledFrameSet:
    """Keep at most ``cap`` frames per utterance (seeded, sorted row order)."""
    if cap <= 0:
        return ls
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5D5])))
    keep: list[np.ndarray] = []
    for u in range(len(ls.utterances)):
        rows = np.flatnonzero(ls.utt_index == u)
        if len(rows) > cap:
            rows = np.sort(rng.choice(rows, size=cap, replace=False))
        keep.append(rows)
    rows = np.concatenate(keep) if keep else np.arange(0)
    counts = dict(ls.counts)
    counts["kept"] = int(len(rows))
    counts["subsampled_away"] = len(ls) - int(len(rows))
    return LabeledFrameSet(
        vectors=ls.vectors[rows],
        labels=ls.labels[rows],
        utterances=list(ls.utterances),
        utt_index=ls.utt_index[rows],
        frame_index=ls.frame_index[rows],
        inventory=ls.inventory,
        counts=counts,
    )


def write_probe(probe: LinearProbe, destination: str | Path) -> None:
    """Versioned little-endian container: JSON header, then float64 arrays."""
    header = {
        "schema": "afprobe-probe/1",
        "dim": probe.dim,
        "inventory": probe.inventory.to_jsonable(),
        "config": {
            "alpha": probe.config.alpha,
            "epochs": probe.config.epochs,
            "seed": probe.config.seed,
            "shuffle": probe.config.shuffle,
        },
        "blocks": [
            {
                "feature": blk.feature,
                "classes": list(blk.classes),
                "untrained": list(blk.untrained),
                "trainable": blk.trainable,
            }
            for blk in probe.blocks
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(destination, "wb") as fh:
        fh.write(_PROBE_HEADER.pack(_PROBE_MAGIC, _PROBE_VERSION, 0, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(probe.standardizer.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(probe.standardizer.std, dtype="<f8").tobytes())
        for blk in probe.blocks:
            fh.write(np.ascontiguousarray(blk.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(blk.biases, dtype="<f8").tobytes())


def read_probe(source: str | Path) -> LinearProbe:
    with open(source, "rb") as fh:
        raw = fh.read(_PROBE_HEADER.size)
        if len(raw) < _PROBE_HEADER.size:
            raise DataError(f"{source}: truncated header")
        magic, version, _reserved, blob_len = _PROBE_HEADER.unpack(raw)
        if magic != _PROBE_MAGIC:
            raise DataError(f"{source}: bad magic {magic!r}")
        if version != _PROBE_VERSION:
            raise DataError(f"{source}: unsupported version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        dim = header["dim"]
        inv = AfInventory.from_jsonable(header["inventory"])

        def _read(count: int, what: str) -> np.ndarray:
            buf = fh.read(count * 8)
            if len(buf) < count * 8:
                raise DataError(f"{source}: truncated {what}")
            return np.frombuffer(buf, dtype="<f8").copy()

        standardizer = Standardizer(_read(dim, "mean"), _read(dim, "std"))
        blocks = []
        for spec in header["blocks"]:
            n_classes = len(spec["classes"])
            weights = _read(n_classes * dim, "weights").reshape(n_classes, dim)
            biases = _read(n_classes, "biases")
            blocks.append(
                OvrBlock(
                    spec["feature"],
                    tuple(spec["classes"]),
                    weights,
                    biases,
                    tuple(bool(u) for u in spec["untrained"]),
                    bool(spec["trainable"]),
                )
            )
    cfg = ProbeConfig(**header["config"])
    return LinearProbe(inv, standardizer, blocks, cfg)
