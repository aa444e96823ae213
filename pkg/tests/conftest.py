"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from afprobe.af import AfInventory, LabeledFrameSet
from afprobe.mfcc import write_wav


def make_af_set(
    n: int,
    seed: int,
    margin: float = 5.0,
    inventory: AfInventory | None = None,
) -> LabeledFrameSet:
    """Linearly separable synthetic frames: one coordinate block per feature,
    class identity encoded as a +margin bump on the class's coordinate,
    unit-variance Gaussian noise everywhere."""
    inv = inventory or AfInventory()
    rng = np.random.default_rng(seed)
    sizes = [len(inv.classes[f]) for f in inv.features]
    offsets = np.cumsum([0] + sizes)
    dim = int(offsets[-1])
    labels = np.stack(
        [rng.integers(0, s, size=n) for s in sizes], axis=1
    ).astype(np.int16)
    X = rng.standard_normal((n, dim))
    for j in range(len(inv.features)):
        X[np.arange(n), offsets[j] + labels[:, j]] += margin
    return LabeledFrameSet(
        vectors=X.astype(np.float32),
        labels=labels,
        utterances=["synthetic"],
        utt_index=np.zeros(n, dtype=np.uint32),
        frame_index=np.arange(n, dtype=np.uint32),
        inventory=inv,
        counts={"kept": n, "dropped": 0, "out_of_segment": 0},
    )


# phones with distinct spectral signatures for end-to-end pipeline tests
CORPUS_PHONES = {
    "aa": 300.0,
    "iy": 2200.0,
    "m": 120.0,
    "s": 5200.0,
    "t": 900.0,
}


def build_corpus(root: Path, n_utts: int = 20, seed: int = 100, utt_seconds: float = 1.0):
    """Write a synthetic WAV + alignment corpus and return its layout.

    Each utterance is silence / three phones / silence, every phone a sine at
    its signature frequency plus a little seeded noise.
    """
    fs = 16000
    rng = np.random.default_rng(seed)
    wav_dir = root / "wav"
    ali_dir = root / "ali"
    wav_dir.mkdir(parents=True, exist_ok=True)
    ali_dir.mkdir(parents=True, exist_ok=True)
    phones = sorted(CORPUS_PHONES)
    utts = []
    total = int(utt_seconds * fs)
    sil = total // 10
    seg_len = (total - 2 * sil) // 3
    for i in range(n_utts):
        uid = f"utt{i:02d}"
        chosen = [phones[int(k)] for k in rng.integers(0, len(phones), size=3)]
        bounds = [
            (0, sil, "sil"),
            (sil, sil + seg_len, chosen[0]),
            (sil + seg_len, sil + 2 * seg_len, chosen[1]),
            (sil + 2 * seg_len, sil + 3 * seg_len, chosen[2]),
            (sil + 3 * seg_len, total, "sil"),
        ]
        samples = np.zeros(total)
        t = np.arange(total) / fs
        for start, end, phone in bounds:
            if phone == "sil":
                continue
            f0 = CORPUS_PHONES[phone]
            samples[start:end] = 0.4 * np.sin(2 * np.pi * f0 * t[start:end])
        samples += 0.01 * rng.standard_normal(total)
        write_wav(wav_dir / f"{uid}.wav", samples, fs)
        with open(ali_dir / f"{uid}.phn", "w", encoding="utf-8") as fh:
            for start, end, phone in bounds:
                fh.write(f"{start} {end} {phone}\n")
        utts.append(uid)
    return wav_dir, ali_dir, utts


def write_corpus_manifest(root: Path, feat_dir: Path, ali_dir: Path, utts, split_at: int) -> Path:
    manifest = root / "manifest.tsv"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i, uid in enumerate(utts):
            split = "train" if i < split_at else "test"
            fh.write(f"{uid}\t{feat_dir / (uid + '.afpr')}\t{ali_dir / (uid + '.phn')}\t{split}\n")
    return manifest


@pytest.fixture(scope="session")
def af_train_test():
    return make_af_set(3750, seed=11), make_af_set(1250, seed=22)
