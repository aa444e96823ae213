"""
End-to-end probing pipeline on a synthetic corpus
=================================================

Builds a tiny corpus of sine-based "phones" with TIMIT-style alignments,
then runs the full chain: MFCC features -> frame labeling through the
bundled phone-to-AF map -> one-vs-rest linear probes -> per-AF macro-F1
report. Everything is seeded, so two runs give byte-identical artifacts.
"""
import tempfile
from pathlib import Path

import numpy as np

from afprobe import (
    concat_labeled,
    default_af_map,
    fit_probe,
    label_frames,
    mfcc,
    probe_report,
    read_alignment,
    splice,
)
from afprobe.af import DEFAULT_DROP
from afprobe.mfcc import MfccConfig
from afprobe.probe import ProbeConfig

###############################################################################
# A corpus of three "phones" with distinct spectra
# ------------------------------------------------

fs = 16000
PHONE_HZ = {"aa": 300.0, "iy": 2200.0, "s": 5200.0}
rng = np.random.default_rng(42)


def synth_utterance(uid: str):
    phones = list(PHONE_HZ)
    rng.shuffle(phones)
    seg = 4800
    samples = np.zeros(3 * seg + 3200)
    lines = ["0 1600 sil"]
    t = np.arange(len(samples)) / fs
    for i, phone in enumerate(phones):
        start = 1600 + i * seg
        samples[start : start + seg] = 0.4 * np.sin(2 * np.pi * PHONE_HZ[phone] * t[start : start + seg])
        lines.append(f"{start} {start + seg} {phone}")
    lines.append(f"{1600 + 3 * seg} {len(samples)} sil")
    samples += 0.01 * rng.standard_normal(len(samples))
    return uid, samples, "\n".join(lines) + "\n"


###############################################################################
# Features, labels, probe
# -----------------------

af_map = default_af_map()
train_parts, test_parts = [], []
with tempfile.TemporaryDirectory() as tmp:
    for i in range(12):
        uid, samples, phn_text = synth_utterance(f"utt{i:02d}")
        phn = Path(tmp) / f"{uid}.phn"
        phn.write_text(phn_text)
        feats = splice(mfcc(samples, MfccConfig(), utterance_id=uid), 5)
        alignment = read_alignment(phn, fs, uid)
        labeled = label_frames(feats, alignment, af_map, DEFAULT_DROP)
        (train_parts if i < 9 else test_parts).append(labeled)

train = concat_labeled(train_parts)
test = concat_labeled(test_parts)
print(f"train {len(train)} frames, test {len(test)} frames, dim {train.dim}")
print(f"coverage: {train.counts}")

probe = fit_probe(train, cfg=ProbeConfig(seed=17, epochs=100))
report = probe_report(probe, test, name="synthetic-mfcc")

print(f"\n{'AF':<10} macro-F1")
for feature, score in report.per_af.items():
    print(f"{feature:<10} {score.macro_f1:.3f}")
print(f"{'Avg':<10} {report.averaged:.3f}")
print(f"{'Std':<10} {report.std:.3f}")
