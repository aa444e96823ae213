"""Scoring: per-AF macro-averaged F1, phone error rate, and Pearson correlation.

Conventions fixed here:
  * F1 uses the 0/0 -> 0 rule for precision, recall, and F1 itself; the macro
    average is the unweighted mean over the supplied class set.
  * The report's Avg is the mean of the 7 per-AF macro-F1 values and Std is
    the sample standard deviation (ddof=1), which is what the published
    reference tables recompute to.
  * PER pools substitution/deletion/insertion counts over utterances before
    dividing by the total reference length. Edit-distance backtraces break
    ties preferring match > substitution > deletion > insertion; the
    preference affects the breakdown only, never the total.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .af import AfInventory, LabeledFrameSet
from .errors import DataError
from .probe import LinearProbe, predict

PROBE_REPORT_SCHEMA = "afprobe-probe-report/1"
PER_REPORT_SCHEMA = "afprobe-per-report/1"
SYSTEM_SCHEMA = "afprobe-system/1"
CORRELATION_SCHEMA = "afprobe-correlation/1"

_MATCH, _SUB, _DEL, _INS = 0, 1, 2, 3


def _edit_counts_kernel(ref, hyp):
    n, m = ref.shape[0], hyp.shape[0]
    dp = np.empty((n + 1, m + 1), dtype=np.int64)
    for i in range(n + 1):
        dp[i, 0] = i
    for j in range(m + 1):
        dp[0, j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            best = dp[i - 1, j - 1] + cost
            if dp[i - 1, j] + 1 < best:
                best = dp[i - 1, j] + 1
            if dp[i, j - 1] + 1 < best:
                best = dp[i, j - 1] + 1
            dp[i, j] = best
    # backtrace, tie preference: match > substitution > deletion > insertion
    subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dp[i, j] == dp[i - 1, j - 1]:
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and dp[i, j] == dp[i - 1, j - 1] + 1:
            subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return dp[n, m], subs, dels, ins


try:
    from numba import njit

    _edit_counts_kernel = njit(cache=True, nogil=True)(_edit_counts_kernel)
except ImportError:  # pragma: no cover - numba is a declared dependency
    pass


def edit_counts(ref: Sequence, hyp: Sequence) -> tuple[int, int, int, int]:
    """Minimal unit-cost edit distance and its (S, D, I) breakdown."""
    vocab: dict = {}
    enc_r = np.array([vocab.setdefault(p, len(vocab)) for p in ref], dtype=np.int64)
    enc_h = np.array([vocab.setdefault(p, len(vocab)) for p in hyp], dtype=np.int64)
    dist, s, d, i = _edit_counts_kernel(enc_r, enc_h)
    return int(dist), int(s), int(d), int(i)


@dataclass
class UtterancePer:
    utterance_id: str
    n_ref: int
    substitutions: int
    deletions: int
    insertions: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass
class PerReport:
    per: float
    n_ref: int
    substitutions: int
    deletions: int
    insertions: int
    utterances: list[UtterancePer] = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "schema": PER_REPORT_SCHEMA,
            "per": self.per,
            "n_ref": self.n_ref,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "utterances": [
                {
                    "utterance_id": u.utterance_id,
                    "n_ref": u.n_ref,
                    "substitutions": u.substitutions,
                    "deletions": u.deletions,
                    "insertions": u.insertions,
                }
                for u in self.utterances
            ],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "PerReport":
        if obj.get("schema") != PER_REPORT_SCHEMA:
            raise DataError(f"not a PER report: schema {obj.get('schema')!r}")
        report = cls(
            per=float(obj["per"]),
            n_ref=int(obj["n_ref"]),
            substitutions=int(obj["substitutions"]),
            deletions=int(obj["deletions"]),
            insertions=int(obj["insertions"]),
            utterances=[
                UtterancePer(
                    u["utterance_id"],
                    int(u["n_ref"]),
                    int(u["substitutions"]),
                    int(u["deletions"]),
                    int(u["insertions"]),
                )
                for u in obj.get("utterances", [])
            ],
        )
        total = report.substitutions + report.deletions + report.insertions
        if report.n_ref > 0 and abs(report.per - total / report.n_ref) > 1e-9:
            raise DataError("PER report is inconsistent: per != (S+D+I)/n_ref")
        return report


def per(ref: Sequence[str], hyp: Sequence[str], utterance_id: str = "") -> PerReport:
    """Single-utterance phone error rate (may exceed 1)."""
    if len(ref) == 0:
        raise DataError(f"empty reference for {utterance_id!r}")
    _, s, d, i = edit_counts(list(ref), list(hyp))
    detail = UtterancePer(utterance_id, len(ref), s, d, i)
    return PerReport(
        per=detail.errors / len(ref),
        n_ref=len(ref),
        substitutions=s,
        deletions=d,
        insertions=i,
        utterances=[detail],
    )


def per_corpus(
    refs: Mapping[str, Sequence[str]], hyps: Mapping[str, Sequence[str]]
) -> PerReport:
    """Corpus PER: pooled edit counts over utterances, divided once.

    The utterance sets must match exactly; the detail list is sorted by
    utterance_id so parallel evaluation reduces deterministically.
    """
    missing = sorted(set(refs) - set(hyps))
    extra = sorted(set(hyps) - set(refs))
    if missing:
        raise DataError(f"hypotheses missing for utterances: {missing}")
    if extra:
        raise DataError(f"hypotheses for unknown utterances: {extra}")
    n_ref = sum(len(r) for r in refs.values())
    if n_ref == 0:
        raise DataError("corpus reference is empty")
    details = []
    for uid in sorted(refs):
        _, s, d, i = edit_counts(list(refs[uid]), list(hyps[uid]))
        details.append(UtterancePer(uid, len(refs[uid]), s, d, i))
    s = sum(u.substitutions for u in details)
    d = sum(u.deletions for u in details)
    i = sum(u.insertions for u in details)
    return PerReport((s + d + i) / n_ref, n_ref, s, d, i, details)


def read_trn(source: str | Path) -> dict[str, list[str]]:
    """Parse "utterance_id<TAB>space-separated phones" transcript lines."""
    out: dict[str, list[str]] = {}
    path = Path(source)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            if "\t" not in text:
                raise DataError(f"{path}: line {lineno}: expected utterance_id<TAB>phones")
            uid, phones = text.split("\t", 1)
            if uid in out:
                raise DataError(f"{path}: line {lineno}: duplicate utterance {uid!r}")
            out[uid] = phones.split()
    if not out:
        raise DataError(f"{path}: no transcripts")
    return out


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def macro_f1(true_labels: Sequence, predicted_labels: Sequence, class_set: Sequence) -> float:
    """Unweighted mean of per-class F1 over ``class_set`` (0/0 counts as 0)."""
    if len(true_labels) != len(predicted_labels):
        raise DataError(
            f"label sequences differ in length: {len(true_labels)} != {len(predicted_labels)}"
        )
    classes = list(class_set)
    if len(set(classes)) != len(classes):
        raise DataError("class_set contains duplicates")
    allowed = set(classes)
    for seq, which in ((true_labels, "true"), (predicted_labels, "predicted")):
        bad = {x for x in seq if x not in allowed}
        if bad:
            raise DataError(f"{which} labels outside class_set: {sorted(map(str, bad))}")
    total = 0.0
    for c in classes:
        tp = sum(1 for t, p in zip(true_labels, predicted_labels) if t == c and p == c)
        fp = sum(1 for t, p in zip(true_labels, predicted_labels) if t != c and p == c)
        fn = sum(1 for t, p in zip(true_labels, predicted_labels) if t == c and p != c)
        total += _prf(tp, fp, fn)[2]
    return total / len(classes)


@dataclass
class PerAfScore:
    macro_f1: float
    class_set: list[str]
    per_class: dict[str, dict[str, float]]  # precision / recall / f1 / support


@dataclass
class ProbeReport:
    name: str
    per_af: dict[str, PerAfScore]
    averaged: float
    std: float
    n_frames: int | None = None
    config: dict = field(default_factory=dict)

    def af_scores(self, features: Sequence[str] | None = None) -> list[float]:
        feats = list(features) if features is not None else list(self.per_af)
        return [self.per_af[f].macro_f1 for f in feats]

    def to_jsonable(self) -> dict:
        return {
            "schema": PROBE_REPORT_SCHEMA,
            "name": self.name,
            "per_af": {
                f: {
                    "macro_f1": s.macro_f1,
                    "class_set": s.class_set,
                    "per_class": s.per_class,
                }
                for f, s in self.per_af.items()
            },
            "averaged": self.averaged,
            "std": self.std,
            "n_frames": self.n_frames,
            "config": self.config,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "ProbeReport":
        if obj.get("schema") != PROBE_REPORT_SCHEMA:
            raise DataError(f"not a probe report: schema {obj.get('schema')!r}")
        per_af = {
            f: PerAfScore(
                float(s["macro_f1"]),
                list(s.get("class_set", [])),
                {k: dict(v) for k, v in s.get("per_class", {}).items()},
            )
            for f, s in obj["per_af"].items()
        }
        return cls(
            name=obj.get("name", ""),
            per_af=per_af,
            averaged=float(obj["averaged"]),
            std=float(obj["std"]),
            n_frames=obj.get("n_frames"),
            config=obj.get("config", {}),
        )


def summarize_af_scores(scores: Sequence[float]) -> tuple[float, float]:
    """Avg and sample std of the per-AF macro-F1 values."""
    arr = np.asarray(scores, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1))


def probe_report(
    probe: LinearProbe,
    test: LabeledFrameSet,
    inventory: AfInventory | None = None,
    name: str = "",
) -> ProbeReport:
    """Evaluate a probe: per-AF macro-F1 over the classes observed in the test
    truth or the predictions, plus the Avg / Std summary rows."""
    if len(test) == 0:
        raise DataError("test set is empty")
    inventory = inventory or probe.inventory
    predictions = predict(probe, test.vectors)
    per_af: dict[str, PerAfScore] = {}
    for af_idx, feature in enumerate(inventory.features):
        classes = inventory.classes[feature]
        true_idx = test.labels[:, af_idx]
        pred_idx = predictions[:, af_idx]
        observed = [c for c in range(len(classes)) if np.any(true_idx == c) or np.any(pred_idx == c)]
        per_class = {}
        f1_sum = 0.0
        for c in observed:
            tp = int(np.sum((true_idx == c) & (pred_idx == c)))
            fp = int(np.sum((true_idx != c) & (pred_idx == c)))
            fn = int(np.sum((true_idx == c) & (pred_idx != c)))
            precision, recall, f1 = _prf(tp, fp, fn)
            per_class[classes[c]] = {
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "support": int(tp + fn),
            }
            f1_sum += f1
        per_af[feature] = PerAfScore(
            macro_f1=f1_sum / len(observed) if observed else 0.0,
            class_set=[classes[c] for c in observed],
            per_class=per_class,
        )
    averaged, std = summarize_af_scores([per_af[f].macro_f1 for f in inventory.features])
    return ProbeReport(
        name=name,
        per_af=per_af,
        averaged=averaged,
        std=std,
        n_frames=len(test),
        config={
            "alpha": probe.config.alpha,
            "epochs": probe.config.epochs,
            "seed": probe.config.seed,
            "shuffle": probe.config.shuffle,
            "counts": dict(test.counts),
        },
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation; errors on constant or too-short input."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1 or len(xa) != len(ya):
        raise DataError("pearson requires two equal-length 1-D sequences")
    if len(xa) < 2:
        raise DataError("pearson requires at least 2 points")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise DataError("correlation undefined for a constant sequence")
    return float(np.dot(dx, dy) / (sx * sy))


@dataclass
class CorrelationSummary:
    names: list[str]
    f1_averaged: list[float]
    per: list[float]
    r: float

    @property
    def abs_r(self) -> float:
        return abs(self.r)

    def to_jsonable(self) -> dict:
        return {
            "schema": CORRELATION_SCHEMA,
            "systems": self.names,
            "f1_averaged": self.f1_averaged,
            "per": self.per,
            "r": self.r,
            "abs_r": self.abs_r,
        }

    def write_csv(self, destination: str | Path) -> None:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "f1_averaged", "per"])
            for name, f1, p in zip(self.names, self.f1_averaged, self.per):
                writer.writerow([name, f1, p])
            writer.writerow(["r", self.r, ""])
            writer.writerow(["abs_r", self.abs_r, ""])


def correlate_report(
    systems: Sequence[tuple[str, ProbeReport, PerReport]]
) -> CorrelationSummary:
    """Correlate averaged probe F1 with PER across >= 3 systems."""
    if len(systems) < 3:
        raise DataError(f"correlation needs at least 3 systems, got {len(systems)}")
    names = [name for name, _, _ in systems]
    f1s = [pr.averaged for _, pr, _ in systems]
    pers = [perr.per for _, _, perr in systems]
    return CorrelationSummary(names, f1s, pers, pearson(f1s, pers))


def load_system(path: str | Path) -> tuple[str, ProbeReport, PerReport]:
    """Load one {name, probe_report, per_report} system JSON for correlation."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("schema") != SYSTEM_SCHEMA:
        raise DataError(f"{path}: not a system file: schema {obj.get('schema')!r}")
    return (
        obj["name"],
        ProbeReport.from_jsonable(obj["probe_report"]),
        PerReport.from_jsonable(obj["per_report"]),
    )


def write_json(obj: dict, destination: str | Path) -> None:
    """Deterministic JSON writer used for every report (no timestamps)."""
    with open(destination, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")
