"""Self-supervised training objectives as pure, gradient-checked functions.

Implements, over caller-supplied representation tensors:
  * the contrastive predictive loss over K prediction horizons (dot-product
    scores against a candidate set per (t, k) pair),
  * a hard nearest-neighbor product quantizer,
  * the masked contrastive loss with cosine similarity and temperature plus
    the entropy-based codebook diversity term,
  * the masked/unmasked mixture of the same contrastive form against a
    pseudo-label embedding table,
  * the exact blank-augmented forward score of a label sequence, and the
    convex combination with an externally supplied attention log-probability.

Candidate sets are index sets supplied by the caller; nothing is sampled
internally, so every function is deterministic and side-effect free.
All losses return analytic gradients with respect to their real inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError

NEG_INF = float("-inf")


def _logsumexp(v: np.ndarray) -> float:
    m = float(np.max(v))
    if m == NEG_INF:
        return NEG_INF
    return m + float(np.log(np.sum(np.exp(v - m))))


def _require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite values")
    return a


# ---------------------------------------------------------------------------
# contrastive predictive loss
# ---------------------------------------------------------------------------


@dataclass
class CpcBatch:
    """Latents z (T x d), context c (T x d_c), per-horizon projections
    W (K x d x d_c), and per (t, k) candidate index sets into the rows of z.

    Keys of ``negatives`` are (t, k) with k in 1..K; each index set must
    contain the positive index t + k.
    """

    z: np.ndarray
    c: np.ndarray
    W: np.ndarray
    negatives: Mapping[tuple[int, int], np.ndarray]

    def __post_init__(self) -> None:
        self.z = _require_finite("z", self.z)
        self.c = _require_finite("c", self.c)
        self.W = _require_finite("W", self.W)
        if self.z.ndim != 2 or self.c.ndim != 2 or self.W.ndim != 3:
            raise DataError("expected z (T,d), c (T,d_c), W (K,d,d_c)")
        T, d = self.z.shape
        if self.c.shape[0] != T:
            raise DataError("z and c must cover the same time steps")
        if self.W.shape[1] != d or self.W.shape[2] != self.c.shape[1]:
            raise DataError("W dimensions must match z and c")
        K = self.W.shape[0]
        if not self.negatives:
            raise DataError("at least one (t, k) candidate set is required")
        cleaned: dict[tuple[int, int], np.ndarray] = {}
        for (t, k), idx in self.negatives.items():
            if not (1 <= k <= K):
                raise DataError(f"horizon k={k} outside 1..{K}")
            if not (0 <= t and t + k < T):
                raise DataError(f"pair (t={t}, k={k}) has no future step within T={T}")
            arr = np.asarray(idx, dtype=np.int64)
            if arr.size == 0:
                raise DataError(f"empty candidate set for (t={t}, k={k})")
            if arr.min() < 0 or arr.max() >= T:
                raise DataError(f"candidate index out of range for (t={t}, k={k})")
            if t + k not in arr:
                raise DataError(f"positive index {t + k} missing from candidates of (t={t}, k={k})")
            cleaned[(t, k)] = arr
        self.negatives = cleaned

    @property
    def horizons(self) -> int:
        return self.W.shape[0]


@dataclass
class CpcLossResult:
    loss: float
    grad_z: np.ndarray
    grad_c: np.ndarray
    grad_w: np.ndarray


def cpc_loss(batch: CpcBatch) -> CpcLossResult:
    """Mean over horizons of the per-step softmax loss on dot-product scores."""
    K = batch.horizons
    by_k: dict[int, list[int]] = {}
    for (t, k) in batch.negatives:
        by_k.setdefault(k, []).append(t)
    for k in range(1, K + 1):
        if k not in by_k:
            raise DataError(f"no (t, k) pairs supplied for horizon k={k}")

    grad_z = np.zeros_like(batch.z)
    grad_c = np.zeros_like(batch.c)
    grad_w = np.zeros_like(batch.W)
    loss = 0.0
    for k, ts in by_k.items():
        Wk = batch.W[k - 1]
        coeff = 1.0 / (K * len(ts))
        for t in sorted(ts):
            idx = batch.negatives[(t, k)]
            v = Wk @ batch.c[t]  # (d,)
            scores = batch.z[idx] @ v
            lse = _logsumexp(scores)
            pos_row = int(np.nonzero(idx == t + k)[0][0])
            loss += coeff * (lse - scores[pos_row])
            p = np.exp(scores - lse)
            g_scores = p.copy()
            g_scores[pos_row] -= 1.0
            g_scores *= coeff
            # scores_j = z_j . (Wk c_t)
            np.add.at(grad_z, idx, np.outer(g_scores, v))
            g_v = g_scores @ batch.z[idx]
            grad_w[k - 1] += np.outer(g_v, batch.c[t])
            grad_c[t] += Wk.T @ g_v
    return CpcLossResult(loss, grad_z, grad_c, grad_w)


# ---------------------------------------------------------------------------
# product quantizer
# ---------------------------------------------------------------------------


@dataclass
class QuantizerConfig:
    """G codebooks of V entries each, over d/G-dimensional sub-vectors."""

    codebooks: np.ndarray  # (G, V, d/G)

    def __post_init__(self) -> None:
        self.codebooks = _require_finite("codebooks", self.codebooks)
        if self.codebooks.ndim != 3:
            raise DataError("codebooks must have shape (G, V, sub_dim)")

    @property
    def groups(self) -> int:
        return self.codebooks.shape[0]

    @property
    def entries(self) -> int:
        return self.codebooks.shape[1]

    @property
    def dim(self) -> int:
        return self.codebooks.shape[0] * self.codebooks.shape[2]


def product_quantize(z: np.ndarray, q: QuantizerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Replace each sub-vector of z by its nearest codebook entry (Euclidean,
    ties to the lowest index); returns the concatenation and the G indices."""
    z = _require_finite("z", z)
    if z.ndim != 1 or z.shape[0] != q.dim:
        raise DataError(f"z must be 1-D of dim {q.dim}, got shape {z.shape}")
    sub = z.reshape(q.groups, -1)
    indices = np.empty(q.groups, dtype=np.int64)
    out = np.empty_like(sub)
    for g in range(q.groups):
        dist = np.sum((q.codebooks[g] - sub[g]) ** 2, axis=1)
        indices[g] = int(np.argmin(dist))  # argmin takes the lowest index on ties
        out[g] = q.codebooks[g, indices[g]]
    return out.reshape(-1), indices


# ---------------------------------------------------------------------------
# masked contrastive losses
# ---------------------------------------------------------------------------


@dataclass
class MaskedBatch:
    """Context vectors, a candidate pool, and per-step candidate index sets.

    ``candidates`` is the pool the targets live in: quantized vectors for the
    masked contrastive loss, the pseudo-label embedding table for the
    masked/unmasked mixture. ``target_index[t]`` names the true pool row of
    step t and must be a member of ``candidate_sets[t]``. ``alpha`` is the
    mixing weight (diversity weight in one loss, masked/unmasked mix in the
    other). ``codebook_usage`` holds the averaged G x V usage probabilities
    feeding the diversity term, when that term applies.
    """

    c: np.ndarray
    candidates: np.ndarray
    target_index: np.ndarray
    candidate_sets: Mapping[int, np.ndarray]
    mask: np.ndarray
    kappa: float = 0.1
    alpha: float = 0.0
    codebook_usage: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.c = _require_finite("c", self.c)
        self.candidates = _require_finite("candidates", self.candidates)
        if self.c.ndim != 2 or self.candidates.ndim != 2:
            raise DataError("c and candidates must be 2-D")
        if self.c.shape[1] != self.candidates.shape[1]:
            raise DataError("c and candidates must share their vector dimension")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != (self.c.shape[0],):
            raise DataError("mask must be a boolean vector over the time steps")
        self.target_index = np.asarray(self.target_index, dtype=np.int64)
        if self.target_index.shape != (self.c.shape[0],):
            raise DataError("target_index must give one pool row per time step")
        if self.kappa <= 0:
            raise DataError("temperature kappa must be > 0")
        if self.codebook_usage is not None:
            usage = np.asarray(self.codebook_usage, dtype=np.float64)
            if usage.ndim != 2:
                raise DataError("codebook_usage must have shape (G, V)")
            if np.any(usage < 0):
                raise DataError("codebook_usage must be nonnegative")
            if np.any(np.abs(usage.sum(axis=1) - 1.0) > 1e-3):
                raise DataError("codebook_usage rows must be probability vectors")
            self.codebook_usage = usage

    def steps(self, masked: bool) -> np.ndarray:
        return np.nonzero(self.mask if masked else ~self.mask)[0]

    def candidate_rows(self, t: int) -> np.ndarray:
        try:
            idx = np.asarray(self.candidate_sets[t], dtype=np.int64)
        except KeyError:
            raise DataError(f"no candidate set supplied for step {t}") from None
        if idx.size == 0:
            raise DataError(f"empty candidate set for step {t}")
        if idx.min() < 0 or idx.max() >= self.candidates.shape[0]:
            raise DataError(f"candidate index out of range at step {t}")
        pos = self.target_index[t]
        if pos < 0 or pos >= self.candidates.shape[0]:
            raise DataError(f"target_index out of range at step {t}")
        if pos not in idx:
            raise DataError(f"true target {pos} missing from candidates of step {t}")
        return idx


def _cosine_softmax_steps(
    batch: MaskedBatch, steps: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean over ``steps`` of -log softmax(sim/kappa) at the true candidate,
    with gradients w.r.t. c and the candidate pool."""
    if steps.size == 0:
        raise DataError("no time steps to score (empty mask or its complement)")
    grad_c = np.zeros_like(batch.c)
    grad_q = np.zeros_like(batch.candidates)
    kappa = batch.kappa
    coeff = 1.0 / steps.size
    loss = 0.0
    for t in steps:
        idx = batch.candidate_rows(int(t))
        ct = batch.c[t]
        nc = float(np.linalg.norm(ct))
        if nc == 0.0:
            raise DataError(f"zero-norm context vector at step {t}")
        Q = batch.candidates[idx]
        nq = np.linalg.norm(Q, axis=1)
        if np.any(nq == 0.0):
            raise DataError(f"zero-norm candidate vector in the set of step {t}")
        cos = (Q @ ct) / (nq * nc)
        scores = cos / kappa
        lse = _logsumexp(scores)
        pos_row = int(np.nonzero(idx == batch.target_index[t])[0][0])
        loss += coeff * (lse - scores[pos_row])
        p = np.exp(scores - lse)
        g = p.copy()
        g[pos_row] -= 1.0
        g *= coeff / kappa  # d loss / d cos_j
        # d cos_j / d c = q_j/(|c||q_j|) - cos_j c/|c|^2
        grad_c[t] += (g / nq) @ Q / nc - float(g @ cos) * ct / (nc * nc)
        # d cos_j / d q_j = c/(|c||q_j|) - cos_j q_j/|q_j|^2
        np.add.at(
            grad_q,
            idx,
            np.outer(g / (nq * nc), ct) - ((g * cos / nq**2)[:, None] * Q),
        )
    return loss, grad_c, grad_q


def diversity_loss(usage: np.ndarray) -> tuple[float, np.ndarray]:
    """sum_g (V - exp H(p_g)) / (G V) with H the natural-log entropy; returns
    the value and its gradient w.r.t. the usage matrix."""
    G, V = usage.shape
    grad = np.zeros_like(usage)
    total = 0.0
    for g in range(G):
        p = usage[g]
        nz = p > 0
        H = -float(np.sum(p[nz] * np.log(p[nz])))
        expH = math.exp(H)
        total += (V - expH) / (G * V)
        grad[g, nz] = expH * (np.log(p[nz]) + 1.0) / (G * V)
    return total, grad


@dataclass
class W2v2LossResult:
    loss: float
    l_m: float
    l_d: float
    grad_c: np.ndarray
    grad_candidates: np.ndarray
    grad_usage: np.ndarray


def w2v2_loss(batch: MaskedBatch) -> W2v2LossResult:
    """Masked contrastive loss plus alpha times the codebook diversity loss."""
    if batch.codebook_usage is None:
        raise DataError("codebook_usage is required for the diversity term")
    masked = batch.steps(masked=True)
    if masked.size == 0:
        raise DataError("mask selects no steps")
    l_m, grad_c, grad_q = _cosine_softmax_steps(batch, masked)
    l_d, grad_usage = diversity_loss(batch.codebook_usage)
    return W2v2LossResult(
        loss=l_m + batch.alpha * l_d,
        l_m=l_m,
        l_d=l_d,
        grad_c=grad_c,
        grad_candidates=grad_q,
        grad_usage=batch.alpha * grad_usage,
    )


@dataclass
class HubertLossResult:
    loss: float
    l_m: float
    l_u: float
    grad_c: np.ndarray
    grad_candidates: np.ndarray


def hubert_loss(batch: MaskedBatch) -> HubertLossResult:
    """alpha * masked + (1 - alpha) * unmasked contrastive loss against the
    pseudo-label embedding table held in the candidate pool."""
    if not (0.0 <= batch.alpha <= 1.0):
        raise DataError(f"alpha must be in [0, 1], got {batch.alpha}")
    alpha = batch.alpha
    grad_c = np.zeros_like(batch.c)
    grad_q = np.zeros_like(batch.candidates)
    l_m = l_u = 0.0
    if alpha > 0.0:
        l_m, gc, gq = _cosine_softmax_steps(batch, batch.steps(masked=True))
        grad_c += alpha * gc
        grad_q += alpha * gq
    if alpha < 1.0:
        l_u, gc, gq = _cosine_softmax_steps(batch, batch.steps(masked=False))
        grad_c += (1.0 - alpha) * gc
        grad_q += (1.0 - alpha) * gq
    return HubertLossResult(
        loss=alpha * l_m + (1.0 - alpha) * l_u,
        l_m=l_m,
        l_u=l_u,
        grad_c=grad_c,
        grad_candidates=grad_q,
    )


# ---------------------------------------------------------------------------
# CTC forward score and the joint objective
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CtcScore:
    log_prob: float
    feasible: bool

    def __float__(self) -> float:
        return self.log_prob


def ctc_min_frames(target: Sequence[int]) -> int:
    """Shortest frame count that can emit the target (repeats need a blank)."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def ctc_log_prob(log_probs: np.ndarray, target: Sequence[int]) -> CtcScore:
    """Exact log-probability of ``target`` summed over all blank-augmented
    alignments (forward recursion in log space). The blank is the last column.

    An infeasible target (too long for T frames) yields -inf with
    feasible=False rather than an error.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    if lp.ndim != 2 or lp.shape[1] < 2:
        raise DataError("log_probs must be T x (P+1) with at least one phone column")
    if np.any(np.isnan(lp)):
        raise DataError("log_probs contains NaN")
    row_sums = np.exp([_logsumexp(row) for row in lp])
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise DataError("rows of exp(log_probs) must sum to 1 within 1e-6")
    T, cols = lp.shape
    blank = cols - 1
    tgt = [int(x) for x in target]
    if any(x < 0 or x >= blank for x in tgt):
        raise DataError(f"target symbols must lie in 0..{blank - 1}")

    if ctc_min_frames(tgt) > T:
        return CtcScore(NEG_INF, False)

    L = len(tgt)
    ext = np.full(2 * L + 1, blank, dtype=np.int64)
    ext[1::2] = tgt
    S = len(ext)
    alpha = np.full(S, NEG_INF)
    alpha[0] = lp[0, ext[0]]
    if S > 1:
        alpha[1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha
        alpha = np.full(S, NEG_INF)
        for s in range(S):
            acc = prev[s]
            if s >= 1:
                acc = np.logaddexp(acc, prev[s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc = np.logaddexp(acc, prev[s - 2])
            if acc != NEG_INF:
                alpha[s] = acc + lp[t, ext[s]]
    total = alpha[S - 1] if S == 1 else np.logaddexp(alpha[S - 1], alpha[S - 2])
    return CtcScore(float(total), True)


def joint_objective(log_p_ctc: float, log_p_att: float, lam: float) -> float:
    """lambda-weighted convex combination of the two log-probabilities
    (an objective to maximize; callers negate for a loss)."""
    if not (0.0 <= lam <= 1.0):
        raise DataError(f"lambda must be in [0, 1], got {lam}")
    if lam == 0.0:
        return float(log_p_att)
    if lam == 1.0:
        return float(log_p_ctc)
    return lam * float(log_p_ctc) + (1.0 - lam) * float(log_p_att)
