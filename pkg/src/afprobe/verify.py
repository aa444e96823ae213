"""Independent oracles and the self-verification suite behind `afprobe loss-check`.

The oracles here deliberately avoid the production code paths they check:
gradients come from central finite differences, CTC scores from exhaustive
path enumeration, and edit distances from a separate vectorized recurrence
(plus a tiny plain-recursive version). Keeping them in the package lets the
CLI re-run the whole table on demand.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .objectives import (
    CpcBatch,
    MaskedBatch,
    QuantizerConfig,
    cpc_loss,
    ctc_log_prob,
    hubert_loss,
    product_quantize,
    w2v2_loss,
)

FD_STEP = 1e-5
REL_TOL = 1e-4
LN_N_TOL = 1e-12


def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


# ---------------------------------------------------------------------------
# randomized batch builders (seeded, used by both the CLI suite and the tests)
# ---------------------------------------------------------------------------


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def random_cpc_batch(seed: int, T: int = 8, d: int = 4, d_c: int = 3, K: int = 2, n_neg: int = 4) -> CpcBatch:
    rng = _rng(seed)
    z = rng.standard_normal((T, d))
    c = rng.standard_normal((T, d_c))
    W = rng.standard_normal((K, d, d_c))
    negatives = {}
    for k in range(1, K + 1):
        for t in range(T - k):
            others = [j for j in range(T) if j != t + k]
            chosen = rng.choice(others, size=min(n_neg, len(others)), replace=False)
            negatives[(t, k)] = np.sort(np.append(chosen, t + k))
    return CpcBatch(z, c, W, negatives)


def random_masked_batch(
    seed: int,
    T: int = 6,
    d: int = 5,
    pool: int = 7,
    n_cand: int = 4,
    kappa: float = 0.1,
    alpha: float = 0.5,
    with_usage: bool = True,
    G: int = 2,
    V: int = 3,
) -> MaskedBatch:
    rng = _rng(seed)
    c = rng.standard_normal((T, d))
    candidates = rng.standard_normal((pool, d))
    mask = np.zeros(T, dtype=bool)
    mask[rng.choice(T, size=T // 2, replace=False)] = True
    target_index = rng.integers(0, pool, size=T)
    candidate_sets = {}
    for t in range(T):
        others = [j for j in range(pool) if j != target_index[t]]
        chosen = rng.choice(others, size=min(n_cand, len(others)), replace=False)
        candidate_sets[t] = np.sort(np.append(chosen, target_index[t]))
    usage = None
    if with_usage:
        raw = rng.random((G, V)) + 0.1
        usage = raw / raw.sum(axis=1, keepdims=True)
    return MaskedBatch(c, candidates, target_index, candidate_sets, mask, kappa, alpha, usage)


# ---------------------------------------------------------------------------
# gradient checks
# ---------------------------------------------------------------------------


def check_cpc_gradient(seed: int) -> float:
    batch = random_cpc_batch(seed)
    shapes = [batch.z.shape, batch.c.shape, batch.W.shape]
    sizes = [int(np.prod(s)) for s in shapes]

    def rebuild(flat: np.ndarray) -> CpcBatch:
        z, c, W = np.split(flat, np.cumsum(sizes)[:-1])
        return CpcBatch(z.reshape(shapes[0]), c.reshape(shapes[1]), W.reshape(shapes[2]), batch.negatives)

    x0 = np.concatenate([batch.z.ravel(), batch.c.ravel(), batch.W.ravel()])
    numeric = finite_difference(lambda x: cpc_loss(rebuild(x)).loss, x0)
    res = cpc_loss(batch)
    analytic = np.concatenate([res.grad_z.ravel(), res.grad_c.ravel(), res.grad_w.ravel()])
    return max_relative_error(analytic, numeric)


def check_w2v2_gradient(seed: int) -> float:
    batch = random_masked_batch(seed, alpha=0.3)
    shapes = [batch.c.shape, batch.candidates.shape, batch.codebook_usage.shape]
    sizes = [int(np.prod(s)) for s in shapes]

    def rebuild(flat: np.ndarray) -> MaskedBatch:
        c, q, u = np.split(flat, np.cumsum(sizes)[:-1])
        return MaskedBatch(
            c.reshape(shapes[0]),
            q.reshape(shapes[1]),
            batch.target_index,
            batch.candidate_sets,
            batch.mask,
            batch.kappa,
            batch.alpha,
            u.reshape(shapes[2]),
        )

    x0 = np.concatenate(
        [batch.c.ravel(), batch.candidates.ravel(), batch.codebook_usage.ravel()]
    )
    numeric = finite_difference(lambda x: w2v2_loss(rebuild(x)).loss, x0)
    res = w2v2_loss(batch)
    analytic = np.concatenate(
        [res.grad_c.ravel(), res.grad_candidates.ravel(), res.grad_usage.ravel()]
    )
    return max_relative_error(analytic, numeric)


def check_hubert_gradient(seed: int) -> float:
    batch = random_masked_batch(seed, alpha=0.6, with_usage=False)
    shapes = [batch.c.shape, batch.candidates.shape]
    sizes = [int(np.prod(s)) for s in shapes]

    def rebuild(flat: np.ndarray) -> MaskedBatch:
        c, q = np.split(flat, np.cumsum(sizes)[:-1])
        return MaskedBatch(
            c.reshape(shapes[0]),
            q.reshape(shapes[1]),
            batch.target_index,
            batch.candidate_sets,
            batch.mask,
            batch.kappa,
            batch.alpha,
            None,
        )

    x0 = np.concatenate([batch.c.ravel(), batch.candidates.ravel()])
    numeric = finite_difference(lambda x: hubert_loss(rebuild(x)).loss, x0)
    res = hubert_loss(batch)
    analytic = np.concatenate([res.grad_c.ravel(), res.grad_candidates.ravel()])
    return max_relative_error(analytic, numeric)


def uniform_score_losses(n_candidates: int = 5) -> dict[str, float]:
    """Each contrastive loss evaluated where every candidate scores equally;
    all must equal ln(n_candidates)."""
    T, d = 4, 3
    rng = _rng(12345)
    z = np.tile(rng.standard_normal(d), (T + n_candidates, 1))  # identical rows
    c = rng.standard_normal((T + n_candidates, d))
    W = rng.standard_normal((1, d, d))
    negatives = {(t, 1): np.arange(t + 1, t + 1 + n_candidates) for t in range(T)}
    cpc = cpc_loss(CpcBatch(z, c, W, negatives)).loss

    pool = np.tile(rng.standard_normal(d), (n_candidates, 1))
    ctx = rng.standard_normal((T, d))
    mask = np.array([True, True, False, False])
    tgt = np.zeros(T, dtype=np.int64)
    sets = {t: np.arange(n_candidates) for t in range(T)}
    usage = np.full((2, 4), 0.25)
    w2v2 = w2v2_loss(MaskedBatch(ctx, pool, tgt, sets, mask, 0.1, 0.5, usage)).l_m
    hub = hubert_loss(MaskedBatch(ctx, pool, tgt, sets, mask, 0.1, 0.5, None)).loss
    return {"cpc": cpc, "w2v2": w2v2, "hubert": hub}


# ---------------------------------------------------------------------------
# CTC path-enumeration oracle
# ---------------------------------------------------------------------------


def collapse_path(path: Sequence[int], blank: int) -> tuple[int, ...]:
    """CTC collapse: merge consecutive repeats, then drop blanks."""
    merged = [s for i, s in enumerate(path) if i == 0 or s != path[i - 1]]
    return tuple(s for s in merged if s != blank)


def ctc_brute_force(log_probs: np.ndarray, target: Sequence[int]) -> float:
    """Sum path probabilities over every alignment that collapses to target."""
    lp = np.asarray(log_probs, dtype=np.float64)
    T, cols = lp.shape
    blank = cols - 1
    probs = np.exp(lp)
    tgt = tuple(int(x) for x in target)
    total = 0.0
    for path in itertools.product(range(cols), repeat=T):
        if collapse_path(path, blank) == tgt:
            p = 1.0
            for t, s in enumerate(path):
                p *= probs[t, s]
            total += p
    return math.log(total) if total > 0.0 else float("-inf")


def random_ctc_instance(seed: int, max_t: int = 6, max_p: int = 3) -> tuple[np.ndarray, list[int]]:
    rng = _rng(seed)
    T = int(rng.integers(1, max_t + 1))
    P = int(rng.integers(1, max_p + 1))
    logits = rng.standard_normal((T, P + 1))
    log_probs = logits - np.log(np.sum(np.exp(logits), axis=1, keepdims=True))
    L = int(rng.integers(0, min(max_p, T) + 1))
    target = [int(x) for x in rng.integers(0, P, size=L)]
    return log_probs, target


# ---------------------------------------------------------------------------
# edit-distance oracles
# ---------------------------------------------------------------------------


def brute_force_edit_distance(ref: Sequence, hyp: Sequence) -> int:
    """Plain-recursive minimal edit distance (exponential; tiny inputs only)."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        brute_force_edit_distance(ref[1:], hyp[1:]) + (ref[0] != hyp[0]),
        brute_force_edit_distance(ref[1:], hyp) + 1,
        brute_force_edit_distance(ref, hyp[1:]) + 1,
    )


def edit_distance_cross(refs: Sequence[Sequence[int]], hyps: Sequence[Sequence[int]]) -> np.ndarray:
    """Distance matrix for every (ref, hyp) pair via a row recurrence
    vectorized across all hypotheses at once (independent of the scalar DP)."""
    B = len(hyps)
    max_h = max((len(h) for h in hyps), default=0)
    H = np.zeros((B, max_h), dtype=np.int64)
    lens = np.array([len(h) for h in hyps], dtype=np.int64)
    for b, h in enumerate(hyps):
        H[b, : len(h)] = np.asarray(h, dtype=np.int64)
    out = np.empty((len(refs), B), dtype=np.int64)
    cols = np.arange(max_h + 1, dtype=np.int64)
    for a, ref in enumerate(refs):
        row = np.broadcast_to(cols, (B, max_h + 1)).copy()
        for i, sym in enumerate(ref, start=1):
            prev = row
            row = np.empty_like(prev)
            row[:, 0] = i
            for j in range(1, max_h + 1):
                sub = prev[:, j - 1] + (H[:, j - 1] != sym)
                dele = prev[:, j] + 1
                ins = row[:, j - 1] + 1
                row[:, j] = np.minimum(np.minimum(sub, dele), ins)
        out[a] = row[np.arange(B), lens]
    return out


def all_sequences(alphabet: Sequence[int], max_len: int) -> list[tuple[int, ...]]:
    seqs: list[tuple[int, ...]] = []
    for L in range(max_len + 1):
        seqs.extend(itertools.product(alphabet, repeat=L))
    return seqs


# ---------------------------------------------------------------------------
# the loss-check table
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _grad_suite(name: str, checker: Callable[[int], float], seeds: int) -> CheckResult:
    worst = max(checker(seed) for seed in range(seeds))
    return CheckResult(
        f"{name} gradient vs finite differences ({seeds} seeds)",
        worst < REL_TOL,
        f"max rel err {worst:.3e} (tol {REL_TOL:g})",
    )


def run_loss_checks(seeds: int = 100) -> list[CheckResult]:
    results = [
        _grad_suite("cpc_loss", check_cpc_gradient, seeds),
        _grad_suite("w2v2_loss", check_w2v2_gradient, seeds),
        _grad_suite("hubert_loss", check_hubert_gradient, seeds),
    ]

    uniform = uniform_score_losses(5)
    ln_n = math.log(5)
    worst = max(abs(v - ln_n) for v in uniform.values())
    results.append(
        CheckResult(
            "uniform candidate scores give ln N",
            worst <= LN_N_TOL,
            f"max |loss - ln 5| = {worst:.2e} (tol {LN_N_TOL:g})",
        )
    )

    n_ctc = max(20, seeds // 2)
    worst_ctc = 0.0
    for seed in range(n_ctc):
        lp, tgt = random_ctc_instance(seed)
        got = ctc_log_prob(lp, tgt)
        want = ctc_brute_force(lp, tgt)
        if got.log_prob == float("-inf") and want == float("-inf"):
            continue
        worst_ctc = max(worst_ctc, abs(got.log_prob - want))
    results.append(
        CheckResult(
            f"ctc forward vs path enumeration ({n_ctc} instances)",
            worst_ctc < 1e-10,
            f"max |diff| {worst_ctc:.2e} (tol 1e-10)",
        )
    )

    rng = _rng(777)
    ok_perm = True
    for seed in range(20):
        lp, tgt = random_ctc_instance(seed + 1000)
        P = lp.shape[1] - 1
        perm = rng.permutation(P)
        lp_perm = lp.copy()
        lp_perm[:, :P] = lp[:, perm]
        inverse = np.argsort(perm)
        tgt_perm = [int(inverse[x]) for x in tgt]
        a = ctc_log_prob(lp, tgt)
        b = ctc_log_prob(lp_perm, tgt_perm)
        if a.feasible != b.feasible or (a.feasible and abs(a.log_prob - b.log_prob) > 1e-12):
            ok_perm = False
    results.append(CheckResult("ctc permutation covariance", ok_perm, "20 relabelings"))

    # extending a target of length >= T/2 never raises the uniform-matrix
    # score (below T/2 an extension can add alignment paths)
    ok_mono = True
    n_mono = 0
    for P in (1, 2, 3):
        for T in range(2, 7):
            uniform_lp = np.full((T, P + 1), -math.log(P + 1))
            for L in range(math.ceil(T / 2), T):
                for tgt in itertools.product(range(P), repeat=L):
                    base = ctc_log_prob(uniform_lp, list(tgt)).log_prob
                    for c in range(P):
                        n_mono += 1
                        if ctc_log_prob(uniform_lp, list(tgt) + [c]).log_prob > base + 1e-12:
                            ok_mono = False
    results.append(
        CheckResult(
            "ctc non-increasing under extension (len >= T/2, uniform scores)",
            ok_mono,
            f"{n_mono} extensions",
        )
    )

    q = QuantizerConfig(np.array([[[0.0, 0.0], [1.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]]))
    vec = np.array([0.9, 0.8, 0.1, 0.9])
    q_t, idx = product_quantize(vec, q)
    exact, _ = product_quantize(np.array([1.0, 1.0, 1.0, 0.0]), q)
    tie, tie_idx = product_quantize(np.array([0.5, 0.5, 0.5, 0.5]), q)
    ok_pq = (
        np.allclose(q_t, [1.0, 1.0, 0.0, 1.0])
        and list(idx) == [1, 0]
        and np.allclose(exact, [1.0, 1.0, 1.0, 0.0])
        and list(tie_idx) == [0, 0]
    )
    results.append(CheckResult("product quantizer nearest/tie rules", ok_pq, "hand cases"))

    base = random_masked_batch(4242, alpha=0.0)
    l0 = w2v2_loss(base).l_m
    scaled_pool = base.candidates.copy()
    scaled_pool[0] *= 3.0
    l1 = w2v2_loss(
        MaskedBatch(
            base.c, scaled_pool, base.target_index, base.candidate_sets,
            base.mask, base.kappa, base.alpha, base.codebook_usage,
        )
    ).l_m
    cpc_batch = random_cpc_batch(4242)
    c0 = cpc_loss(cpc_batch).loss
    z_scaled = cpc_batch.z.copy()
    z_scaled[0] *= 3.0
    c1 = cpc_loss(CpcBatch(z_scaled, cpc_batch.c, cpc_batch.W, cpc_batch.negatives)).loss
    results.append(
        CheckResult(
            "cosine loss scale-invariant, dot-product loss not",
            abs(l1 - l0) < 1e-12 and abs(c1 - c0) > 1e-6,
            f"cosine delta {abs(l1 - l0):.1e}, dot delta {abs(c1 - c0):.2e}",
        )
    )
    return results
