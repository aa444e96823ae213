import math

import numpy as np
import pytest

from afprobe.errors import DataError
from afprobe.objectives import (
    CpcBatch,
    MaskedBatch,
    QuantizerConfig,
    cpc_loss,
    ctc_log_prob,
    ctc_min_frames,
    hubert_loss,
    joint_objective,
    product_quantize,
    w2v2_loss,
)
from afprobe.verify import (
    check_cpc_gradient,
    check_hubert_gradient,
    check_w2v2_gradient,
    ctc_brute_force,
    random_cpc_batch,
    random_ctc_instance,
    random_masked_batch,
    uniform_score_losses,
)


# -------------------------------------------------------------------- CPC


def test_cpc_uniform_candidates_ln_n():
    losses = uniform_score_losses(5)
    assert losses["cpc"] == pytest.approx(math.log(5), abs=1e-12)


def test_cpc_confident_positive_near_zero_loss():
    # scores: positive (row 1) = +20, negatives = -20; K = 1
    z = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]])
    c = np.array([[1.0, 0.0]] * 4)
    W = np.array([[[20.0, 0.0], [0.0, 0.0]]])  # score_j = 20 * z_j[0]
    batch = CpcBatch(z, c, W, {(0, 1): np.array([1, 2, 3])})
    assert cpc_loss(batch).loss < 1e-8


def test_cpc_gradient_matches_finite_differences():
    assert check_cpc_gradient(0) < 1e-4


def test_cpc_loss_nonnegative_and_decreases_with_positive_score():
    batch = random_cpc_batch(1, T=5, K=1)
    base = cpc_loss(batch).loss
    assert base >= 0.0
    # push a single positive latent along its score direction
    t, k = 0, 1
    v = batch.W[0] @ batch.c[t]
    z2 = batch.z.copy()
    z2[t + k] += 0.5 * v / np.linalg.norm(v)
    only = {(t, k): batch.negatives[(t, k)]}
    before = cpc_loss(CpcBatch(batch.z, batch.c, batch.W, only)).loss
    after = cpc_loss(CpcBatch(z2, batch.c, batch.W, only)).loss
    assert after < before


def test_cpc_dot_product_scores_are_scale_sensitive():
    batch = random_cpc_batch(2)
    base = cpc_loss(batch).loss
    z2 = batch.z.copy()
    z2[0] *= 3.0
    assert abs(cpc_loss(CpcBatch(z2, batch.c, batch.W, batch.negatives)).loss - base) > 1e-8


def test_cpc_validation_errors():
    z = np.zeros((4, 2))
    c = np.zeros((4, 2))
    W = np.zeros((1, 2, 2))
    with pytest.raises(DataError, match="positive"):
        CpcBatch(z, c, W, {(0, 1): np.array([2, 3])})
    with pytest.raises(DataError, match="empty"):
        CpcBatch(z, c, W, {(0, 1): np.array([], dtype=np.int64)})
    with pytest.raises(DataError, match="non-finite"):
        CpcBatch(z + np.nan, c, W, {(0, 1): np.array([1])})
    with pytest.raises(DataError, match="no future step"):
        CpcBatch(z, c, W, {(3, 1): np.array([3])})
    with pytest.raises(DataError, match="horizon"):
        cpc_loss(CpcBatch(z, c, np.zeros((2, 2, 2)), {(0, 1): np.array([1])}))


# ---------------------------------------------------------- product quantizer


def test_quantizer_exact_match_zero_distortion():
    q = QuantizerConfig(np.array([[[0.0, 1.0], [2.0, 3.0]]]))
    vec = np.array([2.0, 3.0])
    q_t, idx = product_quantize(vec, q)
    assert np.array_equal(q_t, vec) and list(idx) == [1]


def test_quantizer_nearest_neighbor_by_hand():
    q = QuantizerConfig(np.array([[[0.0, 0.0], [1.0, 1.0]]]))
    q_t, idx = product_quantize(np.array([0.9, 0.8]), q)
    assert list(idx) == [1] and np.array_equal(q_t, [1.0, 1.0])


def test_quantizer_tie_goes_to_lowest_index():
    q = QuantizerConfig(np.array([[[0.0, 0.0], [1.0, 1.0]]]))
    _, idx = product_quantize(np.array([0.5, 0.5]), q)
    assert list(idx) == [0]


def test_quantizer_dimension_mismatch():
    q = QuantizerConfig(np.array([[[0.0, 0.0], [1.0, 1.0]]]))
    with pytest.raises(DataError, match="dim"):
        product_quantize(np.array([1.0, 2.0, 3.0]), q)


def test_quantizer_concatenates_groups():
    q = QuantizerConfig(
        np.array([[[0.0, 0.0], [1.0, 1.0]], [[5.0, 5.0], [6.0, 6.0]]])
    )
    q_t, idx = product_quantize(np.array([0.9, 1.1, 5.2, 4.9]), q)
    assert list(idx) == [1, 0]
    assert np.array_equal(q_t, [1.0, 1.0, 5.0, 5.0])


# ------------------------------------------------------------------- wav2vec2


def test_w2v2_uniform_usage_zero_diversity():
    batch = random_masked_batch(3, with_usage=True)
    uniform = np.full_like(batch.codebook_usage, 1.0 / batch.codebook_usage.shape[1])
    res = w2v2_loss(
        MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 1.0, uniform)
    )
    assert res.l_d == pytest.approx(0.0, abs=1e-12)


def test_w2v2_one_hot_usage_diversity():
    batch = random_masked_batch(4, with_usage=True, G=2, V=3)
    one_hot = np.zeros((2, 3))
    one_hot[:, 0] = 1.0
    res = w2v2_loss(
        MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 1.0, one_hot)
    )
    assert res.l_d == pytest.approx((3 - 1) / 3, abs=1e-12)


def test_w2v2_uniform_scores_ln_n():
    assert uniform_score_losses(5)["w2v2"] == pytest.approx(math.log(5), abs=1e-12)


def test_w2v2_gradient_matches_finite_differences():
    assert check_w2v2_gradient(0) < 1e-4


def test_w2v2_total_combines_terms():
    batch = random_masked_batch(5, alpha=0.7)
    res = w2v2_loss(batch)
    assert res.loss == pytest.approx(res.l_m + 0.7 * res.l_d, abs=1e-12)


def test_w2v2_cosine_invariant_to_candidate_rescaling():
    batch = random_masked_batch(6, alpha=0.0)
    base = w2v2_loss(batch).l_m
    scaled = batch.candidates.copy()
    scaled[0] *= 4.0
    res = w2v2_loss(
        MaskedBatch(batch.c, scaled, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 0.0, batch.codebook_usage)
    )
    assert res.l_m == pytest.approx(base, abs=1e-12)


def test_w2v2_validation_errors():
    batch = random_masked_batch(7)
    with pytest.raises(DataError, match="mask"):
        w2v2_loss(
            MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                        np.zeros(batch.c.shape[0], dtype=bool), batch.kappa, 0.5,
                        batch.codebook_usage)
        )
    with pytest.raises(DataError, match="codebook_usage"):
        w2v2_loss(
            MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                        batch.mask, batch.kappa, 0.5, None)
        )
    with pytest.raises(DataError, match="zero-norm"):
        bad = batch.c.copy()
        bad[batch.steps(True)[0]] = 0.0
        w2v2_loss(
            MaskedBatch(bad, batch.candidates, batch.target_index, batch.candidate_sets,
                        batch.mask, batch.kappa, 0.5, batch.codebook_usage)
        )
    with pytest.raises(DataError, match="kappa"):
        MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, 0.0, 0.5, batch.codebook_usage)


# --------------------------------------------------------------------- hubert


def test_hubert_alpha_extremes():
    batch = random_masked_batch(8, with_usage=False)
    both = hubert_loss(
        MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 0.5, None)
    )
    only_m = hubert_loss(
        MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 1.0, None)
    )
    only_u = hubert_loss(
        MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 0.0, None)
    )
    assert only_m.loss == pytest.approx(both.l_m, abs=1e-12)
    assert only_u.loss == pytest.approx(both.l_u, abs=1e-12)


def test_hubert_symmetric_halves():
    # masked and unmasked halves hold identical data, so at alpha=0.5 the
    # total equals either half's loss
    rng = np.random.default_rng(10)
    T, d, pool = 4, 3, 5
    half_c = rng.standard_normal((2, d))
    c = np.vstack([half_c, half_c])
    candidates = rng.standard_normal((pool, d))
    target = np.array([1, 2, 1, 2])
    sets = {t: np.arange(pool) for t in range(4)}
    mask = np.array([True, True, False, False])
    res = hubert_loss(MaskedBatch(c, candidates, target, sets, mask, 0.1, 0.5, None))
    assert res.l_m == pytest.approx(res.l_u, abs=1e-12)
    assert res.loss == pytest.approx(res.l_m, abs=1e-12)


def test_hubert_uniform_scores_ln_n():
    assert uniform_score_losses(5)["hubert"] == pytest.approx(math.log(5), abs=1e-12)


def test_hubert_gradient_matches_finite_differences():
    assert check_hubert_gradient(0) < 1e-4


def test_hubert_alpha_out_of_range():
    batch = random_masked_batch(9, with_usage=False)
    with pytest.raises(DataError, match="alpha"):
        hubert_loss(
            MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                        batch.mask, batch.kappa, 1.5, None)
        )


def test_masked_losses_nonnegative_and_reward_true_target():
    for seed in range(10):
        batch = random_masked_batch(seed + 100, alpha=0.0)
        base = w2v2_loss(batch)
        assert base.l_m >= 0.0
        assert hubert_loss(
            MaskedBatch(batch.c, batch.candidates, batch.target_index, batch.candidate_sets,
                        batch.mask, batch.kappa, 0.5, None)
        ).loss >= 0.0
    # moving a masked step's context toward its true target lowers the loss
    batch = random_masked_batch(321, alpha=0.0)
    t = int(batch.steps(True)[0])
    improved = batch.c.copy()
    target_vec = batch.candidates[batch.target_index[t]]
    improved[t] = target_vec / np.linalg.norm(target_vec)
    res_before = w2v2_loss(batch)
    res_after = w2v2_loss(
        MaskedBatch(improved, batch.candidates, batch.target_index, batch.candidate_sets,
                    batch.mask, batch.kappa, 0.0, batch.codebook_usage)
    )
    assert res_after.l_m < res_before.l_m


# ------------------------------------------------------------------------ CTC


def test_ctc_t1_uniform():
    lp = np.log(np.full((1, 2), 0.5))
    res = ctc_log_prob(lp, [0])
    assert res.feasible and res.log_prob == pytest.approx(math.log(0.5), abs=1e-12)


def test_ctc_t2_three_paths():
    lp = np.log(np.full((2, 2), 0.5))
    res = ctc_log_prob(lp, [0])
    assert res.log_prob == pytest.approx(math.log(0.75), abs=1e-12)


def test_ctc_matches_brute_force_enumeration():
    for seed in range(40):
        lp, target = random_ctc_instance(seed)
        got = ctc_log_prob(lp, target)
        want = ctc_brute_force(lp, target)
        if math.isinf(want):
            assert not got.feasible and math.isinf(got.log_prob)
        else:
            assert got.log_prob == pytest.approx(want, abs=1e-10)


def test_ctc_infeasible_target_flagged_not_raised():
    lp = np.log(np.full((2, 3), 1 / 3))
    res = ctc_log_prob(lp, [0, 0])  # needs >= 3 frames (repeat needs a blank)
    assert not res.feasible and math.isinf(res.log_prob)
    assert ctc_min_frames([0, 0]) == 3


def test_ctc_empty_target_all_blanks():
    lp = np.log(np.full((3, 3), 1 / 3))
    res = ctc_log_prob(lp, [])
    assert res.log_prob == pytest.approx(3 * math.log(1 / 3), abs=1e-12)


def test_ctc_permutation_covariance():
    lp, target = random_ctc_instance(123)
    P = lp.shape[1] - 1
    if P < 2 or not target:
        lp, target = random_ctc_instance(7)
        P = lp.shape[1] - 1
    perm = np.roll(np.arange(P), 1)
    lp2 = lp.copy()
    lp2[:, :P] = lp[:, perm]
    inverse = np.argsort(perm)
    target2 = [int(inverse[t]) for t in target]
    a, b = ctc_log_prob(lp, target), ctc_log_prob(lp2, target2)
    assert a.feasible == b.feasible
    if a.feasible:
        assert a.log_prob == pytest.approx(b.log_prob, abs=1e-12)


def test_ctc_monotone_in_target_length_on_uniform():
    # appending a symbol can only lower the uniform-matrix score once the
    # target is at least half the frame budget (shorter targets can gain
    # alignment paths from an extension, so monotonicity starts at T/2)
    import itertools

    for P in (1, 2, 3):
        for T in range(2, 7):
            lp = np.full((T, P + 1), -math.log(P + 1))
            for L in range(math.ceil(T / 2), T):
                for tgt in itertools.product(range(P), repeat=L):
                    base = ctc_log_prob(lp, list(tgt)).log_prob
                    for c in range(P):
                        ext = ctc_log_prob(lp, list(tgt) + [c]).log_prob
                        assert ext <= base + 1e-12


def test_ctc_row_sum_validation():
    lp = np.zeros((2, 3))  # exp sums to 3 per row
    with pytest.raises(DataError, match="sum to 1"):
        ctc_log_prob(lp, [0])
    with pytest.raises(DataError, match="target"):
        ctc_log_prob(np.log(np.full((2, 3), 1 / 3)), [2])  # 2 is the blank column


# ----------------------------------------------------------- joint objective


def test_joint_objective_extremes_and_midpoint():
    assert joint_objective(-1.0, -3.0, 1.0) == -1.0
    assert joint_objective(-1.0, -3.0, 0.0) == -3.0
    assert joint_objective(-1.0, -3.0, 0.5) == pytest.approx(-2.0, abs=1e-15)


def test_joint_objective_lambda_range():
    with pytest.raises(DataError, match="lambda"):
        joint_objective(-1.0, -1.0, 1.5)


def test_joint_objective_infeasible_ctc():
    assert joint_objective(float("-inf"), -3.0, 0.0) == -3.0
    assert joint_objective(float("-inf"), -3.0, 0.5) == float("-inf")
