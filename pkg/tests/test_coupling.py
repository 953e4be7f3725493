import numpy as np
import numpy.testing as npt
import pytest

from coupledembed.coupling import (CoupledHeads, correlation_matrix,
                                   init_heads, r1_grads, r1_value,
                                   r2_value_and_grads, relevance_loss,
                                   softmax_loss, update_gamma)
from coupledembed.errors import DataError, NumericError
from coupledembed.linalg import psd_sqrt, trace_norm
from helpers import check_grad_entries, random_entries


def make_heads(m=4, c=3, seed=0, **kw):
    return init_heads(m, c, seed, **kw)


def zero_heads(m=4, c=3, mu=1e-6, **kw):
    return CoupledHeads(np.zeros((m, c)), np.zeros((m, c)),
                        np.sqrt(mu) * np.eye(m), mu=mu, **kw)


class TestCoupledHeads:
    def test_shape_mismatch_rejected(self):
        with pytest.raises(NumericError, match="match"):
            CoupledHeads(np.zeros((4, 3)), np.zeros((4, 2)), np.eye(4))

    def test_gamma_shape_rejected(self):
        with pytest.raises(NumericError, match="gamma"):
            CoupledHeads(np.zeros((4, 3)), np.zeros((4, 3)), np.eye(3))

    def test_non_psd_gamma_rejected(self):
        with pytest.raises(NumericError, match="PSD"):
            CoupledHeads(np.zeros((2, 2)), np.zeros((2, 2)), np.diag([1.0, -1.0]))


class TestSoftmaxLoss:
    def test_zero_weights_uniform(self):
        heads = zero_heads(m=4, c=3)
        emb = np.random.default_rng(0).normal(size=(5, 4))
        loss, *_ = softmax_loss(heads, emb, [0, 1, 2, 0, 1], [0, 1, 0, 1, 0])
        assert loss == pytest.approx(np.log(3))

    def test_saturated_logit(self):
        # one sample whose true-class logit sits 50 above the rest
        w_n = np.zeros((2, 3))
        w_n[0, 1] = 50.0
        heads = CoupledHeads(w_n, np.zeros((2, 3)), np.eye(2))
        loss, *_ = softmax_loss(heads, np.array([[1.0, 0.0]]), [1], [0])
        assert loss < 1e-10

    def test_hand_evaluated_oracle(self):
        # 3 classes, 2 samples, direct -log p(true) evaluation
        rng = np.random.default_rng(1)
        heads = make_heads(m=4, c=3, seed=2)
        emb = rng.normal(size=(2, 4))
        labels = np.array([2, 0])
        mods = np.array([0, 1])
        loss, *_ = softmax_loss(heads, emb, labels, mods)
        expected = 0.0
        for i, w in ((0, heads.w_n), (1, heads.w_v)):
            z = emb[i] @ w
            p = np.exp(z) / np.sum(np.exp(z))
            expected += -np.log(p[labels[i]])
        assert loss == pytest.approx(expected / 2)

    def test_modality_isolation(self):
        rng = np.random.default_rng(3)
        heads = make_heads(m=4, c=3, seed=4)
        emb = rng.normal(size=(6, 4))
        labels = np.array([0, 1, 2, 0, 1, 2])
        mods = np.array([0, 0, 0, 1, 1, 1])
        _, d_w_n, d_w_v, _ = softmax_loss(heads, emb, labels, mods)
        # permuting the modality-1 samples leaves d_w_n bit-exact
        perm = np.array([0, 1, 2, 5, 3, 4])
        _, d_w_n2, _, _ = softmax_loss(heads, emb[perm], labels[perm], mods[perm])
        npt.assert_array_equal(d_w_n, d_w_n2)

    def test_single_modality_zero_other_grad(self):
        heads = make_heads(seed=5)
        emb = np.random.default_rng(4).normal(size=(3, 4))
        _, d_w_n, d_w_v, _ = softmax_loss(heads, emb, [0, 1, 2], [0, 0, 0])
        assert np.all(d_w_v == 0)
        assert not np.all(d_w_n == 0)

    def test_label_out_of_range(self):
        heads = make_heads(c=3)
        with pytest.raises(DataError, match="labels"):
            softmax_loss(heads, np.zeros((1, 4)), [3], [0])

    def test_gradient_oracle(self):
        rng = np.random.default_rng(6)
        heads = make_heads(m=4, c=3, seed=7)
        emb = rng.normal(size=(5, 4))
        labels = rng.integers(0, 3, size=5)
        mods = np.array([0, 1, 0, 1, 0])

        def loss():
            return softmax_loss(heads, emb, labels, mods)[0]

        _, d_w_n, d_w_v, d_emb = softmax_loss(heads, emb, labels, mods)
        check_grad_entries(loss, heads.w_n, d_w_n, random_entries(rng, heads.w_n.size, 6))
        check_grad_entries(loss, heads.w_v, d_w_v, random_entries(rng, heads.w_v.size, 6))
        check_grad_entries(loss, emb, d_emb, random_entries(rng, emb.size, 6))


class TestR1:
    def test_zero_heads_trace_term_only(self):
        # w = 0, gamma = sqrt(mu) I, lam = 1, m = 4: value = 0.5*4*1e-3
        heads = zero_heads(m=4, c=3, mu=1e-6, lam=1.0)
        assert r1_value(heads) == pytest.approx(2e-3)

    def test_lemma_oracle_full_rank(self):
        rng = np.random.default_rng(8)
        heads = make_heads(m=3, c=4, seed=9, lam=1.0)
        heads.gamma = psd_sqrt(heads.stacked() @ heads.stacked().T, 0.0)
        assert r1_value(heads) == pytest.approx(trace_norm(heads.stacked()), abs=1e-6)

    def test_lambda_zero(self):
        heads = make_heads(lam=0.0)
        assert r1_value(heads) == 0.0

    def test_update_gamma_zero_heads(self):
        heads = zero_heads(m=3, c=2, mu=1e-6)
        gamma = update_gamma(heads)
        npt.assert_allclose(gamma, 1e-3 * np.eye(3), atol=1e-15)
        assert heads.gamma is gamma

    def test_update_gamma_projector_case(self):
        # orthonormal columns spanning R^m, other head zero, mu = 0
        heads = CoupledHeads(np.eye(3), np.zeros((3, 3)), np.eye(3), mu=0.0)
        npt.assert_allclose(update_gamma(heads), np.eye(3), atol=1e-12)

    def test_update_gamma_squares_to_gram(self):
        heads = make_heads(m=5, c=6, seed=10)
        gamma = update_gamma(heads)
        target = (heads.w_n @ heads.w_n.T + heads.w_v @ heads.w_v.T
                  + heads.mu * np.eye(5))
        assert np.linalg.norm(gamma @ gamma - target) <= 1e-8 * np.linalg.norm(target)

    def test_update_gamma_attains_infimum(self):
        # sampled PSD competitors never beat the closed-form refresh
        rng = np.random.default_rng(11)
        heads = make_heads(m=4, c=5, seed=12, lam=1.0)
        update_gamma(heads)
        best = r1_value(heads)
        for _ in range(25):
            b = rng.normal(size=(4, 4))
            heads.gamma = b @ b.T + 1e-9 * np.eye(4)
            assert best <= r1_value(heads) + 1e-9

    def test_zero_heads_zero_grads(self):
        heads = zero_heads()
        g_n, g_v = r1_grads(heads)
        npt.assert_array_equal(g_n, np.zeros_like(heads.w_n))
        npt.assert_array_equal(g_v, np.zeros_like(heads.w_v))

    def test_identity_gamma_grad_is_weight(self):
        rng = np.random.default_rng(13)
        w_n = rng.normal(size=(4, 3))
        w_v = rng.normal(size=(4, 3))
        heads = CoupledHeads(w_n, w_v, np.eye(4), lam=1.0)
        g_n, g_v = r1_grads(heads)
        npt.assert_allclose(g_n, w_n, rtol=1e-12)
        npt.assert_allclose(g_v, w_v, rtol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient_oracle_gamma_fixed(self, seed):
        rng = np.random.default_rng(seed)
        heads = make_heads(m=4, c=3, seed=seed + 20)
        update_gamma(heads)
        g_n, g_v = r1_grads(heads)
        check_grad_entries(lambda: r1_value(heads), heads.w_n, g_n,
                           random_entries(rng, heads.w_n.size, 7))
        check_grad_entries(lambda: r1_value(heads), heads.w_v, g_v,
                           random_entries(rng, heads.w_v.size, 7))


class TestR2:
    def test_orthonormal_columns_zero(self):
        heads = CoupledHeads(np.eye(4)[:, :3], np.eye(4)[:, 1:], np.eye(4))
        value, g_n, g_v = r2_value_and_grads(heads)
        assert value == pytest.approx(0.0, abs=1e-12)
        npt.assert_allclose(g_n, 0, atol=1e-12)
        npt.assert_allclose(g_v, 0, atol=1e-12)

    def test_scaled_identity_case(self):
        # W = 2I (m = C = 2): value = 0.5(||3I||^2 + ||3I||^2) = 18
        heads = CoupledHeads(2 * np.eye(2), 2 * np.eye(2), np.eye(2))
        value, _, _ = r2_value_and_grads(heads)
        assert value == pytest.approx(18.0)

    def test_zero_heads_value_is_class_count(self):
        heads = zero_heads(m=3, c=3)
        value, _, _ = r2_value_and_grads(heads)
        assert value == pytest.approx(3.0)

    def test_gradient_oracle(self):
        rng = np.random.default_rng(14)
        heads = make_heads(m=4, c=3, seed=15)
        _, g_n, g_v = r2_value_and_grads(heads)
        check_grad_entries(lambda: r2_value_and_grads(heads)[0], heads.w_n, g_n,
                           random_entries(rng, heads.w_n.size, 7))
        check_grad_entries(lambda: r2_value_and_grads(heads)[0], heads.w_v, g_v,
                           random_entries(rng, heads.w_v.size, 7))


class TestRelevanceLoss:
    def test_degenerate_weights_match_softmax(self):
        rng = np.random.default_rng(16)
        heads = make_heads(m=4, c=3, seed=17, alpha1=0.0, alpha2=0.0)
        emb = rng.normal(size=(4, 4))
        labels = [0, 1, 2, 0]
        mods = [0, 1, 0, 1]
        res = relevance_loss(heads, emb, labels, mods)
        sm = softmax_loss(heads, emb, labels, mods)
        assert res.loss_value == sm[0]
        npt.assert_array_equal(res.d_w_n, sm[1])
        npt.assert_array_equal(res.d_embeddings, sm[3])

    def test_zero_embeddings_orthonormal_heads(self):
        # R2 vanishes; loss = ln(C) + alpha1 * r1
        heads = CoupledHeads(np.eye(4)[:, :3], np.eye(4)[:, 1:], np.eye(4),
                             lam=0.5, alpha1=2.0, alpha2=7.0)
        res = relevance_loss(heads, np.zeros((2, 4)), [0, 1], [0, 1])
        assert res.loss_value == pytest.approx(np.log(3) + 2.0 * r1_value(heads))

    def test_d_embeddings_only_from_softmax(self):
        rng = np.random.default_rng(18)
        heads = make_heads(m=4, c=3, seed=19, alpha1=3.0, alpha2=5.0)
        emb = rng.normal(size=(3, 4))
        res = relevance_loss(heads, emb, [0, 1, 2], [0, 1, 0])
        sm = softmax_loss(heads, emb, [0, 1, 2], [0, 1, 0])
        npt.assert_array_equal(res.d_embeddings, sm[3])

    @pytest.mark.parametrize("seed", range(3))
    def test_total_gradient_oracle(self, seed):
        rng = np.random.default_rng(seed + 30)
        heads = make_heads(m=4, c=3, seed=seed + 40, lam=0.1, alpha1=0.7, alpha2=0.3)
        update_gamma(heads)
        emb = rng.normal(size=(5, 4))
        labels = rng.integers(0, 3, size=5)
        mods = np.array([0, 1, 0, 1, 0])

        def loss():
            return relevance_loss(heads, emb, labels, mods).loss_value

        res = relevance_loss(heads, emb, labels, mods)
        check_grad_entries(loss, heads.w_n, res.d_w_n,
                           random_entries(rng, heads.w_n.size, 6))
        check_grad_entries(loss, heads.w_v, res.d_w_v,
                           random_entries(rng, heads.w_v.size, 6))
        check_grad_entries(loss, emb, res.d_embeddings,
                           random_entries(rng, emb.size, 6))

    def test_parts_reported(self):
        heads = make_heads(seed=50)
        emb = np.random.default_rng(20).normal(size=(2, 4))
        res = relevance_loss(heads, emb, [0, 1], [0, 1])
        sm, r1, r2 = res.parts
        assert res.loss_value == pytest.approx(
            sm + heads.alpha1 * r1 + heads.alpha2 * r2)


class TestCorrelationMatrix:
    def test_equal_heads_unit_cross_diagonal(self):
        rng = np.random.default_rng(21)
        w = rng.normal(size=(4, 3))
        heads = CoupledHeads(w, w.copy(), np.eye(4))
        corr = correlation_matrix(heads)
        for i in range(3):
            assert corr[i, 3 + i] == pytest.approx(1.0)

    def test_orthogonal_columns_zero_offdiag(self):
        heads = CoupledHeads(np.eye(4)[:, :2], np.eye(4)[:, 2:], np.eye(4))
        corr = correlation_matrix(heads)
        off = corr - np.eye(4)
        npt.assert_allclose(off, 0, atol=1e-12)

    def test_random_heads_properties(self):
        heads = make_heads(m=5, c=4, seed=22)
        corr = correlation_matrix(heads)
        assert corr.shape == (8, 8)
        npt.assert_allclose(corr, corr.T, atol=1e-12)
        assert np.all((corr >= 0) & (corr <= 1))
        npt.assert_array_equal(np.diag(corr), np.ones(8))

    def test_zero_column_flagged(self):
        w_n = np.eye(3)
        w_n[:, 1] = 0.0
        heads = CoupledHeads(w_n, np.eye(3), np.eye(3))
        with pytest.warns(UserWarning, match=r"columns \[1\]"):
            corr = correlation_matrix(heads)
        assert corr[1, 1] == 1.0
        assert np.all(corr[1, [0, 2, 3, 4, 5]] == 0)
