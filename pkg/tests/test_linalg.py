import numpy as np
import numpy.testing as npt
import pytest

from coupledembed.errors import NumericError
from coupledembed.linalg import (psd_inv_sqrt, psd_inverse, psd_sqrt, svd,
                                 trace_norm)


class TestSvd:
    def test_identity(self):
        res = svd(np.eye(2))
        npt.assert_allclose(res.s, [1.0, 1.0])

    def test_diagonal_sorted(self):
        res = svd(np.diag([3.0, 4.0]))
        npt.assert_allclose(res.s, [4.0, 3.0])

    def test_reconstruction_oracle(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(5, 3))
        res = svd(m)
        recon = res.u @ np.diag(res.s) @ res.vt
        assert np.linalg.norm(recon - m) <= 1e-8 * np.linalg.norm(m)

    def test_symmetric_psd_singular_values_are_eigenvalues(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(4, 4))
        a = b @ b.T
        evals = np.sort(np.linalg.eigvalsh(a))[::-1]
        npt.assert_allclose(svd(a).s, evals, rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_transpose_has_same_singular_values(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(rng.integers(1, 7), rng.integers(1, 7)))
        npt.assert_allclose(svd(m).s, svd(m.T).s, atol=1e-10)

    def test_sorted_nonincreasing_and_nonnegative(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            s = svd(rng.normal(size=(6, 4))).s
            assert np.all(s >= 0)
            assert np.all(np.diff(s) <= 0)

    def test_rejects_nonfinite(self):
        with pytest.raises(NumericError, match="non-finite"):
            svd(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestTraceNorm:
    def test_zero_matrix(self):
        assert trace_norm(np.zeros((3, 5))) == 0.0

    def test_diagonal(self):
        assert trace_norm(np.diag([3.0, 4.0])) == pytest.approx(7.0)

    def test_variational_identity_oracle(self):
        # independent route: 0.5 tr(M^T G^-1 M) + 0.5 tr(G), G = (MM^T)^(1/2)
        rng = np.random.default_rng(3)
        m = rng.normal(size=(4, 6))
        gamma = psd_sqrt(m @ m.T, 0.0)
        rhs = 0.5 * np.sum(m * (psd_inverse(gamma) @ m)) + 0.5 * np.trace(gamma)
        assert abs(trace_norm(m) - rhs) <= 1e-6


class TestPsdSqrt:
    def test_zero_matrix_with_ridge(self):
        npt.assert_allclose(psd_sqrt(np.zeros((3, 3)), 1e-6), 1e-3 * np.eye(3),
                            atol=1e-15)

    def test_identity_no_ridge(self):
        npt.assert_allclose(psd_sqrt(np.eye(4), 0.0), np.eye(4), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_squaring_oracle(self, seed):
        rng = np.random.default_rng(seed)
        b = rng.normal(size=(6, 6))
        a = b @ b.T
        root = psd_sqrt(a, 0.0)
        assert np.linalg.norm(root @ root - a) <= 1e-8 * np.linalg.norm(a)

    def test_output_symmetric(self):
        rng = np.random.default_rng(9)
        b = rng.normal(size=(8, 8))
        root = psd_sqrt(b @ b.T, 1e-6)
        assert np.linalg.norm(root - root.T) <= 1e-10

    def test_rejects_non_psd(self):
        with pytest.raises(NumericError, match="not PSD"):
            psd_sqrt(np.diag([1.0, -1.0]), 0.0)

    def test_rejects_asymmetric(self):
        with pytest.raises(NumericError, match="not symmetric"):
            psd_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]), 0.0)

    def test_rejects_rectangular(self):
        with pytest.raises(NumericError, match="square"):
            psd_sqrt(np.zeros((2, 3)), 0.0)

    def test_rejects_negative_mu(self):
        with pytest.raises(NumericError, match="non-negative"):
            psd_sqrt(np.eye(2), -1.0)


class TestPsdInvSqrt:
    def test_zero_matrix(self):
        npt.assert_allclose(psd_inv_sqrt(np.zeros((2, 2)), 1e-4), 100.0 * np.eye(2),
                            rtol=1e-12)

    def test_mu_zero_rejected(self):
        with pytest.raises(NumericError, match="mu > 0"):
            psd_inv_sqrt(np.eye(3), 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_inverse_oracle(self, seed):
        rng = np.random.default_rng(seed)
        b = rng.normal(size=(5, 5))
        a = b @ b.T
        prod = psd_inv_sqrt(a, 1e-6) @ psd_sqrt(a, 1e-6)
        assert np.linalg.norm(prod - np.eye(5)) <= 1e-6


class TestPsdInverse:
    def test_inverts_positive_definite(self):
        rng = np.random.default_rng(4)
        b = rng.normal(size=(5, 5))
        a = b @ b.T + np.eye(5)
        npt.assert_allclose(psd_inverse(a) @ a, np.eye(5), atol=1e-10)

    def test_pseudo_inverse_on_rank_deficient(self):
        # projector onto first coordinate: pinv equals itself
        p = np.diag([1.0, 0.0, 0.0])
        npt.assert_allclose(psd_inverse(p), p, atol=1e-12)


def test_lemma_identity_property():
    # variational identity over random full-rank wide matrices
    rng = np.random.default_rng(5)
    for _ in range(20):
        rows = int(rng.integers(1, 6))
        cols = int(rng.integers(rows, 8))
        m = rng.normal(size=(rows, cols))
        gamma = psd_sqrt(m @ m.T, 0.0)
        rhs = 0.5 * np.sum(m * (psd_inverse(gamma) @ m)) + 0.5 * np.trace(gamma)
        tn = trace_norm(m)
        assert abs(tn - rhs) <= 1e-6 * max(1.0, tn)
