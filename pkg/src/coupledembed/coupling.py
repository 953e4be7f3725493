"""Relevance constraints tying the two modality classifier heads together.

A CoupledHeads instance carries two m x C classifier matrices, one per
modality, plus the auxiliary PSD coupling matrix gamma. Three loss pieces
live here:

  * modality-routed softmax cross-entropy (samples tagged 0 go through
    ``w_n``, samples tagged 1 through ``w_v``);
  * the low-rank coupling penalty on the stacked heads [w_n w_v], handled
    through its variational form so it stays differentiable: with gamma
    fixed the penalty is 0.5*lam*(tr(M^T gamma^-1 M) + tr(gamma)), and
    gamma itself is refreshed in closed form by ``update_gamma``;
  * an orthogonality penalty pushing each head's columns toward an
    orthonormal frame.

Gradients are exact derivatives of the values computed here; every one is
finite-difference checked in the test suite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, NumericError
from .linalg import PSD_TOL, psd_inverse, psd_sqrt


@dataclass
class CoupledHeads:
    """Modality classifier pair (w_n, w_v), coupling matrix, and knobs.

    lam scales the coupling penalty, alpha1/alpha2 weight the coupling and
    orthogonality parts inside the relevance loss, mu is the ridge keeping
    gamma invertible at rank-deficient heads.
    """

    w_n: np.ndarray
    w_v: np.ndarray
    gamma: np.ndarray
    lam: float = 0.001
    alpha1: float = 1.0
    alpha2: float = 1.0
    mu: float = 1e-6

    def __post_init__(self):
        self.w_n = np.asarray(self.w_n, dtype=np.float64)
        self.w_v = np.asarray(self.w_v, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if self.w_n.ndim != 2 or self.w_n.shape != self.w_v.shape:
            raise NumericError(
                f"head shapes must match, got {self.w_n.shape} and {self.w_v.shape}")
        m = self.w_n.shape[0]
        if self.gamma.shape != (m, m):
            raise NumericError(
                f"gamma must be {m}x{m} to match the heads, got {self.gamma.shape}")
        if self.lam < 0 or self.alpha1 < 0 or self.alpha2 < 0:
            raise NumericError("lam, alpha1, alpha2 must be non-negative")
        # mu = 0 is legal for the pure math (gamma inverses fall back to the
        # pseudo-inverse); training configs should keep it positive.
        if self.mu < 0:
            raise NumericError(f"mu must be non-negative, got {self.mu}")
        skew = np.max(np.abs(self.gamma - self.gamma.T)) if m else 0.0
        if skew > PSD_TOL:
            raise NumericError(f"gamma is not symmetric (max asymmetry {skew:.3e})")
        evals = np.linalg.eigvalsh(0.5 * (self.gamma + self.gamma.T))
        if evals.size and evals.min() < -PSD_TOL:
            raise NumericError(f"gamma is not PSD (min eigenvalue {evals.min():.3e})")

    @property
    def embedding_dim(self) -> int:
        return self.w_n.shape[0]

    @property
    def num_classes(self) -> int:
        return self.w_n.shape[1]

    def stacked(self) -> np.ndarray:
        """Horizontal concatenation [w_n w_v], shape (m, 2C)."""
        return np.hstack([self.w_n, self.w_v])


def init_heads(embedding_dim: int, num_classes: int, seed: int,
               lam: float = 0.001, alpha1: float = 1.0, alpha2: float = 1.0,
               mu: float = 1e-6, std: float | None = None) -> CoupledHeads:
    """Gaussian-initialized heads with gamma consistent with them.

    ``std`` defaults to 1/sqrt(embedding_dim) so initial logits are O(1).
    """
    rng = np.random.default_rng(seed)
    if std is None:
        std = 1.0 / np.sqrt(embedding_dim)
    w_n = rng.normal(0.0, std, size=(embedding_dim, num_classes))
    w_v = rng.normal(0.0, std, size=(embedding_dim, num_classes))
    gamma = psd_sqrt(w_n @ w_n.T + w_v @ w_v.T, mu)
    return CoupledHeads(w_n, w_v, gamma, lam=lam, alpha1=alpha1, alpha2=alpha2, mu=mu)


class RelevanceGrads(NamedTuple):
    loss_value: float
    d_w_n: np.ndarray
    d_w_v: np.ndarray
    d_embeddings: np.ndarray
    parts: tuple  # (softmax, r1, r2) unweighted values


def _check_batch(heads: CoupledHeads, embeddings, labels, modalities):
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    modalities = np.asarray(modalities)
    if emb.ndim != 2 or emb.shape[1] != heads.embedding_dim:
        raise DataError(
            f"embeddings must be (B, {heads.embedding_dim}), got {emb.shape}")
    n = emb.shape[0]
    if labels.shape != (n,) or modalities.shape != (n,):
        raise DataError("labels and modalities must be 1-D and match the batch")
    if n and (labels.min() < 0 or labels.max() >= heads.num_classes):
        raise DataError(
            f"labels must lie in [0, {heads.num_classes}), got "
            f"[{labels.min()}, {labels.max()}]")
    if n and not np.all(np.isin(modalities, (0, 1))):
        raise DataError("modalities must be 0 or 1")
    return emb, labels.astype(np.intp), modalities.astype(np.intp)


def softmax_loss(heads: CoupledHeads, embeddings, labels, modalities):
    """Mean cross-entropy with per-modality head routing.

    Returns (loss, d_w_n, d_w_v, d_embeddings). Samples of one modality
    contribute nothing to the other modality's head gradient.
    """
    emb, labels, modalities = _check_batch(heads, embeddings, labels, modalities)
    n = emb.shape[0]
    if n == 0:
        raise DataError("softmax_loss needs a non-empty batch")
    loss = 0.0
    d_w = {0: np.zeros_like(heads.w_n), 1: np.zeros_like(heads.w_v)}
    d_emb = np.zeros_like(emb)
    for mod, w in ((0, heads.w_n), (1, heads.w_v)):
        idx = np.flatnonzero(modalities == mod)
        if idx.size == 0:
            continue
        x = emb[idx]
        y = labels[idx]
        logits = x @ w
        logits -= logits.max(axis=1, keepdims=True)
        logexp = np.log(np.sum(np.exp(logits), axis=1))
        loss += float(np.sum(logexp - logits[np.arange(idx.size), y]))
        probs = np.exp(logits - logexp[:, None])
        probs[np.arange(idx.size), y] -= 1.0
        probs /= n
        d_w[mod] = x.T @ probs
        d_emb[idx] = probs @ w.T
    return loss / n, d_w[0], d_w[1], d_emb


def r1_value(heads: CoupledHeads) -> float:
    """Coupling penalty 0.5*lam*(tr(M^T gamma^-1 M) + tr(gamma)), M=[w_n w_v]."""
    m = heads.stacked()
    ginv = psd_inverse(heads.gamma)
    return 0.5 * heads.lam * (float(np.sum(m * (ginv @ m))) + float(np.trace(heads.gamma)))


def update_gamma(heads: CoupledHeads) -> np.ndarray:
    """Closed-form refresh gamma = (w_n w_n^T + w_v w_v^T + mu I)^(1/2).

    Replaces ``heads.gamma`` in place and returns the new matrix. This is
    the minimizer of the mu-ridged coupling penalty over PSD gamma.
    """
    gamma = psd_sqrt(heads.w_n @ heads.w_n.T + heads.w_v @ heads.w_v.T, heads.mu)
    heads.gamma = gamma
    return gamma


def r1_grads(heads: CoupledHeads) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of r1_value with gamma held fixed.

    dR1/dW_i = 0.5*lam*(gamma^-1 + gamma^-T) W_i. Note the operand order:
    gamma^-1 is m x m and multiplies the m x C head from the left.
    """
    ginv = psd_inverse(heads.gamma)
    scale = 0.5 * heads.lam * (ginv + ginv.T)
    return scale @ heads.w_n, scale @ heads.w_v


def r2_value_and_grads(heads: CoupledHeads):
    """Orthogonality penalty 0.5*sum_i ||W_i^T W_i - I||_F^2 and its gradients.

    The gradient of each part is 2 W_i (W_i^T W_i - I), the exact derivative.
    """
    eye = np.eye(heads.num_classes)
    s_n = heads.w_n.T @ heads.w_n - eye
    s_v = heads.w_v.T @ heads.w_v - eye
    value = 0.5 * (float(np.sum(s_n * s_n)) + float(np.sum(s_v * s_v)))
    return value, 2.0 * heads.w_n @ s_n, 2.0 * heads.w_v @ s_v


def relevance_loss(heads: CoupledHeads, embeddings, labels, modalities) -> RelevanceGrads:
    """softmax + alpha1 * coupling + alpha2 * orthogonality, with gradients.

    ``d_embeddings`` comes only from the softmax part; the two penalties
    touch the heads alone.
    """
    sm_loss, d_w_n, d_w_v, d_emb = softmax_loss(heads, embeddings, labels, modalities)
    r1 = r1_value(heads)
    g1_n, g1_v = r1_grads(heads)
    r2, g2_n, g2_v = r2_value_and_grads(heads)
    loss = sm_loss + heads.alpha1 * r1 + heads.alpha2 * r2
    return RelevanceGrads(
        loss_value=loss,
        d_w_n=d_w_n + heads.alpha1 * g1_n + heads.alpha2 * g2_n,
        d_w_v=d_w_v + heads.alpha1 * g1_v + heads.alpha2 * g2_v,
        d_embeddings=d_emb,
        parts=(sm_loss, r1, r2),
    )


def correlation_matrix(heads: CoupledHeads) -> np.ndarray:
    """Absolute cosine similarity between all columns of [w_n w_v].

    Shape (2C, 2C), entries in [0, 1], diagonal exactly 1. Zero-norm
    columns are undefined: their off-diagonal entries are reported as the
    sentinel 0 and a warning names them.
    """
    m = heads.stacked()
    norms = np.linalg.norm(m, axis=0)
    zero_cols = np.flatnonzero(norms == 0.0)
    if zero_cols.size:
        warnings.warn(
            f"columns {zero_cols.tolist()} of [w_n w_v] have zero norm; "
            "their correlations are reported as 0", stacklevel=2)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = m / safe
    corr = np.abs(unit.T @ unit)
    corr[zero_cols, :] = 0.0
    corr[:, zero_cols] = 0.0
    np.clip(corr, 0.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr
