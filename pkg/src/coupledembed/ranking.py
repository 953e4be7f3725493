"""Cross-modal triplet ranking: hinge loss and semi-hard in-batch mining.

A triplet pairs an anchor with a positive from the *other* modality (same
identity) and a negative from the anchor's *own* modality (different
identity). Mining keeps triplets in the semi-hard band

    d(a,p)^2 < d(a,n)^2 < d(a,p)^2 + margin   (both strict)

evaluated on the embeddings handed in, which callers are expected to have
length-normalized so squared distances live in [0, 4] and a fixed margin
is meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DataError


class Triplet(NamedTuple):
    anchor_idx: int
    positive_idx: int
    negative_idx: int


@dataclass(frozen=True)
class RankingConfig:
    margin: float = 0.5
    max_triplets_per_anchor: int = 4

    def __post_init__(self):
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.max_triplets_per_anchor <= 0:
            raise ConfigError(
                f"max_triplets_per_anchor must be positive, got {self.max_triplets_per_anchor}")


def triplet_loss(embeddings, triplets: Sequence[Triplet], margin: float):
    """Mean hinge loss over triplets and its gradient w.r.t. the embeddings.

    Each triplet contributes max(0, margin + d(a,p)^2 - d(a,n)^2); the mean
    keeps the term batch-size invariant. An empty triplet list is a valid
    no-op: loss 0 and zero gradients. The subgradient at the hinge kink is 0.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise DataError(f"embeddings must be 2-D, got shape {emb.shape}")
    grad = np.zeros_like(emb)
    if not triplets:
        return 0.0, grad
    n = emb.shape[0]
    total = 0.0
    count = len(triplets)
    for a, p, neg in triplets:
        if not (0 <= a < n and 0 <= p < n and 0 <= neg < n):
            raise DataError(f"triplet ({a}, {p}, {neg}) out of range for batch of {n}")
        ap = emb[a] - emb[p]
        an = emb[a] - emb[neg]
        term = margin + float(ap @ ap) - float(an @ an)
        if term > 0.0:
            total += term
            grad[a] += 2.0 * (ap - an) / count
            grad[p] -= 2.0 * ap / count
            grad[neg] += 2.0 * an / count
    return total / count, grad


def mine_triplets(embeddings, labels, modalities, config: RankingConfig) -> list[Triplet]:
    """Semi-hard cross-modal mining over one batch.

    For every anchor, candidate positives share its label but not its
    modality; candidate negatives share its modality but not its label.
    Candidates must fall strictly inside the semi-hard band. Per anchor the
    ``max_triplets_per_anchor`` hardest survive, hardness being
    margin + d(a,p)^2 - d(a,n)^2; ties break by (negative label, negative
    index, positive index) ascending, so mining is deterministic.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    modalities = np.asarray(modalities)
    n = emb.shape[0]
    if labels.shape != (n,) or modalities.shape != (n,):
        raise DataError("labels and modalities must be 1-D and match the batch")
    out: list[Triplet] = []
    for a in range(n):
        pos_idx = np.flatnonzero((labels == labels[a]) & (modalities != modalities[a]))
        neg_idx = np.flatnonzero((labels != labels[a]) & (modalities == modalities[a]))
        if pos_idx.size == 0 or neg_idx.size == 0:
            continue
        diff = emb - emb[a]
        d2 = np.sum(diff * diff, axis=1)
        candidates = []
        for p in pos_idx:
            dp = d2[p]
            for neg in neg_idx:
                dn = d2[neg]
                if dp < dn < dp + config.margin:
                    hardness = config.margin + dp - dn
                    candidates.append((-hardness, labels[neg], neg, p))
        candidates.sort()
        for _, _, neg, p in candidates[:config.max_triplets_per_anchor]:
            out.append(Triplet(a, int(p), int(neg)))
    return out
