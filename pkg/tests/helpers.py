"""Shared oracles: central finite differences and brute-force mining."""

import numpy as np

from coupledembed.ranking import Triplet

FD_STEP = 1e-5


def brute_force_mine(emb, labels, modalities, config):
    """Independent mining oracle: filter all index triples by the selection
    rules, then apply the per-anchor hardness cap with the documented
    tie-break."""
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    modalities = np.asarray(modalities)
    n = len(labels)
    result = []
    for a in range(n):
        cands = []
        for p in range(n):
            for neg in range(n):
                if labels[p] != labels[a] or modalities[p] == modalities[a]:
                    continue
                if labels[neg] == labels[a] or modalities[neg] != modalities[a]:
                    continue
                dp = float(np.sum((emb[a] - emb[p]) ** 2))
                dn = float(np.sum((emb[a] - emb[neg]) ** 2))
                if dp < dn < dp + config.margin:
                    cands.append((-(config.margin + dp - dn), labels[neg], neg, p))
        cands.sort()
        result.extend(Triplet(a, int(p), int(neg))
                      for _, _, neg, p in cands[:config.max_triplets_per_anchor])
    return result


def central_diff(f, x, h=FD_STEP):
    """Central finite difference of a scalar function at scalar x."""
    return (f(x + h) - f(x - h)) / (2.0 * h)


def rel_err(analytic, numeric):
    return abs(analytic - numeric) / max(1e-8, abs(analytic), abs(numeric))


def check_grad_entries(loss_fn, param, grad, entries, tol=1e-4, h=FD_STEP):
    """Compare analytic grad to central differences at chosen flat indices.

    ``loss_fn()`` must recompute the scalar loss from the current contents
    of ``param``, which is mutated in place around each probe.
    """
    flat = param.reshape(-1)
    gflat = np.asarray(grad).reshape(-1)
    for idx in entries:
        orig = flat[idx]
        flat[idx] = orig + h
        up = loss_fn()
        flat[idx] = orig - h
        down = loss_fn()
        flat[idx] = orig
        fd = (up - down) / (2.0 * h)
        err = rel_err(gflat[idx], fd)
        assert err <= tol, (
            f"grad mismatch at flat index {idx}: analytic {gflat[idx]!r} "
            f"vs fd {fd!r} (rel err {err:.2e})")


def random_entries(rng, size, count):
    count = min(count, size)
    return rng.choice(size, size=count, replace=False)
