"""Retrieval metrics and embedding diagnostics.

Scoring is cosine similarity on length-normalized embeddings. Rank-1,
ROC, and verification-rate-at-FAR work off a probes x gallery score
matrix; the variance diagnostics measure within-class and between-class
scatter of an embedding set, optionally along a PCA dimension sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError


@dataclass(frozen=True)
class ScoreMatrix:
    """Similarity scores (higher = more similar) with row/column labels."""

    scores: np.ndarray        # (probes, gallery)
    probe_labels: np.ndarray
    gallery_labels: np.ndarray

    def __post_init__(self):
        if self.scores.ndim != 2:
            raise DataError(f"scores must be 2-D, got {self.scores.shape}")
        p, g = self.scores.shape
        if self.probe_labels.shape != (p,) or self.gallery_labels.shape != (g,):
            raise DataError("labels must match the score matrix dims")


def score(probe_embeddings, gallery_embeddings, probe_labels, gallery_labels) -> ScoreMatrix:
    """Cosine similarity between every probe and every gallery embedding."""
    probe = np.asarray(probe_embeddings, dtype=np.float64)
    gallery = np.asarray(gallery_embeddings, dtype=np.float64)
    if probe.ndim != 2 or gallery.ndim != 2 or probe.shape[1] != gallery.shape[1]:
        raise DataError(
            f"embedding dims must agree, got {probe.shape} and {gallery.shape}")

    def unit(x, name):
        norms = np.linalg.norm(x, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise NumericError(f"{name} embedding {int(zero[0])} has zero norm")
        return x / norms[:, None]

    scores = unit(probe, "probe") @ unit(gallery, "gallery").T
    return ScoreMatrix(scores, np.asarray(probe_labels), np.asarray(gallery_labels))


def rank1(sm: ScoreMatrix) -> float:
    """Fraction of probes whose best-scoring gallery entry shares their label.

    Ties go to the lowest gallery index, so the result is deterministic.
    """
    missing = np.setdiff1d(sm.probe_labels, sm.gallery_labels)
    if missing.size:
        raise DataError(f"probe labels {missing.tolist()} absent from gallery")
    if sm.scores.shape[0] == 0:
        raise DataError("rank1 needs at least one probe")
    best = np.argmax(sm.scores, axis=1)
    return float(np.mean(sm.gallery_labels[best] == sm.probe_labels))


def roc(sm: ScoreMatrix, far_points=(0.001, 0.01, 0.1)):
    """ROC over all distinct score thresholds plus VR at requested FARs.

    Genuine pairs share a label, impostor pairs do not. The curve starts at
    the sentinel (0, 0) (threshold above every score) and is swept in
    descending threshold order, so verification rate is non-decreasing in
    false accept rate. VR at a target FAR is read off the swept curve at
    the largest achieved FAR not exceeding the target: conservative, no
    interpolation.
    """
    genuine = sm.probe_labels[:, None] == sm.gallery_labels[None, :]
    n_gen = int(genuine.sum())
    n_imp = genuine.size - n_gen
    if n_gen == 0:
        raise DataError("no genuine probe-gallery pairs")
    if n_imp == 0:
        raise DataError("no impostor probe-gallery pairs")
    flat_scores = sm.scores.ravel()
    flat_gen = genuine.ravel()
    order = np.argsort(-flat_scores, kind="stable")
    sorted_scores = flat_scores[order]
    sorted_gen = flat_gen[order]
    cum_gen = np.cumsum(sorted_gen)
    cum_imp = np.cumsum(~sorted_gen)
    # one curve point per distinct threshold: the last position of each block
    block_ends = np.append(np.flatnonzero(np.diff(sorted_scores) != 0),
                           sorted_scores.size - 1)
    fars = cum_imp[block_ends] / n_imp
    vrs = cum_gen[block_ends] / n_gen
    curve = np.column_stack([np.concatenate([[0.0], fars]),
                             np.concatenate([[0.0], vrs])])
    vr_at_far = {}
    for target in far_points:
        if not 0.0 <= target <= 1.0:
            raise DataError(f"FAR target {target} outside [0, 1]")
        ok = np.flatnonzero(curve[:, 0] <= target)
        vr_at_far[float(target)] = float(curve[ok[-1], 1])
    return curve, vr_at_far


def variance_analysis(embeddings, labels, inter_norm: str = "samples"):
    """Within-class and between-class scatter of an embedding set.

    sigma_intra averages, over classes, the mean squared distance of each
    sample to its class mean. sigma_inter sums squared distances of class
    means to the global mean, normalized by the total sample count
    (``inter_norm="samples"``, the form used here) or by the class count
    (``inter_norm="classes"``, the conventional alternative).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise DataError("embeddings must be (N, d) with matching labels")
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError(f"variance analysis needs >= 2 classes, got {classes.size}")
    if inter_norm not in ("samples", "classes"):
        raise DataError(f"inter_norm must be 'samples' or 'classes', got {inter_norm!r}")
    overall = x.mean(axis=0)
    intra = 0.0
    inter = 0.0
    for c in classes:
        members = x[labels == c]
        mean_c = members.mean(axis=0)
        centered = members - mean_c
        intra += float(np.sum(centered * centered)) / members.shape[0]
        diff = mean_c - overall
        inter += float(diff @ diff)
    intra /= classes.size
    inter /= x.shape[0] if inter_norm == "samples" else classes.size
    return intra, inter


def variance_curve(embeddings, labels, dims, inter_norm: str = "samples"):
    """Scatter statistics after PCA projection to each requested dimension.

    The PCA basis is fit on the given embeddings. Returns a list of
    (dim, sigma_intra, sigma_inter) preserving the requested order,
    duplicates included.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"embeddings must be 2-D, got {x.shape}")
    centered = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(s > s.max(initial=0.0) * max(x.shape) * np.finfo(np.float64).eps))
    out = []
    for d in dims:
        if d <= 0 or d > x.shape[1]:
            raise DataError(f"requested dim {d} outside [1, {x.shape[1]}]")
        if d > rank:
            raise NumericError(f"requested dim {d} exceeds embedding rank {rank}")
        proj = centered @ vt[:d].T
        intra, inter = variance_analysis(proj, labels, inter_norm)
        out.append((int(d), intra, inter))
    return out


@dataclass
class EvalReport:
    """Bundle of retrieval metrics plus optional diagnostics."""

    rank1: float
    roc: np.ndarray                 # (T, 2) columns far, vr
    vr_at_far: dict
    sigma_curves: list | None = None   # (dim, sigma_intra, sigma_inter)
    correlation: np.ndarray | None = None


def evaluate_retrieval(probe_embeddings, probe_labels, gallery_embeddings,
                       gallery_labels, far_points=(0.001, 0.01, 0.1)) -> EvalReport:
    """Score probes against the gallery and compute rank-1, ROC, VR@FAR."""
    sm = score(probe_embeddings, gallery_embeddings, probe_labels, gallery_labels)
    curve, vr_at_far = roc(sm, far_points)
    return EvalReport(rank1=rank1(sm), roc=curve, vr_at_far=vr_at_far)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_report(report: EvalReport, out_dir) -> list[str]:
    """Write report.txt plus CSVs for the ROC curve and any diagnostics.

    Returns the list of files written (relative names).
    """
    import os

    written = []
    lines = [f"rank1 {repr(float(report.rank1))}"]
    for far in sorted(report.vr_at_far):
        lines.append(f"vr@far={repr(float(far))} {repr(float(report.vr_at_far[far]))}")
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append("report.txt")
    _write_csv(os.path.join(out_dir, "roc.csv"), ("far", "vr"), report.roc)
    written.append("roc.csv")
    if report.sigma_curves is not None:
        _write_csv(os.path.join(out_dir, "sigma_curves.csv"),
                   ("dim", "sigma_intra", "sigma_inter"), report.sigma_curves)
        written.append("sigma_curves.csv")
    if report.correlation is not None:
        _write_csv(os.path.join(out_dir, "correlation.csv"),
                   tuple(f"c{i}" for i in range(report.correlation.shape[1])),
                   report.correlation)
        written.append("correlation.csv")
    return written
