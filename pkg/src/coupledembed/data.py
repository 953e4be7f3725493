"""Two-modality datasets: synthetic generation, file I/O, batch sampling.

The synthetic generator draws one latent vector per identity and observes
it through two different fixed nonlinear maps (one per modality), plus
gaussian noise. Identity is decided entirely by the latent, so a
nearest-neighbor in latent space is perfect by construction while the raw
input space carries a genuine modality gap; ``modality_gap`` measures both
so a run can confirm the gap is real before training on it.

Dataset files are plain text, one sample per line:

    # coupledembed-dataset v1 rows=<N> dim=<D>
    <label>,<modality>,<f0>,<f1>,...

Floats are written with shortest round-trip precision, so save -> load is
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DataError

_HEADER_PREFIX = "# coupledembed-dataset v1"


class Dataset:
    """Immutable bundle of feature vectors with identity and modality tags."""

    def __init__(self, features, labels, modalities):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.intp)
        modalities = np.asarray(modalities, dtype=np.intp)
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        n = features.shape[0]
        if labels.shape != (n,) or modalities.shape != (n,):
            raise DataError("labels and modalities must be 1-D and match features")
        if not np.all(np.isfinite(features)):
            raise DataError("features contain non-finite values")
        if n and labels.min() < 0:
            raise DataError("labels must be non-negative")
        if n and not np.all(np.isin(modalities, (0, 1))):
            raise DataError("modalities must be 0 or 1")
        for arr in (features, labels, modalities):
            arr.setflags(write=False)
        self.features = features
        self.labels = labels
        self.modalities = modalities

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def identities(self) -> np.ndarray:
        return np.unique(self.labels)

    def identities_with_both_modalities(self) -> np.ndarray:
        both = [
            i for i in np.unique(self.labels)
            if np.any((self.labels == i) & (self.modalities == 0))
            and np.any((self.labels == i) & (self.modalities == 1))
        ]
        return np.asarray(both, dtype=np.intp)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{_HEADER_PREFIX} rows={len(self)} dim={self.feature_dim}\n")
            for label, modality, row in zip(self.labels, self.modalities, self.features):
                feats = ",".join(repr(float(v)) for v in row)
                fh.write(f"{int(label)},{int(modality)},{feats}\n")


def load_dataset(path, fmt: str = "v1") -> Dataset:
    """Parse a dataset file, validating every row.

    An empty file is a valid empty dataset. Any malformed row fails with
    its 1-based line number; no silent coercion.
    """
    if fmt != "v1":
        raise ConfigError(f"unknown dataset format {fmt!r}, expected 'v1'")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    declared_rows = declared_dim = None
    start = 0
    if lines and lines[0].startswith("#"):
        if not lines[0].startswith(_HEADER_PREFIX):
            raise DataError(f"{path}: unrecognized header {lines[0]!r}")
        try:
            fields = dict(part.split("=") for part in lines[0][len(_HEADER_PREFIX):].split())
            declared_rows = int(fields["rows"])
            declared_dim = int(fields["dim"])
        except (ValueError, KeyError) as exc:
            raise DataError(f"{path}: malformed header {lines[0]!r}") from exc
        start = 1
    feats, labels, mods = [], [], []
    width = declared_dim
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 3:
            raise DataError(f"{path}:{lineno}: expected label,modality,features")
        try:
            label = int(parts[0])
            modality = int(parts[1])
            row = [float(v) for v in parts[2:]]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: unparseable value ({exc})") from exc
        if label < 0:
            raise DataError(f"{path}:{lineno}: negative label {label}")
        if modality not in (0, 1):
            raise DataError(f"{path}:{lineno}: modality must be 0 or 1, got {modality}")
        if not all(np.isfinite(row)):
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(
                f"{path}:{lineno}: feature width {len(row)} != expected {width}")
        labels.append(label)
        mods.append(modality)
        feats.append(row)
    if declared_rows is not None and declared_rows != len(labels):
        raise DataError(
            f"{path}: header declares rows={declared_rows} but found {len(labels)}")
    dim = width if width is not None else 0
    features = np.array(feats, dtype=np.float64).reshape(len(labels), dim)
    return Dataset(features, labels, mods)


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for the synthetic two-modality generator."""

    identities: int = 100
    holdout_identities: int = 40
    samples_per_identity_per_modality: int = 6
    latent_dim: int = 16
    input_dim: int = 64
    modality_transform_scale: float = 1.0
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.identities <= 0 or self.holdout_identities <= 0:
            raise ConfigError("identity counts must be positive")
        if self.samples_per_identity_per_modality <= 0:
            raise ConfigError("samples_per_identity_per_modality must be positive")
        if self.latent_dim <= 0 or self.input_dim <= 0:
            raise ConfigError("dims must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")


class SyntheticSplit(NamedTuple):
    train: Dataset
    gallery: Dataset
    probe: Dataset


class GapReport(NamedTuple):
    raw_rank1: float     # nearest neighbor in input space, probe vs gallery
    latent_rank1: float  # nearest neighbor on the generating latents


def _generate_full(spec: SynthSpec):
    rng = np.random.default_rng(spec.seed)
    total = spec.identities + spec.holdout_identities
    k = spec.samples_per_identity_per_modality
    latents = rng.normal(0.0, 1.0, size=(total, spec.latent_dim))
    col_scale = 1.0 / np.sqrt(spec.latent_dim)
    a_shared = rng.normal(0.0, col_scale, size=(spec.input_dim, spec.latent_dim))
    a_dev = rng.normal(0.0, col_scale, size=(2, spec.input_dim, spec.latent_dim))
    b_shared = rng.normal(0.0, 0.3, size=spec.input_dim)
    b_dev = rng.normal(0.0, 0.3, size=(2, spec.input_dim))
    s = spec.modality_transform_scale
    transforms = [(a_shared + s * a_dev[m], b_shared + s * b_dev[m]) for m in (0, 1)]
    noise = rng.normal(0.0, 1.0, size=(total, 2, k, spec.input_dim))

    feats, labels, mods = [], [], []
    for ident in range(total):
        for m in (0, 1):
            a, b = transforms[m]
            clean = np.tanh(a @ latents[ident] + b)
            for j in range(k):
                feats.append(clean + spec.noise_sigma * noise[ident, m, j])
                labels.append(ident)
                mods.append(m)
    features = np.asarray(feats)
    labels = np.asarray(labels, dtype=np.intp)
    mods = np.asarray(mods, dtype=np.intp)
    return features, labels, mods, latents


def generate(spec: SynthSpec) -> SyntheticSplit:
    """Draw a train/gallery/probe split with disjoint identity sets.

    Training identities are [0, identities); held-out identities take the
    remaining ids. The gallery holds one modality-1 sample per held-out
    identity, the probe holds all their modality-0 samples, mirroring a
    zero-shot gallery/probe protocol.
    """
    features, labels, mods, _ = _generate_full(spec)
    train_mask = labels < spec.identities
    train = Dataset(features[train_mask], labels[train_mask], mods[train_mask])

    gallery_rows, probe_rows = [], []
    for ident in range(spec.identities, spec.identities + spec.holdout_identities):
        vis = np.flatnonzero((labels == ident) & (mods == 1))
        gallery_rows.append(vis[0])
        probe_rows.extend(np.flatnonzero((labels == ident) & (mods == 0)))
    gallery = Dataset(features[gallery_rows], labels[gallery_rows], mods[gallery_rows])
    probe = Dataset(features[probe_rows], labels[probe_rows], mods[probe_rows])
    return SyntheticSplit(train, gallery, probe)


def modality_gap(spec: SynthSpec) -> GapReport:
    """Nearest-neighbor check that the generated gap is real but learnable.

    Raw-input rank-1 should be well below 1 (the modalities genuinely
    differ) while latent rank-1 is 1.0 by construction.
    """
    features, labels, mods, latents = _generate_full(spec)
    gallery_rows, probe_rows = [], []
    for ident in range(spec.identities, spec.identities + spec.holdout_identities):
        gallery_rows.append(np.flatnonzero((labels == ident) & (mods == 1))[0])
        probe_rows.extend(np.flatnonzero((labels == ident) & (mods == 0)))
    gal_feat = features[gallery_rows]
    gal_labels = labels[gallery_rows]

    def nn_rank1(queries, query_labels):
        hits = 0
        for q, lab in zip(queries, query_labels):
            d2 = np.sum((gal_feat - q) ** 2, axis=1)
            hits += gal_labels[int(np.argmin(d2))] == lab
        return hits / len(query_labels)

    raw = nn_rank1(features[probe_rows], labels[probe_rows])

    gal_lat = latents[gal_labels]
    hits = 0
    for row in probe_rows:
        d2 = np.sum((gal_lat - latents[labels[row]]) ** 2, axis=1)
        hits += gal_labels[int(np.argmin(d2))] == labels[row]
    return GapReport(float(raw), float(hits / len(probe_rows)))


class Batch(NamedTuple):
    features: np.ndarray
    labels: np.ndarray
    modalities: np.ndarray


def sample_batch(dataset: Dataset, p_identities: int, k_per_modality: int,
                 rng: np.random.Generator, require_both: bool = True) -> Batch:
    """Identity-balanced batch: p identities, up to k samples per modality each.

    Samples are drawn without replacement within an identity-modality cell.
    With ``require_both`` (default) only identities present in both
    modalities are eligible, which guarantees cross-modal positives exist;
    relaxed sampling also admits single-modality identities.
    """
    if p_identities <= 0 or k_per_modality <= 0:
        raise ConfigError("p_identities and k_per_modality must be positive")
    pool = (dataset.identities_with_both_modalities() if require_both
            else dataset.identities())
    if pool.size < p_identities:
        raise DataError(
            f"requested {p_identities} identities but only {pool.size} available "
            f"({'both modalities' if require_both else 'any modality'}; "
            f"dataset has {dataset.identities().size} identities)")
    chosen = rng.choice(pool, size=p_identities, replace=False)
    rows = []
    for ident in chosen:
        for m in (0, 1):
            cell = np.flatnonzero((dataset.labels == ident) & (dataset.modalities == m))
            if cell.size == 0:
                continue
            take = min(k_per_modality, cell.size)
            rows.extend(rng.choice(cell, size=take, replace=False))
    rows = np.asarray(rows, dtype=np.intp)
    return Batch(dataset.features[rows], dataset.labels[rows], dataset.modalities[rows])
