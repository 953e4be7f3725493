"""Training loop: combined objective, alternating updates, momentum SGD.

Each step follows a fixed alternation order:

  1. forward pass and loss parts, logged with the current coupling matrix;
  2. closed-form refresh of the coupling matrix gamma;
  3. all gradients, with the refreshed gamma;
  4. momentum-SGD update of the trunk;
  5. momentum-SGD update of the two heads.

Gradient routing: the ranking term reaches only the trunk (through the
embeddings); the heads see only the relevance term. The learning rate
decays geometrically, the ranking weight ramps linearly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .coupling import (CoupledHeads, init_heads, r1_grads, r1_value,
                       r2_value_and_grads, softmax_loss, update_gamma)
from .data import Batch, Dataset, sample_batch
from .errors import ConfigError, DataError, NumericError
from .net import (EmbeddingNet, LayerSpec, default_specs, init,
                  normalize_rows, normalize_rows_backward)
from .ranking import RankingConfig, mine_triplets, triplet_loss
from .seeding import rng_for, seed_for


@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs besides the data and the net shape."""

    lambda1: float = 1.0
    lambda2_start: float = 0.0
    lambda2_end: float = 1.0
    lr_start: float = 0.05
    lr_end: float = 0.005
    momentum: float = 0.9
    weight_decay: float = 5e-4
    p_identities: int = 8
    k_per_modality: int = 2
    iterations: int = 3000
    seed: int = 0
    checkpoint_every: int = 0
    ranking: RankingConfig = field(default_factory=RankingConfig)
    lam: float = 0.001
    alpha1: float = 1.0
    alpha2: float = 1.0
    mu: float = 1e-6

    def __post_init__(self):
        if self.lr_start <= 0 or self.lr_end <= 0:
            raise ConfigError("learning rates must be positive")
        if self.lr_end > self.lr_start:
            raise ConfigError("lr_end must not exceed lr_start")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if min(self.lambda1, self.lambda2_start, self.lambda2_end) < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.p_identities <= 0 or self.k_per_modality <= 0:
            raise ConfigError("batch composition counts must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be non-negative")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be non-negative")
        if self.mu <= 0:
            raise ConfigError("mu must be positive for training")
        if self.lam < 0 or self.alpha1 < 0 or self.alpha2 < 0:
            raise ConfigError("lam, alpha1, alpha2 must be non-negative")

    @property
    def batch_size(self) -> int:
        return 2 * self.p_identities * self.k_per_modality


@dataclass
class TrainState:
    """Mutable training state: parameters, momentum buffers, iteration count."""

    net: EmbeddingNet
    heads: CoupledHeads
    classes: np.ndarray            # sorted unique labels; class id = position
    vel_weights: list
    vel_biases: list
    vel_w_n: np.ndarray
    vel_w_v: np.ndarray
    iteration: int = 0


class LogRecord(NamedTuple):
    iteration: int
    loss: float
    relevance: float
    softmax: float
    r1: float
    r2: float
    ranking: float
    triplets: int
    lr: float
    lambda2: float


def init_state(net: EmbeddingNet, heads: CoupledHeads, classes) -> TrainState:
    classes = np.asarray(sorted(set(int(c) for c in np.asarray(classes).ravel())),
                         dtype=np.intp)
    if classes.size != heads.num_classes:
        raise ConfigError(
            f"heads expect {heads.num_classes} classes but got {classes.size} labels")
    return TrainState(
        net=net, heads=heads, classes=classes,
        vel_weights=[np.zeros_like(w) for w in net.weights],
        vel_biases=[np.zeros_like(b) for b in net.biases],
        vel_w_n=np.zeros_like(heads.w_n),
        vel_w_v=np.zeros_like(heads.w_v),
    )


def _class_indices(state: TrainState, labels) -> np.ndarray:
    labels = np.asarray(labels)
    pos = np.searchsorted(state.classes, labels)
    bad = (pos >= state.classes.size) | (state.classes[np.minimum(pos, state.classes.size - 1)] != labels)
    if np.any(bad):
        raise DataError(f"labels {np.unique(labels[bad]).tolist()} were not in the training set")
    return pos


def _ranking_term(emb, labels, modalities, ranking: RankingConfig):
    """Mined triplet loss on unit embeddings, gradient w.r.t. raw embeddings."""
    unit, norms = normalize_rows(emb)
    triplets = mine_triplets(unit, labels, modalities, ranking)
    loss, d_unit = triplet_loss(unit, triplets, ranking.margin)
    return loss, normalize_rows_backward(unit, norms, d_unit), len(triplets)


def combined_loss(state: TrainState, batch: Batch, config: TrainConfig,
                  lambda2: float | None = None):
    """lambda1 * relevance + lambda2 * ranking on one batch.

    Ranking is computed on triplets mined from the batch's current
    embeddings. Returns (loss, (relevance, ranking)). A single-modality
    batch with lambda2 > 0 warns and contributes no ranking.
    """
    if lambda2 is None:
        lambda2 = schedule(state.iteration, config)[1]
    emb, _ = state.net.forward(batch.features)
    cls = _class_indices(state, batch.labels)
    sm_loss, _, _, _ = softmax_loss(state.heads, emb, cls, batch.modalities)
    relevance = (sm_loss + state.heads.alpha1 * r1_value(state.heads)
                 + state.heads.alpha2 * r2_value_and_grads(state.heads)[0])
    rank_part = 0.0
    if lambda2 > 0:
        if np.unique(batch.modalities).size < 2:
            warnings.warn("batch holds a single modality; ranking part is 0",
                          stacklevel=2)
        else:
            rank_part, _, _ = _ranking_term(emb, batch.labels, batch.modalities,
                                            config.ranking)
    return config.lambda1 * relevance + lambda2 * rank_part, (relevance, rank_part)


def schedule(iteration: int, config: TrainConfig) -> tuple[float, float]:
    """(learning rate, ranking weight) at an iteration.

    The learning rate interpolates geometrically from lr_start to lr_end
    over the run; the ranking weight interpolates linearly.
    """
    if iteration < 0 or iteration > config.iterations:
        raise ConfigError(f"iteration {iteration} outside [0, {config.iterations}]")
    frac = min(1.0, iteration / max(config.iterations - 1, 1))
    lr = config.lr_start * (config.lr_end / config.lr_start) ** frac
    lam2 = config.lambda2_start + frac * (config.lambda2_end - config.lambda2_start)
    return lr, lam2


def _sgd(param, grad, vel, lr, momentum, weight_decay):
    vel *= momentum
    vel += grad + weight_decay * param
    param -= lr * vel


def train_step(state: TrainState, batch: Batch, config: TrainConfig) -> LogRecord:
    """One alternating update; mutates ``state`` and returns the log record.

    The logged loss parts are evaluated before the gamma refresh; all
    gradients are evaluated after it.
    """
    lr, lambda2 = schedule(state.iteration, config)

    # (1) forward and loss parts with the current gamma
    emb, tape = state.net.forward(batch.features)
    cls = _class_indices(state, batch.labels)
    heads = state.heads
    sm_loss, d_sm_n, d_sm_v, d_emb_sm = softmax_loss(heads, emb, cls, batch.modalities)
    r1_before = r1_value(heads)
    r2_val, g2_n, g2_v = r2_value_and_grads(heads)

    rank_loss, d_emb_rank, n_triplets = 0.0, np.zeros_like(emb), 0
    if lambda2 > 0:
        if np.unique(batch.modalities).size < 2:
            warnings.warn("batch holds a single modality; ranking part is 0",
                          stacklevel=2)
        else:
            rank_loss, d_emb_rank, n_triplets = _ranking_term(
                emb, batch.labels, batch.modalities, config.ranking)

    relevance = sm_loss + heads.alpha1 * r1_before + heads.alpha2 * r2_val
    loss = config.lambda1 * relevance + lambda2 * rank_loss
    if not np.isfinite(loss):
        raise NumericError(
            f"non-finite loss at iteration {state.iteration}: softmax={sm_loss}, "
            f"r1={r1_before}, r2={r2_val}, ranking={rank_loss}")

    # (2) closed-form gamma refresh, (3) gradients with the new gamma
    update_gamma(heads)
    g1_n, g1_v = r1_grads(heads)
    d_w_n = config.lambda1 * (d_sm_n + heads.alpha1 * g1_n + heads.alpha2 * g2_n)
    d_w_v = config.lambda1 * (d_sm_v + heads.alpha1 * g1_v + heads.alpha2 * g2_v)
    d_emb = config.lambda1 * d_emb_sm + lambda2 * d_emb_rank
    param_grads, _ = state.net.backward(tape, d_emb)

    # (4) trunk update, then (5) head update
    for (dw, db), w, b, vw, vb in zip(param_grads, state.net.weights,
                                      state.net.biases, state.vel_weights,
                                      state.vel_biases):
        _sgd(w, dw, vw, lr, config.momentum, config.weight_decay)
        _sgd(b, db, vb, lr, config.momentum, config.weight_decay)
    _sgd(heads.w_n, d_w_n, state.vel_w_n, lr, config.momentum, config.weight_decay)
    _sgd(heads.w_v, d_w_v, state.vel_w_v, lr, config.momentum, config.weight_decay)

    record = LogRecord(state.iteration, float(loss), float(relevance),
                       float(sm_loss), float(r1_before), float(r2_val),
                       float(rank_loss), n_triplets, lr, lambda2)
    state.iteration += 1
    return record


def fit(dataset: Dataset, config: TrainConfig,
        specs: list[LayerSpec] | None = None,
        state: TrainState | None = None,
        checkpoint_hook=None) -> tuple[TrainState, list[LogRecord]]:
    """Run the full training loop over identity-balanced batches.

    ``specs`` defaults to the standard trunk sized to the dataset;
    ``state`` may resume from an existing checkpointed state.
    ``checkpoint_hook(state, iteration)`` fires every
    ``config.checkpoint_every`` iterations when set. Deterministic given
    (dataset, config, specs).
    """
    if len(dataset) == 0:
        raise DataError("cannot fit on an empty dataset")
    if np.unique(dataset.modalities).size < 2:
        raise DataError("training data must contain both modalities")
    if state is None:
        if specs is None:
            specs = default_specs(input_dim=dataset.feature_dim)
        if specs[0].input_dim != dataset.feature_dim:
            raise ConfigError(
                f"net expects input width {specs[0].input_dim} but data has "
                f"{dataset.feature_dim}")
        classes = np.unique(dataset.labels)
        net = init(specs, seed_for(config.seed, "net-init"))
        heads = init_heads(net.embedding_dim, classes.size,
                           seed_for(config.seed, "heads-init"),
                           lam=config.lam, alpha1=config.alpha1,
                           alpha2=config.alpha2, mu=config.mu)
        state = init_state(net, heads, classes)
    batch_rng = rng_for(config.seed, "batches")
    log: list[LogRecord] = []
    for _ in range(config.iterations):
        batch = sample_batch(dataset, config.p_identities, config.k_per_modality,
                             batch_rng)
        log.append(train_step(state, batch, config))
        if (checkpoint_hook is not None and config.checkpoint_every
                and state.iteration % config.checkpoint_every == 0):
            checkpoint_hook(state, state.iteration)
    return state, log


_LOG_COLUMNS = ("iteration", "loss", "relevance", "softmax", "r1", "r2",
                "ranking", "triplets", "lr", "lambda2")


def write_log(log: list[LogRecord], path) -> None:
    """Tab-separated training log, one record per line, header first.

    Floats are written with shortest round-trip precision so identical runs
    produce byte-identical logs.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_LOG_COLUMNS) + "\n")
        for rec in log:
            cells = [str(rec.iteration)] + [repr(float(v)) for v in rec[1:7]]
            cells += [str(rec.triplets), repr(float(rec.lr)), repr(float(rec.lambda2))]
            fh.write("\t".join(cells) + "\n")
