"""Shared embedding trunk: a small stack of affine layers with nonlinearities.

One trunk serves both modalities; there are no per-modality trunk
parameters anywhere. Backward passes are written out by hand against a
forward tape, float64 throughout so gradient checks hold at 1e-4.

Activations:
  * ``relu``: elementwise max(x, 0).
  * ``mfm``: max-feature-map; pre-activation of width 2h is split into two
    halves that compete elementwise, output width h.
  * ``identity``: pass-through (use for the final embedding layer).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, NumericError

ACTIVATIONS = ("relu", "mfm", "identity")


@dataclass(frozen=True)
class LayerSpec:
    """One affine layer: input width, pre-activation width, nonlinearity."""

    input_dim: int
    output_dim: int
    activation: str = "identity"

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ConfigError(
                f"layer dims must be positive, got {self.input_dim}->{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")
        if self.activation == "mfm" and self.output_dim % 2 != 0:
            raise ConfigError(
                f"mfm needs an even pre-activation width, got {self.output_dim}")

    @property
    def out_width(self) -> int:
        """Post-activation width (mfm halves the affine output)."""
        return self.output_dim // 2 if self.activation == "mfm" else self.output_dim


class ForwardTape(NamedTuple):
    """Per-layer intermediates from one forward pass, consumed by backward."""

    layer_inputs: list  # activation fed into each layer; [0] is the batch input
    pre_acts: list      # affine outputs before the nonlinearity


class EmbeddingNet:
    """Affine-layer stack mapping input vectors to m-dimensional embeddings."""

    def __init__(self, specs: Sequence[LayerSpec], weights, biases):
        if not specs:
            raise ConfigError("EmbeddingNet needs at least one layer")
        specs = list(specs)
        for i in range(1, len(specs)):
            if specs[i].input_dim != specs[i - 1].out_width:
                raise ConfigError(
                    f"layer {i} input dim {specs[i].input_dim} does not chain from "
                    f"layer {i - 1} output width {specs[i - 1].out_width}")
        self.specs = specs
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        for i, (spec, w, b) in enumerate(zip(specs, self.weights, self.biases)):
            if w.shape != (spec.input_dim, spec.output_dim):
                raise ConfigError(
                    f"layer {i} weight shape {w.shape} != {(spec.input_dim, spec.output_dim)}")
            if b.shape != (spec.output_dim,):
                raise ConfigError(
                    f"layer {i} bias shape {b.shape} != {(spec.output_dim,)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError(f"layer {i} has non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def embedding_dim(self) -> int:
        return self.specs[-1].out_width

    def forward(self, inputs) -> tuple[np.ndarray, ForwardTape]:
        """Map a batch (B, input_dim) to embeddings (B, embedding_dim)."""
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim != 2:
            raise NumericError(f"batch must be 2-D, got shape {x.shape}")
        layer_inputs, pre_acts = [], []
        for i, spec in enumerate(self.specs):
            if x.shape[1] != spec.input_dim:
                raise NumericError(
                    f"layer {i} expects width {spec.input_dim}, got {x.shape[1]}")
            layer_inputs.append(x)
            z = x @ self.weights[i] + self.biases[i]
            pre_acts.append(z)
            x = _apply_activation(spec.activation, z)
        return x, ForwardTape(layer_inputs, pre_acts)

    def backward(self, tape: ForwardTape, grad_embeddings):
        """Backpropagate d(loss)/d(embeddings) through the tape.

        Returns ``(param_grads, grad_inputs)`` where param_grads is a list of
        (dW, db) pairs aligned with the layers.
        """
        if len(tape.layer_inputs) != len(self.specs):
            raise NumericError("tape does not match this net (layer count)")
        g = np.asarray(grad_embeddings, dtype=np.float64)
        if g.shape != (tape.layer_inputs[0].shape[0], self.embedding_dim):
            raise NumericError(
                f"grad_embeddings shape {g.shape} does not match tape "
                f"({tape.layer_inputs[0].shape[0]}, {self.embedding_dim})")
        param_grads = [None] * len(self.specs)
        for i in range(len(self.specs) - 1, -1, -1):
            spec = self.specs[i]
            z = tape.pre_acts[i]
            if z.shape != (tape.layer_inputs[i].shape[0], spec.output_dim):
                raise NumericError(f"tape is stale at layer {i} (shape mismatch)")
            gz = _activation_backward(spec.activation, z, g)
            x = tape.layer_inputs[i]
            param_grads[i] = (x.T @ gz, gz.sum(axis=0))
            g = gz @ self.weights[i].T
        return param_grads, g


def _apply_activation(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    half = z.shape[1] // 2
    return np.maximum(z[:, :half], z[:, half:])


def _activation_backward(kind: str, z: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    if kind == "identity":
        return grad_out
    if kind == "relu":
        # subgradient 0 at the kink
        return grad_out * (z > 0.0)
    half = z.shape[1] // 2
    left_wins = z[:, :half] >= z[:, half:]  # ties route to the left half
    gz = np.zeros_like(z)
    gz[:, :half] = grad_out * left_wins
    gz[:, half:] = grad_out * ~left_wins
    return gz


def init(specs: Sequence[LayerSpec], seed: int) -> EmbeddingNet:
    """Build a net with Xavier-uniform weights and zero biases.

    Reproducible: the same seed yields bit-identical parameters.
    """
    if not specs:
        raise ConfigError("cannot init a net from an empty spec list")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return EmbeddingNet(specs, weights, biases)


def default_specs(input_dim: int = 64, hidden_dim: int = 128,
                  embedding_dim: int = 32) -> list[LayerSpec]:
    """Default trunk: input -> mfm(hidden) -> embedding."""
    return [
        LayerSpec(input_dim, hidden_dim, "mfm"),
        LayerSpec(hidden_dim // 2, embedding_dim, "identity"),
    ]


def normalize_rows(x, floor: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Scale each row to unit length; returns (unit rows, row norms).

    Norms below ``floor`` are clamped so the output stays finite; such rows
    are effectively unnormalized noise and should not occur in practice.
    """
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    safe = np.maximum(norms, floor)
    return x / safe[:, None], norms


def normalize_rows_backward(unit, norms, grad_unit, floor: float = 1e-12) -> np.ndarray:
    """Backward of normalize_rows: d(loss)/dx from d(loss)/d(unit rows)."""
    safe = np.maximum(norms, floor)[:, None]
    inner = np.sum(unit * grad_unit, axis=1, keepdims=True)
    grad = (grad_unit - unit * inner) / safe
    # clamped rows are plain scalings, no projection term
    clamped = norms < floor
    if np.any(clamped):
        grad[clamped] = grad_unit[clamped] / floor
    return grad
