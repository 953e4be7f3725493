"""Checkpoint format: one .npz holding the trunk, the heads, and metadata.

Layout (format tag ``coupledembed-checkpoint`` version 1):

  * ``meta``: uint8 bytes of a JSON object with the format tag, version,
    layer activations/dims, and the head scalars (lam, alpha1, alpha2, mu);
  * ``layer<i>_w`` / ``layer<i>_b``: float64 parameters per layer;
  * ``w_n``, ``w_v``, ``gamma``: the coupled heads.

float64 arrays round-trip bit-exactly through npz, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import zipfile

import numpy as np

from .coupling import CoupledHeads
from .errors import DataError
from .net import EmbeddingNet, LayerSpec

_FORMAT = "coupledembed-checkpoint"
_VERSION = 1


def save_checkpoint(path, net: EmbeddingNet, heads: CoupledHeads) -> None:
    meta = {
        "format": _FORMAT,
        "version": _VERSION,
        "layers": [
            {"input_dim": s.input_dim, "output_dim": s.output_dim,
             "activation": s.activation}
            for s in net.specs
        ],
        "heads": {"lam": heads.lam, "alpha1": heads.alpha1,
                  "alpha2": heads.alpha2, "mu": heads.mu},
    }
    arrays = {
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"),
                              dtype=np.uint8),
        "w_n": heads.w_n, "w_v": heads.w_v, "gamma": heads.gamma,
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"layer{i}_w"] = w
        arrays[f"layer{i}_b"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[EmbeddingNet, CoupledHeads]:
    # missing files propagate as OSError (an I/O failure); corrupt content
    # is a data failure
    try:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
    except (ValueError, zipfile.BadZipFile, EOFError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in arrays:
        raise DataError(f"{path} is not a checkpoint (missing meta)")
    try:
        meta = json.loads(bytes(arrays["meta"]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path} has a corrupt meta block: {exc}") from exc
    if meta.get("format") != _FORMAT:
        raise DataError(f"{path} has format tag {meta.get('format')!r}")
    if meta.get("version") != _VERSION:
        raise DataError(f"{path} is version {meta.get('version')}, expected {_VERSION}")
    specs = [LayerSpec(d["input_dim"], d["output_dim"], d["activation"])
             for d in meta["layers"]]
    try:
        weights = [arrays[f"layer{i}_w"] for i in range(len(specs))]
        biases = [arrays[f"layer{i}_b"] for i in range(len(specs))]
        hm = meta["heads"]
        net = EmbeddingNet(specs, weights, biases)
        heads = CoupledHeads(arrays["w_n"], arrays["w_v"], arrays["gamma"],
                             lam=hm["lam"], alpha1=hm["alpha1"],
                             alpha2=hm["alpha2"], mu=hm["mu"])
    except KeyError as exc:
        raise DataError(f"{path} is missing array {exc}") from exc
    return net, heads
