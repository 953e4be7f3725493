"""Command-line surface: gen-data, train, eval, diagnose.

Every command reads the same config file (all keys optional, documented
defaults) and is deterministic given (config, seed, inputs). Exit codes:
0 success, 2 config error, 3 data error, 4 numeric error, 5 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import checkpoint as ckpt
from .config import Config, load_config
from .coupling import correlation_matrix
from .data import generate, load_dataset, modality_gap
from .errors import ConfigError, DataError, NumericError
from .evaluate import (EvalReport, evaluate_retrieval, save_report,
                       variance_analysis, variance_curve)
from .trainer import fit, init_state, write_log

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_IO = 5


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    split = generate(cfg.synth)
    gap = modality_gap(cfg.synth)
    os.makedirs(args.out, exist_ok=True)
    split.train.save(os.path.join(args.out, "train.txt"))
    split.gallery.save(os.path.join(args.out, "gallery.txt"))
    split.probe.save(os.path.join(args.out, "probe.txt"))
    manifest = [
        f"identities {cfg.synth.identities}",
        f"holdout_identities {cfg.synth.holdout_identities}",
        f"samples_per_identity_per_modality {cfg.synth.samples_per_identity_per_modality}",
        f"latent_dim {cfg.synth.latent_dim}",
        f"input_dim {cfg.synth.input_dim}",
        f"modality_transform_scale {repr(cfg.synth.modality_transform_scale)}",
        f"noise_sigma {repr(cfg.synth.noise_sigma)}",
        f"seed {cfg.seed}",
        f"derived_data_seed {cfg.synth.seed}",
        f"gap_raw_rank1 {repr(gap.raw_rank1)}",
        f"gap_latent_rank1 {repr(gap.latent_rank1)}",
        f"train_rows {len(split.train)}",
        f"gallery_rows {len(split.gallery)}",
        f"probe_rows {len(split.probe)}",
    ]
    with open(os.path.join(args.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"wrote train/gallery/probe + manifest to {args.out} "
          f"(raw-input rank1 {gap.raw_rank1:.3f}, latent rank1 {gap.latent_rank1:.3f})")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    train_path = os.path.join(args.data, "train.txt")
    dataset = load_dataset(train_path)
    state = None
    if args.checkpoint:
        net, heads = ckpt.load_checkpoint(args.checkpoint)
        state = init_state(net, heads, np.unique(dataset.labels))
    os.makedirs(args.out, exist_ok=True)

    def hook(st, iteration):
        ckpt.save_checkpoint(
            os.path.join(args.out, f"checkpoint_iter{iteration}.npz"),
            st.net, st.heads)

    state, log = fit(dataset, cfg.train, specs=cfg.net_specs, state=state,
                     checkpoint_hook=hook)
    ckpt.save_checkpoint(os.path.join(args.out, "checkpoint.npz"),
                         state.net, state.heads)
    write_log(log, os.path.join(args.out, "train_log.tsv"))
    last = log[-1].loss if log else float("nan")
    print(f"trained {len(log)} iterations; final loss {last}; "
          f"checkpoint + log in {args.out}")
    return EXIT_OK


def _embed(net, dataset):
    emb, _ = net.forward(dataset.features)
    return emb


def _cmd_eval(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    net, _ = ckpt.load_checkpoint(args.checkpoint)
    gallery = load_dataset(args.gallery)
    probe = load_dataset(args.probe)
    if len(probe) == 0:
        raise DataError(f"{args.probe}: probe set is empty")
    if len(gallery) == 0:
        raise DataError(f"{args.gallery}: gallery set is empty")
    for name, ds in (("gallery", gallery), ("probe", probe)):
        if ds.feature_dim != net.input_dim:
            raise DataError(
                f"{name} feature width {ds.feature_dim} does not match "
                f"net input width {net.input_dim}")
    report = evaluate_retrieval(_embed(net, probe), probe.labels,
                                _embed(net, gallery), gallery.labels,
                                far_points=cfg.far_points)
    os.makedirs(args.out, exist_ok=True)
    files = save_report(report, args.out)
    print(f"rank1 {report.rank1:.4f}; wrote {', '.join(files)} to {args.out}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    net, heads = ckpt.load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if dataset.feature_dim != net.input_dim:
        raise DataError(
            f"dataset feature width {dataset.feature_dim} does not match "
            f"net input width {net.input_dim}")
    emb = _embed(net, dataset)
    dims = [d for d in cfg.sigma_dims if d <= net.embedding_dim]
    curves = variance_curve(emb, dataset.labels, dims)
    intra, inter = variance_analysis(emb, dataset.labels)
    corr = correlation_matrix(heads)
    c = heads.num_classes
    cross_block = np.array([corr[i, c + i] for i in range(c)])
    os.makedirs(args.out, exist_ok=True)
    report = EvalReport(rank1=float("nan"), roc=np.zeros((0, 2)), vr_at_far={},
                        sigma_curves=curves, correlation=corr)
    with open(os.path.join(args.out, "diagnose.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"sigma_intra {repr(intra)}\n")
        fh.write(f"sigma_inter {repr(inter)}\n")
        fh.write(f"cross_head_correlation_mean {repr(float(cross_block.mean()))}\n")
    from .evaluate import _write_csv
    _write_csv(os.path.join(args.out, "sigma_curves.csv"),
               ("dim", "sigma_intra", "sigma_inter"), curves)
    _write_csv(os.path.join(args.out, "correlation.csv"),
               tuple(f"c{i}" for i in range(corr.shape[1])), corr)
    print(f"sigma_intra {intra:.5f}, sigma_inter {inter:.5f}, "
          f"mean same-class cross-head correlation {cross_block.mean():.4f}; "
          f"wrote diagnostics to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coupledembed",
        description="Cross-modal embedding training with coupled classifier heads.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--config", default=None,
                       help="config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override trainer.seed from the config")
        if checkpoint:
            p.add_argument("--checkpoint", required=checkpoint is True,
                           help="checkpoint .npz path")

    p = sub.add_parser("gen-data", help="generate a synthetic two-modality split")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train on a generated or loaded dataset")
    common(p)
    p.add_argument("--data", required=True, help="directory containing train.txt")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="rank-1 / ROC / VR@FAR of a checkpoint")
    common(p, checkpoint=True)
    p.add_argument("--gallery", required=True, help="gallery dataset file")
    p.add_argument("--probe", required=True, help="probe dataset file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("diagnose", help="variance curves and head correlations")
    common(p, checkpoint=True)
    p.add_argument("--data", required=True, help="dataset file to embed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
