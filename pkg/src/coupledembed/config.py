"""One sectioned key=value config file drives every command.

Format: INI as read by configparser (``[section]`` headers, ``key = value``
lines, ``#`` comments). Unknown sections or keys are rejected, every key
has a default, and all validation runs at parse time so a bad config never
produces partial outputs. The single ``trainer.seed`` is the only
entropy source; consumers fork it by fixed labels.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .data import SynthSpec
from .errors import ConfigError
from .net import LayerSpec
from .ranking import RankingConfig
from .seeding import seed_for
from .trainer import TrainConfig

DEFAULTS = {
    "net": {
        "layers": "64:128:mfm, 64:32:identity",
    },
    "heads": {
        "lambda": "0.001",
        "alpha1": "1.0",
        "alpha2": "1.0",
        "mu": "1e-6",
    },
    "ranking": {
        "margin": "0.5",
        "max_triplets_per_anchor": "4",
    },
    "trainer": {
        "lambda1": "1.0",
        "lambda2_start": "0.0",
        "lambda2_end": "1.0",
        "lr_start": "0.05",
        "lr_end": "0.005",
        "momentum": "0.9",
        "weight_decay": "5e-4",
        "p_identities": "8",
        "k_per_modality": "2",
        "iterations": "3000",
        "seed": "0",
        "checkpoint_every": "0",
    },
    "data": {
        "identities": "100",
        "holdout_identities": "40",
        "samples_per_identity_per_modality": "6",
        "latent_dim": "16",
        "input_dim": "64",
        "modality_transform_scale": "1.0",
        "noise_sigma": "0.1",
    },
    "eval": {
        "far_points": "0.001, 0.01, 0.1",
        "sigma_dims": "1, 2, 4, 8, 16, 32",
    },
}


@dataclass
class Config:
    """Validated, typed view of one config file."""

    net_specs: list = field(default_factory=list)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    far_points: tuple = (0.001, 0.01, 0.1)
    sigma_dims: tuple = (1, 2, 4, 8, 16, 32)

    @property
    def seed(self) -> int:
        return self.train.seed


def _parse_layers(text: str) -> list[LayerSpec]:
    specs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise ConfigError(
                f"layer {part!r} must be input:output:activation")
        try:
            specs.append(LayerSpec(int(bits[0]), int(bits[1]), bits[2].strip()))
        except ValueError as exc:
            raise ConfigError(f"layer {part!r}: {exc}") from exc
    if not specs:
        raise ConfigError("net.layers must list at least one layer")
    return specs


def _typed(section: str, key: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}={raw!r} is not a valid {kind.__name__}") from exc


def _float_list(section: str, key: str, raw: str, kind=float) -> tuple:
    return tuple(_typed(section, key, part.strip(), kind)
                 for part in raw.split(",") if part.strip())


def load_config(path=None, seed_override: int | None = None) -> Config:
    """Parse and validate a config file; ``path=None`` means all defaults."""
    values = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in values:
                raise ConfigError(
                    f"{path}: unknown section [{section}] "
                    f"(expected one of {sorted(values)})")
            for key, raw in parser.items(section):
                if key not in values[section]:
                    raise ConfigError(
                        f"{path}: unknown key {key!r} in [{section}] "
                        f"(expected one of {sorted(values[section])})")
                values[section][key] = raw

    seed = (int(seed_override) if seed_override is not None
            else _typed("trainer", "seed", values["trainer"]["seed"], int))
    ranking = RankingConfig(
        margin=_typed("ranking", "margin", values["ranking"]["margin"], float),
        max_triplets_per_anchor=_typed(
            "ranking", "max_triplets_per_anchor",
            values["ranking"]["max_triplets_per_anchor"], int),
    )
    tr = values["trainer"]
    train = TrainConfig(
        lambda1=_typed("trainer", "lambda1", tr["lambda1"], float),
        lambda2_start=_typed("trainer", "lambda2_start", tr["lambda2_start"], float),
        lambda2_end=_typed("trainer", "lambda2_end", tr["lambda2_end"], float),
        lr_start=_typed("trainer", "lr_start", tr["lr_start"], float),
        lr_end=_typed("trainer", "lr_end", tr["lr_end"], float),
        momentum=_typed("trainer", "momentum", tr["momentum"], float),
        weight_decay=_typed("trainer", "weight_decay", tr["weight_decay"], float),
        p_identities=_typed("trainer", "p_identities", tr["p_identities"], int),
        k_per_modality=_typed("trainer", "k_per_modality", tr["k_per_modality"], int),
        iterations=_typed("trainer", "iterations", tr["iterations"], int),
        seed=seed,
        checkpoint_every=_typed("trainer", "checkpoint_every", tr["checkpoint_every"], int),
        ranking=ranking,
        lam=_typed("heads", "lambda", values["heads"]["lambda"], float),
        alpha1=_typed("heads", "alpha1", values["heads"]["alpha1"], float),
        alpha2=_typed("heads", "alpha2", values["heads"]["alpha2"], float),
        mu=_typed("heads", "mu", values["heads"]["mu"], float),
    )
    da = values["data"]
    synth = SynthSpec(
        identities=_typed("data", "identities", da["identities"], int),
        holdout_identities=_typed(
            "data", "holdout_identities", da["holdout_identities"], int),
        samples_per_identity_per_modality=_typed(
            "data", "samples_per_identity_per_modality",
            da["samples_per_identity_per_modality"], int),
        latent_dim=_typed("data", "latent_dim", da["latent_dim"], int),
        input_dim=_typed("data", "input_dim", da["input_dim"], int),
        modality_transform_scale=_typed(
            "data", "modality_transform_scale", da["modality_transform_scale"], float),
        noise_sigma=_typed("data", "noise_sigma", da["noise_sigma"], float),
        seed=seed_for(seed, "synth-data"),
    )
    far_points = _float_list("eval", "far_points", values["eval"]["far_points"])
    for fp in far_points:
        if not 0.0 <= fp <= 1.0:
            raise ConfigError(f"eval.far_points entry {fp} outside [0, 1]")
    sigma_dims = _float_list("eval", "sigma_dims", values["eval"]["sigma_dims"], int)
    for d in sigma_dims:
        if d <= 0:
            raise ConfigError(f"eval.sigma_dims entry {d} must be positive")
    return Config(
        net_specs=_parse_layers(values["net"]["layers"]),
        train=train,
        synth=synth,
        far_points=far_points,
        sigma_dims=sigma_dims,
    )
