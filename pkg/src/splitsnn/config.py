"""Experiment configuration: JSON parsing, defaults, canonical hashing.

A config file is one JSON object with optional sections ``dataset``,
``model``, ``channel_train``, ``channel_eval``, ``training``,
``evaluation``, ``ber``, and a top-level ``seed``. Unknown keys are
rejected. dB-valued channel fields carry a ``_db`` suffix and are
converted to linear factors exactly once, here.

The config hash is the SHA-256 of the canonical JSON (defaults applied,
keys sorted), so field order never matters and any semantically
meaningful change shows up.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .channel import LinkParams
from .events import DvsConfig
from .pipeline import ChannelRandomization, TrainSettings
from .snn import DecoderConfig, EncoderConfig, LifConfig
from .autodiff import SurrogateSpec
from .validation import require

_DEFAULTS = {
    "seed": 0,
    "dataset": {
        "classes": 4,
        "per_class": 24,
        "crop_height": 32,
        "crop_width": 32,
        "shift": 1,
        "axis": "x",
        "timesteps": 5,
        "contrast_threshold": 0.1,
    },
    "model": {
        "patch": 8,
        "token_dim": 32,
        "encoder_layers": 2,
        "lth_expansion": 2,
        "embed_dim": 32,
        "heads": 4,
        "decoder_layers": 2,
        "lif_decay": 0.9,
        "lif_threshold": 1.0,
        "surrogate_kind": "boxcar",
        "surrogate_param": 1.0,
    },
    "channel_train": {
        "responsivity": [0.6, 0.9],
        "amplifier_gain_db": [20.0, 40.0],
        "free_space_loss_db": [10.0, 15.0],
        "pointing_sensitivity": 1e6,
        "pointing_variance": [0.0, 5e-7],
        "noise_floor": 1e-12,
        "signal_noise_factor": 0.0,
        "on_power": 1e-3,
    },
    "channel_eval": {
        "responsivity": 0.8,
        "amplifier_gain_db": 30.0,
        "free_space_loss_db": 14.3,
        "pointing_sensitivity": 1e6,
        "pointing_variance": 0.0,
        "noise_floor": 1e-12,
        "signal_noise_factor": 0.0,
        "on_power": 1e-3,
    },
    "training": {
        "epochs": 30,
        "batch_size": 16,
        "learning_rate": 1e-3,
        "receive_mode": "soft",
    },
    "evaluation": {
        "sigma2g_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        "seeds": 3,
        "mode": None,  # None -> same as training receive_mode
    },
    "ber": {
        "sigma2g_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
        "noise_floor_grid": [1e-12, 2.5e-11, 1e-10],
        "n_bits": 200000,
    },
}


def _merge_section(name, defaults, overrides):
    unknown = set(overrides) - set(defaults)
    require(not unknown,
            f"unknown keys in config section {name!r}: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(overrides)
    return merged


def normalize_config(raw: dict) -> dict:
    """Apply defaults and reject unknown keys; returns plain JSON data."""
    unknown = set(raw) - set(_DEFAULTS)
    require(not unknown, f"unknown top-level config keys: {sorted(unknown)}")
    out = {"seed": int(raw.get("seed", _DEFAULTS["seed"]))}
    for section, defaults in _DEFAULTS.items():
        if section == "seed":
            continue
        out[section] = _merge_section(section, defaults,
                                      raw.get(section, {}))
    require(len(out["evaluation"]["sigma2g_grid"]) > 0,
            "evaluation sigma2g_grid must be non-empty")
    require(all(v >= 0 for v in out["evaluation"]["sigma2g_grid"]),
            "sigma2g grid values must be >= 0")
    return out


def config_hash(normalized: dict) -> str:
    canonical = json.dumps(normalized, sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view of a normalized config."""

    seed: int
    dvs: DvsConfig
    classes: int
    per_class: int
    encoder: EncoderConfig
    decoder: DecoderConfig
    lif: LifConfig
    surrogate: SurrogateSpec
    channel_train: ChannelRandomization
    channel_eval: LinkParams
    training: TrainSettings
    sigma2g_grid: tuple
    eval_seeds: int
    eval_mode: str
    ber_sigma2g_grid: tuple
    ber_noise_floor_grid: tuple
    ber_n_bits: int
    raw: dict = field(repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def parse_config(raw: dict) -> ExperimentConfig:
    norm = normalize_config(raw)
    ds, model = norm["dataset"], norm["model"]
    dvs = DvsConfig(
        contrast_threshold=ds["contrast_threshold"],
        crop_height=ds["crop_height"], crop_width=ds["crop_width"],
        shift=ds["shift"], axis=ds["axis"], timesteps=ds["timesteps"])
    encoder = EncoderConfig(
        height=ds["crop_height"], width=ds["crop_width"],
        patch=model["patch"], token_dim=model["token_dim"],
        layers=model["encoder_layers"], timesteps=ds["timesteps"],
        lth_expansion=model["lth_expansion"])
    decoder = DecoderConfig(
        embed_dim=model["embed_dim"], heads=model["heads"],
        layers=model["decoder_layers"], classes=ds["classes"])
    ct = norm["channel_train"]
    channel_train = ChannelRandomization(
        responsivity=tuple(ct["responsivity"]),
        amplifier_gain_db=tuple(ct["amplifier_gain_db"]),
        free_space_loss_db=tuple(ct["free_space_loss_db"]),
        pointing_sensitivity=ct["pointing_sensitivity"],
        pointing_variance=tuple(ct["pointing_variance"]),
        noise_floor=ct["noise_floor"],
        signal_noise_factor=ct["signal_noise_factor"],
        on_power=ct["on_power"])
    channel_eval = LinkParams.from_config(norm["channel_eval"])
    tr = norm["training"]
    training = TrainSettings(
        epochs=tr["epochs"], batch_size=tr["batch_size"],
        learning_rate=tr["learning_rate"],
        receive_mode=tr["receive_mode"])
    ev = norm["evaluation"]
    return ExperimentConfig(
        seed=norm["seed"], dvs=dvs,
        classes=ds["classes"], per_class=ds["per_class"],
        encoder=encoder, decoder=decoder,
        lif=LifConfig(model["lif_decay"], model["lif_threshold"]),
        surrogate=SurrogateSpec(model["surrogate_kind"],
                                model["surrogate_param"]),
        channel_train=channel_train, channel_eval=channel_eval,
        training=training,
        sigma2g_grid=tuple(ev["sigma2g_grid"]),
        eval_seeds=int(ev["seeds"]),
        eval_mode=ev["mode"] or tr["receive_mode"],
        ber_sigma2g_grid=tuple(norm["ber"]["sigma2g_grid"]),
        ber_noise_floor_grid=tuple(norm["ber"]["noise_floor_grid"]),
        ber_n_bits=int(norm["ber"]["n_bits"]),
        raw=norm)


def load_config(path, seed_override=None) -> ExperimentConfig:
    with open(Path(path), "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if seed_override is not None:
        raw["seed"] = int(seed_override)
    return parse_config(raw)


def default_config() -> dict:
    """A complete config dict with all defaults (for docs and tests)."""
    return normalize_config({})
