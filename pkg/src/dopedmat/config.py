"""Run configuration files: JSON round-trip, strict validation, presets."""

from __future__ import annotations

import json
from dataclasses import asdict, fields

from .lm import LayerSpec, TrainConfig


class ConfigError(ValueError):
    pass


_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)} - {"layer_specs"}
_LAYER_FIELDS = {f.name for f in fields(LayerSpec)}


def config_to_dict(cfg: TrainConfig) -> dict:
    d = asdict(cfg)
    d["layers"] = d.pop("layer_specs")
    return d


def config_from_dict(d: dict) -> TrainConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be a JSON object")
    d = dict(d)
    layers = d.pop("layers", None)
    unknown = set(d) - _TRAIN_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    specs = []
    for i, ls in enumerate(layers or []):
        bad = set(ls) - _LAYER_FIELDS
        if bad:
            raise ConfigError(f"layers[{i}]: unknown keys {sorted(bad)}")
        shapes = ls.get("shapes")
        if isinstance(shapes, list):
            shapes = tuple(shapes)
        specs.append(LayerSpec(**{**ls, "shapes": shapes}))
    try:
        cfg = TrainConfig(**d, layer_specs=specs or [LayerSpec()])
        cfg.validate()
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return cfg


def load_config(path) -> TrainConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return config_from_dict(data)


def save_config(cfg: TrainConfig, path):
    with open(path, "w") as f:
        json.dump(config_to_dict(cfg), f, indent=2, sort_keys=True)
        f.write("\n")


def _toy_base(**overrides) -> TrainConfig:
    base = dict(
        hidden_size=64, embed_size=64, num_layers=1, bptt=20, batch_size=20,
        epochs=10, lr=0.3, lr_decay=0.96, lr_decay_start_epoch=2,
        max_grad_norm=5.0, dropout=0.2, l2=1e-4, max_vocab=2000,
        valid_fraction=0.1, seed=0, dtype="float64", forget_bias=1.0,
        cmr_kind="linDec", cmr_p0=0.7, cmr_share_timesteps=False,
        prune_begin_frac=0.2, prune_end_frac=0.9, prune_every=10,
        prune_exponent=3, bcd_enabled=False, bcd_period_epochs=1,
        penalty_mode="none", penalty_coeff=1e-4,
    )
    base.update(overrides)
    return base


PRESETS = {
    # Medium-LM recipe scaled to toy dimensions, ratios preserved:
    # LR 0.3, decay 0.96, clip 5, CMR 0.7, prune window 20% -> 90% of run.
    "medium-lm-toy": lambda: TrainConfig(
        **_toy_base(),
        layer_specs=[LayerSpec(variant="kp", target_cf=20.0, doped=True)]),
    "kp-only": lambda: TrainConfig(
        **_toy_base(cmr_kind="off"),
        layer_specs=[LayerSpec(variant="kp", target_cf=20.0, doped=False)]),
    "doped-lmf": lambda: TrainConfig(
        **_toy_base(),
        layer_specs=[LayerSpec(variant="lmf", target_cf=20.0, doped=True)]),
}


def make_preset(name: str) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]()
