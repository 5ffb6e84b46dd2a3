"""Plain-text pipeline configuration.

Grammar: one ``key = value`` pair per line; keys may be dotted to nest
(``sensor.contrast_threshold = 0.2``); ``#`` starts a comment; blank lines
and key order are irrelevant. Values parse as int, float, true/false, or a
bare string. The config content hash names output directories so two
different configs never silently share artifacts.
"""

from __future__ import annotations

import hashlib

from .denoiser import DenoiserSpec, TrainConfig
from .diffusion import GuidanceConfig, make_schedule
from .encode import EncoderConfig
from .events import SensorModel


def _parse_value(text: str):
    text = text.strip()
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(text: str) -> dict:
    """Parse config text into a nested dict."""
    root: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        node = root
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"line {lineno}: {key.strip()!r} nests under a scalar")
        node[parts[-1]] = _parse_value(value)
    return root


def load_config(path) -> dict:
    with open(path) as f:
        text = f.read()
    cfg = parse_config(text)
    cfg["_hash"] = config_hash(text)
    return cfg


def config_hash(text: str) -> str:
    """Hash of the semantic content (sorted flattened pairs, comments ignored)."""
    pairs = sorted(_flatten(parse_config(text)))
    digest = hashlib.sha256("\n".join(f"{k}={v}" for k, v in pairs).encode())
    return digest.hexdigest()[:12]


def _flatten(node: dict, prefix: str = ""):
    for key, value in node.items():
        name = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            yield from _flatten(value, name)
        else:
            yield name, repr(value)


def _section(cfg: dict, name: str) -> dict:
    section = cfg.get(name, {})
    if not isinstance(section, dict):
        raise ValueError(f"config section {name!r} must hold nested keys")
    return section


def sensor_from_config(cfg: dict) -> SensorModel:
    s = _section(cfg, "sensor")
    return SensorModel(
        contrast_threshold=s.get("contrast_threshold", 0.2),
        threshold_sigma=s.get("threshold_sigma", 0.0),
        background_rate=s.get("background_rate", 0.0),
        log_epsilon=s.get("log_epsilon", 1e-3),
    )


def encoder_from_config(cfg: dict) -> EncoderConfig:
    e = _section(cfg, "encoder")
    return EncoderConfig(count_cap=e.get("count_cap", 3),
                         polarity_mode=e.get("polarity_mode", "signed"))


def schedule_from_config(cfg: dict):
    s = _section(cfg, "schedule")
    return make_schedule(T=s.get("T", 50),
                         beta_start=s.get("beta_start", 1e-4),
                         beta_end=s.get("beta_end", 0.02),
                         kind=s.get("kind", "linear"))


def denoiser_spec_from_config(cfg: dict) -> DenoiserSpec:
    d = _section(cfg, "denoiser")
    sched = _section(cfg, "schedule")
    return DenoiserSpec(
        image_channels=d.get("image_channels", 3),
        control_channels=d.get("control_channels", 0),
        hidden1=d.get("hidden1", 16),
        hidden2=d.get("hidden2", 16),
        cond_dim=d.get("cond_dim", 16),
        t_dim=d.get("t_dim", 8),
        T=sched.get("T", 50),
    )


def train_config_from_config(cfg: dict) -> TrainConfig:
    t = _section(cfg, "train")
    return TrainConfig(
        batch_size=t.get("batch_size", 8),
        steps=t.get("steps", 2000),
        learning_rate=t.get("learning_rate", 1e-3),
        seed=t.get("seed", cfg.get("seed", 0)),
        cond_dropout=t.get("cond_dropout", 0.1),
    )


def guidance_from_config(cfg: dict) -> GuidanceConfig:
    g = _section(cfg, "guidance")
    return GuidanceConfig(scale=g.get("scale", 0.0),
                          uncond_prob=g.get("uncond_prob", 0.1))
