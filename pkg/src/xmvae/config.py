"""Flat ``key=value`` run configuration with ``#`` comments and command-line overrides."""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

# key -> (default, type); bools are spelled true/false
DEFAULTS: dict[str, tuple] = {
    "seed": (0, int),
    "out": ("run", str),
    "dataset": ("", str),
    "checkpoint": ("", str),
    # generate
    "n": (6000, int),
    "label_fraction": (1.0, float),
    "max_tilt_deg": (60.0, float),
    "dip_coupling": (2.0 / 3.0, float),
    "hand_distance": (400.0, float),
    "focal": (400.0, float),
    "left_fraction": (0.5, float),
    # training
    "holdout": (1000, int),
    "variant": (1, int),
    "input": ("2d", str),
    "target": ("3d", str),
    "latent_dim": (32, int),
    "hidden": ("512,512,512,512,512", str),
    "epochs": (50, int),
    "batch": (64, int),
    "lr": (1e-4, float),
    "beta": (1.0, float),
    "samples": (1, int),
    "adam_beta1": (0.9, float),
    "adam_beta2": (0.999, float),
    "adam_eps": (1e-8, float),
    "recon_mode": ("squared", str),
    "recon_units": ("mm", str),
    "handedness_mode": ("flag", str),
    "one_batch_per_pair": (False, bool),
    "mm_per_unit": (45.0, float),
    # evaluation and sweeps
    "split": ("heldout", str),
    "thresholds": ("0:50:51", str),
    "embed_count": (500, int),
    "fractions": ("0.1,0.2,0.4,0.8,1.0", str),
    "jobs": (1, int),
    # walk
    "src": ("2d", str),
    "index1": (0, int),
    "index2": (1, int),
    "steps": (11, int),
    "spherical": (False, bool),
    "plot": (True, bool),
}

_GEN = ["n", "seed", "label_fraction", "max_tilt_deg", "dip_coupling", "hand_distance", "focal", "left_fraction"]
_TRAIN = [
    "dataset", "holdout", "seed", "variant", "input", "target", "latent_dim", "hidden", "epochs", "batch",
    "lr", "beta", "samples", "adam_beta1", "adam_beta2", "adam_eps", "recon_mode", "recon_units",
    "handedness_mode", "one_batch_per_pair", "mm_per_unit",
]

COMMAND_KEYS: dict[str, list[str]] = {
    "generate": ["out"] + _GEN,
    "train": ["out"] + _TRAIN,
    "eval": ["out", "checkpoint", "dataset", "holdout", "split", "input", "target", "handedness_mode",
             "mm_per_unit", "thresholds", "embed_count"],
    "variants": ["out"] + _TRAIN + ["jobs"],
    "semisup": ["out"] + _TRAIN + ["fractions", "jobs"],
    "walk": ["out", "checkpoint", "dataset", "handedness_mode", "src", "index1", "index2", "steps",
             "spherical", "plot"],
}


def parse_text(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def _convert(key: str, raw: str, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def resolve(command: str, config_path=None, overrides=()) -> dict:
    """Defaults for ``command``, then the config file, then ``key=value`` overrides, type-checked."""
    if command not in COMMAND_KEYS:
        raise ConfigError(f"unknown command {command!r}")
    keys = COMMAND_KEYS[command]
    raw: dict[str, str] = {}
    if config_path:
        raw.update(parse_text(Path(config_path).read_text(encoding="utf-8")))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    raw.pop("command", None)
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {', '.join(unknown)}")
    cfg = {k: DEFAULTS[k][0] for k in keys}
    for k, v in raw.items():
        cfg[k] = _convert(k, v, DEFAULTS[k][1])
    return cfg


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(command: str, cfg: dict) -> str:
    lines = [f"# resolved configuration; rerun with: xmvae {command} --config <this file>", f"command={command}"]
    lines += [f"{k}={_format_value(cfg[k])}" for k in COMMAND_KEYS[command]]
    return "\n".join(lines) + "\n"


def write_config(path, command: str, cfg: dict) -> None:
    Path(path).write_text(format_config(command, cfg), encoding="utf-8")
