"""Flat ``key = value`` hyperparameter config files.

Keys are exactly the HyperParams field names (per-group lambda_* and
gamma_* plus D, beta, num_bins, max_iter, lr_decay, eta_P/W/Z, init_mean,
init_std, seed, snapshot_best, lambda_t).  Unknown keys are errors, never
silently ignored.
"""

from __future__ import annotations

from dataclasses import fields, replace

from aspectmf.model import HyperParams


class ConfigError(Exception):
    """Raised for unknown keys or unparseable values in a config file."""


_FIELD_TYPES = {f.name: f.type for f in fields(HyperParams)}


def _parse_value(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    if ftype == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean value {raw!r} for key {key!r}")
    try:
        if ftype == "int":
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {raw!r} for key {key!r}") from exc


def parse_config_text(text: str, base: HyperParams | None = None) -> HyperParams:
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        overrides[key] = _parse_value(key, value)
    hyper = replace(base, **overrides) if base is not None else HyperParams(**overrides)
    hyper.validate()
    return hyper


def load_config(path, base: HyperParams | None = None) -> HyperParams:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base)


def save_config(hyper: HyperParams, path):
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(HyperParams):
            value = getattr(hyper, f.name)
            if isinstance(value, bool):
                value = str(value).lower()
            fh.write(f"{f.name} = {value}\n")
