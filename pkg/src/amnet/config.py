"""Experiment config files: `key = value` lines under [section] headers.

Sections are model, task, optimizer, run. Every key except model.arch has
a default (see TrainConfig); unknown sections/keys and malformed values
are rejected with the offending line number. Overrides are given as
`section.key=value` and are applied after the file.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .training import PRECISIONS, TrainConfig

_TRUE = {"on", "true", "yes", "1"}
_FALSE = {"off", "false", "no", "0"}


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected on/off, got {text!r}")


# section -> key -> (TrainConfig field, parser)
SCHEMA: dict[str, dict[str, tuple[str, type | object]]] = {
    "model": {
        "arch": ("arch", str),
        "variant": ("variant", str),
        "hidden": ("hidden", int),
        "k": ("k", int),
        "router": ("router_enabled", _parse_bool),
        "reader_stats": ("reader_stats", str),
        "fw_lambda": ("fw_lambda", float),
        "fw_eta": ("fw_eta", float),
        "fw_inner_steps": ("fw_inner_steps", int),
    },
    "task": {
        "length": ("length", int),
        "train_size": ("train_size", int),
        "val_size": ("val_size", int),
        "test_size": ("test_size", int),
        "data_seed": ("data_seed", int),
    },
    "optimizer": {
        "lr": ("lr", float),
        "beta1": ("beta1", float),
        "beta2": ("beta2", float),
        "eps": ("eps", float),
        "clip_lo": ("clip_lo", float),
        "clip_hi": ("clip_hi", float),
    },
    "run": {
        "batch_size": ("batch_size", int),
        "max_epochs": ("max_epochs", int),
        "early_stop_accuracy": ("early_stop_accuracy", float),
        "init_seed": ("init_seed", int),
        "shuffle_seed": ("shuffle_seed", int),
        "precision": ("precision", str),
    },
}

REQUIRED = [("model", "arch")]


def _convert(section: str, key: str, raw: str, where: str) -> tuple[str, object]:
    try:
        keys = SCHEMA[section]
    except KeyError:
        raise ConfigError(f"{where}: unknown section [{section}] "
                          f"(valid: {', '.join(SCHEMA)})") from None
    try:
        field, parser = keys[key]
    except KeyError:
        raise ConfigError(f"{where}: unknown key {key!r} in [{section}] "
                          f"(valid: {', '.join(sorted(keys))})") from None
    try:
        return field, parser(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {section}.{key}: {exc}") from None


def parse_config(path: str | Path, overrides: list[str] | None = None) -> TrainConfig:
    """Parse a config file plus `section.key=value` overrides into a
    validated TrainConfig."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, object] = {}
    seen: set[tuple[str, str]] = set()
    section = None
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        where = f"{path}:{lineno}"
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}] "
                                  f"(valid: {', '.join(SCHEMA)})")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        field, value = _convert(section, key, raw, where)
        values[field] = value
        seen.add((section, key))

    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        field, value = _convert(section.strip(), key.strip(), raw.strip(),
                                f"override {item!r}")
        values[field] = value
        seen.add((section, key))

    for section, key in REQUIRED:
        if (section, key) not in seen:
            raise ConfigError(f"{path}: missing required key {section}.{key}")

    return TrainConfig(**values).validate()


def format_config(config: TrainConfig) -> str:
    """Canonical echo of an effective config, parseable by parse_config."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (field, parser) in keys.items():
            value = getattr(config, field)
            if parser is _parse_bool:
                value = "on" if value else "off"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
