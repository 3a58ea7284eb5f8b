"""Run configuration: one INI file with a section per stage, CLI overrides on top.

Sections are ``[synth]``, ``[camera]``, ``[detector]``, ``[spaces]``,
``[client]`` and ``[experiment]``; keys are the dataclass field names.
Tuple values are written comma-separated, booleans as true/false.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import re
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Mapping

from .analysis import SpaceConfig
from .errors import ConfigError, DomainError
from .gaze import DEFAULT_TOLERANCE_DEG, DetectorConfig
from .geometry import CameraModel
from .synthgen import SynthConfig
from .vlm import ClientConfig


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    n_trials: int = 200
    k_values: str = "0..10"
    resamples: int = 10_000
    level: float = 0.95
    min_prior: int = 10
    tolerance_deg: float = DEFAULT_TOLERANCE_DEG
    mock_failure_rate: float = 0.0

    def __post_init__(self):
        parse_k_values(self.k_values)
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.resamples < 1:
            raise ConfigError("resamples must be >= 1")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)")
        if self.tolerance_deg < 0:
            raise ConfigError("tolerance_deg must be >= 0")
        if not 0 <= self.mock_failure_rate <= 1:
            raise ConfigError("mock_failure_rate must lie in [0, 1]")


@dataclass(frozen=True)
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    spaces: SpaceConfig = field(default_factory=SpaceConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {
    "synth": SynthConfig,
    "camera": CameraModel,
    "detector": DetectorConfig,
    "spaces": SpaceConfig,
    "client": ClientConfig,
    "experiment": ExperimentConfig,
}

_K_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def parse_k_values(text: str) -> list[int]:
    """``"0..10"`` (inclusive) or a comma list such as ``"0,2,6"``."""
    m = _K_RANGE.match(text)
    try:
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            ks = list(range(lo, hi + 1))
        else:
            ks = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad k list {text!r}; use e.g. 0..10 or 0,2,6") from None
    if not ks or any(not 0 <= k <= 10 for k in ks):
        raise ConfigError(f"k values must be a non-empty subset of 0..10, got {text!r}")
    return sorted(set(ks))


def _coerce(value: Any, default: Any, key: str):
    if not isinstance(value, str):
        return value
    try:
        if isinstance(default, bool):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            parts = [p.strip() for p in value.split(",") if p.strip()]
            if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
                kind = type(default[0])
                return tuple(kind(float(p)) if kind is int else kind(p) for p in parts)
            return tuple(parts)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {type(default).__name__}") from None
    return value


def _build(cls, values: Mapping[str, Any], section: str, extra: Mapping[str, Any] | None = None):
    names = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = dict(extra or {})
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"[{section}] unknown key {key!r}; known: {', '.join(sorted(names))}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"{section}.{key}")
    try:
        return cls(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def read_config_file(path: str | PathLike) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {s: dict(parser[s]) for s in parser.sections()}
    unknown = set(out) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {', '.join(sorted(unknown))}")
    return out


def load_run_config(
    path: str | PathLike | None = None, overrides: Mapping[str, Mapping[str, Any]] | None = None
) -> RunConfig:
    """Defaults, then the config file, then ``overrides`` (typically CLI flags)."""
    sections: dict[str, dict[str, Any]] = {s: {} for s in SECTIONS}
    if path is not None:
        for s, kv in read_config_file(path).items():
            sections[s].update(kv)
    for s, kv in (overrides or {}).items():
        if s not in SECTIONS:
            raise ConfigError(f"unknown section {s!r}")
        sections[s].update({k: v for k, v in kv.items() if v is not None})
    camera = _build(CameraModel, sections["camera"], "camera")
    return RunConfig(
        synth=_build(SynthConfig, sections["synth"], "synth", {"camera": camera}),
        detector=_build(DetectorConfig, sections["detector"], "detector"),
        spaces=_build(SpaceConfig, sections["spaces"], "spaces"),
        client=_build(ClientConfig, sections["client"], "client"),
        experiment=_build(ExperimentConfig, sections["experiment"], "experiment"),
    )


def dump_config(cfg: RunConfig) -> str:
    """INI text that :func:`load_run_config` reads back to ``cfg``."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v)

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parts = {
        "synth": cfg.synth,
        "camera": cfg.synth.camera,
        "detector": cfg.detector,
        "spaces": cfg.spaces,
        "client": cfg.client,
        "experiment": cfg.experiment,
    }
    for name, obj in parts.items():
        parser[name] = {
            f.name: fmt(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not dataclasses.is_dataclass(getattr(obj, f.name))
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
