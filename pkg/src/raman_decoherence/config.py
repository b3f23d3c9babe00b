"""Run configuration: a flat INI file with typed, range-checked keys.

Every key has a default, so an empty file is a valid configuration. Floats
are re-emitted with ``repr`` so that ``dumps(loads(text))`` is a fixed
point and values survive the round trip bit for bit.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from typing import Any, Callable

from .collisions import D1_DECAY_RATE, CollisionParams, TrajectoryConfig, collision_rate_from_pressure
from .counting import CountLink
from .errors import InvalidParameterError, StabilityError
from .fitting import DEFAULT_FREE, INTENSITY_PARAMETERS
from .lineshape import EtalonConfig, FrequencyGrid
from .scan import AnalysisTemplate, ScanConfig
from .spectrum import ChannelModel, default_paper_model


class ConfigError(ValueError):
    """A configuration value is unknown, malformed or out of range."""


@dataclass(frozen=True)
class Field:
    kind: str  # float, int, bool, str, list, float_or_auto
    default: Any
    check: Callable[[Any], bool] | None = None
    constraint: str = ""


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


SCHEMA: dict[str, dict[str, Field]] = {
    "etalon": {
        "fsr": Field("float", 5.0, _pos, "must be > 0 (GHz)"),
        "fwhm": Field("float", 0.48, _pos, "must be > 0 and < fsr (GHz)"),
    },
    "channel": {
        "write_detuning": Field("float", 0.8, _pos, "must be > 0 (GHz)"),
        "coherent_amplitude": Field("float", 0.05, _nonneg, "must be >= 0 (counts/pulse)"),
        "fluorescence_amplitude": Field("float", 0.05, _nonneg, "must be >= 0 (counts/pulse)"),
        "fluorescence_lower_amplitude": Field("float", 0.0, _nonneg, "must be >= 0 (counts/pulse)"),
        "leakage_amplitude": Field("float", 0.02, _nonneg, "must be >= 0 (counts/pulse)"),
        "background": Field("float", 0.002, _nonneg, "must be >= 0 (counts/pulse)"),
        "doppler_fwhm": Field("float", 0.48, _pos, "must be > 0 (GHz)"),
        "hyperfine_ground_split": Field("float", 6.834, _pos, "must be > 0 (GHz)"),
        "excited_split": Field("float", 0.812, _pos, "must be > 0 (GHz)"),
    },
    "scan": {
        "grid_center": Field("float", 0.0, math.isfinite, "must be finite (GHz)"),
        "grid_width": Field("float", 5.0, _pos, "must be > 0 (GHz)"),
        "grid_step": Field("float", 0.01, _pos, "must be > 0 and < grid_width (GHz)"),
        "n_cycles_per_point": Field("int", 4000, lambda x: x >= 100, "must be an integer >= 100"),
        "repetition_rate": Field("float", 1e4, _pos, "must be > 0 (Hz)"),
        "amplitude_A": Field("float", 0.35, _nonneg, "must be >= 0"),
        "antistokes_mean": Field("float", 0.8, _pos, "must be > 0 (counts/pulse)"),
        "pair_mean": Field("float", 1.0, _pos, "must be > 0 (pairs/pulse)"),
        "etalon_mode": Field("str", "airy", lambda x: x in ("airy", "lorentzian"), "must be airy or lorentzian"),
        "saturating": Field("bool", False),
        "seed": Field("int", 0, _nonneg, "must be an integer >= 0"),
    },
    "fit": {
        "etalon_mode": Field("str", "lorentzian", lambda x: x in ("airy", "lorentzian"), "must be airy or lorentzian"),
        "free": Field(
            "list",
            tuple(DEFAULT_FREE),
            lambda xs: len(xs) > 0 and len(set(xs)) == len(xs) and all(x in INTENSITY_PARAMETERS for x in xs),
            "must be a non-empty comma-separated list of distinct names from " + ", ".join(INTENSITY_PARAMETERS),
        ),
        "reweight_passes": Field("int", 2, lambda x: x >= 1, "must be an integer >= 1"),
    },
    "collisions": {
        "gamma": Field("float", D1_DECAY_RATE, _pos, "must be > 0 (1/s)"),
        "pressure": Field("float", 7.0, _nonneg, "must be >= 0 (torr)"),
        "broadening_coefficient": Field("float", 7.0, _nonneg, "must be >= 0 (MHz/torr)"),
        "gamma_c": Field("float_or_auto", None, _nonneg, "must be >= 0 (1/s) or auto"),
        "noise_amplitude": Field("float", 0.0, _nonneg, "must be >= 0 (1/s)"),
        "detuning": Field("float", 10 * D1_DECAY_RATE, lambda x: x != 0 and math.isfinite(x), "must be nonzero (rad/s)"),
        "drive": Field("float", 0.1 * D1_DECAY_RATE, _nonneg, "must be >= 0 and <= 0.1*|detuning| (rad/s)"),
        "phase_spread": Field("float", 2 * math.pi, lambda x: 0 < x <= 2 * math.pi, "must lie in (0, 2*pi]"),
        "dt": Field("float", 2.5e-10, _pos, "must be > 0 (s)"),
        "duration": Field("float", 1.4e-6, _pos, "must be > 0 (s)"),
        "burn_in": Field("float", 2.5e-7, _nonneg, "must be >= 0 (s)"),
        "n_trajectories": Field("int", 1000, lambda x: x >= 10, "must be an integer >= 10"),
        "n_groups": Field("int", 20, lambda x: x >= 2, "must be an integer >= 2"),
        "window_bins": Field("int", 4, lambda x: x >= 1, "must be an integer >= 1"),
        "seed": Field("int", 0, _nonneg, "must be an integer >= 0"),
    },
}


def _parse(section, key, text, spec: Field):
    raw = text.strip()
    try:
        if spec.kind == "float" or (spec.kind == "float_or_auto" and raw.lower() != "auto"):
            value = float(raw)
            if math.isnan(value):
                raise ValueError
        elif spec.kind == "float_or_auto":
            return None
        elif spec.kind == "int":
            value = int(raw)
        elif spec.kind == "bool":
            lowered = raw.lower()
            if lowered not in ("true", "false"):
                raise ValueError
            value = lowered == "true"
        elif spec.kind == "list":
            value = tuple(x.strip() for x in raw.split(",") if x.strip())
        else:
            value = raw
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {spec.kind.replace('_or_', ' or ')}") from None
    if spec.check is not None and not spec.check(value):
        raise ConfigError(f"[{section}] {key} = {raw}: {spec.constraint}")
    return value


def _format(value, spec: Field):
    if value is None:
        return "auto"
    if spec.kind == "bool":
        return "true" if value else "false"
    if spec.kind == "list":
        return ", ".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration, ``values[section][key]`` with typed values."""

    values: dict

    def __getitem__(self, section):
        return self.values[section]

    def with_overrides(self, seed=None, fit_etalon=None) -> "RunConfig":
        values = {s: dict(v) for s, v in self.values.items()}
        if seed is not None:
            if seed < 0:
                raise ConfigError(f"--seed {seed}: must be an integer >= 0")
            values["scan"]["seed"] = seed
            values["collisions"]["seed"] = seed
        if fit_etalon is not None:
            values["fit"]["etalon_mode"] = fit_etalon
        return validated(RunConfig(values))

    # --- builders ----------------------------------------------------------

    def etalon(self) -> EtalonConfig:
        e = self["etalon"]
        return EtalonConfig(e["fsr"], e["fwhm"])

    def channel_model(self) -> ChannelModel:
        c = self["channel"]
        return default_paper_model(
            c["write_detuning"],
            coherent_amplitude=c["coherent_amplitude"],
            fluorescence_amplitude=c["fluorescence_amplitude"],
            fluorescence_lower_amplitude=c["fluorescence_lower_amplitude"],
            leakage_amplitude=c["leakage_amplitude"],
            background=c["background"],
            doppler_fwhm=c["doppler_fwhm"],
            hyperfine_ground_split=c["hyperfine_ground_split"],
            excited_split=c["excited_split"],
            etalon=self.etalon(),
        )

    def grid(self) -> FrequencyGrid:
        s = self["scan"]
        return FrequencyGrid.centered(s["grid_center"], s["grid_width"], s["grid_step"])

    def link(self) -> CountLink:
        s = self["scan"]
        return CountLink(s["amplitude_A"], s["antistokes_mean"], s["pair_mean"])

    def scan_config(self) -> ScanConfig:
        s = self["scan"]
        return ScanConfig(
            self.channel_model(),
            grid=self.grid(),
            n_cycles_per_point=s["n_cycles_per_point"],
            repetition_rate=s["repetition_rate"],
            link=self.link(),
            seed=s["seed"],
            etalon_mode=s["etalon_mode"],
            saturating=s["saturating"],
        )

    def analysis_template(self) -> AnalysisTemplate:
        f = self["fit"]
        return AnalysisTemplate(
            self.channel_model(), tuple(f["free"]), f["etalon_mode"], reweight_passes=f["reweight_passes"]
        )

    def gamma_c(self) -> float:
        c = self["collisions"]
        if c["gamma_c"] is not None:
            return c["gamma_c"]
        return collision_rate_from_pressure(c["broadening_coefficient"], c["pressure"])

    def collision_params(self) -> CollisionParams:
        c = self["collisions"]
        return CollisionParams(
            gamma=c["gamma"],
            gamma_c=self.gamma_c(),
            noise_amplitude=c["noise_amplitude"],
            detuning=c["detuning"],
            drive=c["drive"],
            phase_spread=c["phase_spread"],
        )

    def trajectory_config(self) -> TrajectoryConfig:
        c = self["collisions"]
        return TrajectoryConfig(c["duration"], c["dt"], c["n_trajectories"], c["seed"], c["burn_in"])


def defaults() -> RunConfig:
    return RunConfig({s: {k: f.default for k, f in keys.items()} for s, keys in SCHEMA.items()})


def validated(cfg: RunConfig) -> RunConfig:
    """Cross-key checks: build every module object once and report the failing section."""
    builders = (
        ("etalon", cfg.etalon),
        ("channel", cfg.channel_model),
        ("scan", cfg.scan_config),
        ("fit", cfg.analysis_template),
        ("collisions", cfg.collision_params),
        ("collisions", cfg.trajectory_config),
    )
    for section, build in builders:
        try:
            build()
        except (InvalidParameterError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    s = cfg["scan"]
    if s["grid_step"] >= s["grid_width"]:
        raise ConfigError(f"[scan] grid_step = {s['grid_step']!r}: {SCHEMA['scan']['grid_step'].constraint}")
    try:
        cfg.trajectory_config().check(cfg.collision_params())
    except StabilityError as exc:
        raise ConfigError(f"[collisions] {exc}") from None
    return cfg


def loads(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__", inline_comment_prefixes=(";",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}; allowed: {', '.join(SCHEMA[section])}")
            cfg.values[section][key] = _parse(section, key, raw, SCHEMA[section][key])
    return validated(cfg)


def load(path) -> RunConfig:
    """Read a configuration file (``OSError`` propagates for I/O failures)."""
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg: RunConfig) -> str:
    lines = []
    for section, keys in SCHEMA.items():
        if lines:
            lines.append("")
        lines.append(f"[{section}]")
        for key, spec in keys.items():
            lines.append(f"{key} = {_format(cfg[section][key], spec)}")
    return "\n".join(lines) + "\n"
