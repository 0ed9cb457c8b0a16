"""Run configuration: a sectioned INI file, named presets, inline overrides.

Ratios are the natural parameters, so energies and currents are given as
``*_over_e0`` fractions of the source pulse energy.  Every key has a
default; the resolved configuration is echoed next to the outputs and
re-parses to the same run.  The sweep uses station A's detector as its
template, replacing the work function and discriminator cell by cell.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import re
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from threshold_bell.analytic import DEFAULT_ANGLE_SET, geometry_from_thresholds
from threshold_bell.detector import (
    CompoundPoisson,
    DarkModel,
    DetectorConfig,
    ExponentialDepth,
    FixedGain,
    NoLoss,
    UniformFraction,
    UnitGain,
)
from threshold_bell.experiment import SourceConfig, StationConfig

SEED_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending ``section.key``."""


# --- value parsers ----------------------------------------------------------

_PI_TERM = re.compile(r"^([+-]?)\s*(\d+(?:\.\d*)?|\.\d+)?\s*\*?\s*pi\s*(?:/\s*(\d+(?:\.\d*)?))?$")


def parse_angle(text: str) -> float:
    """Radians, either a plain number or a multiple of pi such as ``-3*pi/8``."""
    s = text.strip().lower()
    m = _PI_TERM.match(s)
    if m:
        sign, num, den = m.groups()
        value = float(num or 1.0) * math.pi / float(den or 1.0)
        return -value if sign == "-" else value
    value = float(s)
    if not math.isfinite(value):
        raise ValueError(f"angle must be finite, got {text!r}")
    return value


def format_angle(value: float) -> str:
    return repr(float(value))


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError(f"expected a finite number, got {text!r}")
    return v


def _positive(text: str) -> float:
    v = _float(text)
    if v <= 0:
        raise ValueError(f"must be > 0, got {text!r}")
    return v


def _nonneg(text: str) -> float:
    v = _float(text)
    if v < 0:
        raise ValueError(f"must be >= 0, got {text!r}")
    return v


def _int(text: str, minimum: int = 1) -> int:
    v = int(text)
    if v < minimum:
        raise ValueError(f"must be >= {minimum}, got {text!r}")
    return v


def _bool(text: str) -> bool:
    s = text.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        s = text.strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return s

    return parse


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {text!r}")
    return v


def parse_angle_set(text: str) -> tuple[tuple[float, float], ...]:
    """Four ``phi_a, phi_b`` pairs separated by semicolons."""
    pairs = [p for p in text.split(";") if p.strip()]
    if len(pairs) != 4:
        raise ValueError(f"expected four 'phi_a, phi_b' pairs separated by ';', got {len(pairs)}")
    out = []
    for p in pairs:
        parts = p.split(",")
        if len(parts) != 2:
            raise ValueError(f"bad setting pair {p.strip()!r}")
        out.append((parse_angle(parts[0]), parse_angle(parts[1])))
    return tuple(out)


def format_angle_set(pairs: tuple[tuple[float, float], ...]) -> str:
    return "; ".join(f"{format_angle(a)}, {format_angle(b)}" for a, b in pairs)


# --- schema -----------------------------------------------------------------

_STATION_SCHEMA: dict[str, tuple[Callable[[str], object], str]] = {
    "setting": (parse_angle, "0"),
    "work_function_over_e0": (_positive, "0.75"),
    "e0_over_work_function": (_positive, ""),
    "discriminator_over_e0": (_nonneg, "0"),
    "loss": (_choice("none", "uniform", "exponential"), "none"),
    "loss_max_fraction": (_float, "0.5"),
    "loss_mean_fraction": (_float, "0.1"),
    "gain": (_choice("unit", "fixed", "compound_poisson"), "unit"),
    "gain_value": (_float, "1"),
    "gain_alpha": (_float, "1"),
    "gain_delta": (_float, "4"),
    "gain_stages": (_int, "10"),
    "gain_normalize": (_bool, "true"),
    "dark_probability": (_float, "0"),
    "dark_amplitude_mean_over_e0": (_float, "0.1"),
}

_DEFAULT_ANGLES = format_angle_set(DEFAULT_ANGLE_SET)

SCHEMA: dict[str, dict[str, tuple[Callable[[str], object], str]]] = {
    "run": {"seed": (_seed, ""), "jobs": (_int, "1")},
    "source": {"pulse_energy": (_positive, "1")},
    "detector": _STATION_SCHEMA,
    "station_a": _STATION_SCHEMA,
    "station_b": _STATION_SCHEMA,
    "chsh": {"angles": (parse_angle_set, _DEFAULT_ANGLES)},
    "analytic": {
        "work_function_over_e0": (_positive, "0.75"),
        "samples": (lambda s: _int(s, 2), "33"),
        "grid_points": (lambda s: _int(s, 10_000), "1000000"),
    },
    "trial": {"trials": (_int, "20")},
    "pattern": {
        "station": (_choice("a", "b"), "a"),
        "bins": (lambda s: _int(s, 8), "64"),
        "trials_per_bin": (_int, "100000"),
    },
    "curve": {
        "delta_min": (parse_angle, "0"),
        "delta_max": (parse_angle, "pi/2"),
        "points": (_int, "25"),
        "trials": (lambda s: _int(s, 10_000), "1000000"),
    },
    "sweep": {
        "e0_over_phi_min": (_positive, "1"),
        "e0_over_phi_max": (_positive, "4"),
        "e0_over_phi_points": (_int, "25"),
        "d_over_e0_min": (_nonneg, "0"),
        "d_over_e0_max": (_nonneg, "0.6"),
        "d_over_e0_points": (_int, "25"),
        "trials_per_cell": (lambda s: _int(s, 10_000), "100000"),
    },
}

PRESETS = ("fig1-analytic", "fig2", "fig3", "ideal")


# --- resolved config --------------------------------------------------------


@dataclass(frozen=True)
class AnalyticParams:
    work_function_over_e0: float
    samples: int
    grid_points: int


@dataclass(frozen=True)
class PatternParams:
    station: str
    bins: int
    trials_per_bin: int


@dataclass(frozen=True)
class CurveParams:
    delta_min: float
    delta_max: float
    points: int
    trials: int

    def grid(self) -> list[float]:
        if self.points == 1:
            return [self.delta_min]
        return [float(x) for x in np.linspace(self.delta_min, self.delta_max, self.points)]


@dataclass(frozen=True)
class SweepParams:
    e0_over_phi: tuple[float, float, int]
    d_over_e0: tuple[float, float, int]
    trials_per_cell: int


@dataclass(frozen=True)
class RunConfig:
    seed: int
    seed_generated: bool
    jobs: int
    source: SourceConfig
    station_a: StationConfig
    station_b: StationConfig
    angle_set: tuple[tuple[float, float], ...]
    analytic: AnalyticParams
    trials: int
    pattern: PatternParams
    curve: CurveParams
    sweep: SweepParams
    resolved: Mapping[str, Mapping[str, str]]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for section, values in self.resolved.items():
            cp[section] = dict(values)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r} (known: {', '.join(PRESETS)})")
    return resources.files("threshold_bell.presets").joinpath(f"{name}.ini").read_text()


def _read_ini(text: str, origin: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    raw: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        for key, value in cp[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            raw.setdefault(section, {})[key] = value
    return raw


def _apply_override(raw: dict[str, dict[str, str]], item: str) -> None:
    path, sep, value = item.partition("=")
    section, dot, key = path.strip().partition(".")
    if not sep or not dot:
        raise ConfigError(f"{item}: override must look like section.key=value")
    if section not in SCHEMA:
        raise ConfigError(f"{section}: unknown section")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{section}.{key}: unknown key")
    raw.setdefault(section, {})[key] = value.strip()


def _parse(section: str, key: str, text: str) -> object:
    parser, _ = SCHEMA[section][key]
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def _station(
    name: str, raw: dict[str, dict[str, str]], e0: float
) -> tuple[StationConfig, dict[str, str]]:
    shared = raw.get("detector", {})
    own = raw.get(name, {})

    def text(key: str) -> str:
        return own.get(key, shared.get(key, _STATION_SCHEMA[key][1]))

    def value(key: str):
        return _parse(name, key, text(key))

    given_ratio = "work_function_over_e0" in own or "work_function_over_e0" in shared
    given_inverse = "e0_over_work_function" in own or "e0_over_work_function" in shared
    if given_ratio and given_inverse:
        raise ConfigError(
            f"{name}.e0_over_work_function: conflicts with work_function_over_e0; give only one"
        )
    wf_ratio = 1.0 / value("e0_over_work_function") if given_inverse else value("work_function_over_e0")

    loss_kind = value("loss")
    gain_kind = value("gain")
    try:
        if loss_kind == "uniform":
            loss = UniformFraction(value("loss_max_fraction"))
        elif loss_kind == "exponential":
            loss = ExponentialDepth(value("loss_mean_fraction"))
        else:
            loss = NoLoss()
    except ValueError as exc:
        raise ConfigError(f"{name}.loss: {exc}") from exc
    try:
        if gain_kind == "fixed":
            gain = FixedGain(value("gain_value"))
        elif gain_kind == "compound_poisson":
            gain = CompoundPoisson(
                value("gain_alpha"), value("gain_delta"), value("gain_stages"), value("gain_normalize")
            )
        else:
            gain = UnitGain()
    except ValueError as exc:
        raise ConfigError(f"{name}.gain: {exc}") from exc
    try:
        dark = DarkModel(value("dark_probability"), value("dark_amplitude_mean_over_e0") * e0)
    except ValueError as exc:
        raise ConfigError(f"{name}.dark_probability: {exc}") from exc
    detector = DetectorConfig(
        work_function=wf_ratio * e0,
        loss=loss,
        gain=gain,
        dark=dark,
        discriminator=value("discriminator_over_e0") * e0,
    )
    setting = value("setting")
    resolved = {k: text(k) for k in _STATION_SCHEMA if k != "e0_over_work_function"}
    resolved["work_function_over_e0"] = repr(wf_ratio)
    resolved["setting"] = format_angle(setting)
    return StationConfig.symmetric(setting, detector), resolved


def parse_config(
    path: str | Path | None = None,
    *,
    preset: str | None = None,
    overrides: Mapping[str, str] | list[str] | None = None,
    text: str | None = None,
) -> RunConfig:
    """Resolve defaults, then a preset or a file (or literal ``text``), then overrides.

    ``overrides`` is either a ``{"section.key": value}`` mapping or a list of
    ``section.key=value`` strings.
    """
    sources = [x for x in (path, preset, text) if x is not None]
    if len(sources) > 1:
        raise ConfigError("config: give at most one of a config path, a preset or config text")
    raw: dict[str, dict[str, str]] = {}
    if preset is not None:
        raw = _read_ini(preset_text(preset), f"preset {preset}")
    elif path is not None:
        p = Path(path)
        try:
            content = p.read_text()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {p}: {exc.strerror}") from exc
        raw = _read_ini(content, str(p))
    elif text is not None:
        raw = _read_ini(text, "<text>")

    items = overrides.items() if isinstance(overrides, Mapping) else [
        tuple(s.split("=", 1)) if "=" in s else (s, None) for s in (overrides or [])
    ]
    for key, value in items:
        if value is None:
            raise ConfigError(f"{key}: override must look like section.key=value")
        _apply_override(raw, f"{key}={value}")

    def get(section: str, key: str):
        return _parse(section, key, raw.get(section, {}).get(key, SCHEMA[section][key][1]))

    resolved: dict[str, dict[str, str]] = {}

    seed_text = raw.get("run", {}).get("seed", "")
    seed_generated = seed_text.strip() == ""
    seed = int(np.random.SeedSequence().entropy % (SEED_MAX + 1)) if seed_generated else get("run", "seed")
    jobs = get("run", "jobs")
    # jobs changes scheduling only, so it stays out of the echo and its hash
    resolved["run"] = {"seed": str(seed)}

    try:
        source = SourceConfig(get("source", "pulse_energy"))
    except ValueError as exc:
        raise ConfigError(f"source.pulse_energy: {exc}") from exc
    resolved["source"] = {"pulse_energy": repr(source.pulse_energy)}
    e0 = source.pulse_energy

    station_a, resolved["station_a"] = _station("station_a", raw, e0)
    station_b, resolved["station_b"] = _station("station_b", raw, e0)

    angle_set = get("chsh", "angles")
    resolved["chsh"] = {"angles": format_angle_set(angle_set)}

    analytic = AnalyticParams(
        get("analytic", "work_function_over_e0"), get("analytic", "samples"), get("analytic", "grid_points")
    )
    try:
        geometry_from_thresholds(1.0, analytic.work_function_over_e0)
    except ValueError as exc:
        raise ConfigError(f"analytic.work_function_over_e0: {exc}") from exc
    resolved["analytic"] = {
        "work_function_over_e0": repr(analytic.work_function_over_e0),
        "samples": str(analytic.samples),
        "grid_points": str(analytic.grid_points),
    }

    trials = get("trial", "trials")
    resolved["trial"] = {"trials": str(trials)}

    pattern = PatternParams(get("pattern", "station"), get("pattern", "bins"), get("pattern", "trials_per_bin"))
    resolved["pattern"] = {
        "station": pattern.station,
        "bins": str(pattern.bins),
        "trials_per_bin": str(pattern.trials_per_bin),
    }

    curve = CurveParams(
        get("curve", "delta_min"), get("curve", "delta_max"), get("curve", "points"), get("curve", "trials")
    )
    resolved["curve"] = {
        "delta_min": format_angle(curve.delta_min),
        "delta_max": format_angle(curve.delta_max),
        "points": str(curve.points),
        "trials": str(curve.trials),
    }

    sweep = SweepParams(
        (get("sweep", "e0_over_phi_min"), get("sweep", "e0_over_phi_max"), get("sweep", "e0_over_phi_points")),
        (get("sweep", "d_over_e0_min"), get("sweep", "d_over_e0_max"), get("sweep", "d_over_e0_points")),
        get("sweep", "trials_per_cell"),
    )
    for name, (lo, hi, n) in (("e0_over_phi", sweep.e0_over_phi), ("d_over_e0", sweep.d_over_e0)):
        if n > 1 and not hi > lo:
            raise ConfigError(f"sweep.{name}_max: must exceed {name}_min when points > 1")
    resolved["sweep"] = {
        "e0_over_phi_min": repr(sweep.e0_over_phi[0]),
        "e0_over_phi_max": repr(sweep.e0_over_phi[1]),
        "e0_over_phi_points": str(sweep.e0_over_phi[2]),
        "d_over_e0_min": repr(sweep.d_over_e0[0]),
        "d_over_e0_max": repr(sweep.d_over_e0[1]),
        "d_over_e0_points": str(sweep.d_over_e0[2]),
        "trials_per_cell": str(sweep.trials_per_cell),
    }

    return RunConfig(
        seed=seed,
        seed_generated=seed_generated,
        jobs=jobs,
        source=source,
        station_a=station_a,
        station_b=station_b,
        angle_set=angle_set,
        analytic=analytic,
        trials=trials,
        pattern=pattern,
        curve=curve,
        sweep=sweep,
        resolved=resolved,
    )
