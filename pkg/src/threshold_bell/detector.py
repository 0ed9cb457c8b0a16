"""Threshold detector chain: absorption losses, photoemission, gain, dark pulses, discriminator.

All stochastic steps draw a fixed number of variates per pulse from the
supplied ``numpy.random.Generator`` regardless of intermediate values, so
the stream position after a call depends only on the batch size and the
configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class NoLoss:
    pass


@dataclass(frozen=True)
class UniformFraction:
    """Absorbed fraction 1 - u*max_fraction with u ~ U[0, 1)."""

    max_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.max_fraction <= 1.0:
            raise ValueError(f"max_fraction must lie in [0, 1], got {self.max_fraction}")


@dataclass(frozen=True)
class ExponentialDepth:
    """Absorbed fraction max(0, 1 - x) with x exponential of mean ``mean_fraction``."""

    mean_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 < self.mean_fraction < 1.0:
            raise ValueError(f"mean_fraction must lie in (0, 1), got {self.mean_fraction}")


LossModel = Union[NoLoss, UniformFraction, ExponentialDepth]


@dataclass(frozen=True)
class UnitGain:
    pass


@dataclass(frozen=True)
class FixedGain:
    g: float

    def __post_init__(self) -> None:
        if not (self.g > 0 and math.isfinite(self.g)):
            raise ValueError(f"fixed gain must be positive, got {self.g}")


@dataclass(frozen=True)
class CompoundPoisson:
    """Dynode cascade: collection with probability alpha, then ``stages`` Poisson(delta) stages.

    With ``normalize`` the realized gain is divided by the nominal gain
    alpha * delta**stages, which keeps currents in energy units.
    """

    alpha: float
    delta: float
    stages: int
    normalize: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if int(self.stages) != self.stages or self.stages < 1:
            raise ValueError(f"stages must be a positive integer, got {self.stages}")

    @property
    def nominal_gain(self) -> float:
        return self.alpha * self.delta**self.stages


GainModel = Union[UnitGain, FixedGain, CompoundPoisson]


@dataclass(frozen=True)
class DarkModel:
    probability_per_trial: float = 0.0
    amplitude_mean: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability_per_trial < 1.0:
            raise ValueError(
                f"dark probability_per_trial must lie in [0, 1), got {self.probability_per_trial}"
            )
        if not self.amplitude_mean > 0:
            raise ValueError(f"dark amplitude_mean must be positive, got {self.amplitude_mean}")


@dataclass(frozen=True)
class DetectorConfig:
    work_function: float
    loss: LossModel = field(default_factory=NoLoss)
    gain: GainModel = field(default_factory=UnitGain)
    dark: DarkModel = field(default_factory=DarkModel)
    discriminator: float = 0.0

    def __post_init__(self) -> None:
        if not (self.work_function > 0 and math.isfinite(self.work_function)):
            raise ValueError(f"work_function must be positive, got {self.work_function}")
        if not (self.discriminator >= 0 and math.isfinite(self.discriminator)):
            raise ValueError(f"discriminator must be >= 0, got {self.discriminator}")

    @property
    def noiseless(self) -> bool:
        return (
            isinstance(self.loss, NoLoss)
            and isinstance(self.gain, UnitGain)
            and self.dark.probability_per_trial == 0.0
        )


@dataclass(frozen=True)
class DetectionTrace:
    incident_energy: float
    absorbed_energy: float
    kinetic_energy: float | None
    realized_gain: float | None
    output_current: float | None
    dark_fired: bool
    dark_amplitude: float | None
    clicked: bool


def absorb_array(energy: np.ndarray, loss: LossModel, rng: np.random.Generator) -> np.ndarray:
    energy = np.asarray(energy, dtype=float)
    if isinstance(loss, NoLoss):
        return energy.copy()
    if isinstance(loss, UniformFraction):
        u = rng.random(energy.shape)
        return energy * (1.0 - u * loss.max_fraction)
    if isinstance(loss, ExponentialDepth):
        x = rng.exponential(loss.mean_fraction, energy.shape)
        return energy * np.maximum(0.0, 1.0 - x)
    raise TypeError(f"unknown loss model {loss!r}")


def absorb(incident_energy: float, loss: LossModel, rng: np.random.Generator) -> float:
    if incident_energy < 0:
        raise ValueError(f"incident energy must be >= 0, got {incident_energy}")
    return float(absorb_array(np.array([incident_energy]), loss, rng)[0])


def photoemit(absorbed_energy: float, work_function: float) -> float | None:
    """Kinetic energy left after escaping the well, or None when nothing escapes."""
    if not work_function > 0:
        raise ValueError(f"work_function must be positive, got {work_function}")
    if absorbed_energy > work_function:
        return absorbed_energy - work_function
    return None


def cascade_counts(gain: CompoundPoisson, size: int, rng: np.random.Generator) -> np.ndarray:
    """Final carrier counts of ``size`` independent cascades started by one photoelectron."""
    n = rng.binomial(1, gain.alpha, size).astype(np.int64)
    for _ in range(int(gain.stages)):
        n = rng.poisson(gain.delta * n)
    return n


def multiply_array(
    kinetic: np.ndarray, gain: GainModel, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    kinetic = np.asarray(kinetic, dtype=float)
    if isinstance(gain, UnitGain):
        g = np.ones_like(kinetic)
    elif isinstance(gain, FixedGain):
        g = np.full_like(kinetic, gain.g)
    elif isinstance(gain, CompoundPoisson):
        g = cascade_counts(gain, kinetic.size, rng).reshape(kinetic.shape).astype(float)
        if gain.normalize:
            g /= gain.nominal_gain
    else:
        raise TypeError(f"unknown gain model {gain!r}")
    return g, g * kinetic


def multiply(kinetic_energy: float, gain: GainModel, rng: np.random.Generator) -> tuple[float, float]:
    g, i = multiply_array(np.array([kinetic_energy]), gain, rng)
    return float(g[0]), float(i[0])


def dark_sample_array(dark: DarkModel, size: int, rng: np.random.Generator) -> np.ndarray:
    """Dark pulse amplitudes, NaN where no dark pulse occurred."""
    if dark.probability_per_trial == 0.0:
        return np.full(size, np.nan)
    fired = rng.random(size) < dark.probability_per_trial
    amp = rng.exponential(dark.amplitude_mean, size)
    return np.where(fired, amp, np.nan)


def dark_sample(dark: DarkModel, rng: np.random.Generator) -> float | None:
    amp = dark_sample_array(dark, 1, rng)[0]
    return None if np.isnan(amp) else float(amp)


@dataclass(frozen=True)
class DetectionArrays:
    absorbed: np.ndarray
    kinetic: np.ndarray  # NaN where nothing escaped
    gain: np.ndarray  # NaN where nothing escaped
    current: np.ndarray  # NaN where nothing escaped
    dark_amplitude: np.ndarray  # NaN where no dark pulse
    clicked: np.ndarray


def detect_array(
    incident_energy: np.ndarray, config: DetectorConfig, rng: np.random.Generator
) -> DetectionArrays:
    """Run the whole chain on a batch of incident energies.

    Draw order per batch: losses, cascade, dark pulses.
    """
    energy = np.asarray(incident_energy, dtype=float)
    absorbed = absorb_array(energy, config.loss, rng)
    escaped = absorbed > config.work_function
    kinetic = np.where(escaped, absorbed - config.work_function, np.nan)
    g, current = multiply_array(np.where(escaped, kinetic, 0.0), config.gain, rng)
    g = np.where(escaped, g, np.nan)
    current = np.where(escaped, current, np.nan)
    dark = dark_sample_array(config.dark, energy.size, rng).reshape(energy.shape)
    d = config.discriminator
    # NaN comparisons are False, so missing current or dark pulse never clicks
    clicked = (current > d) | (dark > d)
    return DetectionArrays(absorbed, kinetic, g, current, dark, clicked)


def clicks(incident_energy: np.ndarray, config: DetectorConfig, rng: np.random.Generator) -> np.ndarray:
    """Click booleans only; the noiseless chain skips the bookkeeping and draws nothing."""
    if config.noiseless:
        e = np.asarray(incident_energy, dtype=float)
        return (e - config.work_function) > config.discriminator
    return detect_array(incident_energy, config, rng).clicked


def _opt(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


def detect(incident_energy: float, config: DetectorConfig, rng: np.random.Generator) -> DetectionTrace:
    arr = detect_array(np.array([incident_energy]), config, rng)
    dark = _opt(arr.dark_amplitude[0])
    return DetectionTrace(
        incident_energy=float(incident_energy),
        absorbed_energy=float(arr.absorbed[0]),
        kinetic_energy=_opt(arr.kinetic[0]),
        realized_gain=_opt(arr.gain[0]),
        output_current=_opt(arr.current[0]),
        dark_fired=dark is not None,
        dark_amplitude=dark,
        clicked=bool(arr.clicked[0]),
    )
