"""Pulses, Malus-law splitting and the idealized threshold polarimeter."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Pulse:
    """Classical light pulse with energy ``energy`` and linear polarization angle (rad)."""

    energy: float
    polarization: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.energy) or self.energy < 0:
            raise ValueError(f"pulse energy must be finite and >= 0, got {self.energy}")
        if not math.isfinite(self.polarization):
            raise ValueError(f"pulse polarization must be finite, got {self.polarization}")
        object.__setattr__(self, "polarization", self.polarization % TWO_PI)


@dataclass(frozen=True)
class PolarizerSetting:
    """Main-axis direction of a polarizing beam splitter, kept as given."""

    angle: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.angle):
            raise ValueError(f"polarizer angle must be finite, got {self.angle}")


@dataclass(frozen=True)
class SplitEnergies:
    transmitted: float
    reflected: float

    @property
    def total(self) -> float:
        return self.transmitted + self.reflected


class IdealOutcome(enum.Enum):
    PLUS = "plus"
    MINUS = "minus"
    NULL = "null"
    DOUBLE = "double"

    @property
    def value_a(self) -> int | None:
        """Measurement value +1/-1/0, or None for a double click."""
        return {"plus": 1, "minus": -1, "null": 0}.get(self.value)


def split_energies(
    energy: np.ndarray | float, polarization: np.ndarray | float, angle: float
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Malus split; returns (transmitted, reflected) arrays."""
    x = np.asarray(polarization, dtype=float) - angle
    e = np.asarray(energy, dtype=float)
    return e * np.cos(x) ** 2, e * np.sin(x) ** 2


def malus_split(pulse: Pulse, setting: PolarizerSetting) -> SplitEnergies:
    t, r = split_energies(pulse.energy, pulse.polarization, setting.angle)
    return SplitEnergies(transmitted=float(t), reflected=float(r))


# Integer codes used by the array form of the ideal polarimeter.
CODE_NULL, CODE_PLUS, CODE_MINUS, CODE_DOUBLE = 0, 1, 2, 3
_CODE_TO_OUTCOME = {
    CODE_NULL: IdealOutcome.NULL,
    CODE_PLUS: IdealOutcome.PLUS,
    CODE_MINUS: IdealOutcome.MINUS,
    CODE_DOUBLE: IdealOutcome.DOUBLE,
}


def ideal_measure_array(
    energy: np.ndarray | float,
    polarization: np.ndarray | float,
    angle: float,
    work_function: float,
) -> np.ndarray:
    """Ideal polarimeter on arrays of pulses; returns CODE_* integers.

    A channel fires iff its share of the energy strictly exceeds the work function.
    """
    if not work_function > 0:
        raise ValueError(f"work function must be > 0, got {work_function}")
    t, r = split_energies(energy, polarization, angle)
    plus = t > work_function
    minus = r > work_function
    return plus.astype(np.int8) * CODE_PLUS + minus.astype(np.int8) * CODE_MINUS


def ideal_measure(pulse: Pulse, setting: PolarizerSetting, work_function: float) -> IdealOutcome:
    code = int(ideal_measure_array(pulse.energy, pulse.polarization, setting.angle, work_function))
    return _CODE_TO_OUTCOME[code]


def double_click_condition(pulse: Pulse, setting: PolarizerSetting, work_function: float) -> bool:
    """Closed-form test for a double click: 2*Phi/E0 - 1 < cos 2(lam-phi) < -(2*Phi/E0 - 1)."""
    if pulse.energy == 0:
        return False
    c = 2.0 * work_function / pulse.energy - 1.0
    cos2 = math.cos(2.0 * (pulse.polarization - setting.angle))
    return c < cos2 < -c
