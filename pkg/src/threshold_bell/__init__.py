"""Classical pulse EPRB simulator with threshold detectors.

Local pulses split by Malus's law and detected by band-gap plus
discriminator thresholds produce a biased coincidence sample, which is
enough to push the CHSH combination above 2.
"""

from threshold_bell.core import (
    IdealOutcome,
    PolarizerSetting,
    Pulse,
    SplitEnergies,
    ideal_measure,
    malus_split,
)

__all__ = [
    "IdealOutcome",
    "PolarizerSetting",
    "Pulse",
    "SplitEnergies",
    "ideal_measure",
    "malus_split",
]

__version__ = "0.1.0"
