"""Gaussian measurement noise applied to simulated forcing and displacement.

Three trial protocols select which channel is corrupted. The noise
standard deviations scale with the signal: fraction * RMS for the
forcing channel and fraction * population std for the displacement
channel. Corruption happens after simulation, so the clean series are
never mutated.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .oscillator import TimeSeries

__all__ = ["NoiseTrial", "NoiseSpec", "CANONICAL_FRACTIONS", "noise_scales", "apply_noise"]

# canonical suite: 1%, 10%, 30%, 50%, 100%, 150%
CANONICAL_FRACTIONS = (0.01, 0.1, 0.3, 0.5, 1.0, 1.5)


class NoiseTrial(Enum):
    """Which measured channel receives noise."""

    OUTPUT_ONLY = 1
    INPUT_ONLY = 2
    BOTH = 3

    @classmethod
    def from_number(cls, n: int) -> "NoiseTrial":
        try:
            return cls(n)
        except ValueError:
            raise ConfigError(f"trial must be 1, 2 or 3, got {n}") from None

    @property
    def number(self) -> int:
        return self.value

    @property
    def corrupts_input(self) -> bool:
        return self in (NoiseTrial.INPUT_ONLY, NoiseTrial.BOTH)

    @property
    def corrupts_output(self) -> bool:
        return self in (NoiseTrial.OUTPUT_ONLY, NoiseTrial.BOTH)


@dataclass(frozen=True)
class NoiseSpec:
    trial: NoiseTrial
    fraction: float
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.trial, int):
            object.__setattr__(self, "trial", NoiseTrial.from_number(self.trial))
        if not 0 <= self.fraction <= 2:
            raise ConfigError(f"fraction must lie in [0, 2], got {self.fraction}")


def noise_scales(x: TimeSeries, y: TimeSeries, fraction: float) -> tuple[float, float]:
    """Noise standard deviations (scale_x, scale_y).

    scale_x = fraction * RMS(x), scale_y = fraction * population std of y.
    """
    rms_x = float(np.sqrt(np.mean(x.values**2)))
    sigma_y = float(np.std(y.values))
    return fraction * rms_x, fraction * sigma_y


def apply_noise(
    x: TimeSeries, y: TimeSeries, spec: NoiseSpec
) -> tuple[TimeSeries, TimeSeries]:
    """Add seeded i.i.d. Gaussian noise to the channels named by the trial.

    Channels the trial does not name are returned bit-identical. The
    forcing channel draws before the displacement channel, so Trial 3 is
    reproducible as a whole.
    """
    if len(x) != len(y):
        raise ConfigError(f"series lengths differ: {len(x)} vs {len(y)}")
    rng = np.random.default_rng(spec.rng_seed)
    scale_x, scale_y = noise_scales(x, y, spec.fraction)

    x_noisy = x
    y_noisy = y
    if spec.trial.corrupts_input:
        x_noisy = TimeSeries(x.dt, x.values + rng.normal(0.0, scale_x, len(x)))
    if spec.trial.corrupts_output:
        y_noisy = TimeSeries(y.dt, y.values + rng.normal(0.0, scale_y, len(y)))
    return x_noisy, y_noisy
