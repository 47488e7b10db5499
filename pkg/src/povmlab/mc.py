"""Seeded RNG streams and running statistics for Monte Carlo runs.

Every random draw in the package flows through rng_stream so that a master
seed plus a (stage, trial) pair pins the stream deterministically.
"""

from __future__ import annotations

import numpy as np

# Stage tags for named substreams.
STAGE_OPTIMIZER = 11
STAGE_BLOCK_SAMPLING = 23
STAGE_ENSEMBLE_SAMPLING = 37


def rng_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator derived from a master seed and integer keys."""
    return np.random.default_rng([int(master_seed), *[int(k) for k in key]])


class RunningStats:
    """Welford accumulator for scalars or fixed-shape arrays."""

    def __init__(self):
        self.count = 0
        self._mean = None
        self._m2 = None

    def push(self, value) -> None:
        x = np.asarray(value, dtype=float)
        if self.count == 0:
            self._mean = np.zeros_like(x)
            self._m2 = np.zeros_like(x)
        self.count += 1
        delta = x - self._mean
        self._mean = self._mean + delta / self.count
        self._m2 = self._m2 + delta * (x - self._mean)

    @property
    def mean(self):
        return self._mean

    @property
    def variance(self):
        """Unbiased sample variance (zero until two samples arrive)."""
        if self.count < 2:
            return np.zeros_like(self._mean) if self._mean is not None else None
        return self._m2 / (self.count - 1)

    @property
    def stderr(self):
        """Standard error of the mean."""
        if self.count < 2:
            return np.zeros_like(self._mean) if self._mean is not None else None
        return np.sqrt(self.variance / self.count)
