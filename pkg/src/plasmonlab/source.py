"""Photon arrival generation and the detector front-end.

Two physical sources are modeled: a down-conversion pair source whose
emission times form a homogeneous Poisson process (each emission delivers
one photon to each arm, or two per arm for an occasional double event),
and an attenuated CW laser giving a plain Poisson stream.  Detection turns
arrival times into time tags: Bernoulli efficiency, Gaussian timing jitter,
an independent dark-count stream, and a non-paralyzable dead time.

All times are integer picoseconds from the start of the run.  Every
generator is a pure function of (parameters, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels

CHANNEL_A = 0
CHANNEL_B1 = 1
CHANNEL_B2 = 2

PS_PER_S = 1_000_000_000_000


@dataclass(frozen=True)
class SourceSpec:
    """Emission rates of the photon source.

    pair_rate is the down-conversion emission rate in pairs/s;
    double_pair_prob is the probability that an emission carries two pairs
    (the phenomenological stand-in for higher-order emission);
    laser_rate is the photon rate at the chain input in attenuated-laser mode.
    """

    pair_rate: float = 0.0
    double_pair_prob: float = 0.0
    laser_rate: float = 0.0

    def __post_init__(self):
        if self.pair_rate < 0 or self.laser_rate < 0:
            raise ValueError("rates must be non-negative")
        if not 0.0 <= self.double_pair_prob <= 0.1:
            raise ValueError(f"double_pair_prob must be in [0, 0.1], got {self.double_pair_prob}")


@dataclass(frozen=True)
class DetectorSpec:
    """Single-photon detector model: efficiency, darks, jitter, dead time."""

    efficiency: float = 1.0
    dark_rate: float = 0.0
    jitter_sigma_ps: float = 0.0
    dead_time_ps: int = 50_000  # typical APD; not stated by the source experiment

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must be in [0, 1], got {self.efficiency}")
        if self.dark_rate < 0 or self.jitter_sigma_ps < 0 or self.dead_time_ps < 0:
            raise ValueError("dark_rate, jitter_sigma_ps and dead_time_ps must be non-negative")


@dataclass(frozen=True)
class TagStream:
    """Sorted detection times (integer ps) on one channel."""

    channel: int
    times: np.ndarray = field(repr=False)
    duration_ps: int = 0

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.int64)
        object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.times)

    def rate(self) -> float:
        """Mean count rate in 1/s."""
        if self.duration_ps <= 0:
            raise ValueError("stream has no duration")
        return len(self.times) * PS_PER_S / self.duration_ps


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def _poisson_times(rate: float, duration_ps: int, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson process on [0, duration_ps) as sorted int64 ticks."""
    if rate <= 0 or duration_ps <= 0:
        return np.empty(0, dtype=np.int64)
    n = rng.poisson(rate * duration_ps / PS_PER_S)
    return np.sort(rng.integers(0, duration_ps, size=n, dtype=np.int64))


def generate_spdc_pairs(spec: SourceSpec, duration_s: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Pair-emission arrivals for both arms over duration_s seconds.

    Both arms receive the same emission instants; a double event contributes
    the instant twice to each arm.  Fiber/path delays belong to the analysis
    stage, not here.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = _rng(seed)
    duration_ps = int(round(duration_s * PS_PER_S))
    t = _poisson_times(spec.pair_rate, duration_ps, rng)
    if spec.double_pair_prob > 0 and len(t):
        doubles = rng.random(len(t)) < spec.double_pair_prob
        t = np.sort(np.concatenate([t, t[doubles]]))
    return t, t.copy()


def generate_laser_arrivals(rate: float, duration_s: float, seed) -> np.ndarray:
    """Poissonian arrival stream of an attenuated laser."""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if rate < 0:
        raise ValueError("rate must be non-negative")
    return _poisson_times(rate, int(round(duration_s * PS_PER_S)), _rng(seed))


def _bernoulli_keep(times: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    if p >= 1.0:
        return times
    if p <= 0.0 or len(times) == 0:
        return times[:0]
    return times[rng.random(len(times)) < p]


def _apply_jitter(times: np.ndarray, sigma_ps: float, duration_ps: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Gaussian time jitter, clamped at 0; tags pushed past the end are dropped."""
    if sigma_ps <= 0 or len(times) == 0:
        return times
    shifted = np.rint(times + rng.normal(0.0, sigma_ps, size=len(times))).astype(np.int64)
    shifted = np.maximum(shifted, 0)
    return shifted[shifted < duration_ps]


def detect(arrivals: np.ndarray, det: DetectorSpec, channel: int, duration_s: float,
           seed) -> TagStream:
    """Convert photon arrivals on one detector into time tags.

    Each arrival survives with probability det.efficiency, survivors are
    jittered, dark counts are merged in as an independent Poisson stream,
    and the dead time then discards tags too close to an accepted one.
    """
    arrivals = np.ascontiguousarray(arrivals, dtype=np.int64)
    if len(arrivals) > 1 and np.any(np.diff(arrivals) < 0):
        raise ValueError("arrivals must be sorted")
    rng = _rng(seed)
    duration_ps = int(round(duration_s * PS_PER_S))
    t = _bernoulli_keep(arrivals, det.efficiency, rng)
    t = _apply_jitter(t, det.jitter_sigma_ps, duration_ps, rng)
    darks = _poisson_times(det.dark_rate, duration_ps, rng)
    if len(darks):
        t = np.concatenate([t, darks])
    t = np.sort(t)
    if det.dead_time_ps > 0 and len(t):
        t = t[kernels.dead_time_mask(t, det.dead_time_ps)]
    return TagStream(channel=channel, times=t, duration_ps=duration_ps)
