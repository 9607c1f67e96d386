"""Waveguide loss channel and the analysis beamsplitter, acting on streams.

Loss is linear and uncorrelated: each photon independently survives the
in-coupling, propagation and out-coupling with a single total probability,
so a stream is Bernoulli-thinned.  Propagation delay (tens of fs) is far
below the 1 ps tick and is neglected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WaveguideSpec:
    """Geometry and coupling of one stripe waveguide.

    length_um is the grating separation, prop_length_um the 1/e intensity
    decay length, pol_angle_rad the incident polarization angle relative to
    the grating coupling axis.
    """

    length_um: float
    prop_length_um: float
    coupling_in: float = 1.0
    coupling_out: float = 1.0
    pol_angle_rad: float = 0.0

    def __post_init__(self):
        if self.length_um < 0:
            raise ValueError("length_um must be non-negative")
        if self.prop_length_um <= 0:
            raise ValueError("prop_length_um must be positive")
        for name in ("coupling_in", "coupling_out"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def waveguide_survival(w: WaveguideSpec) -> float:
    """Per-photon survival probability through the full guide.

    coupling_in * coupling_out * cos^2(pol angle) * exp(-L / propagation length).
    """
    return (
        w.coupling_in
        * w.coupling_out
        * math.cos(w.pol_angle_rad) ** 2
        * math.exp(-w.length_um / w.prop_length_um)
    )


def thin_stream(arrivals: np.ndarray, eta: float, seed) -> np.ndarray:
    """Bernoulli thinning: keep each arrival independently with probability eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"survival probability must be in [0, 1], got {eta}")
    arrivals = np.asarray(arrivals, dtype=np.int64)
    if eta == 1.0:
        return arrivals
    if eta == 0.0 or len(arrivals) == 0:
        return arrivals[:0]
    rng = np.random.default_rng(seed)
    return arrivals[rng.random(len(arrivals)) < eta]


def split_stream(arrivals: np.ndarray, ratio: float = 0.5, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Route each arrival to output 1 with probability ratio, else output 2.

    The two outputs partition the input exactly.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"splitting ratio must be in [0, 1], got {ratio}")
    arrivals = np.asarray(arrivals, dtype=np.int64)
    rng = np.random.default_rng(seed)
    to_first = rng.random(len(arrivals)) < ratio
    return arrivals[to_first], arrivals[~to_first]
