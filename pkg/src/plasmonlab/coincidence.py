"""Coincidence counting and second-order coherence estimators.

Window convention (used everywhere, including the brute-force test oracle):
a centered window of full width ``window_ps``; two tags coincide at delay
``tau_ps`` when |t_y - tau_ps - t_x| <= window_ps // 2.  Pair counting is
greedy earliest-match with each tag consumed at most once, which is what
standard counting electronics do.  Triple counting asks for at least one
B1 tag and one B2 tag inside the window centered on each A tag (B2 shifted
by tau_ps) without consuming them.

The two estimators:

* unconditioned   g2(tau) = N_B1B2 * T / (N_B1 * N_B2 * dt)
* conditional     g2_c(tau) = N_A * N_AB1B2 / (N_AB1 * N_AB2)

with the accidental-coincidence predictors used to explain their nonzero
floors.  Standard errors come from Poisson counting statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from ._backend import KERNEL_BACKEND, kernels
from .errors import UndefinedStatisticError
from .source import PS_PER_S, TagStream

__all__ = [
    "CoincConfig",
    "CountSummary",
    "G2Point",
    "KERNEL_BACKEND",
    "accidental_triple_rate",
    "apply_delays",
    "count_pairs",
    "count_summary",
    "count_triples",
    "g2_accidental_offset",
    "g2_conditional",
    "g2_curve",
    "g2_unconditioned",
    "subtract_background",
]


@dataclass(frozen=True)
class CoincConfig:
    """Coincidence window, integration time and per-channel delays (all ps)."""

    window_ps: int
    integration_time_ps: int
    channel_delays_ps: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.window_ps <= 0:
            raise ValueError("window_ps must be positive")
        if self.integration_time_ps <= 0:
            raise ValueError("integration_time_ps must be positive")


@dataclass(frozen=True)
class CountSummary:
    """Singles, pair and triple counts of one analysis pass.

    Pair and triple counts involving B2 are taken with B2 delayed by tau_ps;
    N_AB1 is always at zero delay.
    """

    n_a: int
    n_b1: int
    n_b2: int
    n_b1b2: int
    n_ab1: int
    n_ab2: int
    n_ab1b2: int
    tau_ps: int
    window_ps: int
    integration_time_ps: int

    def __post_init__(self):
        if self.n_ab1b2 > min(self.n_ab1, self.n_ab2):
            raise ValueError("triple count exceeds a pair count")

    def as_dict(self) -> dict:
        return {
            "N_A": self.n_a,
            "N_B1": self.n_b1,
            "N_B2": self.n_b2,
            "N_B1B2": self.n_b1b2,
            "N_AB1": self.n_ab1,
            "N_AB2": self.n_ab2,
            "N_AB1B2": self.n_ab1b2,
            "tau_ps": self.tau_ps,
            "window_ps": self.window_ps,
            "integration_time_ps": self.integration_time_ps,
        }


class G2Point(NamedTuple):
    """One delay point of a g2 curve."""

    tau_ps: int
    g2: float
    stderr: float
    n_pairs: int
    n_triples: int


def _times(stream) -> np.ndarray:
    if isinstance(stream, TagStream):
        return stream.times
    return np.ascontiguousarray(stream, dtype=np.int64)


def _check_sorted(t: np.ndarray, name: str):
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise ValueError(f"{name} stream is not sorted")


def count_pairs(stream_x, stream_y, window_ps: int, tau_ps: int = 0, *, check: bool = True) -> int:
    """Greedily matched coincidences between two sorted streams."""
    x, y = _times(stream_x), _times(stream_y)
    if check:
        _check_sorted(x, "X")
        _check_sorted(y, "Y")
    return int(kernels.count_pairs(x, y, window_ps, tau_ps))


def count_triples(stream_a, stream_b1, stream_b2, window_ps: int, tau_ps: int = 0,
                  *, check: bool = True) -> int:
    """A tags seeing at least one B1 and one B2 tag in the centered window."""
    a, b1, b2 = _times(stream_a), _times(stream_b1), _times(stream_b2)
    if check:
        _check_sorted(a, "A")
        _check_sorted(b1, "B1")
        _check_sorted(b2, "B2")
    return int(kernels.count_triples(a, b1, b2, window_ps, tau_ps))


def apply_delays(streams: Mapping[int, np.ndarray], delays: Mapping[int, int]) -> dict:
    """Shift each channel by its signed delay (ps) before counting."""
    out = {}
    for channel, times in streams.items():
        d = int(delays.get(channel, 0))
        t = _times(times)
        out[channel] = t + d if d else t
    return out


def g2_unconditioned(c: CountSummary) -> float:
    """Eq.-1-style estimator N_B1B2 * T / (N_B1 * N_B2 * dt)."""
    if c.n_b1 <= 0 or c.n_b2 <= 0:
        raise UndefinedStatisticError("unconditioned g2 needs nonzero singles on B1 and B2")
    return c.n_b1b2 * c.integration_time_ps / (c.n_b1 * c.n_b2 * c.window_ps)


def g2_conditional(c: CountSummary) -> float:
    """Eq.-2-style estimator N_A * N_AB1B2 / (N_AB1 * N_AB2)."""
    if c.n_ab1 <= 0 or c.n_ab2 <= 0:
        raise UndefinedStatisticError("conditional g2 needs nonzero pair counts")
    return c.n_a * c.n_ab1b2 / (c.n_ab1 * c.n_ab2)


def _rel_err(*counts: int) -> float:
    """Relative Poisson error of a product/ratio of counts (zero-safe)."""
    return math.sqrt(sum(1.0 / max(n, 1) for n in counts))


def count_summary(stream_a, stream_b1, stream_b2, config: CoincConfig,
                  tau_ps: int = 0) -> CountSummary:
    """All singles/pair/triple counts at one delay, after channel delays."""
    from .source import CHANNEL_A, CHANNEL_B1, CHANNEL_B2

    streams = apply_delays(
        {CHANNEL_A: stream_a, CHANNEL_B1: stream_b1, CHANNEL_B2: stream_b2},
        config.channel_delays_ps,
    )
    a, b1, b2 = streams[CHANNEL_A], streams[CHANNEL_B1], streams[CHANNEL_B2]
    for t, name in ((a, "A"), (b1, "B1"), (b2, "B2")):
        _check_sorted(t, name)
    w = config.window_ps
    return CountSummary(
        n_a=len(a),
        n_b1=len(b1),
        n_b2=len(b2),
        n_b1b2=count_pairs(b1, b2, w, tau_ps, check=False),
        n_ab1=count_pairs(a, b1, w, 0, check=False),
        n_ab2=count_pairs(a, b2, w, tau_ps, check=False),
        n_ab1b2=count_triples(a, b1, b2, w, tau_ps, check=False),
        tau_ps=tau_ps,
        window_ps=w,
        integration_time_ps=config.integration_time_ps,
    )


def g2_curve(streams: Sequence, window_ps: int, tau_range: tuple[int, int], tau_step: int,
             conditional: bool = False, integration_time_ps: int | None = None) -> list[G2Point]:
    """Sweep the estimator over delays tau_range = (lo, hi) inclusive.

    streams is (B1, B2) for the unconditioned estimator and (A, B1, B2) for
    the conditional one, already delay-corrected.  Points whose estimator is
    undefined (zero pair counts at that delay) carry NaN.
    """
    if tau_step <= 0:
        raise ValueError("tau_step must be positive")
    lo, hi = tau_range
    taus = range(int(lo), int(hi) + 1, int(tau_step))
    if len(taus) == 0:
        raise ValueError("empty delay range")

    points = []
    if conditional:
        if len(streams) != 3:
            raise ValueError("conditional curve needs (A, B1, B2) streams")
        a, b1, b2 = (_times(s) for s in streams)
        for t, name in ((a, "A"), (b1, "B1"), (b2, "B2")):
            _check_sorted(t, name)
        n_a = len(a)
        n_ab1 = count_pairs(a, b1, window_ps, 0, check=False)
        for tau in taus:
            n_ab2 = count_pairs(a, b2, window_ps, tau, check=False)
            n_triple = count_triples(a, b1, b2, window_ps, tau, check=False)
            if n_ab1 <= 0 or n_ab2 <= 0:
                points.append(G2Point(tau, math.nan, math.nan, n_ab2, n_triple))
                continue
            g2 = n_a * n_triple / (n_ab1 * n_ab2)
            scale = n_a / (n_ab1 * n_ab2)
            err = g2 * _rel_err(n_triple, n_a, n_ab1, n_ab2) if n_triple else scale
            points.append(G2Point(tau, g2, err, n_ab2, n_triple))
    else:
        if len(streams) != 2:
            raise ValueError("unconditioned curve needs (B1, B2) streams")
        b1, b2 = (_times(s) for s in streams)
        _check_sorted(b1, "B1")
        _check_sorted(b2, "B2")
        if integration_time_ps is None:
            raise ValueError("unconditioned curve needs integration_time_ps")
        n_b1, n_b2 = len(b1), len(b2)
        if n_b1 == 0 or n_b2 == 0:
            raise UndefinedStatisticError("unconditioned g2 needs nonzero singles")
        norm = integration_time_ps / (n_b1 * n_b2 * window_ps)
        for tau in taus:
            n_pair = count_pairs(b1, b2, window_ps, tau, check=False)
            g2 = n_pair * norm
            err = g2 * _rel_err(n_pair, n_b1, n_b2) if n_pair else norm
            points.append(G2Point(tau, g2, err, n_pair, 0))
    return points


def accidental_triple_rate(r_ab1: float, r_b2: float, r_ab2: float, r_b1: float,
                           window_s: float) -> float:
    """Accidental triple rate dt*(R_AB1*R_B2 + R_AB2*R_B1) in 1/s.

    Valid when the pair rates are dominated by true coincidences; for fully
    independent streams the two terms describe the same accidental
    population and the expression counts it twice.
    """
    if min(r_ab1, r_b2, r_ab2, r_b1, window_s) < 0:
        raise ValueError("rates and window must be non-negative")
    return window_s * (r_ab1 * r_b2 + r_ab2 * r_b1)


def g2_accidental_offset(r_a: float, r_b1: float, r_ab1: float, r_b2: float, r_ab2: float,
                         window_s: float) -> float:
    """Accidental floor of the conditional g2: dt*R_A*(R_B1/R_AB1 + R_B2/R_AB2)."""
    if r_ab1 <= 0 or r_ab2 <= 0:
        raise UndefinedStatisticError("accidental offset needs nonzero conditional rates")
    return window_s * r_a * (r_b1 / r_ab1 + r_b2 / r_ab2)


def subtract_background(c: CountSummary, dark_rates: Mapping[str, float]) -> CountSummary:
    """Background-corrected counts: dark-rate*T off the singles, accidental
    estimates off the pair counts.  dark_rates keys are "A", "B1", "B2" in 1/s.

    Accidental pair estimates use the raw measured singles rates, since
    accidentals arise from everything that clicks.  Counts clamp at zero.
    """
    t_s = c.integration_time_ps / PS_PER_S
    w_s = c.window_ps / PS_PER_S
    darks = {k: dark_rates.get(k, 0.0) * t_s for k in ("A", "B1", "B2")}
    rates = {"A": c.n_a / t_s, "B1": c.n_b1 / t_s, "B2": c.n_b2 / t_s}

    def _pair(n, x, y):
        return max(round(n - w_s * rates[x] * rates[y] * t_s), 0)

    n_ab1 = _pair(c.n_ab1, "A", "B1")
    n_ab2 = _pair(c.n_ab2, "A", "B2")
    return CountSummary(
        n_a=max(round(c.n_a - darks["A"]), 0),
        n_b1=max(round(c.n_b1 - darks["B1"]), 0),
        n_b2=max(round(c.n_b2 - darks["B2"]), 0),
        n_b1b2=_pair(c.n_b1b2, "B1", "B2"),
        n_ab1=n_ab1,
        n_ab2=n_ab2,
        n_ab1b2=min(c.n_ab1b2, n_ab1, n_ab2),
        tau_ps=c.tau_ps,
        window_ps=c.window_ps,
        integration_time_ps=c.integration_time_ps,
    )
