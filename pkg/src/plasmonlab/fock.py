"""Photon-number distributions and exact counting statistics.

Everything in this module is analytic: truncated photon-number probability
vectors, the standard state families (number, coherent, thermal), the
binomial loss channel, the zero-delay second-order coherence, and exact
click probabilities for a balanced splitter feeding two on/off detectors.
These functions double as brute-force oracles for the event-stream
simulator, so they favour explicit summation over closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TruncationError, UndefinedStatisticError

DEFAULT_TRUNCATION = 30

# Constructors reject inputs whose untruncated tail mass exceeds this, rather
# than silently renormalizing a large tail away.
TAIL_MASS_LIMIT = 1e-6

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class PhotonNumberDist:
    """Probabilities of finding n = 0..n_t photons in a single mode.

    probs is normalized to 1 within 1e-9; entries are non-negative.
    """

    probs: np.ndarray = field(repr=False)
    n_t: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or len(probs) != self.n_t + 1:
            raise ValueError(f"probs must have length n_t+1 = {self.n_t + 1}, got {probs.shape}")
        if np.any(probs < -1e-15):
            raise ValueError("negative probability entry")
        probs = np.clip(probs, 0.0, None)
        total = probs.sum()
        if not math.isfinite(total) or total <= 0:
            raise ValueError("probabilities must have positive finite sum")
        if abs(total - 1.0) > _NORM_TOL:
            raise ValueError(f"probabilities sum to {total}, not 1 within {_NORM_TOL}")
        probs = probs / total
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    def mean(self) -> float:
        n = np.arange(self.n_t + 1)
        return float(np.dot(n, self.probs))

    def factorial_moment(self, k: int) -> float:
        """<n(n-1)...(n-k+1)> by direct summation."""
        n = np.arange(self.n_t + 1, dtype=float)
        term = np.ones_like(n)
        for j in range(k):
            term = term * (n - j)
        return float(np.dot(np.clip(term, 0.0, None), self.probs))

    def to_json(self) -> str:
        return json.dumps({"n_t": self.n_t, "probs": self.probs.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PhotonNumberDist":
        doc = json.loads(text)
        return cls(probs=np.asarray(doc["probs"], dtype=float), n_t=int(doc["n_t"]))


def _normalized(weights: np.ndarray, n_t: int, tail_mass: float, label: str) -> PhotonNumberDist:
    if tail_mass > TAIL_MASS_LIMIT:
        raise TruncationError(
            f"{label}: untruncated tail mass {tail_mass:.3g} above n_t={n_t} "
            f"exceeds {TAIL_MASS_LIMIT:g}; raise n_t"
        )
    return PhotonNumberDist(probs=weights / weights.sum(), n_t=n_t)


def fock(n: int, n_t: int = DEFAULT_TRUNCATION) -> PhotonNumberDist:
    """Number state: all probability on exactly n photons."""
    if n < 0:
        raise ValueError(f"photon number must be non-negative, got {n}")
    if n > n_t:
        raise TruncationError(f"fock({n}) does not fit below truncation n_t={n_t}")
    probs = np.zeros(n_t + 1)
    probs[n] = 1.0
    return PhotonNumberDist(probs=probs, n_t=n_t)


def coherent(mean: float, n_t: int = DEFAULT_TRUNCATION) -> PhotonNumberDist:
    """Poissonian distribution of a coherent state with the given mean."""
    if mean < 0:
        raise ValueError(f"mean must be non-negative, got {mean}")
    if mean == 0:
        return fock(0, n_t)
    n = np.arange(n_t + 1)
    log_w = -mean + n * math.log(mean) - np.array([math.lgamma(k + 1) for k in range(n_t + 1)])
    weights = np.exp(log_w)
    tail = 1.0 - weights.sum()
    return _normalized(weights, n_t, max(tail, 0.0), f"coherent({mean})")


def thermal(mean: float, n_t: int = DEFAULT_TRUNCATION) -> PhotonNumberDist:
    """Bose-Einstein (geometric) distribution with the given mean."""
    if mean < 0:
        raise ValueError(f"mean must be non-negative, got {mean}")
    if mean == 0:
        return fock(0, n_t)
    q = mean / (1.0 + mean)
    n = np.arange(n_t + 1)
    weights = q**n / (1.0 + mean)
    tail = q ** (n_t + 1)
    return _normalized(weights, n_t, tail, f"thermal({mean})")


def g2_zero(d: PhotonNumberDist) -> float:
    """Zero-delay second-order coherence <n(n-1)> / <n>^2.

    0 for a single photon, 1 - 1/n for number states, 1 for coherent
    light, 2 for thermal light.
    """
    mean = d.mean()
    if mean <= 0:
        raise UndefinedStatisticError("g2(0) is undefined for zero mean excitation")
    return d.factorial_moment(2) / mean**2


def apply_loss(d: PhotonNumberDist, eta: float) -> PhotonNumberDist:
    """Binomial (Bernoulli-thinning) loss channel with survival probability eta.

    Each photon independently survives with probability eta, so
    rho'_m = sum_{n>=m} C(n,m) eta^m (1-eta)^(n-m) rho_n.  Factorial moments
    scale as eta^k, which leaves g2(0) unchanged.  Implemented as the explicit
    O(n_t^2) sum; this is the exact oracle, not a sampler.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"survival probability must be in [0, 1], got {eta}")
    if eta == 1.0:
        return d
    if eta == 0.0:
        return fock(0, d.n_t)
    size = d.n_t + 1
    lgam = np.array([math.lgamma(k + 1) for k in range(size)])
    m = np.arange(size)[:, None]  # photons after loss
    n = np.arange(size)[None, :]  # photons before loss
    diff = np.maximum(n - m, 0)
    log_pmf = (
        lgam[n] - lgam[m] - lgam[diff]
        + m * math.log(eta) + diff * math.log1p(-eta)
    )
    transfer = np.where(n >= m, np.exp(log_pmf), 0.0)
    return PhotonNumberDist(probs=transfer @ d.probs, n_t=d.n_t)


def click_probabilities(d: PhotonNumberDist, eta1: float, eta2: float) -> tuple[float, float, float]:
    """Exact click statistics for a 50/50 splitter into two on/off detectors.

    Brute-forced over the photon number n and all binomial routings of the
    n photons between the two output arms; detector i fires when at least
    one routed photon is detected (probability eta_i each).  Returns the
    marginal probabilities (pB1, pB2) and the joint probability pB1B2 per
    state preparation.
    """
    for eta in (eta1, eta2):
        if not 0.0 <= eta <= 1.0:
            raise ValueError(f"detector efficiency must be in [0, 1], got {eta}")
    p1 = p2 = p12 = 0.0
    for n in range(d.n_t + 1):
        p_n = d.probs[n]
        if p_n == 0.0:
            continue
        route = 0.5**n  # C(n,k)/2^n, starting at k=0
        for k in range(n + 1):
            if k > 0:
                route *= (n - k + 1) / k
            w = p_n * route
            click1 = 1.0 - (1.0 - eta1) ** k
            click2 = 1.0 - (1.0 - eta2) ** (n - k)
            p1 += w * click1
            p2 += w * click2
            p12 += w * click1 * click2
    return p1, p2, p12
