"""Photon-number population reconstruction from on/off detection.

A detector of efficiency eta misses everything with probability
p(eta) = sum_n (1-eta)^n rho_n.  Measuring the no-click frequency f_nu at
several efficiencies eta_nu turns the populations rho_n into a linear
positive inverse problem p = A rho with A[nu, n] = (1-eta_nu)^n, solved
here by iterative expectation maximization.

The default update is the two-outcome (no-click / click) binomial EM,
whose log-likelihood is non-decreasing by the standard EM argument; the
multiplicative no-click-frequency form with column normalization is
available as update="noclick" but does not carry that guarantee.  Error
bars come from re-running the reconstruction on Gaussian-perturbed
frequencies.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import DataInconsistencyError, UnderdeterminedError
from .fock import PhotonNumberDist
from .source import TagStream

DEFAULT_DETECTION_EFFICIENCY = 0.55 / 2  # detector plus analysis beamsplitter


@dataclass(frozen=True)
class EfficiencyLadder:
    """Distinct on/off detection efficiencies eta_nu in (0, 1]."""

    etas: np.ndarray = field(repr=False)

    def __post_init__(self):
        etas = np.asarray(self.etas, dtype=float)
        if etas.ndim != 1 or len(etas) == 0:
            raise ValueError("etas must be a non-empty 1-d vector")
        if np.any(etas <= 0) or np.any(etas > 1):
            raise ValueError("every efficiency must be in (0, 1]")
        if len(np.unique(etas)) != len(etas):
            raise ValueError("efficiencies must be distinct")
        etas = etas.copy()
        etas.flags.writeable = False
        object.__setattr__(self, "etas", etas)

    def __len__(self):
        return len(self.etas)


@dataclass(frozen=True)
class NoClickData:
    """No-click frequencies per efficiency with their trial counts.

    sigma, when present, holds the 1-sigma uncertainty of each frequency;
    binomial_sigma() provides the default sqrt(f(1-f)/trials) estimate.
    """

    freqs: np.ndarray = field(repr=False)
    trials: np.ndarray = field(repr=False)
    sigma: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=float)
        trials = np.asarray(self.trials, dtype=float)
        if freqs.shape != trials.shape or freqs.ndim != 1:
            raise ValueError("freqs and trials must be 1-d vectors of equal length")
        if np.any(freqs < 0) or np.any(freqs > 1):
            raise ValueError("no-click frequencies must be in [0, 1]")
        if np.any(trials < 1):
            raise ValueError("trial counts must be at least 1")
        object.__setattr__(self, "freqs", _frozen(freqs))
        object.__setattr__(self, "trials", _frozen(trials))
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != freqs.shape or np.any(sigma < 0):
                raise ValueError("sigma must be non-negative and match freqs")
            object.__setattr__(self, "sigma", _frozen(sigma))

    def __len__(self):
        return len(self.freqs)

    def binomial_sigma(self) -> np.ndarray:
        return np.sqrt(self.freqs * (1.0 - self.freqs) / self.trials)

    def with_binomial_sigma(self) -> "NoClickData":
        return NoClickData(self.freqs, self.trials, self.binomial_sigma())


def _frozen(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.flags.writeable = False
    return a


def stack_noclick(rows) -> NoClickData:
    """Concatenate single-efficiency rows into one dataset."""
    rows = list(rows)
    sigma = None
    if all(r.sigma is not None for r in rows):
        sigma = np.concatenate([r.sigma for r in rows])
    return NoClickData(
        freqs=np.concatenate([r.freqs for r in rows]),
        trials=np.concatenate([r.trials for r in rows]),
        sigma=sigma,
    )


def forward_noclick(d: PhotonNumberDist, eta: float) -> float:
    """No-click probability sum_n (1-eta)^n rho_n of a known state."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency must be in [0, 1], got {eta}")
    n = np.arange(d.n_t + 1)
    return float(np.dot((1.0 - eta) ** n, d.probs))


def build_response(ladder: EfficiencyLadder, n_t: int) -> np.ndarray:
    """Response matrix A[nu, n] = (1 - eta_nu)^n, shape (N, n_t+1)."""
    n = np.arange(n_t + 1)
    return (1.0 - ladder.etas[:, None]) ** n[None, :]


@dataclass(frozen=True)
class EmResult:
    """Reconstructed populations plus convergence bookkeeping."""

    dist: PhotonNumberDist
    iterations: int
    converged: bool
    loglik: float
    ll_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def populations(self) -> np.ndarray:
        return self.dist.probs


def em_reconstruct(data: NoClickData, ladder: EfficiencyLadder, n_t: int = 6,
                   epsilon: float = 1e-8, max_iters: int = 1_000_000,
                   update: str = "binomial", track_loglik: bool = False) -> EmResult:
    """Maximum-likelihood populations from no-click frequencies.

    Starts from the unbiased distribution rho_n = 1/(n_t+1) and iterates
    until the largest per-population change drops below epsilon.  Zero
    frequencies are replaced by half a count, 1/(2 n_nu), to keep the
    iteration finite.  A run that hits max_iters is returned flagged
    (converged=False) and also warns.
    """
    if len(data) != len(ladder):
        raise ValueError("data and ladder must have one entry per efficiency")
    if len(ladder) <= n_t:
        raise UnderdeterminedError(
            f"{len(ladder)} efficiencies cannot determine {n_t + 1} populations; need N > n_t"
        )
    if update not in ("binomial", "noclick"):
        raise ValueError(f"unknown update {update!r}")

    A = build_response(ladder, n_t)
    f = np.where(data.freqs > 0, data.freqs, 0.5 / data.trials)
    weights = np.array(data.trials, dtype=float)  # copy: stored arrays are frozen
    rho = np.full(n_t + 1, 1.0 / (n_t + 1))
    trace = np.empty(int(max_iters) if track_loglik else 0, dtype=float)

    iters, converged, loglik = kernels.em_iterate(
        rho, np.ascontiguousarray(A), np.ascontiguousarray(f), weights,
        float(epsilon), int(max_iters), 1 if update == "noclick" else 0, trace,
    )
    if not converged:
        warnings.warn(
            f"EM reconstruction stopped at max_iters={max_iters} without converging "
            f"to epsilon={epsilon}", RuntimeWarning, stacklevel=2,
        )
    rho = rho / rho.sum()
    return EmResult(
        dist=PhotonNumberDist(probs=rho, n_t=n_t),
        iterations=int(iters),
        converged=bool(converged),
        loglik=float(loglik),
        ll_trace=trace[:iters].copy() if track_loglik else None,
    )


def binomial_loglik(data: NoClickData, d: PhotonNumberDist, ladder: EfficiencyLadder) -> float:
    """Two-outcome log-likelihood of populations given no-click data."""
    A = build_response(ladder, d.n_t)
    p = np.clip(A @ d.probs, 1e-300, 1 - 1e-15)
    n0 = data.freqs * data.trials
    ll = n0 * np.log(p)
    clicks = data.trials - n0
    ll = ll + np.where(clicks > 0, clicks * np.log1p(-p), 0.0)
    return float(ll.sum())


def noclick_from_heralded(n_a: int, n_ab1_per_eta, eta_d: float = DEFAULT_DETECTION_EFFICIENCY,
                          n_ab1_at_full: int | None = None) -> NoClickData:
    """Heralded no-click frequencies rescaled to the analysis-stage input.

    f_nu = (N_A - N_AB1_nu * eta_x) / N_A with eta_x = eta_d * N_A / N_AB1_at_full;
    the rescaling removes upstream losses so the reconstruction describes the
    state arriving at the attenuator/detector stage.  n_ab1_at_full defaults
    to the largest count (the unattenuated ladder step).
    """
    if n_a <= 0:
        raise ValueError("herald count must be positive")
    counts = np.asarray(n_ab1_per_eta, dtype=float)
    if np.any(counts < 0) or np.any(counts > n_a):
        raise ValueError("coincidence counts must be in [0, N_A]")
    if n_ab1_at_full is None:
        n_ab1_at_full = float(counts.max())
    if n_ab1_at_full <= 0:
        raise ValueError("full-transmission coincidence count must be positive")
    eta_x = eta_d * n_a / n_ab1_at_full
    freqs = (n_a - counts * eta_x) / n_a
    if np.any(freqs < 0):
        bad = int(np.argmin(freqs))
        raise DataInconsistencyError(
            f"loss rescaling eta_x={eta_x:.4g} drives f[{bad}] below zero; "
            "counts are inconsistent with the claimed detection efficiency"
        )
    trials = np.full(len(counts), float(n_a))
    return NoClickData(freqs, trials).with_binomial_sigma()


def noclick_from_laser(stream, window_ns: float = 500.0, period_us: float = 10.0,
                       runs: int = 10_000, duration_ps: int | None = None) -> NoClickData:
    """No-click frequency of periodic gating windows on one tag stream.

    Opens a window of window_ns every period_us, runs times in total, and
    reports the fraction of windows containing no tag.  Returns a
    single-row dataset; stack_noclick() assembles a ladder from streams
    attenuated upstream.
    """
    if isinstance(stream, TagStream):
        times = stream.times
        duration_ps = stream.duration_ps
    else:
        times = np.ascontiguousarray(stream, dtype=np.int64)
    window_ps = int(round(window_ns * 1000))
    period_ps = int(round(period_us * 1_000_000))
    if window_ps <= 0 or period_ps < window_ps or runs < 1:
        raise ValueError("need 0 < window <= period and at least one run")
    needed = (runs - 1) * period_ps + window_ps
    if duration_ps is not None and duration_ps < needed:
        raise ValueError(
            f"stream of {duration_ps} ps cannot hold {runs} windows of "
            f"{window_ps} ps every {period_ps} ps ({needed} ps needed)"
        )
    starts = np.arange(runs, dtype=np.int64) * period_ps
    lo = np.searchsorted(times, starts, side="left")
    hi = np.searchsorted(times, starts + window_ps, side="left")
    empty = int(np.count_nonzero(hi == lo))
    return NoClickData(
        freqs=np.array([empty / runs]),
        trials=np.array([float(runs)]),
    ).with_binomial_sigma()


def monte_carlo_errors(data: NoClickData, ladder: EfficiencyLadder, n_t: int = 6,
                       trials: int = 200, seed=0, epsilon: float = 1e-8,
                       max_iters: int = 200_000, update: str = "binomial") -> np.ndarray:
    """Per-population standard deviation from re-reconstruction.

    Each trial perturbs every frequency by Gaussian noise of its sigma
    (clamped to [0, 1]) and re-runs the EM; the spread of the reconstructed
    populations is the reported error.
    """
    if data.sigma is None:
        raise ValueError("data must carry sigma estimates; see with_binomial_sigma()")
    if trials < 100:
        raise ValueError("at least 100 Monte-Carlo trials are required")
    rng = np.random.default_rng(seed)
    samples = np.empty((trials, n_t + 1))
    with warnings.catch_warnings():
        # perturbed refits may legitimately hit the iteration cap; the spread
        # of where they stop is part of the error being estimated
        warnings.simplefilter("ignore", RuntimeWarning)
        for k in range(trials):
            f = np.clip(data.freqs + rng.normal(0.0, 1.0, len(data)) * data.sigma, 0.0, 1.0)
            perturbed = NoClickData(f, data.trials)
            result = em_reconstruct(perturbed, ladder, n_t, epsilon, max_iters, update)
            samples[k] = result.populations
    return samples.std(axis=0)


def noclick_to_json(data: NoClickData, ladder: EfficiencyLadder) -> str:
    doc = {
        "etas": ladder.etas.tolist(),
        "freqs": data.freqs.tolist(),
        "trials": data.trials.tolist(),
    }
    if data.sigma is not None:
        doc["sigma"] = data.sigma.tolist()
    return json.dumps(doc)


def noclick_from_json(text: str) -> tuple[NoClickData, EfficiencyLadder]:
    doc = json.loads(text)
    ladder = EfficiencyLadder(np.asarray(doc["etas"], dtype=float))
    data = NoClickData(
        freqs=np.asarray(doc["freqs"], dtype=float),
        trials=np.asarray(doc["trials"], dtype=float),
        sigma=np.asarray(doc["sigma"], dtype=float) if "sigma" in doc else None,
    )
    return data, ladder


def result_to_json(result: EmResult, errors: np.ndarray | None = None) -> str:
    return json.dumps(
        {
            "populations": result.populations.tolist(),
            "errors": errors.tolist() if errors is not None else None,
            "iterations": result.iterations,
            "converged": result.converged,
            "loglik": result.loglik,
        }
    )
