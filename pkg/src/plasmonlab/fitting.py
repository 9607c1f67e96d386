"""Exponential decay fitting for propagation-length extraction.

Counts vs waveguide length are fit to N(L) = N0 * exp(-L / ell) by weighted
nonlinear least squares (Levenberg-Marquardt), initialized from a weighted
log-linear regression.  The log-linear fit alone would mis-weight Poisson
errors, so it only seeds the nonlinear stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import FitFailureError


@dataclass(frozen=True)
class DecaySeries:
    """Counts against waveguide length with optional count errors.

    Without explicit errors, Poisson errors max(sqrt(N), 1) are assumed.
    """

    lengths_um: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    count_errors: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        lengths = np.asarray(self.lengths_um, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if lengths.ndim != 1 or lengths.shape != counts.shape:
            raise ValueError("lengths and counts must be 1-d vectors of equal length")
        if len(lengths) < 3:
            raise ValueError("need at least 3 points")
        if np.any(np.diff(lengths) <= 0):
            raise ValueError("lengths must be strictly increasing")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "lengths_um", lengths)
        object.__setattr__(self, "counts", counts)
        if self.count_errors is not None:
            errors = np.asarray(self.count_errors, dtype=float)
            if errors.shape != counts.shape or np.any(errors <= 0):
                raise ValueError("count errors must be positive and match counts")
            object.__setattr__(self, "count_errors", errors)

    def errors(self) -> np.ndarray:
        if self.count_errors is not None:
            return self.count_errors
        return np.maximum(np.sqrt(self.counts), 1.0)


@dataclass(frozen=True)
class ExpFitResult:
    n0: float
    ell_um: float
    sigma_ell: float
    chi2: float
    dof: int

    def as_dict(self) -> dict:
        return {
            "N0": self.n0,
            "ell_um": self.ell_um,
            "sigma_ell": self.sigma_ell,
            "chi2": self.chi2,
            "dof": self.dof,
        }


def _model(length, n0, ell):
    return n0 * np.exp(-length / ell)


def _log_linear_seed(s: DecaySeries) -> tuple[float, float]:
    """Weighted straight-line fit of log(counts) vs length; zero counts excluded."""
    keep = s.counts > 0
    x = s.lengths_um[keep]
    y = np.log(s.counts[keep])
    w = (s.counts[keep] / s.errors()[keep]) ** 2  # var(log N) ~ (err/N)^2
    sw = w.sum()
    mx = np.dot(w, x) / sw
    my = np.dot(w, y) / sw
    sxx = np.dot(w, (x - mx) ** 2)
    if sxx <= 0:
        return float(np.exp(my)), float(x.max() - x.min() + 1.0)
    slope = np.dot(w, (x - mx) * (y - my)) / sxx
    span = x.max() - x.min()
    ell0 = -1.0 / slope if slope < 0 else 10.0 * span
    n0 = math.exp(my + mx / ell0)
    return n0, ell0


def fit_exponential(s: DecaySeries) -> ExpFitResult:
    """Weighted least-squares fit of N(L) = N0 exp(-L/ell).

    sigma_ell comes from the fit covariance (absolute errors, not rescaled
    by reduced chi2); chi2 and the degrees of freedom are reported alongside.
    """
    nonzero = int(np.count_nonzero(s.counts))
    if nonzero < 2:
        raise FitFailureError(f"need at least 2 nonzero counts, got {nonzero}")
    errors = s.errors()
    p0 = _log_linear_seed(s)
    try:
        popt, pcov = curve_fit(
            _model, s.lengths_um, s.counts, p0=p0, sigma=errors,
            absolute_sigma=True, maxfev=20_000,
        )
    except RuntimeError as exc:
        raise FitFailureError(f"nonlinear fit did not converge: {exc}") from exc
    n0, ell = popt
    sigma_ell = math.sqrt(pcov[1, 1]) if np.isfinite(pcov[1, 1]) else math.inf
    if not (np.all(np.isfinite(popt)) and math.isfinite(sigma_ell)):
        raise FitFailureError(
            f"fit returned non-finite optimum: N0={n0}, ell={ell}, sigma_ell={sigma_ell}; "
            f"seed was N0={p0[0]:.4g}, ell={p0[1]:.4g}"
        )
    resid = (s.counts - _model(s.lengths_um, *popt)) / errors
    chi2 = float(np.dot(resid, resid))
    return ExpFitResult(
        n0=float(n0), ell_um=float(ell), sigma_ell=float(sigma_ell),
        chi2=chi2, dof=len(s.counts) - 2,
    )
