"""Stripe-waveguide plasmon wavevector and grating phase matching.

The effective-index approximation for a metal stripe of width W bounds the
transverse wavevector at pi/W:

    k_sp = sqrt((omega/c)^2 * eps_m / (1 + eps_m) - pi^2 / W^2)

evaluated with the real part of the metal permittivity for the propagation
constant.  A first-order grating converts normally incident photons when
the grating momentum 2*pi*m / period matches k_sp, which fixes the period.
The shallow-grating condition is all this module implements; deep-groove
corrections belong to full-wave solvers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ModeCutoffError

# Gold relative permittivity (eps_re, eps_im) against wavelength in nm,
# following a Drude-model fit to experimental near-infrared optical
# constants (eps_inf = 9.84, plasma energy 9.01 eV, collision energy
# 0.072 eV); values agree with the standard tabulated data to a few
# percent across 600-1000 nm.  Interpolated linearly in wavelength.
GOLD_PERMITTIVITY_TABLE = (
    (600.0, -9.149, 0.662),
    (650.0, -12.441, 0.841),
    (700.0, -15.994, 1.050),
    (750.0, -19.809, 1.291),
    (800.0, -23.886, 1.567),
    (850.0, -28.223, 1.879),
    (900.0, -32.820, 2.230),
    (950.0, -37.676, 2.621),
    (1000.0, -42.793, 3.056),
)


def gold_permittivity(wavelength_nm: float) -> complex:
    """Bundled gold permittivity, linearly interpolated in wavelength."""
    table = GOLD_PERMITTIVITY_TABLE
    if not table[0][0] <= wavelength_nm <= table[-1][0]:
        raise ValueError(
            f"wavelength {wavelength_nm} nm outside the bundled gold table "
            f"({table[0][0]}-{table[-1][0]} nm)"
        )
    for (w0, re0, im0), (w1, re1, im1) in zip(table, table[1:]):
        if w0 <= wavelength_nm <= w1:
            x = (wavelength_nm - w0) / (w1 - w0)
            return complex(re0 + x * (re1 - re0), im0 + x * (im1 - im0))
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class StripeParams:
    """Free-space wavelength (nm), metal permittivity and stripe width (um)."""

    wavelength_nm: float
    eps_metal: complex
    width_um: float

    def __post_init__(self):
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength must be positive")
        if self.eps_metal.real >= -1.0:
            raise ValueError(
                f"Re(eps_metal) = {self.eps_metal.real} must be below -1 for a bound mode"
            )
        if not self.width_um > 0:
            raise ValueError("width must be positive")

    @classmethod
    def gold(cls, wavelength_nm: float, width_um: float) -> "StripeParams":
        return cls(wavelength_nm, gold_permittivity(wavelength_nm), width_um)


def spp_wavevector(p: StripeParams) -> float:
    """Real propagation constant of the stripe mode in 1/um.

    width_um may be math.inf, giving the flat-interface wavevector
    (omega/c) * sqrt(eps/(1+eps)) with real parts.
    """
    eps = p.eps_metal.real
    k0 = 2.0 * math.pi / (p.wavelength_nm * 1e-3)  # 1/um
    radicand = k0**2 * eps / (1.0 + eps)
    if math.isfinite(p.width_um):
        radicand -= (math.pi / p.width_um) ** 2
    if radicand <= 0:
        raise ModeCutoffError(
            f"stripe of width {p.width_um} um is below cutoff at "
            f"{p.wavelength_nm} nm (radicand {radicand:.4g})"
        )
    return math.sqrt(radicand)


def grating_period(p: StripeParams, m: int = 1) -> float:
    """Grating period in nm whose order-m momentum phase-matches the mode."""
    if m < 1:
        raise ValueError("grating order must be a positive integer")
    return 2.0 * math.pi * m / spp_wavevector(p) * 1e3
