"""Simulation and analysis of photon/plasmon counting experiments.

The simulation side generates time-tag streams for a heralded pair source
or an attenuated laser sent through a lossy waveguide onto a beamsplitter
and detectors.  The analysis side reproduces the standard quantum-optics
measurements on those streams: second-order coherence, accidental
coincidence corrections, photon-number population tomography and
propagation-length extraction.

Counting runs on a compiled extension when available; see
plasmonlab.coincidence.KERNEL_BACKEND for which implementation is active.
"""

from ._backend import KERNEL_BACKEND
from .coincidence import (
    CoincConfig,
    CountSummary,
    G2Point,
    accidental_triple_rate,
    count_pairs,
    count_summary,
    count_triples,
    g2_accidental_offset,
    g2_conditional,
    g2_curve,
    g2_unconditioned,
)
from .dispersion import StripeParams, gold_permittivity, grating_period, spp_wavevector
from .fitting import DecaySeries, ExpFitResult, fit_exponential
from .fock import PhotonNumberDist, apply_loss, click_probabilities, coherent, fock, g2_zero, thermal
from .optics import WaveguideSpec, split_stream, thin_stream, waveguide_survival
from .source import (
    CHANNEL_A,
    CHANNEL_B1,
    CHANNEL_B2,
    DetectorSpec,
    SourceSpec,
    TagStream,
    detect,
    generate_laser_arrivals,
    generate_spdc_pairs,
)
from .tomography import (
    EfficiencyLadder,
    EmResult,
    NoClickData,
    em_reconstruct,
    forward_noclick,
    monte_carlo_errors,
    noclick_from_heralded,
    noclick_from_laser,
)

__version__ = "0.1.0"
