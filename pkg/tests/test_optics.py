import math

import numpy as np
import pytest

from plasmonlab.fock import apply_loss, click_probabilities, fock
from plasmonlab.optics import WaveguideSpec, split_stream, thin_stream, waveguide_survival
from plasmonlab.source import CHANNEL_B1, CHANNEL_B2, DetectorSpec, SourceSpec, detect, generate_spdc_pairs


def test_survival_reference_points():
    assert waveguide_survival(WaveguideSpec(0.0, 9.8)) == 1.0
    assert waveguide_survival(WaveguideSpec(9.8, 9.8)) == pytest.approx(math.exp(-1), rel=1e-12)
    assert waveguide_survival(
        WaveguideSpec(5.0, 9.8, pol_angle_rad=math.pi / 2)) == pytest.approx(0.0, abs=1e-12)


def test_survival_couplings_multiply():
    w = WaveguideSpec(7.5, 9.8, coupling_in=0.6, coupling_out=0.5)
    assert waveguide_survival(w) == pytest.approx(0.3 * math.exp(-7.5 / 9.8), rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        WaveguideSpec(-1.0, 9.8)
    with pytest.raises(ValueError):
        WaveguideSpec(5.0, 0.0)
    with pytest.raises(ValueError):
        WaveguideSpec(5.0, 9.8, coupling_in=1.3)


def test_thin_stream_edges():
    t = np.arange(100, dtype=np.int64)
    assert np.array_equal(thin_stream(t, 1.0, seed=0), t)
    assert len(thin_stream(t, 0.0, seed=0)) == 0
    with pytest.raises(ValueError):
        thin_stream(t, 1.1, seed=0)


def test_thin_stream_binomial():
    t = np.arange(1_000_000, dtype=np.int64)
    eta = math.exp(-1)
    kept = thin_stream(t, eta, seed=1)
    expect = eta * len(t)
    assert abs(len(kept) - expect) < 5 * math.sqrt(expect * (1 - eta))
    assert np.all(np.diff(kept) > 0)  # order preserved


def test_split_stream_partition():
    t = np.sort(np.random.default_rng(2).integers(0, 10**9, 10_000, dtype=np.int64))
    b1, b2 = split_stream(t, 0.5, seed=3)
    assert np.array_equal(np.sort(np.concatenate([b1, b2])), t)
    everything, nothing = split_stream(t, 1.0, seed=4)
    assert len(everything) == len(t) and len(nothing) == 0


def test_split_stream_balance():
    t = np.arange(1_000_000, dtype=np.int64)
    b1, b2 = split_stream(t, 0.5, seed=5)
    assert abs(len(b1) - len(b2)) < 5 * math.sqrt(len(t))


def test_end_to_end_rate_matches_click_oracle():
    """Simulated B1 singles rate against the analytic splitter+detector oracle."""
    pair_rate, duration = 5e5, 2.0
    wg = WaveguideSpec(7.5, 9.8, coupling_in=0.7, coupling_out=0.7)
    eta_w = waveguide_survival(wg)
    eta_det = 0.55
    _, arm_b = generate_spdc_pairs(SourceSpec(pair_rate=pair_rate), duration, seed=6)
    survived = thin_stream(arm_b, eta_w, seed=7)
    b1, b2 = split_stream(survived, 0.5, seed=8)
    det = DetectorSpec(efficiency=eta_det, dead_time_ps=0)
    tags1 = detect(b1, det, CHANNEL_B1, duration, seed=9)
    tags2 = detect(b2, det, CHANNEL_B2, duration, seed=10)

    p_b1, p_b2, _ = click_probabilities(apply_loss(fock(1), eta_w), eta_det, eta_det)
    for tags, p in ((tags1, p_b1), (tags2, p_b2)):
        expect = pair_rate * duration * p
        assert abs(len(tags) - expect) < 5 * math.sqrt(expect)
