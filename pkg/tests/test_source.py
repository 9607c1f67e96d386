import math

import numpy as np
import pytest
from scipy import stats

from plasmonlab.source import (
    CHANNEL_B1,
    DetectorSpec,
    SourceSpec,
    TagStream,
    detect,
    generate_laser_arrivals,
    generate_spdc_pairs,
)


def test_zero_rate_gives_empty_streams():
    a, b = generate_spdc_pairs(SourceSpec(pair_rate=0.0), 1.0, seed=0)
    assert len(a) == 0 and len(b) == 0
    assert len(generate_laser_arrivals(0.0, 1.0, seed=0)) == 0


def test_pair_count_poisson():
    spec = SourceSpec(pair_rate=1e6)
    a, b = generate_spdc_pairs(spec, 1.0, seed=1)
    assert len(a) == len(b)
    assert abs(len(a) - 1e6) < 5 * math.sqrt(1e6)
    assert np.array_equal(a, b)
    assert np.all(np.diff(a) >= 0)


def test_double_pair_events_binomial():
    base, _ = generate_spdc_pairs(SourceSpec(pair_rate=1e6), 1.0, seed=2)
    doubled, arm_b = generate_spdc_pairs(
        SourceSpec(pair_rate=1e6, double_pair_prob=0.01), 1.0, seed=2)
    # same seed: emission times identical, doubles drawn afterwards
    n = len(base)
    extra = len(doubled) - n
    expect = 0.01 * n
    assert abs(extra - expect) < 3 * math.sqrt(expect)
    assert len(arm_b) == len(doubled)


def test_double_pair_prob_bounds():
    with pytest.raises(ValueError):
        SourceSpec(pair_rate=1.0, double_pair_prob=0.2)


def test_laser_count_and_exponential_interarrivals():
    t = generate_laser_arrivals(1e6, 1.0, seed=3)
    assert abs(len(t) - 1e6) < 5 * math.sqrt(1e6)
    gaps = np.diff(t).astype(float)
    # exponential with mean 1e6 ps; 1 ps discreteness is invisible at this scale
    ks = stats.kstest(gaps / 1e6, "expon")
    assert ks.pvalue > 0.01


def test_generator_determinism():
    for maker in (
        lambda s: generate_spdc_pairs(SourceSpec(pair_rate=5e5, double_pair_prob=0.01), 0.5, s)[0],
        lambda s: generate_laser_arrivals(5e5, 0.5, s),
    ):
        assert np.array_equal(maker(42), maker(42))
        assert not np.array_equal(maker(42), maker(43))


def test_detect_identity():
    arrivals = np.sort(np.random.default_rng(4).integers(0, 10**12, 1000, dtype=np.int64))
    out = detect(arrivals, DetectorSpec(efficiency=1.0, dark_rate=0.0, jitter_sigma_ps=0.0,
                                        dead_time_ps=0), CHANNEL_B1, 1.0, seed=5)
    assert np.array_equal(out.times, arrivals)
    assert out.channel == CHANNEL_B1


def test_detect_efficiency_binomial():
    arrivals = generate_laser_arrivals(1e6, 1.0, seed=6)
    out = detect(arrivals, DetectorSpec(efficiency=0.5, dead_time_ps=0), CHANNEL_B1, 1.0, seed=7)
    expect = 0.5 * len(arrivals)
    assert abs(len(out) - expect) < 5 * math.sqrt(expect)


def test_detect_dark_counts_only():
    out = detect(np.empty(0, dtype=np.int64),
                 DetectorSpec(efficiency=1.0, dark_rate=1000.0, dead_time_ps=0),
                 CHANNEL_B1, 1.0, seed=8)
    assert abs(len(out) - 1000) < 3 * math.sqrt(1000)


def test_detect_dead_time_spacing():
    arrivals = generate_laser_arrivals(1e6, 0.1, seed=9)
    dead = 50_000
    out = detect(arrivals, DetectorSpec(dead_time_ps=dead), CHANNEL_B1, 0.1, seed=10)
    assert np.diff(out.times).min() >= dead


def test_detect_jitter_clamps_and_stays_inside_run():
    arrivals = np.array([0, 5, 10**12 - 5], dtype=np.int64)
    out = detect(arrivals, DetectorSpec(jitter_sigma_ps=500.0, dead_time_ps=0),
                 CHANNEL_B1, 1.0, seed=11)
    assert np.all(out.times >= 0)
    assert np.all(out.times < 10**12)


def test_detect_rejects_unsorted():
    with pytest.raises(ValueError):
        detect(np.array([10, 5], dtype=np.int64), DetectorSpec(), CHANNEL_B1, 1.0, seed=0)


def test_detect_determinism():
    arrivals = generate_laser_arrivals(1e5, 0.5, seed=12)
    det = DetectorSpec(efficiency=0.7, dark_rate=200.0, jitter_sigma_ps=350.0)
    a = detect(arrivals, det, CHANNEL_B1, 0.5, seed=13)
    b = detect(arrivals, det, CHANNEL_B1, 0.5, seed=13)
    assert np.array_equal(a.times, b.times)


def test_tag_stream_rate():
    s = TagStream(CHANNEL_B1, np.array([1, 2, 3], dtype=np.int64), duration_ps=10**12)
    assert s.rate() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        TagStream(CHANNEL_B1, np.array([1], dtype=np.int64), duration_ps=0).rate()
