import json
import math

import numpy as np
import pytest

from plasmonlab.errors import TruncationError, UndefinedStatisticError
from plasmonlab.fock import (
    PhotonNumberDist,
    apply_loss,
    click_probabilities,
    coherent,
    fock,
    g2_zero,
    thermal,
)

from oracles import brute_binomial_loss, splitter_click_probs


def test_fock_states():
    d = fock(1)
    assert d.probs[1] == 1.0 and d.probs.sum() == 1.0
    assert fock(0).probs[0] == 1.0
    assert fock(2).probs[2] == 1.0


def test_fock_above_truncation():
    with pytest.raises(TruncationError):
        fock(31, n_t=30)


def test_coherent_matches_published_poisson_values():
    d = coherent(1.0)
    expected = [0.368, 0.368, 0.184, 0.061, 0.015, 0.003]
    for n, p in enumerate(expected):
        assert abs(d.probs[n] - p) < 5e-4


def test_coherent_formula_value():
    # P_1 = e^-1.2 * 1.2 evaluated directly
    assert coherent(1.2).probs[1] == pytest.approx(1.2 * math.exp(-1.2), abs=1e-12)
    assert coherent(0.0).probs[0] == 1.0


def test_coherent_tail_rejected():
    with pytest.raises(TruncationError):
        coherent(1.2, n_t=6)
    with pytest.raises(TruncationError):
        coherent(25.0, n_t=30)


def test_thermal_values():
    assert thermal(0.0).probs[0] == 1.0
    assert thermal(0.5).probs[0] == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert g2_zero(thermal(1.0, n_t=60)) == pytest.approx(2.0, abs=1e-6)


def test_g2_reference_points():
    assert g2_zero(fock(1)) == 0.0
    assert g2_zero(fock(2)) == 0.5
    assert g2_zero(coherent(1.0)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("n", range(1, 11))
def test_g2_fock_relation(n):
    assert abs(g2_zero(fock(n, n_t=12)) - (1.0 - 1.0 / n)) < 1e-12


def test_g2_undefined_for_vacuum():
    with pytest.raises(UndefinedStatisticError):
        g2_zero(fock(0))


def test_apply_loss_identity_and_single_photon():
    d = coherent(1.0)
    assert apply_loss(d, 1.0) is d
    lossy = apply_loss(fock(1), 0.5)
    assert lossy.probs[0] == pytest.approx(0.5, abs=1e-12)
    assert lossy.probs[1] == pytest.approx(0.5, abs=1e-12)


def test_apply_loss_coherent_closure():
    got = apply_loss(coherent(2.0), 0.3)
    want = coherent(0.6)
    assert np.max(np.abs(got.probs - want.probs)) < 1e-9


def test_apply_loss_domain():
    with pytest.raises(ValueError):
        apply_loss(fock(1), 1.5)
    with pytest.raises(ValueError):
        apply_loss(fock(1), -0.1)


def test_apply_loss_against_comb_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        probs = rng.dirichlet(np.ones(13))
        d = PhotonNumberDist(probs, n_t=12)
        eta = rng.uniform(0.05, 0.95)
        got = apply_loss(d, eta).probs
        want = brute_binomial_loss(d.probs, eta)
        assert np.max(np.abs(got - want)) < 1e-12


def test_loss_composition():
    rng = np.random.default_rng(6)
    d = PhotonNumberDist(rng.dirichlet(np.ones(31)), n_t=30)
    a, b = 0.7, 0.4
    two_step = apply_loss(apply_loss(d, a), b)
    one_step = apply_loss(d, a * b)
    assert np.max(np.abs(two_step.probs - one_step.probs)) < 1e-9


def test_loss_preserves_g2():
    rng = np.random.default_rng(7)
    for _ in range(10):
        d = PhotonNumberDist(rng.dirichlet(np.ones(31)), n_t=30)
        for eta in (0.1, 0.5, 0.9):
            assert abs(g2_zero(apply_loss(d, eta)) - g2_zero(d)) < 1e-9


def test_normalization_invariant():
    rng = np.random.default_rng(8)
    for d in (coherent(rng.uniform(0.1, 3)), thermal(rng.uniform(0.1, 1.5)), fock(4)):
        assert abs(d.probs.sum() - 1.0) < 1e-9
        assert abs(apply_loss(d, 0.37).probs.sum() - 1.0) < 1e-9


def test_click_probabilities_reference_cases():
    assert click_probabilities(fock(0), 1.0, 1.0) == (0.0, 0.0, 0.0)
    p1, p2, p12 = click_probabilities(fock(1), 1.0, 1.0)
    assert (p1, p2, p12) == (pytest.approx(0.5), pytest.approx(0.5), pytest.approx(0.0))
    p1, p2, p12 = click_probabilities(fock(2), 1.0, 1.0)
    assert (p1, p2, p12) == (pytest.approx(0.75), pytest.approx(0.75), pytest.approx(0.5))


def test_click_probabilities_against_closed_form():
    rng = np.random.default_rng(9)
    for d in (coherent(1.3), thermal(0.8), PhotonNumberDist(rng.dirichlet(np.ones(31)), 30)):
        for eta1, eta2 in ((1.0, 1.0), (0.55, 0.3), (0.275, 0.275)):
            got = click_probabilities(d, eta1, eta2)
            want = splitter_click_probs(d.probs, eta1, eta2)
            assert np.max(np.abs(np.array(got) - np.array(want))) < 1e-12


def test_json_round_trip():
    d = coherent(1.7)
    again = PhotonNumberDist.from_json(d.to_json())
    assert again.n_t == d.n_t
    assert np.array_equal(again.probs, d.probs)
    doc = json.loads(d.to_json())
    assert set(doc) == {"n_t", "probs"}


def test_invalid_distributions_rejected():
    with pytest.raises(ValueError):
        PhotonNumberDist(np.array([0.5, 0.4]), n_t=1)  # sums to 0.9
    with pytest.raises(ValueError):
        PhotonNumberDist(np.array([1.2, -0.2]), n_t=1)
