import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcamimo.channel import (
    DEFAULT_SIGMA_G,
    CellScenario,
    ComplexChannel,
    complexify_vector,
    gen_lsfc_cell,
    gen_ssfc,
    pathloss_macro_2ghz,
    realify,
    realify_vector,
)
from mcamimo.errors import DimensionError, ParameterError


def test_ssfc_variance_per_real_dimension():
    rng = np.random.default_rng(11)
    re = np.concatenate([gen_ssfc(64, 4, DEFAULT_SIGMA_G, rng).G_tilde.real.ravel()
                         for _ in range(4000)])
    assert re.size > 1e6
    assert abs(re.var() - 0.5) / 0.5 < 0.01


def test_ssfc_rejects_bad_inputs():
    rng = np.random.default_rng(0)
    with pytest.raises(ParameterError):
        gen_ssfc(1, 1, 0.0, rng)
    with pytest.raises(DimensionError):
        gen_ssfc(2, 3, 1.0, rng)
    with pytest.raises(DimensionError):
        gen_ssfc(4, 0, 1.0, rng)


def test_ssfc_seed_determinism():
    a = gen_ssfc(8, 2, 1.0, np.random.default_rng(5)).G_tilde
    b = gen_ssfc(8, 2, 1.0, np.random.default_rng(5)).G_tilde
    assert np.array_equal(a, b)


def test_pathloss_at_cell_edge():
    # 128.1 + 37.6 log10(0.15) = 97.12 dB
    pl = 128.1 + 37.6 * math.log10(0.150)
    assert pathloss_macro_2ghz(150.0) == pytest.approx(pl)
    lam = CellScenario().path_gain(150.0)
    assert lam == pytest.approx(10 ** (-pl / 10))
    assert lam == pytest.approx(1.95e-10, rel=0.01)


def test_noise_power_budget():
    cell = CellScenario()
    # -174 dBm/Hz + 74 dB (25 MHz) + 9 dB
    assert cell.noise_power_dbm == pytest.approx(-174 + 10 * math.log10(25e6) + 9)
    assert cell.noise_to_tx_ratio == pytest.approx(10 ** ((cell.noise_power_dbm - 20) / 10))


def test_users_at_common_distance_share_gain():
    cell = CellScenario(radius=50.0, min_distance=49.999999)
    lam, pos = gen_lsfc_cell(6, cell, np.random.default_rng(2))
    assert np.allclose(lam, lam[0], rtol=1e-6)
    assert np.allclose(np.hypot(pos[:, 0], pos[:, 1]), 50.0, rtol=1e-6)


def test_user_placement_uniform_in_area_and_reproducible():
    cell = CellScenario()
    lam, pos = gen_lsfc_cell(200_000, cell, np.random.default_rng(3))
    r = np.hypot(pos[:, 0], pos[:, 1])
    assert r.min() >= cell.min_distance and r.max() <= cell.radius
    # uniform in area: P(r <= r0) = (r0^2 - a^2) / (b^2 - a^2)
    r0 = 100.0
    expect = (r0**2 - 10.0**2) / (150.0**2 - 10.0**2)
    assert np.mean(r <= r0) == pytest.approx(expect, abs=0.005)
    lam2, pos2 = gen_lsfc_cell(200_000, cell, np.random.default_rng(3))
    assert np.array_equal(pos, pos2) and np.array_equal(lam, lam2)


def test_cell_scenario_invariants():
    with pytest.raises(ParameterError):
        CellScenario(radius=5.0, min_distance=10.0)
    with pytest.raises(ParameterError):
        CellScenario(bandwidth=0.0)
    with pytest.raises(ParameterError):
        CellScenario(pathloss_model="nope")


def test_realify_small_cases():
    ch = realify(ComplexChannel(np.array([[1 + 2j]]), np.array([1.0])))
    assert np.array_equal(ch.G, [[1, -2], [2, 1]])
    assert np.array_equal(ch.H, ch.G)
    ch = realify(ComplexChannel(np.array([[1j]]), np.array([4.0])))
    assert np.array_equal(ch.H, [[0, -2], [2, 0]])


def test_realify_matches_complex_product():
    rng = np.random.default_rng(4)
    c = gen_ssfc(8, 2, 1.0, rng).with_lsfc(rng.uniform(0.1, 3.0, 2))
    ch = realify(c)
    assert np.array_equal(ch.H, ch.G @ ch.Lambda)
    s = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    assert np.allclose(ch.H @ realify_vector(s), realify_vector(c.H_tilde @ s))


def test_realify_vector_examples():
    assert np.array_equal(realify_vector(np.array([1 + 1j])), [1.0, 1.0])
    assert np.array_equal(realify_vector(np.array([0j])), [0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False), min_size=1, max_size=16))
def test_vector_round_trip(vals):
    v = np.array(vals, dtype=complex)
    assert np.array_equal(complexify_vector(realify_vector(v)), v)


def test_h_column_variance_follows_lsfc():
    rng = np.random.default_rng(6)
    lam = np.array([0.5, 2.0, 4.0])
    H = np.stack([realify(gen_ssfc(64, 3, DEFAULT_SIGMA_G, rng).with_lsfc(lam)).H
                  for _ in range(600)])
    for j in range(3):
        col = np.concatenate([H[:, :, j].ravel(), H[:, :, j + 3].ravel()])
        assert col.size >= 1e5
        assert col.var() == pytest.approx(lam[j] * DEFAULT_SIGMA_G**2, rel=0.05)
    # real and imaginary halves of one user carry equal energy
    n_re = np.linalg.norm(H[:, :, 0], axis=1)
    n_im = np.linalg.norm(H[:, :, 3], axis=1)
    diff = n_re**2 - n_im**2
    assert abs(diff.mean()) < 3 * diff.std() / math.sqrt(diff.size)


def test_lsfc_must_be_positive():
    with pytest.raises(ParameterError):
        ComplexChannel(np.ones((2, 1), complex), np.array([0.0]))
