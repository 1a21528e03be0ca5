import numpy as np
import pytest
from scipy import stats

from maxent_chest.model import NoiseModel, PilotPattern, build_q
from maxent_chest.simulate import (
    PilotObservation,
    draw_channel,
    draw_correlated_chain,
    draw_correlated_pair,
    make_rng,
    observe,
)

DRAWS = 100_000


def sample_cov(h):
    return h @ h.conj().T / h.shape[1]


def fro_rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_rng_is_philox():
    assert isinstance(make_rng(1).bit_generator, np.random.Philox)


def test_channel_is_dft_of_taps():
    ch = draw_channel(3, 16, seed=1)
    np.testing.assert_allclose(ch.h, np.fft.fft(np.r_[ch.nu, np.zeros(13)]), atol=1e-14)
    assert ch.l == 3 and ch.n == 16


def test_channel_sample_covariance_and_power():
    ch = draw_channel(3, 16, seed=2, size=DRAWS)
    assert fro_rel(sample_cov(ch.h), build_q(16, 3).q) < 0.02
    power = np.mean(np.abs(ch.h) ** 2, axis=1)
    assert np.all(np.abs(power - 1) < 0.02)
    assert abs(np.mean(np.sum(np.abs(ch.nu) ** 2, axis=0)) - 1) < 0.01


def test_channel_determinism():
    a, b = draw_channel(4, 32, seed=99), draw_channel(4, 32, seed=99)
    np.testing.assert_array_equal(a.h, b.h)
    assert not np.array_equal(a.h, draw_channel(4, 32, seed=100).h)


@pytest.mark.parametrize("l,n", [(0, 8), (9, 8)])
def test_channel_rejects_bad_dims(l, n):
    with pytest.raises(ValueError):
        draw_channel(l, n)


def test_pair_lambda_one_identical():
    h1, h2 = draw_correlated_pair(4, 16, 1.0, seed=3)
    np.testing.assert_array_equal(h1.nu, h2.nu)


def test_pair_lambda_zero_uncorrelated():
    h1, h2 = draw_correlated_pair(3, 8, 0.0, seed=4, size=DRAWS)
    xc = np.mean(h1.nu * h2.nu.conj(), axis=1) * 3
    assert np.all(np.abs(xc) < 0.02)


def test_pair_lambda_099_tap_correlation():
    h1, h2 = draw_correlated_pair(3, 8, 0.99, seed=5, size=DRAWS)
    for p in range(3):
        c = np.corrcoef(np.r_[h1.nu[p].real, h1.nu[p].imag], np.r_[h2.nu[p].real, h2.nu[p].imag])[0, 1]
        assert abs(c - 0.99) < 0.01


def test_chain_marginals_preserved():
    q = build_q(16, 4).q
    ref, aux = draw_correlated_chain(4, 16, [0.3, 0.9], seed=6, size=DRAWS)
    for ch in [ref] + aux:
        assert fro_rel(sample_cov(ch.h), q) < 0.02


def test_chain_all_ones_identical():
    ref, aux = draw_correlated_chain(2, 8, [1.0, 1.0, 1.0], seed=7)
    for ch in aux:
        np.testing.assert_array_equal(ch.h, ref.h)


@pytest.mark.parametrize("lam", [-0.5, 1.5])
def test_chain_rejects_bad_lambda(lam):
    with pytest.raises(ValueError):
        draw_correlated_chain(2, 8, [lam])


def test_observe_noiseless_exact():
    ch = draw_channel(3, 16, seed=8)
    p = PilotPattern.comb(16, 3)
    obs = observe(ch, p, None, seed=9, pilots="qpsk")
    np.testing.assert_allclose(obs.pilot_values, ch.h[p.index_array], rtol=1e-14)
    assert np.all(obs.h_prime[~p.mask] == 0)


def test_observe_noise_power_and_covariance():
    s2 = 0.05
    p = PilotPattern.comb(16, 2)
    ch = draw_channel(3, 16, seed=10, size=DRAWS)
    obs = observe(ch, p, NoiseModel.homogeneous(s2), seed=11)
    err = obs.pilot_values - ch.h[p.index_array]
    assert abs(np.mean(np.abs(err) ** 2) / s2 - 1) < 0.02
    assert fro_rel(sample_cov(err), s2 * np.eye(p.m)) < 0.02


def test_qpsk_pilots_leave_noise_statistics_unchanged():
    p = PilotPattern.comb(8, 2)
    noise = NoiseModel.homogeneous(0.1)
    ch = draw_channel(2, 8, seed=12, size=DRAWS)
    e1 = (observe(ch, p, noise, seed=13, pilots="ones").pilot_values - ch.h[p.index_array]).ravel()
    e2 = (observe(ch, p, noise, seed=14, pilots="qpsk").pilot_values - ch.h[p.index_array]).ravel()
    for part in (np.real, np.imag):
        assert stats.ks_2samp(part(e1), part(e2)).pvalue > 0.01
    # circularity: no pseudo-covariance either way
    assert abs(np.mean(e2 * e2)) < 0.01


def test_observe_colored_noise_covariance():
    p = PilotPattern(6, (0, 2, 3, 5))
    a = make_rng(15).standard_normal((4, 4))
    c = 0.1 * (a @ a.T + np.eye(4))
    ch = draw_channel(2, 6, seed=16, size=DRAWS)
    obs = observe(ch, p, NoiseModel.colored(c), seed=17)
    err = obs.pilot_values - ch.h[p.index_array]
    assert fro_rel(sample_cov(err), c) < 0.03


def test_observe_rejects_singular_colored_noise():
    c = np.ones((8, 8)) * 0.1
    with pytest.raises(ValueError):
        observe(draw_channel(2, 8, seed=1), PilotPattern(8, (0, 1)), NoiseModel.colored(c), seed=2)


def test_observation_must_vanish_off_pilots():
    p = PilotPattern(4, (0, 2))
    with pytest.raises(ValueError):
        PilotObservation(p, np.array([1, 1, 1, 0], dtype=complex))
    with pytest.raises(ValueError):
        PilotObservation(p, np.zeros(5))
    obs = PilotObservation.from_pilot_values(p, [1 + 1j, 2])
    np.testing.assert_array_equal(obs.h_prime, [1 + 1j, 0, 2, 0])
    assert obs.batch is None
