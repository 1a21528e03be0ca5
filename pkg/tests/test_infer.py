import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from maxent_chest import estimate as est
from maxent_chest import infer
from maxent_chest.model import NoiseModel, PilotPattern, build_q_set
from maxent_chest.simulate import draw_channel, observe


def lupdate_obs(snr_db, trials=500, seed=0, spacing=6):
    n = 32
    p = PilotPattern.comb(n, spacing)
    noise = NoiseModel.from_snr_db(snr_db)
    ch = draw_channel(5, n, seed=seed, size=trials)
    return observe(ch, p, noise, seed=seed + 1), build_q_set(n, 1, 10), noise


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12))
def test_report_invariants(raw):
    lp = np.array(raw) - logsumexp(raw)
    rep = infer.report_from_log_posterior(tuple(range(1, len(raw) + 1)), lp)
    assert abs(rep.posterior.sum() - 1) < 1e-12
    np.testing.assert_allclose(rep.odds, 10.0 ** rep.evidence, rtol=1e-9)
    p = rep.posterior
    with np.errstate(divide="ignore"):
        direct = p / (1 - p)
    ok = p < 1 - 1e-6
    np.testing.assert_allclose(rep.odds[ok], direct[ok], rtol=1e-6)


def test_singleton_hypothesis_saturates():
    obs, _, noise = lupdate_obs(20, trials=3)
    rep = infer.length_posterior(obs, build_q_set(32, 5, 5), noise)
    np.testing.assert_array_equal(rep.posterior, 1.0)
    assert np.all(rep.odds == infer.SATURATED) and infer.SATURATED == math.inf
    assert np.all(infer.evidence_gap(rep, 5) == infer.SATURATED)


def test_huge_noise_posterior_equals_prior():
    obs, q_set, _ = lupdate_obs(20, trials=4)
    prior = np.arange(1.0, 11.0)
    rep = infer.length_posterior(obs, q_set, NoiseModel.homogeneous(1e12), prior)
    np.testing.assert_allclose(rep.posterior, (prior / prior.sum())[:, None] * np.ones(4), atol=1e-9)


def test_uniform_posterior_zero_gap():
    rep = infer.report_from_log_posterior((1, 2, 3, 4), np.full(4, -math.log(4)))
    np.testing.assert_allclose(rep.evidence, rep.evidence[0])
    assert infer.evidence_gap(rep, 3) == 0.0
    np.testing.assert_allclose(rep.odds, 1 / 3)


def test_gap_rejects_untested_length():
    rep = infer.report_from_log_posterior((1, 2), np.log([0.5, 0.5]))
    with pytest.raises(ValueError):
        infer.evidence_gap(rep, 7)


def test_weights_shared_with_mixture_estimator():
    obs, q_set, noise = lupdate_obs(15, trials=20)
    rep = infer.length_posterior(obs, q_set, noise)
    res = est.mmse_unknown_l(obs, q_set, noise)
    np.testing.assert_allclose(rep.log_posterior, res.log_weights, atol=1e-12)
    assert rep.l_values == res.l_values


def test_argmax_odds_recovers_true_length():
    obs, q_set, noise = lupdate_obs(20)
    rep = infer.length_posterior(obs, q_set, noise)
    argmax = np.array(rep.l_values)[np.argmax(rep.odds, axis=0)]
    assert np.median(argmax) == 5


def test_mean_gap_and_true_length_mass_increase_with_snr():
    gaps, mass = [], []
    for snr in (0, 10, 20, 30):
        obs, q_set, noise = lupdate_obs(snr, seed=snr)
        rep = infer.length_posterior(obs, q_set, noise)
        gaps.append(np.mean(infer.evidence_gap(rep, 5)))
        mass.append(np.mean(rep.posterior[rep.index(5)]))
    assert np.all(np.diff(gaps) > 0)
    assert np.all(np.diff(mass) >= 0)
