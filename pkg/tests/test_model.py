import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from maxent_chest.model import (
    NoiseModel,
    PilotPattern,
    SystemConfig,
    build_phi,
    build_q,
    build_q_set,
    jakes_lambda,
    normalize_prior,
    projector_gram,
    snr_to_sigma2,
)


def dft_columns(n, l):
    return np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(l)) / n)


# --- channel covariance ------------------------------------------------------

def test_q_single_tap_is_all_ones():
    np.testing.assert_allclose(build_q(4, 1).q, np.ones((4, 4)), atol=1e-15)


def test_q_full_length_is_identity():
    np.testing.assert_allclose(build_q(4, 4).q, np.eye(4), atol=1e-15)


def test_q_32_3_matches_dft_product_and_eigs():
    q = build_q(32, 3).q
    f = dft_columns(32, 3)
    np.testing.assert_allclose(q, f @ f.conj().T / 3, atol=1e-12)
    ev = np.linalg.eigvalsh(q)[::-1]
    assert np.allclose(np.diag(q), 1.0)
    assert abs(np.trace(q).real - 32) < 1e-9
    # rank 3: three eigenvalues 32/3, the rest numerically zero
    np.testing.assert_allclose(ev[:3], 32 / 3, rtol=1e-12)
    assert np.all(np.abs(ev[3:]) < 1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))))
def test_q_invariants(nl):
    n, l = nl
    q = build_q(n, l).q
    assert np.max(np.abs(q - q.conj().T)) <= 1e-12
    assert np.all(np.diag(q) == 1.0)
    assert abs(np.trace(q).real - n) < 1e-9
    ev = np.sort(np.linalg.eigvalsh(q))[::-1]
    assert ev[-1] >= -1e-10
    assert np.all(np.abs(ev[l:]) < 1e-10)
    if l < n:
        assert ev[l - 1] / max(abs(ev[l]), 1e-300) >= 1e6
    f = dft_columns(n, l)
    np.testing.assert_allclose(q, f @ f.conj().T / l, atol=1e-12)


@pytest.mark.parametrize("n,l", [(128, 6), (256, 17), (256, 255)])
def test_q_eigen_gap_large_n(n, l):
    ev = np.sort(np.linalg.eigvalsh(build_q(n, l).q))[::-1]
    assert ev[l - 1] / abs(ev[l]) >= 1e6


def test_q_is_read_only():
    q = build_q(8, 2).q
    with pytest.raises(ValueError):
        q[0, 0] = 2.0


@pytest.mark.parametrize("n,l", [(4, 0), (4, 5), (1, 2)])
def test_q_rejects_bad_length(n, l):
    with pytest.raises(ValueError):
        build_q(n, l)


def test_q_set_stride_keeps_endpoint():
    assert sorted(build_q_set(32, 1, 10)) == list(range(1, 11))
    assert sorted(build_q_set(32, 1, 10, stride=4)) == [1, 5, 9, 10]
    with pytest.raises(ValueError):
        build_q_set(32, 4, 2)


# --- time correlation --------------------------------------------------------

def test_phi_limits_and_scaling():
    q = build_q(32, 3)
    np.testing.assert_array_equal(build_phi(q, 0.0).phi, q.q)
    phi1 = build_phi(q, 1.0)
    assert phi1.degenerate and not np.any(phi1.phi)
    np.testing.assert_allclose(build_phi(q, 0.99).phi, 0.0199 * q.q, atol=1e-12)


@pytest.mark.parametrize("lam", [-0.1, 1.01])
def test_phi_rejects_bad_lambda(lam):
    with pytest.raises(ValueError):
        build_phi(build_q(8, 2), lam)


def _j0_series(x, terms=60):
    return sum((-1) ** k * (x / 2) ** (2 * k) / math.factorial(k) ** 2 for k in range(terms))


def test_jakes_trivial_points():
    assert jakes_lambda(0.0, 3.7) == 1.0
    assert jakes_lambda(120.0, 0.0) == 1.0


def test_jakes_first_zero_against_series_root():
    root = optimize.brentq(_j0_series, 2.0, 3.0, xtol=1e-15)
    assert abs(root - 2.404825557695773) < 1e-12
    f_d = 100.0
    assert abs(jakes_lambda(f_d, root / (2 * math.pi * f_d))) < 1e-12


@given(st.floats(0.0, 8.0))
def test_jakes_matches_series(x):
    assert abs(jakes_lambda(x / (2 * math.pi), 1.0) - _j0_series(x)) < 1e-10


# --- pilot patterns ------------------------------------------------------------

def test_projector_full_and_single():
    np.testing.assert_array_equal(projector_gram(PilotPattern.full(5)), np.eye(5))
    g = projector_gram(PilotPattern(5, (0,)))
    assert g[0, 0] == 1 and g.sum() == 1


def test_spacing_six_comb():
    p = PilotPattern.comb(32, 6)
    assert p.indices == (0, 6, 12, 18, 24, 30)
    g = projector_gram(p)
    assert np.flatnonzero(np.diag(g)).tolist() == [0, 6, 12, 18, 24, 30]


@given(st.sets(st.integers(0, 31), min_size=1))
def test_projector_idempotent(idx):
    g = projector_gram(PilotPattern(32, tuple(sorted(idx))))
    np.testing.assert_array_equal(g @ g, g)


@pytest.mark.parametrize("idx", [(), (3, 1), (1, 1), (-1,), (8,)])
def test_pattern_validation(idx):
    with pytest.raises(ValueError):
        PilotPattern(8, idx)


def test_pattern_union():
    u = PilotPattern.comb(12, 6, 0).union(PilotPattern.comb(12, 6, 3))
    assert u.indices == (0, 3, 6, 9)


# --- noise and system -----------------------------------------------------------

def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel.homogeneous(0.0)
    with pytest.raises(ValueError):
        NoiseModel()
    with pytest.raises(ValueError):
        NoiseModel.colored(np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert NoiseModel.from_snr_db(20).sigma2 == pytest.approx(0.01)
    assert snr_to_sigma2(float("inf")) == 1e-12


def test_noise_pilot_restriction():
    c = np.diag(np.arange(1.0, 9.0))
    p = PilotPattern(8, (1, 4))
    np.testing.assert_array_equal(NoiseModel.colored(c).pilot_covariance(p), np.diag([2.0, 5.0]))
    np.testing.assert_array_equal(NoiseModel.colored(np.eye(2)).pilot_covariance(p), np.eye(2))
    with pytest.raises(ValueError):
        NoiseModel.colored(np.eye(3)).pilot_covariance(p)


def test_system_config_invariants():
    p = PilotPattern.comb(32, 6)
    cfg = SystemConfig(32, 3, (1, 6), 20.0, (p,))
    assert cfg.l_values == (1, 2, 3, 4, 5, 6)
    assert cfg.sigma2 == pytest.approx(0.01)
    with pytest.raises(ValueError):
        SystemConfig(32, 7, (1, 6), 20.0, (p,))
    with pytest.raises(ValueError):
        SystemConfig(32, 3, (1, 6), 20.0, (p, p), lambdas=(1.5,))
    with pytest.raises(ValueError):
        SystemConfig(32, 3, (1, 6), 20.0, (p, p), lambdas=(0.5, 0.5))
    with pytest.raises(ValueError):
        SystemConfig(32, 3, (1, 6), 20.0, (PilotPattern.comb(16, 4),))


def test_normalize_prior():
    lp = normalize_prior({1: 1.0, 2: 3.0}, [1, 2])
    np.testing.assert_allclose(np.exp(lp), [0.25, 0.75])
    np.testing.assert_allclose(np.exp(normalize_prior(None, [1, 2, 3, 4])), 0.25)
    with pytest.raises(ValueError):
        normalize_prior([0.0, 0.0], [1, 2])
    with pytest.raises(ValueError):
        normalize_prior([1.0], [1, 2])
