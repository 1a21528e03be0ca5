"""Quick randomized agreement check between the estimators and the dense oracles."""

from __future__ import annotations

import numpy as np

from . import estimate as est
from . import oracle
from .model import NoiseModel, PilotPattern, build_q, build_q_set, snr_to_sigma2
from .simulate import draw_correlated_chain, make_rng, observe

TOL = 1e-8


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def random_setup(rng: np.random.Generator, k: int, n_max: int = 16):
    """Random small scenario with ``k`` pilot sequences."""
    n = int(rng.integers(4, n_max + 1))
    l = int(rng.integers(1, n + 1))
    sigma2 = snr_to_sigma2(float(rng.uniform(0.0, 30.0)))
    patterns = []
    for _ in range(k):
        m = int(rng.integers(1, n + 1))
        patterns.append(PilotPattern(n, tuple(sorted(rng.choice(n, size=m, replace=False)))))
    lams = [float(rng.uniform(0.0, 0.999)) for _ in range(k)]
    return n, l, sigma2, patterns, lams


def _seq(p: PilotPattern, lam: float, sigma2: float):
    return oracle.ObservedSequence(p.indices, lam, sigma2 * np.eye(p.m))


def check_known_l(rng: np.random.Generator) -> dict:
    """Relative error of each known-length estimator against dense conditioning."""
    n, l, s2, pats, lams = random_setup(rng, 3)
    noise = NoiseModel.homogeneous(s2)
    q = build_q(n, l)
    ref, aux = draw_correlated_chain(l, n, lams, rng)
    obs = [observe(ch, p, noise, rng) for ch, p in zip(aux, pats)]
    tgt = observe(ref, pats[0], noise, rng)
    out = {}

    sq = [_seq(pats[0], 1.0, s2)]
    out["lmmse_known_l"] = _rel(
        est.lmmse_known_l(tgt, q, noise).h_hat,
        oracle.gaussian_condition(oracle.stacked_spec(n, l, sq), tgt.pilot_values),
    )

    sq = [_seq(pats[0], 1.0, s2), _seq(pats[1], lams[1], s2)]
    y = oracle.stacked_observation([tgt.h_prime, obs[1].h_prime], sq)
    out["time_corr_known_l"] = _rel(
        est.time_corr_known_l(obs[1], tgt, q, lams[1], noise).h_hat,
        oracle.gaussian_condition(oracle.stacked_spec(n, l, sq), y),
    )

    sq = [_seq(p, lam, s2) for p, lam in zip(pats[:2], lams[:2])]
    y = oracle.stacked_observation([o.h_prime for o in obs[:2]], sq)
    out["interp_two_pilots"] = _rel(
        est.interp_two_pilots(obs[0], obs[1], q, lams[0], lams[1], noise).h_hat,
        oracle.gaussian_condition(oracle.stacked_spec(n, l, sq), y),
    )

    sq = [_seq(p, lam, s2) for p, lam in zip(pats, lams)]
    y = oracle.stacked_observation([o.h_prime for o in obs], sq)
    out["k_pilot_known_l"] = _rel(
        est.k_pilot_known_l(obs, q, lams, noise).h_hat,
        oracle.gaussian_condition(oracle.stacked_spec(n, l, sq), y),
    )
    return out


def check_mixtures(rng: np.random.Generator, n_max: int = 16) -> dict:
    n, l, s2, pats, lams = random_setup(rng, 2, n_max=n_max)
    noise = NoiseModel.homogeneous(s2)
    lo = int(rng.integers(1, l + 1))
    hi = int(rng.integers(l, min(n, l + 3) + 1))
    q_set = build_q_set(n, lo, hi)
    prior = {k: 1.0 / len(q_set) for k in q_set}
    ref, (aux,) = draw_correlated_chain(l, n, [lams[1]], rng)
    tgt = observe(ref, pats[0], noise, rng)
    o1 = observe(aux, pats[1], noise, rng)
    out = {}

    specs = {k: oracle.stacked_spec(n, k, [_seq(pats[0], 1.0, s2)]) for k in q_set}
    res = est.mmse_unknown_l(tgt, q_set, noise)
    out["mmse_unknown_l"] = _rel(res.h_hat, oracle.mixture_condition(specs, prior, tgt.pilot_values))
    ref_lp = oracle.mixture_log_posterior(specs, prior, tgt.pilot_values)
    out["length_log_posterior_abs"] = max(abs(res.per_l_log_weights[k] - ref_lp[k]) for k in q_set)

    sq = lambda k: [_seq(pats[0], 1.0, s2), _seq(pats[1], lams[1], s2)]
    specs = {k: oracle.stacked_spec(n, k, sq(k)) for k in q_set}
    y = oracle.stacked_observation([tgt.h_prime, o1.h_prime], sq(lo))
    out["time_corr_unknown_l"] = _rel(
        est.time_corr_unknown_l(o1, tgt, q_set, lams[1], noise).h_hat,
        oracle.mixture_condition(specs, prior, y),
    )
    return out


def run_selftest(seed: int = 0, configs: int = 20, echo=print) -> bool:
    rng = make_rng(seed)
    worst = {}
    for _ in range(configs):
        for name, err in {**check_known_l(rng), **check_mixtures(rng)}.items():
            worst[name] = max(worst.get(name, 0.0), err)
    ok = True
    for name, err in worst.items():
        tol = 1e-10 if name.endswith("_abs") else TOL
        passed = err <= tol
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'} {name}: worst error {err:.2e} (tol {tol:.0e}, {configs} configs)")
    return ok
