"""
Bayesian channel estimators for pilot-aided OFDM.

Every estimator is an instance of one computation. The channel ``h`` to be
estimated has prior ``CN(0, Q)``; each pilot observation either sees ``h``
directly, or sees an auxiliary channel ``lambda*h + e`` with
``e ~ CN(0, (1 - lambda**2) Q)``. With ``W_k`` the noise precision of
sequence ``k`` on its pilots (``P^H P / sigma**2`` for white noise),
``r_k = lambda_k**2 / (1 - lambda_k**2)`` and
``A_k = I + (1 - lambda_k**2) Q W_k``, the posterior mean is::

    B = (1 + sum_aux r_k) I - sum_aux r_k A_k^{-1} + Q sum_direct W_k
    b = sum_direct W_k h'_k + sum_aux lambda_k A_k^{-H} W_k h'_k
    h_hat = B^{-1} Q b

and the log marginal likelihood, up to a hypothesis-independent constant,
is ``-sum_aux log det A_k - log det B - C`` with
``C = sum_direct h'^H W h' + sum_aux h'^H A_k^{-H} W h' - b^H h_hat``.
``Q`` is never inverted, so rank-deficient covariances are handled as is.

Observations may be batched: ``h_prime`` of shape ``(N, T)`` gives estimates
of shape ``(N, T)`` and log-weights of shape ``(H, T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .model import ChannelCovariance, NoiseModel, PilotPattern, normalize_prior
from .simulate import PilotObservation

# Correlations at or above this are treated as 1 (merged pilot sequences);
# keeps lambda**2 / (1 - lambda**2) below about 5e5.
LAMBDA_MERGE_THRESHOLD = 1.0 - 1e-6

# Iterative-refinement passes for the single-sequence log evidence.
REFINE_STEPS = 2

NoiseArg = Union[NoiseModel, Sequence[NoiseModel]]


@dataclass
class EstimationResult:
    h_hat: np.ndarray
    l_values: Optional[tuple] = None
    log_weights: Optional[np.ndarray] = None
    lambda_values: Optional[tuple] = None
    lambda_log_weights: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def per_l_log_weights(self) -> Optional[dict]:
        """Normalized log posterior weight of each hypothesised length."""
        if self.l_values is None:
            return None
        return {l: self.log_weights[i] for i, l in enumerate(self.l_values)}

    @property
    def lambda_log_posterior(self) -> Optional[dict]:
        if self.lambda_values is None:
            return None
        return {lam: self.lambda_log_weights[i] for i, lam in enumerate(self.lambda_values)}


@dataclass(frozen=True, eq=False)
class _Link:
    """One pilot sequence as seen from the channel being estimated."""

    w: np.ndarray
    h: np.ndarray
    lam: float = 1.0
    direct: bool = True
    idx: Optional[np.ndarray] = None
    cp: Optional[np.ndarray] = None


def noise_precision(noise: NoiseModel, pattern: PilotPattern) -> np.ndarray:
    """``P^H C^{-1} P``: inverse pilot noise covariance embedded in N x N.

    For white noise this is the mask ``P^H P / sigma**2``.
    """
    n = pattern.n
    idx = pattern.index_array
    if not noise.is_colored:
        w = np.zeros((n, n))
        w[idx, idx] = 1.0 / noise.sigma2
        return w
    c = noise.pilot_covariance(pattern)
    try:
        cf = linalg.cho_factor(c, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("pilot-restricted noise covariance is not positive definite") from exc
    w = np.zeros((n, n), dtype=complex)
    w[np.ix_(idx, idx)] = linalg.cho_solve(cf, np.eye(len(idx)))
    w = 0.5 * (w + w.conj().T)
    return w


def _noise_list(noise: NoiseArg, k: int) -> list:
    if isinstance(noise, NoiseModel):
        return [noise] * k
    noise = list(noise)
    if len(noise) != k:
        raise ValueError(f"expected {k} noise models, got {len(noise)}")
    return noise


def _check_obs(obs_list: Sequence[PilotObservation], n: int):
    shapes = {o.h_prime.shape for o in obs_list}
    if len(shapes) != 1:
        raise ValueError("observations have inconsistent shapes")
    if obs_list[0].pattern.n != n:
        raise ValueError(f"observation size {obs_list[0].pattern.n} does not match Q of size {n}")


def _logdet_lu(lu: np.ndarray) -> float:
    return float(np.sum(np.log(np.abs(np.diag(lu)))))


def _quad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Real part of ``x^H y`` along the first axis."""
    return np.real(np.sum(x.conj() * y, axis=0))


def _pilot_log_evidence(qc: ChannelCovariance, ln: _Link) -> np.ndarray:
    """Single direct sequence: same evidence from the Hermitian pilot-domain form.

    ``det(I + Q W) = det(Q_pp + C_p) / det(C_p)`` and
    ``h'^H W (I + Q W)^{-1} h' = y^H (Q_pp + C_p)^{-1} y``; both Cholesky based.
    The quadratic term is refined with residuals in extended precision: it can
    reach 1e4 at high SNR, where a plain double solve loses about 1e-9 absolute.
    Where long double is no wider than double the refinement changes nothing.
    """
    idx = ln.idx
    s = qc.q[np.ix_(idx, idx)] + ln.cp
    cs = linalg.cho_factor(s, lower=True, check_finite=False)
    cc = linalg.cho_factor(ln.cp, lower=True, check_finite=False)
    logdet = 2.0 * (np.sum(np.log(np.diag(cs[0]).real)) - np.sum(np.log(np.diag(cc[0]).real)))
    y = ln.h[idx]
    x = linalg.cho_solve(cs, y, check_finite=False)
    q_ext = qc.extended_block(idx)
    if q_ext is None:
        return -logdet - _quad(y, x)
    s_ext = q_ext + ln.cp.astype(np.clongdouble)
    y_ext = y.astype(np.clongdouble)
    x_ext = x.astype(np.clongdouble)
    for _ in range(REFINE_STEPS):
        r = y_ext - s_ext @ x_ext
        x_ext = x_ext + linalg.cho_solve(cs, r.astype(complex), check_finite=False)
    return -logdet - np.real(np.sum(y_ext.conj() * x_ext, axis=0)).astype(float)


def _solve_links(qc: ChannelCovariance, links: Sequence[_Link]):
    """Posterior mean, log evidence and worst condition number for one hypothesis."""
    q = qc.q
    n = q.shape[0]
    eye = np.eye(n)
    b_mat = eye.astype(complex)
    b_vec = 0.0
    const = 0.0
    logdet = 0.0
    conds = []
    for ln in links:
        wh = ln.w @ ln.h
        if ln.direct or ln.lam >= LAMBDA_MERGE_THRESHOLD:
            b_mat = b_mat + q @ ln.w
            b_vec = b_vec + wh
            const = const + _quad(ln.h, wh)
            continue
        lam2 = ln.lam * ln.lam
        a = eye + (1.0 - lam2) * (q @ ln.w)
        a_lu = linalg.lu_factor(a, check_finite=False)
        logdet += _logdet_lu(a_lu[0])
        # A^{-H} W h' == (I + (1 - lam^2) W Q)^{-1} W h'
        g = linalg.lu_solve(a_lu, wh, trans=2, check_finite=False)
        const = const + _quad(ln.h, g)
        if lam2 > 0.0:
            r = lam2 / (1.0 - lam2)
            b_mat = b_mat + r * (eye - linalg.lu_solve(a_lu, eye, check_finite=False))
            b_vec = b_vec + ln.lam * g
        conds.append(np.linalg.cond(a))
    b_lu = linalg.lu_factor(b_mat, check_finite=False)
    conds.append(np.linalg.cond(b_mat))
    if isinstance(b_vec, float):
        k = np.zeros_like(links[0].h)
    else:
        k = linalg.lu_solve(b_lu, q @ b_vec, check_finite=False)
    if len(links) == 1 and links[0].direct and links[0].cp is not None:
        log_ev = _pilot_log_evidence(qc, links[0])
    else:
        logdet += _logdet_lu(b_lu[0])
        c = const - (_quad(b_vec, k) if not isinstance(b_vec, float) else 0.0)
        log_ev = -logdet - c
    if not np.all(np.isfinite(k)) or not np.all(np.isfinite(log_ev)):
        raise FloatingPointError("singular system in channel estimator")
    return k, log_ev, max(conds)


def _mixture(hypotheses: Sequence, q_of: Callable, links_of: Callable, log_prior: np.ndarray):
    """Posterior-weighted combination of per-hypothesis estimates."""
    ks, log_ev, conds = [], [], []
    for hyp in hypotheses:
        k, lev, cond = _solve_links(q_of(hyp), links_of(hyp))
        ks.append(k)
        log_ev.append(lev)
        conds.append(cond)
    log_ev = np.array(log_ev)
    lp = log_prior.reshape((-1,) + (1,) * (log_ev.ndim - 1))
    lw = log_ev + lp
    lw = lw - logsumexp(lw, axis=0, keepdims=True)
    if not np.all(np.isfinite(logsumexp(lw, axis=0))):
        raise FloatingPointError("mixture weights are not finite")
    wts = np.exp(lw)
    ks = np.array(ks)
    h_hat = np.einsum("h...,hn...->n...", wts, ks)
    return h_hat, lw, {"cond": max(conds), "per_hypothesis_cond": conds}


def _direct(obs: PilotObservation, noise: NoiseModel) -> _Link:
    p = obs.pattern
    cp = noise.pilot_covariance(p) if noise.is_colored else noise.sigma2 * np.eye(p.m)
    return _Link(noise_precision(noise, p), obs.h_prime, idx=p.index_array, cp=cp)


def _aux(obs: PilotObservation, noise: NoiseModel, lam: float) -> _Link:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return _Link(noise_precision(noise, obs.pattern), obs.h_prime, float(lam), direct=False)


def _q_items(q_set: Mapping) -> tuple:
    if not q_set:
        raise ValueError("the set of hypothesised lengths is empty")
    return tuple(sorted(q_set))


# --- known channel length ---------------------------------------------------

def lmmse_known_l(obs: PilotObservation, q: ChannelCovariance, noise: NoiseModel) -> EstimationResult:
    """``(I + Q W)^{-1} Q W h'``, i.e. ``(sigma^2 I + Q P^H P)^{-1} Q P^H P h'`` for white noise."""
    _check_obs([obs], q.n)
    k, _, cond = _solve_links(q, [_direct(obs, noise)])
    return EstimationResult(k, diagnostics={"cond": cond})


def lmmse_pilot_domain(obs: PilotObservation, q: ChannelCovariance, noise: NoiseModel) -> np.ndarray:
    """Same estimate as :func:`lmmse_known_l` via ``Q[:, p] (Q[p, p] + C)^{-1} h'_p``."""
    idx = obs.pattern.index_array
    s = q.q[np.ix_(idx, idx)] + noise.pilot_covariance(obs.pattern)
    cf = linalg.cho_factor(s, lower=True)
    return q.q[:, idx] @ linalg.cho_solve(cf, obs.pilot_values)


def time_corr_known_l(
    obs1: PilotObservation,
    obs2: PilotObservation,
    q: ChannelCovariance,
    lam: float,
    noise: NoiseArg,
) -> EstimationResult:
    """Estimate the channel behind ``obs2`` using ``obs1`` from a channel correlated by ``lam``.

    For ``lam`` at or above :data:`LAMBDA_MERGE_THRESHOLD` the two pilot
    sequences are merged and plain LMMSE is applied to the union.
    """
    _check_obs([obs1, obs2], q.n)
    n1, n2 = _noise_list(noise, 2)
    k, _, cond = _solve_links(q, [_direct(obs2, n2), _aux(obs1, n1, lam)])
    return EstimationResult(k, diagnostics={"cond": cond, "merged": lam >= LAMBDA_MERGE_THRESHOLD})


def k_pilot_known_l(
    obs_list: Sequence[PilotObservation],
    q: ChannelCovariance,
    lambdas: Sequence[float],
    noise: NoiseArg,
) -> EstimationResult:
    """Estimate a channel seen only through ``K`` correlated pilot sequences.

    Sequence ``k`` observes a channel whose taps correlate with the target's
    by ``lambdas[k]``; the target itself carries no pilots.
    """
    obs_list = list(obs_list)
    if not obs_list:
        raise ValueError("need at least one pilot sequence")
    if len(lambdas) != len(obs_list):
        raise ValueError("need one lambda per pilot sequence")
    _check_obs(obs_list, q.n)
    noises = _noise_list(noise, len(obs_list))
    links = [_aux(o, nm, lam) for o, nm, lam in zip(obs_list, noises, lambdas)]
    k, _, cond = _solve_links(q, links)
    return EstimationResult(k, diagnostics={"cond": cond})


def interp_two_pilots(
    obs1: PilotObservation,
    obs2: PilotObservation,
    q: ChannelCovariance,
    lambda1: float,
    lambda2: float,
    noise: NoiseArg,
) -> EstimationResult:
    """Estimate a channel lying between two pilot-bearing channels."""
    return k_pilot_known_l([obs1, obs2], q, [lambda1, lambda2], noise)


# --- unknown channel length -------------------------------------------------

def length_log_weights(
    obs: PilotObservation,
    q_set: Mapping[int, ChannelCovariance],
    noise: NoiseModel,
    prior_over_l=None,
):
    """Per-length estimates and normalized log posterior weights.

    Returns ``(lengths, estimate, log_weights, diagnostics)``.
    """
    ls = _q_items(q_set)
    _check_obs([obs], q_set[ls[0]].n)
    link = [_direct(obs, noise)]
    h_hat, lw, diag = _mixture(ls, lambda l: q_set[l], lambda l: link, normalize_prior(prior_over_l, ls))
    return ls, h_hat, lw, diag


def mmse_unknown_l(
    obs: PilotObservation,
    q_set: Mapping[int, ChannelCovariance],
    noise: NoiseModel,
    prior_over_l=None,
) -> EstimationResult:
    """Posterior-weighted mixture of per-length LMMSE estimates.

    Length ``L`` gets log-weight ``-log det(I + Q_L W) - C_L + log prior(L)``
    with ``C_L = h'^H W (I + Q_L W)^{-1} h'``.
    """
    ls, h_hat, lw, diag = length_log_weights(obs, q_set, noise, prior_over_l)
    return EstimationResult(h_hat, l_values=ls, log_weights=lw, diagnostics=diag)


def time_corr_unknown_l(
    obs1: PilotObservation,
    obs2: PilotObservation,
    q_set: Mapping[int, ChannelCovariance],
    lam: float,
    noise: NoiseArg,
    prior_over_l=None,
) -> EstimationResult:
    """Mixture over lengths of :func:`time_corr_known_l` estimates."""
    ls = _q_items(q_set)
    _check_obs([obs1, obs2], q_set[ls[0]].n)
    n1, n2 = _noise_list(noise, 2)
    links = [_direct(obs2, n2), _aux(obs1, n1, lam)]
    h_hat, lw, diag = _mixture(ls, lambda l: q_set[l], lambda l: links, normalize_prior(prior_over_l, ls))
    return EstimationResult(h_hat, l_values=ls, log_weights=lw, diagnostics=diag)


# --- unknown correlation coefficient ----------------------------------------

def _time_corr_links(observations, lams, noises):
    obs1, obs2 = observations
    (lam,) = lams
    return [_direct(obs2, noises[1]), _aux(obs1, noises[0], lam)]


def _k_pilot_links(observations, lams, noises):
    return [_aux(o, nm, lam) for o, nm, lam in zip(observations, noises, lams)]


_LAMBDA_ESTIMATORS = {
    time_corr_known_l: (_time_corr_links, 1),
    time_corr_unknown_l: (_time_corr_links, 1),
    interp_two_pilots: (_k_pilot_links, 2),
    k_pilot_known_l: (_k_pilot_links, None),
}


def lambda_marginalized(
    estimator: Callable,
    observations: Sequence[PilotObservation],
    q: Union[ChannelCovariance, Mapping[int, ChannelCovariance]],
    lambda_grid: Sequence,
    noise: NoiseArg,
    lambda_prior=None,
    prior_over_l=None,
) -> EstimationResult:
    """Average a correlation-dependent estimator over a grid of correlation values.

    ``estimator`` is one of :func:`time_corr_known_l`, :func:`time_corr_unknown_l`,
    :func:`interp_two_pilots` or :func:`k_pilot_known_l`. Each grid entry is
    either a scalar used for every auxiliary sequence or a tuple with one
    value per auxiliary sequence. Grid points are weighted by prior times
    marginal likelihood of all observations. Passing a mapping of covariances
    for ``q`` marginalizes the channel length jointly.
    """
    if estimator not in _LAMBDA_ESTIMATORS:
        raise ValueError(f"{getattr(estimator, '__name__', estimator)!r} does not depend on lambda")
    build_links, n_aux = _LAMBDA_ESTIMATORS[estimator]
    observations = list(observations)
    if n_aux is None:
        n_aux = len(observations)
    if not lambda_grid:
        raise ValueError("lambda grid is empty")
    grid = []
    for g in lambda_grid:
        g = tuple(float(v) for v in np.atleast_1d(g))
        if len(g) == 1:
            g = g * n_aux
        if len(g) != n_aux:
            raise ValueError(f"grid entry {g} needs {n_aux} values")
        grid.append(g)
    lam_lp = normalize_prior(lambda_prior, grid)

    if isinstance(q, ChannelCovariance):
        q_set = {q.l: q}
    else:
        q_set = dict(q)
    ls = _q_items(q_set)
    _check_obs(observations, q_set[ls[0]].n)
    l_lp = normalize_prior(prior_over_l, ls)
    noises = _noise_list(noise, len(observations))

    hyps = [(l, g) for l in ls for g in range(len(grid))]
    log_prior = np.array([l_lp[i] + lam_lp[j] for i in range(len(ls)) for j in range(len(grid))])
    links_cache = {j: build_links(observations, grid[j], noises) for j in range(len(grid))}
    h_hat, lw, diag = _mixture(hyps, lambda h: q_set[h[0]], lambda h: links_cache[h[1]], log_prior)

    lw = lw.reshape((len(ls), len(grid)) + lw.shape[1:])
    lam_lw = logsumexp(lw, axis=0)
    l_lw = logsumexp(lw, axis=1)
    values = tuple(g[0] if len(set(g)) == 1 else g for g in grid)
    return EstimationResult(
        h_hat,
        l_values=ls if len(ls) > 1 else None,
        log_weights=l_lw if len(ls) > 1 else None,
        lambda_values=values,
        lambda_log_weights=lam_lw,
        diagnostics=diag,
    )


def merged_observation(obs1: PilotObservation, obs2: PilotObservation):
    """Combine two pilot sequences with disjoint pilots into one."""
    if set(obs1.pattern.indices) & set(obs2.pattern.indices):
        raise ValueError("pilot sets overlap; merge via noise precisions instead")
    pattern = obs1.pattern.union(obs2.pattern)
    return PilotObservation(pattern, obs1.h_prime + obs2.h_prime)
