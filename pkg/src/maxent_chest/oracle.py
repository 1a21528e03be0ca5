"""
Brute-force reference computations for small instances.

Nothing here reuses the estimator code paths: covariances are assembled
from the explicit DFT submatrix and conditioning is done with dense
textbook formulas on the stacked observation vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp


@dataclass(frozen=True, eq=False)
class JointGaussianSpec:
    """Zero-mean joint complex Gaussian over ``(h, y)``.

    ``cov_hy`` is ``Cov(h, y)`` (N x M_total) and ``cov_yy`` is the
    observation covariance including noise.
    """

    cov_hy: np.ndarray
    cov_yy: np.ndarray
    cov_hh: np.ndarray = None
    cov_yy_ext: np.ndarray = None


@dataclass(frozen=True)
class ObservedSequence:
    """One pilot sequence: pilot indices, correlation to the target, pilot noise covariance."""

    indices: tuple
    lam: float
    noise_cov: np.ndarray


def dft_covariance(n: int, l: int) -> np.ndarray:
    f = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(l)) / n)
    return f @ f.conj().T / l


def dft_covariance_extended(n: int, l: int) -> np.ndarray:
    """``F F^H / l`` in long double, for residuals of refined solves."""
    two_pi = np.longdouble("6.28318530717958647692528676655900577")
    ph = (np.outer(np.arange(n), np.arange(l)) % n).astype(np.longdouble) * (-two_pi / np.longdouble(n))
    f = np.cos(ph) + 1j * np.sin(ph)
    return f @ f.conj().T / np.longdouble(l)


def stacked_spec(n: int, l: int, sequences: Sequence[ObservedSequence]) -> JointGaussianSpec:
    """Joint model of target ``h`` and stacked pilot observations.

    Sequence ``k`` observes ``h_k = lam_k h + sqrt(1 - lam_k^2) w_k`` with
    independent prior draws ``w_k``; ``lam_k = 1`` observes ``h`` itself.
    """
    q = dft_covariance(n, l)
    q_ext = dft_covariance_extended(n, l)
    rows, rows_ext, cross = [], [], []
    for j, sj in enumerate(sequences):
        row, row_ext = [], []
        for k, sk in enumerate(sequences):
            sub = np.ix_(sj.indices, sk.indices)
            scale = 1.0 if j == k else sj.lam * sk.lam
            blk, blk_ext = scale * q[sub], np.longdouble(scale) * q_ext[sub]
            if j == k:
                blk = blk + np.asarray(sj.noise_cov)
                blk_ext = blk_ext + np.asarray(sj.noise_cov, dtype=np.clongdouble)
            row.append(blk)
            row_ext.append(blk_ext)
        rows.append(row)
        rows_ext.append(row_ext)
        cross.append(sj.lam * q[:, list(sj.indices)])
    return JointGaussianSpec(np.hstack(cross), np.block(rows), q, np.block(rows_ext))


def stacked_observation(h_primes: Sequence[np.ndarray], sequences: Sequence[ObservedSequence]) -> np.ndarray:
    return np.concatenate([np.asarray(h)[list(s.indices)] for h, s in zip(h_primes, sequences)])


def gaussian_condition(spec: JointGaussianSpec, y: np.ndarray) -> np.ndarray:
    """``E[h | y] = Cov(h, y) Cov(y, y)^{-1} y`` by a dense solve."""
    return spec.cov_hy @ np.linalg.solve(spec.cov_yy, y)


def log_density(spec: JointGaussianSpec, y: np.ndarray) -> float:
    """Complex Gaussian log density of ``y`` under ``CN(0, cov_yy)``."""
    c, low = linalg.cho_factor(spec.cov_yy, lower=True)
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(c))))
    x = linalg.cho_solve((c, low), y)
    if spec.cov_yy_ext is not None:
        # two refinement passes with long-double residuals
        y_ext = np.asarray(y, dtype=np.clongdouble)
        x = x.astype(np.clongdouble)
        for _ in range(2):
            x = x + linalg.cho_solve((c, low), (y_ext - spec.cov_yy_ext @ x).astype(complex))
        quad = float(np.real(np.sum(y_ext.conj() * x)))
    else:
        quad = np.real(np.vdot(y, x))
    return float(-len(y) * np.log(np.pi) - logdet - quad)


def mixture_log_posterior(specs: Mapping, prior: Mapping, y: np.ndarray) -> dict:
    keys = list(specs)
    lp = np.array([np.log(prior[k]) + log_density(specs[k], y) for k in keys])
    lp -= logsumexp(lp)
    return dict(zip(keys, lp))


def mixture_condition(specs: Mapping, prior: Mapping, y: np.ndarray) -> np.ndarray:
    """Posterior mean under a finite mixture of joint Gaussians."""
    if not specs:
        raise ValueError("no hypotheses")
    post = mixture_log_posterior(specs, prior, y)
    return sum(np.exp(post[k]) * gaussian_condition(specs[k], y) for k in specs)


@dataclass
class MCEstimate:
    mean: np.ndarray
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    ess: float

    @property
    def reliable(self) -> bool:
        return self.ess >= 100


def mc_posterior_mean(
    prior_sampler: Callable[[np.random.Generator, int], np.ndarray],
    log_likelihood: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    rng: np.random.Generator,
    chunk: int = 1 << 16,
) -> MCEstimate:
    """Self-normalized importance sampling of ``E[h | y]`` with the prior as proposal.

    ``prior_sampler(rng, k)`` returns ``k`` samples as rows; ``log_likelihood``
    maps rows to log ``P(y | h)``. Standard errors use the delta-method
    variance of the ratio estimator, separately for real and imaginary parts.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 10^4 samples")
    samples, logw = [], []
    done = 0
    while done < n_samples:
        k = min(chunk, n_samples - done)
        h = prior_sampler(rng, k)
        samples.append(h)
        logw.append(log_likelihood(h))
        done += k
    h = np.concatenate(samples)
    logw = np.concatenate(logw)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = w @ h
    dev = h - mean
    se_re = np.sqrt((w ** 2) @ (dev.real ** 2))
    se_im = np.sqrt((w ** 2) @ (dev.imag ** 2))
    ess = 1.0 / np.sum(w ** 2)
    return MCEstimate(mean, se_re, se_im, float(ess))
