"""
Ground-truth channels, correlated channel chains and noisy pilot
observations.

All draws go through :func:`make_rng`, a Philox (counter-based) generator,
so every realization is reproducible from its integer seed. Functions take
an optional ``size``; batched outputs carry the trial axis last, e.g. taps of
shape ``(L, size)`` and responses of shape ``(N, size)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .model import NoiseModel, PilotPattern

SeedLike = Union[int, np.random.Generator, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def _cn(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    """Circular complex Gaussian samples with variance ``var``."""
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _shape(lead: int, size: Optional[int]):
    return (lead,) if size is None else (lead, size)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    nu: np.ndarray
    h: np.ndarray

    @property
    def l(self) -> int:
        return self.nu.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[0]

    @classmethod
    def from_taps(cls, nu: np.ndarray, n: int) -> "ChannelRealization":
        return cls(nu, np.fft.fft(nu, n=n, axis=0))


@dataclass(frozen=True, eq=False)
class PilotObservation:
    """Pilot ratios ``h'_k = y_k / s_k``, zero off the pilot subcarriers."""

    pattern: PilotPattern
    h_prime: np.ndarray

    def __post_init__(self):
        hp = np.asarray(self.h_prime, dtype=complex)
        if hp.shape[0] != self.pattern.n:
            raise ValueError(
                f"observation length {hp.shape[0]} does not match N={self.pattern.n}"
            )
        if np.any(hp[~self.pattern.mask] != 0):
            raise ValueError("observation must be zero off the pilot subcarriers")
        object.__setattr__(self, "h_prime", hp)

    @classmethod
    def from_pilot_values(cls, pattern: PilotPattern, values) -> "PilotObservation":
        values = np.asarray(values, dtype=complex)
        hp = np.zeros((pattern.n,) + values.shape[1:], dtype=complex)
        hp[pattern.index_array] = values
        return cls(pattern, hp)

    @property
    def pilot_values(self) -> np.ndarray:
        return self.h_prime[self.pattern.index_array]

    @property
    def batch(self) -> Optional[int]:
        return None if self.h_prime.ndim == 1 else self.h_prime.shape[1]


def _check_dims(l: int, n: int):
    if not 1 <= l <= n:
        raise ValueError(f"channel length must satisfy 1 <= l <= n, got l={l}, n={n}")


def _check_lambda(lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


def draw_channel(l: int, n: int, seed: SeedLike = None, size: Optional[int] = None) -> ChannelRealization:
    """Channel with i.i.d. ``CN(0, 1/l)`` taps and its ``n``-point DFT."""
    _check_dims(l, n)
    rng = make_rng(seed)
    return ChannelRealization.from_taps(_cn(rng, _shape(l, size), 1.0 / l), n)


def draw_correlated_chain(
    l: int,
    n: int,
    lambdas: Sequence[float],
    seed: SeedLike = None,
    size: Optional[int] = None,
):
    """A reference channel and ``K`` channels correlated to it.

    Auxiliary channel ``k`` has taps ``lambdas[k] * nu_ref + sqrt(1 - lambdas[k]**2) * w_k``
    with ``w_k`` an independent prior draw, so each keeps the prior marginal.
    Returns ``(reference, [aux_1, ..., aux_K])``.
    """
    _check_dims(l, n)
    for lam in lambdas:
        _check_lambda(lam)
    rng = make_rng(seed)
    nu_ref = _cn(rng, _shape(l, size), 1.0 / l)
    aux = []
    for lam in lambdas:
        w = _cn(rng, _shape(l, size), 1.0 / l)
        nu = nu_ref if lam == 1.0 else lam * nu_ref + math.sqrt(1.0 - lam * lam) * w
        aux.append(ChannelRealization.from_taps(nu, n))
    return ChannelRealization.from_taps(nu_ref, n), aux


def draw_correlated_pair(l: int, n: int, lam: float, seed: SeedLike = None, size: Optional[int] = None):
    """``(h1, h2)`` where ``h2`` is drawn from the prior and ``h1`` is correlated to it."""
    ref, (aux,) = draw_correlated_chain(l, n, [lam], seed, size)
    return aux, ref


def pilot_symbols(pattern: PilotPattern, kind: str, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    if kind == "ones":
        return np.ones(_shape(pattern.m, size), dtype=complex)
    if kind == "qpsk":
        k = rng.integers(0, 4, size=_shape(pattern.m, size))
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * k))
    raise ValueError(f"unknown pilot symbol kind {kind!r}")


def observe(
    channel: Union[ChannelRealization, np.ndarray],
    pattern: PilotPattern,
    noise: Optional[NoiseModel],
    seed: SeedLike = None,
    pilots: str = "ones",
) -> PilotObservation:
    """Transmit unit-modulus pilots through ``channel`` and divide them out.

    ``noise=None`` gives a noiseless observation.
    """
    h = channel.h if isinstance(channel, ChannelRealization) else np.asarray(channel)
    if h.shape[0] != pattern.n:
        raise ValueError(f"channel length {h.shape[0]} does not match N={pattern.n}")
    size = None if h.ndim == 1 else h.shape[1]
    rng = make_rng(seed)
    s = pilot_symbols(pattern, pilots, rng, size)
    h_p = h[pattern.index_array]
    if noise is None:
        nz = np.zeros_like(h_p, dtype=complex)
    elif not noise.is_colored:
        nz = _cn(rng, h_p.shape, noise.sigma2)
    else:
        c = noise.pilot_covariance(pattern)
        try:
            chol = linalg.cholesky(c, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("pilot-restricted noise covariance is not positive definite") from exc
        nz = chol @ _cn(rng, h_p.shape, 1.0)
    y = h_p * s + nz
    return PilotObservation.from_pilot_values(pattern, y / s)
