"""
Domain types and covariance construction for pilot-aided OFDM channel
estimation under maximum-entropy priors.

Subcarriers are indexed ``0..N-1`` and the DFT kernel is
``exp(-2j*pi*k*n/N)``, matching :func:`numpy.fft.fft`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import special

# Smallest noise variance accepted; an infinite SNR maps here.
SIGMA2_FLOOR = 1e-12


def snr_to_sigma2(snr_db: float) -> float:
    """Noise variance for unit signal and channel power."""
    return max(10.0 ** (-snr_db / 10.0), SIGMA2_FLOOR)


def _hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PilotPattern:
    """Ordered set of pilot subcarriers for one pilot sequence."""

    n: int
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if self.n < 1:
            raise ValueError(f"subcarrier count must be positive, got {self.n}")
        if len(idx) < 1:
            raise ValueError("a pilot pattern needs at least one pilot")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("pilot indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= self.n:
            raise ValueError(f"pilot indices must lie in [0, {self.n})")

    @classmethod
    def comb(cls, n: int, spacing: int, offset: int = 0) -> "PilotPattern":
        """Evenly spaced pilots ``offset, offset+spacing, ...`` below ``n``."""
        if spacing < 1:
            raise ValueError("pilot spacing must be >= 1")
        if not 0 <= offset < n:
            raise ValueError(f"pilot offset must lie in [0, {n})")
        return cls(n, tuple(range(offset, n, spacing)))

    @classmethod
    def full(cls, n: int) -> "PilotPattern":
        return cls(n, tuple(range(n)))

    @property
    def m(self) -> int:
        return len(self.indices)

    @property
    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    @property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        out[self.index_array] = True
        return out

    def union(self, other: "PilotPattern") -> "PilotPattern":
        if other.n != self.n:
            raise ValueError("patterns refer to different subcarrier counts")
        return PilotPattern(self.n, tuple(sorted(set(self.indices) | set(other.indices))))


@dataclass(frozen=True, eq=False)
class ChannelCovariance:
    """Frequency-domain covariance ``Q_L`` of a length-``l`` channel."""

    q: np.ndarray
    l: int

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def extended_block(self, idx: np.ndarray) -> Optional[np.ndarray]:
        """``Q[idx, idx]`` in extended precision, or ``None`` if ``q`` is not ``Q_l``."""
        col = _q_column_extended(self.n, self.l)
        blk = col[(idx[:, None] - idx[None, :]) % self.n]
        if np.max(np.abs(blk - self.q[np.ix_(idx, idx)]), initial=0.0) > 1e-12:
            return None
        return blk


@dataclass(frozen=True, eq=False)
class TimeCorrCovariance:
    """Conditional covariance ``(1 - lambda**2) Q`` of one channel given another."""

    phi: np.ndarray
    lam: float

    @property
    def degenerate(self) -> bool:
        return self.lam == 1.0


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive noise on the pilot subcarriers.

    Either homogeneous with variance ``sigma2`` or colored with covariance
    ``cov``. A colored covariance may be given over all ``N`` subcarriers or
    already restricted to the ``M`` pilot positions of the pattern it is used
    with.
    """

    sigma2: Optional[float] = None
    cov: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if (self.sigma2 is None) == (self.cov is None):
            raise ValueError("give exactly one of sigma2 or cov")
        if self.sigma2 is not None:
            if not self.sigma2 > 0:
                raise ValueError(f"noise variance must be positive, got {self.sigma2}")
        else:
            c = np.asarray(self.cov, dtype=complex)
            if c.ndim != 2 or c.shape[0] != c.shape[1]:
                raise ValueError("noise covariance must be square")
            if not np.allclose(c, c.conj().T, atol=1e-12):
                raise ValueError("noise covariance must be Hermitian")
            object.__setattr__(self, "cov", _frozen(_hermitize(c)))

    @classmethod
    def homogeneous(cls, sigma2: float) -> "NoiseModel":
        return cls(sigma2=float(sigma2))

    @classmethod
    def from_snr_db(cls, snr_db: float) -> "NoiseModel":
        return cls(sigma2=snr_to_sigma2(snr_db))

    @classmethod
    def colored(cls, cov: np.ndarray) -> "NoiseModel":
        return cls(cov=np.asarray(cov))

    @property
    def is_colored(self) -> bool:
        return self.cov is not None

    def pilot_covariance(self, pattern: PilotPattern) -> np.ndarray:
        """Noise covariance restricted to the pilot positions (M x M)."""
        if self.cov is None:
            return self.sigma2 * np.eye(pattern.m)
        if self.cov.shape[0] == pattern.m:
            return np.array(self.cov)
        if self.cov.shape[0] == pattern.n:
            idx = pattern.index_array
            return np.array(self.cov[np.ix_(idx, idx)])
        raise ValueError(
            f"noise covariance of size {self.cov.shape[0]} fits neither "
            f"N={pattern.n} nor M={pattern.m}"
        )


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one estimation scenario.

    ``patterns[0]`` is the pilot sequence of the channel being estimated;
    any further patterns belong to auxiliary (time-correlated) channels whose
    correlation coefficients to the estimated channel are ``lambdas``.
    """

    n: int
    l_true: int
    l_range: tuple
    snr_db: float
    patterns: tuple
    lambdas: tuple = ()
    noise: Optional[NoiseModel] = None
    n_cp: Optional[int] = None  # recorded only

    def __post_init__(self):
        lo, hi = (int(v) for v in self.l_range)
        object.__setattr__(self, "l_range", (lo, hi))
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if not 1 <= lo <= self.l_true <= hi <= self.n:
            raise ValueError(
                f"need 1 <= L_min <= l_true <= L_max <= N, got "
                f"L_min={lo}, l_true={self.l_true}, L_max={hi}, N={self.n}"
            )
        if not self.patterns:
            raise ValueError("at least one pilot pattern is required")
        for p in self.patterns:
            if p.n != self.n:
                raise ValueError("pilot pattern size does not match N")
        for lam in self.lambdas:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        if len(self.lambdas) not in (0, len(self.patterns) - 1):
            raise ValueError("need one lambda per auxiliary pilot sequence")

    @property
    def sigma2(self) -> float:
        if self.noise is not None and not self.noise.is_colored:
            return self.noise.sigma2
        return snr_to_sigma2(self.snr_db)

    @property
    def noise_model(self) -> NoiseModel:
        return self.noise if self.noise is not None else NoiseModel.homogeneous(self.sigma2)

    @property
    def l_values(self) -> tuple:
        return tuple(range(self.l_range[0], self.l_range[1] + 1))


@lru_cache(maxsize=256)
def _q_matrix(n: int, l: int) -> np.ndarray:
    # Q depends on (r - c) mod n only: build the first column from the tap sum.
    d = np.arange(n)
    k = np.arange(l)
    col = np.exp(-2j * np.pi * np.outer(d, k) / n).sum(axis=1) / l
    q = col[(d[:, None] - d[None, :]) % n]
    q = _hermitize(q)
    np.fill_diagonal(q, 1.0)
    return _frozen(q)


@lru_cache(maxsize=256)
def _q_column_extended(n: int, l: int) -> np.ndarray:
    # Same tap sum in long double; (d * k) mod n keeps the phase argument exact.
    d = np.arange(n)
    k = np.arange(l)
    two_pi = np.longdouble("6.28318530717958647692528676655900577")
    ph = (np.outer(d, k) % n).astype(np.longdouble) * (-two_pi / np.longdouble(n))
    col = (np.cos(ph) + 1j * np.sin(ph)).sum(axis=1) / np.longdouble(l)
    col[0] = 1.0
    col.setflags(write=False)
    return col


def build_q(n: int, l: int) -> ChannelCovariance:
    """Covariance of the frequency response of an ``l``-tap channel.

    Entry ``(r, c)`` is ``(1/l) * sum_k exp(-2j*pi*k*(r - c)/n)``.
    """
    n, l = int(n), int(l)
    if not 1 <= l <= n:
        raise ValueError(f"channel length must satisfy 1 <= l <= n, got l={l}, n={n}")
    return ChannelCovariance(_q_matrix(n, l), l)


def build_q_set(n: int, l_min: int, l_max: int, stride: int = 1) -> dict:
    """Covariances for every hypothesised length in ``l_min..l_max``.

    A ``stride`` above one keeps every ``stride``-th length, always including
    ``l_max``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not 1 <= l_min <= l_max <= n:
        raise ValueError(f"invalid length range {l_min}..{l_max} for n={n}")
    ls = list(range(l_min, l_max + 1, stride))
    if ls[-1] != l_max:
        ls.append(l_max)
    return {l: build_q(n, l) for l in ls}


def build_phi(q: ChannelCovariance, lam: float) -> TimeCorrCovariance:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return TimeCorrCovariance(_frozen((1.0 - lam * lam) * q.q), float(lam))


def jakes_lambda(f_d: float, t: float) -> float:
    """Jakes time-correlation coefficient ``J0(2*pi*f_d*t)``."""
    if f_d < 0 or t < 0:
        raise ValueError("Doppler frequency and lag must be non-negative")
    return float(np.clip(special.j0(2.0 * math.pi * f_d * t), -1.0, 1.0))


def projector_gram(pattern: PilotPattern) -> np.ndarray:
    """``P^H P``: the diagonal 0/1 mask selecting the pilot subcarriers."""
    return np.diag(pattern.mask.astype(float))


def normalize_prior(prior, keys: Sequence) -> np.ndarray:
    """Log prior weights over ``keys`` from a mapping, a sequence or ``None``."""
    if prior is None:
        return np.full(len(keys), -math.log(len(keys)))
    if isinstance(prior, Mapping):
        w = np.array([float(prior[k]) for k in keys])
    else:
        w = np.asarray(prior, dtype=float)
        if w.shape != (len(keys),):
            raise ValueError(f"prior needs {len(keys)} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("prior weights must be non-negative and not all zero")
    with np.errstate(divide="ignore"):
        return np.log(w / w.sum())
