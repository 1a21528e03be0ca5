"""
Posterior inference over the channel length from received pilots.

The log posterior of each hypothesised length is the mixture weight used by
:func:`maxent_chest.estimate.mmse_unknown_l`. Evidence follows Jaynes,
``e(L) = log10(p_L / sum_{l != L} p_l)``, and odds are ``10**e(L)``. A
hypothesis holding all posterior mass at double precision has evidence and
odds equal to :data:`SATURATED` (``+inf``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .estimate import length_log_weights
from .model import ChannelCovariance, NoiseModel
from .simulate import PilotObservation

SATURATED = math.inf


@dataclass
class EvidenceReport:
    """Per-length posterior, evidence and odds; arrays have the length axis first."""

    l_values: tuple
    log_posterior: np.ndarray
    evidence: np.ndarray
    odds: np.ndarray

    def index(self, l: int) -> int:
        return self.l_values.index(l)

    @property
    def posterior(self) -> np.ndarray:
        return np.exp(self.log_posterior)

    def as_dict(self, field_name: str) -> dict:
        arr = getattr(self, field_name)
        return {l: arr[i] for i, l in enumerate(self.l_values)}


def _evidence(log_post: np.ndarray) -> np.ndarray:
    n = log_post.shape[0]
    ev = np.empty_like(log_post)
    for i in range(n):
        others = np.delete(log_post, i, axis=0)
        if others.shape[0] == 0:
            ev[i] = SATURATED
            continue
        with np.errstate(divide="ignore"):
            log_rest = logsumexp(others, axis=0)
        ev[i] = (log_post[i] - log_rest) / math.log(10.0)
    return ev


def report_from_log_posterior(l_values, log_posterior) -> EvidenceReport:
    """Evidence and odds from normalized log posteriors (length axis first)."""
    lp = np.asarray(log_posterior, dtype=float)
    if lp.shape[0] != len(l_values):
        raise ValueError(f"need {len(l_values)} log posteriors, got {lp.shape[0]}")
    ev = _evidence(lp)
    with np.errstate(over="ignore"):
        odds = np.power(10.0, ev)
    return EvidenceReport(tuple(l_values), lp, ev, odds)


def length_posterior(
    obs: PilotObservation,
    q_set: Mapping[int, ChannelCovariance],
    noise: NoiseModel,
    prior_over_l=None,
) -> EvidenceReport:
    ls, _, lw, _ = length_log_weights(obs, q_set, noise, prior_over_l)
    return report_from_log_posterior(ls, lw)


def evidence_gap(report: EvidenceReport, l_true: int):
    """Evidence of ``l_true`` minus the best competing evidence; positive means recovered."""
    if l_true not in report.l_values:
        raise ValueError(f"l_true={l_true} is not among the tested lengths")
    i = report.index(l_true)
    others = np.delete(report.evidence, i, axis=0)
    if others.shape[0] == 0:
        return SATURATED if report.evidence.ndim == 1 else np.full(report.evidence.shape[1:], SATURATED)
    gap = report.evidence[i] - others.max(axis=0)
    return float(gap) if np.ndim(gap) == 0 else gap
