"""Bayesian OFDM channel estimation with unknown channel length and time correlation."""

from .estimate import (
    EstimationResult,
    interp_two_pilots,
    k_pilot_known_l,
    lambda_marginalized,
    length_log_weights,
    lmmse_known_l,
    merged_observation,
    mmse_unknown_l,
    time_corr_known_l,
    time_corr_unknown_l,
)
from .infer import EvidenceReport, evidence_gap, length_posterior
from .model import (
    ChannelCovariance,
    NoiseModel,
    PilotPattern,
    SystemConfig,
    build_phi,
    build_q,
    build_q_set,
    jakes_lambda,
    snr_to_sigma2,
)
from .simulate import (
    ChannelRealization,
    PilotObservation,
    draw_channel,
    draw_correlated_chain,
    draw_correlated_pair,
    make_rng,
    observe,
)

__all__ = [
    "ChannelCovariance",
    "ChannelRealization",
    "EstimationResult",
    "EvidenceReport",
    "NoiseModel",
    "PilotObservation",
    "PilotPattern",
    "SystemConfig",
    "build_phi",
    "build_q",
    "build_q_set",
    "draw_channel",
    "draw_correlated_chain",
    "draw_correlated_pair",
    "evidence_gap",
    "interp_two_pilots",
    "jakes_lambda",
    "k_pilot_known_l",
    "lambda_marginalized",
    "length_log_weights",
    "length_posterior",
    "lmmse_known_l",
    "make_rng",
    "merged_observation",
    "mmse_unknown_l",
    "observe",
    "snr_to_sigma2",
    "time_corr_known_l",
    "time_corr_unknown_l",
]
