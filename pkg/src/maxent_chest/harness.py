"""
Seeded Monte Carlo experiments: MSE sweeps and channel-length evidence.

Seeding scheme: trial ``t`` of sweep point ``p`` under master seed ``s``
uses the 64-bit seed
``SeedSequence(s, spawn_key=(p, t)).generate_state(1, uint64)[0]`` and draws
everything (channels, pilot symbols, noise) from a Philox generator seeded
with it. Results therefore depend only on the experiment spec and master
seed, never on scheduling or worker count.

MSE is ``||h_hat - h||^2 / N`` per trial; summaries report its trial mean
in dB.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import yaml

from . import estimate as est
from . import infer
from .model import NoiseModel, PilotPattern, build_q, build_q_set
from .simulate import draw_correlated_chain, make_rng, observe

log = logging.getLogger(__name__)


class ExperimentError(ValueError):
    """Invalid experiment specification or output request."""


ESTIMATOR_KINDS = {
    "lmmse": False,
    "mmse_unknown_l": False,
    "time_corr": True,
    "time_corr_unknown_l": True,
    "k_pilot": True,
    "lambda_marginalized": True,
}


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def uses_lambda(self) -> bool:
        return ESTIMATOR_KINDS[self.kind]


@dataclass(frozen=True)
class ExperimentSpec:
    n: int
    l_true: int
    l_range: tuple
    pilots: tuple
    snr_db: tuple
    trials: int
    seed: int
    estimators: tuple = ()
    lambdas: tuple = ()
    l_stride: int = 1
    target_observed: bool = True
    pilot_symbols: str = "ones"
    workers: int = 1
    name: str = "experiment"

    @property
    def n_aux(self) -> int:
        return len(self.pilots) - (1 if self.target_observed else 0)

    def lambda_points(self) -> list:
        """True correlation tuples, one entry per sweep value."""
        if self.n_aux == 0:
            return [()]
        pts = []
        for v in self.lambdas:
            v = tuple(float(x) for x in np.atleast_1d(v))
            pts.append(v * self.n_aux if len(v) == 1 else v)
        return pts

    def points(self) -> list:
        return list(itertools.product(self.snr_db, self.lambda_points()))

    def validate(self, need_estimators: bool = True) -> "ExperimentSpec":
        if self.trials < 1:
            raise ExperimentError("trial count must be >= 1")
        if not self.snr_db:
            raise ExperimentError("SNR sweep is empty")
        lo, hi = self.l_range
        if not 1 <= lo <= self.l_true <= hi <= self.n:
            raise ExperimentError(f"need 1 <= L_min <= l_true <= L_max <= N, got {lo}, {self.l_true}, {hi}, {self.n}")
        if not self.pilots:
            raise ExperimentError("no pilot sequences")
        if self.pilot_symbols not in ("ones", "qpsk"):
            raise ExperimentError(f"unknown pilot symbol kind {self.pilot_symbols!r}")
        if self.n_aux > 0:
            if not self.lambdas:
                raise ExperimentError("auxiliary pilot sequences need a lambda sweep")
            for pt in self.lambda_points():
                if len(pt) != self.n_aux:
                    raise ExperimentError(f"lambda entry {pt} needs {self.n_aux} values")
                if any(not 0.0 <= v <= 1.0 for v in pt):
                    raise ExperimentError(f"lambda values must lie in [0, 1], got {pt}")
        elif self.lambdas:
            raise ExperimentError("lambda sweep given but there are no auxiliary pilot sequences")
        if need_estimators:
            if not self.estimators:
                raise ExperimentError("no estimators selected")
            names = [e.name for e in self.estimators]
            if len(set(names)) != len(names):
                raise ExperimentError("estimator names must be unique")
            for e in self.estimators:
                if e.kind not in ESTIMATOR_KINDS:
                    raise ExperimentError(f"unknown estimator kind {e.kind!r}")
                if e.uses_lambda and self.n_aux == 0:
                    raise ExperimentError(f"estimator {e.name!r} needs auxiliary pilot sequences")
                if e.kind in ("lmmse", "mmse_unknown_l", "time_corr", "time_corr_unknown_l") and not self.target_observed:
                    raise ExperimentError(f"estimator {e.name!r} needs pilots on the estimated channel")
                if e.kind in ("time_corr", "time_corr_unknown_l") and self.n_aux != 1:
                    raise ExperimentError(f"estimator {e.name!r} takes exactly one auxiliary sequence")
                if e.kind == "k_pilot" and self.target_observed:
                    raise ExperimentError(f"estimator {e.name!r} estimates a channel without its own pilots")
                if e.kind == "lambda_marginalized" and not e.params.get("grid"):
                    raise ExperimentError(f"estimator {e.name!r} needs a lambda grid")
                _resolve_l(e.params.get("l", "true"), self)
            if self.lambdas and not any(e.uses_lambda for e in self.estimators):
                raise ExperimentError("lambda sweep requested but no selected estimator uses lambda")
        return self


def _pattern_from(cfg, n: int) -> PilotPattern:
    if isinstance(cfg, Mapping) and "indices" in cfg:
        return PilotPattern(n, tuple(cfg["indices"]))
    if isinstance(cfg, Mapping) and "spacing" in cfg:
        return PilotPattern.comb(n, int(cfg["spacing"]), int(cfg.get("offset", 0)))
    if cfg == "full":
        return PilotPattern.full(n)
    raise ExperimentError(f"cannot parse pilot pattern {cfg!r}")


def spec_from_dict(cfg: Mapping) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec` from a parsed config mapping."""
    try:
        system = cfg["system"]
        n = int(system["n"])
        sweep = cfg.get("sweep", {})
        ests = tuple(
            EstimatorSpec(e["name"], e["kind"], {k: v for k, v in e.items() if k not in ("name", "kind")})
            for e in cfg.get("estimators", [])
        )
        snr = sweep.get("snr_db", [system.get("snr_db")] if "snr_db" in system else [])
        return ExperimentSpec(
            name=str(cfg.get("name", "experiment")),
            n=n,
            l_true=int(system["l_true"]),
            l_range=tuple(int(v) for v in system.get("l_range", [system["l_true"], system["l_true"]])),
            l_stride=int(system.get("l_stride", 1)),
            pilots=tuple(_pattern_from(p, n) for p in system.get("pilots", ["full"])),
            target_observed=bool(system.get("target_observed", True)),
            pilot_symbols=str(system.get("pilot_symbols", "ones")),
            snr_db=tuple(float(v) for v in snr),
            lambdas=tuple(tuple(v) if isinstance(v, list) else v for v in sweep.get("lambdas", ())),
            estimators=ests,
            trials=int(cfg.get("trials", 1000)),
            seed=int(cfg.get("seed", 0)),
            workers=int(cfg.get("workers", 1)),
        )
    except (KeyError, TypeError) as exc:
        raise ExperimentError(f"malformed config: {exc!r}") from exc
    except ValueError as exc:
        if isinstance(exc, ExperimentError):
            raise
        raise ExperimentError(str(exc)) from exc


def load_spec(path: str) -> ExperimentSpec:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ExperimentError(f"cannot read config {path}: {exc.strerror}") from exc
    if not isinstance(cfg, Mapping):
        raise ExperimentError(f"config {path} is not a mapping")
    return spec_from_dict(cfg)


def trial_seed(master: int, point: int, trial: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=(point, trial))
    return int(ss.generate_state(1, np.uint64)[0])


def _resolve_l(value, spec: ExperimentSpec) -> int:
    # YAML reads a bare `true` as a boolean
    if isinstance(value, bool):
        if not value:
            raise ExperimentError("channel length 'false' is meaningless; use true, max, min or an integer")
        return spec.l_true
    if value == "true":
        return spec.l_true
    if value == "max":
        return spec.l_range[1]
    if value == "min":
        return spec.l_range[0]
    try:
        l = int(value)
    except (TypeError, ValueError):
        raise ExperimentError(f"cannot interpret channel length {value!r}") from None
    if not 1 <= l <= spec.n:
        raise ExperimentError(f"channel length {l} outside 1..{spec.n}")
    return l


def _draw_point(spec: ExperimentSpec, point: int, lams: tuple, noise: NoiseModel):
    """Stacked ground truth and observations for every trial of one sweep point."""
    seeds, h_true, h_obs = [], [], [[] for _ in spec.pilots]
    for t in range(spec.trials):
        s = trial_seed(spec.seed, point, t)
        rng = make_rng(s)
        ref, aux = draw_correlated_chain(spec.l_true, spec.n, list(lams), rng)
        channels = ([ref] if spec.target_observed else []) + aux
        for k, (ch, pat) in enumerate(zip(channels, spec.pilots)):
            h_obs[k].append(observe(ch, pat, noise, rng, pilots=spec.pilot_symbols).h_prime)
        seeds.append(s)
        h_true.append(ref.h)
    obs = [
        est.PilotObservation(pat, np.stack(cols, axis=1)) for pat, cols in zip(spec.pilots, h_obs)
    ]
    return seeds, np.stack(h_true, axis=1), obs


def _run_estimator(e: EstimatorSpec, spec: ExperimentSpec, obs, lams, noise):
    p = e.params
    if e.kind == "lmmse":
        return est.lmmse_known_l(obs[0], build_q(spec.n, _resolve_l(p.get("l", "true"), spec)), noise)
    q_set = build_q_set(spec.n, *spec.l_range, stride=spec.l_stride)
    if e.kind == "mmse_unknown_l":
        return est.mmse_unknown_l(obs[0], q_set, noise)
    if e.kind == "time_corr":
        q = build_q(spec.n, _resolve_l(p.get("l", "true"), spec))
        return est.time_corr_known_l(obs[1], obs[0], q, lams[0], noise)
    if e.kind == "time_corr_unknown_l":
        return est.time_corr_unknown_l(obs[1], obs[0], q_set, lams[0], noise)
    if e.kind == "k_pilot":
        q = build_q(spec.n, _resolve_l(p.get("l", "true"), spec))
        return est.k_pilot_known_l(obs, q, lams, noise)
    if e.kind == "lambda_marginalized":
        unknown_l = bool(p.get("unknown_l", False))
        if spec.target_observed:
            base = est.time_corr_unknown_l if unknown_l else est.time_corr_known_l
            observations = [obs[1], obs[0]]
        else:
            base = est.k_pilot_known_l
            observations = obs
        q = q_set if unknown_l else build_q(spec.n, _resolve_l(p.get("l", "true"), spec))
        return est.lambda_marginalized(base, observations, q, p["grid"], noise, lambda_prior=p.get("prior"))
    raise ExperimentError(f"unknown estimator kind {e.kind!r}")


def _l_true_mass(res: est.EstimationResult, l_true: int):
    if res.l_values is None or l_true not in res.l_values:
        return None
    return np.exp(res.log_weights[res.l_values.index(l_true)])


def _sweep_point(args):
    spec, point, snr, lams = args
    noise = NoiseModel.from_snr_db(snr)
    seeds, h_true, obs = _draw_point(spec, point, lams, noise)
    se, mass = {}, {}
    for e in spec.estimators:
        res = _run_estimator(e, spec, obs, lams, noise)
        se[e.name] = np.sum(np.abs(res.h_hat - h_true) ** 2, axis=0) / spec.n
        m = _l_true_mass(res, spec.l_true)
        if m is not None:
            mass[e.name] = m
    return seeds, se, mass


def _map_points(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


@dataclass
class SweepResult:
    records: list
    summary: list


def _lambda_label(lams: tuple):
    if not lams:
        return None
    return lams[0] if len(set(lams)) == 1 else "/".join(repr(v) for v in lams)


def run_mse_sweep(spec: ExperimentSpec) -> SweepResult:
    spec.validate()
    pts = spec.points()
    jobs = [(spec, i, snr, lams) for i, (snr, lams) in enumerate(pts)]
    log.info("MSE sweep %s: %d points x %d trials", spec.name, len(jobs), spec.trials)
    outs = _map_points(_sweep_point, jobs, spec.workers)

    records, summary = [], []
    for i, ((snr, lams), (seeds, se, mass)) in enumerate(zip(pts, outs)):
        lam_label = _lambda_label(lams)
        for t in range(spec.trials):
            row = {"point": i, "trial": t, "seed": seeds[t], "snr_db": snr}
            if lam_label is not None:
                row["lambda"] = lam_label
            row["l_true"] = spec.l_true
            for e in spec.estimators:
                row[f"se_{e.name}"] = float(se[e.name][t])
            for name, m in mass.items():
                row[f"post_l_true_{name}"] = float(m[t])
            records.append(row)
        for e in spec.estimators:
            row = {"snr_db": snr}
            if lam_label is not None:
                row["lambda"] = lam_label
            row.update(
                estimator=e.name,
                mean_mse_db=float(10.0 * math.log10(float(np.mean(se[e.name])))),
                trials=spec.trials,
                seed=spec.seed,
            )
            summary.append(row)
    return SweepResult(records, summary)


@dataclass
class EvidenceResult:
    records: list
    summary: list
    mean_posterior: dict  # snr_db -> {L: mean posterior mass}


def _evidence_point(args):
    spec, point, snr = args
    noise = NoiseModel.from_snr_db(snr)
    target_only = replace(spec, pilots=spec.pilots[:1], lambdas=(), target_observed=True)
    seeds, _, obs = _draw_point(target_only, point, (), noise)
    q_set = build_q_set(spec.n, *spec.l_range, stride=spec.l_stride)
    rep = infer.length_posterior(obs[0], q_set, noise)
    gap = np.atleast_1d(infer.evidence_gap(rep, spec.l_true)) if spec.l_true in rep.l_values else None
    return seeds, rep, gap


def run_evidence_experiment(spec: ExperimentSpec) -> EvidenceResult:
    """Trial-averaged odds and evidence for each hypothesised length at each SNR."""
    spec.validate(need_estimators=False)
    jobs = [(spec, i, snr) for i, snr in enumerate(spec.snr_db)]
    log.info("evidence experiment %s: %d SNR points x %d trials", spec.name, len(jobs), spec.trials)
    outs = _map_points(_evidence_point, jobs, spec.workers)
    records, summary, mean_post = [], [], {}
    for snr, (seeds, rep, gap) in zip(spec.snr_db, outs):
        post = rep.posterior
        mean_gap = float(np.mean(gap))
        mean_post[snr] = {l: float(np.mean(post[i])) for i, l in enumerate(rep.l_values)}
        for t in range(spec.trials):
            records.append({
                "snr_db": snr,
                "trial": t,
                "seed": seeds[t],
                "l_true": spec.l_true,
                "post_l_true": float(post[rep.index(spec.l_true), t]),
                "l_map": int(rep.l_values[int(np.argmax(post[:, t]))]),
                "gap": float(gap[t]),
            })
        with np.errstate(over="ignore", invalid="ignore"):
            for i, l in enumerate(rep.l_values):
                summary.append({
                    "snr_db": snr,
                    "L": l,
                    "mean_odds": float(np.mean(rep.odds[i])),
                    "mean_evidence": float(np.mean(rep.evidence[i])),
                    "gap": mean_gap,
                })
    return EvidenceResult(records, summary, mean_post)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def render(rows: Sequence[Mapping], fmt: str = "csv") -> str:
    """Serialize rows to CSV or JSON text with a fixed column order."""
    if not rows:
        raise ExperimentError("refusing to emit an empty record set")
    cols = list(rows[0].keys())
    for r in rows:
        if list(r.keys()) != cols:
            raise ExperimentError("records do not share one column layout")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in cols])
        return buf.getvalue()
    if fmt == "json":
        clean = [{c: (float(r[c]) if isinstance(r[c], np.floating) else r[c]) for c in cols} for r in rows]
        return json.dumps(clean, indent=1) + "\n"
    raise ExperimentError(f"unknown output format {fmt!r}")


def emit(rows: Sequence[Mapping], fmt: str, path: str) -> str:
    """Write rows to ``path``; nothing is written if validation fails."""
    text = render(rows, fmt)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path
