"""Ensembles pushed toward extreme metric values with recombination proposals."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .chains import EnsembleLog, observer_name, recom_step
from .dualgraph import DEFAULT_POP_TOLERANCE, validate_partition
from .metrics import DEFAULT_SAFE_THRESHOLD, MetricKind, label, party_code

__all__ = ["BiasRunConfig", "hill_climb", "short_burst", "run_biased", "accept_probability"]


@dataclass
class BiasRunConfig:
    """Settings for a biased run.

    ``total_steps`` is the number of recombination steps for hill climbing
    and the number of bursts for short bursts (each of ``burst_length``
    steps).  Defaults: 50000 hill-climb steps, 10000 bursts of 5.
    """

    method: str = "short_burst"
    metric: MetricKind = MetricKind.EFFICIENCY_GAP
    party: str = "D"
    beta: float = 50.0
    burst_length: int = 5
    total_steps: int | None = None
    restart: str = "best"
    rng_seed: int = 0
    pop_tolerance: float = DEFAULT_POP_TOLERANCE
    threshold: float = DEFAULT_SAFE_THRESHOLD
    recom_max_tree_retries: int = 100
    snapshot_stride: int = 1
    observers: list = field(default_factory=list)

    def __post_init__(self):
        self.method = self.method.replace("-", "_")
        if self.method == "hill":
            self.method = "hill_climb"
        if self.method not in ("hill_climb", "short_burst"):
            raise ValueError(f"unknown method {self.method!r}")
        self.metric = MetricKind.parse(self.metric)
        party_code(self.party)
        if self.total_steps is None:
            self.total_steps = 50_000 if self.method == "hill_climb" else 10_000
        if self.restart not in ("best", "burst"):
            raise ValueError("restart must be 'best' or 'burst'")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.burst_length < 1 or self.total_steps < 1:
            raise ValueError("burst_length and total_steps must be >= 1")
        self.observers = [(MetricKind.parse(k), party) for k, party in self.observers]

    def to_dict(self):
        out = asdict(self)
        out["metric"] = self.metric.value
        out["observers"] = [observer_name(k, p) for k, p in self.observers]
        return out


def accept_probability(delta, beta):
    """exp(beta * delta) capped at 1."""
    return math.exp(min(0.0, beta * delta))


def _prepare(g, start, cfg, method):
    if cfg.method != method:
        raise ValueError(f"config method is {cfg.method!r}, expected {method!r}")
    p = start.copy()
    p.pop_tolerance = cfg.pop_tolerance
    bad = validate_partition(g, p)
    if bad:
        raise ValueError(f"start plan is invalid: {bad}")
    name = observer_name(cfg.metric, cfg.party)
    header = {"kind": method, "config": cfg.to_dict(), "d": p.d,
              "pop_tolerance": cfg.pop_tolerance, "target": name}
    return p, name, EnsembleLog(header), np.random.default_rng(cfg.rng_seed)


def _metrics(g, p, cfg, name, value):
    out = {name: value}
    for kind, party in cfg.observers:
        key = observer_name(kind, party)
        if key not in out:
            out[key] = label(g, p, kind, party, cfg.threshold)
    return out


def hill_climb(g, start, cfg):
    """Metropolis-weighted recombination chain.

    Each proposal X' = Recom(X) with delta = w(X') - w(X) is rejected when a
    uniform draw p satisfies p >= exp(beta * delta); improvements are always
    kept.  Every state X_1..X_N is saved, rejections included.
    """
    p, name, out, rng = _prepare(g, start, cfg, "hill_climb")
    score = label(g, p, cfg.metric, cfg.party, cfg.threshold)
    accepted = 0
    for step in range(1, cfg.total_steps + 1):
        prop = recom_step(g, p, rng, cfg.recom_max_tree_retries)
        new = label(g, prop, cfg.metric, cfg.party, cfg.threshold)
        u = rng.random()
        if u < accept_probability(new - score, cfg.beta):
            p, score = prop, new
            accepted += 1
        snap = p.assignment if step % cfg.snapshot_stride == 0 else None
        out.append(step, snap, _metrics(g, p, cfg, name, score))
    out.header["accepted"] = accepted
    return out


def short_burst(g, start, cfg):
    """Repeated unbiased recombination bursts.

    Each of ``total_steps`` bursts runs ``burst_length`` steps from the
    current start and saves every state.  With ``restart="burst"`` the
    burst's highest-scoring state (earliest on ties) seeds the next burst
    even if it scores below the previous start.  With ``restart="best"``
    (default) the previous start is kept unless the burst beats it, so the
    start is always the best plan seen so far.  ``header["burst_best"]``
    records the score of each next start.
    """
    p, name, out, rng = _prepare(g, start, cfg, "short_burst")
    best_per_burst = []
    step = 0
    p_score = label(g, p, cfg.metric, cfg.party, cfg.threshold)
    for _ in range(cfg.total_steps):
        if cfg.restart == "best":
            best, best_score = p, p_score
        else:
            best, best_score = None, -math.inf
        x = p
        for _ in range(cfg.burst_length):
            x = recom_step(g, x, rng, cfg.recom_max_tree_retries)
            step += 1
            score = label(g, x, cfg.metric, cfg.party, cfg.threshold)
            if score > best_score:
                best, best_score = x, score
            snap = x.assignment if step % cfg.snapshot_stride == 0 else None
            out.append(step, snap, _metrics(g, x, cfg, name, score))
        p, p_score = best, best_score
        best_per_burst.append(best_score)
    out.header["burst_best"] = best_per_burst
    return out


def run_biased(g, start, cfg):
    return hill_climb(g, start, cfg) if cfg.method == "hill_climb" else short_burst(g, start, cfg)
