"""The m-trajectory (epsilon, alpha)-outlier test with its tail-bound p-value."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .chains import _walk_inplace
from .dualgraph import validate_partition
from .metrics import DEFAULT_SAFE_THRESHOLD, MetricKind, label, party_code

__all__ = [
    "OutlierTestConfig",
    "TrajectoryResult",
    "is_upper_epsilon_outlier",
    "cfmp_p_value",
    "rejection_threshold",
    "trajectory_labels",
    "outlier_test",
]


@dataclass
class OutlierTestConfig:
    """Parameters of the test; ``1/k < epsilon < alpha/2`` is enforced.

    ``tail="lower"`` negates the labels so that low scores are flagged.
    """

    metric: MetricKind = MetricKind.EFFICIENCY_GAP
    party: str = "D"
    alpha: float = 0.05
    epsilon: float = 0.001
    m: int = 32
    k: int = 200_000
    threshold: float = DEFAULT_SAFE_THRESHOLD
    tail: str = "upper"

    def __post_init__(self):
        self.metric = MetricKind.parse(self.metric)
        party_code(self.party)
        if self.m < 1 or self.k < 1:
            raise ValueError("m and k must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 1.0 / self.k < self.epsilon:
            raise ValueError(f"epsilon={self.epsilon} must exceed 1/k={1.0 / self.k:g}")
        if not 2 * self.epsilon < self.alpha:
            raise ValueError(f"2*epsilon={2 * self.epsilon:g} must be below alpha={self.alpha}")
        if self.tail not in ("upper", "lower"):
            raise ValueError("tail must be 'upper' or 'lower'")

    def to_dict(self):
        out = asdict(self)
        out["metric"] = self.metric.value
        return out


@dataclass
class TrajectoryResult:
    flags: np.ndarray
    counts: np.ndarray
    rho: int
    r: float
    p_value: float
    start_label: float
    config: OutlierTestConfig = field(repr=False)

    @property
    def rejected(self):
        return self.p_value <= self.config.alpha

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "start_label": self.start_label,
            "flags": [bool(f) for f in self.flags],
            "counts": [int(c) for c in self.counts],
            "rho": self.rho,
            "r": self.r,
            "p_value": self.p_value,
            "decision": "reject" if self.rejected else "retain",
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def is_upper_epsilon_outlier(start_label, trajectory_labels, epsilon):
    """True when more than (1 - epsilon) k of the trajectory labels are
    strictly below ``start_label``.  Ties do not count as below."""
    labels = np.asarray(trajectory_labels, dtype=float)
    k = labels.size
    if k < 1:
        raise ValueError("empty trajectory")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    c = int(np.count_nonzero(labels < start_label))
    return c > (1 - epsilon) * k


def cfmp_p_value(rho, m, epsilon, alpha):
    """Upper bound on P(rho or more flagged trajectories) for a non-outlier.

    With r = rho - m sqrt(2 eps / alpha), the bound is
    exp(-min(r^2 sqrt(alpha / (2 eps)) / (3m), r / 3)); it is vacuous and
    reported as 1 when r <= 0.
    """
    r = rho - m * math.sqrt(2 * epsilon / alpha)
    if r <= 0:
        return 1.0
    return math.exp(-min(r * r * math.sqrt(alpha / (2 * epsilon)) / (3 * m), r / 3))


def rejection_threshold(m, epsilon, alpha):
    """Smallest rho that gives p <= alpha, or ``None`` if no rho <= m does."""
    for rho in range(m + 1):
        if cfmp_p_value(rho, m, epsilon, alpha) <= alpha:
            return rho
    return None


def trajectory_labels(p, k, rng, metric, party="D", threshold=DEFAULT_SAFE_THRESHOLD):
    """Labels of ``k`` flip steps started from ``p`` (the start excluded)."""
    _, labels = _walk_inplace(p.copy(), rng.random((k, 2)), labels=(metric, party, threshold))
    return labels


def outlier_test(g, x, cfg, rng, threads=1):
    """Run ``cfg.m`` independent flip trajectories of length ``cfg.k`` from ``x``.

    Each trajectory gets its own generator spawned from ``rng``, so results
    do not depend on ``threads``.
    """
    bad = validate_partition(g, x)
    if bad:
        raise ValueError(f"plan is invalid: {bad}")
    sign = 1.0 if cfg.tail == "upper" else -1.0
    start = sign * label(g, x, cfg.metric, cfg.party, cfg.threshold)
    children = rng.spawn(cfg.m)

    def one(child):
        labs = sign * trajectory_labels(x, cfg.k, child, cfg.metric, cfg.party, cfg.threshold)
        return int(np.count_nonzero(labs < start))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            counts = np.array(list(pool.map(one, children)), dtype=np.int64)
    else:
        counts = np.array([one(c) for c in children], dtype=np.int64)
    flags = counts > (1 - cfg.epsilon) * cfg.k
    rho = int(flags.sum())
    r = rho - cfg.m * math.sqrt(2 * cfg.epsilon / cfg.alpha)
    return TrajectoryResult(flags, counts, rho, r, cfmp_p_value(rho, cfg.m, cfg.epsilon, cfg.alpha),
                            start, cfg)
