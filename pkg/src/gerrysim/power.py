"""Empirical Type I error / power of the outlier test and power-vs-k curve fits."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binomtest

from .chains import EnsembleLog
from .dualgraph import DualGraph, validate_partition
from .metrics import MetricKind
from .outlier import OutlierTestConfig, cfmp_p_value, outlier_test

__all__ = [
    "PowerExperiment",
    "PowerReport",
    "AsymptoticFit",
    "ConvergenceError",
    "SweepResult",
    "power_analysis",
    "wilson_interval",
    "asymptotic_power",
    "fit_power_curve",
    "sweep",
    "SWEEP_COLUMNS",
    "write_sweep_csv",
    "read_sweep_csv",
]

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ["metric", "party", "year_tag", "epsilon", "k", "m", "alpha", "n",
                 "detections", "rate", "ci_lo", "ci_hi", "mean_p", "seed"]


class ConvergenceError(RuntimeError):
    pass


@dataclass
class PowerExperiment:
    """n plans drawn from ``ensemble`` (snapshots on ``graph``), each tested with ``test``."""

    graph: DualGraph
    ensemble: EnsembleLog
    test: OutlierTestConfig
    n: int = 100
    tags: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


def wilson_interval(c, n, confidence=0.95):
    ci = binomtest(int(c), int(n)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class PowerReport:
    detections: int
    n: int
    rate: float
    ci_lo: float
    ci_hi: float
    p_values: np.ndarray
    counts: np.ndarray
    test: OutlierTestConfig
    sample_steps: list = field(default_factory=list)
    tags: dict = field(default_factory=dict)

    @property
    def stderr(self):
        return math.sqrt(max(self.rate * (1 - self.rate), 0.0) / self.n)

    @classmethod
    def from_counts(cls, counts, test, sample_steps=(), tags=None):
        """Build a report from per-plan, per-trajectory strictly-below counts."""
        counts = np.asarray(counts, dtype=np.int64).reshape(-1, test.m)
        rho = (counts > (1 - test.epsilon) * test.k).sum(axis=1)
        p = np.array([cfmp_p_value(int(r), test.m, test.epsilon, test.alpha) for r in rho])
        c = int(np.count_nonzero(p <= test.alpha))
        n = counts.shape[0]
        lo, hi = wilson_interval(c, n)
        return cls(c, n, c / n, lo, hi, p, counts, test, list(sample_steps), dict(tags or {}))

    def at_epsilon(self, epsilon):
        """Re-evaluate the same trajectories at another outlier level."""
        return PowerReport.from_counts(self.counts, replace(self.test, epsilon=epsilon),
                                       self.sample_steps, self.tags)

    def to_row(self, seed=None):
        return {
            "metric": self.test.metric.value, "party": self.test.party,
            "year_tag": self.tags.get("year_tag", ""), "epsilon": self.test.epsilon,
            "k": self.test.k, "m": self.test.m, "alpha": self.test.alpha, "n": self.n,
            "detections": self.detections, "rate": self.rate, "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi, "mean_p": float(np.mean(self.p_values)),
            "seed": "" if seed is None else seed,
        }


def power_analysis(exp, rng):
    """Fraction of ``exp.n`` ensemble plans the outlier test rejects.

    Plans are drawn uniformly without replacement from the logged
    snapshots.  Pointed at a neutral ensemble this estimates the Type I
    error rate; at a biased one, the power.
    """
    snaps = exp.ensemble.snapshots()
    if len(snaps) < exp.n:
        raise ValueError(f"ensemble has {len(snaps)} snapshots, need {exp.n}")
    idx = rng.choice(len(snaps), size=exp.n, replace=False)
    children = rng.spawn(exp.n)
    counts, steps = [], []
    for i, child in zip(idx, children):
        step, assignment = snaps[i]
        x = exp.ensemble.partition(exp.graph, assignment)
        bad = validate_partition(exp.graph, x)
        if bad:
            raise ValueError(f"snapshot at step {step} is not a valid plan: {bad}")
        res = outlier_test(exp.graph, x, exp.test, child, threads=exp.threads)
        counts.append(res.counts)
        steps.append(step)
    return PowerReport.from_counts(counts, exp.test, steps, exp.tags)


# ---------------------------------------------------------------------------
# asymptotic regression


@dataclass
class AsymptoticFit:
    """Power(k) = a - (a - b) exp(-c_rate * k / scale)."""

    a: float
    b: float
    c_rate: float
    residual: float
    scale: float = 1000.0
    degenerate: bool = False
    iterations: int = 0

    def __call__(self, k):
        return asymptotic_power(np.asarray(k, dtype=float) / self.scale, self.a, self.b, self.c_rate)

    @property
    def x_near_max(self):
        """Smallest rescaled k where the curve is within 0.01 of ``a``."""
        gap = self.a - self.b
        if self.degenerate or gap <= 0.01:
            return 0.0
        if not self.c_rate > 0:
            return math.inf
        return math.log(gap / 0.01) / self.c_rate

    @property
    def k_near_max(self):
        return self.x_near_max * self.scale

    def to_dict(self):
        c = None if math.isnan(self.c_rate) else float(self.c_rate)
        return {"a": float(self.a), "b": float(self.b), "c_rate": c, "scale": float(self.scale),
                "k_near_max": float(self.k_near_max), "x_near_max": float(self.x_near_max),
                "residual": float(self.residual), "degenerate": bool(self.degenerate)}


def asymptotic_power(x, a, b, c):
    return a - (a - b) * np.exp(-c * x)


def _linear_ab(x, y, c):
    e = np.exp(-c * x)
    A = np.column_stack([1 - e, e])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    r = A @ np.array([a, b]) - y
    return a, b, float(r @ r)


def fit_power_curve(points, scale=1000.0, max_iter=200, rtol=1e-8):
    """Least-squares fit of the asymptotic regression model to ``(k, power)`` pairs.

    A coarse grid over the rate (with a, b solved linearly for each rate)
    supplies the start for damped Gauss-Newton steps.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0] / scale, pts[:, 1]
    if np.unique(x).size < 3:
        raise ValueError("need at least 3 distinct k values")
    if ((y < 0) | (y > 1)).any():
        raise ValueError("powers must lie in [0, 1]")
    if np.ptp(y) == 0:
        return AsymptoticFit(float(y[0]), float(y[0]), math.nan, 0.0, scale, degenerate=True)

    span = x.max() - x.min()
    grid = np.geomspace(1e-4 / max(span, 1e-12), 1e3 / max(x.min(), span / 100, 1e-12), 400)
    fits = [_linear_ab(x, y, c) + (c,) for c in grid]
    a, b, ssr, c = min(fits, key=lambda f: f[2])

    theta = np.array([a, b, c])
    lam = 1e-3
    for it in range(1, max_iter + 1):
        a, b, c = theta
        e = np.exp(-c * x)
        r = asymptotic_power(x, a, b, c) - y
        ssr = r @ r
        J = np.column_stack([1 - e, e, (a - b) * x * e])
        JtJ = J.T @ J
        g = J.T @ r
        while True:
            step = np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ) + 1e-300), -g)
            cand = theta + step
            rc = asymptotic_power(x, *cand) - y
            if rc @ rc <= ssr or lam > 1e12:
                break
            lam *= 10
        if rc @ rc <= ssr:
            theta = cand
            lam = max(lam / 10, 1e-12)
        small_step = np.all(np.abs(step) <= rtol * (np.abs(theta) + rtol))
        if small_step or ssr == 0.0:
            a, b, c = theta
            res = asymptotic_power(x, a, b, c) - y
            return AsymptoticFit(float(a), float(b), float(c), float(np.sqrt(res @ res)), scale,
                                 degenerate=abs(a - b) < 1e-12, iterations=it)
    raise ConvergenceError(f"no convergence after {max_iter} iterations")


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    rows: list
    reports: list
    skipped: list


SWEEP_AXES = ("metric", "party", "year_tag", "epsilon", "k", "m", "alpha")


def sweep(grid, base, ensembles=None, master_seed=0):
    """Power (or Type I) estimates over the cartesian product of ``grid``.

    ``grid`` maps axis names (metric, party, year_tag, epsilon, k, m, alpha)
    to value lists; missing axes take their value from ``base``.
    ``ensembles`` maps ``(metric, party, year_tag)`` to an EnsembleLog and
    falls back to ``base.ensemble``.  Points violating 1/k < epsilon <
    alpha/2 are skipped and listed in ``skipped``.
    """
    unknown = set(grid) - set(SWEEP_AXES)
    if unknown:
        raise ValueError(f"unknown sweep axes {sorted(unknown)}")
    t = base.test
    defaults = {"metric": [t.metric], "party": [t.party],
                "year_tag": [base.tags.get("year_tag", "")], "epsilon": [t.epsilon],
                "k": [t.k], "m": [t.m], "alpha": [t.alpha]}
    axes = [list(grid.get(name, defaults[name])) for name in SWEEP_AXES]
    if any(len(a) == 0 for a in axes):
        raise ValueError("empty sweep grid")
    ensembles = ensembles or {}
    rows, reports, skipped = [], [], []
    for idx, values in enumerate(itertools.product(*axes)):
        point = dict(zip(SWEEP_AXES, values))
        metric = MetricKind.parse(point["metric"])
        try:
            test = replace(t, metric=metric, party=point["party"], epsilon=float(point["epsilon"]),
                           k=int(point["k"]), m=int(point["m"]), alpha=float(point["alpha"]))
        except ValueError as exc:
            log.warning("skipping sweep point %s: %s", point, exc)
            skipped.append({**point, "metric": metric.value, "reason": str(exc)})
            continue
        ens = ensembles.get((metric.value, point["party"], point["year_tag"]), base.ensemble)
        exp = replace(base, ensemble=ens, test=test, tags={**base.tags, "year_tag": point["year_tag"]})
        seed = [int(master_seed), idx]
        report = power_analysis(exp, np.random.default_rng(np.random.SeedSequence(seed)))
        reports.append(report)
        rows.append(report.to_row(seed=f"{master_seed}:{idx}"))
    return SweepResult(rows, reports, skipped)


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in SWEEP_COLUMNS})


def read_sweep_csv(path):
    ints = {"k", "m", "n", "detections"}
    floats = {"epsilon", "alpha", "rate", "ci_lo", "ci_hi", "mean_p"}
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append({k: int(v) if k in ints else float(v) if k in floats else v
                        for k, v in row.items()})
    return out


def write_fit_json(fit, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit.to_dict(), fh, indent=2)
