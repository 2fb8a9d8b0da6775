"""Markov chains on districting plans: flip, recombination and a neutral runner."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .dualgraph import DEFAULT_POP_TOLERANCE, Partition, population_bounds, validate_partition
from .metrics import MetricKind, label, party_code

__all__ = [
    "ChainConfig",
    "EnsembleLog",
    "InfeasiblePlanError",
    "flip_step",
    "flip_walk",
    "flip_candidate_count",
    "recom_step",
    "random_spanning_tree",
    "bipartition_tree",
    "seed_plan",
    "run_neutral_chain",
    "rle_encode",
    "rle_decode",
    "observer_name",
]

log = logging.getLogger(__name__)


class InfeasiblePlanError(RuntimeError):
    """No valid plan could be built within the attempt budget."""


@dataclass
class ChainConfig:
    kernel: str = "recom"
    pop_tolerance: float = DEFAULT_POP_TOLERANCE
    rng_seed: int = 0
    recom_max_tree_retries: int = 100
    step_budget: int = 1000
    snapshot_stride: int = 1

    def __post_init__(self):
        if self.kernel not in ("flip", "recom"):
            raise ValueError(f"kernel must be 'flip' or 'recom', got {self.kernel!r}")
        if self.pop_tolerance <= 0:
            raise ValueError("pop_tolerance must be positive")
        if self.recom_max_tree_retries < 1:
            raise ValueError("recom_max_tree_retries must be >= 1")
        if self.step_budget < 0 or self.snapshot_stride < 1:
            raise ValueError("step_budget must be >= 0 and snapshot_stride >= 1")


# ---------------------------------------------------------------------------
# flip


def _flip_args(p):
    g = p.graph
    lo, hi = p.bounds
    return (g.indptr, g.indices, g.pop, g.votes_d, g.votes_r, p.assignment,
            p.district_pops, p.district_votes[:, 0].copy(), p.district_votes[:, 1].copy(),
            p.district_sizes, lo, hi)


def flip_walk(p, steps, rng, thin=0, labels=None):
    """Run ``steps`` flip steps from ``p`` and return the final plan.

    ``thin > 0`` additionally returns an array of assignment snapshots taken
    every ``thin`` steps.  ``labels`` may be ``(MetricKind, party, threshold)``
    to also return the label of every visited state.
    """
    q = p.copy()
    uniforms = rng.random((steps, 2))
    return _walk_inplace(q, uniforms, thin, labels)


def _walk_inplace(q, uniforms, thin=0, labels=None):
    steps = uniforms.shape[0]
    n = q.graph.n_nodes
    before = q.assignment.copy()
    args = _flip_args(q)
    if labels is None:
        kind, party, thr = -1, 0, 0.5
        out = np.empty(0)
    else:
        metric, party_tag, thr = labels
        kind, party = MetricKind.parse(metric).code, party_code(party_tag)
        out = np.empty(steps)
    snaps = np.empty((steps // thin if thin else 0, n), dtype=np.int8 if q.d < 128 else np.int64)
    K.flip_walk(*args, uniforms, kind, party, float(thr), out, snaps, thin)
    q.district_votes[:, 0] = args[7]
    q.district_votes[:, 1] = args[8]
    q.refresh_cut_edges(np.flatnonzero(before != q.assignment))
    result = [q]
    if thin:
        result.append(snaps)
    if labels is not None:
        result.append(out)
    return result[0] if len(result) == 1 else tuple(result)


def flip_step(g, p, rng):
    """One Metropolized flip step; returns a new Partition (``p`` is untouched).

    Proposals are uniform over valid (node, neighboring district) pairs and
    are accepted with probability min(1, N(X)/N(X')), which makes the
    uniform distribution on valid plans stationary.  Rejected or impossible
    moves return a copy of ``p``.
    """
    if p.graph is not g:
        raise ValueError("partition belongs to a different graph")
    return flip_walk(p, 1, rng)


def flip_candidate_count(p):
    """Number of valid single-node flips available from plan ``p``."""
    g = p.graph
    n = g.n_nodes
    is_art = np.zeros(n, dtype=np.bool_)
    work = [np.empty(n, dtype=np.int64) for _ in range(5)]
    K.articulation_points(g.indptr, g.indices, p.assignment, is_art, *work)
    lo, hi = p.bounds
    buf = np.empty(g.indices.shape[0], dtype=np.int64)
    return int(K.flip_candidates(g.indptr, g.indices, p.assignment, g.pop, p.district_pops,
                                 p.district_sizes, lo, hi, is_art, buf, buf.copy()))


# ---------------------------------------------------------------------------
# spanning trees and recombination


def random_spanning_tree(g, nodes, rng):
    """Minimum spanning tree of the subgraph induced by ``nodes`` under i.i.d.
    uniform edge weights.  Returns tree edges as an ``(m-1, 2)`` array of
    node ids, or ``None`` if the induced subgraph is disconnected."""
    nodes = np.asarray(nodes)
    loc = np.full(g.n_nodes, -1, dtype=np.int64)
    loc[nodes] = np.arange(len(nodes))
    e = g.edges
    sub = e[(loc[e[:, 0]] >= 0) & (loc[e[:, 1]] >= 0)]
    order = np.argsort(rng.random(len(sub)), kind="stable")
    parent = list(range(len(nodes)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    need = len(nodes) - 1
    for i in order:
        u, v = sub[i]
        ru, rv = find(loc[u]), find(loc[v])
        if ru != rv:
            parent[ru] = rv
            tree.append((u, v))
            if len(tree) == need:
                break
    if len(tree) != need:
        return None
    return np.array(tree, dtype=np.int64).reshape(-1, 2)


def _balanced_cuts(g, nodes, tree, piece_bounds, rest_bounds):
    """Tree edges whose removal yields a piece and a remainder within bounds.

    Returns ``(children, subtree_members)`` where ``children[i]`` is the
    lower endpoint of a qualifying edge."""
    adj = {int(v): [] for v in nodes}
    for u, v in tree:
        adj[int(u)].append(int(v))
        adj[int(v)].append(int(u))
    root = int(nodes[0])
    order = [root]
    par = {root: -1}
    for v in order:
        for w in adj[v]:
            if w != par[v]:
                par[w] = v
                order.append(w)
    subpop = {v: int(g.pop[v]) for v in order}
    for v in reversed(order[1:]):
        subpop[par[v]] += subpop[v]
    total = subpop[root]
    (plo, phi), (rlo, rhi) = piece_bounds, rest_bounds
    good = []
    for v in order[1:]:
        s = subpop[v]
        if plo <= s <= phi and rlo <= total - s <= rhi:
            good.append(v)
        # the complementary side can also serve as the piece
        elif plo <= total - s <= phi and rlo <= s <= rhi:
            good.append(-v - 1)
    return good, adj, par


def _subtree(adj, par, v):
    out = [v]
    for x in out:
        out.extend(w for w in adj[x] if w != par[x])
    return out


def bipartition_tree(g, nodes, rng, piece_bounds, rest_bounds, max_retries=100):
    """Split ``nodes`` by cutting a random spanning tree.

    Returns the node ids of the piece (population within ``piece_bounds``)
    leaving a remainder within ``rest_bounds``; ``None`` after
    ``max_retries`` trees without a qualifying edge.
    """
    nodes = np.asarray(nodes)
    node_set = None
    for _ in range(max_retries):
        tree = random_spanning_tree(g, nodes, rng)
        if tree is None:
            return None
        good, adj, par = _balanced_cuts(g, nodes, tree, piece_bounds, rest_bounds)
        if not good:
            continue
        pick = good[rng.integers(len(good))]
        if pick >= 0:
            return np.array(_subtree(adj, par, pick), dtype=np.int64)
        below = set(_subtree(adj, par, -pick - 1))
        if node_set is None:
            node_set = [int(v) for v in nodes]
        return np.array([v for v in node_set if v not in below], dtype=np.int64)
    return None


def recom_step(g, p, rng, max_tree_retries=100):
    """One recombination step; returns a new Partition.

    A uniformly random cut edge selects two adjacent districts, which are
    merged and re-split along a random spanning tree so that both halves
    satisfy the population bounds.  Self-loops when no split is found.
    """
    if p.graph is not g:
        raise ValueError("partition belongs to a different graph")
    new = p.copy()
    cut = np.flatnonzero(p.cut_mask)
    if p.d < 2 or len(cut) == 0:
        return new
    u, v = g.edges[cut[rng.integers(len(cut))]]
    a, b = int(p.assignment[u]), int(p.assignment[v])
    nodes = np.flatnonzero((p.assignment == a) | (p.assignment == b))
    bounds = p.bounds
    piece = bipartition_tree(g, nodes, rng, bounds, bounds, max_tree_retries)
    if piece is None:
        return new
    new.assignment[nodes] = b
    new.assignment[piece] = a
    for dist in (a, b):
        mask = new.assignment == dist
        new.district_pops[dist] = g.pop[mask].sum()
        new.district_votes[dist] = g.votes_d[mask].sum(), g.votes_r[mask].sum()
        new.district_sizes[dist] = np.count_nonzero(mask)
    new.refresh_cut_edges(nodes)
    return new


def seed_plan(g, d, pop_tolerance=DEFAULT_POP_TOLERANCE, rng=None, max_attempts=1000,
              max_tree_retries=50):
    """Build a valid ``d``-district plan by recursive spanning-tree splitting."""
    rng = np.random.default_rng() if rng is None else rng
    lo, hi = population_bounds(g, d, pop_tolerance)
    for _ in range(max_attempts):
        assign = np.full(g.n_nodes, d - 1, dtype=np.int64)
        remaining = np.arange(g.n_nodes)
        ok = True
        for dist in range(d - 1):
            left = d - dist - 1
            piece = bipartition_tree(g, remaining, rng, (lo, hi), (left * lo, left * hi),
                                     max_tree_retries)
            if piece is None:
                ok = False
                break
            assign[piece] = dist
            remaining = np.setdiff1d(remaining, piece)
        if ok:
            p = Partition(g, assign, d, pop_tolerance)
            if not validate_partition(g, p):
                return p
    raise InfeasiblePlanError(
        f"no valid {d}-district plan with tolerance {pop_tolerance} after {max_attempts} attempts")


# ---------------------------------------------------------------------------
# ensemble logs


def rle_encode(a):
    """Flat run-length encoding ``[value, count, value, count, ...]``."""
    a = np.asarray(a)
    if a.size == 0:
        return []
    starts = np.flatnonzero(np.r_[True, a[1:] != a[:-1]])
    counts = np.diff(np.r_[starts, a.size])
    return np.column_stack([a[starts], counts]).ravel().tolist()


def rle_decode(runs):
    runs = np.asarray(runs, dtype=np.int64).reshape(-1, 2)
    return np.repeat(runs[:, 0], runs[:, 1])


def observer_name(kind, party):
    return f"{MetricKind.parse(kind).value}_{party}"


@dataclass
class EnsembleLog:
    """Sequence of chain states with per-step metric values.

    ``records`` holds dicts with ``step``, ``assignment`` (array or ``None``
    when the step was not snapshotted) and ``metrics``.
    """

    header: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    def append(self, step, assignment, metrics):
        self.records.append({"step": int(step),
                             "assignment": None if assignment is None else np.array(assignment),
                             "metrics": dict(metrics)})

    def __len__(self):
        return len(self.records)

    def snapshots(self):
        """``(step, assignment)`` for every record that carries a plan."""
        return [(r["step"], r["assignment"]) for r in self.records if r["assignment"] is not None]

    def metric(self, name):
        return np.array([r["metrics"].get(name, np.nan) for r in self.records], dtype=float)

    @property
    def metric_names(self):
        names = []
        for r in self.records:
            for k in r["metrics"]:
                if k not in names:
                    names.append(k)
        return names

    def partition(self, graph, assignment):
        return Partition(graph, assignment, self.header.get("d"),
                         self.header.get("pop_tolerance", DEFAULT_POP_TOLERANCE))

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"header": self.header}, sort_keys=True) + "\n")
            for r in self.records:
                line = {"step": r["step"], "metrics": r["metrics"]}
                if r["assignment"] is not None:
                    line["assignment"] = rle_encode(r["assignment"])
                fh.write(json.dumps(line, sort_keys=True) + "\n")

    def write_csv(self, path):
        names = self.metric_names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["step"] + names)
            for r in self.records:
                w.writerow([r["step"]] + [repr(r["metrics"].get(k, "")) if k in r["metrics"] else ""
                                          for k in names])

    @classmethod
    def read_jsonl(cls, path):
        out = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                if "header" in rec:
                    out.header = rec["header"]
                    continue
                if "step" not in rec:
                    raise ValueError(f"{path}:{lineno}: record without 'step'")
                a = rec.get("assignment")
                out.append(rec["step"], None if a is None else rle_decode(a), rec.get("metrics", {}))
        return out


def observe(g, p, observers, threshold=0.55):
    return {observer_name(k, party): label(g, p, k, party, threshold) for k, party in observers}


def run_neutral_chain(g, start, cfg, observers=(), threshold=0.55):
    """Apply ``cfg.kernel`` ``cfg.step_budget`` times, logging every state.

    Step 0 is the start plan.  Assignments are stored every
    ``cfg.snapshot_stride`` steps; observed metrics on every step.
    """
    observers = [(MetricKind.parse(k), party) for k, party in observers]
    p = start.copy()
    p.pop_tolerance = cfg.pop_tolerance
    bad = validate_partition(g, p)
    if bad:
        raise ValueError(f"start plan is invalid: {bad}")
    rng = np.random.default_rng(cfg.rng_seed)
    header = {"kind": "neutral", "config": asdict(cfg), "d": p.d,
              "pop_tolerance": cfg.pop_tolerance,
              "observers": [observer_name(k, party) for k, party in observers]}
    out = EnsembleLog(header)
    out.append(0, p.assignment, observe(g, p, observers, threshold))
    for step in range(1, cfg.step_budget + 1):
        if cfg.kernel == "recom":
            p = recom_step(g, p, rng, cfg.recom_max_tree_retries)
        else:
            p = flip_step(g, p, rng)
        snap = p.assignment if step % cfg.snapshot_stride == 0 else None
        out.append(step, snap, observe(g, p, observers, threshold))
    return out
