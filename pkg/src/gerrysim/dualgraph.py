"""Dual graphs, districting plans and their validity constraints."""

from __future__ import annotations

import json
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "GraphFormatError",
    "DisconnectedGraphError",
    "DualGraph",
    "Partition",
    "Violation",
    "VoteModel",
    "load_dual_graph",
    "save_dual_graph",
    "make_grid_graph",
    "population_bounds",
    "validate_partition",
    "cut_edge_count",
]

DEFAULT_POP_TOLERANCE = 0.02


class GraphFormatError(ValueError):
    """Dual-graph file could not be parsed or violates the schema."""


class DisconnectedGraphError(GraphFormatError):
    pass


Violation = namedtuple("Violation", ["constraint", "district", "detail"])


class DualGraph:
    """Immutable adjacency structure with per-node population and votes.

    Node ids are ``0..n-1``.  Adjacency is kept in CSR form (``indptr``,
    ``indices``) together with ``incident``, which lists for every CSR slot
    the id of the corresponding edge in ``edges``.
    """

    def __init__(self, pop, votes_d, votes_r, edges, assignment=None):
        pop = np.asarray(pop, dtype=np.int64)
        votes_d = np.asarray(votes_d, dtype=np.int64)
        votes_r = np.asarray(votes_r, dtype=np.int64)
        n = pop.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if votes_d.shape != (n,) or votes_r.shape != (n,):
            raise GraphFormatError("vote arrays must match the node count")
        if n == 0:
            raise GraphFormatError("graph has no nodes")
        if (pop < 0).any() or (votes_d < 0).any() or (votes_r < 0).any():
            raise GraphFormatError("populations and votes must be non-negative")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise GraphFormatError("edge references an unknown node id")
        if (edges[:, 0] == edges[:, 1]).any():
            raise GraphFormatError("self-loop edge")
        canon = np.sort(edges, axis=1)
        if np.unique(canon, axis=0).shape[0] != canon.shape[0]:
            raise GraphFormatError("duplicate edge")

        adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise DisconnectedGraphError(f"graph has {ncomp} connected components")

        # CSR adjacency with edge ids
        heads = np.concatenate([edges[:, 0], edges[:, 1]])
        tails = np.concatenate([edges[:, 1], edges[:, 0]])
        eids = np.concatenate([np.arange(len(edges)), np.arange(len(edges))])
        order = np.lexsort((tails, heads))
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(heads, minlength=n), out=self.indptr[1:])
        self.indices = tails[order].astype(np.int64)
        self.incident = eids[order].astype(np.int64)

        self.pop = pop
        self.votes_d = votes_d
        self.votes_r = votes_r
        self.edges = canon
        self.assignment = None if assignment is None else np.asarray(assignment, dtype=np.int64)
        for arr in (self.pop, self.votes_d, self.votes_r, self.edges,
                    self.indptr, self.indices, self.incident):
            arr.flags.writeable = False

    @property
    def n_nodes(self):
        return self.pop.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def total_population(self):
        return int(self.pop.sum())

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def to_dict(self, assignment=None):
        nodes = [
            {"id": i, "pop": int(p), "votes_d": int(d), "votes_r": int(r)}
            for i, (p, d, r) in enumerate(zip(self.pop, self.votes_d, self.votes_r))
        ]
        out = {"nodes": nodes, "edges": self.edges.tolist()}
        if assignment is None:
            assignment = self.assignment
        if assignment is not None:
            out["assignment"] = [int(a) for a in assignment]
        return out

    def __eq__(self, other):
        if not isinstance(other, DualGraph):
            return NotImplemented
        return (
            np.array_equal(self.pop, other.pop)
            and np.array_equal(self.votes_d, other.votes_d)
            and np.array_equal(self.votes_r, other.votes_r)
            and np.array_equal(self.edges, other.edges)
        )

    def __repr__(self):
        return f"DualGraph(n_nodes={self.n_nodes}, n_edges={self.n_edges}, total_population={self.total_population})"


def _graph_from_dict(data):
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise GraphFormatError('expected an object with "nodes" and "edges"')
    nodes = data["nodes"]
    if not isinstance(nodes, list):
        raise GraphFormatError('"nodes" must be an array')
    n = len(nodes)
    pop = np.zeros(n, dtype=np.int64)
    vd = np.zeros(n, dtype=np.int64)
    vr = np.zeros(n, dtype=np.int64)
    seen = set()
    for rec in nodes:
        try:
            i, p, d, r = rec["id"], rec["pop"], rec["votes_d"], rec["votes_r"]
        except (KeyError, TypeError):
            raise GraphFormatError(f"malformed node record {rec!r}") from None
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in (i, p, d, r)):
            raise GraphFormatError(f"node fields must be integers: {rec!r}")
        if i in seen:
            raise GraphFormatError(f"duplicate node id {i}")
        if not 0 <= i < n:
            raise GraphFormatError(f"node id {i} outside 0..{n - 1}")
        seen.add(i)
        pop[i], vd[i], vr[i] = p, d, r
    edges = data["edges"]
    if not isinstance(edges, list) or not all(
        isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e) for e in edges
    ):
        raise GraphFormatError('"edges" must be an array of [int, int] pairs')
    assignment = data.get("assignment")
    if assignment is not None:
        if not isinstance(assignment, list) or len(assignment) != n:
            raise GraphFormatError('"assignment" must be an int array with one entry per node')
    return DualGraph(pop, vd, vr, np.array(edges, dtype=np.int64).reshape(-1, 2), assignment)


def load_dual_graph(path):
    """Read a dual-graph JSON file.

    The file holds ``nodes`` (``id``, ``pop``, ``votes_d``, ``votes_r``),
    ``edges`` as ``[u, v]`` pairs and optionally a seed ``assignment``,
    which is exposed as ``graph.assignment``.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"cannot parse {path}: {exc}") from exc
    return _graph_from_dict(data)


def save_dual_graph(g, path, assignment=None):
    Path(path).write_text(json.dumps(g.to_dict(assignment)), encoding="utf-8")


@dataclass(frozen=True)
class VoteModel:
    """Synthetic two-party vote shares for grid graphs.

    ``kind="uniform"`` gives every node D share ``lo``; ``kind="gradient"``
    interpolates linearly from ``lo`` in the west column to ``hi`` in the
    east column.  ``noise`` adds seeded Gaussian jitter to each node share.
    ``turnout`` is the fraction of each node's population that votes, with
    optional Gaussian jitter ``turnout_noise``.
    """

    kind: str = "uniform"
    lo: float = 0.5
    hi: float = 0.5
    noise: float = 0.0
    turnout: float = 1.0
    turnout_noise: float = 0.0

    @classmethod
    def uniform(cls, q, noise=0.0, turnout=1.0, turnout_noise=0.0):
        return cls("uniform", q, q, noise, turnout, turnout_noise)

    @classmethod
    def gradient(cls, q_lo, q_hi, noise=0.0, turnout=1.0, turnout_noise=0.0):
        return cls("gradient", q_lo, q_hi, noise, turnout, turnout_noise)

    def shares(self, rows, cols, rng):
        if self.kind not in ("uniform", "gradient"):
            raise ValueError(f"unknown vote model {self.kind!r}")
        if not (0 <= self.lo <= 1 and 0 <= self.hi <= 1):
            raise ValueError("vote shares must lie in [0, 1]")
        if self.noise < 0 or self.turnout_noise < 0:
            raise ValueError("noise must be non-negative")
        if not 0 < self.turnout <= 1:
            raise ValueError("turnout must lie in (0, 1]")
        if self.kind == "uniform":
            col_share = np.full(cols, self.lo)
        else:
            col_share = self.lo + (self.hi - self.lo) * np.arange(cols) / (cols - 1)
        share = np.tile(col_share, rows)
        if self.noise:
            share = np.clip(share + rng.normal(0.0, self.noise, share.shape), 0.0, 1.0)
        return share

    def turnout_rates(self, n, rng):
        rate = np.full(n, self.turnout)
        if self.turnout_noise:
            rate = np.clip(rate + rng.normal(0.0, self.turnout_noise, n), 0.05, 1.0)
        return rate


def make_grid_graph(rows, cols, pop_per_node, vote_model=None, seed=0):
    """rows x cols grid with rook adjacency; node id = r * cols + c."""
    if rows < 2 or cols < 2:
        raise ValueError("grid needs at least 2 rows and 2 columns")
    if vote_model is None:
        vote_model = VoteModel.uniform(0.5)
    rng = np.random.default_rng(seed)
    share = vote_model.shares(rows, cols, rng)
    n = rows * cols
    pop = np.full(n, pop_per_node, dtype=np.int64)
    voters = np.rint(vote_model.turnout_rates(n, rng) * pop).astype(np.int64)
    vd = np.rint(share * voters).astype(np.int64)
    vr = voters - vd
    ids = np.arange(n).reshape(rows, cols)
    horiz = np.column_stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()])
    vert = np.column_stack([ids[:-1, :].ravel(), ids[1:, :].ravel()])
    return DualGraph(pop, vd, vr, np.vstack([horiz, vert]))


def population_bounds(g, d, tolerance):
    ideal = g.total_population / d
    return (1 - tolerance) * ideal, (1 + tolerance) * ideal


class Partition:
    """Assignment of graph nodes to ``d`` districts with cached tallies.

    Caches: ``district_pops``, ``district_votes`` (``d x 2``, D then R),
    ``district_sizes`` and the boolean ``cut_mask`` over ``graph.edges``.
    Instances are mutable; :meth:`copy` gives an independent state.
    """

    def __init__(self, graph, assignment, d=None, pop_tolerance=DEFAULT_POP_TOLERANCE):
        assignment = np.array(assignment, dtype=np.int64)
        if assignment.shape != (graph.n_nodes,):
            raise ValueError("assignment length must equal the node count")
        if d is None:
            d = int(assignment.max()) + 1
        if assignment.min() < 0 or assignment.max() >= d:
            raise ValueError(f"district indices must lie in 0..{d - 1}")
        self.graph = graph
        self.assignment = assignment
        self.d = int(d)
        self.pop_tolerance = float(pop_tolerance)
        self.recompute()

    def recompute(self):
        g = self.graph
        a = self.assignment
        self.district_pops = np.bincount(a, weights=g.pop, minlength=self.d).astype(np.int64)
        self.district_votes = np.column_stack([
            np.bincount(a, weights=g.votes_d, minlength=self.d),
            np.bincount(a, weights=g.votes_r, minlength=self.d),
        ]).astype(np.int64)
        self.district_sizes = np.bincount(a, minlength=self.d).astype(np.int64)
        self.cut_mask = a[g.edges[:, 0]] != a[g.edges[:, 1]]

    @property
    def cut_edges(self):
        """Set of edge ids (rows of ``graph.edges``) that join two districts."""
        return set(np.flatnonzero(self.cut_mask).tolist())

    @property
    def bounds(self):
        return population_bounds(self.graph, self.d, self.pop_tolerance)

    def copy(self):
        new = object.__new__(Partition)
        new.graph = self.graph
        new.assignment = self.assignment.copy()
        new.d = self.d
        new.pop_tolerance = self.pop_tolerance
        new.district_pops = self.district_pops.copy()
        new.district_votes = self.district_votes.copy()
        new.district_sizes = self.district_sizes.copy()
        new.cut_mask = self.cut_mask.copy()
        return new

    def nodes_of(self, district):
        return np.flatnonzero(self.assignment == district)

    def refresh_cut_edges(self, nodes):
        """Update the cut mask for all edges incident to ``nodes``."""
        g = self.graph
        for v in nodes:
            eids = g.incident[g.indptr[v]:g.indptr[v + 1]]
            e = g.edges[eids]
            self.cut_mask[eids] = self.assignment[e[:, 0]] != self.assignment[e[:, 1]]

    def __eq__(self, other):
        return isinstance(other, Partition) and other.graph is self.graph and np.array_equal(
            self.assignment, other.assignment)

    def __repr__(self):
        return f"Partition(d={self.d}, pops={self.district_pops.tolist()})"


def _is_connected(g, nodes):
    if len(nodes) == 0:
        return False
    inside = np.zeros(g.n_nodes, dtype=bool)
    inside[nodes] = True
    seen = np.zeros(g.n_nodes, dtype=bool)
    stack = [int(nodes[0])]
    seen[nodes[0]] = True
    count = 1
    while stack:
        v = stack.pop()
        for w in g.neighbors(v):
            if inside[w] and not seen[w]:
                seen[w] = True
                count += 1
                stack.append(int(w))
    return count == len(nodes)


def validate_partition(g, p):
    """List every violated plan constraint; an empty list means valid."""
    out = []
    a = p.assignment
    if a.shape != (g.n_nodes,):
        return [Violation("assignment", None, "assignment length differs from node count")]
    if a.min() < 0 or a.max() >= p.d:
        return [Violation("assignment", None, f"district index outside 0..{p.d - 1}")]
    lo, hi = population_bounds(g, p.d, p.pop_tolerance)
    pops = np.bincount(a, weights=g.pop, minlength=p.d)
    for i in range(p.d):
        nodes = np.flatnonzero(a == i)
        if len(nodes) == 0:
            out.append(Violation("empty", i, "district has no nodes"))
            continue
        if not _is_connected(g, nodes):
            out.append(Violation("contiguity", i, "district is not connected"))
        if not lo <= pops[i] <= hi:
            out.append(Violation("population", i, f"population {int(pops[i])} outside [{lo:.6g}, {hi:.6g}]"))
    fresh = Partition.__new__(Partition)
    fresh.graph, fresh.assignment, fresh.d = g, a, p.d
    Partition.recompute(fresh)
    for name in ("district_pops", "district_votes", "district_sizes", "cut_mask"):
        if not np.array_equal(getattr(p, name), getattr(fresh, name)):
            out.append(Violation("cache", None, f"{name} differs from recomputation"))
    return out


def cut_edge_count(p):
    return int(np.count_nonzero(p.cut_mask))
