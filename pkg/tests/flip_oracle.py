"""Brute-force state space and transition matrix of the flip chain on small grids."""

import itertools

import numpy as np

from gerrysim import Partition, make_grid_graph


def _connected(adj, nodes):
    nodes = set(nodes)
    if not nodes:
        return False
    start = next(iter(nodes))
    seen, stack = {start}, [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w in nodes and w not in seen:
                seen.add(w)
                stack.append(w)
    return seen == nodes


def _valid(adj, pop, assign, d, lo, hi):
    for i in range(d):
        nodes = [v for v, a in enumerate(assign) if a == i]
        if not nodes or not _connected(adj, nodes):
            return False
        if not lo <= sum(pop[v] for v in nodes) <= hi:
            return False
    return True


class FlipOracle:
    """All valid labeled plans of a grid with d districts and their flip moves."""

    def __init__(self, rows=4, cols=4, d=2, tol=0.5):
        self.graph = make_grid_graph(rows, cols, 1)
        g = self.graph
        self.d, self.tol = d, tol
        adj = [set(g.neighbors(v).tolist()) for v in range(g.n_nodes)]
        pop = g.pop.tolist()
        ideal = g.total_population / d
        lo, hi = (1 - tol) * ideal, (1 + tol) * ideal
        self.states = [a for a in itertools.product(range(d), repeat=g.n_nodes)
                       if _valid(adj, pop, a, d, lo, hi)]
        self.index = {a: i for i, a in enumerate(self.states)}
        self.moves = []
        for a in self.states:
            out = []
            for v in range(g.n_nodes):
                for t in sorted({a[w] for w in adj[v]} - {a[v]}):
                    b = a[:v] + (t,) + a[v + 1:]
                    if b in self.index:
                        out.append(self.index[b])
            self.moves.append(out)
        self.counts = np.array([len(m) for m in self.moves])

    def __len__(self):
        return len(self.states)

    def partition(self, i):
        return Partition(self.graph, np.array(self.states[i]), self.d, self.tol)

    def transition_matrix(self):
        n = len(self)
        P = np.zeros((n, n))
        for i, out in enumerate(self.moves):
            for j in out:
                P[i, j] += min(1.0, self.counts[i] / self.counts[j]) / self.counts[i]
            P[i, i] += 1.0 - P[i].sum()
        return P

    def key(self, assignment):
        return self.index[tuple(int(x) for x in assignment)]

    def keys(self, assignments):
        """State indices of a stack of assignments, one per row."""
        weights = self.d ** np.arange(self.graph.n_nodes, dtype=np.int64)
        codes = np.asarray(self.states, dtype=np.int64) @ weights
        order = np.argsort(codes)
        found = np.asarray(assignments, dtype=np.int64) @ weights
        pos = np.searchsorted(codes[order], found)
        if np.any(codes[order][np.minimum(pos, len(codes) - 1)] != found):
            raise KeyError("assignment outside the state space")
        return order[pos]

    def mean_covariance(self, F):
        """Asymptotic covariance of sqrt(T) times the chain average of the columns of F.

        Uses the fundamental matrix of the exact transition matrix, so the
        autocorrelation of consecutive states is accounted for exactly.
        """
        P = self.transition_matrix()
        n = len(self)
        pi = np.full(n, 1.0 / n)
        Z = np.linalg.inv(np.eye(n) - P + np.outer(np.ones(n), pi))
        Fc = F - pi @ F
        D = np.diag(pi)
        return Fc.T @ (D @ Z + Z.T @ D - D) @ Fc
