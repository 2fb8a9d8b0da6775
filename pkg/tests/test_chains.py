import numpy as np
import pytest
from scipy import stats

from gerrysim import (ChainConfig, DualGraph, EnsembleLog, InfeasiblePlanError, MetricKind,
                      Partition, VoteModel, flip_step, flip_walk, label, make_grid_graph,
                      random_spanning_tree, recom_step, run_neutral_chain, seed_plan,
                      validate_partition)
from gerrysim.chains import bipartition_tree, flip_candidate_count, rle_decode, rle_encode

from conftest import grid_halves, path_graph
from flip_oracle import FlipOracle


@pytest.fixture(scope="module")
def oracle():
    return FlipOracle(4, 4, 2, 0.5)


def test_candidate_counts_match_enumeration(oracle):
    for i in range(len(oracle)):
        assert flip_candidate_count(oracle.partition(i)) == oracle.counts[i]


def test_uniform_is_stationary(oracle):
    P = oracle.transition_matrix()
    assert np.allclose(P.sum(axis=1), 1.0)
    # symmetric kernel <=> detailed balance with respect to the uniform law
    assert np.abs(P - P.T).max() < 1e-15


def test_one_step_transitions_match_oracle(oracle):
    P = oracle.transition_matrix()
    rng = np.random.default_rng(7)
    picks = rng.choice(len(oracle), 6, replace=False)
    for i in picks:
        p = oracle.partition(i)
        draws = 20_000
        hits = np.zeros(len(oracle))
        for _ in range(draws):
            hits[oracle.key(flip_step(p.graph, p, rng).assignment)] += 1
        support = P[i] > 0
        assert hits[~support].sum() == 0
        _, pval = stats.chisquare(hits[support], P[i, support] * draws)
        assert pval > 1e-4


def test_flip_never_invalid_small_grid(rng):
    g, p = grid_halves(2, 2, tol=1.0)
    for _ in range(200):
        p = flip_step(g, p, rng)
        assert validate_partition(g, p) == []


def test_flip_without_candidates_is_identity(rng):
    g = path_graph()
    p = Partition(g, [0, 0, 1, 1], pop_tolerance=0.0)
    assert flip_candidate_count(p) == 0
    q = flip_step(g, p, rng)
    assert q == p and q is not p
    assert validate_partition(g, q) == []


def test_flip_walk_labels_and_snapshots(grid6):
    start = seed_plan(grid6, 4, 0.1, np.random.default_rng(0))
    q, snaps, labs = flip_walk(start, 500, np.random.default_rng(1), thin=1,
                               labels=("mean_median", "D", 0.55))
    assert validate_partition(grid6, q) == []
    assert np.array_equal(snaps[-1], q.assignment)
    for t in (0, 10, 250, 499):
        x = Partition(grid6, snaps[t], 4, 0.1)
        assert validate_partition(grid6, x) == []
        assert labs[t] == label(grid6, x, "mean_median", "D")
    # the start plan is untouched
    assert validate_partition(grid6, start) == []


def test_flip_walk_deterministic(grid6):
    start = seed_plan(grid6, 4, 0.1, np.random.default_rng(0))
    a = flip_walk(start, 1000, np.random.default_rng(5))
    b = flip_walk(start, 1000, np.random.default_rng(5))
    assert a == b


def test_spanning_tree(rng):
    g = make_grid_graph(5, 5, 1)
    nodes = np.arange(25)
    tree = random_spanning_tree(g, nodes, rng)
    assert tree.shape == (24, 2)
    sub = DualGraph(np.ones(25), np.ones(25), np.zeros(25), tree)  # raises if not spanning
    assert sub.n_edges == 24
    assert random_spanning_tree(g, np.array([0, 2]), rng) is None


def test_bipartition_impossible_bounds(rng):
    g = make_grid_graph(3, 3, 1)
    assert bipartition_tree(g, np.arange(9), rng, (100, 200), (0, 9), max_retries=5) is None


def test_recom_valid_and_multi_node(rng):
    g, p = grid_halves(4, 4, tol=0.5)
    changed = []
    for _ in range(100):
        q = recom_step(g, p, rng)
        assert validate_partition(g, q) == []
        changed.append(np.count_nonzero(q.assignment != p.assignment))
        p = q
    assert max(changed) > 1


def test_recom_without_alternative_cut(rng):
    g = path_graph([1, 2, 2, 1])
    p = Partition(g, [0, 0, 1, 1], pop_tolerance=0.01)
    for _ in range(20):
        q = recom_step(g, p, rng, max_tree_retries=3)
        # same districts, possibly with the two labels swapped
        assert {frozenset(q.nodes_of(i).tolist()) for i in range(2)} == {frozenset({0, 1}),
                                                                          frozenset({2, 3})}
        assert validate_partition(g, q) == []


def test_seed_plan(grid6):
    for d, tol in [(2, 0.02), (4, 0.02), (9, 0.0)]:
        p = seed_plan(grid6, d, tol, np.random.default_rng(d))
        assert validate_partition(grid6, p) == []
        assert p.d == d


def test_seed_plan_infeasible():
    g = make_grid_graph(3, 3, 10)
    with pytest.raises(InfeasiblePlanError):
        seed_plan(g, 2, 0.0, np.random.default_rng(0), max_attempts=5, max_tree_retries=5)


def test_chain_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(kernel="walk")
    with pytest.raises(ValueError):
        ChainConfig(pop_tolerance=0)
    with pytest.raises(ValueError):
        ChainConfig(recom_max_tree_retries=0)


def test_neutral_chain_zero_steps(grid6):
    start = seed_plan(grid6, 4, 0.1, np.random.default_rng(0))
    log = run_neutral_chain(grid6, start, ChainConfig("recom", 0.1, 1, step_budget=0))
    assert len(log) == 1
    assert np.array_equal(log.snapshots()[0][1], start.assignment)


@pytest.mark.parametrize("kernel", ["recom", "flip"])
def test_neutral_chain_deterministic(grid6, tmp_path, kernel):
    start = seed_plan(grid6, 4, 0.1, np.random.default_rng(0))
    cfg = ChainConfig(kernel, 0.1, 42, step_budget=150, snapshot_stride=3)
    obs = [("efficiency_gap", "D"), ("partisan_gini", "R")]
    a = run_neutral_chain(grid6, start, cfg, obs)
    b = run_neutral_chain(grid6, start, cfg, obs)
    a.write_jsonl(tmp_path / "a.jsonl")
    b.write_jsonl(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert len(a) == 151 and len(a.snapshots()) == 51
    for step, assignment in a.snapshots():
        x = a.partition(grid6, assignment)
        assert validate_partition(grid6, x) == []
        assert a.records[step]["metrics"]["efficiency_gap_D"] == label(grid6, x, "efficiency_gap", "D")


def test_rle_round_trip(rng):
    for a in [np.array([], dtype=int), np.zeros(5, dtype=int), rng.integers(0, 3, 200)]:
        assert np.array_equal(rle_decode(rle_encode(a)), a)
    assert rle_encode([1, 1, 0, 2, 2, 2]) == [1, 2, 0, 1, 2, 3]


def test_ensemble_log_round_trip(grid6, tmp_path):
    start = seed_plan(grid6, 4, 0.1, np.random.default_rng(0))
    cfg = ChainConfig("recom", 0.1, 3, step_budget=20, snapshot_stride=2)
    log = run_neutral_chain(grid6, start, cfg, [(k, "D") for k in MetricKind])
    log.write_jsonl(tmp_path / "x.jsonl")
    back = EnsembleLog.read_jsonl(tmp_path / "x.jsonl")
    assert back.header == log.header
    assert [r["step"] for r in back.records] == list(range(21))
    for (s1, a1), (s2, a2) in zip(log.snapshots(), back.snapshots()):
        assert s1 == s2 and np.array_equal(a1, a2)
    for name in log.metric_names:
        assert np.array_equal(back.metric(name), log.metric(name))
    log.write_csv(tmp_path / "x.csv")
    rows = (tmp_path / "x.csv").read_text().splitlines()
    assert rows[0].split(",") == ["step"] + log.metric_names
    assert len(rows) == 22
    assert float(rows[5].split(",")[1]) == log.metric(log.metric_names[0])[4]


def test_mixed_kernels_keep_caches(rng):
    g = make_grid_graph(5, 6, 7, VoteModel.uniform(0.45, noise=0.1), seed=2)
    p = seed_plan(g, 3, 0.2, rng)
    for i in range(300):
        p = flip_step(g, p, rng) if i % 3 else recom_step(g, p, rng)
        assert validate_partition(g, p) == []
