import itertools

import numpy as np
import pytest

from dicd.graphs import (
    cycle_edges, gen_er_dag, gen_sf_dag, is_acyclic, metrics, threshold, topological_order,
)


@pytest.mark.parametrize("d,s0", [(5, 0), (10, 40), (10, 45), (20, 80)])
def test_er_exact_edge_count_and_acyclic(d, s0, rng):
    adj = gen_er_dag(d, s0, rng)
    assert adj.sum() == s0
    assert np.all(np.diag(adj) == 0)
    assert is_acyclic(adj)


def test_er_rejects_too_many_edges(rng):
    with pytest.raises(ValueError):
        gen_er_dag(4, 7, rng)


@pytest.mark.parametrize("d,k", [(10, 1), (10, 4), (30, 2)])
def test_sf_edge_count(d, k, rng):
    adj = gen_sf_dag(d, k, rng)
    assert is_acyclic(adj)
    assert adj.sum() == sum(min(k, t) for t in range(1, d))


def test_sf_hubs_have_high_degree():
    degs = []
    for s in range(20):
        adj = gen_sf_dag(50, 1, np.random.default_rng(s))
        degs.append((adj.sum(0) + adj.sum(1)).max())
    # a uniform random tree on 50 nodes rarely has a node of degree > 6
    assert np.median(degs) >= 7


def test_topological_order_respects_edges(rng):
    adj = gen_er_dag(12, 30, rng)
    pos = {v: i for i, v in enumerate(topological_order(adj))}
    for i, j in zip(*np.nonzero(adj)):
        assert pos[i] < pos[j]


def test_topological_order_rejects_cycle():
    with pytest.raises(ValueError):
        topological_order(np.array([[0, 1], [1, 0]]))


def _has_cycle_bruteforce(adj):
    d = adj.shape[0]
    reach = adj.astype(bool).copy()
    for _ in range(d):
        reach = reach | ((reach.astype(int) @ adj) > 0)
    return bool(np.diag(reach).any())


def test_is_acyclic_matches_reachability_d3():
    pairs = [(i, j) for i in range(3) for j in range(3) if i != j]
    for bits in itertools.product([0, 1], repeat=len(pairs)):
        adj = np.zeros((3, 3), dtype=int)
        for b, (i, j) in zip(bits, pairs):
            adj[i, j] = b
        assert is_acyclic(adj) == (not _has_cycle_bruteforce(adj))


def test_cycle_edges():
    adj = np.zeros((4, 4), dtype=int)
    adj[0, 1] = adj[1, 2] = adj[2, 0] = adj[2, 3] = 1
    mask = cycle_edges(adj)
    assert mask[0, 1] and mask[1, 2] and mask[2, 0]
    assert not mask[2, 3]


def test_threshold_plain_and_repair():
    w = np.array([[0, 0.5, 0], [0, 0, 0.9], [0.4, 0, 0]])
    assert threshold(w, 0.3).sum() == 3
    fixed = threshold(w, 0.3, repair=True)
    assert is_acyclic(fixed)
    assert fixed[2, 0] == 0 and fixed[0, 1] == 1 and fixed[1, 2] == 1


def test_threshold_strict_inequality():
    assert threshold(np.array([[0, 0.3], [0, 0]]), 0.3).sum() == 0


def test_metrics_identity(rng):
    truth = gen_er_dag(10, 20, rng)
    rep = metrics(truth, truth)
    assert (rep.fdr, rep.tpr, rep.shd, rep.nnz) == (0.0, 1.0, 0, 20)


def test_metrics_hand_case():
    truth = np.zeros((4, 4), dtype=int)
    truth[0, 1] = truth[1, 2] = truth[2, 3] = 1
    pred = np.zeros((4, 4), dtype=int)
    pred[0, 1] = 1  # correct
    pred[2, 1] = 1  # reversed
    pred[0, 3] = 1  # extra
    # 2->3 missing
    rep = metrics(pred, truth)
    assert rep.tpr == pytest.approx(1 / 3)
    assert rep.fdr == pytest.approx(2 / 3)
    assert rep.shd == 3
    assert rep.nnz == 3


def test_metrics_empty_prediction():
    truth = np.triu(np.ones((3, 3), dtype=int), 1)
    rep = metrics(np.zeros((3, 3)), truth)
    assert rep.fdr == 0.0 and rep.tpr == 0.0 and rep.shd == 3


def test_metrics_dimension_mismatch():
    with pytest.raises(ValueError):
        metrics(np.zeros((3, 3)), np.zeros((4, 4)))
