"""Random DAG generation, acyclicity checks, thresholding and recovery metrics.

Adjacency convention throughout the package: ``adj[i, j] != 0`` means an
edge ``X_i -> X_j`` (row ``i`` lists the children of node ``i``).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True)
class MetricsReport:
    fdr: float
    tpr: float
    shd: int
    nnz: int

    def to_dict(self) -> dict:
        return asdict(self)


def _check_square(w: np.ndarray, name: str = "matrix") -> np.ndarray:
    w = np.asarray(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"{name} must be square, got shape {w.shape}")
    return w


def gen_er_dag(d: int, s0: int, rng: np.random.Generator) -> np.ndarray:
    """Erdos-Renyi DAG with exactly ``s0`` edges.

    Edges are drawn uniformly among the ``d(d-1)/2`` forward pairs of a random
    topological order.
    """
    max_edges = d * (d - 1) // 2
    if not 0 <= s0 <= max_edges:
        raise ValueError(f"s0 must lie in [0, {max_edges}] for d={d}, got {s0}")
    rows, cols = np.tril_indices(d, k=-1)
    chosen = rng.choice(rows.size, size=s0, replace=False)
    lower = np.zeros((d, d), dtype=int)
    # lower[i, j] with i > j encodes j -> i in the hidden order
    lower[rows[chosen], cols[chosen]] = 1
    perm = rng.permutation(d)
    adj = lower.T[np.ix_(perm, perm)]
    return adj


def gen_sf_dag(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Scale-free DAG by Barabasi-Albert preferential attachment.

    Nodes arrive one at a time; each attaches ``min(k, t)`` edges to existing
    nodes chosen with probability proportional to ``degree + 1``. Edges point
    from the earlier node to the later one, then labels are shuffled.
    """
    if not 1 <= k < d:
        raise ValueError(f"k must lie in [1, {d - 1}] for d={d}, got {k}")
    order_adj = np.zeros((d, d), dtype=int)
    degree = np.zeros(d)
    for t in range(1, d):
        m = min(k, t)
        weights = degree[:t] + 1.0
        targets = rng.choice(t, size=m, replace=False, p=weights / weights.sum())
        order_adj[targets, t] = 1
        degree[targets] += 1
        degree[t] += m
    perm = rng.permutation(d)
    return order_adj[np.ix_(perm, perm)]


def is_acyclic(w: np.ndarray) -> bool:
    """Kahn's algorithm on the support of ``w``."""
    support = _check_square(w) != 0
    d = support.shape[0]
    indeg = support.sum(axis=0).astype(int)
    queue = [i for i in range(d) if indeg[i] == 0]
    seen = 0
    while queue:
        i = queue.pop()
        seen += 1
        for j in np.flatnonzero(support[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    return seen == d


def topological_order(adj: np.ndarray) -> list[int]:
    support = _check_square(adj) != 0
    d = support.shape[0]
    indeg = support.sum(axis=0).astype(int)
    queue = sorted(i for i in range(d) if indeg[i] == 0)
    order = []
    while queue:
        i = queue.pop(0)
        order.append(i)
        for j in np.flatnonzero(support[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
    if len(order) != d:
        raise ValueError("graph contains a cycle")
    return order


def cycle_edges(w: np.ndarray) -> np.ndarray:
    """Boolean mask of edges lying on at least one directed cycle.

    An edge lies on a cycle iff both endpoints share a strongly connected
    component (self-loops included).
    """
    support = _check_square(w) != 0
    _, labels = connected_components(support, directed=True, connection="strong")
    return support & (labels[:, None] == labels[None, :])


def threshold(w: np.ndarray, omega: float = 0.3, repair: bool = False) -> np.ndarray:
    """Binarize ``|w| > omega``.

    With ``repair=True`` the smallest-magnitude edge lying on a cycle is
    removed repeatedly until the result is acyclic.
    """
    if omega < 0:
        raise ValueError(f"omega must be nonnegative, got {omega}")
    w = _check_square(w).astype(float)
    adj = (np.abs(w) > omega).astype(int)
    if repair:
        mag = np.abs(w)
        while True:
            on_cycle = cycle_edges(adj)
            if not on_cycle.any():
                break
            cand = np.where(on_cycle, mag, np.inf)
            i, j = np.unravel_index(np.argmin(cand), cand.shape)
            adj[i, j] = 0
    return adj


def metrics(pred: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """FDR, TPR and SHD of a (possibly cyclic) prediction against a true DAG.

    SHD charges one unit per unordered node pair whose predicted state
    (absent, one direction, the other, both) differs from the truth, so a
    reversed edge costs one.
    """
    pred = _check_square(pred, "pred") != 0
    truth = _check_square(truth, "truth") != 0
    if pred.shape != truth.shape:
        raise ValueError(f"dimension mismatch: pred {pred.shape} vs truth {truth.shape}")
    pred = pred.copy()
    np.fill_diagonal(pred, False)
    skeleton = truth | truth.T
    tp = int((pred & truth).sum())
    rev = int((pred & truth.T & ~truth).sum())
    fp = int((pred & ~skeleton).sum())
    n_pred = int(pred.sum())
    n_true = int(truth.sum())
    iu = np.triu_indices(pred.shape[0], k=1)
    p_state = pred[iu] * 1 + pred.T[iu] * 2
    t_state = truth[iu] * 1 + truth.T[iu] * 2
    shd = int((p_state != t_state).sum())
    return MetricsReport(
        fdr=(rev + fp) / max(n_pred, 1),
        tpr=tp / max(n_true, 1),
        shd=shd,
        nnz=n_pred,
    )
