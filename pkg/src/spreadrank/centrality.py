"""Node-level influence proxies.

Every measure returns a :class:`CentralityVector` holding one finite score
per node.  All functions are pure; ties in greedy steps go to the lowest
node index.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .graph import Graph

MEASURES = ("degree", "harmonic", "pagerank", "leaderrank", "kcore", "gdd", "ltc")

DEFAULT_PARAMS = {
    "alpha": 0.8,
    "p": 0.05,
    "threshold_factor": 0.7,
    "normalized": True,
    "tol": 1e-10,
    "max_iter": 10_000,
}


class ConvergenceError(RuntimeError):
    def __init__(self, measure: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"{measure} did not converge after {iterations} iterations (L1 residual {residual:.3e})"
        )


@dataclass
class CentralityVector:
    measure: str
    scores: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError(f"{self.measure}: non-finite score")

    def __len__(self):
        return len(self.scores)


def degree_centrality(g: Graph) -> CentralityVector:
    return CentralityVector("degree", g.out_degrees.astype(np.float64))


def harmonic(g: Graph, normalized: bool = True, chunk: int = 256) -> CentralityVector:
    """Sum over other nodes of 1/distance along out-arcs (unreachable adds 0)."""
    n = g.node_count
    scores = np.zeros(n)
    if n > 1 and g.arc_count:
        adj = g.adjacency()
        for start in range(0, n, chunk):
            sources = np.arange(start, min(start + chunk, n))
            d = shortest_path(adj, directed=True, unweighted=True, indices=sources)
            with np.errstate(divide="ignore"):
                inv = 1.0 / d
            inv[~np.isfinite(inv)] = 0.0  # self (1/0) and unreachable (1/inf)
            scores[sources] = inv.sum(axis=1)
    if normalized and n > 1:
        scores /= n - 1
    return CentralityVector("harmonic", scores, {"normalized": normalized})


def _transition(g: Graph) -> tuple[sp.csr_matrix, np.ndarray]:
    # column-stochastic P^T restricted to non-sink rows; sinks returned as mask
    out = g.out_degrees.astype(np.float64)
    sink = out == 0
    inv = np.divide(1.0, out, out=np.zeros_like(out), where=~sink)
    src = np.repeat(np.arange(g.node_count), g.out_degrees)
    pt = sp.csr_matrix(
        (inv[src], (g.out_idx, src)), shape=(g.node_count, g.node_count)
    )
    return pt, sink


def pagerank(
    g: Graph, alpha: float = 0.8, tol: float = 1e-10, max_iter: int = 10_000
) -> CentralityVector:
    """Damped random-walk stationary distribution.

    Sinks jump to a uniformly random node; each step teleports with
    probability ``1 - alpha``.  Power iteration stops once the L1 change
    drops below ``tol``.
    """
    n = g.node_count
    if n < 1:
        raise ValueError("pagerank needs at least one node")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pt, sink = _transition(g)
    x = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        nxt = alpha * (pt @ x + x[sink].sum() / n) + (1 - alpha) / n
        nxt /= nxt.sum()
        err = np.abs(nxt - x).sum()
        x = nxt
        if err < tol:
            return CentralityVector("pagerank", x, {"alpha": alpha, "tol": tol, "iterations": it})
    raise ConvergenceError("pagerank", max_iter, float(err))


def leaderrank(g: Graph, tol: float = 1e-10, max_iter: int = 10_000) -> CentralityVector:
    """LeaderRank: undamped walk on ``g`` plus a ground node tied to every node.

    The ground node's stationary mass is shared equally among the real
    nodes at the end.  Iteration uses the lazy chain ``(I + P) / 2``: it has
    the same stationary distribution but cannot oscillate (an edgeless graph
    plus ground node is bipartite).
    """
    n = g.node_count
    if n < 1:
        raise ValueError("leaderrank needs at least one node")
    out = g.out_degrees.astype(np.float64) + 1.0  # +1 arc to the ground node
    src = np.repeat(np.arange(n), g.out_degrees)
    pt = sp.csr_matrix((1.0 / out[src], (g.out_idx, src)), shape=(n, n))
    to_ground = 1.0 / out
    x = np.full(n, 1.0 / (n + 1))
    xg = 1.0 / (n + 1)
    for it in range(1, max_iter + 1):
        nx_ = pt @ x + xg / n
        ng = to_ground @ x
        nx_ = 0.5 * (x + nx_)
        ng = 0.5 * (xg + ng)
        total = nx_.sum() + ng
        nx_ /= total
        ng /= total
        err = np.abs(nx_ - x).sum() + abs(ng - xg)
        x, xg = nx_, ng
        if err < tol:
            scores = x + xg / n
            return CentralityVector("leaderrank", scores / scores.sum(), {"tol": tol, "iterations": it})
    raise ConvergenceError("leaderrank", max_iter, float(err))


def kcore(g: Graph) -> CentralityVector:
    """Onion peeling: for k = 0, 1, 2, ... strip nodes whose remaining degree is <= k.

    A node's value is the k of the stage that removes it, which is its core
    number.  Stage 0 only catches isolated nodes.
    """
    if not g.is_symmetric():
        raise ValueError("kcore requires an arc-symmetric (undirected) graph")
    n = g.node_count
    deg = g.out_degrees.astype(np.int64).copy()
    core = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    heap = [(int(deg[v]), v) for v in range(n)]
    heapq.heapify(heap)
    k = 0
    while heap:
        d, v = heapq.heappop(heap)
        if not alive[v] or d != deg[v]:
            continue
        k = max(k, d)
        alive[v] = False
        core[v] = k
        for u in g.successors(v):
            if alive[u]:
                deg[u] -= 1
                heapq.heappush(heap, (int(deg[u]), int(u)))
    return CentralityVector("kcore", core.astype(np.float64))


def _gdd_value(d, t, nbr_t_sum, p):
    # Wang et al. (2016), generalized degree discount for a node with degree d,
    # t selected neighbours, and nbr_t_sum = sum of t_w over unselected neighbours w:
    #   gdd = d - 2t - (d - t) t p + t (t - 1) p / 2 - p * sum_w t_w
    return d - 2 * t - (d - t) * t * p + 0.5 * t * (t - 1) * p - p * nbr_t_sum


def gdd(g: Graph, p: float = 0.05, k: int | None = None) -> CentralityVector:
    """Generalized Degree Discount greedy ordering.

    Each node's output score is its discounted value at the step it was
    selected; nodes never selected (``k < node_count``) keep their final
    discounted value.  The selection order is in ``params["order"]``.
    """
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    n = g.node_count
    k = n if k is None else min(k, n)
    d = g.out_degrees.astype(np.float64)
    t = np.zeros(n)
    nbr_t = np.zeros(n)  # sum of t over unselected neighbours
    selected = np.zeros(n, dtype=bool)
    value = d.copy()
    heap = [(-value[v], v) for v in range(n)]
    heapq.heapify(heap)
    order = []
    frozen = np.zeros(n)
    while len(order) < k:
        negv, u = heapq.heappop(heap)
        if selected[u] or -negv != value[u]:
            continue
        selected[u] = True
        order.append(u)
        frozen[u] = value[u]
        # u leaves the unselected pool: its t no longer counts for its neighbours
        touched = set()
        for v in g.successors(u):
            if not selected[v]:
                nbr_t[v] -= t[u]
                t[v] += 1
                touched.add(int(v))
        for v in list(touched):
            for w in g.successors(v):
                if not selected[w]:
                    nbr_t[w] += 1
                    touched.add(int(w))
        for v in touched:
            value[v] = _gdd_value(d[v], t[v], nbr_t[v], p)
            heapq.heappush(heap, (-value[v], v))
    scores = np.where(selected, frozen, value)
    return CentralityVector("gdd", scores, {"p": p, "order": order})


def ltc(g: Graph, threshold_factor: float = 0.7) -> CentralityVector:
    """Linear Threshold Centrality.

    For each node, seed it together with its out-neighbours and run a
    deterministic threshold cascade with unit arc weights.  A node fires once
    at least one and at least ``threshold_factor * degree`` of its
    in-neighbours are active.  Score is the active fraction of all nodes.
    """
    if not 0 < threshold_factor <= 1:
        raise ValueError("threshold_factor must lie in (0, 1]")
    n = g.node_count
    theta = np.maximum(threshold_factor * g.out_degrees, 1e-12)
    scores = np.empty(n)
    for v in range(n):
        active = np.zeros(n, dtype=bool)
        active[v] = True
        active[g.successors(v)] = True
        count = np.zeros(n)
        frontier = np.flatnonzero(active)
        while frontier.size:
            for u in frontier:
                count[g.successors(u)] += 1
            fire = (~active) & (count >= theta)
            frontier = np.flatnonzero(fire)
            active |= fire
        scores[v] = active.sum() / n
    return CentralityVector("ltc", scores, {"threshold_factor": threshold_factor})


def compute(g: Graph, measure: str, params: dict | None = None) -> CentralityVector:
    """Run one measure by name; missing parameters take the package defaults."""
    prm = {**DEFAULT_PARAMS, **(params or {})}
    if measure == "degree":
        return degree_centrality(g)
    if measure == "harmonic":
        return harmonic(g, normalized=prm["normalized"])
    if measure == "pagerank":
        return pagerank(g, alpha=prm["alpha"], tol=prm["tol"], max_iter=prm["max_iter"])
    if measure == "leaderrank":
        return leaderrank(g, tol=prm["tol"], max_iter=prm["max_iter"])
    if measure == "kcore":
        return kcore(g)
    if measure == "gdd":
        return gdd(g, p=prm["p"])
    if measure == "ltc":
        return ltc(g, threshold_factor=prm["threshold_factor"])
    raise ValueError(f"unknown measure {measure!r}; choose from {', '.join(MEASURES)}")


def all_measures(g: Graph, params: dict | None = None, measures=MEASURES) -> list[CentralityVector]:
    return [compute(g, m, params) for m in measures]
