"""Node centralities over a layer's similarity graph.

All functions take a dense symmetric weight matrix ``w`` (zero diagonal,
``w[i, j] > 0`` iff an edge exists) and return one value per node in index
order. Betweenness and closeness ignore weights: edge weights are
similarities, not lengths.
"""

from __future__ import annotations

import numpy as np


def bfs_counts(adj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All-sources BFS on an unweighted graph.

    Returns ``(dist, sigma)`` where ``dist[s, v]`` is the hop distance
    (``-1`` when unreachable) and ``sigma[s, v]`` the number of shortest
    s-v paths.
    """
    n = adj.shape[0]
    a = (adj != 0).astype(float)
    dist = np.full((n, n), -1, dtype=np.int64)
    sigma = np.zeros((n, n))
    np.fill_diagonal(dist, 0)
    np.fill_diagonal(sigma, 1.0)
    frontier = np.eye(n)
    level = 0
    while frontier.any():
        level += 1
        reach = frontier @ a
        new = (reach > 0) & (dist < 0)
        if not new.any():
            break
        dist[new] = level
        frontier = np.where(new, reach, 0.0)
        sigma[new] = reach[new]
    return dist, sigma


def betweenness(w: np.ndarray) -> np.ndarray:
    """Unnormalized shortest-path betweenness (each unordered pair counted once).

    Brandes' dependency accumulation, run for all sources at once one BFS
    level at a time.
    """
    n = w.shape[0]
    if n < 3:
        return np.zeros(n)
    a = (w != 0).astype(float)
    dist, sigma = bfs_counts(a)
    delta = np.zeros((n, n))
    max_d = int(dist.max())
    safe_sigma = np.where(sigma > 0, sigma, 1.0)
    for d in range(max_d - 1, 0, -1):
        nxt = dist == d + 1
        x = np.where(nxt, (1.0 + delta) / safe_sigma, 0.0)
        y = x @ a
        cur = dist == d
        delta[cur] = (sigma * y)[cur]
    return delta.sum(axis=0) / 2.0


def pagerank(w: np.ndarray, damping: float = 0.85, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Weighted PageRank; dangling nodes spread their mass uniformly."""
    n = w.shape[0]
    if n == 0:
        return np.zeros(0)
    out = w.sum(axis=1)
    dangling = out == 0
    p = np.divide(w, out[:, None], out=np.zeros_like(w, dtype=float), where=out[:, None] > 0)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = damping * (x @ p + x[dangling].sum() / n) + (1.0 - damping) / n
        nxt /= nxt.sum()
        delta = np.abs(nxt - x).sum()
        x = nxt
        if delta < tol:
            break
    return x


def eigenvector(w: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Power iteration on ``w + I`` (same eigenvectors, no periodicity), scaled to unit max."""
    n = w.shape[0]
    if n == 0:
        return np.zeros(0)
    m = w + np.eye(n)
    x = np.ones(n)
    for _ in range(max_iter):
        x = m @ x
        x /= x.max()
    return x


def harmonic_closeness(w: np.ndarray, dist: np.ndarray | None = None) -> np.ndarray:
    """Sum over other nodes of 1/hop-distance, divided by n-1."""
    n = w.shape[0]
    if n < 2:
        return np.zeros(n)
    if dist is None:
        dist, _ = bfs_counts(w)
    inv = np.where(dist > 0, 1.0 / np.where(dist > 0, dist, 1), 0.0)
    return inv.sum(axis=1) / (n - 1)


def degree(w: np.ndarray) -> np.ndarray:
    return (w != 0).sum(axis=1).astype(float)


def average_weight(w: np.ndarray) -> np.ndarray:
    deg = degree(w)
    return np.divide(w.sum(axis=1), deg, out=np.zeros(w.shape[0]), where=deg > 0)
