"""Undirected simple graphs, hop neighborhoods and the degree-capped BA generator."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp


class InfeasibleGraphError(RuntimeError):
    """Raised when the capped preferential-attachment process runs out of targets."""


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable undirected simple graph on nodes ``0..n-1`` stored in CSR form.

    ``indptr``/``indices`` hold sorted neighbor lists; build instances with
    :meth:`from_edges` rather than the constructor.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    _dist_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Network":
        if n < 0:
            raise ValueError("node count must be non-negative")
        pairs = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) outside node range [0, {n})")
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            pairs.add((min(u, v), max(u, v)))
        if pairs:
            arr = np.array(sorted(pairs), dtype=np.int64)
            rows = np.concatenate([arr[:, 0], arr[:, 1]])
            cols = np.concatenate([arr[:, 1], arr[:, 0]])
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        mat = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
        mat.sort_indices()
        return cls(n, mat.indptr.astype(np.int64), mat.indices.astype(np.int64))

    # -- basic queries -------------------------------------------------
    def neighbors(self, i: int) -> np.ndarray:
        self._check_node(i)
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def n_edges(self) -> int:
        return int(self.indices.size // 2)

    @property
    def edges(self) -> set[tuple[int, int]]:
        out = set()
        for i in range(self.n):
            for j in self.neighbors(i):
                if i < j:
                    out.add((i, int(j)))
        return out

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(i).tolist() for i in range(self.n)]

    def edge_array(self) -> np.ndarray:
        """``(m, 2)`` array of edges with ``u < v``, lexicographically sorted."""
        src = np.repeat(np.arange(self.n), self.degrees)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    def _check_node(self, i: int) -> None:
        if not (0 <= int(i) < self.n):
            raise IndexError(f"node {i} not in [0, {self.n})")

    # -- distances -----------------------------------------------------
    def distances_from(self, i: int, radius: int) -> dict[int, int]:
        """BFS distances from ``i`` to every node within ``radius`` hops.

        Results are memoized per source; a cached BFS to a larger radius is
        reused for smaller queries.
        """
        self._check_node(i)
        if radius < 0:
            raise ValueError("radius must be >= 0")
        cached = self._dist_cache.get(int(i))
        if cached is not None and (cached[0] >= radius or cached[2]):
            r, dist, _ = cached
            if r == radius:
                return dist
            return {j: d for j, d in dist.items() if d <= radius}
        dist = {int(i): 0}
        frontier = deque([int(i)])
        exhausted = True
        while frontier:
            u = frontier.popleft()
            du = dist[u]
            if du == radius:
                exhausted = False
                continue
            for v in self.indices[self.indptr[u]:self.indptr[u + 1]]:
                v = int(v)
                if v not in dist:
                    dist[v] = du + 1
                    frontier.append(v)
        self._dist_cache[int(i)] = (radius, dist, exhausted)
        return dist

    def khop_matrix(self, k: int) -> sp.csr_matrix:
        """0/1 CSR matrix with a one at (i, j) iff ``1 <= d(i, j) <= k``."""
        if k < 0:
            raise ValueError("k must be >= 0")
        key = ("khop", k)
        if key not in self._memo:
            self._memo[key] = self._khop(k)
        return self._memo[key]

    def _khop(self, k: int) -> sp.csr_matrix:
        adj = sp.csr_matrix(
            (np.ones(self.indices.size), self.indices, self.indptr), shape=(self.n, self.n)
        )
        if k == 0:
            return sp.csr_matrix((self.n, self.n))
        reach = adj.copy()
        power = adj.copy()
        for _ in range(k - 1):
            power = (power @ adj)
            power.data[:] = 1.0
            reach = reach + power
        reach = reach.tocsr()
        reach.setdiag(0)
        reach.eliminate_zeros()
        reach.data[:] = 1.0
        reach.sort_indices()
        return reach

    def shell_pairs(self, max_s: int) -> list[tuple[np.ndarray, np.ndarray]]:
        """Ordered pairs ``(i, j)`` grouped by exact distance ``s = 0..max_s``."""
        key = ("shells", max_s)
        if key not in self._memo:
            self._memo[key] = self._shell_pairs(max_s)
        return self._memo[key]

    def _shell_pairs(self, max_s: int) -> list[tuple[np.ndarray, np.ndarray]]:
        rows: list[list[int]] = [[] for _ in range(max_s + 1)]
        cols: list[list[int]] = [[] for _ in range(max_s + 1)]
        for i in range(self.n):
            for j, d in self._bfs_nocache(i, max_s).items():
                rows[d].append(i)
                cols[d].append(j)
        return [(np.asarray(r, dtype=np.int64), np.asarray(c, dtype=np.int64))
                for r, c in zip(rows, cols)]

    def _bfs_nocache(self, i: int, radius: int) -> dict[int, int]:
        dist = {i: 0}
        frontier = deque([i])
        while frontier:
            u = frontier.popleft()
            if dist[u] == radius:
                continue
            for v in self.indices[self.indptr[u]:self.indptr[u + 1]]:
                v = int(v)
                if v not in dist:
                    dist[v] = dist[u] + 1
                    frontier.append(v)
        return dist


def neighborhood(net: Network, i: int, s: int) -> set[int]:
    """Nodes within ``s`` hops of ``i`` (always contains ``i``)."""
    return set(net.distances_from(i, s))


def boundary(net: Network, i: int, s: int) -> set[int]:
    """Nodes at exactly ``s`` hops from ``i``."""
    return {j for j, d in net.distances_from(i, s).items() if d == s}


def generate_ba_capped(n: int, m: int, max_degree: int, seed=None) -> Network:
    """Barabási-Albert growth with a hard degree cap.

    Starts from ``m`` isolated nodes. Every new node links to ``m`` distinct
    existing nodes drawn without replacement with weight ``degree + 1``,
    restricted to nodes whose degree is still below ``max_degree``. Raises
    :class:`InfeasibleGraphError` when fewer than ``m`` nodes are eligible;
    callers should re-seed rather than relax the cap.
    """
    if not (1 <= m < n):
        raise ValueError("need 1 <= m < n")
    if max_degree < m:
        raise ValueError("max_degree must be >= m")
    rng = np.random.default_rng(seed)
    deg = np.zeros(n, dtype=np.int64)
    edges = []
    for new in range(m, n):
        eligible = np.flatnonzero(deg[:new] < max_degree)
        if eligible.size < m:
            raise InfeasibleGraphError(
                f"only {eligible.size} eligible targets for node {new} (m={m})"
            )
        w = (deg[eligible] + 1).astype(float)
        targets = rng.choice(eligible, size=m, replace=False, p=w / w.sum())
        for t in targets:
            edges.append((int(t), new))
            deg[t] += 1
        deg[new] += m
    return Network.from_edges(n, edges)


def read_edge_list(path, n: int | None = None, id_map: dict[str, int] | None = None):
    """Parse a whitespace edge list (``#`` starts a comment).

    With ``id_map`` the tokens are external ids resolved through the map;
    otherwise they must be integers in ``[0, n)``. Returns the network.
    """
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u v', got {raw!r}")
        if id_map is not None:
            try:
                pairs.append((id_map[parts[0]], id_map[parts[1]]))
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: unknown node id {exc.args[0]!r}") from None
        else:
            pairs.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = 1 + max((max(p) for p in pairs), default=-1)
    return Network.from_edges(n, pairs)


def write_edge_list(net: Network, path, labels: list[str] | None = None) -> None:
    lines = [f"# n={net.n} edges={net.n_edges}"]
    for u, v in net.edge_array():
        if labels is None:
            lines.append(f"{u} {v}")
        else:
            lines.append(f"{labels[u]} {labels[v]}")
    Path(path).write_text("\n".join(lines) + "\n")
