"""Undirected tree topologies and their oriented incidence matrices.

Nodes are 1-based at the API boundary (matching config files) and 0-based in
every array. Edges are stored as ``(i, j)`` with ``i < j``, sorted
lexicographically; that order defines the edge labels ``l_1 .. l_NE`` used by
every stacked edge vector in the package. Row ``k`` of the incidence matrix
has ``+1`` in column ``i`` and ``-1`` in column ``j``, so the edge error is
``x_i - x_j - d_ij`` with the lower-index endpoint first.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidEdge, NotATree

RANK_RTOL = 1e-10


def _normalize_edges(n_agents: int, edge_list: Iterable[Sequence[int]]) -> list[tuple[int, int]]:
    if n_agents < 1:
        raise InvalidEdge(f"n_agents must be a positive integer, got {n_agents}")
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        if len(pair) != 2:
            raise InvalidEdge(f"edge {pair!r} is not a node pair")
        a, b = int(pair[0]), int(pair[1])
        if a != pair[0] or b != pair[1]:
            raise InvalidEdge(f"edge {pair!r} has non-integer endpoints")
        if not (1 <= a <= n_agents and 1 <= b <= n_agents):
            raise InvalidEdge(f"edge ({a},{b}) out of range 1..{n_agents}")
        if a == b:
            raise InvalidEdge(f"self-loop at node {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise InvalidEdge(f"duplicate edge {key}")
        seen.add(key)
    return sorted(seen)


def _connected(n_agents: int, edges: Sequence[tuple[int, int]]) -> bool:
    nbrs: list[list[int]] = [[] for _ in range(n_agents + 1)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    visited = {1}
    queue = deque([1])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in visited:
                visited.add(v)
                queue.append(v)
    return len(visited) == n_agents


def is_tree(n_agents: int, edge_list: Iterable[Sequence[int]]) -> bool:
    """True iff the graph is connected and has exactly ``n_agents - 1`` edges."""
    edges = _normalize_edges(n_agents, edge_list)
    return len(edges) == n_agents - 1 and _connected(n_agents, edges)


@dataclass(frozen=True)
class Graph:
    n_agents: int
    edges: tuple[tuple[int, int], ...]
    adjacency: np.ndarray = field(repr=False)
    incidence: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_weights(self) -> np.ndarray:
        return np.eye(self.n_edges)

    def neighbors(self, agent: int) -> list[int]:
        """0-based neighbour indices of 0-based ``agent``, ascending."""
        return [int(j) for j in np.flatnonzero(self.adjacency[agent])]

    def degree(self, agent: int) -> int:
        return int(self.adjacency[agent].sum())

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edge_index(self, i: int, j: int) -> int:
        """Label index (0-based) of the edge joining 1-based nodes ``i`` and ``j``."""
        return self.edges.index((min(i, j), max(i, j)))

    def directed_links(self) -> list[tuple[int, int, int]]:
        """``(receiver, sender, edge)`` triples, 0-based, two per edge.

        Link ``2k`` is received by the lower endpoint of edge ``k`` and link
        ``2k + 1`` by the higher one. Noise blocks are laid out in this order.
        """
        links = []
        for k, (i, j) in enumerate(self.edges):
            links.append((i - 1, j - 1, k))
            links.append((j - 1, i - 1, k))
        return links


def build_graph(n_agents: int, edge_list: Iterable[Sequence[int]]) -> Graph:
    """Validate a tree topology and build its adjacency and incidence matrices.

    Raises:
        InvalidEdge: self-loop, out-of-range endpoint or duplicate edge.
        NotATree: the edge set has a cycle or leaves the graph disconnected.
    """
    edges = _normalize_edges(n_agents, edge_list)
    if len(edges) != n_agents - 1 or not _connected(n_agents, edges):
        raise NotATree(
            f"{len(edges)} edges on {n_agents} nodes do not form a spanning tree"
        )
    adjacency = np.zeros((n_agents, n_agents), dtype=int)
    incidence = np.zeros((len(edges), n_agents), dtype=int)
    for k, (i, j) in enumerate(edges):
        adjacency[i - 1, j - 1] = adjacency[j - 1, i - 1] = 1
        incidence[k, i - 1] = 1
        incidence[k, j - 1] = -1
    adjacency.setflags(write=False)
    incidence.setflags(write=False)
    return Graph(n_agents, tuple(edges), adjacency, incidence)


def incidence_rank(graph: Graph) -> int:
    """Numerical rank of the incidence matrix (SVD, relative tolerance 1e-10)."""
    if graph.n_edges == 0:
        return 0
    s = np.linalg.svd(graph.incidence.astype(float), compute_uv=False)
    return int(np.sum(s > RANK_RTOL * s[0]))


def random_tree(n_agents: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Uniform random labelled tree on ``n_agents`` nodes via a Prüfer sequence."""
    if n_agents == 1:
        return []
    if n_agents == 2:
        return [(1, 2)]
    seq = [int(v) for v in rng.integers(1, n_agents + 1, size=n_agents - 2)]
    degree = [1] * (n_agents + 1)
    for v in seq:
        degree[v] += 1
    edges = []
    for v in seq:
        leaf = next(u for u in range(1, n_agents + 1) if degree[u] == 1)
        edges.append((leaf, v))
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = (x for x in range(1, n_agents + 1) if degree[x] == 1)
    edges.append((u, w))
    return edges
