"""Static network topologies and graph diagnostics.

Agents live on an undirected graph that is generated once per run and never
changes afterwards. The default generator is a Watts-Strogatz style
small-world graph (ring lattice plus random rewiring); an Erdos-Renyi
generator is available as a sensitivity fallback.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class SmallWorldSpec:
    """Parameters of the small-world generator.

    n: number of nodes.
    k: even mean degree (each node starts with k ring-lattice neighbors).
    beta: probability that a lattice edge gets rewired.
    """

    n: int
    k: int
    beta: float

    def validate(self) -> None:
        if self.k % 2 != 0:
            raise ParameterError(f"k must be even, got {self.k}")
        if not (2 <= self.k < self.n):
            raise ParameterError(f"need 2 <= k < n, got k={self.k}, n={self.n}")
        if not (0.0 <= self.beta <= 1.0):
            raise ParameterError(f"beta must be in [0, 1], got {self.beta}")


@dataclass
class Network:
    """Immutable undirected graph in CSR form.

    ``indptr``/``indices`` follow the usual compressed layout: the neighbors
    of node ``i`` are ``indices[indptr[i]:indptr[i+1]]``, sorted ascending.
    Node ids are dense integers ``0..node_count-1``.
    """

    node_count: int
    indptr: np.ndarray
    indices: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.indices.size) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    @property
    def adjacency(self) -> list[list[int]]:
        """Neighbor lists as plain Python lists (test/debug convenience)."""
        return [self.neighbors(i).tolist() for i in range(self.node_count)]

    def validate(self) -> None:
        """Check structural invariants: symmetry, no loops, no duplicates."""
        for i in range(self.node_count):
            nbrs = self.neighbors(i)
            if np.any(nbrs == i):
                raise ParameterError(f"self-loop at node {i}")
            if nbrs.size != np.unique(nbrs).size:
                raise ParameterError(f"duplicate neighbor entries at node {i}")
        # symmetry: the multiset of (i, j) equals the multiset of (j, i)
        recv = np.repeat(np.arange(self.node_count), self.degrees)
        fwd = set(zip(recv.tolist(), self.indices.tolist()))
        if any((j, i) not in fwd for i, j in fwd):
            raise ParameterError("adjacency is not symmetric")


def _network_from_sets(n: int, adj: list[set]) -> Network:
    degrees = np.fromiter((len(s) for s in adj), dtype=np.int64, count=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)
    for i, s in enumerate(adj):
        indices[indptr[i]:indptr[i + 1]] = sorted(s)
    return Network(node_count=n, indptr=indptr, indices=indices)


def generate_small_world(spec: SmallWorldSpec, rng: np.random.Generator) -> Network:
    """Generate a Watts-Strogatz style graph.

    Starts from a ring lattice of degree ``spec.k`` and visits every lattice
    edge once (node order, then offset order); with probability ``beta`` the
    far endpoint is replaced by a uniformly drawn node that is neither the
    ego nor already adjacent to it. If no valid target is found after ``n``
    attempts, the original edge is kept, so the edge count is always
    ``n * k / 2``. Identical (spec, rng seed) gives an identical graph.
    """
    spec.validate()
    n, k = spec.n, spec.k
    adj: list[set] = [set() for _ in range(n)]
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            adj[i].add(j)
            adj[j].add(i)

    # One rewire draw per lattice edge, in a fixed order, taken as a single
    # vectorized sample so the stream layout does not depend on beta.
    flips = rng.random(n * (k // 2)) < spec.beta
    e = 0
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            if flips[e]:
                for _attempt in range(n):
                    w = int(rng.integers(0, n))
                    if w != i and w not in adj[i]:
                        adj[i].discard(j)
                        adj[j].discard(i)
                        adj[i].add(w)
                        adj[w].add(i)
                        break
            e += 1
    return _network_from_sets(n, adj)


def generate_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Network:
    """G(n, p) fallback generator: every pair linked independently."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not (0.0 <= p <= 1.0):
        raise ParameterError(f"p must be in [0, 1], got {p}")
    adj: list[set] = [set() for _ in range(n)]
    block = 512
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        draws = rng.random((hi - lo, n))
        for i in range(lo, hi):
            row = draws[i - lo]
            targets = np.flatnonzero(row[i + 1:] < p) + i + 1
            for j in targets.tolist():
                adj[i].add(j)
                adj[j].add(i)
    return _network_from_sets(n, adj)


def clustering_coefficient(net: Network) -> float:
    """Mean local clustering over all nodes.

    A node of degree d contributes (closed neighbor pairs) / (d*(d-1)/2);
    nodes with degree < 2 contribute 0.
    """
    total = 0.0
    for i in range(net.node_count):
        nbrs = net.neighbors(i)
        d = nbrs.size
        if d < 2:
            continue
        closed = 0
        for u in nbrs:
            # both lists are sorted, so intersection is cheap
            closed += np.intersect1d(net.neighbors(int(u)), nbrs, assume_unique=True).size
        total += closed / (d * (d - 1))  # each closed pair counted twice
    return total / net.node_count if net.node_count else 0.0


def _bfs_component(net: Network, source: int) -> np.ndarray:
    """Return the bool membership mask of source's connected component."""
    seen = np.zeros(net.node_count, dtype=bool)
    seen[source] = True
    frontier = np.array([source], dtype=np.int64)
    while frontier.size:
        nxt = np.concatenate([net.neighbors(int(v)) for v in frontier])
        nxt = np.unique(nxt)
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


def largest_component(net: Network) -> np.ndarray:
    """Node ids of the largest connected component (ties: lowest seed id)."""
    if net.node_count == 0:
        raise ParameterError("empty graph")
    remaining = np.ones(net.node_count, dtype=bool)
    best = None
    while remaining.any():
        src = int(np.flatnonzero(remaining)[0])
        comp = _bfs_component(net, src)
        if best is None or comp.sum() > best.sum():
            best = comp
        remaining &= ~comp
    return np.flatnonzero(best)


def mean_path_length(net: Network) -> float:
    """Average shortest-path length over the largest connected component."""
    comp = largest_component(net)
    if comp.size < 2:
        return 0.0
    member = np.zeros(net.node_count, dtype=bool)
    member[comp] = True
    total = 0
    pairs = 0
    for src in comp:
        seen = np.zeros(net.node_count, dtype=bool)
        seen[src] = True
        frontier = np.array([src], dtype=np.int64)
        depth = 0
        while frontier.size:
            depth += 1
            nxt = np.unique(np.concatenate([net.neighbors(int(v)) for v in frontier]))
            nxt = nxt[~seen[nxt] & member[nxt]]
            if nxt.size == 0:
                break
            seen[nxt] = True
            total += depth * nxt.size
            frontier = nxt
        pairs += comp.size - 1
    return total / pairs


def dump_edge_list(net: Network, path) -> None:
    """Write the undirected edge list, one ``i j`` per line, i < j, sorted."""
    recv = np.repeat(np.arange(net.node_count), net.degrees)
    mask = recv < net.indices
    order = np.lexsort((net.indices[mask], recv[mask]))
    lines = [f"{i} {j}" for i, j in zip(recv[mask][order], net.indices[mask][order])]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")
