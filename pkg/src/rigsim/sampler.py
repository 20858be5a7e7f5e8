"""Sampling of the bipartite graph B(n, m, p) and its intersection graph.

Edges are drawn by geometric skipping over the row-major enumeration of the
n x m slot grid, so the cost is proportional to the number of edges rather
than to n*m.  Labels are 0-based on both sides: individuals 0..n-1,
communities 0..m-1.  Generic graph queries address community ``u`` as
``n + u``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .regimes import RegimeConfig

# slot-grid blocks are kept below this size so cumulative skips fit in int64
_BLOCK_SLOTS = 1 << 52


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 stream for ``seed`` and optional replicate keys."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def replicate_seed(seed: int, r: int) -> int:
    """Derived 64-bit seed for replicate ``r``; replayable on its own."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(r)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class BipartiteGraph:
    """Bipartite graph in CSR form on both sides.

    Only communities with at least one member are stored on the community
    side (``u_labels``), which keeps memory at O(n + E) even when m is huge.
    """

    n: int
    m: int
    v_ptr: np.ndarray
    v_nbr: np.ndarray  # community labels, sorted within each row
    u_labels: np.ndarray  # sorted labels of non-isolated communities
    u_ptr: np.ndarray
    u_nbr: np.ndarray  # individual labels, sorted within each row
    seed: int | None = None

    @classmethod
    def from_edges(cls, n: int, m: int, vs, us, seed: int | None = None) -> "BipartiteGraph":
        vs = np.asarray(vs, dtype=np.int64)
        us = np.asarray(us, dtype=np.int64)
        if vs.shape != us.shape:
            raise ValueError("edge arrays differ in length")
        if vs.size and (vs.min() < 0 or vs.max() >= n or us.min() < 0 or us.max() >= m):
            raise ValueError("edge label out of range")
        # lexsort by (v, u) and drop duplicates
        order = np.lexsort((us, vs))
        vs, us = vs[order], us[order]
        if vs.size:
            keep = np.ones(vs.size, dtype=bool)
            keep[1:] = (vs[1:] != vs[:-1]) | (us[1:] != us[:-1])
            vs, us = vs[keep], us[keep]
        return cls._build(n, m, vs, us, seed)

    @classmethod
    def _build(cls, n: int, m: int, vs: np.ndarray, us: np.ndarray, seed) -> "BipartiteGraph":
        # vs, us must already be sorted by (v, u)
        v_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(vs, minlength=n), out=v_ptr[1:])
        if m * n < 1 << 62:
            # (u, v) pairs are distinct, so an unstable sort on the joint key is enough
            order = np.argsort(us * n + vs)
        else:
            order = np.argsort(us, kind="stable")
        u_sorted = us[order]
        first = np.ones(u_sorted.size, dtype=bool)
        first[1:] = u_sorted[1:] != u_sorted[:-1]
        u_labels = u_sorted[first]
        u_ptr = np.append(np.flatnonzero(first), u_sorted.size).astype(np.int64)
        compact = np.empty(us.size, dtype=np.int64)
        compact[order] = np.cumsum(first) - 1
        g = cls(int(n), int(m), v_ptr, us.copy(), u_labels.astype(np.int64), u_ptr, vs[order], seed)
        g.__dict__["v_nbr_compact"] = compact
        return g

    @property
    def num_edges(self) -> int:
        return int(self.v_nbr.size)

    @cached_property
    def v_nbr_compact(self) -> np.ndarray:
        """Community neighbours of each individual as indices into ``u_labels``."""
        return np.searchsorted(self.u_labels, self.v_nbr).astype(np.int64)

    def adj_v(self, v: int) -> np.ndarray:
        if not 0 <= v < self.n:
            raise IndexError(f"individual {v} out of range")
        return self.v_nbr[self.v_ptr[v] : self.v_ptr[v + 1]]

    def adj_u(self, u: int) -> np.ndarray:
        if not 0 <= u < self.m:
            raise IndexError(f"community {u} out of range")
        i = int(np.searchsorted(self.u_labels, u))
        if i == self.u_labels.size or self.u_labels[i] != u:
            return self.u_nbr[:0]
        return self.u_nbr[self.u_ptr[i] : self.u_ptr[i + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """All edges as (v, u) arrays sorted by v then u."""
        vs = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.v_ptr))
        return vs, self.v_nbr.copy()

    def transpose(self) -> "BipartiteGraph":
        """Swap the roles of the two sides (communities become the explored side)."""
        vs, us = self.edges()
        order = np.lexsort((vs, us))
        return BipartiteGraph._build(self.m, self.n, us[order], vs[order], self.seed)

    def dump(self, path: str | Path) -> None:
        vs, us = self.edges()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{self.n} {self.m} {self.seed if self.seed is not None else -1}\n")
            for v, u in zip(vs.tolist(), us.tolist()):
                fh.write(f"{v} {u}\n")

    @classmethod
    def load(cls, path: str | Path) -> "BipartiteGraph":
        with open(path, encoding="utf-8") as fh:
            n, m, seed = (int(x) for x in fh.readline().split())
            data = np.loadtxt(fh, dtype=np.int64, ndmin=2)
        if data.size == 0:
            data = np.zeros((0, 2), dtype=np.int64)
        return cls.from_edges(n, m, data[:, 0], data[:, 1], None if seed < 0 else seed)


def _skip_positions(total: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted positions of successes among ``total`` Bernoulli(p) slots."""
    if total <= 0 or p <= 0.0:
        return np.zeros(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(total, dtype=np.int64)
    parts = []
    pos = -1
    while True:
        mean = (total - pos - 1) * p
        chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
        gaps = np.minimum(rng.geometric(p, size=chunk), total + 1)
        cand = pos + np.cumsum(gaps)
        keep = cand[cand < total]
        parts.append(keep)
        if keep.size < cand.size:
            break
        pos = int(cand[-1])
    return np.concatenate(parts)


def sample_edges(n: int, m: int, p: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Independent Bernoulli(p) edges on the n x m grid, sorted by (v, u)."""
    if n == 0 or m == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    rows = max(1, _BLOCK_SLOTS // m)
    vs, us = [], []
    for start in range(0, n, rows):
        nrows = min(rows, n - start)
        slots = _skip_positions(nrows * m, p, rng)
        vs.append(slots // m + start)
        us.append(slots % m)
    return np.concatenate(vs), np.concatenate(us)


def sample_bipartite(config: RegimeConfig, seed: int) -> BipartiteGraph:
    rng = make_rng(seed)
    vs, us = sample_edges(config.n, config.m, config.p, rng)
    return BipartiteGraph._build(config.n, config.m, vs, us, int(seed))


@dataclass(frozen=True, eq=False)
class IntersectionGraph:
    n: int
    ptr: np.ndarray
    nbr: np.ndarray
    # unique edges i < j with one witnessing community each
    edge_i: np.ndarray = field(repr=False)
    edge_j: np.ndarray = field(repr=False)
    witness: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return int(self.edge_i.size)

    def adj(self, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise IndexError(f"vertex {i} out of range")
        return self.nbr[self.ptr[i] : self.ptr[i + 1]]

    @classmethod
    def from_edges(cls, n: int, ei, ej, witness=None) -> "IntersectionGraph":
        ei = np.asarray(ei, dtype=np.int64)
        ej = np.asarray(ej, dtype=np.int64)
        wit = np.full(ei.size, -1, dtype=np.int64) if witness is None else np.asarray(witness, dtype=np.int64)
        lo, hi = np.minimum(ei, ej), np.maximum(ei, ej)
        keep = lo != hi
        lo, hi, wit = lo[keep], hi[keep], wit[keep]
        order = np.lexsort((wit, hi, lo))
        lo, hi, wit = lo[order], hi[order], wit[order]
        if lo.size:
            first = np.ones(lo.size, dtype=bool)
            first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
            lo, hi, wit = lo[first], hi[first], wit[first]
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
        return cls(int(n), ptr, dst[order], lo, hi, wit)


def induce_intersection(B: BipartiteGraph, members: np.ndarray | None = None) -> IntersectionGraph:
    """Intersection graph: individuals adjacent iff they share a community.

    With ``members`` given, only communities touching those individuals are
    expanded (enough to recover the induced graph on their components).
    """
    sizes = np.diff(B.u_ptr)
    idx = np.flatnonzero(sizes >= 2)
    if members is not None:
        mask = np.zeros(B.n, dtype=bool)
        mask[np.asarray(members, dtype=np.int64)] = True
        touched = np.zeros(B.u_labels.size, dtype=bool)
        owner = np.repeat(np.arange(B.u_labels.size), sizes)
        touched[owner[mask[B.u_nbr]]] = True
        idx = idx[touched[idx]]
    ei, ej, wit = [], [], []
    for d in np.unique(sizes[idx]):
        group = idx[sizes[idx] == d]
        a, b = np.triu_indices(int(d), k=1)
        rows = B.u_nbr[B.u_ptr[group][:, None] + np.arange(d)[None, :]]
        ei.append(rows[:, a].ravel())
        ej.append(rows[:, b].ravel())
        wit.append(np.repeat(B.u_labels[group], a.size))
    if ei:
        return IntersectionGraph.from_edges(B.n, np.concatenate(ei), np.concatenate(ej), np.concatenate(wit))
    return IntersectionGraph.from_edges(B.n, [], [], [])


def _neighbours(graph, w: int) -> np.ndarray:
    if isinstance(graph, IntersectionGraph):
        return graph.adj(w)
    if w < graph.n:
        return graph.adj_v(w) + graph.n
    return graph.adj_u(w - graph.n)


def _size(graph) -> int:
    return graph.n if isinstance(graph, IntersectionGraph) else graph.n + graph.m


def bfs_distance(graph: BipartiteGraph | IntersectionGraph, i: int, j: int) -> float:
    """Hop distance between two vertices, ``math.inf`` when disconnected."""
    size = _size(graph)
    if not (0 <= i < size and 0 <= j < size):
        raise IndexError("vertex label out of range")
    if i == j:
        return 0
    dist = {i: 0}
    queue = deque([i])
    while queue:
        w = queue.popleft()
        d = dist[w] + 1
        for x in _neighbours(graph, w).tolist():
            if x not in dist:
                if x == j:
                    return d
                dist[x] = d
                queue.append(x)
    return math.inf
