"""Surplus edges, their point measure, triangle processes and exact counts."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np
from numba import njit

from .exploration import Component, ExplorationTrace
from .regimes import RegimeConfig
from .sampler import BipartiteGraph, IntersectionGraph, induce_intersection, replicate_seed, sample_bipartite


class SurplusCase(str, enum.Enum):
    ACTIVE_HIT = "ActiveHit"
    SIBLING_OVERLAP = "SiblingOverlap"


@dataclass(frozen=True)
class SurplusRecord:
    u: int
    w: int
    k: int
    case: SurplusCase
    l: int


@dataclass(frozen=True, eq=False)
class SurplusTable:
    """Column store of surplus records, sorted by (k, l, u, w)."""

    u: np.ndarray
    w: np.ndarray
    k: np.ndarray
    l: np.ndarray
    sibling: np.ndarray  # True for SiblingOverlap

    def __len__(self) -> int:
        return int(self.k.size)

    def __iter__(self) -> Iterator[SurplusRecord]:
        for u, w, k, l, s in zip(self.u.tolist(), self.w.tolist(), self.k.tolist(), self.l.tolist(),
                                 self.sibling.tolist()):
            yield SurplusRecord(u, w, k, SurplusCase.SIBLING_OVERLAP if s else SurplusCase.ACTIVE_HIT, l)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["k", "l", "case"])
            for r in self:
                out.writerow([r.k, r.l, r.case.value])


class TraceMismatch(ValueError):
    pass


def classify_surplus(B: BipartiteGraph, trace: ExplorationTrace) -> SurplusTable:
    """Every non-forest edge {u, w} revealed up to the last explored step.

    The edge is charged to the step k at which u was revealed.  Either w sat
    in the active list A_{k-1} (rank l counted from the top, 1-based), or w
    was revealed at the same step by an earlier sibling community (l = 0).
    """
    if B.n != trace.n or B.m != trace.m or not np.array_equal(B.u_labels, trace.u_labels):
        raise TraceMismatch("trace was not produced from this graph")
    vs, _ = B.edges()
    cu = B.v_nbr_compact
    ks = trace.u_step[cu]
    reached = ks > 0
    parent_of_u = np.where(reached, trace.order[np.maximum(ks, 1) - 1], -1)
    forest = (parent_of_u == vs) | (trace.v_parent_compact[vs] == cu)
    if trace.complete:
        n_forest = int(np.count_nonzero(trace.u_step > 0)) + int(np.count_nonzero(trace.v_parent >= 0))
        if int(np.count_nonzero(forest)) != n_forest or not reached.all():
            raise TraceMismatch("edge counts inconsistent with the trace")
    sel = np.flatnonzero(reached & ~forest)
    w, c, k = vs[sel], cu[sel], ks[sel]
    sib_i = trace.u_sibling[c]
    disc = trace.v_disc_step[w]
    vstep = trace.v_step[w]
    sibling = (disc == k) & (trace.v_sibling[w] < sib_i)
    active = (disc >= 1) & (disc < k) & ((vstep > k) | (vstep == 0))
    if not np.all(sibling ^ active):
        raise TraceMismatch("surplus edge fits neither case")
    l = np.where(active, trace.active_before[k] - trace.v_stack_pos[w], 0)
    if np.any(active & ((l < 1) | (l > trace.active_before[k]))):
        raise TraceMismatch("active rank out of range")
    u = trace.u_labels[c]
    order = np.lexsort((w, u, l, k))
    return SurplusTable(u[order], w[order], k[order], l[order], sibling[order])


@dataclass(frozen=True, eq=False)
class SurplusMeasure:
    raw: np.ndarray  # (count, 2) atoms with multiplicity
    atoms: np.ndarray  # simple version, unique rows
    simple: bool = True

    def count_in_box(self, x_max: float, y_max: float, simple: bool = True) -> int:
        pts = self.atoms if simple else self.raw
        return int(np.count_nonzero((pts[:, 0] <= x_max) & (pts[:, 1] <= y_max)))


def point_measure(records: SurplusTable, n: int, time_scale: float | None = None,
                  walk_scale: float | None = None) -> SurplusMeasure:
    """Atoms (k / n^(2/3), l / n^(1/3)); the scales can be overridden for swapped runs."""
    ts = n ** (2 / 3) if time_scale is None else time_scale
    ws = n ** (-1 / 3) if walk_scale is None else walk_scale
    raw = np.stack([records.k / ts, records.l * ws], axis=1) if len(records) else np.zeros((0, 2))
    keys = np.unique(np.stack([records.k, records.l], axis=1), axis=0) if len(records) else np.zeros((0, 2))
    atoms = np.stack([keys[:, 0] / ts, keys[:, 1] * ws], axis=1) if len(keys) else np.zeros((0, 2))
    return SurplusMeasure(raw, atoms)


def _falling3(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.int64)
    return x * (x - 1) * (x - 2)


@dataclass(frozen=True, eq=False)
class TriangleProcess:
    T: np.ndarray

    def at(self, k: int) -> int:
        return int(self.T[min(k, self.T.size - 1)])


def _per_step(trace: ExplorationTrace, values: np.ndarray) -> np.ndarray:
    step = np.repeat(np.arange(trace.steps), trace.X)
    inc = np.zeros(trace.steps, dtype=np.int64)
    np.add.at(inc, step, values)
    T = np.zeros(trace.steps + 1, dtype=np.int64)
    np.cumsum(inc, out=T[1:])
    return T


def triangle_process(trace: ExplorationTrace) -> TriangleProcess:
    """T_k = sum over steps j <= k and communities i of (1 + #N_{j,i})_3 / 6."""
    return TriangleProcess(_per_step(trace, _falling3(trace.n_sizes + 1) // 6))


def swapped_triangle_process(trace: ExplorationTrace) -> TriangleProcess:
    """T_k = sum_{j<=k} (X_j)_3 / 6 on an exploration run from the community side."""
    inc = _falling3(trace.X) // 6
    T = np.zeros(trace.steps + 1, dtype=np.int64)
    np.cumsum(inc, out=T[1:])
    return TriangleProcess(T)


@njit(cache=True, nogil=True)
def _triangles_kernel(ptr, nbr, mask):
    total = 0
    n = ptr.shape[0] - 1
    for i in range(n):
        if not mask[i]:
            continue
        for a in range(ptr[i], ptr[i + 1]):
            j = nbr[a]
            if j <= i:
                continue
            # count w > j adjacent to both i and j
            x = ptr[i]
            y = ptr[j]
            xe = ptr[i + 1]
            ye = ptr[j + 1]
            while x < xe and y < ye:
                a1 = nbr[x]
                b1 = nbr[y]
                if a1 < b1:
                    x += 1
                elif b1 < a1:
                    y += 1
                else:
                    if a1 > j:
                        total += 1
                    x += 1
                    y += 1
    return total


def count_triangles_exact(G: IntersectionGraph, comp: Iterable[int] | None = None) -> int:
    """Triangles with their lowest vertex in ``comp`` (all of G when omitted)."""
    mask = np.zeros(G.n, dtype=np.bool_)
    if comp is None:
        mask[:] = True
    else:
        mask[np.fromiter(comp, dtype=np.int64)] = True
    return int(_triangles_kernel(G.ptr, G.nbr, mask))


class ClusteringEstimate(NamedTuple):
    estimate: float
    stderr: float
    events: int


def clustering_coefficient_mc(config: RegimeConfig, replicates: int, seed: int) -> ClusteringEstimate:
    """P(2~3 | 2~1, 3~1) over fresh graphs.

    By exchangeability every path of length two in a sampled graph is one
    conditioning event (its centre playing vertex 1) and it succeeds when
    the path is closed.  The estimate is the ratio of totals; its standard
    error comes from the replicate-level ratio estimator.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    closed = np.zeros(replicates)
    wedges = np.zeros(replicates)
    for r in range(replicates):
        G = induce_intersection(sample_bipartite(config, replicate_seed(seed, r)))
        deg = np.diff(G.ptr).astype(np.float64)
        wedges[r] = float(np.sum(deg * (deg - 1) / 2))
        closed[r] = 3.0 * count_triangles_exact(G)
    events = int(wedges.sum())
    if events == 0:
        return ClusteringEstimate(float("nan"), float("nan"), 0)
    est = closed.sum() / wedges.sum()
    if replicates < 2:
        return ClusteringEstimate(float(est), float("nan"), events)
    resid = closed - est * wedges
    se = np.sqrt(np.sum(resid**2) / (replicates * (replicates - 1))) / wedges.mean()
    return ClusteringEstimate(float(est), float(se), events)


@dataclass(frozen=True)
class ComponentRow:
    rank: int
    zeta: int
    u_size: int
    surplus: int
    triangles: int


def component_table(B: BipartiteGraph, trace: ExplorationTrace, comps: list[Component],
                    records: SurplusTable, G: IntersectionGraph | None = None) -> list[ComponentRow]:
    """Per-component summary: individuals, communities, surplus edges, triangles."""
    per_comp = np.bincount(trace.comp_index[records.k], minlength=trace.comp_ranges[0].size + 2) if len(records) else None
    rows = []
    for c in comps:
        cid = int(trace.comp_index[c.first_step])
        surplus = int(per_comp[cid]) if per_comp is not None else 0
        members = trace.members(c)
        tri = count_triangles_exact(G, members) if G is not None else 0
        rows.append(ComponentRow(c.rank, c.v_size, c.u_size, surplus, tri))
    return rows


def write_component_csv(rows: list[ComponentRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["rank", "zeta", "u_size", "surplus", "triangles"])
        for r in rows:
            out.writerow([r.rank, r.zeta, r.u_size, r.surplus, r.triangles])
