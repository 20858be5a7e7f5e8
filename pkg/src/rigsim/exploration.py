"""Depth-first exploration of a bipartite graph.

Individuals are explored one per step.  At step k the explored individual
v_k reveals the communities it belongs to that were not seen before (M_k, in
increasing label order), and each of those reveals its not yet discovered
members (N_{k,i}).  The discovered individuals are pushed onto the active
stack, smallest label on top, and the next individual is the top of the
stack (or a fresh root when the stack is empty).

The walks are R_k = sum #M_j and S_k = sum (#N_j - 1).  The active stack is
never copied: each individual remembers the stack slot it was pushed into,
which is enough to recover its rank in A_{k-1} at any later step.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .sampler import BipartiteGraph, make_rng


class RootMode(str, enum.Enum):
    UNIFORM = "uniform"
    SMALLEST = "smallest"


@dataclass(frozen=True)
class RootRule:
    mode: RootMode = RootMode.UNIFORM
    seed: int = 0

    @classmethod
    def smallest(cls) -> "RootRule":
        return cls(RootMode.SMALLEST)

    @classmethod
    def uniform(cls, seed: int) -> "RootRule":
        return cls(RootMode.UNIFORM, int(seed))

    def root_order(self, n: int) -> np.ndarray:
        # The first unvisited entry of a uniform permutation is uniform among
        # the unvisited vertices, whatever happened before.
        if self.mode is RootMode.SMALLEST:
            return np.arange(n, dtype=np.int64)
        return make_rng(self.seed, 0x5EED).permutation(n).astype(np.int64)


@njit(cache=True, nogil=True)
def _explore_kernel(n, n_u, m_total, v_ptr, v_nbr, u_ptr, u_nbr, roots, max_steps):
    steps = min(n, max_steps)
    order = np.empty(steps, np.int64)
    X = np.zeros(steps, np.int64)
    S = np.zeros(steps + 1, np.int64)
    R = np.zeros(steps + 1, np.int64)
    m_seq = np.empty(n_u, np.int64)
    n_sizes = np.empty(n_u, np.int64)
    active_before = np.zeros(steps + 1, np.int64)
    v_left = np.zeros(steps + 1, np.int64)
    u_left = np.zeros(steps + 1, np.int64)
    comp_index = np.zeros(steps + 1, np.int64)
    closes = np.zeros(steps + 1, np.bool_)

    v_state = np.zeros(n, np.int8)  # 0 unseen, 1 discovered, 2 explored
    v_parent = np.full(n, -1, np.int64)
    v_disc = np.zeros(n, np.int64)
    v_sib = np.zeros(n, np.int64)
    v_step = np.zeros(n, np.int64)
    v_pos = np.full(n, -1, np.int64)
    u_step = np.zeros(n_u, np.int64)
    u_sib = np.zeros(n_u, np.int64)

    stack = np.empty(n, np.int64)
    buf = np.empty(n, np.int64)
    top = 0
    unseen = n
    rp = 0
    nr = 0
    comps = 0
    for k in range(1, steps + 1):
        if top == 0:
            while v_state[roots[rp]] != 0:
                rp += 1
            v = roots[rp]
            unseen -= 1
            comps += 1
            active_before[k] = 0
        else:
            top -= 1
            v = stack[top]
            active_before[k] = top
        v_state[v] = 2
        v_left[k] = unseen
        u_left[k] = m_total - nr
        comp_index[k] = comps
        v_step[v] = k
        order[k - 1] = v

        x = 0
        nb = 0
        for a in range(v_ptr[v], v_ptr[v + 1]):
            u = v_nbr[a]
            if u_step[u] != 0:
                continue
            x += 1
            u_step[u] = k
            u_sib[u] = x
            cnt = 0
            for b in range(u_ptr[u], u_ptr[u + 1]):
                w = u_nbr[b]
                if v_state[w] == 0:
                    v_state[w] = 1
                    unseen -= 1
                    v_disc[w] = k
                    v_sib[w] = x
                    v_parent[w] = u
                    buf[nb] = w
                    nb += 1
                    cnt += 1
            m_seq[nr] = u
            n_sizes[nr] = cnt
            nr += 1
        X[k - 1] = x
        R[k] = R[k - 1] + x
        S[k] = S[k - 1] + nb - 1
        # insertion sort: blocks are tiny at criticality
        for j in range(1, nb):
            w = buf[j]
            i = j - 1
            while i >= 0 and buf[i] > w:
                buf[i + 1] = buf[i]
                i -= 1
            buf[i + 1] = w
        for j in range(nb - 1, -1, -1):
            stack[top] = buf[j]
            v_pos[buf[j]] = top
            top += 1
        closes[k] = top == 0
    return (order, X, S, R, m_seq[:nr].copy(), n_sizes[:nr].copy(), active_before, v_left, u_left,
            comp_index, closes, v_parent, v_disc, v_sib, v_step, v_pos, u_step, u_sib)


@njit(cache=True, nogil=True)
def _height_kernel(S):
    L = S.shape[0]
    H = np.zeros(L, np.int64)
    vals = np.empty(L, np.int64)
    top = 0
    for k in range(1, L):
        s = S[k - 1]
        while top > 0 and vals[top - 1] > s:
            top -= 1
        vals[top] = s
        top += 1
        H[k] = top
    return H


@njit(cache=True, nogil=True)
def _depth_kernel(order, v_parent, u_step):
    depth = np.zeros(order.shape[0], np.int64)
    pos = np.full(v_parent.shape[0], -1, np.int64)
    for k in range(order.shape[0]):
        v = order[k]
        pos[v] = k
        u = v_parent[v]
        if u >= 0:
            depth[k] = depth[pos[order[u_step[u] - 1]]] + 2
    return depth


def height_from_walk(S) -> np.ndarray:
    """H_k = #{0 <= j <= k-1 : S_j = min(S_j..S_{k-1})}, for k = 0..len(S)-1.

    ``S`` includes S_0.  The count is the size of a stack of weak suffix
    minima, so the whole sequence costs O(len(S)).
    """
    return _height_kernel(np.ascontiguousarray(S, dtype=np.int64))


def height_literal(S) -> np.ndarray:
    """Quadratic evaluation of the height functional, kept as a reference."""
    S = np.asarray(S, dtype=np.int64)
    H = np.zeros(S.size, dtype=np.int64)
    for k in range(1, S.size):
        suffix_min = np.minimum.accumulate(S[:k][::-1])[::-1]
        H[k] = int(np.count_nonzero(S[:k] == suffix_min))
    return H


def active_counts(S) -> np.ndarray:
    """#A_k = S_k - min_{j<=k} S_j."""
    S = np.asarray(S, dtype=np.int64)
    return S - np.minimum.accumulate(S)


@dataclass(frozen=True)
class Component:
    rank: int
    v_size: int
    u_size: int
    first_step: int
    last_step: int

    @property
    def steps(self) -> range:
        return range(self.first_step, self.last_step + 1)


@dataclass(frozen=True, eq=False)
class ExplorationTrace:
    """Output of one exploration.

    Step-indexed arrays use index k for step k (index 0 is the empty start)
    unless noted.  ``order``, ``X`` are 0-based lists of v_1, v_2, ... and
    #M_1, #M_2, ...  Community-side arrays are indexed by the compact
    community index of the explored graph.
    """

    n: int
    m: int
    order: np.ndarray
    X: np.ndarray
    S: np.ndarray
    R: np.ndarray
    H: np.ndarray
    community_seq: np.ndarray  # u_{1,1}, ..., u_{1,X_1}, u_{2,1}, ... (labels)
    n_sizes: np.ndarray  # #N_{k,i} aligned with community_seq
    active_before: np.ndarray  # measured #A_{k-1} at step k
    v_left: np.ndarray  # measured #V_{k-1} at step k
    u_left: np.ndarray  # measured #U_{k-1} at step k
    comp_index: np.ndarray  # measured component counter at step k
    closes: np.ndarray  # measured: active list empty after step k
    v_parent: np.ndarray  # community (label) that discovered each individual, -1 for roots
    v_disc_step: np.ndarray
    v_sibling: np.ndarray  # i such that the individual lies in N_{k,i}
    v_step: np.ndarray  # k such that the individual is v_k (0: unexplored)
    v_stack_pos: np.ndarray  # slot in the active stack, counted from the bottom
    u_labels: np.ndarray
    u_step: np.ndarray  # compact index -> k with u in M_k (0: never reached)
    u_sibling: np.ndarray
    root_rule: RootRule = field(default_factory=RootRule.smallest)

    @property
    def steps(self) -> int:
        return int(self.order.size)

    @property
    def complete(self) -> bool:
        return self.steps == self.n

    @cached_property
    def step_ptr(self) -> np.ndarray:
        ptr = np.zeros(self.steps + 1, dtype=np.int64)
        np.cumsum(self.X, out=ptr[1:])
        return ptr

    @property
    def Nsizes(self) -> list[tuple[int, ...]]:
        ptr = self.step_ptr
        sizes = self.n_sizes.tolist()
        return [tuple(sizes[ptr[k] : ptr[k + 1]]) for k in range(self.steps)]

    @property
    def N_counts(self) -> np.ndarray:
        """#N_k for k = 1..steps."""
        return np.diff(self.S) + 1

    @property
    def unreached_communities(self) -> int:
        """Communities never revealed; these are isolated vertices of the forest."""
        return self.m - int(self.R[-1])

    def compact_u(self, u: int) -> int:
        i = int(np.searchsorted(self.u_labels, u))
        if i == self.u_labels.size or self.u_labels[i] != u:
            return -1
        return i

    def forest_edges(self) -> np.ndarray:
        """(parent, child) pairs; individuals keep their label, community u is n + u."""
        cu = np.flatnonzero(self.u_step > 0)
        up = np.stack([self.order[self.u_step[cu] - 1], self.n + self.u_labels[cu]], axis=1)
        cv = np.flatnonzero(self.v_parent >= 0)
        vp = np.stack([self.n + self.v_parent[cv], cv], axis=1)
        return np.concatenate([up, vp]).astype(np.int64)

    @cached_property
    def comp_ranges(self) -> tuple[np.ndarray, np.ndarray]:
        """First and last step of every fully explored component, in exploration order."""
        ends = np.flatnonzero(self.closes[1:]) + 1
        starts = np.concatenate([[1], ends[:-1] + 1]).astype(np.int64)[: ends.size]
        return starts, ends

    @property
    def comp_bounds(self) -> list[tuple[int, int]]:
        starts, ends = self.comp_ranges
        return list(zip(starts.tolist(), ends.tolist()))

    @cached_property
    def depths(self) -> np.ndarray:
        """Forest height of v_k, for k = 1..steps (index k-1)."""
        return _depth_kernel(self.order, self.v_parent_compact, self.u_step)

    @cached_property
    def v_parent_compact(self) -> np.ndarray:
        out = np.full(self.v_parent.size, -1, dtype=np.int64)
        has = self.v_parent >= 0
        out[has] = np.searchsorted(self.u_labels, self.v_parent[has])
        return out

    def members(self, comp: Component) -> np.ndarray:
        return self.order[comp.first_step - 1 : comp.last_step]

    def write_csv(self, path: str | Path) -> None:
        dS = np.diff(self.S)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "X_k", "dS_k", "S_k", "H_k", "comp_id"])
            for k in range(1, self.steps + 1):
                w.writerow([k, int(self.X[k - 1]), int(dS[k - 1]), int(self.S[k]), int(self.H[k]),
                            int(self.comp_index[k])])


def explore(B: BipartiteGraph, rule: RootRule | None = None, max_steps: int | None = None) -> ExplorationTrace:
    """Run the exploration on ``B``; stop early after ``max_steps`` steps if given."""
    rule = rule or RootRule.smallest()
    limit = B.n if max_steps is None else max(0, min(int(max_steps), B.n))
    out = _explore_kernel(B.n, B.u_labels.size, B.m, B.v_ptr, B.v_nbr_compact, B.u_ptr, B.u_nbr,
                          rule.root_order(B.n), limit)
    (order, X, S, R, m_seq, n_sizes, active_before, v_left, u_left, comp_index, closes,
     v_parent, v_disc, v_sib, v_step, v_pos, u_step, u_sib) = out
    v_parent_label = np.full(B.n, -1, dtype=np.int64)
    v_parent_label[v_parent >= 0] = B.u_labels[v_parent[v_parent >= 0]]
    return ExplorationTrace(
        n=B.n, m=B.m, order=order, X=X, S=S, R=R, H=height_from_walk(S),
        community_seq=B.u_labels[m_seq] if m_seq.size else m_seq,
        n_sizes=n_sizes, active_before=active_before, v_left=v_left, u_left=u_left,
        comp_index=comp_index, closes=closes, v_parent=v_parent_label,
        v_disc_step=v_disc, v_sibling=v_sib, v_step=v_step, v_stack_pos=v_pos,
        u_labels=B.u_labels, u_step=u_step, u_sibling=u_sib, root_rule=rule,
    )


def forest_height(trace: ExplorationTrace, k: int) -> int:
    if not 1 <= k <= trace.steps:
        raise IndexError(f"step {k} out of range 1..{trace.steps}")
    return int(trace.depths[k - 1])


def components(trace: ExplorationTrace, top: int | None = None) -> list[Component]:
    """Fully explored components ranked by individual count (ties: explored first)."""
    first, last = trace.comp_ranges
    v_size = last - first + 1
    u_size = trace.R[last] - trace.R[first - 1]
    order = np.lexsort((first, -v_size))[:top]
    return [Component(r + 1, int(v_size[i]), int(u_size[i]), int(first[i]), int(last[i]))
            for r, i in enumerate(order)]


def component_sizes(trace: ExplorationTrace) -> np.ndarray:
    """Individual counts of the fully explored components, largest first."""
    first, last = trace.comp_ranges
    return np.sort(last - first + 1)[::-1]


def audit_trace(trace: ExplorationTrace) -> dict[str, int]:
    """Count violations of the step identities of the exploration.

    Measured quantities (active list size, unexplored counts, component
    boundaries, forest heights) are compared with their walk formulas.
    """
    K = trace.steps
    S, R = trace.S, trace.R
    n, m = trace.n, trace.m
    k = np.arange(1, K + 1)
    run_min = np.minimum.accumulate(S)
    A = active_counts(S)
    # measured #A_k is the stack size seen at step k+1; the list is empty after step n
    prev_min = run_min[:-1]  # min_{j<=k-1} S_j
    out = {
        "VA": int(np.count_nonzero(trace.v_left[1:] + trace.active_before[1:] + k != n)),
        "cA_i": int(np.count_nonzero(A[1:K] != trace.active_before[2:])) + int(trace.complete and A[K] != 0),
        "cA_ii": int(np.count_nonzero((S[1:] == prev_min - 1) != trace.closes[1:])),
        "cA_iii": int(np.count_nonzero(-prev_min + 1 != trace.comp_index[1:])),
        "UkVk_U": int(np.count_nonzero(trace.u_left[1:] != m - R[:-1])),
        "UkVk_V": int(np.count_nonzero(trace.v_left[1:] != n - k - (S[:-1] - prev_min))),
        "ht": int(np.count_nonzero(2 * trace.H[1:] - 2 != trace.depths)),
        "dR": int(np.count_nonzero(np.diff(R) != trace.X)),
    }
    return out
