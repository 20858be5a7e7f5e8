"""Continuum limit objects on a uniform time grid.

The limit walk is

    theta = inf:  S_t = W_t + 2 lam t - t^2 / 2
    theta < inf:  R_t = theta^(1/4) W*_t + theta^(1/2) lam t - t^2 / 2
                  S_t = W_t + theta^(-1/4) W*_t + 2 lam t - (1 + theta^(-1/2)) t^2 / 2

with independent Brownian motions W, W*.  Its height process is a constant
multiple of S minus its running minimum, excursions of that reflected path
encode the limit components, and unit-rate Poisson points under it give the
shortcuts that turn each excursion tree into a graph.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from .regimes import kappa_theta
from .sampler import make_rng, replicate_seed


@dataclass(frozen=True)
class LimitParams:
    lam: float = 0.0
    theta: float | None = None  # None stands for theta = infinity

    @property
    def height_factor(self) -> float:
        if self.theta is None:
            return 2.0
        return 2.0 / (1.0 + self.theta**-0.5)

    @property
    def curvature(self) -> float:
        return 1.0 if self.theta is None else 1.0 + self.theta**-0.5


def limit_walk_moments(params: LimitParams, t: float) -> dict[str, float]:
    """Closed-form Gaussian moments of the limit walk at time t."""
    lam, th = params.lam, params.theta
    out = {
        "mean_S": 2 * lam * t - 0.5 * params.curvature * t * t,
        "var_S": params.curvature * t,
    }
    if th is None:
        out.update(mean_R=t, var_R=0.0, cov_RS=0.0)
    else:
        out.update(mean_R=math.sqrt(th) * lam * t - 0.5 * t * t, var_R=math.sqrt(th) * t, cov_RS=t)
    return out


@dataclass(frozen=True, eq=False)
class LimitPath:
    t: np.ndarray
    S: np.ndarray
    R: np.ndarray | None
    params: LimitParams
    dt: float
    seed: int | None = None

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @cached_property
    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.S)

    @cached_property
    def reflected(self) -> np.ndarray:
        """S minus its running minimum (zero exactly where a new minimum is set)."""
        return self.S - self.running_min

    @cached_property
    def H(self) -> np.ndarray:
        return height_of_path(self)

    @classmethod
    def from_walk(cls, S, dt: float, params: LimitParams | None = None, R=None) -> "LimitPath":
        S = np.asarray(S, dtype=np.float64)
        return cls(np.arange(S.size) * dt, S, None if R is None else np.asarray(R, dtype=np.float64),
                   params or LimitParams(), float(dt))

    def write_csv(self, path: str | Path) -> None:
        R = self.R if self.R is not None else np.full(self.S.size, np.nan)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["t", "S", "R", "H"])
            for row in zip(self.t.tolist(), self.S.tolist(), R.tolist(), self.H.tolist()):
                out.writerow([f"{v:.10g}" for v in row])


def simulate_limit_path(params: LimitParams, dt: float, T: float, seed: int,
                        zero_noise: bool = False) -> LimitPath:
    if not (dt > 0 and T > 0):
        raise ValueError("dt and T must be positive")
    steps = int(round(T / dt))
    t = np.arange(steps + 1) * dt
    rng = make_rng(seed)
    if zero_noise:
        W = np.zeros(steps + 1)
        Wstar = np.zeros(steps + 1)
    else:
        W = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, math.sqrt(dt), steps))])
        Wstar = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, math.sqrt(dt), steps))])
    lam, th = params.lam, params.theta
    if th is None:
        S = W + 2 * lam * t - 0.5 * t * t
        R = None
    else:
        S = W + th**-0.25 * Wstar + 2 * lam * t - 0.5 * params.curvature * t * t
        R = th**0.25 * Wstar + math.sqrt(th) * lam * t - 0.5 * t * t
    return LimitPath(t, S, R, params, float(dt), seed)


def height_of_path(path: LimitPath) -> np.ndarray:
    return path.params.height_factor * path.reflected


@dataclass(frozen=True, eq=False)
class ExcursionList:
    """Excursions above the running minimum, longest first.

    ``start``/``end`` are grid indices where the reflected path is zero, so
    the excursion occupies the open grid interval between them.
    """

    start: np.ndarray
    end: np.ndarray
    dt: float
    complete: np.ndarray

    @property
    def g(self) -> np.ndarray:
        return self.start * self.dt

    @property
    def d(self) -> np.ndarray:
        return self.end * self.dt

    @property
    def lengths(self) -> np.ndarray:
        return (self.end - self.start) * self.dt

    def __len__(self) -> int:
        return int(self.start.size)

    def zeta(self, k: int) -> float:
        """k-th longest length (1-based), 0 when there are fewer excursions."""
        return float(self.lengths[k - 1]) if k <= len(self) else 0.0


def excursions(path: LimitPath, horizon_policy: str = "drop") -> ExcursionList:
    """Maximal grid runs where S is above its running minimum.

    An excursion still open at the horizon is dropped (``"drop"``) or kept
    with the horizon as its end and ``complete`` False (``"truncate"``).
    """
    if horizon_policy not in ("drop", "truncate"):
        raise ValueError("horizon_policy must be 'drop' or 'truncate'")
    pos = path.reflected > 0
    edges = np.diff(pos.astype(np.int8))
    starts = np.flatnonzero(edges == 1)  # last zero before a run
    ends = np.flatnonzero(edges == -1) + 1  # first zero after a run
    complete = np.ones(starts.size, dtype=bool)
    if starts.size > ends.size:
        if horizon_policy == "drop":
            starts = starts[:-1]
            complete = complete[:-1]
        else:
            ends = np.append(ends, pos.size - 1)
            complete[-1] = False
    order = np.lexsort((starts, -(ends - starts)))
    return ExcursionList(starts[order], ends[order], path.dt, complete[order])


def sample_poisson_surplus(path: LimitPath, exc: ExcursionList, k: int, seed: int) -> np.ndarray:
    """Unit-rate Poisson points under the piecewise-linear reflected path on excursion k.

    Points are proposed uniformly in one bounding rectangle per grid cell and
    kept when they fall under the linear interpolant (thinning), so the
    expected count is the trapezoid area.  Returns an array of (x, y).
    """
    a, b = int(exc.start[k - 1]), int(exc.end[k - 1])
    h = path.reflected[a : b + 1]
    left, right = h[:-1], h[1:]
    top = np.maximum(left, right)
    rng = make_rng(seed, k)
    counts = rng.poisson(top * path.dt)
    cell = np.repeat(np.arange(counts.size), counts)
    u = rng.random(cell.size)
    y = rng.random(cell.size) * top[cell]
    curve = left[cell] + u * (right[cell] - left[cell])
    keep = y <= curve
    x = (a + cell[keep] + u[keep]) * path.dt
    return np.stack([x, y[keep]], axis=1)


def trapezoid_area(path: LimitPath, exc: ExcursionList, k: int) -> float:
    a, b = int(exc.start[k - 1]), int(exc.end[k - 1])
    h = path.reflected[a : b + 1]
    return float(np.sum(h[:-1] + h[1:]) * path.dt / 2)


@dataclass(frozen=True, eq=False)
class ShortcutSet:
    pairs: np.ndarray  # (q, 2) excursion-local times (s, t), s <= t

    def __len__(self) -> int:
        return int(self.pairs.shape[0])


def shortcuts_from_atoms(path: LimitPath, exc: ExcursionList, k: int, atoms: np.ndarray) -> ShortcutSet:
    """Turn Poisson atoms (x, y) into shortcut pairs (s, t).

    t is x in excursion-local time; s is the last grid time u <= x at which
    S_u <= S_x - y, i.e. where the walk last sat y below its value at x.
    """
    a, b = int(exc.start[k - 1]), int(exc.end[k - 1])
    atoms = np.asarray(atoms, dtype=np.float64).reshape(-1, 2)
    pairs = np.zeros((atoms.shape[0], 2))
    for i, (x, y) in enumerate(atoms):
        ix = min(max(int(round(x / path.dt)), a), b)
        level = path.S[ix] - y
        hits = np.flatnonzero(path.S[a : ix + 1] <= level)
        j = a + int(hits[-1]) if hits.size else a
        pairs[i] = ((j - a) * path.dt, (ix - a) * path.dt)
    return ShortcutSet(pairs)


@dataclass(frozen=True, eq=False)
class MetricGraphSpec:
    h: np.ndarray  # excursion on the grid 0, res, ..., zeta
    shortcuts: ShortcutSet
    resolution: float

    def __post_init__(self):
        if np.any(self.h < 0):
            raise ValueError("excursion function must be nonnegative")

    @property
    def zeta(self) -> float:
        return (self.h.size - 1) * self.resolution

    @property
    def q(self) -> int:
        return len(self.shortcuts)

    def index(self, s: float) -> int:
        return min(max(int(round(s / self.resolution)), 0), self.h.size - 1)

    @cached_property
    def _nodes(self) -> np.ndarray:
        return np.array([self.index(s) for s in self.shortcuts.pairs.ravel()], dtype=np.int64)

    @cached_property
    def _closure(self) -> np.ndarray:
        """Shortest distances between shortcut endpoints after gluing each pair."""
        nodes = self._nodes
        D = np.array([[self._tree(i, j) for j in nodes] for i in nodes]).reshape(nodes.size, nodes.size)
        for p in range(self.q):
            D[2 * p, 2 * p + 1] = D[2 * p + 1, 2 * p] = 0.0
        for mid in range(nodes.size):
            D = np.minimum(D, D[:, mid, None] + D[None, mid, :])
        return D

    def _tree(self, i: int, j: int) -> float:
        lo, hi = (i, j) if i <= j else (j, i)
        return float(self.h[i] + self.h[j] - 2 * self.h[lo : hi + 1].min())


def metric_spec(path: LimitPath, exc: ExcursionList, k: int, shortcuts: ShortcutSet | None = None) -> MetricGraphSpec:
    a, b = int(exc.start[k - 1]), int(exc.end[k - 1])
    return MetricGraphSpec(path.H[a : b + 1].copy(), shortcuts or ShortcutSet(np.zeros((0, 2))), path.dt)


def tree_distance(spec: MetricGraphSpec, a: float, b: float) -> float:
    return spec._tree(spec.index(a), spec.index(b))


def graph_distance(spec: MetricGraphSpec, a: float, b: float) -> float:
    """Tree distance with every shortcut pair glued to a single point."""
    ia, ib = spec.index(a), spec.index(b)
    direct = spec._tree(ia, ib)
    if spec.q == 0:
        return direct
    nodes = spec._nodes
    da = np.array([spec._tree(ia, j) for j in nodes])
    db = np.array([spec._tree(j, ib) for j in nodes])
    via = (da[:, None] + spec._closure + db[None, :]).min()
    return float(min(direct, via))


def coarsen(spec: MetricGraphSpec, factor: int) -> MetricGraphSpec:
    """Same excursion seen on a grid ``factor`` times coarser."""
    h = spec.h[::factor]
    if (spec.h.size - 1) % factor:
        h = np.append(h, spec.h[-1])
    return MetricGraphSpec(h.copy(), spec.shortcuts, spec.resolution * factor)


def _modulus(values: np.ndarray, width: int) -> float:
    if values.size < 2:
        return 0.0
    width = min(max(width, 1), values.size - 1)
    win = sliding_window_view(values, width + 1)
    return float((win.max(axis=1) - win.min(axis=1)).max())


def ghp_upper_bound(spec1: MetricGraphSpec, spec2: MetricGraphSpec, delta: float) -> float:
    """6 (q + 1) (sup|h1 - h2| + modulus_delta(h1)) + |zeta1 - zeta2| on zero-extended excursions.

    Returns ``math.inf`` when the shortcut counts differ.
    """
    if spec1.q != spec2.q:
        return math.inf
    if spec1.q and np.any(np.abs(spec1.shortcuts.pairs - spec2.shortcuts.pairs) > delta + 1e-12):
        raise ValueError("shortcut pairs are not matched within delta")
    span = max(spec1.zeta, spec2.zeta)
    g1 = np.arange(spec1.h.size) * spec1.resolution
    g2 = np.arange(spec2.h.size) * spec2.resolution
    grid = np.union1d(g1, g2)
    e1 = np.interp(grid, g1, spec1.h, right=0.0)
    e2 = np.interp(grid, g2, spec2.h, right=0.0)
    sup = float(np.abs(e1 - e2).max())
    # modulus of h1 on its own grid, extended by zeros past zeta1
    pad = int(math.ceil((span - spec1.zeta) / spec1.resolution)) + int(delta / spec1.resolution) + 1
    h1 = np.concatenate([spec1.h, np.zeros(pad)])
    omega = _modulus(h1, int(math.floor(delta / spec1.resolution + 1e-9)))
    return 6 * (spec1.q + 1) * (sup + omega) + abs(spec1.zeta - spec2.zeta)


@dataclass
class KappaReport:
    theta: float
    kappa: float
    times: np.ndarray
    drift_gap: float  # max |deterministic parts| difference (W = 0 on both sides)
    variance_gap: float  # max |closed-form variance| difference
    mean_gap: float  # max |MC mean| difference
    var_gap: float  # max |MC variance| difference
    ks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    replicates: int = 0

    @property
    def max_discrepancy(self) -> float:
        return float(max(self.mean_gap, self.var_gap, self.ks.max() if self.ks.size else 0.0))


def kappa_scaling_check(theta: float, dt: float, T: float, replicates: int, seed: int,
                        lam: float = 0.0, times=(0.25, 0.5, 1.0)) -> KappaReport:
    """Compare S^{lam,theta}_t with kappa * S^{lam_theta,inf}_{kappa t}."""
    kappa, to_light = kappa_theta(theta)
    lam_inf = to_light(lam)
    moderate = LimitParams(lam, theta)
    light = LimitParams(lam_inf, None)
    times = np.asarray([s for s in times if s <= T], dtype=np.float64)
    idx = np.rint(times / dt).astype(int)

    # drift-only: the inf path on the stretched grid kappa*dt lines up index by index
    p0 = simulate_limit_path(moderate, dt, T, seed, zero_noise=True)
    q0 = simulate_limit_path(light, kappa * dt, kappa * T, seed, zero_noise=True)
    n0 = min(p0.S.size, q0.S.size)
    drift_gap = float(np.abs(p0.S[:n0] - kappa * q0.S[:n0]).max())
    variance_gap = float(max(abs(limit_walk_moments(moderate, s)["var_S"]
                                 - kappa**2 * limit_walk_moments(light, kappa * s)["var_S"]) for s in times))

    a = np.empty((replicates, times.size))
    b = np.empty((replicates, times.size))
    for r in range(replicates):
        pa = simulate_limit_path(moderate, dt, float(times.max()), replicate_seed(seed, 2 * r))
        pb = simulate_limit_path(light, kappa * dt, kappa * float(times.max()), replicate_seed(seed, 2 * r + 1))
        a[r] = pa.S[idx]
        b[r] = kappa * pb.S[idx]
    ks = np.array([stats.ks_2samp(a[:, j], b[:, j]).statistic for j in range(times.size)])
    return KappaReport(theta, kappa, times, drift_gap, variance_gap,
                       float(np.abs(a.mean(0) - b.mean(0)).max()),
                       float(np.abs(a.var(0, ddof=1) - b.var(0, ddof=1)).max()), ks, replicates)


def write_excursion_csv(exc: ExcursionList, shortcut_counts, path: str | Path) -> None:
    counts = list(shortcut_counts)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["k", "g", "d", "zeta", "n_shortcuts"])
        for k in range(len(exc)):
            out.writerow([k + 1, f"{exc.g[k]:.10g}", f"{exc.d[k]:.10g}", f"{exc.lengths[k]:.10g}",
                          counts[k] if k < len(counts) else 0])
