"""End-to-end experiments comparing finite graphs with their scaling limits.

Each target samples independent replicates (replicate ``r`` uses
``replicate_seed(seed, r)``), reduces them to rescaled statistics, and
returns a list of :class:`StatReport`.  Replicates run on a thread pool; the
numba kernels release the GIL so this gives real parallelism.  Results are
collected in replicate order, so a rerun with the same seed is identical
regardless of the thread count.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .continuum import LimitParams, excursions, limit_walk_moments, simulate_limit_path
from .exploration import RootRule, components, explore
from .regimes import Regime, RegimeConfig, build_config, c_theta, clustering_limit, scaling_set
from .sampler import replicate_seed, sample_bipartite
from .surplus_triangles import (
    classify_surplus,
    clustering_coefficient_mc,
    point_measure,
    swapped_triangle_process,
    triangle_process,
)
from .validation import StatReport, cov_se, ks_distance, ks_tolerance, mean_se, var_se


class Target(str, enum.Enum):
    WALK_LAW = "WalkLaw"
    COMPONENT_SIZES = "ComponentSizes"
    TRIANGLE_MODERATE = "TriangleModerate"
    TRIANGLE_LIGHT = "TriangleLight"
    TRIANGLE_HEAVY = "TriangleHeavy"
    SURPLUS_MEASURE = "SurplusMeasure"
    CLUSTERING_COEFFICIENT = "ClusteringCoefficient"
    TRIANGLE_CRIT_LIGHT = "TriangleCritLight"


_ALLOWED = {
    Target.TRIANGLE_MODERATE: {Regime.MODERATE},
    Target.TRIANGLE_LIGHT: {Regime.LIGHT},
    Target.TRIANGLE_CRIT_LIGHT: {Regime.LIGHT},
    Target.TRIANGLE_HEAVY: {Regime.HEAVY},
    Target.SURPLUS_MEASURE: {Regime.LIGHT, Regime.MODERATE},
}

DEFAULT_TOLERANCES = {
    "walk_n_se": 4.0,  # mean / variance / covariance within this many standard errors
    "ks_floor": 0.12,  # KS threshold never drops below this
    "triangle_moderate_rel": 0.05,
    "triangle_light_rel": 0.10,
    "triangle_heavy_rel": 0.15,
    "crit_light_n_se": 3.0,
    "clustering_n_se": 3.0,
    "clustering_min_events": 10_000,
    "surplus_n_se": 4.0,
    "surplus_box_height": 2.0,
    "trend_fraction": 2 / 3,
}

# continuum seeds live in a separate key range from the graph replicates
_CONTINUUM_KEY = 1 << 32
_SECOND_N_KEY = 1 << 33


@dataclass(frozen=True)
class ExperimentPlan:
    config: RegimeConfig
    replicates: int
    horizon_t: float
    seed: int
    targets: tuple[Target, ...]
    output_dir: Path | None = None
    dt: float = 1e-3
    tolerances: dict = field(default_factory=dict)
    name: str = "campaign"
    figures: bool = True
    continuum_replicates: int | None = None
    continuum_T: float = 15.0
    second_n: int | None = None
    trend_groups: int = 3
    trend_horizon_t: float = 3.0
    threads: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(Target(t) for t in self.targets))
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.horizon_t > 0:
            raise ValueError("horizon_t must be positive")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        for t in self.targets:
            if t in _ALLOWED and self.config.regime not in _ALLOWED[t]:
                raise ValueError(f"target {t.value} is not available in the {self.config.regime.value} regime")

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    @property
    def n_continuum(self) -> int:
        return self.continuum_replicates or self.replicates

    @property
    def workers(self) -> int:
        env = os.environ.get("RIG_THREADS")
        if env:
            return max(1, int(env))
        return max(1, self.threads or os.cpu_count() or 1)


@dataclass
class TargetOutcome:
    reports: list[StatReport]
    samples: dict[str, np.ndarray]  # raw per-replicate columns (equal length)
    figure: dict | None = None  # what to draw, see plotting.target_figure

    @property
    def passed(self) -> bool:
        return bool(self.reports) and all(r.passed for r in self.reports)


@dataclass
class CampaignResult:
    name: str
    reports: dict[str, list[StatReport]]
    csv_paths: dict[str, Path] = field(default_factory=dict)
    jsonl_paths: dict[str, Path] = field(default_factory=dict)
    figure_paths: dict[str, Path] = field(default_factory=dict)
    wall_clock: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    errors: dict[str, str] = field(default_factory=dict)

    def target_passed(self, target: str) -> bool:
        reps = self.reports.get(target, [])
        return bool(reps) and all(r.passed for r in reps)

    @property
    def passed(self) -> bool:
        return all(self.target_passed(t) for t in self.reports)


def _pmap(fn: Callable, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def limit_params(config: RegimeConfig) -> LimitParams:
    """Parameters of the limit walk seen by the explored side."""
    if config.regime is Regime.MODERATE:
        return LimitParams(config.lam, config.theta)
    return LimitParams(config.lam, None)


def explore_replicate(config: RegimeConfig, seed: int, r: int, max_steps: int | None = None):
    """Sample replicate ``r`` and explore it (from the community side when heavy)."""
    rs = replicate_seed(seed, r)
    B = sample_bipartite(config, rs)
    if config.swapped:
        B = B.transpose()
    return B, explore(B, RootRule.uniform(rs), max_steps)


def _continuum_paths(plan: ExperimentPlan, T: float) -> list:
    params = limit_params(plan.config)
    seeds = [replicate_seed(plan.seed, _CONTINUUM_KEY + r) for r in range(plan.n_continuum)]
    return _pmap(lambda s: simulate_limit_path(params, plan.dt, T, s), seeds, plan.workers)


def _grid_times(horizon: float) -> list[float]:
    times = [t for t in (0.25, 0.5, 1.0) if t <= horizon]
    return times or [horizon]


def run_walk_law(plan: ExperimentPlan) -> TargetOutcome:
    """Rescaled (R, S) at a few times against the Gaussian limit moments and simulated marginals."""
    cfg = plan.config
    sc = scaling_set(cfg)
    if plan.replicates < 2:
        raise ValueError("walk law needs at least two replicates")
    times = _grid_times(plan.horizon_t)
    ks_steps = [int(math.floor(t * sc.time_scale)) for t in times]
    eff = [k / sc.time_scale for k in ks_steps]  # grid time actually reached
    last = max(ks_steps)

    def one(r):
        _, tr = explore_replicate(cfg, plan.seed, r, last)
        if tr.steps < last:
            raise ValueError("graph exhausted before the horizon; increase n")
        k = np.asarray(ks_steps)
        return tr.S[k], tr.R[k]

    rows = _pmap(one, range(plan.replicates), plan.workers)
    k = np.asarray(ks_steps, dtype=np.float64)
    S = np.stack([r[0] for r in rows]).astype(np.float64) * sc.walk_scale
    R = (np.stack([r[1] for r in rows]) - sc.community_walk_centering * k) * sc.community_walk_scale

    params = limit_params(cfg)
    paths = _continuum_paths(plan, max(eff) + 2 * plan.dt)
    nse = plan.tol("walk_n_se")
    reports = []
    for j, (t, te) in enumerate(zip(times, eff)):
        mom = limit_walk_moments(params, te)
        obs, se = mean_se(S[:, j])
        reports.append(StatReport.compare(f"S_mean@{t}", obs, mom["mean_S"], nse * se, plan.replicates, se))
        obs, se = var_se(S[:, j])
        reports.append(StatReport.compare(f"S_var@{t}", obs, mom["var_S"], nse * se, plan.replicates, se))
        obs, se = mean_se(R[:, j])
        reports.append(StatReport.compare(f"R_mean@{t}", obs, mom["mean_R"], nse * se, plan.replicates, se))
        if params.theta is not None:
            obs, se = var_se(R[:, j])
            reports.append(StatReport.compare(f"R_var@{t}", obs, mom["var_R"], nse * se, plan.replicates, se))
            obs, se = cov_se(R[:, j], S[:, j])
            reports.append(StatReport.compare(f"RS_cov@{t}", obs, mom["cov_RS"], nse * se, plan.replicates, se))
        idx = int(round(te / plan.dt))
        lim = np.array([p.S[idx] for p in paths])
        tol = ks_tolerance(plan.replicates, lim.size, plan.tol("ks_floor"))
        reports.append(StatReport.upper(f"S_ks@{t}", ks_distance(S[:, j], lim), tol, plan.replicates,
                                        continuum_paths=lim.size))
    samples = {f"S@{t}": S[:, j] for j, t in enumerate(times)}
    samples.update({f"R@{t}": R[:, j] for j, t in enumerate(times)})
    j = len(times) - 1
    figure = {"kind": "ecdf", "title": f"rescaled S at t={times[j]}",
              "series": {"graph": S[:, j], "limit": np.array([p.S[int(round(eff[j] / plan.dt))] for p in paths])}}
    return TargetOutcome(reports, samples, figure)


def _continuum_zetas(plan: ExperimentPlan, top: int = 3) -> np.ndarray:
    paths = _continuum_paths(plan, plan.continuum_T)
    out = np.zeros((len(paths), top))
    for i, p in enumerate(paths):
        lens = excursions(p, "drop").lengths[:top]
        out[i, : lens.size] = lens
    return out


def _largest_components(cfg: RegimeConfig, trace, top: int = 3) -> tuple[np.ndarray, dict]:
    """Rescaled sizes of the ``top`` largest complete components.

    Heavy runs rank by community count (the explored side) and report the
    individual count on the mass scale; whether the two rankings pick the
    same largest component is returned alongside.
    """
    sc = scaling_set(cfg)
    comps = components(trace, top=top)
    z = np.zeros(top)
    info = {"agree": True, "ranked": [c.v_size for c in comps]}
    if cfg.swapped:
        for i, c in enumerate(comps):
            z[i] = c.u_size * sc.mass_scale
        first, last = trace.comp_ranges
        if first.size:
            by_ind = np.argmax(trace.R[last] - trace.R[first - 1])
            info["agree"] = bool(comps and first[by_ind] == comps[0].first_step)
    else:
        for i, c in enumerate(comps):
            z[i] = c.v_size * sc.mass_scale
    return z, info


def run_component_sizes(plan: ExperimentPlan) -> TargetOutcome:
    cfg = plan.config
    sc = scaling_set(cfg)
    horizon = int(math.ceil(plan.continuum_T * sc.time_scale))

    def one(r):
        _, tr = explore_replicate(cfg, plan.seed, r, horizon)
        return _largest_components(cfg, tr)

    rows = _pmap(one, range(plan.replicates), plan.workers)
    disc = np.stack([r[0] for r in rows])
    agree = float(np.mean([r[1]["agree"] for r in rows]))
    ordered = all(all(a >= b for a, b in zip(r[1]["ranked"], r[1]["ranked"][1:])) for r in rows)
    lim = _continuum_zetas(plan)
    tol = ks_tolerance(plan.replicates, lim.shape[0], plan.tol("ks_floor"))
    reports = []
    for k in range(3):
        d = ks_distance(disc[:, k], lim[:, k])
        reports.append(StatReport.upper(f"zeta{k + 1}_ks", d, tol, plan.replicates,
                                        graph_mean=float(disc[:, k].mean()), limit_mean=float(lim[:, k].mean()),
                                        continuum_paths=lim.shape[0], horizon_T=plan.continuum_T))
    reports.append(StatReport("zeta_ordered", float(ordered), 1.0, 0.0, ordered, plan.replicates))
    if cfg.swapped:
        reports[0].details["ranking_agreement"] = agree
    samples = {"zeta1": disc[:, 0], "zeta2": disc[:, 1], "zeta3": disc[:, 2]}
    figure = {"kind": "ecdf", "title": "rescaled largest component",
              "series": {"graph": disc[:, 0], "limit": lim[:, 0]}}
    return TargetOutcome(reports, samples, figure)


def _triangle_constant(target: Target, cfg: RegimeConfig) -> float:
    if target is Target.TRIANGLE_MODERATE:
        return c_theta(cfg.theta)
    if target is Target.TRIANGLE_LIGHT or target is Target.TRIANGLE_CRIT_LIGHT:
        return 0.5
    return 1.0 / 6.0


def _triangle_samples(cfg: RegimeConfig, plan: ExperimentPlan, t: float, full: bool):
    """Per replicate: rescaled T at time t, and (if ``full``) rescaled zeta_1 and L_1."""
    sc = scaling_set(cfg)
    k = int(math.floor(t * sc.time_scale))
    horizon = max(k, int(math.ceil(plan.continuum_T * sc.time_scale))) if full else k

    def one(r):
        _, tr = explore_replicate(cfg, plan.seed, r, horizon)
        if tr.steps < k:
            raise ValueError("graph exhausted before the horizon; increase n")
        T = (swapped_triangle_process(tr) if cfg.swapped else triangle_process(tr)).T
        if not full:
            return T[k] * sc.triangle_scale, 0.0, 0.0
        comps = components(tr, top=1)
        if not comps:
            return T[k] * sc.triangle_scale, 0.0, 0.0
        c = comps[0]
        z = (c.u_size if cfg.swapped else c.v_size) * sc.mass_scale
        L = (T[c.last_step] - T[c.first_step - 1]) * sc.triangle_scale
        return T[k] * sc.triangle_scale, z, L

    rows = np.array(_pmap(one, range(plan.replicates), plan.workers), dtype=np.float64)
    return rows[:, 0], rows[:, 1], rows[:, 2], k / sc.time_scale


def run_triangles(plan: ExperimentPlan, target: Target | str) -> TargetOutcome:
    """Triangle counts against their linear-in-time and component-level limits."""
    target = Target(target)
    cfg = plan.config
    const = _triangle_constant(target, cfg)
    t = plan.horizon_t
    if target is Target.TRIANGLE_CRIT_LIGHT:
        _, z, L, _ = _triangle_samples(cfg, plan, t, full=True)
        diff = L - const * z
        obs, se = mean_se(diff)
        nse = plan.tol("crit_light_n_se")
        rep = StatReport.compare("L1_minus_half_zeta1", obs, 0.0, nse * se, plan.replicates, se,
                                 L1_mean=float(L.mean()), half_zeta1_mean=float(const * z.mean()),
                                 L1_var=float(L.var(ddof=1)) if L.size > 1 else float("nan"))
        figure = {"kind": "scatter", "title": "largest-component triangles vs size",
                  "x": z, "y": L, "line": const}
        return TargetOutcome([rep], {"zeta1": z, "L1": L}, figure)

    rel_key = {Target.TRIANGLE_MODERATE: "triangle_moderate_rel", Target.TRIANGLE_LIGHT: "triangle_light_rel",
               Target.TRIANGLE_HEAVY: "triangle_heavy_rel"}[target]
    rel = plan.tol(rel_key)
    full = target is not Target.TRIANGLE_HEAVY
    T, z, L, te = _triangle_samples(cfg, plan, t, full=full)
    ref = const * te
    obs, se = mean_se(T)
    rep = StatReport.compare("T_mean", obs, ref, rel * ref, plan.replicates, se, n=cfg.n, m=cfg.m,
                             effective_t=te)
    reports = [rep]
    samples = {"T": T}
    if target is Target.TRIANGLE_HEAVY and not rep.passed:
        # fall back to a shrinking-gap check against a smaller instance
        n2 = plan.second_n or max(cfg.m + 1, cfg.n // 10)
        cfg2 = build_config(cfg.regime, cfg.lam, n2, m=cfg.m)
        plan2 = replace(plan, config=cfg2, seed=replicate_seed(plan.seed, _SECOND_N_KEY))
        T2, _, _, te2 = _triangle_samples(cfg2, plan2, t, full=False)
        gap1 = abs(obs - ref) / ref
        gap2 = abs(T2.mean() - const * te2) / (const * te2)
        trend = StatReport("T_gap_trend", gap1, gap2, 0.0, bool(gap1 < gap2 and cfg.n > n2) or
                           bool(gap1 > gap2 and cfg.n < n2), plan.replicates,
                           details={"n": cfg.n, "second_n": n2, "gap": gap1, "second_gap": gap2})
        rep.details["fallback"] = "shrinking gap across two sizes"
        rep.passed = trend.passed
        reports.append(trend)
        samples = {"T": T}
    if target is Target.TRIANGLE_LIGHT:
        # L_1 is a small integer count here; compare its conditional mean given zeta_1
        obs, se = mean_se(L - const * z)
        reports.append(StatReport.compare("L1_minus_half_zeta1", obs, 0.0, plan.tol("walk_n_se") * se,
                                          plan.replicates, se, L1_mean=float(L.mean())))
        samples.update(zeta1=z, L1=L)
    elif full:
        lim = _continuum_zetas(plan, top=1)[:, 0] * const
        tol = ks_tolerance(plan.replicates, lim.size, plan.tol("ks_floor"))
        reports.append(StatReport.upper("L1_ks", ks_distance(L, lim), tol, plan.replicates,
                                        graph_mean=float(L.mean()), limit_mean=float(lim.mean())))
        samples.update(zeta1=z, L1=L)
    figure = {"kind": "hist", "title": f"rescaled triangle count at t={t}", "x": T, "ref": ref}
    return TargetOutcome(reports, samples, figure)


def resized_config(cfg: RegimeConfig, n: int) -> RegimeConfig:
    """Same regime and lambda at another n; light keeps the aspect exponent of m."""
    if cfg.regime is Regime.MODERATE:
        return build_config(cfg.regime, cfg.lam, n, theta=cfg.theta)
    if cfg.regime is Regime.LIGHT:
        return build_config(cfg.regime, cfg.lam, n, aspect=math.log(cfg.m) / math.log(cfg.n))
    return build_config(cfg.regime, cfg.lam, n, m=cfg.m)


def _surplus_counts(cfg: RegimeConfig, plan: ExperimentPlan, seed: int, reps: int, box_h: float,
                    window: float | None = None):
    """Per replicate: atoms in the box, SiblingOverlap records, all records up to the window."""
    sc = scaling_set(cfg)
    k = int(math.floor((window or plan.horizon_t) * sc.time_scale))

    def one(r):
        B, tr = explore_replicate(cfg, seed, r, k)
        table = classify_surplus(B, tr)
        measure = point_measure(table, cfg.n, sc.time_scale, sc.walk_scale)
        return measure.count_in_box(plan.horizon_t, box_h), int(np.count_nonzero(table.sibling)), len(table)

    return np.array(_pmap(one, range(reps), plan.workers), dtype=np.float64)


def run_surplus(plan: ExperimentPlan) -> TargetOutcome:
    """Atom counts of the surplus point measure in a box, and the shrinking SiblingOverlap share."""
    cfg = plan.config
    box_h = plan.tol("surplus_box_height")
    t = plan.horizon_t
    rows = _surplus_counts(cfg, plan, plan.seed, plan.replicates, box_h)
    counts = rows[:, 0]

    sc = scaling_set(cfg)
    te = math.floor(t * sc.time_scale) / sc.time_scale
    paths = _continuum_paths(plan, te + 2 * plan.dt)
    idx = int(round(te / plan.dt))
    areas = np.array([float(np.trapezoid(np.minimum(p.reflected[: idx + 1], box_h), dx=plan.dt))
                      for p in paths])
    obs, se = mean_se(counts)
    ref, ref_se = mean_se(areas)
    se_all = math.hypot(se, ref_se)
    reports = [StatReport.compare("box_count_mean", obs, ref, plan.tol("surplus_n_se") * se_all,
                                  plan.replicates, se_all, box=[t, box_h])]

    # trend: SiblingOverlap share at two sizes, one pooled share per paired seed
    n2 = plan.second_n or max(10, cfg.n // 10)
    cfg2 = resized_config(cfg, n2)
    groups = max(1, plan.trend_groups)
    per = max(1, plan.replicates // groups)
    window = max(plan.trend_horizon_t, t)

    def shares(c):
        out = np.zeros(groups)
        for g in range(groups):
            a = _surplus_counts(c, plan, replicate_seed(plan.seed, _SECOND_N_KEY + g), per, box_h, window)
            out[g] = a[:, 1].sum() / max(a[:, 2].sum(), 1.0)
        return out

    s_big, s_small = shares(cfg), shares(cfg2)
    lo, hi = (s_big, s_small) if cfg.n > n2 else (s_small, s_big)
    frac = float(np.mean(lo < hi))
    need = plan.tol("trend_fraction")
    reports.append(StatReport("sibling_share_decreases", frac, need, 0.0, bool(frac >= need), groups * per,
                              details={"n": cfg.n, "second_n": n2, "paired_seeds": groups, "window_t": window,
                                       "share": s_big.tolist(), "second_share": s_small.tolist()}))
    samples = {"count": counts, "sibling": rows[:, 1], "records": rows[:, 2]}
    figure = {"kind": "hist", "title": f"surplus atoms in [0,{t}]x[0,{box_h}]", "x": counts, "ref": ref,
              "discrete": True}
    return TargetOutcome(reports, samples, figure)


def run_clustering(plan: ExperimentPlan) -> TargetOutcome:
    cfg = plan.config
    est = clustering_coefficient_mc(cfg, plan.replicates, plan.seed)
    ref = clustering_limit(cfg)
    nse = plan.tol("clustering_n_se")
    rep = StatReport.compare("clustering", est.estimate, ref, nse * est.stderr, plan.replicates, est.stderr,
                             events=est.events)
    need = plan.tol("clustering_min_events")
    if est.events < need:
        rep.passed = False
        rep.details["insufficient_events"] = f"{est.events} < {int(need)}"
    figure = {"kind": "estimate", "title": "clustering coefficient", "value": est.estimate,
              "stderr": est.stderr, "ref": ref}
    return TargetOutcome([rep], {"estimate": np.array([est.estimate]), "stderr": np.array([est.stderr]),
                                 "events": np.array([est.events])}, figure)


RUNNERS: dict[Target, Callable[[ExperimentPlan], TargetOutcome]] = {
    Target.WALK_LAW: run_walk_law,
    Target.COMPONENT_SIZES: run_component_sizes,
    Target.TRIANGLE_MODERATE: lambda p: run_triangles(p, Target.TRIANGLE_MODERATE),
    Target.TRIANGLE_LIGHT: lambda p: run_triangles(p, Target.TRIANGLE_LIGHT),
    Target.TRIANGLE_HEAVY: lambda p: run_triangles(p, Target.TRIANGLE_HEAVY),
    Target.TRIANGLE_CRIT_LIGHT: lambda p: run_triangles(p, Target.TRIANGLE_CRIT_LIGHT),
    Target.SURPLUS_MEASURE: run_surplus,
    Target.CLUSTERING_COEFFICIENT: run_clustering,
}


def write_samples_csv(samples: dict[str, np.ndarray], path: Path) -> None:
    keys = list(samples)
    cols = [np.asarray(samples[k]).ravel() for k in keys]
    size = max((c.size for c in cols), default=0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["replicate"] + keys)
        for i in range(size):
            out.writerow([i] + [f"{c[i]:.10g}" if i < c.size else "" for c in cols])


def write_reports_jsonl(reports: list[StatReport], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def run_campaign(plan: ExperimentPlan) -> CampaignResult:
    """Run every target; a failing target is recorded and the rest still run."""
    result = CampaignResult(plan.name, {}, seed=plan.seed)
    out_dir = None
    if plan.output_dir is not None:
        out_dir = Path(plan.output_dir) / plan.name
        out_dir.mkdir(parents=True, exist_ok=True)
    for target in plan.targets:
        t0 = time.perf_counter()
        try:
            outcome = RUNNERS[target](plan)
        except Exception as exc:  # captured so the campaign continues
            outcome = TargetOutcome([StatReport(f"{target.value}.error", float("nan"), float("nan"), 0.0, False,
                                                plan.replicates, details={"error": repr(exc)})], {})
            result.errors[target.value] = traceback.format_exc()
        result.wall_clock[target.value] = time.perf_counter() - t0
        result.reports[target.value] = outcome.reports
        if out_dir is None:
            continue
        jp = out_dir / f"{target.value}.jsonl"
        write_reports_jsonl(outcome.reports, jp)
        result.jsonl_paths[target.value] = jp
        if outcome.samples:
            cp = out_dir / f"{target.value}.csv"
            write_samples_csv(outcome.samples, cp)
            result.csv_paths[target.value] = cp
        if plan.figures and outcome.figure is not None:
            from .plotting import target_figure

            fp = out_dir / f"{target.value}.png"
            target_figure(outcome.figure, fp)
            result.figure_paths[target.value] = fp
    if out_dir is not None:
        manifest = {
            "name": plan.name,
            "seed": plan.seed,
            "config": plan.config.to_dict(),
            "replicates": plan.replicates,
            "horizon_t": plan.horizon_t,
            "dt": plan.dt,
            "rng": "PCG64, replicate r seeded by SeedSequence([seed, r])",
            "wall_clock_s": result.wall_clock,
            "passed": {t: result.target_passed(t) for t in result.reports},
        }
        with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result
