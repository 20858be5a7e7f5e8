import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigsim.continuum import (
    ExcursionList,
    LimitParams,
    LimitPath,
    MetricGraphSpec,
    ShortcutSet,
    coarsen,
    excursions,
    ghp_upper_bound,
    graph_distance,
    height_of_path,
    kappa_scaling_check,
    limit_walk_moments,
    metric_spec,
    sample_poisson_surplus,
    shortcuts_from_atoms,
    simulate_limit_path,
    trapezoid_area,
    tree_distance,
    write_excursion_csv,
)
from rigsim.sampler import replicate_seed
from rigsim.validation import cov_se, mean_se, var_se


def test_zero_noise_path_is_the_drift():
    p = simulate_limit_path(LimitParams(0.0, 1.0), 0.01, 2.0, 0, zero_noise=True)
    assert np.allclose(p.S, -p.t**2 / 2 * 2)
    assert not p.H.any()
    assert len(excursions(p)) == 0
    inf = simulate_limit_path(LimitParams(0.5, None), 0.01, 1.0, 0, zero_noise=True)
    assert np.allclose(inf.S, inf.t - inf.t**2 / 2)
    assert inf.R is None


def test_bad_grid_rejected():
    with pytest.raises(ValueError):
        simulate_limit_path(LimitParams(), 0.0, 1.0, 0)


def _endpoint_samples(params, t, reps, seed):
    idx = int(round(t / 0.01))
    S, R = np.empty(reps), np.empty(reps)
    for r in range(reps):
        p = simulate_limit_path(params, 0.01, t, replicate_seed(seed, r))
        S[r] = p.S[idx]
        R[r] = p.R[idx] if p.R is not None else np.nan
    return S, R


def test_light_walk_variance():
    S, _ = _endpoint_samples(LimitParams(0.3, None), 1.0, 4000, 1)
    v, se = var_se(S)
    assert abs(v - 1.0) <= 4 * se
    m, se = mean_se(S)
    assert abs(m - limit_walk_moments(LimitParams(0.3, None), 1.0)["mean_S"]) <= 4 * se


def test_moderate_walk_covariance():
    S, R = _endpoint_samples(LimitParams(0.0, 1.0), 1.0, 4000, 2)
    c, se = cov_se(R, S)
    assert abs(c - 1.0) <= 4 * se
    v, se = var_se(S)
    assert abs(v - 2.0) <= 4 * se


def test_height_factors():
    S = [0.0, 1.0, 0.0]
    assert height_of_path(LimitPath.from_walk(S, 0.1)).tolist() == [0, 2, 0]
    assert height_of_path(LimitPath.from_walk(S, 0.1, LimitParams(0, 1.0))).tolist() == [0, 1, 0]
    assert not height_of_path(LimitPath.from_walk([0, -1, -1, -3], 0.1)).any()


def _bump_path():
    # one excursion spanning 17 grid steps, then a shorter one of 4, then an open one
    up = list(range(9)) + list(range(7, -1, -1))
    S = [0.0] + [float(x) + 0.5 for x in up[1:]] + [0.0, -1.0, 0.0, 1.0, 0.0, -1.0, -2.0, -1.0, -1.5]
    return LimitPath.from_walk(S, 0.01)


def test_excursion_ranking_and_horizon():
    p = _bump_path()
    exc = excursions(p)
    assert exc.lengths[0] == pytest.approx(17 * 0.01)
    assert exc.zeta(1) == pytest.approx(0.17) and exc.zeta(9) == 0.0
    assert np.all(np.diff(exc.lengths) <= 0)
    for a, b in zip(exc.start, exc.end):
        assert np.all(p.H[a + 1 : b] > 0) and p.H[a] == 0 and p.H[b] == 0
    kept = excursions(p, "truncate")
    assert len(kept) == len(exc) + 1 and kept.complete.sum() == len(exc)
    with pytest.raises(ValueError):
        excursions(p, "keep")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32))
def test_excursions_disjoint_on_random_paths(seed):
    p = simulate_limit_path(LimitParams(0.5, None), 0.01, 4.0, seed)
    exc = excursions(p)
    spans = sorted(zip(exc.start.tolist(), exc.end.tolist()))
    assert all(b1 <= a2 for (_, b1), (a2, _) in zip(spans, spans[1:]))
    assert np.all(p.H >= 0) and p.H[0] == 0
    inside = np.zeros(p.S.size, dtype=bool)
    for a, b in spans:
        inside[a + 1 : b] = True
    # past the last complete excursion only the dropped open one may remain
    limit = int(exc.end.max()) + 1 if len(exc) else 0
    assert not p.H[:limit][~inside[:limit]].any()


def _rectangle_path(height, width, dt=0.01):
    steps = int(round(width / dt))
    S = np.concatenate([[0.0], np.full(steps - 1, height), [0.0]])
    return LimitPath.from_walk(S, dt)


def test_poisson_count_mean_matches_area():
    p = _rectangle_path(5.0, 1.0)
    exc = excursions(p)
    area = trapezoid_area(p, exc, 1)
    counts = np.array([len(sample_poisson_surplus(p, exc, 1, replicate_seed(4, r))) for r in range(2000)])
    assert abs(counts.mean() - area) <= 4 * math.sqrt(area / counts.size)
    assert abs(counts.var(ddof=1) - area) <= 0.15 * area


def test_atoms_under_the_curve():
    p = simulate_limit_path(LimitParams(1.0, None), 0.001, 5.0, 7)
    exc = excursions(p)
    for k in range(1, min(len(exc), 4) + 1):
        atoms = sample_poisson_surplus(p, exc, k, 3)
        idx = atoms[:, 0] / p.dt
        lo = np.floor(idx).astype(int)
        frac = idx - lo
        curve = p.reflected[lo] * (1 - frac) + p.reflected[np.minimum(lo + 1, p.S.size - 1)] * frac
        assert np.all(atoms[:, 1] >= 0) and np.all(atoms[:, 1] <= curve + 1e-9)
        assert np.all((atoms[:, 0] >= exc.g[k - 1]) & (atoms[:, 0] <= exc.d[k - 1]))


def test_flat_excursion_has_no_atoms():
    p = LimitPath.from_walk([0.0, 0.0, 0.0], 0.1)
    exc = ExcursionList(np.array([0]), np.array([2]), 0.1, np.array([True]))
    assert sample_poisson_surplus(p, exc, 1, 0).shape == (0, 2)


def test_shortcut_endpoints():
    p = _bump_path()
    exc = excursions(p)
    g = exc.g[0]
    x = g + 0.08
    full = p.reflected[int(round(x / p.dt))]
    pairs = shortcuts_from_atoms(p, exc, 1, np.array([[x, 0.0], [x, full], [x, 3.0], [x, 6.0]])).pairs
    assert pairs[0] == pytest.approx([0.08, 0.08])
    assert pairs[1] == pytest.approx([0.0, 0.08])
    assert pairs[2, 0] >= pairs[3, 0]
    assert np.all((pairs >= 0) & (pairs <= exc.lengths[0] + 1e-12))
    assert np.all(pairs[:, 0] <= pairs[:, 1])


def _spec(h, pairs=(), res=0.1):
    return MetricGraphSpec(np.asarray(h, dtype=float), ShortcutSet(np.asarray(pairs, dtype=float).reshape(-1, 2)), res)


def test_tree_distance_on_a_ramp():
    spec = _spec(np.arange(11) * 0.1)
    assert tree_distance(spec, 0.3, 0.3) == 0
    assert tree_distance(spec, 0.2, 0.7) == pytest.approx(0.5)


def test_graph_distance_basics():
    h = [0, 1, 2, 3, 2, 1, 2, 3, 2, 1, 0]
    plain = _spec(h)
    loop = _spec(h, [(0.3, 0.3)])
    for a, b in [(0.0, 0.7), (0.3, 0.8), (0.2, 0.5)]:
        assert graph_distance(plain, a, b) == tree_distance(plain, a, b)
        assert graph_distance(loop, a, b) == tree_distance(loop, a, b)
    glued = _spec(h, [(0.3, 0.7)])
    assert graph_distance(glued, 0.3, 0.7) == 0
    assert graph_distance(glued, 0.2, 0.8) == pytest.approx(2.0)
    assert tree_distance(glued, 0.3, 0.7) == pytest.approx(4.0)


def _brute_graph_distance(spec, a, b):
    # best over ordered sequences of distinct shortcuts, each crossed in either direction
    d = lambda x, y: tree_distance(spec, x, y)  # noqa: E731
    pairs = [tuple(p) for p in spec.shortcuts.pairs.tolist()]
    best = d(a, b)
    for r in range(1, len(pairs) + 1):
        for seq in itertools.permutations(pairs, r):
            for dirs in itertools.product((0, 1), repeat=r):
                pos, total = a, 0.0
                for (s, t), flip in zip(seq, dirs):
                    enter, leave = (s, t) if flip == 0 else (t, s)
                    total += d(pos, enter)
                    pos = leave
                best = min(best, total + d(pos, b))
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 3))
def test_graph_distance_matches_enumeration(seed, q):
    rng = np.random.default_rng(seed)
    h = np.concatenate([[0.0], np.abs(np.cumsum(rng.normal(size=19))) + 0.1, [0.0]])
    idx = np.sort(rng.integers(0, 21, size=(q, 2)), axis=1) * 0.1
    spec = _spec(h, idx)
    pts = rng.integers(0, 21, size=3) * 0.1
    a, b, c = pts.tolist()
    dab = graph_distance(spec, a, b)
    assert dab == pytest.approx(_brute_graph_distance(spec, a, b))
    assert dab <= tree_distance(spec, a, b) + 1e-12
    assert dab == pytest.approx(graph_distance(spec, b, a))
    assert dab <= graph_distance(spec, a, c) + graph_distance(spec, c, b) + 1e-9
    assert tree_distance(spec, a, b) <= tree_distance(spec, a, c) + tree_distance(spec, c, b) + 1e-9


def test_negative_excursion_rejected():
    with pytest.raises(ValueError):
        _spec([0, -1, 0])


def test_ghp_identical_specs_is_modulus_term():
    h = np.array([0, 1, 3, 2, 4, 1, 0], dtype=float)
    spec = _spec(h, [(0.1, 0.4)])
    bound = ghp_upper_bound(spec, spec, 0.1)
    assert bound == pytest.approx(6 * 2 * 3.0)  # largest one-step change is 3


def test_ghp_scaled_spec_and_mismatch():
    h = np.array([0, 1, 3, 2, 4, 1, 0], dtype=float)
    eps = 0.2
    base, scaled = _spec(h), _spec(h * (1 + eps))
    assert ghp_upper_bound(base, scaled, 0.1) >= eps * h.max()
    assert ghp_upper_bound(base, _spec(h, [(0.1, 0.2)]), 0.1) == math.inf
    with pytest.raises(ValueError):
        ghp_upper_bound(_spec(h, [(0.1, 0.2)]), _spec(h, [(0.1, 0.5)]), 0.1)


def test_ghp_refinement_shrinks():
    p = simulate_limit_path(LimitParams(1.0, None), 1e-4, 4.0, 3)
    spec = metric_spec(p, excursions(p), 1)
    bounds = []
    for f in (16, 8, 4, 2):
        coarse, fine = coarsen(spec, f), coarsen(spec, f // 2)
        bounds.append(ghp_upper_bound(fine, coarse, coarse.resolution))
    assert all(a >= b for a, b in zip(bounds, bounds[1:]))


def test_coarsen_keeps_endpoint():
    spec = _spec(np.arange(11, dtype=float))
    c = coarsen(spec, 3)
    assert c.h.tolist() == [0, 3, 6, 9, 10]
    assert c.resolution == pytest.approx(0.3)


def test_kappa_drift_and_variance_identities():
    rep = kappa_scaling_check(1.0, 1e-3, 2.0, 400, 5, lam=0.7)
    assert rep.drift_gap < 1e-9
    assert rep.variance_gap < 1e-12
    assert rep.ks.max() < 1.95 * math.sqrt(2 / 400)
    assert rep.kappa == pytest.approx(2 ** (1 / 3))


def test_path_and_excursion_csv(tmp_path):
    p = _bump_path()
    p.write_csv(tmp_path / "path.csv")
    lines = (tmp_path / "path.csv").read_text().splitlines()
    assert lines[0] == "t,S,R,H" and len(lines) == p.S.size + 1
    exc = excursions(p)
    write_excursion_csv(exc, [2], tmp_path / "exc.csv")
    rows = (tmp_path / "exc.csv").read_text().splitlines()
    assert rows[0] == "k,g,d,zeta,n_shortcuts"
    assert rows[1].split(",")[-1] == "2" and rows[2].split(",")[-1] == "0"
