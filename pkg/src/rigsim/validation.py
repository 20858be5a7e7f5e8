"""Surrogate walks, Radon-Nikodym weights, moment oracles and test statistics."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .exploration import RootRule, explore, height_from_walk
from .regimes import Regime, RegimeConfig
from .sampler import replicate_seed, make_rng, sample_bipartite


class SurrogateKind(str, enum.Enum):
    POISSON_CHECK = "PoissonCheck"
    IID_HAT = "IidHat"


@dataclass(frozen=True, eq=False)
class SurrogateWalk:
    kind: SurrogateKind
    config: RegimeConfig
    X: np.ndarray  # X_1..X_steps
    R: np.ndarray  # R_0..R_steps
    S: np.ndarray  # S_0..S_steps
    H: np.ndarray
    U: np.ndarray | None = None  # rate inputs U_k, V_k used at step k (PoissonCheck)
    V: np.ndarray | None = None
    alpha: float | None = None
    beta: float | None = None
    lambda_star: float | None = None

    @property
    def steps(self) -> int:
        return int(self.X.size)


def default_lambda_star(config: RegimeConfig) -> float:
    return max(config.lam, 0.0) + 1.0


def hat_rates(config: RegimeConfig, lambda_star: float) -> tuple[float, float]:
    """(alpha, beta) of the i.i.d. reference walk."""
    n, m, p = config.n, config.m, config.p
    if config.regime is Regime.MODERATE:
        th = config.theta
        alpha = m * p - math.sqrt(th) * lambda_star * n ** (-1 / 3)
        beta = n * p - lambda_star * n ** (-1 / 3) / math.sqrt(th)
    elif config.regime is Regime.LIGHT:
        alpha = m * p
        beta = n * p - 2 * lambda_star * m ** (-1 / 2) * n ** (1 / 6)
    else:
        raise ValueError("reference walks are defined for light and moderate configurations")
    return alpha, beta


def _check_batch(config: RegimeConfig, steps: int, rng: np.random.Generator, reps: int):
    n, m, p = config.n, config.m, config.p
    X = np.zeros((reps, steps), dtype=np.int64)
    R = np.zeros((reps, steps + 1), dtype=np.int64)
    S = np.zeros((reps, steps + 1), dtype=np.int64)
    U = np.zeros((reps, steps), dtype=np.int64)
    V = np.zeros((reps, steps), dtype=np.int64)
    run_min = np.zeros(reps, dtype=np.int64)
    u_k = np.full(reps, m, dtype=np.int64)
    v_k = np.full(reps, n - 1, dtype=np.int64)
    for k in range(1, steps + 1):
        U[:, k - 1], V[:, k - 1] = u_k, v_k
        x = rng.poisson(u_k * p)
        y = rng.poisson(x * v_k * p)
        X[:, k - 1] = x
        R[:, k] = R[:, k - 1] + x
        S[:, k] = S[:, k - 1] + y - 1
        np.minimum(run_min, S[:, k], out=run_min)
        u_k = np.maximum(m - R[:, k], 0)
        v_k = np.maximum(n - k - 1 - (S[:, k] - run_min), 0)
    return X, R, S, U, V


def _hat_batch(alpha: float, beta: float, steps: int, rng: np.random.Generator, reps: int):
    X = rng.poisson(alpha, size=(reps, steps))
    Y = rng.poisson(X * beta)
    R = np.zeros((reps, steps + 1), dtype=np.int64)
    S = np.zeros((reps, steps + 1), dtype=np.int64)
    np.cumsum(X, axis=1, out=R[:, 1:])
    np.cumsum(Y - 1, axis=1, out=S[:, 1:])
    return X.astype(np.int64), R, S


def sample_surrogate_batch(kind: SurrogateKind | str, config: RegimeConfig, steps: int, seed: int,
                           replicates: int, lambda_star: float | None = None) -> list[SurrogateWalk]:
    """``replicates`` independent surrogate walks drawn together."""
    kind = SurrogateKind(kind)
    if config.regime is Regime.HEAVY:
        raise ValueError("surrogate walks are defined for light and moderate configurations")
    rng = make_rng(seed, 0xC0DE)
    out = []
    if kind is SurrogateKind.POISSON_CHECK:
        X, R, S, U, V = _check_batch(config, steps, rng, replicates)
        for r in range(replicates):
            out.append(SurrogateWalk(kind, config, X[r], R[r], S[r], height_from_walk(S[r]), U[r], V[r]))
        return out
    lambda_star = default_lambda_star(config) if lambda_star is None else float(lambda_star)
    if not lambda_star > max(config.lam, 0.0):
        raise ValueError("lambda_star must exceed max(lambda, 0)")
    alpha, beta = hat_rates(config, lambda_star)
    if not (alpha > 0 and beta > 0):
        raise ValueError("n too small: reference rates are not positive")
    X, R, S = _hat_batch(alpha, beta, steps, rng, replicates)
    for r in range(replicates):
        out.append(SurrogateWalk(kind, config, X[r], R[r], S[r], height_from_walk(S[r]),
                                 alpha=alpha, beta=beta, lambda_star=lambda_star))
    return out


def sample_surrogate(kind: SurrogateKind | str, config: RegimeConfig, lambda_star: float | None,
                     steps: int, seed: int) -> SurrogateWalk:
    return sample_surrogate_batch(kind, config, steps, seed, 1, lambda_star)[0]


def audit_surrogate(walk: SurrogateWalk) -> int:
    """Number of steps at which the stored walk breaks its own recursion."""
    bad = int(np.count_nonzero(np.diff(walk.R) != walk.X)) + int(np.any(np.diff(walk.S) < -1))
    if walk.kind is SurrogateKind.POISSON_CHECK:
        n, m = walk.config.n, walk.config.m
        k = np.arange(1, walk.steps + 1)
        prev_min = np.minimum.accumulate(walk.S)[:-1]
        bad += int(np.count_nonzero(walk.U != np.maximum(m - walk.R[:-1], 0)))
        bad += int(np.count_nonzero(walk.V != np.maximum(n - k - (walk.S[:-1] - prev_min), 0)))
    return bad


def _rn_terms(X, S, config: RegimeConfig, alpha: float, beta: float, N: int) -> np.ndarray:
    """Per-step log factors of the derivative, shape (..., N); -inf marks impossible steps."""
    n, m, p = config.n, config.m, config.p
    X = np.asarray(X)[..., :N].astype(np.float64)
    S = np.asarray(S, dtype=np.int64)
    Y = (np.diff(S[..., : N + 1], axis=-1) + 1).astype(np.float64)
    k = np.arange(1, N + 1)
    R_prev = np.concatenate([np.zeros(X.shape[:-1] + (1,)), np.cumsum(X, axis=-1)[..., :-1]], axis=-1)
    prev_min = np.minimum.accumulate(S[..., :N], axis=-1)
    U = np.maximum(m - R_prev, 0.0) * p
    V = np.maximum(n - k - (S[..., :N] - prev_min), 0).astype(np.float64) * p
    with np.errstate(divide="ignore"):
        return (special.xlogy(X, U / alpha) + special.xlogy(Y, V / beta)
                + alpha - U + X * (beta - V))


def rn_derivative(hat_walk: SurrogateWalk, N: int) -> float:
    """Likelihood ratio of the first N steps, exploration surrogate over i.i.d. reference."""
    if hat_walk.kind is not SurrogateKind.IID_HAT:
        raise ValueError("needs an IidHat walk")
    if N > hat_walk.steps:
        raise ValueError("walk shorter than N")
    if N == 0:
        return 1.0
    terms = _rn_terms(hat_walk.X, hat_walk.S, hat_walk.config, hat_walk.alpha, hat_walk.beta, N)
    if np.isneginf(terms).any():
        return 0.0
    return math.exp(math.fsum(terms.tolist()))


def rn_derivative_batch(walks: list[SurrogateWalk], N: int) -> np.ndarray:
    if not walks:
        return np.zeros(0)
    w0 = walks[0]
    X = np.stack([w.X for w in walks])
    S = np.stack([w.S for w in walks])
    terms = _rn_terms(X, S, w0.config, w0.alpha, w0.beta, N)
    out = np.zeros(len(walks))
    for r, row in enumerate(terms):
        if not np.isneginf(row).any():
            out[r] = math.exp(math.fsum(row.tolist()))
    return out


def falling_factorial(N: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= N - j
    return out


def factorial_moment_binomial(N: int, p: float, k: int) -> float:
    if k < 1 or k > N:
        raise ValueError("need 1 <= k <= N")
    return falling_factorial(N, k) * p**k


def factorial_moment_poisson(c: float, k: int) -> float:
    if k < 1:
        raise ValueError("need k >= 1")
    return c**k


def stirling2(k: int, j: int) -> int:
    return int(special.stirling2(k, j, exact=True))


def raw_moment_poisson(c: float, k: int) -> float:
    return sum(stirling2(k, j) * c**j for j in range(1, k + 1))


def raw_moment_binomial(N: int, p: float, k: int) -> float:
    return sum(stirling2(k, j) * falling_factorial(N, j) * p**j for j in range(1, min(k, N) + 1))


def binom_tail_bound(N: int, p: float, k: int) -> float:
    """Ceiling for P(Binomial(N, p) >= k)."""
    if k < 1:
        raise ValueError("need k >= 1")
    return N * p * p + (N * p) ** k / math.factorial(k)


def binom_poisson_tv(N: int, p: float) -> float:
    """Exact total variation between Binomial(N, p) and Poisson(N p)."""
    c = N * p
    top = int(max(N, c + 40 * math.sqrt(c + 1) + 40))
    x = np.arange(top + 1)
    b = stats.binom.pmf(x, N, p)
    q = stats.poisson.pmf(x, c)
    return 0.5 * (float(np.abs(b - q).sum()) + float(stats.poisson.sf(top, c)))


def ks_distance(sample_a, sample_b) -> float:
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be nonempty")
    return float(stats.ks_2samp(a, b).statistic)


def ks_tolerance(size_a: int, size_b: int, floor: float = 0.12) -> float:
    """Larger of ``floor`` and the two-sample KS critical value at level 0.001."""
    return max(floor, 1.95 * math.sqrt((size_a + size_b) / (size_a * size_b)))


@dataclass
class StatReport:
    name: str
    observed: float
    reference: float
    tolerance: float
    passed: bool
    replicates: int
    stderr: float = float("nan")
    details: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, name: str, observed: float, reference: float, tolerance: float, replicates: int,
                stderr: float = float("nan"), **details) -> "StatReport":
        ok = bool(np.isfinite(observed) and abs(observed - reference) <= tolerance)
        return cls(name, float(observed), float(reference), float(tolerance), ok, int(replicates),
                   float(stderr), details)

    @classmethod
    def upper(cls, name: str, observed: float, bound: float, replicates: int, **details) -> "StatReport":
        """Pass when observed <= bound (reference 0, tolerance bound)."""
        ok = bool(np.isfinite(observed) and observed <= bound)
        return cls(name, float(observed), 0.0, float(bound), ok, int(replicates), float("nan"), details)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: observed={self.observed:.6g} reference={self.reference:.6g} "
                f"tol={self.tolerance:.3g} se={self.stderr:.3g} reps={self.replicates}")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, default=_jsonable, sort_keys=True)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, enum.Enum):
        return x.value
    raise TypeError(f"not serializable: {type(x)}")


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(x.mean()), se


def var_se(x) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    x = np.asarray(x, dtype=np.float64)
    v = float(x.var(ddof=1))
    m4 = float(np.mean((x - x.mean()) ** 4))
    return v, math.sqrt(max(m4 - v * v, 0.0) / x.size)


def cov_se(x, y) -> tuple[float, float]:
    """Sample covariance and the standard error of the mean centred product."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    prod = (x - x.mean()) * (y - y.mean())
    return float(prod.sum() / (x.size - 1)), float(prod.std(ddof=1) / math.sqrt(x.size))


def moment_report(samples, reference_moments: dict[str, float], name: str = "sample",
                  n_se: float = 4.0) -> list[StatReport]:
    """Mean / variance of ``samples`` against reference values within ``n_se`` standard errors.

    ``reference_moments`` may hold ``mean`` and ``var``; a ``*_se`` entry adds
    the reference's own Monte Carlo error.
    """
    out = []
    for key, fn in (("mean", mean_se), ("var", var_se)):
        if key not in reference_moments:
            continue
        obs, se = fn(samples)
        se = math.hypot(se, reference_moments.get(f"{key}_se", 0.0))
        out.append(StatReport.compare(f"{name}.{key}", obs, reference_moments[key], n_se * se,
                                      len(samples), se))
    return out


def _binned_tv(a: np.ndarray, b: np.ndarray) -> float:
    """TV between empirical laws of two samples of integer rows."""
    keys = np.concatenate([a, b])
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    ca = np.bincount(inv[: len(a)], minlength=inv.max() + 1) / len(a)
    cb = np.bincount(inv[len(a):], minlength=inv.max() + 1) / len(b)
    return 0.5 * float(np.abs(ca - cb).sum())


def _marginals(X: np.ndarray, S: np.ndarray, checkpoints: np.ndarray, s_bin: int) -> list[np.ndarray]:
    dS = np.diff(S, axis=1)
    out = [np.stack([X[:, k - 1], dS[:, k - 1]], axis=1) for k in checkpoints]
    out += [(S[:, k:k + 1] // s_bin) for k in checkpoints]
    return out


def surrogate_tv_check(config: RegimeConfig, steps: int, replicates: int, seed: int,
                       tolerance: float = 0.05) -> StatReport:
    """Binned total variation between exploration and Poisson surrogate marginals.

    Compares joint laws of (X_k, dS_k) and binned S_k at a few steps.  The
    reference value is the same statistic between two independent surrogate
    samples (the sampling-noise floor); the check passes when the observed
    value exceeds that floor by at most ``tolerance``.  Binned TV is a lower
    bound for the true process-level distance.
    """
    checkpoints = np.unique(np.linspace(1, steps, 4).astype(int))
    s_bin = max(1, int(round(config.n ** (1 / 3) / 4)))
    X = np.zeros((replicates, steps), dtype=np.int64)
    S = np.zeros((replicates, steps + 1), dtype=np.int64)
    for r in range(replicates):
        rs = replicate_seed(seed, r)
        tr = explore(sample_bipartite(config, rs), RootRule.uniform(rs), max_steps=steps)
        X[r, : tr.steps] = tr.X
        S[r, : tr.steps + 1] = tr.S
    w1 = sample_surrogate_batch(SurrogateKind.POISSON_CHECK, config, steps, replicate_seed(seed, 1 << 40), replicates)
    w2 = sample_surrogate_batch(SurrogateKind.POISSON_CHECK, config, steps, replicate_seed(seed, (1 << 40) + 1), replicates)
    X1, S1 = np.stack([w.X for w in w1]), np.stack([w.S for w in w1])
    X2, S2 = np.stack([w.X for w in w2]), np.stack([w.S for w in w2])
    obs = max(_binned_tv(a, b) for a, b in zip(_marginals(X, S, checkpoints, s_bin),
                                               _marginals(X1, S1, checkpoints, s_bin)))
    floor = max(_binned_tv(a, b) for a, b in zip(_marginals(X2, S2, checkpoints, s_bin),
                                                 _marginals(X1, S1, checkpoints, s_bin)))
    return StatReport("surrogate_tv", obs, floor, tolerance, bool(obs <= floor + tolerance), replicates,
                      details={"n": config.n, "checkpoints": checkpoints.tolist()})
