"""Critical-window parameterizations of the random intersection graph.

A configuration fixes the number of individuals ``n``, communities ``m`` and
the membership probability ``p`` for one of three clustering regimes:

* light:    m >> n, p = (1 + lam * n^(-1/3)) / sqrt(m n)
* moderate: m = round(theta * n), same p
* heavy:    m << n, p = (1 + lam * m^(-1/3)) / sqrt(m n)

Every rescaling used downstream is produced by :func:`scaling_set`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable


class Regime(str, enum.Enum):
    LIGHT = "light"
    MODERATE = "moderate"
    HEAVY = "heavy"

    @classmethod
    def parse(cls, value: "Regime | str") -> "Regime":
        if isinstance(value, Regime):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown regime {value!r}") from None


@dataclass(frozen=True)
class RegimeConfig:
    regime: Regime
    lam: float
    n: int
    m: int
    p: float
    theta: float | None = None

    @property
    def swapped(self) -> bool:
        """Heavy configurations are explored from the community side."""
        return self.regime is Regime.HEAVY

    def explored_sizes(self) -> tuple[int, int]:
        """(explored side, other side) sizes of the graph fed to exploration."""
        return (self.m, self.n) if self.swapped else (self.n, self.m)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeConfig":
        return cls(
            regime=Regime.parse(d["regime"]),
            lam=float(d["lam"]),
            n=int(d["n"]),
            m=int(d["m"]),
            p=float(d["p"]),
            theta=None if d.get("theta") is None else float(d["theta"]),
        )


@dataclass(frozen=True)
class ScalingSet:
    time_scale: float
    walk_scale: float
    distance_scale: float
    mass_scale: float
    triangle_scale: float
    # community-count walk R: scale and per-step centering (sqrt(theta) in moderate)
    community_walk_scale: float
    community_walk_centering: float


def build_config(
    regime: Regime | str,
    lam: float,
    n: int,
    *,
    theta: float | None = None,
    m: int | None = None,
    aspect: float | None = None,
) -> RegimeConfig:
    regime = Regime.parse(regime)
    n = int(n)
    if n < 2:
        raise ValueError("n must be at least 2")
    lam = float(lam)

    if regime is Regime.MODERATE:
        if theta is None or not theta > 0:
            raise ValueError("moderate regime needs theta > 0")
        m = int(round(theta * n))
        if m < 1:
            raise ValueError("theta * n rounds to zero communities")
    else:
        if m is None:
            if aspect is None:
                raise ValueError(f"{regime.value} regime needs m or an aspect exponent")
            m = int(round(n ** float(aspect)))
        m = int(m)
        if regime is Regime.LIGHT and not m > n:
            raise ValueError("light regime needs m > n")
        if regime is Regime.HEAVY and not m < n:
            raise ValueError("heavy regime needs m < n")
        theta = None

    window = n ** (-1 / 3) if regime is not Regime.HEAVY else m ** (-1 / 3)
    p = (1.0 + lam * window) / math.sqrt(float(m) * float(n))
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability {p} outside [0, 1]")
    return RegimeConfig(regime, lam, n, m, p, None if theta is None else float(theta))


def custom_config(n: int, m: int, p: float, regime: Regime | str = Regime.MODERATE) -> RegimeConfig:
    """Configuration with explicit (n, m, p), for fixtures and small tests."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability {p} outside [0, 1]")
    regime = Regime.parse(regime)
    theta = m / n if regime is Regime.MODERATE and m > 0 else None
    return RegimeConfig(regime, 0.0, int(n), int(m), float(p), theta)


def scaling_set(config: RegimeConfig) -> ScalingSet:
    n, m = float(config.n), float(config.m)
    if config.regime is Regime.HEAVY:
        return ScalingSet(
            time_scale=m ** (2 / 3),
            walk_scale=m ** (-1 / 3),
            distance_scale=m ** (-1 / 3),
            mass_scale=m ** (-1 / 6) * n ** (-1 / 2),
            triangle_scale=m ** (5 / 6) * n ** (-3 / 2),
            community_walk_scale=m ** (-1 / 6) * n ** (-1 / 2),
            community_walk_centering=0.0,
        )
    if config.regime is Regime.LIGHT:
        tri = m ** 0.5 * n ** (-7 / 6)
        r_scale, r_center = n ** (-1 / 6) * m ** (-1 / 2), 0.0
    else:
        tri = n ** (-2 / 3)
        r_scale, r_center = n ** (-1 / 3), math.sqrt(config.theta)
    return ScalingSet(
        time_scale=n ** (2 / 3),
        walk_scale=n ** (-1 / 3),
        distance_scale=n ** (-1 / 3),
        mass_scale=n ** (-2 / 3),
        triangle_scale=tri,
        community_walk_scale=r_scale,
        community_walk_centering=r_center,
    )


def expected_degree(config: RegimeConfig) -> float:
    # 1 - (1-p^2)^m without cancellation for tiny p
    return (config.n - 1) * -math.expm1(config.m * math.log1p(-config.p * config.p))


def clustering_limit(config: RegimeConfig) -> float:
    if config.regime is Regime.LIGHT:
        return 0.0
    if config.regime is Regime.HEAVY:
        return 1.0
    return 1.0 / (1.0 + math.sqrt(config.theta))


def c_theta(theta: float) -> float:
    if not theta > 0:
        raise ValueError("theta must be positive")
    return 1.0 / (2.0 * math.sqrt(theta)) + 1.0 / (6.0 * theta)


def kappa_theta(theta: float) -> tuple[float, Callable[[float], float]]:
    if not theta > 0:
        raise ValueError("theta must be positive")
    kappa = (1.0 + theta ** -0.5) ** (1 / 3)
    return kappa, lambda lam: lam * kappa ** -2
