"""Simulation and limit-law checks for critical random intersection graphs."""

from .regimes import Regime, RegimeConfig, ScalingSet, build_config, custom_config, scaling_set
from .sampler import BipartiteGraph, IntersectionGraph, bfs_distance, induce_intersection, sample_bipartite
from .exploration import ExplorationTrace, RootRule, audit_trace, components, explore, height_from_walk

__all__ = [
    "BipartiteGraph",
    "ExplorationTrace",
    "IntersectionGraph",
    "Regime",
    "RegimeConfig",
    "RootRule",
    "ScalingSet",
    "audit_trace",
    "bfs_distance",
    "build_config",
    "components",
    "custom_config",
    "explore",
    "height_from_walk",
    "induce_intersection",
    "sample_bipartite",
    "scaling_set",
]

__version__ = "0.1.0"
