"""Shared fixtures-by-import for the test suite."""

import numpy as np

from secalloc.centralized import SolverConfig
from secalloc.model import (
    AttackProbabilityModel,
    SourceSpec,
    TargetSpec,
    TransportNetwork,
)

# objective-stall exit disabled so the gradient criterion governs; used
# wherever a test needs genuinely tight stationarity
TIGHT = SolverConfig(objective_tolerance=1e-18)

CASE_STUDY_LOSSES = [12.0, 9.0, 5.0, 3.0, 2.0]

# closed-form gamma=1 aggregates of the case study:
# agg_i = log U_i - (sum_j log U_j - 14) / 5, computed independently
CLOSED_FORM_AGGREGATES = [
    3.6682409280307253,
    3.3805588555789444,
    2.7927721906768254,
    2.2819465669108347,
    1.8764814588026703,
]


def complete_network(losses, supplies, baseline=1.0, family="exponential", tau=0.0):
    prob = AttackProbabilityModel(family, baseline)
    targets = tuple(
        TargetSpec(f"t{k + 1}", loss, prob) for k, loss in enumerate(losses)
    )
    sources = tuple(
        SourceSpec(f"s{k + 1}", cap, weight_tau=tau)
        for k, cap in enumerate(supplies)
    )
    return TransportNetwork.complete(targets, sources)


def brute_force_project(raw, cap, step=1e-3):
    """Grid-search projection onto {x >= 0, sum x <= cap} for 2 or 3 coords.

    The optimum is either the orthant clip (when its sum fits) or lies on
    the face sum = cap, which is enumerated as a grid.
    """
    raw = np.asarray(raw, dtype=float)
    best = None
    best_dist = np.inf
    clip = np.maximum(raw, 0.0)
    if clip.sum() <= cap + 1e-12:
        best, best_dist = clip, float(((clip - raw) ** 2).sum())
    axis = np.arange(0.0, cap + step / 2, step)
    if raw.size == 2:
        pts = np.stack([axis, cap - axis], axis=1)
    elif raw.size == 3:
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        keep = g1 + g2 <= cap + 1e-12
        g1, g2 = g1[keep], g2[keep]
        pts = np.stack([g1, g2, cap - g1 - g2], axis=1)
    else:
        raise ValueError("helper supports 2 or 3 coordinates")
    dist = ((pts - raw) ** 2).sum(axis=1)
    k = int(np.argmin(dist))
    if dist[k] < best_dist:
        best = pts[k]
    return best
