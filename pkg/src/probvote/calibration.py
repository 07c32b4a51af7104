"""Training the projection and codebooks, and choosing the distance cap theta.

Self-match distances are squared projected distances between consecutive
observations of the same landmark.  Without landmark links, each
descriptor's nearest descriptor in any other vertex stands in for its
true match.
"""
from __future__ import annotations

import math

import numpy as np

from .dataset import DatasetBundle
from ._kernels import nearest_other_kernel
from .index import NO_LANDMARK, IndexConfig, train_index
from .modelio import TrainedModel
from .projection import fit_projection, project

__all__ = ["self_match_sqdists", "nearest_other_sqdists", "theta_from_distances", "calibrate"]


def self_match_sqdists(projected: list[np.ndarray], links: list[np.ndarray]) -> np.ndarray:
    """Squared distances between consecutive observations of each landmark."""
    last: dict[int, np.ndarray] = {}
    out = []
    for pd, lk in zip(projected, links):
        for row, lid in zip(pd, np.asarray(lk).tolist()):
            if lid == NO_LANDMARK:
                continue
            prev = last.get(lid)
            if prev is not None:
                diff = row - prev
                out.append(float(diff @ diff))
            last[lid] = row
    return np.array(out)


def nearest_other_sqdists(projected: list[np.ndarray]) -> np.ndarray:
    """For each descriptor, squared distance to the nearest one owned by another vertex."""
    if len(projected) < 2:
        return np.zeros(0)
    X = np.ascontiguousarray(np.concatenate(projected), dtype=np.float64)
    owner = np.repeat(np.arange(len(projected)), [len(p) for p in projected])
    out = np.empty(len(X))
    nearest_other_kernel(X, owner, out)
    return out[np.isfinite(out)]


def theta_from_distances(sqdists, percentile: float = 95.0) -> float:
    d = np.asarray(sqdists, dtype=np.float64)
    if not 0.0 <= percentile <= 100.0:
        raise ValueError("percentile must lie in [0, 100]")
    if d.size == 0:
        raise ValueError("no self-match distances to calibrate from")
    return float(np.percentile(d, percentile))


def calibrate(
    bundle: DatasetBundle,
    dim: int = 10,
    index_cfg: IndexConfig | None = None,
    percentile: float | None = 95.0,
    max_training: int = 200_000,
    whiten: bool = False,
) -> TrainedModel:
    """Fit the projection and codebooks on a bundle and set theta.

    ``percentile=None`` skips the distance pass and leaves theta disabled.
    """
    cfg = index_cfg or IndexConfig()
    raw = bundle.all_descriptors()
    need = max(cfg.codebook_size, dim + 1)
    if len(raw) < need:
        raise ValueError(f"need at least {need} training descriptors, got {len(raw)}")
    rng = np.random.default_rng(cfg.seed)
    train = raw if len(raw) <= max_training else raw[np.sort(rng.choice(len(raw), max_training, replace=False))]
    proj = fit_projection(train, dim, whiten)
    index = train_index(project(proj, train), cfg)
    if percentile is None:
        return TrainedModel(proj, index.codebooks, IndexConfig(cfg.codebook_size, cfg.probe_cells, math.inf, cfg.kmeans_iters, cfg.seed))
    projected = [project(proj, d) for d in bundle.descriptors]
    if bundle.has_landmarks:
        dists = self_match_sqdists(projected, bundle.links)
    else:
        dists = nearest_other_sqdists(projected)
    theta = theta_from_distances(dists, percentile)
    out_cfg = IndexConfig(cfg.codebook_size, cfg.probe_cells, theta, cfg.kmeans_iters, cfg.seed)
    return TrainedModel(proj, index.codebooks, out_cfg)
