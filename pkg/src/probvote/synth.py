"""Deterministic synthetic worlds with revisits and perceptual aliasing.

The world is a straight trajectory of ``n_places`` vertices followed by the
revisit segments.  Each feature has a latent position in a low-dimensional
appearance space and is tracked over one to ``max_track`` consecutive
vertices.  Raw binary descriptors are produced by a fixed random lift
``bits = (A @ z + b > 0)``, so nearby latents give nearby bit strings.

A revisit re-observes every feature seen by the original vertex, with
Gaussian noise ``sigma`` added in latent space.  ``aliasing_rate`` is the
fraction of features drawn from a small pool of shared clusters that recur
across the whole world.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .index import NO_LANDMARK, brute_force_knn
from .projection import ProjectionModel, project

__all__ = ["SyntheticWorld", "synth_generate", "nn_accuracy"]


@dataclass
class SyntheticWorld:
    timestamps: np.ndarray
    positions: np.ndarray
    descriptors: list[np.ndarray]  # per vertex, 0/1 uint8 (count x bits)
    links: list[np.ndarray]  # per vertex landmark id per descriptor, -1 for none
    features: list[np.ndarray]  # per vertex underlying feature id per descriptor
    landmark_observers: dict[int, list[int]]
    revisit_of: dict[int, int]
    feature_cluster: np.ndarray  # shared-cluster id per feature, -1 if unique
    params: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.timestamps)

    @property
    def descriptor_bits(self) -> int:
        return int(self.params["descriptor_bits"])

    def place_clusters(self, vid: int) -> set[int]:
        c = self.feature_cluster[self.features[vid]]
        return set(c[c >= 0].tolist())

    def first_pass(self) -> range:
        return range(int(self.params["n_places"]))


def synth_generate(
    seed: int = 0,
    n_places: int = 200,
    revisit_plan=((60, 40),),
    sigma: float = 0.1,
    aliasing_rate: float = 0.2,
    descriptor_bits: int = 384,
    latent_dim: int = 10,
    features_per_vertex=(20, 600),
    max_track: int = 3,
    landmark_fraction: float = 0.3,
    spacing: float = 2.0,
    period: float = 1.0,
    lateral_offset: float = 1.0,
    obs_noise: float = 0.02,
    n_shared_clusters: int = 32,
    cluster_spread: float = 0.3,
) -> SyntheticWorld:
    """Build a synthetic world; identical arguments give identical output.

    ``revisit_plan`` lists ``(first_place, length)`` segments that are
    driven again, in order, after the first pass.
    """
    if n_places <= 0 or descriptor_bits <= 0 or latent_dim <= 0:
        raise ValueError("sizes must be positive")
    if sigma < 0 or not 0.0 <= aliasing_rate <= 1.0:
        raise ValueError("need sigma >= 0 and aliasing_rate in [0, 1]")
    lo_f, hi_f = features_per_vertex
    rng = np.random.default_rng(seed)
    lift = rng.normal(size=(descriptor_bits, latent_dim))
    offset = rng.normal(scale=np.sqrt(latent_dim) * 0.5, size=descriptor_bits)
    pool = rng.normal(size=(n_shared_clusters, latent_dim))

    # features of the first pass
    feat_latent, feat_cluster, feat_landmark, obs = [], [], [], [[] for _ in range(n_places)]
    next_landmark = 0
    for j in range(n_places):
        count = int(round(np.exp(rng.uniform(np.log(lo_f), np.log(hi_f)))))
        track = rng.integers(1, max_track + 1, size=count)
        aliased = rng.random(count) < aliasing_rate
        is_lm = rng.random(count) < landmark_fraction
        clusters = rng.integers(n_shared_clusters, size=count)
        unique = rng.normal(size=(count, latent_dim))
        spread = rng.normal(scale=cluster_spread, size=(count, latent_dim))
        for i in range(count):
            fid = len(feat_latent)
            if aliased[i]:
                feat_latent.append(pool[clusters[i]] + spread[i])
                feat_cluster.append(int(clusters[i]))
            else:
                feat_latent.append(unique[i])
                feat_cluster.append(-1)
            observers = range(j, min(j + int(track[i]), n_places))
            if is_lm[i]:
                feat_landmark.append(next_landmark)
                next_landmark += 1
            else:
                feat_landmark.append(NO_LANDMARK)
            for v in observers:
                obs[v].append(fid)
    feat_latent = np.array(feat_latent)

    latents: list[np.ndarray] = []
    features: list[np.ndarray] = []
    links: list[np.ndarray] = []
    for v in range(n_places):
        fids = np.array(obs[v], dtype=np.int64)
        fids = fids[rng.permutation(len(fids))]
        latents.append(feat_latent[fids] + rng.normal(scale=obs_noise, size=(len(fids), latent_dim)))
        features.append(fids)
        links.append(np.array([feat_landmark[f] for f in fids.tolist()], dtype=np.int64))

    timestamps = [period * v for v in range(n_places)]
    positions = [(spacing * v, 0.0, 0.0) for v in range(n_places)]
    revisit_of: dict[int, int] = {}
    # a revisited landmark becomes a fresh landmark, tracked across consecutive revisits
    for start, length in revisit_plan:
        if start < 0 or start + length > n_places or length <= 0:
            raise ValueError(f"revisit segment ({start}, {length}) outside the first pass")
        renamed: dict[int, int] = {}
        for j in range(start, start + length):
            r = len(timestamps)
            revisit_of[r] = j
            timestamps.append(period * r)
            positions.append((spacing * j, lateral_offset, 0.0))
            fids = features[j]
            noisy = latents[j] + rng.normal(scale=sigma, size=latents[j].shape) if sigma > 0 else latents[j].copy()
            lk = np.full(len(fids), NO_LANDMARK, dtype=np.int64)
            for i, f in enumerate(fids.tolist()):
                if feat_landmark[f] != NO_LANDMARK:
                    if f not in renamed:
                        renamed[f] = next_landmark
                        next_landmark += 1
                    lk[i] = renamed[f]
            latents.append(noisy)
            features.append(fids.copy())
            links.append(lk)

    descriptors = [((z @ lift.T + offset) > 0).astype(np.uint8) for z in latents]
    observers: dict[int, list[int]] = {}
    for v, lk in enumerate(links):
        for lid in lk[lk != NO_LANDMARK].tolist():
            observers.setdefault(lid, []).append(v)

    params = dict(
        seed=seed, n_places=n_places, revisit_plan=[list(s) for s in revisit_plan], sigma=sigma,
        aliasing_rate=aliasing_rate, descriptor_bits=descriptor_bits, latent_dim=latent_dim,
        features_per_vertex=list(features_per_vertex), max_track=max_track,
        landmark_fraction=landmark_fraction, spacing=spacing, period=period,
        lateral_offset=lateral_offset, obs_noise=obs_noise,
        n_shared_clusters=n_shared_clusters, cluster_spread=cluster_spread,
    )
    return SyntheticWorld(
        np.array(timestamps, dtype=np.float64),
        np.array(positions, dtype=np.float64),
        descriptors,
        links,
        features,
        observers,
        revisit_of,
        np.array(feat_cluster, dtype=np.int64),
        params,
    )


def nn_accuracy(world: SyntheticWorld, projection: ProjectionModel) -> float:
    """Fraction of revisit descriptors whose exact nearest first-pass
    descriptor (in projected space) is an observation of the same feature.
    """
    first = list(world.first_pass())
    db = np.concatenate([project(projection, world.descriptors[v]) for v in first])
    db_feat = np.concatenate([world.features[v] for v in first])
    revisits = sorted(world.revisit_of)
    if not revisits:
        return float("nan")
    q = np.concatenate([project(projection, world.descriptors[v]) for v in revisits])
    q_feat = np.concatenate([world.features[v] for v in revisits])
    nn = brute_force_knn(db, q, 1)
    return float(np.mean(db_feat[nn.entry] == q_feat[nn.query]))
