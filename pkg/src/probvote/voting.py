"""Nearest-neighbour vote aggregation and delayed admission of vertices."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .index import NO_LANDMARK, MultiIndex, NeighborBatch, adaptive_k
from .model import MapDatabase
from .probability import ApproxPolicy
from .projection import ProjectionModel, project

__all__ = [
    "VoteTally",
    "DetectorConfig",
    "TemporalFirewallError",
    "admit_due_vertices",
    "neighbors_for",
    "aggregate_v2v",
    "aggregate_v2m",
    "tally_v2m",
    "check_firewall",
]

MODES = ("v2v", "v2m")


class TemporalFirewallError(AssertionError):
    """A vote reached a vertex that is too recent to be in the database."""


@dataclass
class VoteTally:
    votes: dict[int, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.votes.values())

    def __len__(self):
        return len(self.votes)

    def __getitem__(self, vid: int) -> int:
        return self.votes.get(vid, 0)

    def merge(self, other: "VoteTally") -> "VoteTally":
        merged = Counter(self.votes)
        merged.update(other.votes)
        return VoteTally(dict(merged))

    @classmethod
    def from_owners(cls, owners) -> "VoteTally":
        ids, counts = np.unique(np.asarray(owners, dtype=np.int64), return_counts=True)
        return cls({int(i): int(c) for i, c in zip(ids, counts)})


@dataclass(frozen=True)
class DetectorConfig:
    """Parameters of the loop closure detector.

    ``alpha_map`` defaults to ``alpha``.  ``k_nn=None`` selects the adaptive
    neighbour count; an integer fixes it.  ``approx=None`` uses the Poisson
    switch thresholds of the chosen mode.
    """

    mode: str = "v2v"
    alpha: float = 1e-3
    alpha_map: float | None = None
    t_delay: float = 10.0
    dt: float = 1.0
    theta: float = math.inf
    k_nn: int | None = None
    approx: ApproxPolicy | None = None
    verify: bool = False
    ratio: float = 0.8
    min_matches: int = 8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.alpha_map is not None and not 0.0 < self.alpha_map <= 1.0:
            raise ValueError("alpha_map must lie in (0, 1]")
        if not self.t_delay >= 0 or not self.dt >= 0:
            raise ValueError("t_delay and dt must be non-negative")
        if not self.theta >= 0:
            raise ValueError("theta must be non-negative")
        if self.k_nn is not None and self.k_nn < 1:
            raise ValueError("k_nn must be >= 1")

    @property
    def effective_alpha_map(self) -> float:
        return self.alpha if self.alpha_map is None else self.alpha_map

    @property
    def policy(self) -> ApproxPolicy:
        return self.approx if self.approx is not None else ApproxPolicy.for_mode(self.mode)

    def neighbors(self, database_size: int) -> int:
        return self.k_nn if self.k_nn is not None else adaptive_k(database_size)


def admit_due_vertices(
    db: MapDatabase,
    index: MultiIndex,
    projection: ProjectionModel,
    t_q: float,
    t_delay: float,
    mode: str = "v2v",
) -> list[int]:
    """Insert every pending vertex with ``timestamp <= t_q - t_delay`` into the index.

    In ``v2m`` mode only landmark-linked descriptors are inserted.  Projected
    descriptors already cached in ``db.projected`` are reused.
    """
    t_database = t_q - t_delay
    if t_database < 0:
        return []
    admitted = []
    for vid in db.due_for_admission(t_database):
        pd = db.projected.get(vid)
        if pd is None:
            pd = project(projection, db.raw_descriptors(vid))
            db.projected[vid] = pd
        links = db.landmark_links(vid)
        if mode == "v2m":
            keep = links != NO_LANDMARK
            pd, links = pd[keep], links[keep]
        index.insert(pd, vid, links)
        db.mark_admitted(vid, len(pd))
        admitted.append(vid)
    return admitted


def neighbors_for(queries, index: MultiIndex, cfg: DetectorConfig) -> NeighborBatch:
    """kNN for all query descriptors of one step; one ``k`` for the whole step."""
    k = cfg.neighbors(len(index))
    return index.knn_batch(queries, k, cfg.theta)


def aggregate_v2v(queries, index: MultiIndex, cfg: DetectorConfig) -> VoteTally:
    """One vote per retrieved neighbour, credited to the neighbour's owner."""
    if len(index) == 0 or len(queries) == 0:
        return VoteTally()
    return VoteTally.from_owners(neighbors_for(queries, index, cfg).owner)


def aggregate_v2m(queries, index: MultiIndex, db: MapDatabase, cfg: DetectorConfig) -> VoteTally:
    if len(index) == 0 or len(queries) == 0:
        return VoteTally()
    return tally_v2m(neighbors_for(queries, index, cfg), db, cfg.dt)


def tally_v2m(matches: NeighborBatch, db: MapDatabase, dt: float) -> VoteTally:
    """Vote for every admitted vertex that observes the matched landmark and
    lies within ``dt`` seconds of the matched descriptor's owner.
    """
    if np.any(matches.landmark == NO_LANDMARK):
        raise ValueError("vertex-to-map voting needs a landmark on every index entry")
    pairs = Counter(zip(matches.owner.tolist(), matches.landmark.tolist()))
    votes: Counter[int] = Counter()
    for (owner, lid), mult in pairs.items():
        lo, hi = db.window_bounds(db.timestamp(owner), dt)
        hi = min(hi, db.n_database)
        voters = {v for v in db.landmarks[lid].observers if lo <= v < hi}
        voters.add(owner)
        for v in voters:
            votes[v] += mult
    return VoteTally(dict(votes))


def check_firewall(tally: VoteTally, db: MapDatabase, t_q: float, t_delay: float) -> None:
    """Raise if any voted vertex is newer than ``t_q - t_delay`` or not admitted."""
    limit = t_q - t_delay
    for vid in tally.votes:
        if not db.is_admitted(vid) or db.timestamp(vid) > limit:
            raise TemporalFirewallError(
                f"vertex {vid} at t={db.timestamp(vid)} voted for query at t={t_q}"
            )
