"""Online loop closure detection: one call per incoming vertex."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .index import NO_LANDMARK, MultiIndex
from .model import MapDatabase
from .projection import ProjectionModel, project
from .scoring import LoopCandidate, best_candidate, candidate_landmarks, score_all
from .verification import RatioTestVerifier, VerificationResult, Verifier
from .voting import (
    DetectorConfig,
    VoteTally,
    admit_due_vertices,
    check_firewall,
    neighbors_for,
    tally_v2m,
)

__all__ = ["StepResult", "LoopDetector"]


@dataclass
class StepResult:
    query: int
    timestamp: float
    tally: VoteTally
    # best gated vertex regardless of alpha; ``accepted`` applies alpha
    candidate: LoopCandidate | None
    accepted: bool
    verification: VerificationResult | None = None
    admitted: list[int] = field(default_factory=list)
    query_seconds: float = 0.0
    add_seconds: float = 0.0

    @property
    def verified(self) -> bool:
        return self.accepted and self.verification is not None and self.verification.accepted


class LoopDetector:
    """Replays vertices in time order and reports a loop candidate per step.

    Every step admits the vertices that have aged past ``t_delay``, votes
    with the new vertex's descriptors, and scores the tally.  The temporal
    firewall is checked on every tally.
    """

    def __init__(
        self,
        projection: ProjectionModel,
        index: MultiIndex,
        cfg: DetectorConfig | None = None,
        db: MapDatabase | None = None,
        verifier: Verifier | None = None,
    ):
        self.projection = projection
        self.index = index
        self.cfg = cfg or DetectorConfig()
        self.db = db if db is not None else MapDatabase()
        if verifier is None and self.cfg.verify:
            verifier = RatioTestVerifier(self.cfg.ratio, self.cfg.min_matches)
        self.verifier = verifier
        self.firewall_checks = 0

    def process(self, timestamp, descriptors, landmark_links=None, position=None) -> StepResult:
        db, cfg = self.db, self.cfg
        t0 = time.perf_counter()
        vid = db.add_vertex(timestamp, descriptors, landmark_links, position)
        admitted = admit_due_vertices(db, self.index, self.projection, timestamp, cfg.t_delay, cfg.mode)
        t1 = time.perf_counter()

        queries = project(self.projection, db.raw_descriptors(vid))
        db.projected[vid] = queries
        if len(self.index) and len(queries):
            matches = neighbors_for(queries, self.index, cfg)
            if cfg.mode == "v2m":
                tally = tally_v2m(matches, db, cfg.dt)
            else:
                tally = VoteTally.from_owners(matches.owner)
        else:
            tally = VoteTally()
        check_firewall(tally, db, timestamp, cfg.t_delay)
        self.firewall_checks += 1

        cand = best_candidate(tally, db, cfg)
        accepted = cand is not None and cand.pmf < cfg.alpha
        if cand is not None and cfg.mode == "v2m":
            lms = candidate_landmarks(db, cand.vertex, score_all(tally, db, cfg), cfg)
            cand = LoopCandidate(cand.vertex, cand.pmf, cand.log_pmf, cand.votes, frozenset(lms))
        verification = None
        if accepted and self.verifier is not None:
            verification = self.verifier(vid, queries, self.candidate_descriptors(cand))
        t2 = time.perf_counter()
        return StepResult(vid, float(timestamp), tally, cand, accepted, verification, admitted, t2 - t1, t1 - t0)

    def candidate_descriptors(self, cand: LoopCandidate) -> np.ndarray:
        """Projected descriptors handed to verification for a candidate."""
        db = self.db
        if cand.landmarks is None:
            return db.projected[cand.vertex]
        parts = []
        for v in sorted({o for lid in cand.landmarks for o in db.landmarks[lid].observers}):
            if not db.is_admitted(v):
                continue
            links = db.landmark_links(v)
            keep = np.isin(links, list(cand.landmarks)) & (links != NO_LANDMARK)
            parts.append(db.projected[v][keep])
        if not parts:
            return np.zeros((0, self.projection.dim))
        return np.concatenate(parts)
