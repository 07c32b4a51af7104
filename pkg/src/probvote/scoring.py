"""Scoring vote tallies against the binomial null model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import MapDatabase
from .probability import vote_logprob
from .voting import DetectorConfig, VoteTally

__all__ = [
    "LoopCandidate",
    "VertexScore",
    "ScoredTally",
    "score_tally",
    "best_candidate",
    "detect_loop",
    "score_all",
    "candidate_landmarks",
]

_LN10 = math.log(10.0)


class VertexScore(NamedTuple):
    pmf: float
    neg_log_score: float
    gate_pass: bool

    @property
    def score(self) -> float:
        return 1.0 - self.pmf


@dataclass(frozen=True)
class LoopCandidate:
    vertex: int
    pmf: float
    log_pmf: float
    votes: int
    landmarks: frozenset[int] | None = None

    @property
    def score(self) -> float:
        return 1.0 - self.pmf

    @property
    def neg_log_score(self) -> float:
        return -self.log_pmf / _LN10


@dataclass(frozen=True)
class ScoredTally:
    """Per-vertex arrays for every vertex that received votes (ascending id)."""

    n: int
    vertices: np.ndarray
    votes: np.ndarray
    gammas: np.ndarray
    gate: np.ndarray
    log_pmf: np.ndarray  # 0.0 where gate fails

    @property
    def pmf(self) -> np.ndarray:
        return np.exp(self.log_pmf)


def score_tally(tally: VoteTally, db: MapDatabase, cfg: DetectorConfig) -> ScoredTally:
    """Gate each voted vertex on ``x_i > N * gamma_i / Gamma`` and score the survivors.

    The gate is evaluated in integers (``x_i * Gamma > N * gamma_i``), so
    scaling every descriptor count by a common factor changes nothing.
    Vertices with ``gamma_i = 0`` never pass.
    """
    n = tally.total
    vids = np.array(sorted(tally.votes), dtype=np.int64)
    x = np.array([tally.votes[v] for v in vids.tolist()], dtype=np.int64)
    gammas = np.array([db.gamma(v) for v in vids.tolist()], dtype=np.int64)
    total = db.total_descriptors
    gate = (gammas >= 1) & (x * total > n * gammas) if total > 0 else np.zeros(len(vids), dtype=bool)
    log_pmf = np.zeros(len(vids))
    if gate.any():
        # Python int division is correctly rounded, exactly like gamma / Gamma
        p = np.array([int(g) / total for g in gammas[gate].tolist()])
        log_pmf[gate] = vote_logprob(n, x[gate], p, cfg.policy)
    return ScoredTally(n, vids, x, gammas, gate, log_pmf)


def best_candidate(tally: VoteTally, db: MapDatabase, cfg: DetectorConfig) -> LoopCandidate | None:
    """The gated vertex with the smallest point probability, whatever alpha is.

    Ties go to the lowest vertex id.
    """
    st = score_tally(tally, db, cfg)
    if not st.gate.any():
        return None
    idx = np.flatnonzero(st.gate)
    # argmin returns the first minimum, i.e. the lowest id (vertices ascend)
    best = idx[np.argmin(st.log_pmf[idx])]
    lp = float(st.log_pmf[best])
    return LoopCandidate(int(st.vertices[best]), math.exp(lp), lp, int(st.votes[best]))


def detect_loop(tally: VoteTally, db: MapDatabase, cfg: DetectorConfig) -> LoopCandidate | None:
    """Return the best candidate if its point probability is below ``cfg.alpha``."""
    cand = best_candidate(tally, db, cfg)
    if cand is None or not cand.pmf < cfg.alpha:
        return None
    return cand


def score_all(tally: VoteTally, db: MapDatabase, cfg: DetectorConfig) -> dict[int, VertexScore]:
    """Scores for every admitted vertex; gated-out vertices score 0.

    Returns an empty mapping when the tally holds no votes.
    """
    if tally.total == 0:
        return {}
    out = {v: VertexScore(1.0, 0.0, False) for v in range(db.n_database)}
    st = score_tally(tally, db, cfg)
    for v, ok, lp in zip(st.vertices.tolist(), st.gate.tolist(), st.log_pmf.tolist()):
        if ok:
            out[v] = VertexScore(math.exp(lp), -lp / _LN10, True)
    return out


def candidate_landmarks(
    db: MapDatabase, best: int, scores: dict[int, VertexScore], cfg: DetectorConfig
) -> set[int]:
    """Landmarks observed by the covisible vertices of ``best`` that pass ``alpha_map``.

    A covisible vertex qualifies when its probabilistic score ``1 - pmf`` is
    at least ``1 - alpha_map``.  Unscored (not admitted) vertices never do.
    """
    if best not in scores:
        raise KeyError(f"vertex {best} has no score")
    threshold = 1.0 - cfg.effective_alpha_map
    qualified = [v for v in db.covisible_vertices(best) if v in scores and scores[v].score >= threshold]
    out: set[int] = set()
    for v in qualified:
        out.update(db.observed_landmarks(v))
    return out
