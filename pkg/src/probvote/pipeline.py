"""Online replay of a dataset bundle through the detector."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .dataset import DatasetBundle
from .detector import LoopDetector, StepResult
from .evaluation import Detection
from .index import IndexConfig
from .modelio import TrainedModel
from .model import MapDatabase
from .scoring import score_tally
from .voting import DetectorConfig

__all__ = ["ScoreRow", "RunReport", "replay", "raw_vote_detections"]


class ScoreRow(NamedTuple):
    query: int
    vertex: int
    votes: int
    gate_pass: bool
    neg_log_score: float


@dataclass
class RunReport:
    steps: list[StepResult]
    config: dict = field(default_factory=dict)
    score_rows: list[ScoreRow] | None = None
    firewall_checks: int = 0

    def detections(self) -> list[Detection]:
        """One record per query that produced a gated candidate."""
        out = []
        for s in self.steps:
            c = s.candidate
            if c is None:
                continue
            out.append(Detection(s.query, c.vertex, c.neg_log_score, s.accepted, s.verified if s.verification else s.accepted))
        return out

    def timing(self) -> dict:
        q = np.array([s.query_seconds for s in self.steps])
        a = np.array([s.add_seconds for s in self.steps])
        stat = lambda x: (float(x.mean()), float(x.std())) if x.size else (0.0, 0.0)
        (qm, qs), (am, as_) = stat(q), stat(a)
        return dict(
            query_avg=qm, query_std=qs, add_avg=am, add_std=as_,
            total=float(q.sum() + a.sum()), steps=len(self.steps),
        )

    def summary(self) -> dict:
        return dict(
            config=self.config,
            timing=self.timing(),
            accepted=sum(s.accepted for s in self.steps),
            verified=sum(s.verified for s in self.steps),
            firewall_checks=self.firewall_checks,
        )


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _config_dict(cfg: DetectorConfig, icfg: IndexConfig) -> dict:
    d = asdict(cfg)
    d["index"] = asdict(icfg)
    return _jsonable(d)


def replay(
    bundle: DatasetBundle,
    model: TrainedModel,
    cfg: DetectorConfig,
    index_cfg: IndexConfig | None = None,
    collect_scores: bool = False,
) -> RunReport:
    """Feed every vertex to a fresh detector in timestamp order."""
    if cfg.mode == "v2m" and not bundle.has_landmarks:
        raise ValueError("vertex-to-map mode needs landmark links in the dataset")
    icfg = index_cfg or model.index_cfg or IndexConfig(codebook_size=len(model.codebooks[0]))
    index = model.new_index(icfg)
    db = MapDatabase()
    for lid in sorted(bundle.landmark_observers):
        db.declare_landmark(lid)
    det = LoopDetector(model.projection, index, cfg, db)
    steps, rows = [], [] if collect_scores else None
    for v in range(bundle.n_vertices):
        step = det.process(bundle.timestamps[v], bundle.descriptors[v], bundle.links[v], bundle.positions[v])
        steps.append(step)
        if rows is not None and step.tally.total:
            st = score_tally(step.tally, db, cfg)
            for vid, x, ok, lp in zip(st.vertices.tolist(), st.votes.tolist(), st.gate.tolist(), st.log_pmf.tolist()):
                rows.append(ScoreRow(v, vid, x, ok, -lp / math.log(10.0) if ok else 0.0))
    return RunReport(steps, _config_dict(cfg, icfg), rows, det.firewall_checks)


def raw_vote_detections(report: RunReport) -> list[Detection]:
    """Baseline: the most-voted vertex per query, scored by its raw vote count."""
    out = []
    for s in report.steps:
        if not s.tally.votes:
            continue
        best = max(s.tally.votes.items(), key=lambda kv: (kv[1], -kv[0]))
        out.append(Detection(s.query, best[0], float(best[1])))
    return out
