"""Ground-truth precision/recall harness for loop closure detections."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "MatchClass",
    "EvalConfig",
    "Detection",
    "PRPoint",
    "classify_pair",
    "pr_curve",
    "max_recall_at_full_precision",
    "eligible_queries",
    "default_sweep",
    "read_detections",
    "write_detections",
    "write_pr_csv",
    "read_pr_csv",
    "DETECTION_FIELDS",
    "PR_FIELDS",
]

DETECTION_FIELDS = ("query_id", "matched_id", "neg_log_score", "accepted", "post_verification")
PR_FIELDS = ("threshold", "tp", "fp", "fn", "precision", "recall", "zero_support")


class MatchClass(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True)
class EvalConfig:
    """Distance bands for ground truth plus the score thresholds to sweep.

    An empty ``sweep`` means every distinct detection score is used.
    """

    d_near: float = 5.0
    d_far: float = 10.0
    sweep: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.d_near < self.d_far:
            raise ValueError("need 0 < d_near < d_far")


class Detection(NamedTuple):
    query: int
    matched: int
    neg_log_score: float
    accepted: bool = True
    verified: bool = True


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float = field(init=False)
    recall: float = field(init=False)
    zero_support: bool = field(init=False)

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("counts must be non-negative")
        found = self.tp + self.fp
        object.__setattr__(self, "zero_support", found == 0)
        object.__setattr__(self, "precision", 1.0 if found == 0 else self.tp / found)
        pos = self.tp + self.fn
        object.__setattr__(self, "recall", 0.0 if pos == 0 else self.tp / pos)


def classify_pair(distance: float, cfg: EvalConfig) -> MatchClass:
    if not distance >= 0:
        raise ValueError("distance must be non-negative")
    if distance <= cfg.d_near:
        return MatchClass.TRUE
    if distance >= cfg.d_far:
        return MatchClass.FALSE
    return MatchClass.UNCLASSIFIED


def _position_lookup(positions) -> Mapping[int, np.ndarray]:
    if isinstance(positions, Mapping):
        return {int(k): np.asarray(v, dtype=np.float64) for k, v in positions.items()}
    arr = np.asarray(positions, dtype=np.float64)
    return {i: arr[i] for i in range(len(arr))}


def eligible_queries(
    positions, timestamps, t_delay: float, cfg: EvalConfig, queries: Iterable[int] | None = None
) -> set[int]:
    """Queries with an admitted vertex (``t <= t_q - t_delay``) within ``d_near``."""
    P = np.asarray(positions, dtype=np.float64)
    T = np.asarray(timestamps, dtype=np.float64)
    if P.shape[0] != T.shape[0]:
        raise ValueError("positions and timestamps differ in length")
    out = set()
    ids = range(len(T)) if queries is None else queries
    for q in ids:
        old = T <= T[q] - t_delay
        if old.any() and np.min(np.linalg.norm(P[old] - P[q], axis=1)) <= cfg.d_near:
            out.add(int(q))
    return out


def default_sweep(detections: Sequence[Detection]) -> list[float]:
    """Every distinct score, plus ``+inf`` so the empty operating point is present."""
    scores = sorted({float(d.neg_log_score) for d in detections if math.isfinite(d.neg_log_score)})
    return scores + [math.inf]


def pr_curve(
    detections: Sequence[Detection],
    positions,
    eligible: Iterable[int],
    cfg: EvalConfig,
    use_verification: bool = False,
) -> list[PRPoint]:
    """Precision/recall at each threshold on ``neg_log_score``.

    A detection is accepted at threshold ``s`` when its score is ``>= s``.
    ``eligible`` holds the queries that count towards false negatives.
    Only the first detection per query is used.
    """
    pos = _position_lookup(positions)
    eligible = set(int(q) for q in eligible)
    seen: set[int] = set()
    rows = []
    for d in detections:
        if d.query in seen:
            continue
        seen.add(d.query)
        if d.query not in pos or d.matched not in pos:
            raise KeyError(f"no ground truth for pair ({d.query}, {d.matched})")
        if use_verification and not d.verified:
            continue
        cls = classify_pair(float(np.linalg.norm(pos[d.query] - pos[d.matched])), cfg)
        rows.append((float(d.neg_log_score), d.query, cls))
    for q in eligible:
        if q not in pos:
            raise KeyError(f"no ground truth for query {q}")
    sweep = list(cfg.sweep) if cfg.sweep else default_sweep(detections)
    curve = []
    for s in sweep:
        tp = fp = 0
        hit: set[int] = set()
        for score, q, cls in rows:
            if not score >= s:
                continue
            if cls is MatchClass.TRUE:
                tp += 1
                hit.add(q)
            elif cls is MatchClass.FALSE:
                fp += 1
        fn = len(eligible - hit)
        curve.append(PRPoint(float(s), tp, fp, fn))
    return curve


def max_recall_at_full_precision(curve: Sequence[PRPoint]) -> float:
    if not len(curve):
        raise ValueError("empty curve")
    best = 0.0
    for p in curve:
        if p.fp == 0 and p.tp >= 1:
            best = max(best, p.recall)
    return best


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def write_detections(path, detections: Iterable[Detection]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DETECTION_FIELDS)
        for d in detections:
            w.writerow([d.query, d.matched, repr(float(d.neg_log_score)), int(d.accepted), int(d.verified)])


def read_detections(path) -> list[Detection]:
    """Parse a detection CSV; errors name the file and line."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DETECTION_FIELDS:
            raise ValueError(f"{path}:1: expected header {','.join(DETECTION_FIELDS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                q, m, s, a, v = row
                out.append(Detection(int(q), int(m), float(s), _parse_bool(a), _parse_bool(v)))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def write_pr_csv(path, curve: Iterable[PRPoint]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PR_FIELDS)
        for p in curve:
            w.writerow([repr(p.threshold), p.tp, p.fp, p.fn, repr(p.precision), repr(p.recall), int(p.zero_support)])


def read_pr_csv(path) -> list[PRPoint]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [PRPoint(float(r["threshold"]), int(r["tp"]), int(r["fp"]), int(r["fn"])) for r in reader]
