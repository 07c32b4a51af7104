"""Pose-graph data model: vertices, landmarks and their observations."""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Vertex", "Landmark", "MapDatabase", "MapError"]

NO_LANDMARK = -1


class MapError(ValueError):
    """Raised when a mutation would break the map's invariants."""


@dataclass
class Vertex:
    id: int
    timestamp: float
    position: np.ndarray | None = None
    # gamma_i: entries in the search index owned by this vertex
    descriptor_count: int = 0
    admitted: bool = False


@dataclass
class Landmark:
    id: int
    # sorted by vertex timestamp (ids are assigned in timestamp order)
    observers: list[int] = field(default_factory=list)


class MapDatabase:
    """Vertices, landmarks and the descriptor bookkeeping used for scoring.

    Descriptors handed to :meth:`add_vertex` are retained as pending until
    the voting stage admits the vertex into the search index; only then do
    ``descriptor_count`` and ``total_descriptors`` move.

    Single writer: queries must not overlap a mutation.
    """

    def __init__(self):
        self.vertices: list[Vertex] = []
        self.landmarks: dict[int, Landmark] = {}
        self.total_descriptors = 0
        self.n_database = 0
        self._timestamps: list[float] = []
        self._raw: dict[int, np.ndarray] = {}
        self._links: dict[int, np.ndarray] = {}
        self._vertex_landmarks: list[frozenset[int]] = []
        self.projected: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.vertices)

    def declare_landmark(self, landmark_id: int) -> Landmark:
        """Register a landmark id so that descriptors may link to it."""
        landmark_id = int(landmark_id)
        if landmark_id < 0:
            raise MapError(f"landmark ids must be non-negative, got {landmark_id}")
        return self.landmarks.setdefault(landmark_id, Landmark(landmark_id))

    def add_vertex(self, timestamp, descriptors, landmark_links=None, position=None) -> int:
        """Register a vertex and keep its raw descriptors pending admission.

        ``landmark_links`` holds one landmark id per descriptor, ``-1`` for
        descriptors without a landmark.  Every linked id must have been
        declared, and a vertex may link a given landmark only once.
        """
        timestamp = float(timestamp)
        if not np.isfinite(timestamp):
            raise MapError("timestamp must be finite")
        if self._timestamps and timestamp < self._timestamps[-1]:
            raise MapError(
                f"timestamp {timestamp} precedes last vertex at {self._timestamps[-1]}"
            )
        raw = np.asarray(descriptors)
        if raw.ndim != 2:
            raise MapError("descriptors must be a 2-D array (count x dimension)")
        if landmark_links is None:
            links = np.full(len(raw), NO_LANDMARK, dtype=np.int64)
        else:
            links = np.asarray(landmark_links, dtype=np.int64)
            if links.shape != (len(raw),):
                raise MapError("need exactly one landmark link per descriptor")
        linked = links[links != NO_LANDMARK]
        if np.any(linked < 0):
            raise MapError("landmark links must be -1 or a declared landmark id")
        unique = set(linked.tolist())
        if len(unique) != len(linked):
            raise MapError("a vertex may observe each landmark through one descriptor only")
        dangling = [lid for lid in unique if lid not in self.landmarks]
        if dangling:
            raise MapError(f"undeclared landmark ids: {sorted(dangling)[:5]}")

        vid = len(self.vertices)
        pos = None if position is None else np.asarray(position, dtype=np.float64)
        self.vertices.append(Vertex(vid, timestamp, pos))
        self._timestamps.append(timestamp)
        self._raw[vid] = raw
        self._links[vid] = links
        self._vertex_landmarks.append(frozenset(unique))
        for lid in sorted(unique):
            self.landmarks[lid].observers.append(vid)
        return vid

    def raw_descriptors(self, vid: int) -> np.ndarray:
        return self._raw[vid]

    def landmark_links(self, vid: int) -> np.ndarray:
        return self._links[vid]

    def observed_landmarks(self, vid: int) -> frozenset[int]:
        self._check(vid)
        return self._vertex_landmarks[vid]

    def timestamp(self, vid: int) -> float:
        return self._timestamps[vid]

    def gamma(self, vid: int) -> int:
        return self.vertices[vid].descriptor_count

    def due_for_admission(self, t_limit: float) -> list[int]:
        """Ids of not-yet-admitted vertices with timestamp <= ``t_limit``."""
        stop = bisect_right(self._timestamps, t_limit)
        return list(range(self.n_database, max(stop, self.n_database)))

    def mark_admitted(self, vid: int, count: int) -> None:
        """Record that ``count`` descriptors of ``vid`` entered the index.

        Admission happens in id order, so the admitted vertices are always
        the prefix ``0 .. n_database - 1``.
        """
        if vid != self.n_database:
            raise MapError(f"vertex {vid} admitted out of order (next is {self.n_database})")
        v = self.vertices[vid]
        v.descriptor_count = int(count)
        v.admitted = True
        self.total_descriptors += int(count)
        self.n_database += 1
        # pending raw data is no longer needed once projected and indexed
        self._raw.pop(vid, None)

    def is_admitted(self, vid: int) -> bool:
        return 0 <= vid < self.n_database

    def window_bounds(self, t_center: float, dt: float) -> tuple[int, int]:
        """Half-open id range ``[lo, hi)`` of vertices with ``|t - t_center| <= dt``."""
        if dt < 0:
            raise ValueError("dt must be non-negative")
        lo = bisect_left(self._timestamps, t_center - dt)
        hi = bisect_right(self._timestamps, t_center + dt)
        return lo, hi

    def vertices_in_window(self, t_center: float, dt: float) -> set[int]:
        lo, hi = self.window_bounds(t_center, dt)
        return set(range(lo, hi))

    def covisible_vertices(self, vid: int) -> set[int]:
        """All vertices sharing at least one landmark with ``vid`` (``vid`` included)."""
        self._check(vid)
        out = {vid}
        for lid in self._vertex_landmarks[vid]:
            out.update(self.landmarks[lid].observers)
        return out

    def check_invariants(self) -> None:
        admitted = self.vertices[: self.n_database]
        if self.total_descriptors != sum(v.descriptor_count for v in admitted):
            raise MapError("total_descriptors != sum of admitted descriptor counts")
        if any(v.admitted for v in self.vertices[self.n_database :]):
            raise MapError("admitted vertex outside the admitted prefix")
        for lm in self.landmarks.values():
            for vid in lm.observers:
                if lm.id not in self._vertex_landmarks[vid]:
                    raise MapError(f"landmark {lm.id} lists vertex {vid} which does not observe it")

    def _check(self, vid: int) -> None:
        if not 0 <= vid < len(self.vertices):
            raise KeyError(f"unknown vertex id {vid}")
