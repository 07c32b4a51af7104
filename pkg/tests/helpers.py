"""Small builders for hand-made maps."""
from __future__ import annotations

import numpy as np

from probvote.index import IndexConfig, MultiIndex
from probvote.model import MapDatabase
from probvote.projection import ProjectionModel


def identity_projection(dim: int) -> ProjectionModel:
    return ProjectionModel(np.zeros(dim), np.eye(dim), np.ones(dim))


def exhaustive_index(dim: int) -> MultiIndex:
    """Single-cell index: every query scans every entry."""
    h = dim // 2
    return MultiIndex((np.zeros((1, h)), np.zeros((1, dim - h))), IndexConfig(codebook_size=1, probe_cells=1))


def build_db(times, descriptors, links=None, landmarks=()):
    db = MapDatabase()
    for lid in landmarks:
        db.declare_landmark(lid)
    for i, t in enumerate(times):
        db.add_vertex(t, descriptors[i], None if links is None else links[i])
    return db
