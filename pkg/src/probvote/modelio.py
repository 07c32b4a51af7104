"""Binary container for a trained projection and, optionally, index codebooks.

Layout (little-endian throughout)::

    "VPRP" | version u32 | D_raw u32 | d u32
    mean        D_raw x f64
    basis       D_raw*d x f64, row-major
    variance    d x f64      (version >= 1: explained variances)
    whiten      u32
    [ "VPRI" | K u32 | split u32 | probe_cells u32 | kmeans_iters u32 | seed i64 | theta f64
      codebook1 K*split x f64 | codebook2 K*(d-split) x f64 ]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .index import IndexConfig, MultiIndex
from .projection import ProjectionModel

__all__ = ["ModelFileError", "TrainedModel", "save_model", "load_model"]

VERSION = 1
_PROJ_HEAD = struct.Struct("<4sIII")
_INDEX_HEAD = struct.Struct("<4sIIIIqd")


class ModelFileError(ValueError):
    pass


@dataclass
class TrainedModel:
    projection: ProjectionModel
    codebooks: tuple[np.ndarray, np.ndarray] | None = None
    index_cfg: IndexConfig | None = None

    @property
    def theta(self) -> float:
        return self.index_cfg.max_distance if self.index_cfg is not None else float("inf")

    def new_index(self, cfg: IndexConfig | None = None) -> MultiIndex:
        """An empty index over the stored codebooks."""
        if self.codebooks is None:
            raise ModelFileError("model file holds no index codebooks")
        return MultiIndex(self.codebooks, cfg or self.index_cfg)


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def save_model(path, model: TrainedModel) -> None:
    P = model.projection
    parts = [
        _PROJ_HEAD.pack(b"VPRP", VERSION, P.input_dim, P.dim),
        _f64(P.mean),
        _f64(P.basis),
        _f64(P.explained_variance),
        struct.pack("<I", int(P.whiten)),
    ]
    if model.codebooks is not None:
        c1, c2 = model.codebooks
        cfg = model.index_cfg or IndexConfig(codebook_size=len(c1))
        if c1.shape[1] + c2.shape[1] != P.dim or len(c1) != len(c2):
            raise ValueError("codebooks do not match the projection dimension")
        parts.append(
            _INDEX_HEAD.pack(b"VPRI", len(c1), c1.shape[1], cfg.probe_cells, cfg.kmeans_iters, cfg.seed, cfg.max_distance)
        )
        parts += [_f64(c1), _f64(c2)]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob, self.off, self.path = blob, 0, path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise ModelFileError(f"{self.path}: truncated at byte {self.off}")
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out

    def floats(self, *shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def load_model(path) -> TrainedModel:
    r = _Reader(Path(path).read_bytes(), path)
    magic, version, D, d = _PROJ_HEAD.unpack(r.take(_PROJ_HEAD.size))
    if magic != b"VPRP":
        raise ModelFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ModelFileError(f"{path}: unsupported version {version}")
    mean = r.floats(D)
    basis = r.floats(D, d)
    var = r.floats(d)
    (whiten,) = struct.unpack("<I", r.take(4))
    proj = ProjectionModel(mean, basis, var, bool(whiten))
    if r.off == len(r.blob):
        return TrainedModel(proj)
    tag, K, split, probe, iters, seed, theta = _INDEX_HEAD.unpack(r.take(_INDEX_HEAD.size))
    if tag != b"VPRI":
        raise ModelFileError(f"{path}: unknown section {tag!r}")
    if not 0 < split < d:
        raise ModelFileError(f"{path}: bad codebook split {split}")
    c1 = r.floats(K, split)
    c2 = r.floats(K, d - split)
    if r.off != len(r.blob):
        raise ModelFileError(f"{path}: {len(r.blob) - r.off} trailing bytes")
    cfg = IndexConfig(codebook_size=K, probe_cells=probe, max_distance=theta, kmeans_iters=iters, seed=seed)
    return TrainedModel(proj, (c1, c2), cfg)
