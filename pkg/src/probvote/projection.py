"""PCA projection of raw binary descriptors to a low-dimensional real space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ProjectionModel", "fit_projection", "project", "unpack_bits", "pack_bits"]


def unpack_bits(packed: np.ndarray, n_bits: int) -> np.ndarray:
    """Expand packed descriptor bytes (big-endian bit order) to 0/1 ``uint8``."""
    packed = np.asarray(packed, dtype=np.uint8)
    return np.unpackbits(packed, axis=-1, count=n_bits)


def pack_bits(bits: np.ndarray) -> np.ndarray:
    return np.packbits(np.asarray(bits, dtype=np.uint8), axis=-1)


@dataclass(frozen=True)
class ProjectionModel:
    mean: np.ndarray
    # D_raw x d, orthonormal columns by descending explained variance
    basis: np.ndarray
    explained_variance: np.ndarray
    whiten: bool = False

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def components(self) -> np.ndarray:
        """The matrix actually applied to centred input (scaled when whitening)."""
        if self.whiten:
            return self.basis / np.sqrt(self.explained_variance)
        return self.basis

    def __call__(self, raw):
        return project(self, raw)


def fit_projection(training, d: int = 10, whiten: bool = False) -> ProjectionModel:
    """Fit a PCA projection onto the top ``d`` principal directions.

    Raw bits are used as 0.0/1.0 coordinates.  Basis columns are sign-fixed
    so that each column's largest-magnitude entry is positive; equal
    eigenvalues keep the solver's coordinate order.  Raises ``ValueError``
    when the centred training set has rank below ``d``.
    """
    X = np.asarray(training, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("training data must be 2-D")
    n, D = X.shape
    if not 1 <= d <= D:
        raise ValueError(f"target dimension {d} must lie in [1, {D}]")
    if n <= d:
        raise ValueError(f"need more than {d} training descriptors, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    # eigh is ascending; stable sort on the negated values keeps index order on ties
    order = np.argsort(-evals, kind="stable")
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    tol = max(evals[0], 1.0) * D * np.finfo(np.float64).eps * 10
    if evals[d - 1] <= tol:
        raise ValueError(f"training data has rank below {d}")
    basis = np.array(evecs[:, :d])
    pivot = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivot, np.arange(d)])
    basis *= signs
    return ProjectionModel(mean, basis, evals[:d].copy(), whiten)


def project(model: ProjectionModel, raw) -> np.ndarray:
    """``basis.T @ (raw - mean)`` for one descriptor or a stack of them."""
    x = np.asarray(raw, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"descriptor dimension {x.shape[-1]} != model input {model.input_dim}")
    return (x - model.mean) @ model.components
