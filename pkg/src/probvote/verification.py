"""Pluggable geometric verification gate.

Real pose solvers are not part of this package.  :class:`RatioTestVerifier`
gates candidates on the number of distinctive, mutually consistent
descriptor matches; any callable with the :class:`Verifier` signature can
replace it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .index import sqdist_rows

__all__ = ["VerificationResult", "Verifier", "RatioTestVerifier", "verify_stub", "ratio_test_matches"]


@dataclass(frozen=True)
class VerificationResult:
    accepted: bool
    inlier_count: int
    method: str = "ratio-test"


class Verifier(Protocol):
    def __call__(self, query_id: int, query_descriptors: np.ndarray, candidate_descriptors: np.ndarray) -> VerificationResult: ...


def _row_blocks(A: np.ndarray, B: np.ndarray):
    step = max(1, 1_000_000 // max(1, B.size))
    for s in range(0, len(A), step):
        yield s, sqdist_rows(A[s : s + step, None, :], B[None, :, :])


def _two_nearest(A: np.ndarray, B: np.ndarray):
    """Index of the nearest row of B for each row of A, plus the two smallest distances."""
    first = np.empty(len(A), dtype=np.int64)
    d1 = np.empty(len(A))
    d2 = np.full(len(A), np.inf)
    for s, d in _row_blocks(A, B):
        rows = np.arange(len(d))
        nn = np.argmin(d, axis=1)
        first[s : s + len(d)] = nn
        d1[s : s + len(d)] = d[rows, nn]
        if B.shape[0] > 1:
            d[rows, nn] = np.inf
            d2[s : s + len(d)] = d.min(axis=1)
    return first, np.sqrt(d1), np.sqrt(d2)


def _nearest(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.empty(len(A), dtype=np.int64)
    for s, d in _row_blocks(A, B):
        out[s : s + len(d)] = np.argmin(d, axis=1)
    return out


def ratio_test_matches(query, candidates, ratio: float = 0.8, mutual: bool = True) -> np.ndarray:
    """Query indices whose best match passes ``d1 / d2 < ratio`` (and is mutual).

    Mutual means the matched candidate's own nearest query descriptor is
    the one that matched it.  A zero or missing second distance (a single
    candidate) fails the ratio test.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must lie in (0, 1]")
    Q = np.atleast_2d(np.asarray(query, dtype=np.float64))
    C = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if Q.size == 0 or C.size == 0:
        return np.zeros(0, dtype=np.int64)
    nn, d1, d2 = _two_nearest(Q, C)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = np.where((d2 > 0) & np.isfinite(d2), d1 / d2 < ratio, False)
    if mutual:
        back = _nearest(C, Q)
        ok &= back[nn] == np.arange(len(Q))
    return np.flatnonzero(ok)


def verify_stub(query, candidates, ratio: float = 0.8, min_matches: int = 8) -> VerificationResult:
    survivors = len(ratio_test_matches(query, candidates, ratio))
    return VerificationResult(survivors >= min_matches, survivors)


@dataclass(frozen=True)
class RatioTestVerifier:
    ratio: float = 0.8
    min_matches: int = 8

    def __call__(self, query_id, query_descriptors, candidate_descriptors) -> VerificationResult:
        return verify_stub(query_descriptors, candidate_descriptors, self.ratio, self.min_matches)
