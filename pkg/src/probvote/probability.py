"""Binomial and Poisson point probabilities evaluated in log space.

Log-factorials are tabulated as unevaluated double-double sums (hi + lo)
so that the large, nearly cancelling terms of ``log C(n, k)`` do not leak
rounding error into the result.  Point probabilities are accurate to a few
units in the last place over the range the detector uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np

__all__ = [
    "LogFactorialTable",
    "log_factorial",
    "binomial_logpmf",
    "binomial_pmf",
    "poisson_logpmf",
    "poisson_pmf",
    "ApproxPolicy",
    "ScoringInputs",
    "vote_logprob",
    "vote_probability",
]

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ahi, alo = _split(a)
    bhi, blo = _split(b)
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def _dd_add(ahi, alo, bhi, blo):
    s, e = _two_sum(ahi, bhi)
    e = e + (alo + blo)
    return _quick_two_sum(s, e)


class LogFactorialTable:
    """Table of ``log(n!)`` as double-double pairs, grown by doubling.

    Entries are accumulated in 40-digit decimal arithmetic.  Only primes
    need a fresh logarithm; composites reuse ``log(p) + log(n / p)``.
    """

    def __init__(self, size: int = 1024):
        self.hi = np.zeros(1)
        self.lo = np.zeros(1)
        self._acc = Decimal(0)
        self._logs: list[Decimal] = [Decimal(0), Decimal(0)]
        self.ensure(size)

    def __len__(self):
        return len(self.hi)

    def ensure(self, n: int) -> None:
        """Make sure ``log(m!)`` is available for every ``m <= n``."""
        if n < len(self.hi):
            return
        size = len(self.hi)
        while size <= n:
            size *= 2
        self._grow(size)

    def _grow(self, size: int) -> None:
        start = len(self.hi)
        spf = _smallest_prime_factors(size)
        hi = np.empty(size)
        lo = np.empty(size)
        hi[:start] = self.hi
        lo[:start] = self.lo
        logs = self._logs
        acc = self._acc
        with localcontext() as ctx:
            ctx.prec = 40
            for m in range(len(logs), size):
                p = int(spf[m])
                logs.append(Decimal(m).ln() if p == m else logs[p] + logs[m // p])
            for m in range(start, size):
                acc += logs[m]
                h = float(acc)
                hi[m] = h
                lo[m] = float(acc - Decimal(h))
        self._acc = acc
        self.hi = hi
        self.lo = lo


def _smallest_prime_factors(n: int) -> np.ndarray:
    spf = np.arange(n, dtype=np.int64)
    for p in range(2, int(math.isqrt(n - 1)) + 1):
        if spf[p] == p:
            block = spf[p * p :: p]
            mask = block == np.arange(p * p, n, p)
            block[mask] = p
    return spf


_TABLE = LogFactorialTable()


def log_factorial(n):
    """``log(n!)`` rounded to double precision."""
    n = np.asarray(n, dtype=np.int64)
    if np.any(n < 0):
        raise ValueError("log_factorial needs n >= 0")
    if n.size:
        _TABLE.ensure(int(n.max()))
    return _scalar(_TABLE.hi[n] + _TABLE.lo[n])


def _check_counts(n, k):
    if np.any(k < 0) or np.any(n < 0):
        raise ValueError("counts must be non-negative")


def _binomial_logpmf_dd(n, k, p):
    n, k, p = np.broadcast_arrays(
        np.asarray(n, dtype=np.int64), np.asarray(k, dtype=np.int64), np.asarray(p, dtype=np.float64)
    )
    _check_counts(n, k)
    if np.any(k > n):
        raise ValueError("k must not exceed n")
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise ValueError("p must lie in [0, 1]")
    if n.size:
        _TABLE.ensure(int(n.max()))
    hi, lo = _TABLE.hi, _TABLE.lo
    nk = n - k

    chi, clo = _dd_add(hi[n], lo[n], -hi[k], -lo[k])
    chi, clo = _dd_add(chi, clo, -hi[nk], -lo[nk])

    interior = (p > 0.0) & (p < 1.0)
    safe_p = np.where(interior, p, 0.5)
    a_hi, a_lo = _two_prod(k.astype(np.float64), np.log(safe_p))
    b_hi, b_lo = _two_prod(nk.astype(np.float64), np.log1p(-safe_p))
    s_hi, s_lo = _dd_add(chi, clo, a_hi, a_lo)
    s_hi, s_lo = _dd_add(s_hi, s_lo, b_hi, b_lo)

    edge = np.where(p == 0.0, np.where(k == 0, 0.0, -np.inf), np.where(k == n, 0.0, -np.inf))
    s_hi = np.where(interior, s_hi, edge)
    s_lo = np.where(interior, s_lo, 0.0)
    return s_hi, s_lo


def _scalar(out):
    return out if out.ndim else float(out)


def binomial_logpmf(n, k, p):
    """Natural log of the binomial point probability ``Pr(X = k)``, ``X ~ Bin(n, p)``.

    Broadcasts over array arguments.  Returns ``-inf`` for impossible
    outcomes (``p = 0`` with ``k > 0``, ``p = 1`` with ``k < n``).
    """
    hi, lo = _binomial_logpmf_dd(n, k, p)
    return _scalar(hi + lo)


def _exp_dd(log_hi, log_lo):
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(log_hi) * (1.0 + log_lo)
    return np.where(np.isneginf(log_hi), 0.0, out)


def binomial_pmf(n, k, p):
    """Binomial point probability ``n!/((n-k)! k!) p^k (1-p)^(n-k)``."""
    return _scalar(_exp_dd(*_binomial_logpmf_dd(n, k, p)))


def _poisson_logpmf_dd(lam, k):
    lam, k = np.broadcast_arrays(np.asarray(lam, dtype=np.float64), np.asarray(k, dtype=np.int64))
    if np.any(k < 0):
        raise ValueError("k must be non-negative")
    if np.any(~(lam >= 0.0)) or np.any(np.isinf(lam)):
        raise ValueError("lambda must be finite and non-negative")
    if k.size:
        _TABLE.ensure(int(k.max()))
    positive = lam > 0.0
    safe = np.where(positive, lam, 1.0)
    a_hi, a_lo = _two_prod(k.astype(np.float64), np.log(safe))
    s_hi, s_lo = _dd_add(-lam, np.zeros_like(lam), a_hi, a_lo)
    s_hi, s_lo = _dd_add(s_hi, s_lo, -_TABLE.hi[k], -_TABLE.lo[k])
    s_hi = np.where(positive, s_hi, np.where(k == 0, 0.0, -np.inf))
    s_lo = np.where(positive, s_lo, 0.0)
    return s_hi, s_lo


def poisson_logpmf(lam, k):
    """Natural log of ``exp(-lam) lam^k / k!``."""
    hi, lo = _poisson_logpmf_dd(lam, k)
    return _scalar(hi + lo)


def poisson_pmf(lam, k):
    """Poisson point probability ``exp(-lam) lam^k / k!``."""
    return _scalar(_exp_dd(*_poisson_logpmf_dd(lam, k)))


@dataclass(frozen=True)
class ApproxPolicy:
    """When to replace the binomial by its Poisson limit.

    The Poisson branch is taken when ``n >= min_votes`` and
    ``n * p <= max_lambda``.  Use :meth:`for_mode` for the detector defaults.
    """

    min_votes: int = 200
    max_lambda: float = 1.0
    enabled: bool = True

    def __post_init__(self):
        if self.min_votes <= 0 or not self.max_lambda > 0:
            raise ValueError("approximation thresholds must be positive")

    @classmethod
    def vertex_to_vertex(cls) -> "ApproxPolicy":
        return cls(200, 1.0)

    @classmethod
    def vertex_to_map(cls) -> "ApproxPolicy":
        return cls(2000, 20.0)

    @classmethod
    def exact(cls) -> "ApproxPolicy":
        return cls(enabled=False)

    @classmethod
    def for_mode(cls, mode: str) -> "ApproxPolicy":
        if mode == "v2v":
            return cls.vertex_to_vertex()
        if mode == "v2m":
            return cls.vertex_to_map()
        raise ValueError(f"unknown mode {mode!r}")

    def use_poisson(self, n, lam):
        n = np.asarray(n)
        lam = np.asarray(lam)
        if not self.enabled:
            return np.zeros(np.broadcast(n, lam).shape, dtype=bool)
        return (n >= self.min_votes) & (lam <= self.max_lambda)


@dataclass(frozen=True)
class ScoringInputs:
    """Votes ``k`` out of ``n`` for one vertex whose null share is ``p``."""

    n: int
    k: int
    p: float

    def __post_init__(self):
        if not 0 <= self.k <= self.n:
            raise ValueError("need 0 <= k <= n")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("need 0 <= p <= 1")

    @classmethod
    def from_counts(cls, n: int, k: int, gamma: int, total: int) -> "ScoringInputs":
        # int / int is correctly rounded, so p is identical for (c*gamma, c*total)
        return cls(n, k, gamma / total)

    @property
    def lam(self) -> float:
        return self.n * self.p


def vote_logprob(n, k, p, policy: ApproxPolicy):
    """Vectorised log point probability with the policy's Poisson switch."""
    n, k, p = np.broadcast_arrays(
        np.asarray(n, dtype=np.int64), np.asarray(k, dtype=np.int64), np.asarray(p, dtype=np.float64)
    )
    lam = n * p
    poisson = policy.use_poisson(n, lam)
    out = np.empty(n.shape)
    if np.any(poisson):
        out[poisson] = poisson_logpmf(lam[poisson], k[poisson])
    if np.any(~poisson):
        rest = ~poisson
        out[rest] = binomial_logpmf(n[rest], k[rest], p[rest])
    return _scalar(out)


def vote_probability(inp: ScoringInputs, policy: ApproxPolicy) -> float:
    """Point probability of ``inp.k`` votes under the null, per ``policy``."""
    if policy.use_poisson(inp.n, inp.lam):
        return poisson_pmf(inp.lam, inp.k)
    return binomial_pmf(inp.n, inp.k, inp.p)
