"""Seeded, reproducible sampling for the distributions the rounding pipeline uses.

All integer-valued distributions (Bernoulli, Binomial, Poisson, Poisson
conditioned on being >= 1) are sampled by inversion against a truncated CDF
table (tail mass below 1e-15), never by rejection, so every draw consumes
exactly one uniform and reruns are bit-reproducible.  Exponentials use the
inverse transform; rate 0 is the constant +inf.

RngStream wraps a PCG64 generator keyed by (seed, stream_id).  ``derive``
builds statistically independent child streams from integer keys, which is how
the Monte Carlo drivers give each trial block its own stream regardless of how
blocks are scheduled across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InputError

PMF_TAIL = 1e-15


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise InputError(f"Bernoulli parameter {self.p} outside [0, 1]")


@dataclass(frozen=True)
class Binomial:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.p <= 1:
            raise InputError(f"invalid Binomial({self.n}, {self.p})")


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise InputError(f"Poisson rate {self.lam} negative")


@dataclass(frozen=True)
class PoissonGeq1:
    """Poisson(lam) conditioned on the outcome being at least 1."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise InputError("PoissonGeq1 requires a strictly positive rate")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise InputError(f"Exponential rate {self.rate} negative")


Distribution = Union[Bernoulli, Binomial, Poisson, PoissonGeq1, Exponential]


class RngStream:
    """Reproducible uniform source; (seed, stream_id) pins the whole sequence."""

    def __init__(self, seed: int, stream_id: int = 0, _extra: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._extra = tuple(int(k) for k in _extra)
        ss = np.random.SeedSequence((self.seed, self.stream_id) + self._extra)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def derive(self, *keys: int) -> "RngStream":
        """Independent child stream; same keys always give the same child."""
        return RngStream(self.seed, self.stream_id, self._extra + tuple(keys))

    def uniform(self, size=None):
        """Uniforms in [0, 1); scalar float when size is None."""
        if size is None:
            return float(self._gen.random())
        return self._gen.random(size)


def poisson_pmf(lam: float, tail: float = PMF_TAIL) -> np.ndarray:
    """Poisson pmf on 0..K where the truncated tail mass is below ``tail``.

    The target tail is floored at 5e-16; float accumulation cannot certify
    anything smaller.
    """
    if lam == 0:
        return np.array([1.0])
    tail = max(tail, 5e-16)
    terms = [math.exp(-lam)]
    total = terms[0]
    k = 0
    while 1.0 - total > tail:
        k += 1
        terms.append(terms[-1] * lam / k)
        total += terms[-1]
        if k > 4000:
            raise InputError(f"Poisson rate {lam} too large for inversion tables")
    return np.array(terms)


def poisson_geq1_pmf(lam: float, tail: float = PMF_TAIL) -> np.ndarray:
    """Renormalized Poisson pmf on 0..K with mass only on k >= 1."""
    base = poisson_pmf(lam, tail * min(1.0, -math.expm1(-lam)))
    out = base / -math.expm1(-lam)
    out[0] = 0.0
    return out


def binomial_pmf(n: int, p: float, tail: float = PMF_TAIL) -> np.ndarray:
    """Binomial pmf on 0..K, truncated once the remaining tail is below ``tail``."""
    if p == 0 or n == 0:
        return np.array([1.0])
    if p == 1:
        return np.concatenate([np.zeros(n), [1.0]])
    terms = [(1.0 - p) ** n]
    total = terms[0]
    k = 0
    while 1.0 - total > tail and k < n:
        ratio = (n - k) / (k + 1) * p / (1.0 - p)
        k += 1
        terms.append(terms[-1] * ratio)
        total += terms[-1]
    return np.array(terms)


def pmf_table(dist: Distribution, tail: float = PMF_TAIL) -> np.ndarray:
    if isinstance(dist, Bernoulli):
        return np.array([1.0 - dist.p, dist.p])
    if isinstance(dist, Binomial):
        return binomial_pmf(dist.n, dist.p, tail)
    if isinstance(dist, Poisson):
        return poisson_pmf(dist.lam, tail)
    if isinstance(dist, PoissonGeq1):
        return poisson_geq1_pmf(dist.lam, tail)
    raise InputError(f"{dist} has no pmf table")


def sample_from_pmf(pmf: np.ndarray, stream: RngStream, size=None):
    """Inversion sampling: one uniform per draw against the cumulative table."""
    cdf = np.cumsum(pmf)
    if size is None:
        return int(np.searchsorted(cdf, stream.uniform(), side="right"))
    return np.searchsorted(cdf, stream.uniform(size), side="right").astype(np.int64)


def draw(dist: Distribution, stream: RngStream):
    """One sample from ``dist``; integer counts for the discrete laws."""
    if isinstance(dist, Exponential):
        if dist.rate == 0:
            return math.inf
        return -math.log1p(-stream.uniform()) / dist.rate
    if isinstance(dist, Bernoulli):
        return int(stream.uniform() < dist.p)
    return sample_from_pmf(pmf_table(dist), stream)


def keep_probability(x_e) -> float:
    """(1 - exp(-x)) / x, evaluated in the cancellation-free expm1 form."""
    xf = float(x_e)
    if xf < 0 or xf > 1:
        raise InputError(f"subsampling needs x in (0, 1], got {x_e}")
    if xf == 0:
        raise InputError("subsampling is undefined at x = 0")
    return -math.expm1(-xf) / xf


def independent_round(x: Sequence, stream: RngStream) -> frozenset[int]:
    """Random subset keeping each index e independently with probability x_e."""
    u = stream.uniform(len(x)) if len(x) else np.empty(0)
    return frozenset(e for e in range(len(x)) if u[e] < float(x[e]))


def subsample(a: Iterable[int], x: Sequence, stream: RngStream) -> frozenset[int]:
    """Keep each e of a independently with probability (1 - exp(-x_e)) / x_e."""
    kept = []
    for e in sorted(set(a)):
        if x[e] == 0:
            raise InputError(f"edge {e} in the sampled set has x_e = 0")
        if stream.uniform() < keep_probability(x[e]):
            kept.append(e)
    return frozenset(kept)
