"""Observation models, likelihood ratios, duration laws and RNG streams.

Everything downstream (detectors, Monte Carlo, the exact oracle, the streak
pipeline) consumes observations and log-likelihood ratios through the small
API defined here.  Models are immutable after construction; randomness always
flows through an explicit :class:`RngStream`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "RngStream",
    "GaussianModel",
    "DiscreteModel",
    "GeomPrior",
    "Geometric",
    "Fixed",
    "Infinite",
    "INFINITE",
    "DurationLaw",
    "sample_duration",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> int:
    """SplitMix64 finalizer; avalanches a 64-bit value."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by (master_seed, stream_id).

    Two streams with distinct key pairs are statistically independent; the
    same pair always reproduces the same sequence.  ``generator()`` returns a
    fresh generator positioned at the start of the stream, so replaying a
    stream is as simple as calling it again.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", self.master_seed & _MASK64)
        object.__setattr__(self, "stream_id", self.stream_id & _MASK64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RngStream":
        """Derive an independent child stream; no coordination needed."""
        mixed = _splitmix64(self.stream_id ^ ((index & _MASK64) * _GOLDEN & _MASK64))
        return RngStream(self.master_seed, mixed)


# ---------------------------------------------------------------------------
# Observation models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianModel:
    """Signal-plus-noise model: N(0, sigma^2) pre-change, N(theta, sigma^2) post.

    ``llr`` is evaluated after standardizing by sigma, so detector thresholds
    calibrated at sigma=1 carry over unchanged.
    """

    theta: float
    sigma: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0.0) or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be a positive finite real, got {self.sigma}")
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta}")

    def llr(self, y):
        """log f(y) - log g(y); equals theta*y - theta^2/2 for sigma=1."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("observation must be finite")
        s2 = self.sigma * self.sigma
        out = (self.theta * y - 0.5 * self.theta * self.theta) / s2
        return float(out) if out.ndim == 0 else out

    def sample(self, regime: str, rng: RngStream, size=None):
        """Draw observations from g (``pre``) or f (``post``)."""
        mean = self._mean(regime)
        return rng.generator().normal(mean, self.sigma, size=size)

    def _mean(self, regime: str) -> float:
        if regime == "pre":
            return 0.0
        if regime == "post":
            return self.theta
        raise ValueError(f"regime must be 'pre' or 'post', got {regime!r}")

    # Vectorized per-step draws used by the Monte Carlo kernels: the caller
    # owns the generator so one stream can span a whole replication block.
    def increments(self, gen: np.random.Generator, n: int, mean: float, kind: str):
        y = gen.standard_normal(n) + mean / self.sigma
        if kind == "obs":
            return y
        if kind == "llr":
            t = self.theta / self.sigma
            return t * y - 0.5 * t * t
        raise ValueError(f"unknown increment kind {kind!r}")

    def regime_mean(self, regime: str) -> float:
        return self._mean(regime)


@dataclass(frozen=True)
class DiscreteModel:
    """Finite-alphabet model (K <= 4) with pre/post pmf tables.

    Exists to make exact enumeration possible; the Gaussian model admits no
    exhaustive oracle.
    """

    pre: tuple
    post: tuple

    def __post_init__(self):
        g = tuple(float(p) for p in self.pre)
        f = tuple(float(p) for p in self.post)
        object.__setattr__(self, "pre", g)
        object.__setattr__(self, "post", f)
        if not 2 <= len(g) <= 4 or len(g) != len(f):
            raise ValueError("alphabet size must be 2..4 and match across tables")
        for name, table in (("pre", g), ("post", f)):
            if any(p < 0 for p in table):
                raise ValueError(f"{name} pmf has negative mass")
            if abs(sum(table) - 1.0) > 1e-12:
                raise ValueError(f"{name} pmf must sum to 1 within 1e-12")
        if any(gk > 0 and fk == 0 for gk, fk in zip(g, f)):
            raise ValueError("post pmf must be positive wherever pre pmf is")

    @property
    def alphabet_size(self) -> int:
        return len(self.pre)

    def llr(self, y):
        y_arr = np.asarray(y)
        if not np.all(np.isfinite(np.asarray(y, dtype=float))):
            raise ValueError("observation must be finite")
        table = self.llr_table()
        out = table[y_arr]
        return float(out) if out.ndim == 0 else out

    def llr_table(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.post)) - np.log(np.asarray(self.pre))

    def sample(self, regime: str, rng: RngStream, size=None):
        table = self._table(regime)
        return rng.generator().choice(len(table), size=size, p=table)

    def _table(self, regime: str):
        if regime == "pre":
            return np.asarray(self.pre)
        if regime == "post":
            return np.asarray(self.post)
        raise ValueError(f"regime must be 'pre' or 'post', got {regime!r}")

    def increments(self, gen: np.random.Generator, n: int, table, kind: str):
        """Vector of per-step increments; ``table`` is the regime's pmf."""
        symbols = _choice_from_uniform(gen, np.asarray(table), n)
        if kind == "obs":
            return symbols.astype(float)
        if kind == "llr":
            return self.llr_table()[symbols]
        raise ValueError(f"unknown increment kind {kind!r}")


def _choice_from_uniform(gen: np.random.Generator, pmf: np.ndarray, n: int) -> np.ndarray:
    """Inverse-cdf sampling; one uniform per draw keeps stream use predictable."""
    edges = np.cumsum(pmf)
    return np.searchsorted(edges, gen.random(n), side="right").clip(0, len(pmf) - 1)


LlrModel = Union[GaussianModel, DiscreteModel]


# ---------------------------------------------------------------------------
# Duration laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeomPrior:
    """Geometric prior on {1, 2, ...}: pmf(i) = rho * (1 - rho)^(i-1)."""

    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")

    def pmf(self, i: int) -> float:
        if i < 1:
            raise ValueError(f"geometric support starts at 1, got i={i}")
        return self.rho * (1.0 - self.rho) ** (i - 1)

    def sample(self, rng: RngStream, size=None):
        return rng.generator().geometric(self.rho, size=size)


@dataclass(frozen=True)
class Geometric:
    prior: GeomPrior

    def sample(self, rng: RngStream, size=None):
        return self.prior.sample(rng, size=size)


@dataclass(frozen=True)
class Fixed:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"fixed duration must be >= 1, got {self.n}")

    def sample(self, rng: RngStream, size=None):
        if size is None:
            return self.n
        return np.full(size, self.n, dtype=np.int64)


@dataclass(frozen=True)
class Infinite:
    def sample(self, rng: RngStream, size=None):
        if size is None:
            return math.inf
        return np.full(size, math.inf)


INFINITE = Infinite()

DurationLaw = Union[Geometric, Fixed, Infinite]


def sample_duration(law: DurationLaw, rng: RngStream, size=None):
    """Draw a change duration; Fixed is deterministic, Infinite a sentinel."""
    return law.sample(rng, size=size)
