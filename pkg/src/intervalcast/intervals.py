"""Interval algebra for the conditioning covariate.

Contains the two interval samplers (continuous with a minimum length,
discrete over an equal-length partition), the exponential decay weight that
softens the interval indicator, and the partition-intersection map used by
the patching strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# How far cell-aligned query endpoints are pulled inward before the closed
# intersection test, so a query does not pick up cells it merely touches.
_BOUNDARY_SHRINK = 1e-9


@dataclass(frozen=True)
class Interval:
    """A closed sub-range ``[lo, hi]`` of the normalized value domain [0, 1]."""

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ConfigError(
                f"invalid interval [{self.lo}, {self.hi}]: need 0 <= lo <= hi <= 1"
            )

    @property
    def midpoint(self) -> float:
        return (self.hi + self.lo) / 2.0

    @property
    def half_width(self) -> float:
        return (self.hi - self.lo) / 2.0

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def __str__(self) -> str:
        return f"[{self.lo:g}, {self.hi:g}]"


FULL_DOMAIN = Interval(0.0, 1.0)


@dataclass(frozen=True)
class UniformSampler:
    """Uniform sampler over intervals of length at least ``delta``.

    The distribution is factorized: lo ~ U[0, 1-delta], then
    hi ~ U[lo+delta, 1].
    """

    delta: float

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        if not (0.0 <= self.delta < 1.0):
            raise ConfigError(f"delta must be in [0, 1), got {self.delta}")


def sample_uniform(sampler: UniformSampler, rng: np.random.Generator) -> Interval:
    lo = rng.uniform(0.0, 1.0 - sampler.delta)
    hi = rng.uniform(lo + sampler.delta, 1.0)
    return Interval(min(lo, 1.0), min(hi, 1.0))


@dataclass(frozen=True)
class DiscretePartition:
    """``L`` equal-length cells ``[i/L, (i+1)/L]`` covering [0, 1]."""

    L: int
    intervals: tuple[Interval, ...] = ()

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError(f"partition size must be >= 1, got {self.L}")
        if not self.intervals:
            cells = tuple(
                Interval(i / self.L, (i + 1) / self.L) for i in range(self.L)
            )
            object.__setattr__(self, "intervals", cells)
            return
        if len(self.intervals) != self.L:
            raise ConfigError(
                f"partition declares L={self.L} but holds {len(self.intervals)} cells"
            )
        if self.intervals[0].lo != 0.0 or self.intervals[-1].hi != 1.0:
            raise ConfigError("partition cells must cover [0, 1] exactly")
        for left, right in zip(self.intervals, self.intervals[1:]):
            if left.hi != right.lo:
                raise ConfigError(
                    f"partition cells must be contiguous: {left} then {right}"
                )


def sample_discrete(partition: DiscretePartition, rng: np.random.Generator) -> Interval:
    """One partition cell chosen uniformly (probability 1/L each)."""
    return partition.intervals[int(rng.integers(0, partition.L))]


@dataclass(frozen=True)
class DecaySpec:
    """Decay rate ``nu`` in [0, inf]; infinity means hard indicator behavior."""

    nu: float

    def __post_init__(self):
        object.__setattr__(self, "nu", float(self.nu))
        if not (self.nu >= 0.0):
            raise ConfigError(f"decay rate must be >= 0, got {self.nu}")


INDICATOR = DecaySpec(math.inf)


def decay_weight(y: float, interval: Interval, spec: DecaySpec) -> float:
    """exp(-nu * max(0, |y - midpoint| - half_width)); indicator at nu=inf."""
    if math.isinf(spec.nu):
        return 1.0 if interval.lo <= y <= interval.hi else 0.0
    excess = max(0.0, abs(y - interval.midpoint) - interval.half_width)
    return math.exp(-spec.nu * excess)


def target_weights(
    targets: np.ndarray, interval: Interval, spec: DecaySpec
) -> np.ndarray:
    """Per-sample product of decay weights over all target entries.

    ``targets`` has shape (B, tau, n); the result has shape (B,). With
    nu=inf this is the exact indicator of every entry lying in the closed
    interval.
    """
    t = np.asarray(targets, dtype=np.float64)
    if math.isinf(spec.nu):
        inside = (t >= interval.lo) & (t <= interval.hi)
        return inside.all(axis=(1, 2)).astype(np.float64)
    excess = np.maximum(0.0, np.abs(t - interval.midpoint) - interval.half_width)
    return np.exp(-spec.nu * excess).prod(axis=(1, 2))


def target_weight(target: np.ndarray, interval: Interval, spec: DecaySpec) -> float:
    """Product of :func:`decay_weight` over one tau x n target window."""
    t = np.asarray(target, dtype=np.float64)
    return float(target_weights(t[None, ...], interval, spec)[0])


def intersecting(partition: DiscretePartition, query: Interval) -> list[Interval]:
    """Partition cells whose closed intersection with ``query`` is non-empty.

    A query exactly equal to one cell returns just that cell. Otherwise
    query endpoints that coincide with a cell boundary are pulled inward by
    1e-9 first, so the result does not include cells that only touch the
    query at a shared endpoint. Cells come back in ascending order.
    """
    for cell in partition.intervals:
        if cell.lo == query.lo and cell.hi == query.hi:
            return [cell]
    boundaries = {c.lo for c in partition.intervals}
    boundaries.add(partition.intervals[-1].hi)
    lo, hi = query.lo, query.hi
    if lo in boundaries and lo + _BOUNDARY_SHRINK <= hi:
        lo = lo + _BOUNDARY_SHRINK
    if hi in boundaries and hi - _BOUNDARY_SHRINK >= lo:
        hi = hi - _BOUNDARY_SHRINK
    return [c for c in partition.intervals if c.lo <= hi and lo <= c.hi]


def encode_covariate(interval: Interval) -> np.ndarray:
    """The (lo, hi) vector fed to the model alongside the history window."""
    return np.array([interval.lo, interval.hi], dtype=np.float64)
