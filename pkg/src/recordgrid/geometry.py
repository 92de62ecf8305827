"""Points and rectangles in the open positive quadrant, Poisson sampling on
rectangles, and the two measure-preserving maps used throughout."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .rand import RandomStream

MAX_COLLISION_RESAMPLES = 64


class Point(NamedTuple):
    t: float
    x: float


@dataclass(frozen=True)
class Rect:
    t_lo: float
    t_hi: float
    x_lo: float
    x_hi: float

    def __post_init__(self):
        vals = (self.t_lo, self.t_hi, self.x_lo, self.x_hi)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"rectangle bounds must be finite and nonnegative: {vals}")
        if not (self.t_lo < self.t_hi and self.x_lo < self.x_hi):
            raise ValueError(f"degenerate rectangle: {vals}")

    @classmethod
    def square(cls, side: float) -> "Rect":
        return cls(0.0, side, 0.0, side)

    @property
    def width(self) -> float:
        return self.t_hi - self.t_lo

    @property
    def height(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, p: Point) -> bool:
        return self.t_lo < p.t < self.t_hi and self.x_lo < p.x < self.x_hi


@dataclass(frozen=True)
class PointSet:
    """Immutable set of points stored column-wise."""

    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).copy()
        x = np.asarray(self.x, dtype=np.float64).copy()
        if t.shape != x.shape or t.ndim != 1:
            raise ValueError("t and x must be 1-d arrays of equal length")
        t.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_points(cls, points) -> "PointSet":
        pts = list(points)
        return cls(np.array([p[0] for p in pts], dtype=np.float64),
                   np.array([p[1] for p in pts], dtype=np.float64))

    def __len__(self):
        return self.t.size

    def __iter__(self):
        return (Point(float(a), float(b)) for a, b in zip(self.t, self.x))

    def union(self, other: "PointSet") -> "PointSet":
        return PointSet(np.concatenate([self.t, other.t]), np.concatenate([self.x, other.x]))

    def coordinates_distinct(self) -> bool:
        return np.unique(self.t).size == self.t.size and np.unique(self.x).size == self.x.size


def sample_ppp(stream: RandomStream, rect: Rect) -> PointSet:
    """Unit-intensity Poisson process on ``rect``.

    The count is drawn first, then ``(t, x)`` pairs in that order. A set with
    a repeated coordinate is discarded and redrawn in full.
    """
    for _ in range(MAX_COLLISION_RESAMPLES):
        m = stream.next_poisson_count(rect.area)
        u = stream.uniforms((m, 2))
        pts = PointSet(rect.t_lo + rect.width * u[:, 0], rect.x_lo + rect.height * u[:, 1])
        if pts.coordinates_distinct():
            return pts
    raise RuntimeError(f"could not draw a coordinate-distinct point set on {rect}")


class PointBatch(NamedTuple):
    """Many independent point sets flattened; ``group`` is the realization index."""

    counts: np.ndarray
    group: np.ndarray
    t: np.ndarray
    x: np.ndarray


def sample_ppp_batch(stream: RandomStream, rect: Rect, size: int) -> PointBatch:
    """``size`` independent realizations of :func:`sample_ppp` drawn in bulk.

    Counts come first for all realizations, then the points. A collision
    inside any realization redraws the whole batch.
    """
    for _ in range(MAX_COLLISION_RESAMPLES):
        counts = stream.poisson_counts(rect.area, size)
        total = int(counts.sum())
        u = stream.uniforms((total, 2))
        group = np.repeat(np.arange(size), counts)
        t = rect.t_lo + rect.width * u[:, 0]
        x = rect.x_lo + rect.height * u[:, 1]
        if not (_has_collision(group, t) or _has_collision(group, x)):
            return PointBatch(counts, group, t, x)
    raise RuntimeError(f"could not draw a coordinate-distinct batch on {rect}")


def _has_collision(group: np.ndarray, coord: np.ndarray) -> bool:
    order = np.lexsort((coord, group))
    return bool(((np.diff(coord[order]) == 0) & (np.diff(group[order]) == 0)).any())


def hyperbolic_shift(p: Point, lam: float) -> Point:
    """Area- and order-preserving map ``(t, x) -> (lam t, x / lam)``."""
    if not lam > 0:
        raise ValueError(f"shift factor must be positive, got {lam}")
    return Point(lam * p[0], p[1] / lam)


def shift_rect(rect: Rect, lam: float) -> Rect:
    if not lam > 0:
        raise ValueError(f"shift factor must be positive, got {lam}")
    return Rect(lam * rect.t_lo, lam * rect.t_hi, rect.x_lo / lam, rect.x_hi / lam)


def reflect_bisectrix(p: Point) -> Point:
    return Point(p[1], p[0])


def dominates_sw(a: Point, b: Point) -> bool:
    """True iff ``a`` lies strictly south-west of ``b``."""
    return a[0] < b[0] and a[1] < b[1]
