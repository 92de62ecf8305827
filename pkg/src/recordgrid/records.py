"""Records (south-west Pareto minima) of planar Poisson samples and the
rectangular tilings they induce.

Two engines produce the two-sided record chain of the quadrant process:

* ``"points"`` samples every Poisson point on ``[0, T]^2`` and grows the
  window by L-shaped shells ``[0, 2T]^2 \\ [0, T]^2``.  A shell point has
  ``t > T`` or ``x > T`` and so never dominates a point inside the old
  window; records found there are final.
* ``"sweep"`` (default) runs the same window expansion but draws only the
  shell's records.  Inside a strip, records are the running minima of a
  Poisson stream, so the next one arrives after ``Exp(1) / m`` with value
  ``m U`` where ``m`` is the current minimum.  The law of the record set is
  identical and the cost is logarithmic in the window side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import Point, PointBatch, PointSet, Rect, sample_ppp
from .rand import RandomStream

DEFAULT_T0 = 16.0
# points engine: window side capped at 2^10 * T0, as in the original design
POINTS_MAX_DOUBLINGS = 10
# sweep engine cost grows like log T, so the cap can sit far out in the tail
SWEEP_MAX_DOUBLINGS = 60


class WindowCapExceeded(RuntimeError):
    """The simulation window would have to grow beyond its configured cap."""

    def __init__(self, side: float, pending: int = 1):
        super().__init__(f"record window exceeded side {side:g} ({pending} realization(s) unfinished)")
        self.side = side
        self.pending = pending


# ---------------------------------------------------------------------------
# skyline extraction


def record_mask(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Mask of points with no other point strictly south-west of them."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if t.size == 0:
        return np.zeros(0, dtype=bool)
    order = np.argsort(t, kind="stable")
    xs = x[order]
    prev_min = np.concatenate(([np.inf], np.minimum.accumulate(xs)[:-1]))
    mask = np.empty(t.size, dtype=bool)
    mask[order] = xs < prev_min
    return mask


def extract_records(points: PointSet) -> list[Point]:
    """Records of a coordinate-distinct point set, sorted by increasing t."""
    mask = record_mask(points.t, points.x)
    t, x = points.t[mask], points.x[mask]
    order = np.argsort(t)
    return [Point(float(a), float(b)) for a, b in zip(t[order], x[order])]


def batch_record_mask(batch: PointBatch) -> np.ndarray:
    """Per-realization record mask for a flattened batch of point sets."""
    total = batch.t.size
    if total == 0:
        return np.zeros(0, dtype=bool)
    n_groups = batch.counts.size
    order = np.lexsort((batch.t, batch.group))
    xrank = np.empty(total, dtype=np.int64)
    xrank[np.argsort(batch.x, kind="stable")] = np.arange(total)
    # later groups get smaller offsets, so a global running minimum never
    # leaks across a group boundary
    key = (n_groups - batch.group[order]).astype(np.int64) * total + xrank[order]
    prev = np.concatenate(([np.iinfo(np.int64).max], np.minimum.accumulate(key)[:-1]))
    mask = np.empty(total, dtype=bool)
    mask[order] = key < prev
    return mask


# ---------------------------------------------------------------------------
# tile matrices


@dataclass(frozen=True)
class TileMatrix:
    """Rank-1 matrix of tile areas, ``entries[i, j] = heights[i] * widths[j]``.

    Rows run north to south, columns west to east.
    """

    heights: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        h = np.array(self.heights, dtype=np.float64).reshape(-1)
        w = np.array(self.widths, dtype=np.float64).reshape(-1)
        if h.size != w.size or h.size == 0:
            raise ValueError("heights and widths must be nonempty and of equal length")
        if (h < 0).any() or (w < 0).any():
            raise ValueError("tile sides must be nonnegative")
        h.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "widths", w)

    @property
    def n(self) -> int:
        return self.heights.size

    @property
    def entries(self) -> np.ndarray:
        return np.outer(self.heights, self.widths)

    def total(self) -> float:
        return float(self.heights.sum() * self.widths.sum())

    def __eq__(self, other):
        if not isinstance(other, TileMatrix):
            return NotImplemented
        return (np.array_equal(self.heights, other.heights)
                and np.array_equal(self.widths, other.widths))

    def __hash__(self):
        return hash((self.heights.tobytes(), self.widths.tobytes()))


def antidiagonal_reflect(m: TileMatrix) -> TileMatrix:
    """Exchange entry ``(i, j)`` with ``(n-j+1, n-i+1)``."""
    return TileMatrix(heights=m.widths[::-1], widths=m.heights[::-1])


def reflect_entries(entries: np.ndarray) -> np.ndarray:
    """Antidiagonal reflection of the trailing two axes of an array."""
    return np.swapaxes(entries[..., ::-1, ::-1], -1, -2)


def max_abs_minor(entries: np.ndarray) -> float:
    """Largest |2x2 minor| of a square matrix (0 for rank <= 1)."""
    e = np.asarray(entries, dtype=np.float64)
    if e.shape[-1] < 2:
        return 0.0
    # minors over all row pairs (i, k) and column pairs (j, l)
    m = e[:, None, :, None] * e[None, :, None, :] - e[:, None, None, :] * e[None, :, :, None]
    return float(np.abs(m).max())


def tiles_from_records(t: np.ndarray, x: np.ndarray):
    """Heights and widths of the tiles spanned between consecutive records.

    ``t`` and ``x`` have shape ``(..., n + 1)``; tiles sit between the
    first and last record.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return x[..., :-1] - x[..., 1:], t[..., 1:] - t[..., :-1]


# ---------------------------------------------------------------------------
# record chains


@dataclass(frozen=True)
class RecordChain:
    """Consecutive records of the quadrant process, sorted by increasing t.

    ``records`` holds labels ``1 - split_index, ..., `` so that the entry at
    ``split_index`` is ``r_1``, the first record with ``t > x``.
    """

    records: PointSet
    split_index: int
    window_side: float = math.nan
    expansions: int = 0

    def __post_init__(self):
        n = len(self.records)
        if not 1 <= self.split_index < n:
            raise ValueError("chain must contain records on both sides of the bisectrix")

    @property
    def labels(self) -> range:
        first = 1 - self.split_index
        return range(first, first + len(self.records))

    def has(self, k: int) -> bool:
        return k in self.labels

    def record(self, k: int) -> Point:
        if not self.has(k):
            raise IndexError(f"record r_{k} is not in this chain (labels {self.labels.start}..{self.labels.stop - 1})")
        i = self.split_index + k - 1
        return Point(float(self.records.t[i]), float(self.records.x[i]))


def tile_matrix_from_chain(chain: RecordChain, k: int, n: int) -> TileMatrix:
    """The ``n x n`` tile matrix spanned on records ``r_k, ..., r_{k+n}``."""
    if n < 1:
        raise ValueError("matrix order must be positive")
    if not (chain.has(k) and chain.has(k + n)):
        raise IndexError(f"chain lacks records r_{k}..r_{k + n}")
    i = chain.split_index + k - 1
    h, w = tiles_from_records(chain.records.t[i:i + n + 1], chain.records.x[i:i + n + 1])
    return TileMatrix(h, w)


class ChainBatch(NamedTuple):
    """Records ``r_{k_min}..r_{k_max}`` of many independent chains.

    Column ``j`` of ``t``/``x`` holds label ``k_min + j``.
    """

    k_min: int
    t: np.ndarray
    x: np.ndarray
    window_side: np.ndarray
    expansions: np.ndarray

    @property
    def k_max(self) -> int:
        return self.k_min + self.t.shape[1] - 1

    def column(self, k: int) -> int:
        j = k - self.k_min
        if not 0 <= j < self.t.shape[1]:
            raise IndexError(f"label {k} outside {self.k_min}..{self.k_max}")
        return j

    def tiles(self, k: int, n: int):
        """Heights and widths, each of shape ``(size, n)``, for ``M_{k,n}``."""
        a, b = self.column(k), self.column(k + n)
        return tiles_from_records(self.t[:, a:b + 1], self.x[:, a:b + 1])

    def tile_entries(self, k: int, n: int) -> np.ndarray:
        h, w = self.tiles(k, n)
        return h[:, :, None] * w[:, None, :]

    def chain(self, i: int) -> RecordChain:
        return RecordChain(PointSet(self.t[i], self.x[i]), split_index=1 - self.k_min,
                           window_side=float(self.window_side[i]),
                           expansions=int(self.expansions[i]))


def _check_labels(k_min: int, k_max: int):
    if k_min > 0 or k_max < 1:
        raise ValueError(f"need k_min <= 0 < 1 <= k_max, got {k_min}, {k_max}")


def simulate_quadrant_chain(stream: RandomStream, k_min: int, k_max: int, *,
                            engine: str = "sweep", t0: float = DEFAULT_T0,
                            max_doublings: int | None = None) -> RecordChain:
    """Records ``r_{k_min}..r_{k_max}`` of a unit Poisson process on the quadrant."""
    _check_labels(k_min, k_max)
    if engine == "points":
        return _points_chain(stream, k_min, k_max, t0,
                             POINTS_MAX_DOUBLINGS if max_doublings is None else max_doublings)
    if engine != "sweep":
        raise ValueError(f"unknown engine {engine!r}")
    batch = simulate_quadrant_chains(stream, k_min, k_max, 1, t0=t0, max_doublings=max_doublings)
    return batch.chain(0)


def _split(t: np.ndarray, x: np.ndarray) -> int | None:
    below = np.flatnonzero(t > x)
    if below.size == 0 or below[0] == 0:
        return None
    return int(below[0])


def _points_chain(stream, k_min, k_max, t0, max_doublings) -> RecordChain:
    side = t0
    pts = sample_ppp(stream, Rect.square(side))
    expansions = 0
    while True:
        rec = extract_records(pts)
        t = np.array([p.t for p in rec])
        x = np.array([p.x for p in rec])
        split = _split(t, x)
        if split is not None and split + k_min - 1 >= 0 and split + k_max - 1 < t.size:
            keep = slice(split + k_min - 1, split + k_max)
            return RecordChain(PointSet(t[keep], x[keep]), 1 - k_min, window_side=side,
                               expansions=expansions)
        if expansions >= max_doublings:
            raise WindowCapExceeded(side)
        top = sample_ppp(stream, Rect(0.0, side, side, 2 * side))
        right = sample_ppp(stream, Rect(side, 2 * side, 0.0, 2 * side))
        grown = pts.union(top).union(right)
        if grown.coordinates_distinct():
            pts = grown
            side *= 2
            expansions += 1


def simulate_quadrant_chains(stream: RandomStream, k_min: int, k_max: int, size: int, *,
                             t0: float = DEFAULT_T0,
                             max_doublings: int | None = None) -> ChainBatch:
    """``size`` independent chains from the record-sweep engine, in lockstep."""
    _check_labels(k_min, k_max)
    if max_doublings is None:
        max_doublings = SWEEP_MAX_DOUBLINGS
    n_lo, n_hi = 1 - k_min, k_max
    lo_t = np.zeros((size, n_lo)); lo_x = np.zeros((size, n_lo))
    hi_t = np.zeros((size, n_hi)); hi_x = np.zeros((size, n_hi))
    lo_n = np.zeros(size, dtype=np.int64)
    hi_n = np.zeros(size, dtype=np.int64)
    has_any = np.zeros(size, dtype=bool)
    first_t = np.zeros(size)          # time of the earliest record found
    last_x = np.full(size, t0)        # running minimum for the forward sweep
    side = np.full(size, t0)
    expansions = np.zeros(size, dtype=np.int64)

    def forward(idx, start, horizon):
        # records with start < t <= horizon and x below the current minimum
        tf = start.copy()
        while idx.size:
            eu = stream.uniforms((idx.size, 2))
            m = last_x[idx]
            tf = tf + -np.log(eu[:, 0]) / m
            live = tf <= horizon
            idx, tf, m, u = idx[live], tf[live], m[live], eu[live, 1]
            horizon = horizon[live]
            if not idx.size:
                break
            xn = m * u
            fresh = ~has_any[idx]
            first_t[idx[fresh]] = tf[fresh]
            has_any[idx] = True
            last_x[idx] = xn
            found = hi_n[idx] > 0
            to_hi = found | (tf > xn)
            hi_i = idx[to_hi]
            slot = hi_n[hi_i]
            hi_t[hi_i, slot] = tf[to_hi]
            hi_x[hi_i, slot] = xn[to_hi]
            hi_n[hi_i] += 1
            lo_i = idx[~to_hi]
            lo_t[lo_i, :-1] = lo_t[lo_i, 1:]; lo_x[lo_i, :-1] = lo_x[lo_i, 1:]
            lo_t[lo_i, -1] = tf[~to_hi]; lo_x[lo_i, -1] = xn[~to_hi]
            lo_n[lo_i] = np.minimum(lo_n[lo_i] + 1, n_lo)
            keep = hi_n[idx] < n_hi
            idx, tf, horizon = idx[keep], tf[keep], horizon[keep]

    def backward(idx, bottom, top):
        # records of the strip [0, first_t) x (bottom, top], generated by increasing x
        xb = bottom.copy()
        mb = np.where(has_any[idx], first_t[idx], bottom)
        while idx.size:
            eu = stream.uniforms((idx.size, 2))
            xb = xb + -np.log(eu[:, 0]) / mb
            live = xb <= top
            idx, xb, mb, u, top = idx[live], xb[live], mb[live], eu[live, 1], top[live]
            if not idx.size:
                break
            tn = mb * u
            fresh = ~has_any[idx]
            last_x[idx[fresh]] = xb[fresh]
            has_any[idx] = True
            first_t[idx] = tn
            slot = n_lo - 1 - lo_n[idx]
            lo_t[idx, slot] = tn
            lo_x[idx, slot] = xb
            lo_n[idx] += 1
            mb = tn
            keep = lo_n[idx] < n_lo
            idx, xb, mb, top = idx[keep], xb[keep], mb[keep], top[keep]

    everyone = np.arange(size)
    forward(everyone, np.zeros(size), side.copy())
    pending = everyone[(lo_n < n_lo) | (hi_n < n_hi)]
    while pending.size:
        if expansions[pending[0]] >= max_doublings:
            raise WindowCapExceeded(float(side[pending[0]]), pending.size)
        s = side[pending]
        need_lo = pending[lo_n[pending] < n_lo]
        backward(need_lo, side[need_lo].copy(), 2 * side[need_lo])
        # with no record yet the forward minimum is the new window top
        empty = pending[~has_any[pending]]
        last_x[empty] = 2 * side[empty]
        need_hi = pending[hi_n[pending] < n_hi]
        forward(need_hi, side[need_hi].copy(), 2 * side[need_hi])
        side[pending] = 2 * s
        expansions[pending] += 1
        pending = pending[(lo_n[pending] < n_lo) | (hi_n[pending] < n_hi)]

    return ChainBatch(k_min, np.hstack([lo_t, hi_t]), np.hstack([lo_x, hi_x]), side, expansions)


# ---------------------------------------------------------------------------
# records in a finite box


@dataclass(frozen=True)
class BoxRecordResult:
    rect: Rect
    records: list[Point]
    tile_matrix: TileMatrix


def box_tile_matrix(rect: Rect, records) -> TileMatrix:
    """Tiling of ``rect`` by grid lines through the (t-sorted) records."""
    t = [rect.t_lo] + [p[0] for p in records] + [rect.t_hi]
    x = [rect.x_hi] + [p[1] for p in records] + [rect.x_lo]
    h, w = tiles_from_records(np.array(t), np.array(x))
    return TileMatrix(h, w)


def box_records(stream: RandomStream, rect: Rect) -> BoxRecordResult:
    """Poisson sample on ``rect``, its records, and the induced tiling."""
    rec = extract_records(sample_ppp(stream, rect))
    return BoxRecordResult(rect, rec, box_tile_matrix(rect, rec))


@dataclass
class BoxBatch:
    """Records of many independent realizations on one rectangle.

    Records are flattened in t-order within each realization; ``group``
    names the realization.
    """

    rect: Rect
    counts: np.ndarray
    group: np.ndarray
    t: np.ndarray
    x: np.ndarray
    _starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self._starts = np.concatenate(([0], np.cumsum(self.counts)[:-1])).astype(np.int64)

    def __len__(self):
        return self.counts.size

    def result(self, i: int) -> BoxRecordResult:
        a = self._starts[i]
        rec = [Point(float(p), float(q)) for p, q in
               zip(self.t[a:a + self.counts[i]], self.x[a:a + self.counts[i]])]
        return BoxRecordResult(self.rect, rec, box_tile_matrix(self.rect, rec))

    def tiles_with_count(self, n: int):
        """Heights and widths, shape ``(k, n + 1)``, of realizations with n records."""
        sel = np.flatnonzero(self.counts == n)
        cols = self._starts[sel][:, None] + np.arange(n)[None, :]
        k = sel.size
        r = self.rect
        t = np.hstack([np.full((k, 1), r.t_lo), self.t[cols], np.full((k, 1), r.t_hi)])
        x = np.hstack([np.full((k, 1), r.x_hi), self.x[cols], np.full((k, 1), r.x_lo)])
        return tiles_from_records(t, x)

    def entries_with_count(self, n: int) -> np.ndarray:
        h, w = self.tiles_with_count(n)
        return h[:, :, None] * w[:, None, :]


def box_batch_from_points(points: PointBatch, rect: Rect) -> BoxBatch:
    """Record each realization of a flattened Poisson batch."""
    mask = batch_record_mask(points)
    g, t, x = points.group[mask], points.t[mask], points.x[mask]
    order = np.lexsort((t, g))
    g, t, x = g[order], t[order], x[order]
    counts = np.bincount(g, minlength=points.counts.size)
    return BoxBatch(rect, counts, g, t, x)


def sample_box_batch(stream: RandomStream, rect: Rect, size: int) -> BoxBatch:
    """Box records of ``size`` realizations by the running-minimum sweep.

    Same law as :func:`box_records` realization by realization, without
    drawing the dominated points.
    """
    rows_g, rows_t, rows_x = [], [], []
    idx = np.arange(size)
    t = np.full(size, rect.t_lo)
    m = np.full(size, rect.height)   # current minimum, measured from x_lo
    while idx.size:
        eu = stream.uniforms((idx.size, 2))
        t = t + -np.log(eu[:, 0]) / m
        live = t < rect.t_hi
        idx, t, m = idx[live], t[live], m[live] * eu[live, 1]
        rows_g.append(idx); rows_t.append(t); rows_x.append(rect.x_lo + m)
    g = np.concatenate(rows_g) if rows_g else np.zeros(0, dtype=np.int64)
    tt = np.concatenate(rows_t) if rows_t else np.zeros(0)
    xx = np.concatenate(rows_x) if rows_x else np.zeros(0)
    order = np.lexsort((tt, g))
    counts = np.bincount(g, minlength=size)
    return BoxBatch(rect, counts, g[order], tt[order], xx[order])
