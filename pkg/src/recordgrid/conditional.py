"""Conditional-law checks for records in a finite box.

* tilings of a box given its number of records are invariant under
  antidiagonal reflection;
* the law of the tiling depends on the box only through its area;
* the chain matrix ``M_{1,n}`` given its total area ``v`` matches the
  tiling of an area-``v`` box holding ``n - 1`` records.

Conditioning on a continuous total area is done by accepting draws whose
area falls in ``[v - h, v + h]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Rect
from .rand import RandomStream
from .records import BoxRecordResult, box_records, reflect_entries, sample_box_batch
from .samplers import draw_variables, m1n_entries_from
from .stattest import TestReport, energy_statistic, permutation_test, tame

DEFAULT_MAX_ATTEMPTS = 10**7
MIN_ACCEPTANCE_RATE = 1e-4
_BATCH = 100_000


class ConditioningFailure(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


@dataclass(frozen=True)
class ConditioningWindow:
    v: float
    h: float
    accepted: int
    attempted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else 0.0


def box_records_given_count(stream: RandomStream, rect: Rect, n: int,
                            max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> BoxRecordResult:
    """Redraw :func:`box_records` until it has exactly ``n`` records."""
    if n < 0:
        raise ValueError("record count must be nonnegative")
    for _ in range(max_attempts):
        res = box_records(stream, rect)
        if len(res.records) == n:
            return res
    raise ConditioningFailure(f"no realization with {n} records on {rect}", max_attempts)


def box_entries_given_count(stream: RandomStream, rect: Rect, n: int, size: int,
                            max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> np.ndarray:
    """``size`` tilings with exactly ``n`` records, shape ``(size, n+1, n+1)``."""
    parts, have, attempts = [], 0, 0
    while have < size:
        if attempts >= max_attempts:
            raise ConditioningFailure(f"only {have}/{size} realizations with {n} records", attempts)
        batch = sample_box_batch(stream, rect, _BATCH)
        attempts += _BATCH
        e = batch.entries_with_count(n)
        parts.append(e)
        have += e.shape[0]
    return np.concatenate(parts)[:size]


# -- reflection given the count ----------------------------------------------

def lemma2_reflection_samples(stream: RandomStream, rect: Rect, n: int, size: int):
    """Flattened tilings and, independently, their antidiagonal reflections."""
    a = box_entries_given_count(stream.spawn("plain"), rect, n, size)
    b = reflect_entries(box_entries_given_count(stream.spawn("reflected"), rect, n, size))
    return a.reshape(size, -1), b.reshape(size, -1)


def padded_tiling_codes(batch, max_records: int) -> np.ndarray:
    """Fixed-length code ``(count, tiling padded to (max_records+1)^2)``.

    Realizations with more records keep only the count.
    """
    side = max_records + 1
    out = np.zeros((len(batch), 1 + side * side))
    out[:, 0] = batch.counts
    for n in range(max_records + 1):
        sel = np.flatnonzero(batch.counts == n)
        if sel.size:
            e = batch.entries_with_count(n)
            block = np.zeros((sel.size, side, side))
            block[:, :n + 1, :n + 1] = e
            out[sel, 1:] = block.reshape(sel.size, -1)
    return out


def lemma2_unconditional_samples(stream: RandomStream, rect: Rect, size: int, max_records: int = 2):
    """Codes of tilings vs codes of reflected tilings, all record counts pooled."""
    a = sample_box_batch(stream.spawn("plain"), rect, size)
    b = sample_box_batch(stream.spawn("reflected"), rect, size)
    ca = padded_tiling_codes(a, max_records)
    cb = padded_tiling_codes(b, max_records)
    side = max_records + 1
    body = cb[:, 1:].reshape(size, side, side)
    for n in range(max_records + 1):
        sel = cb[:, 0] == n
        sub = body[sel, :n + 1, :n + 1]
        body[sel, :n + 1, :n + 1] = reflect_entries(sub)
    cb[:, 1:] = body.reshape(size, -1)
    return ca, cb


# -- dependence on the area only ----------------------------------------------

def area_summary(batch, n_areas: int = 9) -> np.ndarray:
    """``(count, largest n_areas tamed tile areas in decreasing order, 0-padded)``."""
    out = np.zeros((len(batch), 1 + n_areas))
    out[:, 0] = batch.counts
    for n in np.unique(batch.counts):
        sel = np.flatnonzero(batch.counts == n)
        e = batch.entries_with_count(int(n)).reshape(sel.size, -1)
        e = -np.sort(-tame(e), axis=1)[:, :n_areas]
        out[sel, 1:1 + e.shape[1]] = e
    return out


def area_dependence_samples(stream: RandomStream, rect_a: Rect, rect_b: Rect, size: int,
                            check_areas: bool = True):
    if check_areas and not math.isclose(rect_a.area, rect_b.area, rel_tol=1e-12):
        raise ValueError(f"rectangles differ in area: {rect_a.area} vs {rect_b.area}")
    a = area_summary(sample_box_batch(stream.spawn("a"), rect_a, size))
    b = area_summary(sample_box_batch(stream.spawn("b"), rect_b, size))
    return a, b


def check_area_only_dependence(stream: RandomStream, rect_a: Rect, rect_b: Rect, N: int,
                               B: int = 199, alpha: float = 0.05, *,
                               check_areas: bool = True) -> TestReport:
    a, b = area_dependence_samples(stream.spawn("data"), rect_a, rect_b, N, check_areas)
    return permutation_test(a, b, B=B, stream=stream.spawn("perm"), alpha=alpha,
                            name="area_only_dependence")


# -- chain matrix given its area ----------------------------------------------

def m1n_given_area(stream: RandomStream, n: int, v: float, h: float, size: int,
                   max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                   min_rate: float = MIN_ACCEPTANCE_RATE):
    """Closed-form ``M_{1,n}`` draws whose total area lies in ``[v-h, v+h]``."""
    if not (v > 0 and 0 < h < v):
        raise ValueError(f"need v > 0 and 0 < h < v, got v={v}, h={h}")
    parts, have, attempts = [], 0, 0
    while have < size:
        if attempts >= max_attempts:
            raise ConditioningFailure(f"accepted {have}/{size} draws; widen h or lower N", attempts)
        u, e = draw_variables(stream, n, _BATCH)
        m = m1n_entries_from(u, e, n)
        total = m.sum(axis=(1, 2))
        keep = m[np.abs(total - v) <= h]
        attempts += _BATCH
        parts.append(keep)
        have += keep.shape[0]
        if attempts >= 10 * _BATCH and have / attempts < min_rate:
            raise ConditioningFailure(f"acceptance rate {have / attempts:.2e} below {min_rate:g}; "
                                      "widen h", attempts)
    window = ConditioningWindow(v, h, have, attempts)
    return np.concatenate(parts)[:size], window


def lemma3_samples(stream: RandomStream, n: int, v: float, h: float, size: int):
    """(binned chain matrices, area-v box tilings with n-1 records, window)."""
    a, window = m1n_given_area(stream.spawn("chain"), n, v, h, size)
    side = math.sqrt(v)
    b = box_entries_given_count(stream.spawn("box"), Rect.square(side), n - 1, size)
    return a.reshape(size, -1), b.reshape(size, -1), window


def check_lemma3(stream: RandomStream, n: int, v: float, h: float, N: int, B: int = 199,
                 alpha: float = 0.05) -> TestReport:
    a, b, _ = lemma3_samples(stream.spawn("data"), n, v, h, N)
    return permutation_test(a, b, B=B, stream=stream.spawn("perm"), alpha=alpha,
                            transform="tame", name=f"lemma3_n{n}")


@dataclass(frozen=True)
class TrendCheck:
    hs: tuple[float, ...]
    mean_statistic: tuple[float, ...]
    sem: tuple[float, ...]
    passed: bool


def lemma3_h_trend(stream: RandomStream, n: int, v: float, hs, N: int, reps: int = 5,
                   tolerance_sems: float = 3.0) -> TrendCheck:
    """Energy statistic as the bin shrinks; fails only on significant growth.

    ``hs`` is taken in decreasing order; the check compares the smallest bin
    against the largest.
    """
    hs = tuple(sorted(hs, reverse=True))
    means, sems = [], []
    for i, h in enumerate(hs):
        vals = []
        for r in range(reps):
            a, b, _ = lemma3_samples(stream.spawn(f"h{i}", r), n, v, h, N)
            vals.append(energy_statistic(tame(a), tame(b)))
        vals = np.asarray(vals)
        means.append(float(vals.mean()))
        sems.append(float(vals.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0)
    growth = means[-1] - means[0]
    passed = growth <= tolerance_sems * math.hypot(sems[0], sems[-1])
    return TrendCheck(hs, tuple(means), tuple(sems), passed)
