"""Two-sample tests for equality in distribution.

Energy distance (V-statistic form) is computed exactly in one dimension
from the sorted pooled sample, ``2 * sum(gap * (F - G)^2)``.  In higher
dimension an exact pairwise computation is used for small pools; large
pools use the sliced form: the energy distance equals the average of the
one-dimensional energy distances of random projections divided by
``E|theta_1|`` for ``theta`` uniform on the sphere.  A fixed set of
directions keeps the permutation test exact.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import special, stats

from . import _kernels
from .rand import RandomStream

MIN_PERMUTATIONS = 19
EXACT_PAIRWISE_MAX = 4000
DEFAULT_DIRECTIONS = 8
_PERM_CHUNK_CELLS = 4_000_000


def tame(v) -> np.ndarray:
    """Componentwise ``x / (1 + x)``: an increasing bijection onto [0, 1)."""
    v = np.asarray(v, dtype=np.float64)
    if not np.isfinite(v).all() or (v < 0).any():
        raise ValueError("tame() needs finite nonnegative entries")
    return v / (1.0 + v)


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


# -- Kolmogorov-Smirnov -------------------------------------------------------

def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS test needs two nonempty samples")
    z = np.concatenate([a, b])
    fa = np.searchsorted(a, z, side="right") / a.size
    fb = np.searchsorted(b, z, side="right") / b.size
    return float(np.abs(fa - fb).max())


def ks_two_sample(a, b) -> tuple[float, float]:
    """Statistic ``sup|F_a - F_b|`` and its asymptotic Kolmogorov p-value."""
    d = ks_statistic(a, b)
    na, nb = np.size(a), np.size(b)
    en = math.sqrt(na * nb / (na + nb))
    return d, float(special.kolmogorov((en + 0.12 + 0.11 / en) * d))


def ks_one_sample(a, cdf: Callable[[np.ndarray], np.ndarray]) -> tuple[float, float]:
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1))
    if a.size == 0:
        raise ValueError("KS test needs a nonempty sample")
    n = a.size
    f = cdf(a)
    i = np.arange(1, n + 1)
    d = float(max((i / n - f).max(), (f - (i - 1) / n).max()))
    en = math.sqrt(n)
    return d, float(special.kolmogorov((en + 0.12 + 0.11 / en) * d))


# -- energy distance ----------------------------------------------------------

def _energy_1d(a: np.ndarray, b: np.ndarray) -> float:
    z = np.concatenate([a, b])
    order = np.argsort(z, kind="stable")
    gaps = np.diff(z[order])
    c = np.cumsum(order[:-1] < a.size)
    k = np.arange(1, z.size)
    diff = c / a.size - (k - c) / b.size
    return float(2.0 * np.dot(gaps, diff * diff))


def _mean_pairwise(x: np.ndarray, y: np.ndarray, chunk: int = 1024) -> float:
    total = 0.0
    for i in range(0, x.shape[0], chunk):
        d = x[i:i + chunk, None, :] - y[None, :, :]
        total += np.sqrt((d * d).sum(axis=-1)).sum()
    return total / (x.shape[0] * y.shape[0])


def sphere_abs_mean(d: int) -> float:
    """E|theta_1| for theta uniform on the unit sphere in R^d."""
    return math.exp(math.lgamma(d / 2) - math.lgamma((d + 1) / 2)) / math.sqrt(math.pi)


def random_directions(stream: RandomStream, d: int, count: int) -> np.ndarray:
    u = stream.uniforms((count, d, 2))
    g = np.sqrt(-2.0 * np.log(u[..., 0])) * np.cos(2.0 * np.pi * u[..., 1])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _default_directions(d: int, count: int) -> np.ndarray:
    return random_directions(RandomStream(0, "energy-directions", d), d, count)


def energy_statistic(a, b, *, method: str = "auto", directions: np.ndarray | None = None) -> float:
    """``2 E|A-B| - E|A-A'| - E|B-B'|`` over empirical laws (V-statistic).

    ``method`` is ``"exact"``, ``"sliced"`` or ``"auto"`` (exact unless the
    pool is multivariate and larger than ``EXACT_PAIRWISE_MAX``).
    """
    a, b = _as_2d(a), _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("energy statistic needs two nonempty samples")
    d = a.shape[1]
    if d == 1:
        return _energy_1d(a[:, 0], b[:, 0])
    if method == "auto":
        method = "exact" if a.shape[0] + b.shape[0] <= EXACT_PAIRWISE_MAX else "sliced"
    if method == "exact":
        value = 2.0 * _mean_pairwise(a, b) - _mean_pairwise(a, a) - _mean_pairwise(b, b)
        return max(value, 0.0)
    if method != "sliced":
        raise ValueError(f"unknown method {method!r}")
    if directions is None:
        directions = _default_directions(d, DEFAULT_DIRECTIONS)
    vals = [_energy_1d(a @ th, b @ th) for th in directions]
    return float(np.mean(vals) / sphere_abs_mean(d))


class _PermutationKernel:
    """Evaluates a statistic for many relabelings of one pooled sample."""

    def __init__(self, pooled: np.ndarray, n_a: int, statistic: str, directions: np.ndarray | None):
        self.n_a, self.n_b = n_a, pooled.shape[0] - n_a
        self.total = pooled.shape[0]
        d = pooled.shape[1]
        self.statistic = statistic
        self.pairwise = None
        if statistic == "ks":
            if d != 1:
                raise ValueError("KS permutation test is univariate")
            projections = pooled
            self.scale = 1.0
        elif d == 1:
            projections = pooled
            self.scale = 1.0
        elif directions is None and self.total <= EXACT_PAIRWISE_MAX:
            diff = pooled[:, None, :] - pooled[None, :, :]
            self.pairwise = np.sqrt((diff * diff).sum(axis=-1))
            return
        else:
            if directions is None:
                directions = _default_directions(d, DEFAULT_DIRECTIONS)
            projections = pooled @ directions.T
            self.scale = 1.0 / (len(directions) * sphere_abs_mean(d))
        orders = np.argsort(projections, axis=0, kind="stable")
        self.gaps = np.ascontiguousarray(np.diff(np.take_along_axis(projections, orders, axis=0), axis=0).T)
        self.orders = np.ascontiguousarray(orders.T)

    def __call__(self, labels: np.ndarray) -> np.ndarray:
        """Statistic for each row of a 0/1 ``(B, total)`` label array (1 = first sample)."""
        if self.pairwise is not None:
            s = labels.astype(np.float64)
            r = 1.0 - s
            ds, dr = s @ self.pairwise, r @ self.pairwise
            ab = (ds * r).sum(axis=1) / (self.n_a * self.n_b)
            aa = (ds * s).sum(axis=1) / self.n_a ** 2
            bb = (dr * r).sum(axis=1) / self.n_b ** 2
            return np.maximum(2.0 * ab - aa - bb, 0.0)
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        if self.statistic == "ks":
            return _kernels.sorted_ks(labels, self.orders[0], self.gaps[0], self.n_a, self.n_b)
        return self.scale * _kernels.sorted_energy(np.ascontiguousarray(labels.T), self.orders,
                                                   self.gaps, self.n_a, self.n_b)

    def random_labels(self, stream: RandomStream, count: int) -> np.ndarray:
        """``count`` uniformly random relabelings with ``n_a`` ones each."""
        k = min(self.n_a, self.n_b)
        rows = _kernels.subset_labels(stream.uniforms((count, k)), self.total, k)
        return rows if k == self.n_a else 1 - rows


@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    p_value: float
    n_permutations: int
    sample_size: int
    alpha: float
    reject: bool
    transform: str
    test: str

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return asdict(self)


def permutation_test(a, b, *, statistic: str = "energy", B: int = 199,
                     stream: RandomStream, alpha: float = 0.05, transform: str = "none",
                     name: str = "", directions: np.ndarray | None = None) -> TestReport:
    """Permutation p-value ``(1 + #{perm stat >= observed}) / (B + 1)``.

    ``transform="tame"`` applies :func:`tame` to both samples first.
    """
    if B < MIN_PERMUTATIONS:
        raise ValueError(f"need at least {MIN_PERMUTATIONS} permutations, got {B}")
    if statistic not in ("energy", "ks"):
        raise ValueError(f"unknown statistic {statistic!r}")
    a, b = _as_2d(a), _as_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if transform == "tame":
        a, b = tame(a), tame(b)
    elif transform != "none":
        raise ValueError(f"unknown transform {transform!r}")
    pooled = np.vstack([a, b])
    n_a, total = a.shape[0], pooled.shape[0]
    if statistic == "energy" and a.shape[1] > 1 and directions is None and total > EXACT_PAIRWISE_MAX:
        directions = random_directions(stream.spawn("directions"), a.shape[1], DEFAULT_DIRECTIONS)
    kernel = _PermutationKernel(pooled, n_a, statistic, directions)
    observed_labels = np.zeros((1, total), dtype=np.uint8)
    observed_labels[0, :n_a] = 1
    observed = float(kernel(observed_labels)[0])
    chunk = max(1, min(B, _PERM_CHUNK_CELLS // total))
    exceed = 0
    done = 0
    while done < B:
        m = min(chunk, B - done)
        labels = kernel.random_labels(stream, m)
        # relative slack so float reassociation cannot break ties against the observed labeling
        exceed += int((kernel(labels) >= observed * (1 - 1e-12)).sum())
        done += m
    p = (1 + exceed) / (B + 1)
    return TestReport(name, observed, p, B, n_a, alpha, p <= alpha, transform, statistic)


# -- moments and replicate summaries ------------------------------------------

@dataclass(frozen=True)
class MomentCheck:
    passed: bool
    mean: float
    target: float
    sem: float
    ci_low: float
    ci_high: float
    sample_size: int


def moment_check(sample, target: float, tolerance_sems: float = 3.0) -> MomentCheck:
    """Pass iff |mean - target| <= tolerance_sems * std / sqrt(N)."""
    x = np.asarray(sample, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("moment check needs a nonempty sample")
    mean = float(x.mean())
    sem = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    half = tolerance_sems * sem
    return MomentCheck(abs(mean - target) <= half, mean, target, sem, mean - half, mean + half, x.size)


def binomial_upper(K: int, alpha: float, q: float = 0.99) -> int:
    """The q-quantile of Binomial(K, alpha)."""
    return int(stats.binom.ppf(q, K, alpha))


def power_threshold(K: int, power: float = 0.9) -> int:
    return math.ceil(power * K)


@dataclass(frozen=True)
class ReplicateSummary:
    name: str
    expected: str
    K: int
    alpha: float
    rejections: int
    bound: int
    passed: bool
    p_values: tuple[float, ...]
    statistics: tuple[float, ...]
    reports: tuple[TestReport, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("reports")
        return d


def summarize(name: str, reports, alpha: float, expected: str = "null",
              power: float = 0.9) -> ReplicateSummary:
    """Fold K reports: nulls pass at <= the Binomial 99% point, controls at >= power*K."""
    reports = tuple(reports)
    K = len(reports)
    rejections = sum(r.p_value <= alpha for r in reports)
    if expected == "null":
        bound = binomial_upper(K, alpha)
        passed = rejections <= bound
    elif expected == "reject":
        bound = power_threshold(K, power)
        passed = rejections >= bound
    else:
        raise ValueError(f"expected must be 'null' or 'reject', got {expected!r}")
    return ReplicateSummary(name, expected, K, alpha, rejections, bound, passed,
                            tuple(r.p_value for r in reports),
                            tuple(r.statistic for r in reports), reports)


def run_replicates(make_samples: Callable[[RandomStream], tuple], *, K: int, B: int, alpha: float,
                   stream: RandomStream, statistic: str = "energy", transform: str = "tame",
                   expected: str = "null", name: str = "") -> ReplicateSummary:
    """K permutation tests on fresh sample pairs from ``make_samples(stream)``.

    Replicate ``i`` draws from ``stream.spawn("rep", i)`` so the outcome does
    not depend on execution order.
    """
    if K < 1:
        raise ValueError("need at least one replicate")
    reports = []
    for i in range(K):
        rs = stream.spawn("rep", i)
        a, b = make_samples(rs.spawn("data"))
        reports.append(permutation_test(a, b, statistic=statistic, B=B, stream=rs.spawn("perm"),
                                        alpha=alpha, transform=transform, name=name))
    return summarize(name, reports, alpha, expected)
