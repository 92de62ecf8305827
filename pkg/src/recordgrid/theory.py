"""Analytic targets used by the moment checks."""

from __future__ import annotations

import math

from scipy import integrate

from .geometry import Rect

# E[(1-U)E] and E[U(1-U')E]
DIAGONAL_TILE_MEAN = 0.5
SUBDIAGONAL_TILE_MEAN = 0.25


def harmonic(m: int) -> float:
    return math.fsum(1.0 / k for k in range(1, m + 1))


def expected_box_records(area: float, terms: int | None = None) -> float:
    """Mean number of records of a unit Poisson sample on a box of this area.

    Among ``m`` i.i.d. uniform points the expected number of minima is
    ``H_m``, so the mean is ``sum_m P(count = m) H_m``.
    """
    if area <= 0:
        raise ValueError("area must be positive")
    if terms is None:
        terms = int(area + 12 * math.sqrt(area) + 40)
    total, h = [], 0.0
    for m in range(1, terms + 1):
        h += 1.0 / m
        total.append(math.exp(-area + m * math.log(area) - math.lgamma(m + 1)) * h)
    return math.fsum(total)


def record_intensity_integral(rect: Rect) -> float:
    """Expected number of quadrant records in ``rect``: integral of exp(-t x)."""
    value, _ = integrate.dblquad(lambda x, t: math.exp(-t * x), rect.t_lo, rect.t_hi,
                                 rect.x_lo, rect.x_hi, epsabs=1e-13, epsrel=1e-12)
    return value
