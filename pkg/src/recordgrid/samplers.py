"""Closed-form exponential/uniform samplers for both sides of each identity,
plus the geometric (record-chain) counterparts.

Variables are drawn per realization in the fixed order U1, E1, U2, E2, ...
(each E from one uniform by inversion), so a realization that needs ``m``
index levels consumes exactly ``2 m`` uniforms.  The ``*_from`` functions
are the pure maps from those variables and are what matched-variable
checks call.  Array arguments carry the realization on axis 0 and the
index level on axis 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rand import RandomStream
from .records import TileMatrix, reflect_entries, simulate_quadrant_chains


def draw_variables(stream: RandomStream, levels: int, size: int):
    """``(u, e)``, each of shape ``(size, levels)``."""
    w = stream.uniforms((size, levels, 2))
    return w[:, :, 0], -np.log(w[:, :, 1])


def _prefix_products(u: np.ndarray) -> np.ndarray:
    """``[1, u1, u1 u2, ...]`` along axis 1, same width as ``u``."""
    p = np.ones_like(u)
    np.cumprod(u[:, :-1], axis=1, out=p[:, 1:])
    return p


# -- pure maps ----------------------------------------------------------------

def m1n_tiles_from(u, e, n: int):
    """Heights ``U1..U_{i-1}(1-U_i)`` and widths ``E_j / (U1..U_{j-1})``."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))[:, :n]
    e = np.atleast_2d(np.asarray(e, dtype=np.float64))[:, :n]
    p = _prefix_products(u)
    return p * (1.0 - u), e / p


def m1n_entries_from(u, e, n: int) -> np.ndarray:
    h, w = m1n_tiles_from(u, e, n)
    return h[:, :, None] * w[:, None, :]


def eq1_lhs_from(u, e, n: int) -> np.ndarray:
    """(E1/U1 + ... + En/(U1..Un)) (1 - U1..U_{n+1})."""
    u = np.atleast_2d(u)
    e = np.atleast_2d(e)
    cp = np.cumprod(u[:, :n + 1], axis=1)
    return (e[:, :n] / cp[:, :n]).sum(axis=1) * (1.0 - cp[:, n])


def eq1_rhs_from(u, e, n: int) -> np.ndarray:
    """(E1 + E2/U1 + ... + E_{n+1}/(U1..Un)) (1 - U1..Un)."""
    u = np.atleast_2d(u)
    e = np.atleast_2d(e)
    p = _prefix_products(u[:, :n + 1])
    return (e[:, :n + 1] / p).sum(axis=1) * (1.0 - p[:, n])


def rowprod_lhs_from(u, e, n: int) -> np.ndarray:
    """E1..En (1-U1)^n / (U1^{n-1} U2^{n-2} .. U_{n-1})."""
    u = np.atleast_2d(u)[:, :n]
    e = np.atleast_2d(e)[:, :n]
    powers = np.arange(n - 1, -1, -1)
    return e.prod(axis=1) * (1.0 - u[:, 0]) ** n / (u ** powers).prod(axis=1)


def rowprod_rhs_from(u, e, n: int) -> np.ndarray:
    """E_n^n (1-U1)..(1-Un) / (U1 U2^2 .. U_{n-1}^{n-1})."""
    u = np.atleast_2d(u)[:, :n]
    e = np.atleast_2d(e)[:, :n]
    powers = np.arange(1, n + 1)
    powers[-1] = 0
    return e[:, n - 1] ** n * (1.0 - u).prod(axis=1) / (u ** powers).prod(axis=1)


def totalarea_from(u, e, n: int) -> np.ndarray:
    """(1 - U1..Un)(E1 + E2/U1 + ... + En/(U1..U_{n-1}))."""
    u = np.atleast_2d(u)[:, :n]
    e = np.atleast_2d(e)[:, :n]
    p = _prefix_products(u)
    return (1.0 - p[:, -1] * u[:, -1]) * (e / p).sum(axis=1)


# -- single-draw samplers -----------------------------------------------------

def sample_m1n_closed(stream: RandomStream, n: int) -> TileMatrix:
    if n < 1:
        raise ValueError("matrix order must be positive")
    u, e = draw_variables(stream, n, 1)
    h, w = m1n_tiles_from(u, e, n)
    return TileMatrix(h[0], w[0])


def _side(side: str) -> str:
    if side not in ("lhs", "rhs"):
        raise ValueError(f"side must be 'lhs' or 'rhs', got {side!r}")
    return side


def sample_eq1(stream: RandomStream, n: int, side: str) -> float:
    fn = eq1_lhs_from if _side(side) == "lhs" else eq1_rhs_from
    u, e = draw_variables(stream, n + 1, 1)
    return float(fn(u, e, n)[0])


def sample_eq3(stream: RandomStream, side: str) -> np.ndarray:
    u, e = draw_variables(stream, 2, 1)
    m = m1n_entries_from(u, e, 2)
    return (m if _side(side) == "lhs" else reflect_entries(m))[0]


def sample_prop1(stream: RandomStream, n: int, side: str) -> np.ndarray:
    u, e = draw_variables(stream, n, 1)
    m = m1n_entries_from(u, e, n)
    return (m if _side(side) == "lhs" else reflect_entries(m))[0].reshape(-1)


def sample_rowprod(stream: RandomStream, n: int, side: str) -> float:
    fn = rowprod_lhs_from if _side(side) == "lhs" else rowprod_rhs_from
    u, e = draw_variables(stream, n, 1)
    return float(fn(u, e, n)[0])


def sample_totalarea(stream: RandomStream, n: int, source: str) -> float:
    return float(_batch(f"totalarea_{source}", n, stream, 1)[0, 0])


def sample_negcontrol(stream: RandomStream, which: str, n: int = 2) -> np.ndarray:
    return _batch(f"negcontrol_{which}", n, stream, 1)[0]


# -- identity catalog ---------------------------------------------------------

SCALAR = {"eq1_lhs", "eq1_rhs", "eq2_lhs", "eq2_rhs", "rowprod_lhs", "rowprod_rhs",
          "totalarea_closed", "totalarea_geom", "negcontrol_c00", "c11_geom"}
MATRIX = {"eq3_lhs", "eq3_rhs", "prop1_lhs", "prop1_rhs", "negcontrol_transpose"}
FIXED_ORDER = {"eq2_lhs": 1, "eq2_rhs": 1, "eq3_lhs": 2, "eq3_rhs": 2, "negcontrol_transpose": 2,
               "negcontrol_c00": 1, "c11_geom": 1}
IDENTITY_NAMES = tuple(sorted(SCALAR | MATRIX))


@dataclass(frozen=True)
class IdentitySpec:
    name: str
    n: int = 1

    def __post_init__(self):
        if self.name not in SCALAR | MATRIX:
            raise ValueError(f"unknown identity {self.name!r}")
        if self.n < 1:
            raise ValueError("identity order must be positive")
        fixed = FIXED_ORDER.get(self.name)
        if fixed is not None and self.n != fixed:
            object.__setattr__(self, "n", fixed)

    @property
    def output_dim(self) -> int:
        return 1 if self.name in SCALAR else self.n * self.n

    @property
    def geometric(self) -> bool:
        return self.name in ("totalarea_geom", "negcontrol_c00", "c11_geom")


@dataclass(frozen=True)
class SampleBatch:
    spec: IdentitySpec
    rows: np.ndarray
    master_seed: int
    stream_label: str
    stream_index: int

    def __post_init__(self):
        if self.rows.ndim != 2 or self.rows.shape[0] < 1 or self.rows.shape[1] != self.spec.output_dim:
            raise ValueError(f"bad sample shape {self.rows.shape} for {self.spec}")
        if not np.isfinite(self.rows).all():
            raise ValueError(f"non-finite draw in {self.spec.name}")

    def __len__(self):
        return self.rows.shape[0]


def _batch(name: str, n: int, stream: RandomStream, size: int) -> np.ndarray:
    if name in ("eq1_lhs", "eq2_lhs", "eq1_rhs", "eq2_rhs"):
        u, e = draw_variables(stream, n + 1, size)
        fn = eq1_lhs_from if name.endswith("lhs") else eq1_rhs_from
        return fn(u, e, n)[:, None]
    if name in ("eq3_lhs", "prop1_lhs", "eq3_rhs", "prop1_rhs", "negcontrol_transpose"):
        u, e = draw_variables(stream, n, size)
        m = m1n_entries_from(u, e, n)
        if name.endswith("rhs"):
            m = reflect_entries(m)
        elif name == "negcontrol_transpose":
            m = np.swapaxes(m, 1, 2)
        return m.reshape(size, n * n)
    if name in ("rowprod_lhs", "rowprod_rhs"):
        u, e = draw_variables(stream, n, size)
        fn = rowprod_lhs_from if name.endswith("lhs") else rowprod_rhs_from
        return fn(u, e, n)[:, None]
    if name == "totalarea_closed":
        u, e = draw_variables(stream, n, size)
        return totalarea_from(u, e, n)[:, None]
    if name == "totalarea_geom":
        chains = simulate_quadrant_chains(stream, 0, n + 1, size)
        h, w = chains.tiles(1, n)
        return (h.sum(axis=1) * w.sum(axis=1))[:, None]
    if name in ("negcontrol_c00", "c11_geom"):
        k = 0 if name == "negcontrol_c00" else 1
        chains = simulate_quadrant_chains(stream, 0, 2, size)
        h, w = chains.tiles(k, 1)
        return h * w
    raise ValueError(f"unknown identity {name!r}")


def sample_identity(spec: IdentitySpec, stream: RandomStream, size: int) -> SampleBatch:
    """``size`` i.i.d. draws of one side of an identity."""
    if size < 1:
        raise ValueError("sample size must be positive")
    rows = _batch(spec.name, spec.n, stream, size)
    return SampleBatch(spec, rows, stream.master_seed, stream.id.label, stream.id.index)


# -- pairs under test ---------------------------------------------------------

@dataclass(frozen=True)
class IdentityPair:
    """Two sides claimed equal in law (``expected == "null"``) or not (``"reject"``)."""

    family: str
    n: int
    lhs: IdentitySpec
    rhs: IdentitySpec
    expected: str = "null"

    @property
    def name(self) -> str:
        return self.family if self.family in ("eq2", "eq3") else f"{self.family}_n{self.n}"

    @property
    def dim(self) -> int:
        return self.lhs.output_dim

    def sample_pair(self, stream: RandomStream, size: int):
        a = sample_identity(self.lhs, stream.spawn("lhs"), size)
        b = sample_identity(self.rhs, stream.spawn("rhs"), size)
        return a.rows, b.rows


def identity_pair(family: str, n: int = 1) -> IdentityPair:
    """The two sides of a catalogued identity or negative control."""
    table: dict[str, Callable[[int], tuple[str, str, int, str]]] = {
        "eq1": lambda n: ("eq1_lhs", "eq1_rhs", n, "null"),
        "eq2": lambda n: ("eq2_lhs", "eq2_rhs", 1, "null"),
        "eq3": lambda n: ("eq3_lhs", "eq3_rhs", 2, "null"),
        "prop1": lambda n: ("prop1_lhs", "prop1_rhs", n, "null"),
        "rowprod": lambda n: ("rowprod_lhs", "rowprod_rhs", n, "null"),
        "totalarea": lambda n: ("totalarea_closed", "totalarea_geom", n, "null"),
        "negcontrol_transpose": lambda n: ("negcontrol_transpose", "prop1_lhs", 2, "reject"),
        "negcontrol_c00": lambda n: ("negcontrol_c00", "c11_geom", 1, "reject"),
    }
    if family not in table:
        raise ValueError(f"unknown identity family {family!r}")
    lhs, rhs, order, expected = table[family](n)
    return IdentityPair(family, order, IdentitySpec(lhs, order), IdentitySpec(rhs, order), expected)
