"""Records of a planar Poisson process and their rectangular tilings."""

from .geometry import Point, PointSet, Rect, hyperbolic_shift, sample_ppp
from .rand import RandomStream, StreamId
from .records import (RecordChain, TileMatrix, WindowCapExceeded, antidiagonal_reflect,
                      box_records, extract_records, simulate_quadrant_chain,
                      simulate_quadrant_chains, tile_matrix_from_chain)
from .samplers import IdentitySpec, identity_pair, sample_identity, sample_m1n_closed
from .stattest import energy_statistic, ks_two_sample, permutation_test, tame

__all__ = [
    "Point", "PointSet", "Rect", "hyperbolic_shift", "sample_ppp", "RandomStream", "StreamId",
    "RecordChain", "TileMatrix", "WindowCapExceeded", "antidiagonal_reflect", "box_records",
    "extract_records", "simulate_quadrant_chain", "simulate_quadrant_chains",
    "tile_matrix_from_chain", "IdentitySpec", "identity_pair", "sample_identity",
    "sample_m1n_closed", "energy_statistic", "ks_two_sample", "permutation_test", "tame",
]
