"""Counter-based, splittable random streams.

Every stream is a Philox4x64 generator keyed by a hash of
``(master_seed, label, index)``.  One 64-bit output word is consumed per
uniform, so the k-th uniform of a stream is a pure function of
``(master_seed, label, index, k)`` and can be reached directly with
:meth:`RandomStream.at`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import MutableSequence

import numpy as np

MASK64 = (1 << 64) - 1
_TWO_M52 = 2.0**-52
# Largest mean handled by sequential-search inversion; PTRS above.
INVERSION_MAX_MEAN = 30.0


@dataclass(frozen=True)
class StreamId:
    label: str
    index: int = 0

    def __post_init__(self):
        if not self.label.isascii() or not self.label or len(self.label) > 512:
            raise ValueError(f"stream label must be a short non-empty ASCII string, got {self.label!r}")
        if self.index < 0:
            raise ValueError(f"stream index must be nonnegative, got {self.index}")


def derive_key(master_seed: int, sid: StreamId) -> np.ndarray:
    """128-bit Philox key for a stream; injective up to blake2b collisions."""
    if not 0 <= master_seed <= MASK64:
        raise ValueError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
    payload = f"{master_seed}\x1f{sid.label}\x1f{sid.index}".encode("ascii")
    digest = hashlib.blake2b(payload, digest_size=16, person=b"recordgrid-v1").digest()
    return np.frombuffer(digest, dtype="<u8").astype(np.uint64)


def words_to_uniforms(words: np.ndarray) -> np.ndarray:
    # top 52 bits, centred in their cell: min 2^-53, max 1 - 2^-53, both exact
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * _TWO_M52


class RandomStream:
    """A single-owner stream of uniforms, exponentials and Poisson counts.

    ``counter`` is the number of 64-bit words consumed so far.
    """

    def __init__(self, master_seed: int, label: str | StreamId = "main", index: int = 0):
        sid = label if isinstance(label, StreamId) else StreamId(label, index)
        self.master_seed = int(master_seed)
        self.id = sid
        self._key = derive_key(self.master_seed, sid)
        self._bitgen = np.random.Philox(key=self._key)
        self.counter = 0

    def __repr__(self):
        return (f"RandomStream(seed={self.master_seed}, label={self.id.label!r}, "
                f"index={self.id.index}, counter={self.counter})")

    def spawn(self, label: str, index: int = 0) -> "RandomStream":
        """Independent child stream under the same master seed.

        The child label embeds this stream's label and index, so children of
        distinct parents never coincide.
        """
        return RandomStream(self.master_seed, f"{self.id.label}:{self.id.index}/{label}", index)

    def at(self, counter: int) -> "RandomStream":
        """Fresh copy of this stream positioned after ``counter`` words."""
        other = RandomStream(self.master_seed, self.id)
        blocks, rest = divmod(int(counter), 4)
        if blocks:
            other._bitgen.advance(blocks)
        if rest:
            other._bitgen.random_raw(rest)
        other.counter = int(counter)
        return other

    def _words(self, size: int) -> np.ndarray:
        self.counter += size
        return self._bitgen.random_raw(size)

    # -- uniforms / exponentials -------------------------------------------

    def uniforms(self, size) -> np.ndarray:
        """Array of uniforms strictly inside (0, 1); ``size`` may be a shape."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape, dtype=np.int64))
        return words_to_uniforms(self._words(count)).reshape(shape)

    def exponentials(self, size) -> np.ndarray:
        return -np.log(self.uniforms(size))

    def next_uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def next_exponential(self) -> float:
        return -math.log(self.next_uniform())

    # -- Poisson -------------------------------------------------------------

    def poisson_counts(self, mean: float, size: int) -> np.ndarray:
        mean = float(mean)
        if not math.isfinite(mean) or mean < 0:
            raise ValueError(f"Poisson mean must be finite and nonnegative, got {mean}")
        if mean == 0.0:
            return np.zeros(size, dtype=np.int64)
        if mean <= INVERSION_MAX_MEAN:
            return _poisson_inversion(self.uniforms(size), mean)
        return self._poisson_ptrs(mean, size)

    def next_poisson_count(self, mean: float) -> int:
        return int(self.poisson_counts(mean, 1)[0])

    def _poisson_ptrs(self, lam: float, size: int) -> np.ndarray:
        # Hoermann (1993) transformed rejection with squeeze; two uniforms per trial
        slam = math.sqrt(lam)
        loglam = math.log(lam)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        log_invalpha = math.log(1.1239 + 1.1328 / (b - 3.4))
        vr = 0.9277 - 3.6224 / (b - 2.0)
        out = np.empty(size, dtype=np.int64)
        todo = np.arange(size)
        while todo.size:
            uv = self.uniforms((todo.size, 2))
            u = uv[:, 0] - 0.5
            v = uv[:, 1]
            us = 0.5 - np.abs(u)
            k = np.floor((2.0 * a / us + b) * u + lam + 0.43)
            fast = (us >= 0.07) & (v <= vr)
            ok = fast.copy()
            rest = ~fast & (k >= 0) & ~((us < 0.013) & (v > us))
            if rest.any():
                kr = k[rest]
                lhs = np.log(v[rest]) + log_invalpha - np.log(a / (us[rest] ** 2) + b)
                rhs = -lam + kr * loglam - _lgamma(kr + 1.0)
                ok[rest] = lhs <= rhs
            out[todo[ok]] = k[ok].astype(np.int64)
            todo = todo[~ok]
        return out

    # -- permutations --------------------------------------------------------

    def shuffle_in_place(self, items: MutableSequence) -> MutableSequence:
        """Fisher-Yates shuffle; consumes ``len(items) - 1`` uniforms."""
        n = len(items)
        if n < 2:
            return items
        u = self.uniforms(n - 1)
        picks = np.minimum((u * np.arange(n, 1, -1)).astype(np.int64), np.arange(n - 1, 0, -1))
        for i, j in zip(range(n - 1, 0, -1), picks.tolist()):
            items[i], items[j] = items[j], items[i]
        return items


_lgamma = np.vectorize(math.lgamma, otypes=[np.float64])


def _poisson_inversion(u: np.ndarray, mean: float) -> np.ndarray:
    # same accumulation order as a sequential search, so scalar and batch agree
    pmf = [math.exp(-mean)]
    cdf = [pmf[0]]
    k = 0
    while cdf[-1] < 1.0 and pmf[-1] > 0.0 or k < mean:
        k += 1
        pmf.append(pmf[-1] * mean / k)
        cdf.append(cdf[-1] + pmf[-1])
    table = np.array(cdf)
    idx = np.searchsorted(table, u, side="left")
    return np.minimum(idx, len(table) - 1).astype(np.int64)
