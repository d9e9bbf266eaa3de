"""Sign-vector arithmetic and index/restriction utilities.

Databases, seeds and masks are all vectors over {-1,+1}^n, represented as
numpy int8 arrays.  All indices are 0-based.  The two standard restrictions
of a vector ``v`` by a mask ``r`` are ``v[r == +1]`` and ``v[r == -1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

SIGN_DTYPE = np.int8


def as_signs(values, name: str = "vector") -> np.ndarray:
    """Validate and convert a sequence of +-1 entries to an int8 array."""
    v = np.asarray(values)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    v = v.astype(SIGN_DTYPE, copy=True)
    if v.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.abs(v) == 1):
        raise ValueError(f"{name} entries must all be +1 or -1")
    return v


def random_signs(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform sign vector(s): shape (n,) or (size, n)."""
    shape = (n,) if size is None else (size, n)
    return (2 * rng.integers(0, 2, size=shape, dtype=SIGN_DTYPE) - 1).astype(SIGN_DTYPE)


def inner_product(x, y) -> int:
    """Integer inner product of two equal-length sign vectors."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"length mismatch: {x.shape} vs {y.shape}")
    return int(np.dot(x.astype(np.int64), y.astype(np.int64)))


def hamming_distance(x, y) -> int:
    """Number of positions where the sign vectors differ."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"length mismatch: {x.shape} vs {y.shape}")
    return int(np.count_nonzero(x != y))


def masked_inner_products(x, y, r) -> tuple[int, int]:
    """Split <x,y> by the sign of the mask r.

    Returns ``(ip_plus, ip_minus)`` where ``ip_plus`` sums x_i*y_i over
    positions with r_i = +1 and ``ip_minus`` over positions with r_i = -1.
    Always ``ip_plus + ip_minus == <x,y>`` and
    ``ip_plus - ip_minus == <x*y, r>``.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    r = np.asarray(r)
    if not (x.shape == y.shape == r.shape):
        raise DimensionMismatch(
            f"length mismatch: {x.shape}, {y.shape}, {r.shape}"
        )
    prod = x * y
    ip_plus = int(prod[r == 1].sum())
    ip_minus = int(prod[r == -1].sum())
    return ip_plus, ip_minus


def flip(v, i: int) -> np.ndarray:
    """Copy of v with entry i negated."""
    v = np.asarray(v)
    if not 0 <= i < v.shape[-1]:
        raise IndexError(f"index {i} out of range for length {v.shape[-1]}")
    out = v.copy()
    out[..., i] = -out[..., i]
    return out


def signs_to_bits(v) -> np.ndarray:
    """Map signs to bits with the fixed convention bit = (1 - sign)/2."""
    v = np.asarray(v)
    return ((1 - v.astype(np.int8)) // 2).astype(np.uint8)


def bits_to_signs(b) -> np.ndarray:
    """Inverse of :func:`signs_to_bits`."""
    b = np.asarray(b)
    return (1 - 2 * b.astype(np.int8)).astype(SIGN_DTYPE)


@dataclass(frozen=True)
class IndexSet:
    """A strictly increasing set of 0-based positions within [0, n)."""

    indices: tuple[int, ...]
    n: int

    def __post_init__(self):
        idx = self.indices
        if any(not 0 <= i < self.n for i in idx):
            raise ValueError(f"indices must lie in [0, {self.n})")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")

    @classmethod
    def from_mask(cls, mask) -> "IndexSet":
        mask = np.asarray(mask, dtype=bool)
        return cls(tuple(int(i) for i in np.flatnonzero(mask)), int(mask.size))

    def __len__(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.int64)


def plus_set(r) -> IndexSet:
    """Positions where the mask is +1."""
    return IndexSet.from_mask(np.asarray(r) == 1)


def minus_set(r) -> IndexSet:
    """Positions where the mask is -1."""
    return IndexSet.from_mask(np.asarray(r) == -1)


# ---------------------------------------------------------------------------
# Packed representation: sign vectors as 64-bit lanes
# ---------------------------------------------------------------------------
#
# Bit j (little-endian within each word) of lane i//64 holds position i with
# the package-wide convention bit = (1 - sign)/2, so +1 packs to 0.  Unused
# high bits of the last lane are zero.  The packed form is an internal
# representation for streaming workloads; the external contract everywhere
# is sign-valued.


def packed_width(n: int) -> int:
    return (n + 63) // 64


def pack_signs(v) -> np.ndarray:
    """Pack sign vector(s) into uint64 lanes: shape (..., packed_width(n))."""
    bits = signs_to_bits(np.atleast_2d(v))
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = (-packed.shape[-1]) % 8
    if pad:
        packed = np.pad(packed, [(0, 0)] * (packed.ndim - 1) + [(0, pad)])
    return packed.view(np.uint64)


def random_packed(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform packed sign vectors, pad bits cleared: shape (size, W)."""
    w = packed_width(n)
    raw = np.frombuffer(rng.bytes(size * w * 8), dtype=np.uint64).reshape(size, w)
    raw = raw.copy()
    rem = n % 64
    if rem:
        raw[:, -1] &= np.uint64((1 << rem) - 1)
    return raw


def packed_inner_products(P: np.ndarray, q: np.ndarray, n: int) -> np.ndarray:
    """<p, q> for each packed row p against a single packed vector q.

    Signs agree exactly where the packed bits agree, so the inner product
    is n - 2 * popcount(p xor q).
    """
    ham = np.bitwise_count(P ^ q[None, :]).sum(axis=1, dtype=np.int64)
    return n - 2 * ham


def packed_bit(P: np.ndarray, i: int) -> np.ndarray:
    """Extract bit i of each packed row (0 means sign +1)."""
    return ((P[:, i // 64] >> np.uint64(i % 64)) & np.uint64(1)).astype(np.int64)
