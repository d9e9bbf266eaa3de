"""Seeded, splittable random number generation.

Every sampling operation in this package takes an explicit
``numpy.random.Generator``.  We standardize on the Philox bit generator
(counter based, so streams derived from distinct spawn keys never collide)
and derive independent child streams with ``SeedSequence.spawn``.  Given the
same seed, every operation is deterministic.
"""

from __future__ import annotations

import numpy as np

Generator = np.random.Generator


def rng_from_seed(seed: int) -> Generator:
    """Build the root generator for a run from an integer seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def ensure_rng(rng: Generator | int | None) -> Generator:
    """Coerce an int seed (or None) into a Generator; pass Generators through."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return rng_from_seed(int(rng))


def spawn_rngs(rng: Generator, count: int) -> list[Generator]:
    """Derive `count` independent child generators from `rng`.

    Children are keyed by spawn index, so the derived streams do not depend
    on how many values were already drawn from the parent and are disjoint
    from each other and from the parent's own stream.
    """
    children = rng.bit_generator.seed_seq.spawn(count)
    return [np.random.Generator(np.random.Philox(s)) for s in children]


_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SPLITMIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z + _SPLITMIX_GAMMA).astype(np.uint64)
    z = ((z ^ (z >> np.uint64(30))) * _SPLITMIX_M1).astype(np.uint64)
    z = ((z ^ (z >> np.uint64(27))) * _SPLITMIX_M2).astype(np.uint64)
    return (z ^ (z >> np.uint64(31))).astype(np.uint64)


def hash_uniform01(rows: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic per-row uniforms in [0, 1) from sign or bit rows.

    Rows are reduced to bits (positive entries map to 1), packed into 64-bit
    lanes, and folded through a splitmix-style mixer keyed by ``seed``.
    Used to attach *pure* (query-deterministic) noise to otherwise random
    oracles, so that repeated evaluation at the same point returns the same
    value.
    """
    rows = np.ascontiguousarray(rows)
    if rows.ndim == 1:
        rows = rows[None, :]
    bits = (rows > 0).astype(np.uint8)
    packed = np.packbits(bits, axis=1)
    pad = (-packed.shape[1]) % 8
    if pad:
        packed = np.pad(packed, ((0, 0), (0, pad)))
    lanes = packed.view(np.uint64)
    with np.errstate(over="ignore"):
        acc = _splitmix(np.full(lanes.shape[0], np.uint64(seed & (2**64 - 1))))
        for j in range(lanes.shape[1]):
            acc = _splitmix(acc ^ (lanes[:, j] + np.uint64(j)))
    return acc.astype(np.float64) / float(2**64)
