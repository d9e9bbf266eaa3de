"""Agreement amplification: hash confirmation plus parity extraction.

A channel whose local outputs agree noticeably more often than an
eavesdropper can guess them is turned into a single-bit channel: party A
publishes a pairwise-independent hash of its output and a random parity
mask, party B confirms or refutes the hash, and on confirmation both sides
output the masked parity of their local value.  A repetition wrapper rides
out the aborts.  The security bridge runs the other way: a guesser of the
output bit implies, through a (Goldreich-Levin style) parity self-corrector
and a hash-guess dilution argument, a guesser of the full pre-hash value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channels import Channel, Transcript
from .hashing import ToeplitzHash, sample_toeplitz_hash
from .signvectors import signs_to_bits


@dataclass(frozen=True, eq=False)
class AmplifiedView:
    """Eavesdropper view of one hash-and-parity round."""

    t: Transcript
    h: ToeplitzHash
    hx: np.ndarray
    r2: np.ndarray
    equal_flag: bool


@dataclass(frozen=True, eq=False)
class HashedRound:
    aborted: bool
    bit_a: int | None
    bit_b: int | None
    view: AmplifiedView

    def __post_init__(self):
        if self.view.equal_flag and (self.bit_a is None or self.bit_b is None):
            raise ValueError("hash match must produce output bits")
        if not self.view.equal_flag and not self.aborted:
            raise ValueError("hash mismatch must abort")


def run_hashed_parity_round(
    channel: Channel, m: int, rng: np.random.Generator
) -> HashedRound:
    """One round: hash confirmation, then masked parities of the inputs.

    Channel outputs are reinterpreted as bit strings with the global
    convention bit = (1 - sign)/2.  On hash mismatch the round aborts and
    no output bits exist.
    """
    s = channel.sample(rng)
    xbits = signs_to_bits(s.x)
    ybits = signs_to_bits(s.y)
    h = sample_toeplitz_hash(channel.n, m, rng)
    r2 = rng.integers(0, 2, size=channel.n, dtype=np.uint8)
    hx = h.hash_bits(xbits)
    equal = bool(np.array_equal(hx, h.hash_bits(ybits)))
    view = AmplifiedView(t=s.t, h=h, hx=hx, r2=r2, equal_flag=equal)
    if not equal:
        return HashedRound(aborted=True, bit_a=None, bit_b=None, view=view)
    bit_a = int(np.dot(r2.astype(np.int64), xbits.astype(np.int64)) % 2)
    bit_b = int(np.dot(r2.astype(np.int64), ybits.astype(np.int64)) % 2)
    return HashedRound(aborted=False, bit_a=bit_a, bit_b=bit_b, view=view)


def hashed_parity_trials(
    channel: Channel, m: int, trials: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized rounds: (aborted, bit_a, bit_b); bits are -1 where aborted."""
    n = channel.n
    b = channel.sample_batch(trials, rng)
    xbits = signs_to_bits(b.xs)
    ybits = signs_to_bits(b.ys)
    diag = rng.integers(0, 2, size=(trials, n + m - 1), dtype=np.uint8)
    offset = rng.integers(0, 2, size=(trials, m), dtype=np.uint8)
    r2 = rng.integers(0, 2, size=(trials, n), dtype=np.uint8)
    rows = np.arange(m)[:, None]
    cols = np.arange(n)[None, :]
    idx = (rows - cols + n - 1).ravel()
    lanes = diag[:, idx].reshape(trials, m, n)
    hx = (np.einsum("tmn,tn->tm", lanes, xbits, dtype=np.int64) + offset) % 2
    hy = (np.einsum("tmn,tn->tm", lanes, ybits, dtype=np.int64) + offset) % 2
    aborted = np.any(hx != hy, axis=1)
    bit_a = np.einsum("tn,tn->t", r2, xbits, dtype=np.int64) % 2
    bit_b = np.einsum("tn,tn->t", r2, ybits, dtype=np.int64) % 2
    bit_a = np.where(aborted, -1, bit_a)
    bit_b = np.where(aborted, -1, bit_b)
    return aborted, bit_a, bit_b


def default_hash_width(alpha: float) -> int:
    """m = ceil(log2(1/alpha)) + 8, tuned so hash collisions are negligible
    next to the agreement rate."""
    return math.ceil(math.log2(1.0 / alpha)) + 8


@dataclass(frozen=True, eq=False)
class RepeatResult:
    all_failed: bool
    bit_a: int
    bit_b: int
    attempts: int
    views: tuple[AmplifiedView, ...]


def repeat_until_success(
    channel: Channel,
    alpha: float,
    rng: np.random.Generator,
    m: int | None = None,
) -> RepeatResult:
    """Re-run the hash-and-parity round until it does not abort.

    At most ceil(5/alpha) attempts are made; against an alpha-agreement
    channel all of them abort with probability at most
    (1 - alpha)^(5/alpha) <= e^-5.  If every attempt aborts, both output
    bits default to 0.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    m = default_hash_width(alpha) if m is None else m
    max_attempts = math.ceil(5.0 / alpha)
    views = []
    for attempt in range(1, max_attempts + 1):
        round_ = run_hashed_parity_round(channel, m, rng)
        views.append(round_.view)
        if not round_.aborted:
            return RepeatResult(
                all_failed=False,
                bit_a=round_.bit_a,
                bit_b=round_.bit_b,
                attempts=attempt,
                views=tuple(views),
            )
    return RepeatResult(
        all_failed=True,
        bit_a=0,
        bit_b=0,
        attempts=max_attempts,
        views=tuple(views),
    )


# ---------------------------------------------------------------------------
# Parity self-correction (list decoding)
# ---------------------------------------------------------------------------


def gl_decode(
    oracle: Callable[[np.ndarray], np.ndarray],
    n: int,
    rng: np.random.Generator,
    agreement_floor: float = 0.76,
    fail_budget: float = 0.05,
    check_probes: int = 2048,
) -> np.ndarray:
    """Recover x from an oracle predicting the parity <x, r> mod 2.

    Standard subset-sum list decoder: draw t base probes, enumerate all 2^t
    guesses of their parities, and under each guess recover every bit by
    majority vote over the 2^t - 1 pairwise-independent subset-XOR probes
    shifted by the unit vector of that bit.  The candidate with the best
    empirical agreement against fresh probes wins.  t is sized by Chebyshev
    over the pairwise-independent votes so that, whenever the oracle agrees
    with the parity on at least ``agreement_floor`` of all inputs, the
    correct guess yields x itself with failure probability about
    ``fail_budget``.

    ``oracle`` maps a (batch, n) bit matrix to a (batch,) bit vector.
    """
    delta = agreement_floor - 0.5
    if delta <= 0:
        raise ValueError("agreement_floor must exceed 1/2")
    need = n * agreement_floor * (1 - agreement_floor) / (fail_budget * delta**2)
    t = max(3, math.ceil(math.log2(need + 1)))
    t = min(t, 14)  # 2^t candidate enumeration cap
    num_subsets = 2**t - 1

    base = rng.integers(0, 2, size=(t, n), dtype=np.uint8)
    codes = np.arange(1, 2**t, dtype=np.uint32)
    subset_bits = ((codes[:, None] >> np.arange(t)[None, :]) & 1).astype(np.uint8)
    # float32 matmul stays exact here (counts bounded by 2^t << 2^24) and
    # dispatches to BLAS, unlike integer matmuls
    probes = (
        (subset_bits.astype(np.float32) @ base.astype(np.float32)) % 2
    ).astype(np.uint8)  # (S, n)

    # votes[S, i] = oracle(probe_S xor e_i); one batched call per bit
    votes = np.empty((num_subsets, n), dtype=np.uint8)
    for i in range(n):
        shifted = probes.copy()
        shifted[:, i] ^= 1
        votes[:, i] = oracle(shifted)

    # parity of subset S under guess sigma = popcount(code(S) & code(sigma))
    guesses = np.arange(2**t, dtype=np.uint32)
    subset_parities = (
        np.bitwise_count(codes[:, None] & guesses[None, :]) & 1
    ).astype(np.uint8)  # (S, G)

    # majority of votes[S, i] xor subset_parities[S, g] over S, per (g, i):
    # count = sum_S votes + sum_S par - 2 * votes . par
    v_sum = votes.sum(axis=0, dtype=np.int64)  # (n,)
    p_sum = subset_parities.sum(axis=0, dtype=np.int64)  # (G,)
    cross = votes.T.astype(np.float32) @ subset_parities.astype(np.float32)  # (n, G)
    counts = v_sum[:, None] + p_sum[None, :] - 2.0 * cross
    candidates = (counts.T > num_subsets / 2).astype(np.uint8)  # (G, n)
    candidates = np.unique(candidates, axis=0)

    fresh = rng.integers(0, 2, size=(check_probes, n), dtype=np.uint8)
    answers = oracle(fresh).astype(np.int64)
    cand_parities = (
        (candidates.astype(np.float32) @ fresh.T.astype(np.float32)) % 2
    ).astype(np.int64)
    agreement = (cand_parities == answers[None, :]).mean(axis=1)
    return candidates[int(np.argmax(agreement))]


def eve_amplified(
    hash_adversary: Callable[[Transcript, ToeplitzHash, np.ndarray], np.ndarray],
    t: Transcript,
    n: int,
    m: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run a (transcript, hash, hash-value) guesser on a bare transcript.

    Samples the hash and a uniform candidate hash value itself; on events
    where the parties' values agree, the sampled value matches the real
    hash with probability exactly 2^-m, diluting the adversary's success by
    that factor and no more.
    """
    h = sample_toeplitz_hash(n, m, rng)
    v = rng.integers(0, 2, size=m, dtype=np.uint8)
    guess = np.asarray(hash_adversary(t, h, v), dtype=np.uint8)
    if guess.shape != (n,):
        raise ValueError("hash adversary must return an n-bit guess")
    return guess
