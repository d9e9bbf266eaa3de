"""Bit reconstruction from low-confidence inner-product estimates.

The object under attack is a hidden database z in {-1,+1}^n, accessed only
through an estimator f whose answer f(r) is within ell of <z,r> for at
least a lambda*ell/sqrt(n) fraction of uniform r (everywhere else f is
unrestricted).  Even in this low-confidence regime the single missing bit
z_i is recoverable for most i from z_{-i} and queries to f alone.

The attack scores each query with a three-valued vote: guess that f(r) is
off from <z,r> by exactly k, in which case the residual
a - <z_{-i}, r_{-i}> - k collapses to z_i * r_i and multiplying by r_i
exposes z_i; if the residual is not compatible with offset k (not in
{k-1, k+1}), abstain.  Averaged over a suitably weighted random offset k
and uniform r, the vote correlates positively with z_i.  The offset
distribution is sampled in three stages (a span (s, t), a width m inside
the span, then a uniform offset in [-(m+1), m+1]) with closed-form weights,
so its law is exactly computable; ``brute_force_vote_mean`` evaluates the
vote expectation exactly at small n and serves as the independent oracle
for the Monte Carlo paths.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import PreconditionViolation
from .rng import spawn_rngs
from .signvectors import (
    SIGN_DTYPE,
    as_signs,
    pack_signs,
    packed_bit,
    packed_inner_products,
    random_packed,
)
from .sources import rounded_laplace_tail, sample_rounded_laplace

# ---------------------------------------------------------------------------
# The three-valued offset vote
# ---------------------------------------------------------------------------


def offset_vote(k: int, i: int, z_minus_i, r, a: int) -> int:
    """Vote for z_i assuming the answer a is off from <z,r> by exactly k.

    Returns (a - <z_{-i}, r_{-i}> - k) * r_i when the residual
    a - <z_{-i}, r_{-i}> lies in {k-1, k+1}, else 0.  The output is always
    in {-1, 0, +1}: on a "hit" the residual minus k is +-1 and r_i is +-1.
    Never reads entry i of z (it is not even passed in).
    """
    z_minus_i = np.asarray(z_minus_i, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    r_minus_i = np.delete(r, i)
    residual = int(a) - int(np.dot(z_minus_i, r_minus_i))
    if residual - k in (-1, 1):
        return int((residual - k) * r[i])
    return 0


def _vote_values(residuals: np.ndarray, ks: np.ndarray, r_i: np.ndarray) -> np.ndarray:
    """Vectorized offset votes given precomputed residuals a - <z_{-i}, r_{-i}>."""
    diff = residuals - ks
    hit = np.abs(diff) == 1
    return np.where(hit, diff * r_i.astype(np.int64), 0)


# ---------------------------------------------------------------------------
# The staged offset distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OffsetParams:
    """Parameter window of the staged offset distribution.

    Spans are pairs (s, t) with s drawn from [0, ell-1] and t from
    [ell+2, floor(sqrt(n))]; the window is well-defined only when
    ell + 2 <= floor(sqrt(n)).
    """

    n: int
    ell: int

    def __post_init__(self):
        if self.ell < 1:
            raise PreconditionViolation("ell must be >= 1")
        if self.ell + 2 > math.isqrt(self.n):
            raise PreconditionViolation(
                f"need ell + 2 <= floor(sqrt(n)); got ell={self.ell}, n={self.n}"
            )

    @property
    def s_values(self) -> range:
        return range(0, self.ell)

    @property
    def t_values(self) -> range:
        return range(self.ell + 2, math.isqrt(self.n) + 1)


def _span_weight(s: int, t: int) -> int:
    return (t - s) * (t + s + 2)


def width_pmf(s: int, t: int) -> dict[int, Fraction]:
    """Exact law of the width stage: Pr[m] = (2m+3)/((t-s)(t+s+2)) on [s, t-1]."""
    if not 0 <= s < t:
        raise PreconditionViolation("need 0 <= s < t")
    z = _span_weight(s, t)
    return {m: Fraction(2 * m + 3, z) for m in range(s, t)}


def sample_width(s: int, t: int, rng: np.random.Generator, size: int | None = None):
    """Sample the width stage by exact integer inverse-CDF.

    The cumulative weight of [s, m] is (m+2)^2 - (s+1)^2, so the smallest m
    whose cumulative weight exceeds a uniform draw has a closed form.
    """
    if not 0 <= s < t:
        raise PreconditionViolation("need 0 <= s < t")
    return _sample_width_arrays(
        np.full(1 if size is None else size, s, dtype=np.int64),
        np.full(1 if size is None else size, t, dtype=np.int64),
        rng,
        scalar=size is None,
    )


def _sample_width_arrays(s: np.ndarray, t: np.ndarray, rng, scalar: bool = False):
    z = (t - s) * (t + s + 2)
    w = rng.integers(0, z)  # uniform in [0, Z)
    m = np.ceil(np.sqrt(w + 1 + (s + 1) ** 2)).astype(np.int64) - 2
    m = np.clip(m, s, t - 1)
    return int(m[0]) if scalar else m


def span_pmf(s_values: Sequence[int], t_values: Sequence[int]) -> dict[tuple[int, int], Fraction]:
    """Exact law of the span stage: Pr[(s,t)] proportional to (t-s)(t+s+2)."""
    s_values = list(s_values)
    t_values = list(t_values)
    if not s_values or not t_values:
        raise PreconditionViolation("span supports must be non-empty")
    if max(s_values) >= min(t_values):
        raise PreconditionViolation("need max(S) < min(T)")
    total = sum(_span_weight(s, t) for s in s_values for t in t_values)
    return {
        (s, t): Fraction(_span_weight(s, t), total)
        for s in s_values
        for t in t_values
    }


def sample_span(
    s_values: Sequence[int],
    t_values: Sequence[int],
    rng: np.random.Generator,
    size: int | None = None,
):
    """Sample span pairs (s, t) with weights (t-s)(t+s+2)."""
    pmf = span_pmf(s_values, t_values)
    pairs = list(pmf.keys())
    probs = np.array([float(p) for p in pmf.values()])
    probs /= probs.sum()
    idx = rng.choice(len(pairs), size=size, p=probs)
    arr = np.asarray(pairs, dtype=np.int64)
    if size is None:
        return tuple(int(v) for v in arr[idx])
    return arr[idx, 0], arr[idx, 1]


def sample_offset(n: int, ell: int, rng: np.random.Generator, size: int | None = None):
    """Staged offset sampler: span, then width, then uniform offset.

    Support is contained in [-floor(sqrt(n)), floor(sqrt(n))] and the law is
    symmetric about 0 with Pr[0] > 0.
    """
    params = OffsetParams(n, ell)
    scalar = size is None
    m = 1 if scalar else size
    s, t = sample_span(params.s_values, params.t_values, rng, size=m)
    widths = _sample_width_arrays(np.asarray(s), np.asarray(t), rng)
    ks = rng.integers(-(widths + 1), widths + 2)
    return int(ks[0]) if scalar else ks


def offset_pmf(n: int, ell: int) -> dict[int, Fraction]:
    """Exact law of the staged offset sampler.

    Marginalizing the width stage, the (2m+3) weights cancel against the
    uniform final stage, leaving Pr[k] = sum over spans of the number of
    widths m in [max(|k|-1, s), t-1], divided by the total span weight.
    """
    params = OffsetParams(n, ell)
    z_total = sum(
        _span_weight(s, t) for s in params.s_values for t in params.t_values
    )
    tmax = math.isqrt(n)
    pmf: dict[int, Fraction] = {}
    for k in range(-tmax, tmax + 1):
        count = 0
        for s in params.s_values:
            for t in params.t_values:
                count += max(0, t - max(abs(k) - 1, s))
        if count:
            pmf[k] = Fraction(count, z_total)
    return pmf


def vote_on_bit(
    i: int, z_minus_i, r, a: int, ell: int, rng: np.random.Generator
) -> int:
    """Randomized single-query vote for z_i: draw an offset, then vote."""
    n = len(z_minus_i) + 1
    k = sample_offset(n, ell, rng)
    return offset_vote(k, i, z_minus_i, r, a)


# ---------------------------------------------------------------------------
# Estimator handles
# ---------------------------------------------------------------------------

_MEMOIZE_MAX_N = 20


class EstimatorHandle:
    """Query wrapper around an inner-product estimator.

    Answers are clipped to [-n, n] (an estimator may always do this without
    losing accuracy, since |<z,r>| <= n).  A monotone query counter tracks
    oracle usage.  For n <= 20 queries are memoized by default so that a
    randomized estimator behaves as one fixed function of r, as the
    brute-force oracle requires; for larger n fresh randomness per query is
    statistically indistinguishable from a fixed random function because
    query points essentially never repeat.

    Built-in estimators additionally expose a packed-query fast path
    (queries as uint64 bit lanes, see ``noisyip.signvectors.pack_signs``)
    used by the streaming attack loops; semantics are identical to the
    sign-matrix interface.
    """

    def __init__(
        self,
        batch_fn: Callable[[np.ndarray], np.ndarray],
        n: int,
        memoize: bool | None = None,
        label: str = "estimator",
        packed_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        self._batch_fn = batch_fn
        self._packed_fn = packed_fn
        self.n = int(n)
        self.label = label
        self.memoize = (n <= _MEMOIZE_MAX_N) if memoize is None else memoize
        self._memo: dict[bytes, int] = {}
        self._queries = 0

    @property
    def query_count(self) -> int:
        return self._queries

    @property
    def supports_packed(self) -> bool:
        return self._packed_fn is not None and not self.memoize

    def query(self, r) -> int:
        return int(self.query_batch(np.asarray(r, dtype=SIGN_DTYPE)[None, :])[0])

    def query_batch(self, R: np.ndarray) -> np.ndarray:
        R = np.ascontiguousarray(R, dtype=SIGN_DTYPE)
        if R.ndim != 2 or R.shape[1] != self.n:
            raise ValueError(f"expected queries of shape (m, {self.n})")
        self._queries += R.shape[0]
        if not self.memoize:
            return np.clip(self._batch_fn(R), -self.n, self.n).astype(np.int64)
        out = np.empty(R.shape[0], dtype=np.int64)
        missing = []
        for idx in range(R.shape[0]):
            key = R[idx].tobytes()
            if key in self._memo:
                out[idx] = self._memo[key]
            else:
                missing.append(idx)
        if missing:
            answers = np.clip(
                self._batch_fn(R[missing]), -self.n, self.n
            ).astype(np.int64)
            for pos, idx in enumerate(missing):
                self._memo[R[idx].tobytes()] = int(answers[pos])
                out[idx] = answers[pos]
        return out

    def query_packed(self, P: np.ndarray) -> np.ndarray:
        if not self.supports_packed:
            raise ValueError(f"{self.label} has no packed fast path")
        self._queries += P.shape[0]
        return np.clip(self._packed_fn(P), -self.n, self.n).astype(np.int64)


def exact_estimator(z) -> EstimatorHandle:
    """f(r) = <z, r> exactly."""
    z64 = as_signs(z).astype(np.int64)
    n = len(z64)
    z_packed = pack_signs(z64.astype(SIGN_DTYPE))[0]

    def batch(R):
        return R.astype(np.int64) @ z64

    def packed(P):
        return packed_inner_products(P, z_packed, n)

    return EstimatorHandle(batch, n=n, label="exact", packed_fn=packed)


def zero_estimator(n: int) -> EstimatorHandle:
    """f(r) = 0 for every r (the trivial estimator)."""

    def batch(R):
        return np.zeros(R.shape[0], dtype=np.int64)

    def packed(P):
        return np.zeros(P.shape[0], dtype=np.int64)

    return EstimatorHandle(batch, n=n, label="zero", packed_fn=packed)


def laplace_estimator(z, scale: float, rng: np.random.Generator) -> EstimatorHandle:
    """f(r) = <z, r> + rounded Laplace(scale) noise, fresh per query.

    With memoization (the default at small n) the handle defines one fixed
    noisy table over {-1,+1}^n for the whole run.
    """
    z64 = as_signs(z).astype(np.int64)
    n = len(z64)
    z_packed = pack_signs(z64.astype(SIGN_DTYPE))[0]

    def batch(R):
        ips = R.astype(np.int64) @ z64
        return ips + sample_rounded_laplace(scale, rng, size=R.shape[0])

    def packed(P):
        ips = packed_inner_products(P, z_packed, n)
        return ips + sample_rounded_laplace(scale, rng, size=P.shape[0])

    return EstimatorHandle(
        batch, n=n, label=f"laplace({scale:g})", packed_fn=packed
    )


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorProfile:
    """Empirical quality certificate of an estimator at window ell.

    ``lambda_hat`` is sqrt(n)/ell times the empirical probability that the
    answer lands within ell of the true inner product, matching the quality
    scale on which the reconstruction guarantees are stated.
    """

    lambda_hat: float
    ell: int
    trials: int
    success_rate: float


def certify_estimator(
    f: EstimatorHandle,
    z,
    ell: int,
    trials: int,
    rng: np.random.Generator,
    batch_size: int = 65536,
) -> EstimatorProfile:
    """Estimate Pr[|f(R) - <z,R>| < ell] over uniform R and scale it."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    z64 = as_signs(z).astype(np.int64)
    n = len(z64)
    hits = 0
    done = 0
    while done < trials:
        size = min(batch_size, trials - done)
        R = (2 * rng.integers(0, 2, size=(size, n), dtype=SIGN_DTYPE) - 1).astype(
            SIGN_DTYPE
        )
        answers = f.query_batch(R)
        ips = R.astype(np.int64) @ z64
        hits += int(np.count_nonzero(np.abs(answers - ips) < ell))
        done += size
    rate = hits / trials
    return EstimatorProfile(
        lambda_hat=math.sqrt(n) / ell * rate,
        ell=ell,
        trials=trials,
        success_rate=rate,
    )


def laplace_lambda(n: int, ell: int, scale: float) -> float:
    """Exact quality certificate of the rounded-Laplace estimator.

    Pr[|f(R) - <z,R>| < ell] = Pr[|noise| <= ell-1] = 1 - exp(-(ell-1/2)/scale),
    independent of z, so lambda = sqrt(n)/ell times that.
    """
    return math.sqrt(n) / ell * (1.0 - rounded_laplace_tail(ell, scale))


def best_laplace_ell(n: int, scale: float) -> int:
    """The window ell maximizing the exact Laplace certificate at size n."""
    upper = max(1, math.isqrt(n) - 2)
    return max(range(1, upper + 1), key=lambda ell: laplace_lambda(n, ell, scale))


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------


def default_num_samples(n: int) -> int:
    """Analysis-scale per-bit sample count: 64 n^3 drives the per-bit
    failure below 0.01 against the guaranteed vote margin at quality >= 64.
    Far smaller counts suffice for concrete estimators; see the tests."""
    return 64 * n**3


def _bit_vote_sum_packed(
    i: int,
    z_minus_i: np.ndarray,
    f: EstimatorHandle,
    ell: int,
    num_samples: int,
    rng: np.random.Generator,
    batch_size: int,
) -> int:
    """Streaming vote accumulation over packed queries.

    The partial product <z_{-i}, r_{-i}> is derived from a padded copy of z
    with an arbitrary +1 filler at position i, whose contribution r_i is
    subtracted back out; position i of z itself is never read.
    """
    n = len(z_minus_i) + 1
    z_pad = np.empty(n, dtype=SIGN_DTYPE)
    z_pad[:i] = z_minus_i[:i]
    z_pad[i] = 1  # filler, cancelled below
    z_pad[i + 1 :] = z_minus_i[i:]
    z_packed = pack_signs(z_pad)[0]
    total = 0
    done = 0
    while done < num_samples:
        size = min(batch_size, num_samples - done)
        P = random_packed(n, size, rng)
        answers = f.query_packed(P)
        r_i = 1 - 2 * packed_bit(P, i)
        partial = packed_inner_products(P, z_packed, n) - r_i
        residuals = answers - partial
        ks = sample_offset(n, ell, rng, size=size)
        total += int(_vote_values(residuals, ks, r_i).sum())
        done += size
    return total


def _bit_vote_sum(
    i: int,
    z_minus_i: np.ndarray,
    f: EstimatorHandle,
    ell: int,
    num_samples: int,
    rng: np.random.Generator,
    batch_size: int,
) -> int:
    if f.supports_packed:
        return _bit_vote_sum_packed(
            i, z_minus_i, f, ell, num_samples, rng, batch_size
        )
    n = len(z_minus_i) + 1
    z0 = np.zeros(n, dtype=np.int64)
    z0[:i] = z_minus_i[:i]
    z0[i + 1 :] = z_minus_i[i:]
    total = 0
    done = 0
    while done < num_samples:
        size = min(batch_size, num_samples - done)
        nbytes = size * ((n + 7) // 8)
        bits = np.unpackbits(
            np.frombuffer(rng.bytes(nbytes), dtype=np.uint8)
        ).reshape(size, -1)[:, :n]
        R = (1 - 2 * bits.astype(np.int8)).astype(SIGN_DTYPE)
        answers = f.query_batch(R)
        residuals = answers - R.astype(np.int64) @ z0
        ks = sample_offset(n, ell, rng, size=size)
        total += int(_vote_values(residuals, ks, R[:, i]).sum())
        done += size
    return total


def reconstruct_bit(
    i: int,
    z_minus_i,
    f: EstimatorHandle,
    ell: int,
    num_samples: int,
    rng: np.random.Generator,
    batch_size: int = 131072,
) -> int:
    """Recover z_i as the sign of the mean vote over fresh (r, offset) draws.

    Ties resolve to -1 (sign(v) is +1 for v > 0 and -1 otherwise), so the
    trivial zero estimator deterministically outputs -1.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    z_minus_i = np.asarray(z_minus_i, dtype=np.int64)
    total = _bit_vote_sum(i, z_minus_i, f, ell, num_samples, rng, batch_size)
    return 1 if total > 0 else -1


@dataclass(frozen=True)
class ReconstructionResult:
    guess: np.ndarray
    frac_correct: float
    queries: int
    num_samples_per_bit: int


def reconstruct_all(
    z,
    f: EstimatorHandle,
    ell: int,
    num_samples_per_bit: int | None,
    rng: np.random.Generator,
    threads: int = 1,
    batch_size: int = 131072,
) -> ReconstructionResult:
    """Attack every bit: reconstruct_bit(i, z_{-i}) for i in [0, n).

    This is the attack model in which the adversary holds all of the
    database except the bit under attack; ``frac_correct`` is the fraction
    of positions whose sign was recovered.  Per-bit work uses independent
    spawned generator streams, so the result does not depend on ``threads``.
    """
    z = as_signs(z)
    n = len(z)
    num = default_num_samples(n) if num_samples_per_bit is None else num_samples_per_bit
    queries_before = f.query_count
    bit_rngs = spawn_rngs(rng, n)

    def attack(i: int) -> int:
        z_minus_i = np.delete(z, i)
        return reconstruct_bit(
            i, z_minus_i, f, ell, num, bit_rngs[i], batch_size=batch_size
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            guesses = list(pool.map(attack, range(n)))
    else:
        guesses = [attack(i) for i in range(n)]
    guess = np.asarray(guesses, dtype=SIGN_DTYPE)
    frac = float(np.count_nonzero(guess == z)) / n
    return ReconstructionResult(
        guess=guess,
        frac_correct=frac,
        queries=f.query_count - queries_before,
        num_samples_per_bit=num,
    )


# ---------------------------------------------------------------------------
# Exact brute-force oracle
# ---------------------------------------------------------------------------


def all_sign_vectors(n: int) -> np.ndarray:
    """All 2^n sign vectors, one per row (n <= 16 enforced by callers)."""
    codes = np.arange(2**n, dtype=np.uint32)
    bits = (codes[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits.astype(np.int8) - 1).astype(SIGN_DTYPE)


def brute_force_vote_mean(i: int, z, f: EstimatorHandle, ell: int) -> Fraction:
    """Exact expected vote E_{offset, r uniform}[vote for z_i], as a Fraction.

    Enumerates every r in {-1,+1}^n and combines the votes with the exact
    rational offset law.  Requires n <= 16 and a total (deterministic)
    estimator; this is the independent oracle the Monte Carlo reconstruction
    paths are validated against.
    """
    z = as_signs(z)
    n = len(z)
    if n > 16:
        raise PreconditionViolation("brute force requires n <= 16")
    R = all_sign_vectors(n)
    answers = f.query_batch(R)
    z0 = z.astype(np.int64).copy()
    z0[i] = 0
    residuals = answers - R.astype(np.int64) @ z0
    r_i = R[:, i].astype(np.int64)
    pmf = offset_pmf(n, ell)
    total = Fraction(0)
    for k, pk in pmf.items():
        votes = _vote_values(residuals, np.int64(k), r_i)
        total += pk * Fraction(int(votes.sum()), 2**n)
    return total
