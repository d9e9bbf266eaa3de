"""Distinguishers and min-entropy experiments over channel triplets.

Given a distribution of triplets (x, y, t) and an estimator f that, from the
seed-restricted view (r, x_{r+}, y_{r-}, t), predicts the masked product
<x*y, r> unusually well, the machinery here turns f into a privacy
distinguisher: an algorithm that tells (x, y) apart from the same pair with
one bit flipped, given only the transcript and the rest of the pair.

* ``reconstruct_product_bit`` recovers (x*y)_j by the sign of the mean of
  offset votes over random seeds (the triplet analogue of the database
  attack in ``noisyip.reconstruct``).
* ``flip_distinguisher`` wraps the reconstruction into three one-bit tests
  that compare the reconstructed product bit against a claimed pair, after
  applying one of three flip patterns.
* ``eve_distinguisher`` adds the abort rule: it first measures, without
  ever reading the bit under test, how often f is within a window of the
  partial masked product, and proceeds only when that empirical rate clears
  a threshold.
* ``search_eve_params`` grid-searches the distinguisher parameters for the
  largest empirical gap between acceptance on real and flipped pairs.

The module also hosts the min-entropy experiments: the residual entropy of
<X,Y> mod m for independent product sources, and of <X*Y, R> conditioned on
the seed-restricted leakage (R, X_{R+}, Y_{R-}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channels import Channel, Transcript
from .errors import PreconditionViolation, UnsupportedModel
from .rng import hash_uniform01, rng_from_seed, spawn_rngs
from .signvectors import random_signs
from .reconstruct import _vote_values, sample_offset
from .sources import SvSourceSpec


class _Abort:
    def __repr__(self):
        return "ABORT"


ABORT = _Abort()


# ---------------------------------------------------------------------------
# Triplet sources and estimators
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TripletSource:
    """A sampler of (x, y, transcript) triplets of a fixed size."""

    n: int
    _sample: Callable[[np.random.Generator], tuple]

    def sample(self, rng: np.random.Generator):
        return self._sample(rng)

    @classmethod
    def from_channel(cls, channel: Channel) -> "TripletSource":
        def draw(rng):
            s = channel.sample(rng)
            return s.x, s.y, s.t

        return cls(n=channel.n, _sample=draw)


def masked_views(R: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Per-row restricted views: x where the mask is +1, y where it is -1.

    Hidden positions are zeroed, which encodes "not visible" without
    changing row shapes; estimators must treat zeros as absent data.
    """
    x64 = np.asarray(x, dtype=np.int64)
    y64 = np.asarray(y, dtype=np.int64)
    xp = np.where(R == 1, x64, 0)
    ym = np.where(R == -1, y64, 0)
    return xp, ym


class TripletEstimator:
    """Interface: integer estimates of <x*y, r> from restricted views."""

    n: int

    def query_masked(
        self,
        R: np.ndarray,
        xp_masked: np.ndarray,
        ym_masked: np.ndarray,
        t: Transcript,
        rng: np.random.Generator,
    ) -> np.ndarray:
        raise NotImplementedError


class ScalarTripletEstimator(TripletEstimator):
    """Adapter for per-query estimators f(r, x_plus, y_minus, t, rng)."""

    def __init__(self, fn: Callable, n: int):
        self.fn = fn
        self.n = int(n)

    def query_masked(self, R, xp_masked, ym_masked, t, rng):
        out = np.empty(R.shape[0], dtype=np.int64)
        for i in range(R.shape[0]):
            r = R[i]
            x_plus = xp_masked[i][r == 1]
            y_minus = ym_masked[i][r == -1]
            out[i] = int(self.fn(r, x_plus, y_minus, t, rng))
        return out


class OpenTranscriptEstimator(TripletEstimator):
    """Reads the full inputs from a leaky transcript: f = <x*y, r> + noise.

    Only works on channels that place ``x`` and ``y`` in the transcript
    (e.g. ``exact_ip_channel(n, leak_inputs=True)``).  The optional noise is
    a *pure* function of r (hash-derived), so the estimator is a fixed
    function and can be queried repeatedly with consistent answers.
    """

    def __init__(self, n: int, noise_scale: float = 0.0, noise_seed: int = 7):
        self.n = int(n)
        self.noise_scale = float(noise_scale)
        self.noise_seed = int(noise_seed)

    def query_masked(self, R, xp_masked, ym_masked, t, rng):
        x = np.asarray(t.message("x"), dtype=np.int64)
        y = np.asarray(t.message("y"), dtype=np.int64)
        answers = R.astype(np.int64) @ (x * y)
        if self.noise_scale > 0:
            u = hash_uniform01(R, self.noise_seed) - 0.5
            w = -self.noise_scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
            answers = answers + (np.sign(w) * np.floor(np.abs(w) + 0.5)).astype(
                np.int64
            )
        return answers


def open_transcript_estimator(
    n: int, noise_scale: float = 0.0, noise_seed: int = 7
) -> OpenTranscriptEstimator:
    return OpenTranscriptEstimator(n, noise_scale, noise_seed)


# ---------------------------------------------------------------------------
# Product-bit reconstruction over triplets
# ---------------------------------------------------------------------------


def _product_votes(
    j: int,
    x: np.ndarray,
    y: np.ndarray,
    t: Transcript,
    f: TripletEstimator,
    ell: int,
    R: np.ndarray,
    ks: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    n = len(x)
    z0 = (np.asarray(x, dtype=np.int64) * np.asarray(y, dtype=np.int64))
    z0 = z0.copy()
    z0[j] = 0
    xp, ym = masked_views(R, x, y)
    answers = np.clip(f.query_masked(R, xp, ym, t, rng), -n, n)
    residuals = answers - R.astype(np.int64) @ z0
    return _vote_values(residuals, ks, R[:, j])


def reconstruct_product_bit(
    j: int,
    x: np.ndarray,
    y: np.ndarray,
    t: Transcript,
    f: TripletEstimator,
    ell: int,
    samples: int | None,
    rng: np.random.Generator,
    batch_size: int = 65536,
) -> int:
    """Sign-of-mean reconstruction of (x*y)_j from estimator queries.

    Ties resolve to -1.  The per-query work never reads position j of the
    product: the residual uses the j-zeroed product vector, and the final
    multiplication uses r_j only.  ``samples = None`` uses the
    analysis-scale default n^4; concrete estimators need far fewer.
    """
    n = len(x)
    if samples is None:
        samples = n**4
    if samples < 1:
        raise ValueError("samples must be >= 1")
    total = 0
    done = 0
    while done < samples:
        size = min(batch_size, samples - done)
        R = random_signs(n, rng, size)
        ks = sample_offset(n, ell, rng, size=size)
        total += int(_product_votes(j, x, y, t, f, ell, R, ks, rng).sum())
        done += size
    return 1 if total > 0 else -1


def variant_vote_split(
    j: int,
    x: np.ndarray,
    y: np.ndarray,
    t: Transcript,
    f: TripletEstimator,
    ell: int,
    R: np.ndarray,
    ks: np.ndarray,
    rng: np.random.Generator,
) -> dict[str, tuple[int, int]]:
    """Vote sums of the four flip variants, split by the sign of r_j.

    Requires a pure estimator (answers a fixed function of the query);
    with shared (R, ks) the four variants satisfy the exchange identity

        total(x,y) + total(x^,y^) == total(x^,y) + total(x,y^)

    where ^ flips position j, because each side of the split only depends
    on the variant through the half of the pair it can see.
    """
    from .signvectors import flip as _flip

    variants = {
        "xy": (x, y),
        "fx_y": (_flip(x, j), y),
        "x_fy": (x, _flip(y, j)),
        "fx_fy": (_flip(x, j), _flip(y, j)),
    }
    out = {}
    for name, (xx, yy) in variants.items():
        votes = _product_votes(j, xx, yy, t, f, ell, R, ks, rng)
        minus_side = int(votes[R[:, j] == -1].sum())
        plus_side = int(votes[R[:, j] == 1].sum())
        out[name] = (minus_side, plus_side)
    return out


# ---------------------------------------------------------------------------
# Flip distinguishers
# ---------------------------------------------------------------------------


def _flip_pair(x: np.ndarray, y: np.ndarray, i: int):
    n = len(x)
    if i < n:
        xf = x.copy()
        xf[i] = -xf[i]
        return xf, y
    yf = y.copy()
    yf[i - n] = -yf[i - n]
    return x, yf


def _base_distinguisher(
    i: int,
    x: np.ndarray,
    y: np.ndarray,
    t: Transcript,
    f: TripletEstimator,
    ell: int,
    allowed_low_half: bool,
    samples: int,
    rng: np.random.Generator,
) -> int:
    n = len(x)
    in_low = i < n
    if in_low != allowed_low_half:
        return 0
    j = i if in_low else i - n
    d = reconstruct_product_bit(j, x, y, t, f, ell, samples, rng)
    return 1 if d != int(x[j]) * int(y[j]) else 0


def flip_distinguisher(
    d: int,
    i: int,
    x: np.ndarray,
    y: np.ndarray,
    t: Transcript,
    f: TripletEstimator,
    ell: int,
    samples: int,
    rng: np.random.Generator,
) -> int:
    """One of three flip-pattern distinguishers, selected by d in {1,2,3}.

    Pattern 1 flips coordinate i of the concatenated pair and only fires on
    the x half; pattern 2 does the same on the y half; pattern 3 flips
    *both* halves at position j(i) and fires on the x half.  Each one
    reconstructs the product bit of the modified pair and outputs 1 when
    the reconstruction contradicts the modified pair.
    """
    n = len(x)
    if not 0 <= i < 2 * n:
        raise PreconditionViolation("index must lie in [0, 2n)")
    j = i if i < n else i - n
    if d == 1:
        xf, yf = _flip_pair(x, y, i)
        return _base_distinguisher(i, xf, yf, t, f, ell, True, samples, rng)
    if d == 2:
        xf, yf = _flip_pair(x, y, i)
        return _base_distinguisher(i, xf, yf, t, f, ell, False, samples, rng)
    if d == 3:
        xf = x.copy()
        xf[j] = -xf[j]
        yf = y.copy()
        yf[j] = -yf[j]
        return _base_distinguisher(i, xf, yf, t, f, ell, True, samples, rng)
    raise ValueError("d must be 1, 2 or 3")


# ---------------------------------------------------------------------------
# The abort-gated distinguisher
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EveParams:
    """Distinguisher parameters: window, abort threshold, flip pattern."""

    ell_hat: int
    v_hat: float
    d: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.v_hat < 0:
            raise ValueError("v_hat must be >= 0")


def eve_distinguisher(
    params: EveParams,
    i: int,
    x: np.ndarray,
    y: np.ndarray,
    t: Transcript,
    f: TripletEstimator,
    samples: int | None,
    rng: np.random.Generator,
    rec_samples: int | None = None,
):
    """Abort-gated flip distinguisher; returns 0, 1 or ABORT.

    The gate estimates, over seeds conditioned to hide position j(i) of the
    relevant half (r_j = -1 when i addresses x, +1 when it addresses y),
    the rate q at which f lands within ell_hat of the partial masked
    product <(x*y)_{-j}, r_{-j}>.  Neither the seed restriction handed to f
    nor the partial product reads the flipped coordinate, so the abort
    decision is invariant to flipping bit i of the input pair.  If
    q > v_hat, the flip-pattern test runs at window ell_hat + 1.

    ``samples = None`` uses the analysis-scale default n^5 for the gate;
    experiment drivers pass explicit desk-scale counts.
    """
    n = len(x)
    if samples is None:
        samples = n**5
    if not 0 <= i < 2 * n:
        raise PreconditionViolation("index must lie in [0, 2n)")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    j, b = (i, -1) if i < n else (i - n, 1)
    z0 = (np.asarray(x, dtype=np.int64) * np.asarray(y, dtype=np.int64)).copy()
    z0[j] = 0
    R = random_signs(n, rng, samples)
    R[:, j] = b
    xp, ym = masked_views(R, x, y)
    answers = np.clip(f.query_masked(R, xp, ym, t, rng), -n, n)
    residuals = answers - R.astype(np.int64) @ z0
    q = float(np.count_nonzero(np.abs(residuals) <= params.ell_hat)) / samples
    if q <= params.v_hat:
        return ABORT
    return flip_distinguisher(
        params.d,
        i,
        x,
        y,
        t,
        f,
        params.ell_hat + 1,
        rec_samples if rec_samples is not None else samples,
        rng,
    )


def v_hat_grid(n: int, ell: int, eps: float, c_eps: float = 1.0) -> np.ndarray:
    """Threshold grid [c ell/4 sqrt(n), c ell/2 sqrt(n)] in steps of
    ell/(sqrt(n) log2(n)^3), with c = c_eps * e^(4 eps).

    The scale constant is exposed because the analysis-level value is far
    too large to be meaningful at experiment sizes.
    """
    c = c_eps * math.exp(4 * eps)
    root = math.sqrt(n)
    lo = c * ell / (4 * root)
    hi = c * ell / (2 * root)
    alpha = ell / (root * math.log2(n) ** 3)
    count = int(math.floor((hi - lo) / alpha)) + 1
    return lo + alpha * np.arange(count)


@dataclass(frozen=True)
class SearchReport:
    params: "EveParams"
    gap: float
    real_rate: float
    flipped_rate: float
    abort_rate: float
    num_triplets: int
    samples: int


def search_eve_params(
    source: TripletSource,
    f: TripletEstimator,
    ell: int,
    eps: float,
    budget: int,
    rng: np.random.Generator,
    c_eps: float = 1.0,
    ell_hat_candidates: Sequence[int] | None = None,
    d_candidates: Sequence[int] = (1, 2, 3),
    num_triplets: int = 48,
    grid_cap: int = 8,
) -> SearchReport:
    """Grid-search (ell_hat, v_hat, d) for the largest distinguishing gap.

    The gap of a parameter triple is

        Pr[Eve = 1 on the real pair] - e^(-eps) Pr[Eve = 1 on a flipped pair]

    estimated over shared triplets, shared flip indices and shared internal
    randomness (common random numbers) to cut comparison variance.  ``budget``
    caps the total number of estimator queries across the whole search.
    """
    if ell_hat_candidates is None:
        ell_hat_candidates = (ell + 1, ell + 2, ell + 4)
    grid = v_hat_grid(source.n, ell, eps, c_eps)
    if len(grid) > grid_cap:
        keep = np.unique(np.linspace(0, len(grid) - 1, grid_cap).astype(int))
        grid = grid[keep]
    combos = [
        EveParams(ell_hat=int(lh), v_hat=float(v), d=int(d))
        for d in d_candidates
        for lh in ell_hat_candidates
        for v in grid
    ]
    evals = 2 * num_triplets * len(combos)
    samples = max(64, budget // (2 * evals))

    triplets = []
    seeds = rng.integers(0, 2**63, size=num_triplets)
    for _ in range(num_triplets):
        x, y, t = source.sample(rng)
        i = int(rng.integers(0, 2 * source.n))
        triplets.append((x, y, t, i))

    best = None
    for params in combos:
        real_hits = flip_hits = aborts = 0
        for (x, y, t, i), seed in zip(triplets, seeds):
            out_real = eve_distinguisher(
                params, i, x, y, t, f, samples, rng_from_seed(int(seed))
            )
            xf, yf = _flip_pair(x, y, i)
            out_flip = eve_distinguisher(
                params, i, xf, yf, t, f, samples, rng_from_seed(int(seed))
            )
            real_hits += int(out_real is not ABORT and out_real == 1)
            flip_hits += int(out_flip is not ABORT and out_flip == 1)
            aborts += int(out_real is ABORT)
        real_rate = real_hits / num_triplets
        flip_rate = flip_hits / num_triplets
        gap = real_rate - math.exp(-eps) * flip_rate
        report = SearchReport(
            params=params,
            gap=gap,
            real_rate=real_rate,
            flipped_rate=flip_rate,
            abort_rate=aborts / num_triplets,
            num_triplets=num_triplets,
            samples=samples,
        )
        if best is None or report.gap > best.gap:
            best = report
    return best


# ---------------------------------------------------------------------------
# Min-entropy experiments
# ---------------------------------------------------------------------------


def _require_product_source(spec) -> SvSourceSpec:
    if not isinstance(spec, SvSourceSpec):
        raise UnsupportedModel(
            "condenser experiments require product sources (SvSourceSpec)"
        )
    return spec


def _grouped_signed_sum(
    probs: np.ndarray, trials: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample sums of independent +-1 variables with the given +1 probs.

    Independence across positions lets the sum be drawn as grouped
    binomials over distinct probability values: exact, and far cheaper
    than materializing the vectors.
    """
    n = probs.size
    values, counts = np.unique(np.round(probs, 12), return_counts=True)
    plus = np.zeros(trials, dtype=np.int64)
    for p, c in zip(values, counts):
        plus += rng.binomial(int(c), float(p), size=trials)
    return 2 * plus - n


@dataclass(frozen=True)
class CondenseReport:
    experiment: str
    n: int
    modulus: int
    trials: int
    max_freq: float
    min_entropy_bits: float
    reliable: bool
    note: str


def condense_mod_experiment(
    source_a: SvSourceSpec,
    source_b: SvSourceSpec,
    modulus: int,
    trials: int,
    rng: np.random.Generator,
) -> CondenseReport:
    """Plug-in min-entropy of <X,Y> mod modulus for independent sources.

    Returns -log2 of the largest empirical bucket frequency.  The plug-in
    estimator is one-sided: the empirical maximum overestimates the true
    maximum probability, so the reported entropy is a conservative
    lower-bound witness only when trials >> modulus^2.

    X*Y of independent product sources is again a product source, so the
    inner product is sampled exactly as a grouped-binomial signed sum.
    """
    if modulus < 2:
        raise PreconditionViolation("modulus must be >= 2")
    a = _require_product_source(source_a)
    b = _require_product_source(source_b)
    if a.n != b.n:
        raise PreconditionViolation("sources must have equal size")
    pa, pb = a.one_probs(), b.one_probs()
    p_plus = pa * pb + (1 - pa) * (1 - pb)
    ips = _grouped_signed_sum(p_plus, trials, rng)
    counts = np.bincount(np.mod(ips, modulus), minlength=modulus)
    max_freq = float(counts.max()) / trials
    return CondenseReport(
        experiment="mod",
        n=a.n,
        modulus=modulus,
        trials=trials,
        max_freq=max_freq,
        min_entropy_bits=-math.log2(max_freq),
        reliable=trials >= 100 * modulus**2,
        note="plug-in estimate; one-sided (overestimates max frequency)",
    )


@dataclass(frozen=True)
class SeededCondenseReport:
    experiment: str
    n: int
    alpha_a: float
    alpha_b: float
    trials_outer: int
    trials_inner: int
    delta: float
    quantile_bits: float
    median_bits: float
    min_bits: float


def seeded_condense_experiment(
    source_a: SvSourceSpec,
    source_b: SvSourceSpec,
    trials_outer: int,
    trials_inner: int,
    rng: np.random.Generator,
    delta: float = 0.5,
) -> SeededCondenseReport:
    """Conditional min-entropy of <X*Y, R> given (R, X_{R+}, Y_{R-}).

    The outer loop fixes a conditioning (r, x_{r+}, y_{r-}); the inner loop
    resamples the free coordinates (x on the -1 side, y on the +1 side)
    from their marginals -- valid because the sources are product form --
    and histograms the masked product.  Reports the delta-quantile of the
    per-conditioning plug-in entropy estimates, matching the "at least
    1 - delta of conditionings retain this much entropy" reading.
    """
    a = _require_product_source(source_a)
    b = _require_product_source(source_b)
    if a.n != b.n:
        raise PreconditionViolation("sources must have equal size")
    n = a.n
    pa, pb = a.one_probs(), b.one_probs()
    outer_rngs = spawn_rngs(rng, trials_outer)
    estimates = np.empty(trials_outer)
    for o in range(trials_outer):
        orng = outer_rngs[o]
        x = np.where(orng.random(n) < pa, 1, -1)
        y = np.where(orng.random(n) < pb, 1, -1)
        r = random_signs(n, orng)
        # conditional law of <x*y, r>: sum over i in r+ of x_i * Y_i plus
        # sum over i in r- of (-y_i) * X_i, all independent signs
        plus_mask = r == 1
        term_probs = np.where(
            plus_mask,
            np.where(x == 1, pb, 1 - pb),
            np.where(y == 1, 1 - pa, pa),
        )
        vals = _grouped_signed_sum(term_probs, trials_inner, orng)
        freq = np.bincount(vals + n).max() / trials_inner
        estimates[o] = -math.log2(freq)
    return SeededCondenseReport(
        experiment="seeded",
        n=n,
        alpha_a=a.alpha,
        alpha_b=b.alpha,
        trials_outer=trials_outer,
        trials_inner=trials_inner,
        delta=delta,
        quantile_bits=float(np.quantile(estimates, delta)),
        median_bits=float(np.median(estimates)),
        min_bits=float(estimates.min()),
    )
