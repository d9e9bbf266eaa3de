"""Random sources: biased product sign sources and rounded Laplace noise.

The bit sources implemented here are *product* sources: entries are drawn
independently, each with Pr[X_i = +1] = p_i.  A product source with every
odds ratio p_i/(1-p_i) inside [alpha, 1/alpha] satisfies the strong
unpredictability requirement that each bit stays alpha-hard to guess even
given all other bits (independence makes the conditioning vacuous).
Correlated sources are deliberately out of scope: the conditional
resampling used by the seeded condenser experiments is tractable only for
product form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedModel
from .signvectors import SIGN_DTYPE

IID_BIAS = "iid-bias"
PER_INDEX_BIAS = "per-index-bias"


@dataclass(frozen=True)
class SvSourceSpec:
    """Parameters of a product sign source with bounded per-bit odds.

    alpha:
        Bound on the odds ratio Pr[X_i=+1]/Pr[X_i=-1], which must lie in
        [alpha, 1/alpha] for every i.  alpha = 1 forces the uniform source.
    model:
        ``"iid-bias"`` uses the extreme allowed bias p = 1/(1+alpha) at
        every position; ``"per-index-bias"`` takes explicit probabilities.
    probs:
        Per-position Pr[X_i = +1]; required for the per-index model.
    """

    alpha: float
    n: int
    model: str = IID_BIAS
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.model not in (IID_BIAS, PER_INDEX_BIAS):
            raise UnsupportedModel(f"unknown source model {self.model!r}")
        if self.model == PER_INDEX_BIAS:
            if self.probs is None or len(self.probs) != self.n:
                raise ValueError("per-index-bias requires n probabilities")
            lo, hi = 1 / (1 + 1 / self.alpha), 1 / (1 + self.alpha)
            for p in self.probs:
                ratio_ok = lo - 1e-12 <= p <= hi + 1e-12
                if not ratio_ok:
                    raise ValueError(
                        f"p={p} has odds ratio outside [alpha, 1/alpha]"
                    )
        elif self.probs is not None:
            raise ValueError("probs is only meaningful for per-index-bias")

    @classmethod
    def uniform(cls, n: int) -> "SvSourceSpec":
        return cls(alpha=1.0, n=n)

    def one_probs(self) -> np.ndarray:
        """Pr[X_i = +1] for every position."""
        if self.model == IID_BIAS:
            return np.full(self.n, 1.0 / (1.0 + self.alpha))
        return np.asarray(self.probs, dtype=float)


def sample_sv_source(
    spec: SvSourceSpec, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Draw sign vector(s) from a product source: shape (n,) or (size, n)."""
    shape = (spec.n,) if size is None else (size, spec.n)
    p = spec.one_probs()
    u = rng.random(shape)
    return np.where(u < p, np.int8(1), np.int8(-1)).astype(SIGN_DTYPE)


@dataclass(frozen=True)
class NoiseSample:
    """A rounded Laplace draw together with the scale it was drawn at."""

    value: int
    scale: float


def sample_rounded_laplace(
    scale: float, rng: np.random.Generator, size: int | None = None
):
    """Rounded Laplace noise via inverse-CDF sampling.

    Draws w ~ Laplace(scale) as -scale * sign(u) * log(1 - 2|u|) for
    u uniform on (-1/2, 1/2), then rounds to the nearest integer with
    halves rounded away from zero.  scale = 0 degenerates to exactly 0.
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    shape = () if size is None else (size,)
    if scale == 0:
        out = np.zeros(shape, dtype=np.int64)
        return int(out) if size is None else out
    u = rng.random(shape) - 0.5
    w = -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    rounded = np.sign(w) * np.floor(np.abs(w) + 0.5)
    out = rounded.astype(np.int64)
    return int(out) if size is None else out


def draw_noise(scale: float, rng: np.random.Generator) -> NoiseSample:
    """Single rounded Laplace draw as a typed record."""
    return NoiseSample(value=sample_rounded_laplace(scale, rng), scale=scale)


def rounded_laplace_pmf(k: int, scale: float) -> float:
    """Exact Pr[round(Laplace(scale)) = k].

    P[0] = 1 - exp(-1/(2b)) and P[k] = exp(-|k|/b) * sinh(1/(2b)) for k != 0,
    from integrating the density over (k - 1/2, k + 1/2).
    """
    if scale <= 0:
        return 1.0 if k == 0 else 0.0
    if k == 0:
        return 1.0 - math.exp(-0.5 / scale)
    return math.exp(-abs(k) / scale) * math.sinh(0.5 / scale)


def rounded_laplace_tail(t: int, scale: float) -> float:
    """Exact Pr[|round(Laplace(scale))| >= t] for integer t >= 1."""
    if t <= 0:
        return 1.0
    if scale <= 0:
        return 0.0
    return math.exp(-(t - 0.5) / scale)
