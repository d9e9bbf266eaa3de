"""Channels: joint samplers of two private sign vectors and a transcript.

A channel of size n is a distribution over (x, y, t) where x and y are the
parties' local outputs in {-1,+1}^n and t is a public transcript carrying a
designated integer output ``out(t)``.  Channels here are stateless samplers;
concurrent use requires per-thread generator streams.

Built-in channels:

* ``exact_ip_channel``     -- out = <x,y> exactly (a stand-in for a channel
  realized by secure computation; blatantly non-private).
* ``laplace_ip_channel``   -- out = <x,y> + rounded Laplace(2/eps) noise.
* ``randomized_response_channel`` -- one party releases per-entry flipped
  data, the other releases a debiased noisy estimate.
* ``constant_channel``     -- out is a fixed integer, inputs drawn from
  configurable product sources; the transcript carries no data at all.
* ``equality_channel``     -- X = Y with a given probability, otherwise
  independent; used by the agreement-amplification experiments.

``exact_ip_channel(..., leak_inputs=True)`` additionally places both inputs
in the transcript.  That variant is useful as a worst-case non-private
channel in attack experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch
from .signvectors import SIGN_DTYPE, random_signs
from .sources import SvSourceSpec, sample_rounded_laplace, sample_sv_source


@dataclass(frozen=True, eq=False)
class Transcript:
    """Ordered public messages plus the designated integer output.

    The designated output is stored redundantly in ``out`` and must equal
    the message named ``"out"``.
    """

    messages: tuple[tuple[str, object], ...]
    out: int

    def __post_init__(self):
        declared = dict(self.messages).get("out")
        if declared is None or int(declared) != int(self.out):
            raise ValueError("designated output must match the 'out' message")

    def message(self, name: str):
        for key, value in self.messages:
            if key == name:
                return value
        raise KeyError(name)

    def has_message(self, name: str) -> bool:
        return any(key == name for key, _ in self.messages)


@dataclass(frozen=True, eq=False)
class ChannelSample:
    x: np.ndarray
    y: np.ndarray
    t: Transcript

    def __post_init__(self):
        if self.x.shape != self.y.shape:
            raise DimensionMismatch("x and y must have equal length")


@dataclass(eq=False)
class ChannelBatch:
    """Column-major batch of channel samples."""

    xs: np.ndarray       # (size, n) int8
    ys: np.ndarray       # (size, n) int8
    outs: np.ndarray     # (size,) int64
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.xs.shape[0]

    def transcript(self, i: int) -> Transcript:
        messages = []
        for name, arr in self.extras.items():
            messages.append((name, arr[i]))
        messages.append(("out", int(self.outs[i])))
        return Transcript(messages=tuple(messages), out=int(self.outs[i]))

    def sample(self, i: int) -> ChannelSample:
        return ChannelSample(self.xs[i], self.ys[i], self.transcript(i))


class Channel:
    """A stateless sampler of (x, y, transcript) triplets."""

    def __init__(self, n: int, kind: str, params: dict, batch_fn: Callable):
        self.n = int(n)
        self.kind = kind
        self.params = dict(params)
        self._batch_fn = batch_fn

    def sample_batch(self, size: int, rng: np.random.Generator) -> ChannelBatch:
        return self._batch_fn(size, rng)

    def sample(self, rng: np.random.Generator) -> ChannelSample:
        return self.sample_batch(1, rng).sample(0)

    def __repr__(self):  # pragma: no cover
        return f"Channel(kind={self.kind!r}, n={self.n}, params={self.params})"


def _row_ips(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return np.einsum(
        "ij,ij->i", xs.astype(np.int64), ys.astype(np.int64), optimize=True
    )


def exact_ip_channel(n: int, leak_inputs: bool = False) -> Channel:
    """Channel with uniform inputs whose output is the exact inner product."""

    def batch(size, rng):
        xs = random_signs(n, rng, size)
        ys = random_signs(n, rng, size)
        outs = _row_ips(xs, ys)
        extras = {"x": xs, "y": ys} if leak_inputs else {}
        return ChannelBatch(xs, ys, outs, extras)

    kind = "exact_open" if leak_inputs else "exact"
    return Channel(n, kind, {"leak_inputs": leak_inputs}, batch)


def laplace_ip_channel(n: int, eps: float) -> Channel:
    """Uniform inputs; out = <x,y> + rounded Laplace(2/eps).

    eps = inf is accepted and degenerates to the exact channel (zero noise).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    scale = 0.0 if math.isinf(eps) else 2.0 / eps

    def batch(size, rng):
        xs = random_signs(n, rng, size)
        ys = random_signs(n, rng, size)
        noise = sample_rounded_laplace(scale, rng, size)
        outs = _row_ips(xs, ys) + noise
        return ChannelBatch(xs, ys, outs)

    return Channel(n, "laplace", {"eps": eps, "scale": scale}, batch)


def randomized_response_p(eps: float) -> float:
    """Bias parameter p = e^eps/(e^eps+1) - 1/2 of the per-entry flip."""
    return math.exp(eps) / (math.exp(eps) + 1.0) - 0.5


def randomized_response_variance(n: int, eps: float) -> float:
    """Exact Var[z | x, y] of the released estimate.

    z = (1/2p) * sum_i y_i xhat_i + Laplace(1/(p*eps)); each xhat_i has
    variance 1 - 4p^2, and the Laplace term contributes 2/(p*eps)^2.
    """
    p = randomized_response_p(eps)
    return n * (1.0 / (4 * p * p) - 1.0) + 2.0 / (p * eps) ** 2


def randomized_response_channel(n: int, eps: float) -> Channel:
    """Per-entry randomized response followed by a debiased noisy release.

    One party publishes xhat (each entry equal to x_i with probability
    1/2 + p), the other publishes z = (1/2p) <y, xhat> + Laplace(1/(p*eps)).
    The designated output is z rounded to the nearest integer so that all
    channel outputs are integers; the unrounded release stays in the
    transcript.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if n < 1:
        raise ValueError("n must be positive")
    p = randomized_response_p(eps)
    lap_scale = 1.0 / (p * eps)

    def batch(size, rng):
        xs = random_signs(n, rng, size)
        ys = random_signs(n, rng, size)
        keep = rng.random((size, n)) < 0.5 + p
        xhat = np.where(keep, xs, -xs).astype(SIGN_DTYPE)
        u = rng.random(size) - 0.5
        lap = -lap_scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
        z = _row_ips(ys, xhat) / (2.0 * p) + lap
        outs = (np.sign(z) * np.floor(np.abs(z) + 0.5)).astype(np.int64)
        return ChannelBatch(xs, ys, outs, {"flipped": xhat, "release": z})

    return Channel(n, "randomized_response", {"eps": eps, "p": p}, batch)


def constant_channel(
    n: int,
    z_out: int,
    source_a: SvSourceSpec | None = None,
    source_b: SvSourceSpec | None = None,
) -> Channel:
    """Inputs from two independent product sources; out is the constant z_out.

    The transcript carries nothing but the constant, so this channel is
    trivially private (0-DP) and its accuracy for the inner product is
    exactly the probability mass the input distribution puts near z_out.
    """
    if not -n <= z_out <= n:
        raise ValueError("z_out must lie in [-n, n]")
    source_a = source_a or SvSourceSpec.uniform(n)
    source_b = source_b or SvSourceSpec.uniform(n)
    if source_a.n != n or source_b.n != n:
        raise DimensionMismatch("source specs must match the channel size")

    def batch(size, rng):
        xs = sample_sv_source(source_a, rng, size)
        ys = sample_sv_source(source_b, rng, size)
        outs = np.full(size, int(z_out), dtype=np.int64)
        return ChannelBatch(xs, ys, outs)

    return Channel(
        n,
        "constant",
        {"z_out": z_out, "alpha_a": source_a.alpha, "alpha_b": source_b.alpha},
        batch,
    )


def equality_channel(n: int, alpha: float) -> Channel:
    """X = Y with probability alpha, otherwise independent uniform.

    out(t) is fixed to 0: the output plays no role in the agreement
    amplification experiments this channel feeds.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")

    def batch(size, rng):
        xs = random_signs(n, rng, size)
        ys = random_signs(n, rng, size)
        same = rng.random(size) < alpha
        ys[same] = xs[same]
        outs = np.zeros(size, dtype=np.int64)
        return ChannelBatch(xs, ys, outs)

    return Channel(n, "equality", {"alpha": alpha}, batch)


@dataclass(frozen=True)
class AccuracyReport:
    """Empirical (alpha, gamma)-accuracy of a channel for the inner product."""

    alpha: int
    gamma_hat: float
    trials: int
    half_width: float

    def __post_init__(self):
        if not 0 <= self.gamma_hat <= 1 or self.half_width < 0:
            raise ValueError("invalid accuracy report")


def estimate_accuracy(
    channel: Channel,
    alpha: int,
    trials: int,
    rng: np.random.Generator,
    batch_size: int = 65536,
) -> AccuracyReport:
    """Monte Carlo estimate of Pr[|out(t) - <x,y>| <= alpha]."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    hits = 0
    done = 0
    while done < trials:
        size = min(batch_size, trials - done)
        b = channel.sample_batch(size, rng)
        err = np.abs(b.outs - _row_ips(b.xs, b.ys))
        hits += int(np.count_nonzero(err <= alpha))
        done += size
    gamma = hits / trials
    half = 1.96 * math.sqrt(gamma * (1 - gamma) / trials)
    return AccuracyReport(alpha=alpha, gamma_hat=gamma, trials=trials, half_width=half)


@dataclass(frozen=True)
class DpAuditReport:
    p_real: float
    p_flipped: float
    eps_hat_lower: float
    flip_index: int
    trials: int


def dp_audit(
    channel: Channel,
    distinguisher: Callable,
    flip_index: int,
    trials: int,
    rng: np.random.Generator,
) -> DpAuditReport:
    """Hypothesis-test style lower bound on the privacy parameter.

    The distinguisher sees (i, x, y, t) and outputs a bit.  Paired trials
    evaluate it on the sampled pair and on the same transcript with entry
    ``flip_index`` of the concatenated pair negated; a large ratio between
    the two acceptance rates certifies that the channel is *not* eps-private
    for eps below the returned lower bound.  This audits a lower bound only:
    a small value never certifies privacy.

    ``flip_index`` addresses the concatenated pair: values below n flip an
    x entry, values in [n, 2n) flip a y entry.
    """
    n = channel.n
    if not 0 <= flip_index < 2 * n:
        raise ValueError("flip_index must lie in [0, 2n)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    b = channel.sample_batch(trials, rng)
    real = 0
    flipped = 0
    for i in range(trials):
        x, y, t = b.xs[i], b.ys[i], b.transcript(i)
        real += int(distinguisher(flip_index, x, y, t))
        xf, yf = x.copy(), y.copy()
        if flip_index < n:
            xf[flip_index] = -xf[flip_index]
        else:
            yf[flip_index - n] = -yf[flip_index - n]
        flipped += int(distinguisher(flip_index, xf, yf, t))
    floor = 1.0 / trials
    p_real = real / trials
    p_flipped = flipped / trials
    eps_hat = math.log(max(p_real, floor) / max(p_flipped, floor))
    return DpAuditReport(
        p_real=p_real,
        p_flipped=p_flipped,
        eps_hat_lower=eps_hat,
        flip_index=flip_index,
        trials=trials,
    )


def channel_from_config(config: dict) -> Channel:
    """Build a channel from a config record (used by the CLI).

    Expected keys: ``kind`` plus kind-specific parameters:
    ``exact``/``exact_open`` (n), ``laplace`` (n, eps),
    ``randomized_response`` (n, eps), ``constant`` (n, z, alpha_a, alpha_b),
    ``equality`` (n, alpha).
    """
    kind = config.get("kind")
    n = int(config["n"])
    if kind == "exact":
        return exact_ip_channel(n)
    if kind == "exact_open":
        return exact_ip_channel(n, leak_inputs=True)
    if kind == "laplace":
        return laplace_ip_channel(n, float(config["eps"]))
    if kind == "randomized_response":
        return randomized_response_channel(n, float(config["eps"]))
    if kind == "constant":
        source_a = SvSourceSpec(alpha=float(config.get("alpha_a", 1.0)), n=n)
        source_b = SvSourceSpec(alpha=float(config.get("alpha_b", 1.0)), n=n)
        return constant_channel(n, int(config.get("z", 0)), source_a, source_b)
    if kind == "equality":
        return equality_channel(n, float(config["alpha"]))
    raise ValueError(f"unknown channel kind {kind!r}")
