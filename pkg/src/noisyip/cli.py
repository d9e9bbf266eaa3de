"""Batch experiment driver.

Subcommands: recon | ka | condense | amplify | audit | gl.  Every run is
fully determined by (config, seed): trials are partitioned into fixed-size
chunks, each chunk draws from its own spawned generator stream, and chunk
results merge in index order, so neither --threads nor interruptions change
the output bytes.  Long trial loops checkpoint their per-chunk aggregates
so interrupted runs resume.

Exit codes: 0 ok, 2 invalid configuration, 3 precondition violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import amplify, channels, condense, keyagreement, reconstruct
from .errors import PreconditionViolation
from .reporting import ExperimentReport
from .rng import rng_from_seed, spawn_rngs
from .signvectors import random_signs
from .sources import SvSourceSpec

CHECKPOINT_EVERY = 10_000


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Chunked, resumable, thread-parallel trial loops
# ---------------------------------------------------------------------------


def _config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()
    ).hexdigest()


def run_chunked(
    config: dict,
    seed: int,
    trials: int,
    chunk_fn,
    reduce_fn,
    init,
    threads: int = 1,
    out_path: str | None = None,
    chunk_size: int = CHECKPOINT_EVERY,
):
    """Deterministic chunked map-reduce over trials.

    ``chunk_fn(rng, size) -> aggregate`` runs one chunk; aggregates merge in
    chunk order with ``reduce_fn``.  When ``out_path`` is given, a sidecar
    checkpoint stores completed chunk aggregates keyed by a hash of
    (config, seed) and is removed on completion.
    """
    num_chunks = (trials + chunk_size - 1) // chunk_size
    sizes = [
        min(chunk_size, trials - i * chunk_size) for i in range(num_chunks)
    ]
    rngs = spawn_rngs(rng_from_seed(seed), num_chunks)
    key = _config_hash({"config": config, "seed": seed, "trials": trials})
    ckpt_path = f"{out_path}.ckpt" if out_path else None

    done: dict[int, object] = {}
    if ckpt_path and os.path.exists(ckpt_path):
        with open(ckpt_path) as fh:
            saved = json.load(fh)
        if saved.get("key") == key:
            done = {int(k): v for k, v in saved["chunks"].items()}

    pending = [i for i in range(num_chunks) if i not in done]

    def run_one(i):
        return i, chunk_fn(rngs[i], sizes[i])

    if threads > 1 and pending:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, agg in pool.map(run_one, pending):
                done[i] = agg
                # checkpoint after every completed chunk (chunk_size trials)
                if ckpt_path and len(done) < num_chunks:
                    _save_ckpt(ckpt_path, key, done)
    else:
        for i in pending:
            _, agg = run_one(i)
            done[i] = agg
            if ckpt_path and len(done) < num_chunks:
                _save_ckpt(ckpt_path, key, done)

    result = init
    for i in range(num_chunks):
        result = reduce_fn(result, done[i])
    if ckpt_path and os.path.exists(ckpt_path):
        os.remove(ckpt_path)
    return result


def _save_ckpt(path, key, done):
    with open(path, "w") as fh:
        json.dump({"key": key, "chunks": {str(k): v for k, v in done.items()}}, fh)


def _rate_metric(report, name, hits, trials):
    rate = hits / trials
    half = 1.96 * math.sqrt(rate * (1 - rate) / trials)
    report.add_metric(name, rate, trials, half)
    return rate


# ---------------------------------------------------------------------------
# Channel / estimator construction from flags
# ---------------------------------------------------------------------------


def _channel_config(args) -> dict:
    cfg = {"kind": args.channel, "n": args.n}
    if args.channel in ("laplace", "randomized_response"):
        if args.eps is None:
            raise ConfigError(f"--eps is required for channel {args.channel}")
        cfg["eps"] = args.eps
    if args.channel == "constant":
        cfg["z"] = args.z
        cfg["alpha_a"] = args.alpha if args.alpha is not None else 1.0
        cfg["alpha_b"] = args.alpha if args.alpha is not None else 1.0
    if args.channel == "equality":
        if args.alpha is None:
            raise ConfigError("--alpha is required for the equality channel")
        cfg["alpha"] = args.alpha
    return cfg


def _build_estimator(spec: str, z, eps, rng):
    n = len(z)
    if spec == "exact":
        return reconstruct.exact_estimator(z)
    if spec == "zero":
        return reconstruct.zero_estimator(n)
    if spec == "laplace":
        if eps is None:
            raise ConfigError("--eps is required for the laplace estimator")
        return reconstruct.laplace_estimator(z, 2.0 / eps, rng)
    if spec.startswith("replay:"):
        return _replay_estimator(spec.split(":", 1)[1], n)
    raise ConfigError(f"unknown estimator {spec!r}")


def _replay_estimator(path: str, n: int):
    with open(path) as fh:
        data = json.load(fh)
    if int(data.get("n", -1)) != n:
        raise ConfigError(f"replay file is for n={data.get('n')}, expected {n}")
    table = data["answers"]
    default = int(data.get("default", 0))

    def batch(R):
        out = np.empty(R.shape[0], dtype=np.int64)
        for idx in range(R.shape[0]):
            key = "".join("+" if v == 1 else "-" for v in R[idx])
            out[idx] = int(table.get(key, default))
        return out

    return reconstruct.EstimatorHandle(batch, n=n, label=f"replay:{path}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_recon(args) -> ExperimentReport:
    rng = rng_from_seed(args.seed)
    scale = None if args.eps is None else 2.0 / args.eps
    ell = args.ell
    if ell is None:
        ell = (
            reconstruct.best_laplace_ell(args.n, scale)
            if args.estimator == "laplace"
            else 1
        )
    z = random_signs(args.n, rng)
    est = _build_estimator(args.estimator, z, args.eps, rng)
    certify_trials = args.trials if args.trials is not None else 20_000
    profile = reconstruct.certify_estimator(est, z, ell, certify_trials, rng)
    samples = args.samples
    if samples is None:
        samples = reconstruct.default_num_samples(args.n)
    result = reconstruct.reconstruct_all(
        z, est, ell, samples, rng, threads=args.threads
    )
    config = {
        "n": args.n,
        "ell": ell,
        "estimator": args.estimator,
        "eps": args.eps,
        "certify_trials": certify_trials,
        "samples_per_bit": samples,
    }
    report = ExperimentReport("recon", args.seed, config)
    report.add_metric("lambda_hat", profile.lambda_hat, profile.trials)
    report.add_metric("frac_correct", result.frac_correct, args.n)
    report.query_counts = {"estimator": int(est.query_count)}
    report.record = {
        "n": args.n,
        "ell": ell,
        "lambda_hat": profile.lambda_hat,
        "frac_correct": result.frac_correct,
        "queries": int(result.queries),
        "seed": args.seed,
    }
    return report


def cmd_ka(args) -> ExperimentReport:
    cfg = _channel_config(args)
    ell = args.ell if args.ell is not None else max(2, math.isqrt(args.n))
    trials = args.trials if args.trials is not None else 10_000
    config = {"channel": cfg, "ell": ell, "adversary": args.adversary}

    if args.adversary == "openbook" and cfg["kind"] != "exact_open":
        raise ConfigError(
            "the openbook adversary reads leaked inputs and requires "
            "--channel exact_open"
        )

    def chunk(rng, size):
        channel = channels.channel_from_config(cfg)
        batch = keyagreement.run_ka_rounds(channel, ell, size, rng)
        agree_idx = np.flatnonzero(batch.o_a == batch.o_b)
        leak_hits = 0
        if args.adversary != "none":
            adv = _build_adversary(args.adversary, ell)
            for i in agree_idx:
                guess = int(adv(batch.ka_transcript(int(i))))
                leak_hits += int(guess == int(batch.o_a[i]))
        return [len(agree_idx), leak_hits, size]

    agg = run_chunked(
        config,
        args.seed,
        trials,
        chunk,
        lambda a, b: [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
        [0, 0, 0],
        threads=args.threads,
        out_path=args.out,
    )
    agree, leak_hits, total = agg
    report = ExperimentReport("ka", args.seed, config)
    agreement = _rate_metric(report, "agreement", agree, total)
    leakage = None
    if args.adversary != "none" and agree > 0:
        leakage = _rate_metric(report, "equality_leakage", leak_hits, agree)
    report.record = {
        "protocol": "ka_round",
        "n": args.n,
        "ell": ell,
        "agreement": agreement,
        "leakage": leakage,
        "abort_rate": None,
        "seed": args.seed,
        "trials": total,
    }
    return report


def _build_adversary(spec: str, ell: int):
    if spec == "blind":
        return keyagreement.blind_adversary(ell)
    if spec == "readout":
        return keyagreement.readout_adversary(ell)
    if spec == "openbook":
        return keyagreement.openbook_adversary(ell)
    raise ConfigError(f"unknown adversary {spec!r}")


def cmd_condense(args) -> ExperimentReport:
    alphas = [float(a) for a in str(args.alpha or "1.0").split(",")]
    if args.mode == "mod":
        trials = args.trials if args.trials is not None else 100_000
        modulus = args.modulus or max(2, math.isqrt(args.n))
    else:
        trials = args.trials if args.trials is not None else 64  # outer loop
        modulus = None
    config = {
        "mode": args.mode,
        "n": args.n,
        "alphas": alphas,
        "modulus": modulus,
        "trials": trials,
        "inner": args.inner,
    }
    report = ExperimentReport("condense", args.seed, config)
    rng = rng_from_seed(args.seed)
    child = spawn_rngs(rng, len(alphas))
    record_estimates = {}
    for alpha, crng in zip(alphas, child):
        spec = SvSourceSpec(alpha=alpha, n=args.n)
        if args.mode == "mod":
            rep = condense.condense_mod_experiment(
                spec, spec, modulus, trials, crng
            )
            report.add_metric(f"min_entropy_bits[alpha={alpha:g}]",
                              rep.min_entropy_bits, trials)
            record_estimates[f"{alpha:g}"] = rep.min_entropy_bits
        else:
            rep = condense.seeded_condense_experiment(
                spec, spec, trials, args.inner, crng
            )
            report.add_metric(
                f"quantile_bits[alpha={alpha:g}]", rep.quantile_bits,
                rep.trials_outer,
            )
            record_estimates[f"{alpha:g}"] = rep.quantile_bits
    report.record = {
        "experiment": args.mode,
        "n": args.n,
        "alpha": alphas[0] if len(alphas) == 1 else None,
        "params": {"modulus": modulus, "inner": args.inner},
        "estimate": record_estimates,
        "ci": None,
        "seed": args.seed,
        "trials": trials,
    }
    return report


def cmd_amplify(args) -> ExperimentReport:
    alpha = args.alpha if args.alpha is not None else 0.25
    m = args.m if args.m is not None else amplify.default_hash_width(alpha)
    trials = args.trials if args.trials is not None else 100_000
    cfg = {"kind": "equality", "n": args.n, "alpha": alpha}
    config = {"channel": cfg, "m": m, "trials": trials,
              "wrapper_runs": args.wrapper_runs, "gl_runs": args.gl_runs}

    def chunk(rng, size):
        channel = channels.channel_from_config(cfg)
        aborted, bit_a, bit_b = amplify.hashed_parity_trials(
            channel, m, size, rng
        )
        ok = ~aborted
        return [int(ok.sum()), int((bit_a[ok] == bit_b[ok]).sum()), size]

    agg = run_chunked(
        config, args.seed, trials, chunk,
        lambda a, b: [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
        [0, 0, 0], threads=args.threads, out_path=args.out,
    )
    ok_count, match, total = agg
    report = ExperimentReport("amplify", args.seed, config)
    abort_rate = _rate_metric(report, "abort_rate", total - ok_count, total)
    agreement = None
    if ok_count:
        agreement = _rate_metric(
            report, "conditional_agreement", match, ok_count
        )

    rng = rng_from_seed(args.seed + 1)
    channel = channels.channel_from_config(cfg)
    all_failed = 0
    for _ in range(args.wrapper_runs):
        result = amplify.repeat_until_success(channel, alpha, rng, m=m)
        all_failed += int(result.all_failed)
    _rate_metric(report, "all_fail_rate", all_failed, args.wrapper_runs)

    gl_hits = 0
    grng = rng_from_seed(args.seed + 2)
    for run in range(args.gl_runs):
        gl_hits += int(_gl_run(args.n, args.noise, grng))
    _rate_metric(report, "gl_recovery_rate", gl_hits, args.gl_runs)
    report.record = {
        "protocol": "hashed_parity",
        "n": args.n,
        "m": m,
        "agreement": agreement,
        "leakage": None,
        "abort_rate": abort_rate,
        "seed": args.seed,
        "trials": total,
    }
    return report


def _gl_run(n: int, noise: float, rng) -> bool:
    x = rng.integers(0, 2, size=n, dtype=np.uint8)
    seed = int(rng.integers(0, 2**62))

    def oracle(R):
        par = R.astype(np.int64) @ x.astype(np.int64) % 2
        if noise > 0:
            from .rng import hash_uniform01

            flips = hash_uniform01(R, seed) < noise
            par = par ^ flips
        return par.astype(np.uint8)

    return bool(np.array_equal(amplify.gl_decode(oracle, n, rng), x))


def cmd_audit(args) -> ExperimentReport:
    cfg = _channel_config(args)
    channel = channels.channel_from_config(cfg)
    trials = args.trials if args.trials is not None else 2_000
    config = {"channel": cfg, "trials": trials, "flip_index": args.flip_index,
              "distinguisher": args.distinguisher, "search": args.search}
    rng = rng_from_seed(args.seed)
    dist = _build_distinguisher(args.distinguisher)
    audit = channels.dp_audit(channel, dist, args.flip_index, trials, rng)
    report = ExperimentReport("audit", args.seed, config)
    report.add_metric("p_real", audit.p_real, trials)
    report.add_metric("p_flipped", audit.p_flipped, trials)
    report.add_metric("eps_hat_lower", audit.eps_hat_lower, trials)
    record = {
        "channel": cfg,
        "eps_hat_lower": audit.eps_hat_lower,
        "seed": args.seed,
        "trials": trials,
    }
    if args.search:
        if cfg["kind"] != "exact_open":
            raise ConfigError(
                "--search reads inputs from the transcript and requires "
                "--channel exact_open"
            )
        source = condense.TripletSource.from_channel(channel)
        est = condense.open_transcript_estimator(channel.n)
        ell = args.ell if args.ell is not None else 1
        search = condense.search_eve_params(
            source, est, ell, args.eps or 0.0, args.budget, rng
        )
        report.add_metric("eve_gap", search.gap, search.num_triplets)
        record["eve_params"] = {
            "ell_hat": search.params.ell_hat,
            "v_hat": search.params.v_hat,
            "d": search.params.d,
        }
    report.record = record
    return report


def _build_distinguisher(spec: str):
    if spec.startswith("near:"):
        width = int(spec.split(":", 1)[1])

        def dist(i, x, y, t):
            ip = int(np.dot(x.astype(np.int64), y.astype(np.int64)))
            return int(abs(t.out - ip) <= width)

        return dist
    raise ConfigError(f"unknown distinguisher {spec!r}")


def cmd_gl(args) -> ExperimentReport:
    config = {"n": args.n, "noise": args.noise, "runs": args.runs}
    rng = rng_from_seed(args.seed)
    hits = sum(int(_gl_run(args.n, args.noise, rng)) for _ in range(args.runs))
    report = ExperimentReport("gl", args.seed, config)
    _rate_metric(report, "recovery_rate", hits, args.runs)
    report.record = {"n": args.n, "noise": args.noise, "seed": args.seed,
                     "trials": args.runs}
    return report


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--alpha", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument(
        "--samples", type=int, default=None,
        help="per-bit sample count for recon (default 64*n^3, the analysis-scale budget; far smaller values suffice in practice)",
    )
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--threads", type=int, default=None)


_CHANNEL_CHOICES = (
    "exact",
    "exact_open",
    "laplace",
    "randomized_response",
    "constant",
    "equality",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisyip", description="noisy inner-product experiment driver"
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("recon", help="estimator certification + bit reconstruction")
    _add_common(p)
    p.add_argument("--estimator", default="laplace",
                   help="exact | zero | laplace | replay:<path>")

    p = sub.add_parser("ka", help="key-agreement round statistics")
    _add_common(p)
    p.add_argument("--channel", choices=_CHANNEL_CHOICES, default="exact")
    p.add_argument("--z", type=int, default=0)
    p.add_argument("--adversary", default="none",
                   help="none | blind | readout | openbook")

    p = sub.add_parser("condense", help="min-entropy experiments")
    _add_common(p)
    p.add_argument("--mode", choices=("mod", "seeded"), default="mod")
    p.add_argument("--modulus", type=int, default=None)
    p.add_argument("--inner", type=int, default=4096)

    p = sub.add_parser("amplify", help="hash-and-parity amplification statistics")
    _add_common(p)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--wrapper-runs", type=int, default=2000)
    p.add_argument("--gl-runs", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.2)

    p = sub.add_parser("audit", help="privacy lower-bound audit")
    _add_common(p)
    p.add_argument("--channel", choices=_CHANNEL_CHOICES, default="laplace")
    p.add_argument("--z", type=int, default=0)
    p.add_argument("--flip-index", type=int, default=0)
    p.add_argument("--distinguisher", default="near:0")
    p.add_argument("--search", action="store_true")
    p.add_argument("--budget", type=int, default=2_000_000)

    p = sub.add_parser("gl", help="parity decoder benchmark")
    _add_common(p)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--runs", type=int, default=100)

    return parser


_DEFAULTS = {"n": 64, "seed": 1, "threads": 1, "format": "json"}

_VALIDATORS = {
    "n": lambda v: v >= 1,
    "trials": lambda v: v is None or v >= 1,
    "samples": lambda v: v is None or v >= 1,
    "threads": lambda v: v >= 1,
    "ell": lambda v: v is None or v >= 1,
}


def _merge_config(args) -> None:
    file_cfg = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, value in file_cfg.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)
    for key, value in _DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if getattr(args, "alpha", None) is not None and args.subcommand != "condense":
        args.alpha = float(args.alpha)
    for key, check in _VALIDATORS.items():
        if hasattr(args, key) and not check(getattr(args, key)):
            raise ConfigError(f"invalid value for --{key}: {getattr(args, key)}")


_COMMANDS = {
    "recon": cmd_recon,
    "ka": cmd_ka,
    "condense": cmd_condense,
    "amplify": cmd_amplify,
    "audit": cmd_audit,
    "gl": cmd_gl,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args)
        start = time.monotonic()
        report = _COMMANDS[args.subcommand](args)
        wall = time.monotonic() - start
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PreconditionViolation as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    payload = (
        report.to_json_bytes() if args.format == "json" else report.to_csv_bytes()
    )
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.buffer.write(payload)
    print(f"[noisyip] {args.subcommand} done in {wall:.2f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
