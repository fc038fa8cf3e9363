"""Command-line front end: ``liebn {normalize,verify,sample,bench}``.

Exit codes: 0 success, 1 property failure, 2 configuration error,
3 numerical error. ``LIEBN_THREADS`` caps the number of verification cells
evaluated concurrently.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import batchnorm as bn
from . import gaussian as gs
from . import io as lio
from . import synth, verify
from .errors import (
    BallError,
    ConvergenceError,
    CutLocusError,
    DomainError,
    InvalidInput,
    InvalidMetric,
    LieBNError,
    RetractError,
    UnknownDomain,
    UnsupportedBackend,
)
from .groups import EuclideanGroup, RotationGroup, SpdGroup
from .spd import SpdMetric

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

FAMILIES = ("spd-aim", "spd-lem", "spd-lcm", "so", "euclidean")
ALGOS = ("liebn", "mliebn", "dsmliebn")
NUMERIC_ERRORS = (DomainError, ConvergenceError, CutLocusError, BallError, RetractError, np.linalg.LinAlgError)
CONFIG_ERRORS = (InvalidInput, InvalidMetric, UnsupportedBackend, UnknownDomain)


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    family: list = field(default_factory=lambda: ["spd-lem"])
    dim: list = field(default_factory=lambda: [3])
    theta: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    algo: str = "liebn"
    batch_size: int = None
    steps: int = None
    scale: float = 1.0
    epsilon: float = 1e-5
    momentum: float = 0.1
    K: int = 2
    domains: int = 1
    seed: int = 0
    spread: float = 1.0
    bias: object = "identity"
    suite: str = "all"
    tolerances: dict = field(default_factory=dict)
    samples: str = None
    out: str = None
    format: str = "json"

    def report_dict(self):
        d = asdict(self)
        for k in ("out", "format", "samples", "command"):
            d.pop(k)
        if self.command != "verify":
            d.pop("suite")
            d.pop("tolerances")
        return d


_DEFAULTS = {
    "normalize": {"batch_size": 16, "steps": 10},
    "sample": {"batch_size": 20000, "steps": 1},
    "bench": {"batch_size": 16, "steps": 30},
    "verify": {"dim": [2, 3]},
}


def build_parser():
    p = argparse.ArgumentParser(prog="liebn", description="Lie-group batch normalization toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--family", nargs="+", choices=FAMILIES, help="backend family (several for bench)")
        sp.add_argument("--dim", nargs="+", type=int, help="matrix size or vector length (several for verify/bench)")
        sp.add_argument("--theta", type=float, help="power deformation of SPD metrics")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float)
        sp.add_argument("--algo", choices=ALGOS)
        sp.add_argument("--batch-size", type=int, help="batch size (sample count for 'sample')")
        sp.add_argument("--steps", type=int, help="forward passes (repetitions for 'bench')")
        sp.add_argument("--scale", type=float, help="dispersion scale s")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--momentum", type=float)
        sp.add_argument("--K", type=int, help="momentum warm-up length")
        sp.add_argument("--domains", type=int, help="domains per batch")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--spread", type=float, help="codomain standard deviation of synthetic batches")
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", choices=("json", "csv"))
        sp.add_argument("--config", help="JSON file whose keys override the flags")

    for name, help_ in (
        ("normalize", "run LieBN/MLieBN/DSMLieBN on synthetic batches"),
        ("sample", "draw Riemannian Gaussian samples and check them"),
        ("bench", "time forward passes per (family, dim) cell"),
    ):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        if name == "sample":
            sp.add_argument("--samples", help="also write the samples in matrix text format")
    sp = sub.add_parser("verify", help="run property suites")
    sp.add_argument("suite", nargs="?", default=None, choices=verify.SUITES + ("all",))
    common(sp)
    return p


def resolve_config(args):
    """Merge defaults, flags and the optional JSON config file."""
    values = {"command": args.command}
    values.update(_DEFAULTS.get(args.command, {}))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "command":
            values[f.name] = v
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                extra = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        if not isinstance(extra, dict):
            raise ConfigError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)} - {"command"}
        unknown = set(extra) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        values.update(extra)
    for key in ("family", "dim"):
        if key in values and not isinstance(values[key], list):
            values[key] = [values[key]]
    try:
        cfg = RunConfig(**values)
        validate(cfg)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    return cfg


def validate(cfg):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(all(f in FAMILIES for f in cfg.family), f"family must be among {FAMILIES}")
    need(all(isinstance(d, int) and d >= 1 for d in cfg.dim), "dim must be positive integers")
    need(cfg.algo in ALGOS, f"algo must be one of {ALGOS}")
    need(cfg.format in ("json", "csv"), "format must be json or csv")
    if cfg.command != "bench":
        need(len(cfg.family) == 1, f"'{cfg.command}' takes a single --family")
    if cfg.command not in ("bench", "verify"):
        need(len(cfg.dim) == 1, f"'{cfg.command}' takes a single --dim")
    if cfg.command == "verify":
        cfg.suite = cfg.suite or "all"
        need(cfg.suite in verify.SUITES + ("all",), f"unknown suite {cfg.suite!r}")
        need(min(cfg.dim) >= 2, "verify dims must be >= 2")
        need(isinstance(cfg.tolerances, dict), "tolerances must be an object")
        return
    need(cfg.batch_size is not None and cfg.batch_size >= 1, "batch size must be positive")
    need(cfg.steps is not None and cfg.steps >= 1, "steps must be positive")
    if cfg.command == "bench":
        need(cfg.steps >= 30, "bench needs at least 30 repetitions")
    need(np.isfinite(cfg.scale) and cfg.scale != 0, "scale must be finite and nonzero")
    need(cfg.epsilon > 0, "epsilon must be positive")
    need(0.0 <= cfg.momentum <= 1.0, "momentum must lie in [0, 1]")
    need(cfg.spread > 0, "spread must be positive")
    need(cfg.domains >= 1, "domains must be >= 1")
    if cfg.algo == "dsmliebn":
        need(cfg.batch_size >= cfg.domains, "dsmliebn needs at least one element per domain")
    try:
        bn.gamma_train(cfg.K, 1, 1.0 / cfg.domains)
        for fam in cfg.family:
            for d in cfg.dim:
                make_group(cfg, fam, d)
    except CONFIG_ERRORS as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc


def make_group(cfg, family, dim):
    if family == "euclidean":
        return EuclideanGroup((dim,))
    if family == "so":
        if dim < 2:
            raise InvalidInput("SO(n) needs dim >= 2")
        return RotationGroup(dim)
    return SpdGroup(SpdMetric(family[4:].upper(), dim, cfg.theta, cfg.alpha, cfg.beta))


def make_bias(cfg, group, rng):
    if isinstance(cfg.bias, str):
        if cfg.bias == "identity":
            return group.identity
        if cfg.bias == "random":
            return synth.random_center(group, rng, 0.5)
        raise ConfigError("bias must be 'identity', 'random' or an explicit element")
    B = np.asarray(cfg.bias, dtype=float)
    if B.shape != group.point_shape:
        raise ConfigError(f"bias has shape {B.shape}, expected {group.point_shape}")
    return B


def make_layer(cfg, group, B):
    if cfg.algo == "liebn":
        return bn.LieBatchNorm(group, B, cfg.scale, cfg.epsilon, cfg.momentum)
    if cfg.algo == "mliebn":
        return bn.MomentumLieBatchNorm(group, B, cfg.scale, cfg.epsilon, cfg.momentum, cfg.K, cfg.domains)
    return bn.DomainSpecificLieBatchNorm(
        group, list(range(cfg.domains)), cfg.scale, cfg.epsilon, cfg.momentum, cfg.K, cfg.domains
    )


def _stats(group, X, target):
    """Frechet mean distance to ``target`` and variance; None when undefined."""
    try:
        M = group.frechet_mean(X)
        return group.distance(M, target), group.frechet_variance(X, M)
    except (BallError, CutLocusError, ConvergenceError):
        return None, None


def _running(layer):
    if isinstance(layer, bn.DomainSpecificLieBatchNorm):
        return (
            {str(d): np.asarray(l.running_mean).tolist() for d, l in layer.layers.items()},
            {str(d): l.running_var for d, l in layer.layers.items()},
        )
    return np.asarray(layer.running_mean).tolist(), layer.running_var


def _batch_seed(cfg, step):
    return int(np.random.SeedSequence([cfg.seed, step]).generate_state(1)[0])


def cmd_normalize(cfg):
    group = make_group(cfg, cfg.family[0], cfg.dim[0])
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    B = make_bias(cfg, group, rng)
    layer = make_layer(cfg, group, B)
    center = synth.random_center(group, rng, 0.5)
    records = []
    for step in range(cfg.steps):
        X = synth.synthetic_batch(group, rng, cfg.batch_size, cfg.spread, center, seed=_batch_seed(cfg, step))
        t0 = time.perf_counter()
        if isinstance(layer, bn.DomainSpecificLieBatchNorm):
            out = layer(X, np.arange(len(X)) % cfg.domains)
        else:
            out = layer(X)
        elapsed = time.perf_counter() - t0
        pre_d, pre_v = _stats(group, X, B)
        post_d, post_v = _stats(group, out, B)
        rm, rv = _running(layer)
        rec = {
            "step": step,
            "mode": "train",
            "pre_mean_distance": pre_d,
            "pre_variance": pre_v,
            "post_mean_distance": post_d,
            "post_variance": post_v,
            "running_mean": rm,
            "running_variance": rv,
            "wall_clock_s": elapsed,
        }
        if cfg.algo == "liebn" and pre_v is not None:
            rec["expected_post_variance"] = cfg.scale**2 * pre_v / (pre_v + cfg.epsilon)
        records.append(verify.to_jsonable(rec))
    post = [r["post_mean_distance"] for r in records if r["post_mean_distance"] is not None]
    summary = {
        "steps": len(records),
        "backend": group.describe(),
        "max_post_mean_distance": max(post) if post else None,
    }
    return {"command": "normalize", "records": records, "summary": verify.to_jsonable(summary)}, EXIT_OK


def cmd_verify(cfg):
    threads = _threads()
    doc = verify.run_suite(cfg.suite, cfg.dim, cfg.seed, cfg.tolerances, threads)
    return doc, EXIT_OK if doc["summary"]["passed"] else EXIT_PROPERTY


def cmd_sample(cfg):
    group = make_group(cfg, cfg.family[0], cfg.dim[0])
    if cfg.samples and isinstance(group, EuclideanGroup) and cfg.dim[0] != 1:
        raise ConfigError("--samples needs matrix-valued points (euclidean only with dim 1)")
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    M = make_bias(cfg, group, rng)
    p = gs.GaussianParams(group, M, cfg.spread)
    X = gs.sample(p, cfg.batch_size, cfg.seed)
    rep = gs.summarize(p, X, cfg.seed)
    shift = group.distance(np.array(rep.mean), M)
    rep.checks = {
        "mean_shift": shift,
        "standard_error": float(np.sqrt(rep.variance / cfg.batch_size)),
        "variance_ratio": rep.variance / gs.analytic_variance(p),
        "max_distance": float(np.sqrt(np.max(group.sq_dist(X, M)))),
    }
    if cfg.scale != 1.0:
        centered = gs.GaussianParams(group, group.identity, cfg.spread)
        rep.checks["scaling_law"] = gs.verify_scaling_law(centered, cfg.scale, cfg.batch_size, cfg.seed).checks
    if cfg.samples:
        lio.write_matrices(cfg.samples, X if X.ndim == 3 else X.reshape(-1, 1, 1))
    doc = {
        "command": "sample",
        "records": [],
        "sample": verify.to_jsonable(rep.to_dict()),
        "summary": {"backend": group.describe(), "n_samples": rep.n_samples},
    }
    return doc, EXIT_OK


def cmd_bench(cfg):
    records, timing = [], {}
    for fam in cfg.family:
        for d in cfg.dim:
            group = make_group(cfg, fam, d)
            rng = np.random.Generator(np.random.Philox(cfg.seed))
            layer = make_layer(cfg, group, group.identity)
            X = synth.synthetic_batch(group, rng, cfg.batch_size, cfg.spread, seed=cfg.seed)
            ids = np.arange(len(X)) % cfg.domains
            times = []
            for _ in range(cfg.steps):
                t0 = time.perf_counter()
                layer(X, ids) if cfg.algo == "dsmliebn" else layer(X)
                times.append(time.perf_counter() - t0)
            key = f"{fam}/{d}"
            timing[key] = {"median_s": float(np.median(times)), "p95_s": float(np.percentile(times, 95))}
            records.append({"family": fam, "dim": d, "repetitions": len(times)})
    ranking = {}
    for d in cfg.dim:
        cells = [(timing[f"{f}/{d}"]["median_s"], f) for f in cfg.family]
        ranking[str(d)] = [f for _, f in sorted(cells)]
    timing["ranking_by_median"] = ranking
    doc = {
        "command": "bench",
        "records": records,
        "summary": {"cells": len(records)},
        "timing": timing,
    }
    return doc, EXIT_OK


COMMANDS = {"normalize": cmd_normalize, "verify": cmd_verify, "sample": cmd_sample, "bench": cmd_bench}


def _threads():
    raw = os.environ.get("LIEBN_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"LIEBN_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("LIEBN_THREADS must be >= 1")
    return n


def _emit(doc, cfg):
    doc = {"schema_version": verify.SCHEMA_VERSION, **doc}
    doc.setdefault("config", cfg.report_dict())
    doc["config"] = verify.to_jsonable(doc["config"])
    lio.validate_report(doc)
    if cfg.format == "csv":
        rows = doc["records"] if doc["records"] else [doc.get("sample", doc["summary"])]
        text = lio.records_to_csv(rows)
    else:
        text = lio.dumps_report(doc)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report_failures(doc):
    for rec in doc["records"]:
        if not rec["passed"]:
            tup = json.dumps({"cell": rec["cell"], "failing": rec["failing"]}, sort_keys=True)
            print(f"FAILED {rec['property']}: {tup}", file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        doc, code = COMMANDS[cfg.command](cfg)
        _emit(doc, cfg)
    except ConfigError as exc:
        print(f"liebn: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CONFIG_ERRORS as exc:
        print(f"liebn: config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"liebn: numeric error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LieBNError as exc:
        print(f"liebn: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if code == EXIT_PROPERTY:
        _report_failures(doc)
    return code


if __name__ == "__main__":
    sys.exit(main())
