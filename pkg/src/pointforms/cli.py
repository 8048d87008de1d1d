"""Command-line entry point.

Subcommands: gen, precompute, train, eval, consistency, density-check,
mem. Every command that writes a directory drops a ``config.json`` echo
holding the resolved arguments and a sha256 digest of each input, and no
output embeds timestamps, so a rerun with the same arguments is
byte-identical. Exit codes: 0 success, 1 configuration or usage error,
2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import tasks
from .data import (
    Measure,
    load_dataset,
    measure_weights,
    read_gram_cache,
    save_dataset,
    write_gram_cache,
)
from .errors import (
    CacheFormatError,
    ConfigurationError,
    ConfigurationWarning,
    DegenerateDensityError,
    DimensionEstimateError,
    IngestionError,
    InsufficientPointsError,
    IntegrationBlowupError,
    InvalidDegreeError,
    IsolatedPointError,
    MissingCacheError,
    NumericFailureError,
    OraclePrecisionError,
    UndefinedMetricError,
)
from .gram import compound_gram_field, estimate_gram_memory, format_bytes, gram_field_1
from .laplacian import LaplacianParams, build_laplacian
from .network import (
    CloudSample,
    TrainConfig,
    auroc,
    evaluate,
    load_checkpoint,
    predict_logits,
    save_checkpoint,
    train,
)
from .oracle import MANIFOLDS, aggregate_metric, convergence_study, density_check

_CONFIG_ERRORS = (ConfigurationError, InvalidDegreeError)
_DATA_ERRORS = (
    IngestionError,
    CacheFormatError,
    MissingCacheError,
    InsufficientPointsError,
    UndefinedMetricError,
)
_NUMERIC_ERRORS = (
    DegenerateDensityError,
    DimensionEstimateError,
    IsolatedPointError,
    NumericFailureError,
    OraclePrecisionError,
    IntegrationBlowupError,
)

FEATURES_MANIFEST = "features.json"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_input(path: str | Path) -> str:
    """Content digest of a file, or of a directory's files by relative name."""
    p = Path(path)
    if p.is_file():
        return _sha256_file(p)
    if p.is_dir():
        h = hashlib.sha256()
        for f in sorted(q for q in p.rglob("*") if q.is_file()):
            h.update(f.relative_to(p).as_posix().encode())
            h.update(b"\0")
            h.update(_sha256_file(f).encode())
            h.update(b"\n")
        return h.hexdigest()
    raise IngestionError(f"input path does not exist: {p}")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_config_echo(out_dir: Path, command: str, args_dict: dict, inputs: dict[str, str]) -> None:
    _write_json(out_dir / "config.json", {"command": command, "args": args_dict, "inputs": inputs})


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"expected a comma-separated number list, got {text!r}") from exc


def _laplacian_params(args) -> LaplacianParams:
    knn: int | str = args.knn
    if knn not in ("default", "full"):
        try:
            knn = int(knn)
        except ValueError as exc:
            raise ConfigurationError(f"--knn must be an integer, 'default', or 'full'; got {knn!r}") from exc
    d: int | str = args.d
    if d != "estimate":
        try:
            d = int(d)
        except ValueError as exc:
            raise ConfigurationError(f"--d must be an integer or 'estimate'; got {d!r}") from exc
    return LaplacianParams(
        epsilon=args.epsilon,
        alpha=args.alpha,
        beta=args.beta,
        k0=args.k0,
        knn=knn,
        d=d,
        bandwidth_scale=args.bandwidth_scale,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    out = Path(args.out)
    if args.task == "circles-lines":
        cfg = tasks.CirclesLinesConfig(seed=args.seed)
        clouds, meta = tasks.gen_circles_lines(cfg)
        extras = None
    elif args.task == "rna-kinetics":
        cfg = tasks.RnaKineticsConfig(seed=args.seed, control=args.control)
        clouds, meta = tasks.gen_rna_kinetics(cfg)
        extras = None
    elif args.task == "density-shift":
        cfg = tasks.DensityShiftConfig(seed=args.seed)
        clouds, meta, extras = tasks.gen_density_shift(cfg)
    else:
        raise ConfigurationError(f"unknown task {args.task!r}")
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(out, args.task, clouds, meta, extras)
    _write_config_echo(out, "gen", {"task": args.task, "seed": args.seed, "control": args.control}, {})
    print(f"wrote {len(clouds)} clouds to {out}")
    return 0


def cmd_precompute(args) -> int:
    dataset_dir = Path(args.dataset)
    out = Path(args.out)
    clouds, _ = load_dataset(dataset_dir)
    params = _laplacian_params(args)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    total_bytes = 0
    total_points = 0
    dim = clouds[0].dim
    header_bytes = 0
    failures = []
    for cloud in clouds:
        try:
            op = build_laplacian(cloud.points, params)
            g1 = gram_field_1(op, cloud.points)
            gram = g1 if args.k == 1 else compound_gram_field(g1, args.k)
            cache_rel = f"{cloud.id}.gram.bin"
            write_gram_cache(out / cache_rel, gram, precision=args.precision)
            density = op.density.q0 if args.measure == "density_corrected" else None
            mu = measure_weights(cloud, args.measure, density=density)
            mu_rel = f"{cloud.id}.mu.csv"
            np.savetxt(out / mu_rel, mu.weights, fmt="%.17g", delimiter=",")
        except (_CONFIG_ERRORS + _DATA_ERRORS + _NUMERIC_ERRORS) as exc:
            print(f"cloud {cloud.id}: {exc}", file=sys.stderr)
            failures.append(exc)
            continue
        records.append({"id": cloud.id, "label": cloud.label, "cache": cache_rel, "mu": mu_rel, "m": cloud.m})
        size = (out / cache_rel).stat().st_size
        total_bytes += size
        header_bytes += size - estimate_gram_memory(cloud.m, dim, args.k, precision=args.precision)
        total_points += cloud.m
    manifest = {
        "format": "pointforms-features",
        "version": 1,
        "dataset": str(dataset_dir),
        "degree": args.k,
        "precision": args.precision,
        "measure": args.measure,
        "params": asdict(params),
        "clouds": records,
    }
    _write_json(out / FEATURES_MANIFEST, manifest)
    _write_config_echo(
        out,
        "precompute",
        {
            "dataset": str(dataset_dir),
            "k": args.k,
            "precision": args.precision,
            "measure": args.measure,
            "params": asdict(params),
        },
        {str(dataset_dir): hash_input(dataset_dir)},
    )
    estimate = estimate_gram_memory(total_points, dim, args.k, precision=args.precision)
    print(
        f"cached {len(records)} gram fields (degree {args.k}, {args.precision}): "
        f"payload {format_bytes(total_bytes - header_bytes)}, estimate {format_bytes(estimate)}, "
        f"{total_bytes} B on disk with headers"
    )
    if failures:
        print(f"{len(failures)} cloud(s) failed; caches for the rest were kept", file=sys.stderr)
        raise failures[0]
    return 0


def _load_features(features_dir: Path) -> tuple[list[CloudSample], dict]:
    manifest_path = features_dir / FEATURES_MANIFEST
    if not manifest_path.is_file():
        raise MissingCacheError(
            f"no feature manifest at {manifest_path}; run 'pointforms precompute' first"
        )
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "pointforms-features":
        raise CacheFormatError(f"{manifest_path}: not a feature manifest")
    clouds, _ = load_dataset(manifest["dataset"])
    by_id = {c.id: c for c in clouds}
    samples = []
    for rec in manifest["clouds"]:
        cloud = by_id.get(rec["id"])
        if cloud is None:
            raise MissingCacheError(f"cloud {rec['id']} missing from dataset {manifest['dataset']}")
        cache_path = features_dir / rec["cache"]
        if not cache_path.is_file():
            raise MissingCacheError(f"missing gram cache {cache_path}; rerun 'pointforms precompute'")
        gram = read_gram_cache(cache_path)
        weights = np.loadtxt(features_dir / rec["mu"], delimiter=",", ndmin=1)
        samples.append(
            CloudSample(
                cloud_id=rec["id"],
                points=cloud.points,
                gram=gram,
                mu=Measure(weights=weights, mode=manifest["measure"]),
                label=rec["label"],
            )
        )
    return samples, manifest


def cmd_train(args) -> int:
    features_dir = Path(args.features)
    out = Path(args.out)
    samples, feat_manifest = _load_features(features_dir)
    if any(s.label is None for s in samples):
        raise ConfigurationError("training requires labeled clouds")
    config = TrainConfig(
        n_forms=args.n_forms,
        hidden=tuple(_parse_int_list(args.hidden)),
        readout=args.readout,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        split_seed=args.split_seed,
    )
    result = train(samples, config)
    out.mkdir(parents=True, exist_ok=True)
    feat_hash = hash_input(features_dir)
    meta = {
        "train_config": {**asdict(config), "hidden": list(config.hidden)},
        "test_auroc": result.test_auroc,
        "splits": result.splits,
        "features": str(features_dir),
        "features_sha256": feat_hash,
        "degree": feat_manifest["degree"],
    }
    save_checkpoint(out / "model.ckpt", result.model, meta)
    with open(out / "history.csv", "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for row in result.history:
            fh.write(f"{row['epoch']},{row['train_loss']!r},{row.get('val_loss', float('nan'))!r}\n")
    _write_json(
        out / "result.json",
        {
            "test_auroc": result.test_auroc,
            "param_count": result.model.param_count,
            "split_sizes": {k: len(v) for k, v in result.splits.items()},
        },
    )
    _write_config_echo(
        out,
        "train",
        {**asdict(config), "hidden": list(config.hidden), "features": str(features_dir)},
        {str(features_dir): feat_hash},
    )
    print(
        f"trained {result.model.param_count} parameters for {config.epochs} epochs: "
        f"test AUROC {result.test_auroc:.6f}"
    )
    return 0


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.model)
    samples, _ = _load_features(Path(args.features))
    if args.split == "test":
        keep = set(meta.get("splits", {}).get("test", []))
        if keep:
            samples = [s for s in samples if s.cloud_id in keep]
    if any(s.label is None for s in samples):
        raise UndefinedMetricError("evaluation requires labeled clouds")
    score = evaluate(model, samples)
    print(f"AUROC {score:.6f} over {len(samples)} clouds ({args.split} split)")
    recorded = meta.get("test_auroc")
    if args.split == "test" and recorded is not None:
        print(f"recorded test AUROC {recorded:.6f}; match: {np.isclose(score, recorded, atol=0.0)}")
    return 0


def cmd_consistency(args) -> int:
    if args.manifold not in MANIFOLDS:
        raise ConfigurationError(f"unknown manifold {args.manifold!r}; expected one of {sorted(MANIFOLDS)}")
    manifold = MANIFOLDS[args.manifold]()
    sizes = _parse_int_list(args.sizes)
    params = _laplacian_params(args)
    rows = convergence_study(
        manifold,
        sizes,
        params=params,
        n_seeds=args.seeds,
        k=args.k,
        theta=args.theta,
        base_seed=args.base_seed,
    )
    med = aggregate_metric(rows, f"g{args.k}_err_median")
    ordered = [med[n] for n in sorted(med)]
    print(f"{args.manifold}: median gram error by size (degree {args.k})")
    for n in sorted(med):
        print(f"  n={n:>6d}  err={med[n]:.6f}")
    decreasing = all(b < a for a, b in zip(ordered, ordered[1:]))
    ratio = ordered[-1] / ordered[0] if ordered[0] > 0 else float("inf")
    print(f"monotone decrease: {'PASS' if decreasing else 'FAIL'}")
    print(f"final/initial ratio {ratio:.4f} <= 0.5: {'PASS' if ratio <= 0.5 else 'FAIL'}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        keys = ["manifold", "n", "epsilon", "alpha", "beta", "seed", "metric", "value"]
        with open(out / "consistency.csv", "w") as fh:
            fh.write(",".join(keys) + "\n")
            for row in rows:
                fh.write(",".join(str(row[k]) for k in keys) + "\n")
        _write_config_echo(
            out,
            "consistency",
            {
                "manifold": args.manifold,
                "sizes": sizes,
                "seeds": args.seeds,
                "degree": args.k,
                "theta": args.theta,
                "base_seed": args.base_seed,
                "params": asdict(params),
            },
            {},
        )
    return 0


def cmd_density_check(args) -> int:
    if args.seeds < 2:
        warnings.warn(
            "density-check with a single seed cannot separate bias from sampling noise",
            ConfigurationWarning,
            stacklevel=1,
        )
    kappas = _parse_float_list(args.kappas)
    rows, summaries = density_check(kappas, n=args.n, n_seeds=args.seeds, base_seed=args.base_seed)
    print("kappa    uncorrected    corrected    verdict")
    for s in summaries:
        if s["kappa"] == 0.0:
            # Uniform density: both weightings coincide, so expect agreement.
            ok = np.isclose(s["mae_corrected"], s["mae_uncorrected"], rtol=0.05)
        else:
            ok = s["mae_corrected"] < s["mae_uncorrected"]
        verdict = "PASS" if ok else "FAIL"
        print(f"{s['kappa']:<8g} {s['mae_uncorrected']:<14.6f} {s['mae_corrected']:<12.6f} {verdict}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        keys = sorted(rows[0]) if rows else []
        with open(out / "density_check.csv", "w") as fh:
            fh.write(",".join(keys) + "\n")
            for row in rows:
                fh.write(",".join(str(row[k]) for k in keys) + "\n")
        _write_config_echo(
            out,
            "density-check",
            {"kappas": kappas, "n": args.n, "seeds": args.seeds, "base_seed": args.base_seed},
            {},
        )
    return 0


def cmd_mem(args) -> int:
    n_bytes = estimate_gram_memory(args.points, args.ambient_dim, args.k, precision=args.precision)
    print(
        f"degree-{args.k} gram field for {args.points} points in R^{args.ambient_dim} "
        f"({args.precision}): {format_bytes(n_bytes)}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_laplacian_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=1.0, help="kernel time scale")
    p.add_argument("--alpha", type=float, default=0.0, help="density normalization exponent")
    p.add_argument("--beta", type=float, default=-0.5, help="bandwidth density exponent")
    p.add_argument("--k0", type=int, default=8, help="neighbor count for the pilot density")
    p.add_argument("--knn", default="default", help="kernel truncation: int, 'default', or 'full'")
    p.add_argument("--d", default="estimate", help="intrinsic dimension: int or 'estimate'")
    p.add_argument(
        "--bandwidth-scale",
        choices=("auto", "raw"),
        default="auto",
        help="auto-calibrated bandwidth prefactor or the raw density power",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pointforms", description="Diffusion-geometry form features for point clouds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("task", choices=("circles-lines", "rna-kinetics", "density-shift"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--control", action="store_true", help="rna-kinetics: identical classes for a null check")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("precompute", help="build and cache gram fields for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=1, help="form degree")
    p.add_argument("--precision", choices=("fp32", "fp64"), default="fp32")
    p.add_argument("--measure", choices=("uniform", "density_corrected"), default="uniform")
    _add_laplacian_args(p)
    p.set_defaults(func=cmd_precompute)

    p = sub.add_parser("train", help="train the form classifier on cached features")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-forms", type=int, default=8)
    p.add_argument("--hidden", default="32,32")
    p.add_argument("--readout", default="tri", choices=("tri", "flat", "diag", "pool"))
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on cached features")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--split", choices=("test", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("consistency", help="estimator error versus sample size on analytic manifolds")
    p.add_argument("--manifold", required=True)
    p.add_argument("--sizes", default="250,500,1000,2000")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--k", type=int, default=1, help="form degree")
    p.add_argument("--theta", type=float, default=None, help="bandwidth decay exponent override")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _add_laplacian_args(p)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("density-check", help="density-corrected versus uniform inner products")
    p.add_argument("--kappas", default="2,4,8")
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_density_check)

    p = sub.add_parser("mem", help="estimate gram cache size")
    p.add_argument("points", type=int, help="points per cloud (m)")
    p.add_argument("ambient_dim", type=int, help="ambient dimension (D)")
    p.add_argument("k", type=int, help="form degree")
    p.add_argument("--precision", choices=("fp32", "fp64"), default="fp32")
    p.set_defaults(func=cmd_mem)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
