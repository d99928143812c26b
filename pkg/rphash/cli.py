"""
Command-line front end: sweeps, estimator comparisons, convergence tables,
planted-tuple detection and filter survival
"""

import argparse
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import config
from . import asymptotics, experiments, numint
from .errors import RPHashError, UsageError
from .geometry import (
    TupleConfig,
    config_functionals,
    polar_sine,
    reducibility,
    squared_shortest_dual_diagonal,
)
from .hashing import HashFamilyParams, naive_collision_rate
from .report_generator import (
    RunManifest,
    default_output_path,
    sweep_payload,
    to_json,
    write_convergence_csv,
    write_json,
    write_manifest,
    write_sweep_csv,
)

QUIET = False


def status(message: str = ""):
    """Status line on stderr (stdout carries JSON payloads)"""
    if not QUIET:
        print(message, file=sys.stderr)


def print_banner(title: str):
    status("\n" + "=" * 70)
    status(f"  {title}")
    status("=" * 70)
    status()


def print_section(title: str):
    status("\n" + "-" * 70)
    status(title)
    status("-" * 70)


# ---------------------------------------------------------------------------
# Flag parsing helpers
# ---------------------------------------------------------------------------

def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _k_from_upper(n: int) -> int:
    k = int(round((1 + math.sqrt(1 + 8 * n)) / 2))
    if k * (k - 1) // 2 != n:
        raise UsageError(f"--gram needs k(k-1)/2 upper-triangle entries, got {n}")
    return k


def config_from_flags(args) -> TupleConfig:
    """
    Tuple configuration from --gram / --k / --duplicate

    --gram lists the strict upper triangle row-major; without it the tuple
    is orthonormal of size --k.
    """
    gram = getattr(args, "gram", None)
    k = getattr(args, "k", None)
    if getattr(args, "duplicate", False):
        if k is None:
            raise UsageError("--duplicate needs --k")
        return TupleConfig.duplicate_of(k)
    if gram is None:
        if k is None:
            raise UsageError("give --gram or --k")
        return TupleConfig.from_upper(k, [0.0] * (k * (k - 1) // 2))
    inferred = _k_from_upper(len(gram)) if gram else (k or 1)
    if k is not None and k != inferred:
        raise UsageError(f"--k {k} does not match {len(gram)} --gram entries")
    return TupleConfig.from_upper(inferred, gram)


def _emit_json(payload: Dict, out: Optional[str], manifest: RunManifest) -> Optional[Path]:
    if out is None:
        sys.stdout.write(to_json(payload))
        return None
    path = write_json(payload, out)
    write_manifest(manifest, path)
    status(f"✓ Wrote {path}")
    return path


def _finish(manifest: RunManifest, start: float):
    manifest.wall_clock_seconds = round(time.perf_counter() - start, 3)


def _functionals(cfg: TupleConfig) -> Dict:
    verdict = reducibility(cfg)
    out = {
        "alpha": None,
        "delta": polar_sine(cfg),
        "best_signs": list(verdict.best_signs),
        "dmin_sq": verdict.dmin_sq,
        "reducible": verdict.is_reducible,
    }
    if not cfg.duplicate:
        out["alpha"] = squared_shortest_dual_diagonal(cfg)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_sweep(args) -> int:
    start = time.perf_counter()
    params = HashFamilyParams(d=args.d, a=args.a, b=args.b, seed=args.seed)
    print_banner(f"Collision sweep  sigma={args.sigma}  (a,b)=({args.a},{args.b})  d={args.d}")
    result = experiments.sweep(
        args.sigma, params, args.trials, grid_step=args.grid_step, k=args.k,
        seed=args.seed, workers=args.workers, progress=not QUIET,
    )
    out = Path(args.out) if args.out else default_output_path(f"sweep_sigma{args.sigma}_a{args.a}_b{args.b}", "csv")
    manifest = RunManifest("sweep", vars_of(args), args.seed)
    path = write_sweep_csv(result, out)
    write_json(sweep_payload(result), path.with_suffix(".json"))
    _finish(manifest, start)
    write_manifest(manifest, path)

    print_section("SUMMARY")
    status(f"✓ Cells estimated: {len(result.rows)}")
    if result.skipped:
        status(f"⚠ Cells skipped (not positive semidefinite): {len(result.skipped)}")
    centre = result.centre()
    if centre is not None:
        est = centre.estimate
        excess = experiments.naive_exceedance(est.p_hat, params.h, params.a, args.k)
        status(f"✓ Centre cell p_hat = {est.p_hat:.4f}  [{est.ci_low:.4f}, {est.ci_high:.4f}]"
               f"  ({excess:+.1f}% vs naive)")
    status(f"✓ CSV: {path}")
    status(f"✓ Time: {manifest.elapsed}")
    return config.EXIT_CODES["ok"]


def cmd_estimate(args) -> int:
    start = time.perf_counter()
    cfg = config_from_flags(args)
    params = HashFamilyParams(d=args.d, a=args.a, b=args.b, seed=args.seed)
    print_banner(f"Collision estimate  k={cfg.k}  (a,b)=({args.a},{args.b})  d={args.d}")
    mode = numint.check_numeric_support(cfg.k, args.a, args.b) if args.numeric else None

    print_section("Monte-Carlo")
    mc = experiments.estimate_collision_rate(
        cfg, params, args.trials, seed=args.seed, workers=args.workers, progress=not QUIET
    )
    status(f"✓ p_hat = {mc.p_hat:.5f}  [{mc.ci_low:.5f}, {mc.ci_high:.5f}]")

    payload = {
        "k": cfg.k,
        "a": args.a,
        "b": args.b,
        "d": args.d,
        "gram_upper": cfg.upper(),
        "mc": mc.to_dict(),
        "naive": naive_collision_rate(params.h, args.a, cfg.k),
    }
    payload.update(_functionals(cfg))

    if mode is not None:
        print_section(f"Numerical integration ({mode})")
        spec = numint.QuadratureSpec(tol=args.tol)
        payload["numeric"] = numint.collision_prob_numeric(cfg, params.h, mode, spec, progress=not QUIET)
        payload["numeric_mode"] = mode
        status(f"✓ numeric = {payload['numeric']:.5f}")

    if not cfg.duplicate:
        inputs = asymptotics.AsymptoticInputs.from_config(cfg, args.a, args.b)
        payload["large_b"] = asymptotics.rate_large_b(inputs)
        payload["large_a"] = asymptotics.rate_large_a(inputs)
        if args.asymptotic:
            payload["large_b_power_law"] = asymptotics.rate_large_b_power_law(inputs)
            payload["large_b_truncated"] = asymptotics.rate_large_b_truncated(inputs)
            payload["large_a_truncated"] = asymptotics.rate_large_a_truncated(inputs)
        status(f"✓ large-b = {payload['large_b']:.5f}   large-a = {payload['large_a']:.5f}")

    manifest = RunManifest("estimate", vars_of(args), args.seed)
    _finish(manifest, start)
    _emit_json(payload, args.out, manifest)
    return config.EXIT_CODES["ok"]


def cmd_convergence(args) -> int:
    start = time.perf_counter()
    cfg = config_from_flags(args)
    print_banner(f"Convergence table  regime={args.regime}  k={cfg.k}")
    rows = experiments.convergence_table(
        cfg, args.regime, args.range, args.fixed, args.trials,
        d=args.d, seed=args.seed, workers=args.workers, progress=not QUIET,
    )
    out = Path(args.out) if args.out else default_output_path(f"convergence_{args.regime}", "csv")
    manifest = RunManifest("convergence", vars_of(args), args.seed)
    path = write_convergence_csv(rows, out, args.d, cfg.k, args.seed)
    _finish(manifest, start)
    write_manifest(manifest, path)

    print_section("SUMMARY")
    for r in rows:
        status(f"  a={r.a:<4d} b={r.b:<4d} p_mc={r.p_mc:.5f}  p_asym={r.p_asymptotic:.5f}  ratio={r.ratio:.3f}")
    status(f"✓ CSV: {path}")
    return config.EXIT_CODES["ok"]


def cmd_detect(args) -> int:
    start = time.perf_counter()
    cfg = config_from_flags(args)
    params = HashFamilyParams(d=args.d, a=args.a, b=args.b, seed=args.seed)
    print_banner(f"Planted-tuple detection  N={args.db_size}  planted={args.planted}  k={cfg.k}")
    report = experiments.detect_planted(
        args.db_size, args.planted, params, cfg, instances=args.instances,
        seed=args.seed, scan_candidates=args.scan, progress=not QUIET,
    )
    print_section("SUMMARY")
    if report.recall is None:
        status("⚠ Nothing planted; background only")
    else:
        status(f"✓ Recall: {report.recall:.4f}   background: {report.background_rate:.3e}")
        status(f"✓ Paired Wilcoxon p-value: {report.wilcoxon_p:.3g}")
    if args.scan:
        status(f"✓ Candidates checked: {report.candidates_scanned}   reducible: {report.reducible_candidates}")
        if report.sampled_buckets:
            status(f"⚠ Buckets checked by sampling: {report.sampled_buckets}")
    manifest = RunManifest("detect", vars_of(args), args.seed)
    _finish(manifest, start)
    _emit_json(report.to_dict(), args.out, manifest)
    return config.EXIT_CODES["ok"]


def cmd_survival(args) -> int:
    start = time.perf_counter()
    cfg = config_from_flags(args)
    print_banner(f"Filter survival  mode={args.mode}  threshold={args.threshold}  k={cfg.k}")
    est = experiments.survival_rate(
        cfg, args.mode, args.threshold, args.trials, d=args.d,
        seed=args.seed, workers=args.workers, progress=not QUIET,
    )
    closed = None
    if not cfg.duplicate:
        f = config_functionals(cfg)
        if args.mode == "above":
            closed = asymptotics.survival_above(f.alpha, cfg.k, args.threshold)
        else:
            closed = asymptotics.survival_below(f.delta, cfg.k, args.threshold)
    ratio = None
    if closed is not None and 0.0 < est.p_hat < 1.0 and 0.0 < closed < 1.0:
        ratio = experiments.log_ratio(est.p_hat, closed)
    payload = {
        "mode": args.mode,
        "threshold": args.threshold,
        "k": cfg.k,
        "gram_upper": cfg.upper(),
        "mc": est.to_dict(),
        "closed_form": closed,
        "log_ratio": ratio,
    }
    print_section("SUMMARY")
    status(f"✓ MC survival = {est.p_hat:.5g}  [{est.ci_low:.5g}, {est.ci_high:.5g}]")
    if closed is not None:
        status(f"✓ Closed form = {closed:.5g}")
    manifest = RunManifest("survival", vars_of(args), args.seed)
    _finish(manifest, start)
    _emit_json(payload, args.out, manifest)
    return config.EXIT_CODES["ok"]


def vars_of(args) -> Dict:
    """Parsed flags without the dispatch function"""
    return {k: v for k, v in vars(args).items() if k != "func"}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, trials: int = config.DEFAULT_TRIALS):
    p.add_argument("--d", type=positive_int, default=config.DEFAULT_DIMENSION, help="ambient dimension")
    p.add_argument("--trials", type=positive_int, default=trials, help="Monte-Carlo trials")
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED, help="64-bit seed")
    p.add_argument("--workers", type=positive_int, default=None, help="worker threads (never changes results)")
    p.add_argument("--out", type=str, default=None, help="output file")
    p.add_argument("--quiet", action="store_true", help="suppress status output")


def _tuple_flags(p: argparse.ArgumentParser):
    p.add_argument("--gram", type=float, nargs="*", default=None,
                   help="strict upper triangle of the Gram matrix, row-major")
    p.add_argument("--k", type=positive_int, default=None, help="tuple size")
    p.add_argument("--duplicate", action="store_true", help="k copies of one vector")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rphash",
        description="Random projection hash family: collision-rate experiments and estimators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="collision rates over a sigma grid (CSV)")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--a", type=positive_int, default=1)
    p.add_argument("--b", type=positive_int, default=2)
    p.add_argument("--k", type=positive_int, default=3)
    p.add_argument("--grid-step", type=positive_float, default=config.DEFAULT_GRID_STEP)
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("estimate", help="Monte-Carlo, numerical and asymptotic rates (JSON)")
    _tuple_flags(p)
    p.add_argument("--a", type=positive_int, default=1)
    p.add_argument("--b", type=positive_int, default=2)
    p.add_argument("--numeric", action="store_true", help="add the quadrature estimate")
    p.add_argument("--asymptotic", action="store_true", help="add the finite-size asymptotic variants")
    p.add_argument("--tol", type=positive_float, default=config.TOLERANCES["numeric"])
    _common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("convergence", help="Monte-Carlo against the large-a / large-b rates (CSV)")
    _tuple_flags(p)
    p.add_argument("--regime", choices=["large-b", "large-a"], required=True)
    p.add_argument("--range", type=positive_int, nargs="+", required=True,
                   help="values of the varying parameter")
    p.add_argument("--fixed", type=positive_int, default=1, help="a for large-b, b for large-a")
    _common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("detect", help="planted-tuple bucket retrieval (JSON)")
    _tuple_flags(p)
    p.add_argument("--db-size", type=positive_int, default=config.DEFAULT_DB_SIZE)
    p.add_argument("--planted", type=int, default=0)
    p.add_argument("--a", type=positive_int, default=2)
    p.add_argument("--b", type=positive_int, default=1)
    p.add_argument("--instances", type=positive_int, default=config.DEFAULT_INSTANCES)
    p.add_argument("--no-scan", dest="scan", action="store_false",
                   help="skip the reducibility check of co-bucketed subsets")
    _common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("survival", help="filter-predicate survival rates (JSON)")
    _tuple_flags(p)
    p.add_argument("--mode", choices=["above", "below"], required=True)
    p.add_argument("--threshold", type=positive_float, required=True)
    _common(p, trials=10 * config.DEFAULT_TRIALS)
    p.set_defaults(func=cmd_survival)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse flags, run one subcommand and map errors to exit codes"""
    global QUIET
    parser = build_parser()
    args = parser.parse_args(argv)
    QUIET = args.quiet
    if getattr(args, "planted", 0) < 0:
        parser.error("--planted must be non-negative")
    try:
        return args.func(args)
    except RPHashError as e:
        status(f"\n❌ {type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        status("\n\n⚠ Run interrupted by user")
        return 1
