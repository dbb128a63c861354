"""Command-line interface.

Subcommands: fit, sample, error, mlmc, bench, reproduce.  Exit codes are
a stable contract: 0 success, 2 usage or configuration error, 3
numerical failure, 4 I/O or table-file failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, exact_dist, fit, metrics, mlmc
from . import bench as bench_mod
from . import reproduce as reproduce_mod
from ._threads import set_max_workers
from .errors import ConfigError, NumericalError, TableIOError
from .sampler import UniformStream, evaluate, gaussian_exact_batch
from .tableio import export_table, import_table
from .tables import ConstantTable, DyadicPolyTable, NcChi2Table

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="approxrv",
        description="Approximate random variables: fit, sample, measure, and run MLMC.",
    )
    parser.add_argument("--version", action="version", version=f"approxrv {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap worker threads (default: available parallelism; "
                        "env APPROXRV_THREADS overrides the default)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit an approximation table and write it to disk")
    p_fit.add_argument("--dist", choices=("gaussian", "ncchi2"), required=True)
    p_fit.add_argument("--kind", choices=("constant", "dyadic"), default="dyadic",
                       help="table family (gaussian only; ncchi2 is always dyadic pairs)")
    p_fit.add_argument("--q", type=int, default=10, help="interval exponent for constant tables")
    p_fit.add_argument("--construction", default="l1",
                       choices=("l1", "central", "interior", "rademacher"))
    p_fit.add_argument("--degree", type=int, default=1)
    p_fit.add_argument("--intervals", type=int, default=15)
    p_fit.add_argument("--decay", type=float, default=0.5)
    p_fit.add_argument("--knots", type=int, default=16)
    p_fit.add_argument("--nu", type=float, default=1.0)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--format", choices=("binary", "text"), default="binary")

    p_sample = sub.add_parser("sample", help="draw approximate random variables from a table")
    p_sample.add_argument("--table", required=True)
    p_sample.add_argument("--n", type=int, default=10)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--stream-id", type=int, default=0)
    p_sample.add_argument("--lam", type=float, default=None,
                          help="non-centrality (ncchi2 tables only)")
    p_sample.add_argument("--coupled", action="store_true",
                          help="also print the exact sample from the same uniform")
    p_sample.add_argument("--out", default=None, help="write CSV here instead of stdout")

    p_err = sub.add_parser("error", help="measure approximation error of a table file")
    p_err.add_argument("--table", required=True)
    p_err.add_argument("--p", type=float, nargs="+", default=[2.0])
    p_err.add_argument("--method", choices=("auto", "quadrature", "monte_carlo"), default="auto")
    p_err.add_argument("--samples", type=int, default=10**6,
                       help="Monte Carlo sample count / RMSE grid size")
    p_err.add_argument("--lam", type=float, nargs="+", default=[1.0],
                       help="non-centrality grid (ncchi2 tables)")
    p_err.add_argument("--seed", type=int, default=0)

    p_mlmc = sub.add_parser("mlmc", help="run an MLMC experiment from a config file")
    p_mlmc.add_argument("--config", required=True)
    p_mlmc.add_argument("--out-dir", default="mlmc_results")

    p_bench = sub.add_parser("bench", help="benchmark sampler throughput")
    p_bench.add_argument("--table", action="append", default=[],
                         help="NAME=PATH of a fitted table file (repeatable); "
                         "defaults to a built-in set")
    p_bench.add_argument("--batch", type=int, default=10**6)
    p_bench.add_argument("--reps", type=int, default=7)
    p_bench.add_argument("--with-ncchi2", action="store_true",
                         help="include a non-central chi-squared table in the default set")
    p_bench.add_argument("--out", default=None, help="write the JSON report here")

    p_rep = sub.add_parser("reproduce", help="regenerate a published figure/table as CSV")
    p_rep.add_argument("id", choices=reproduce_mod.REPRODUCIBLE_IDS)
    p_rep.add_argument("--out-dir", default="reproductions")
    p_rep.add_argument("--seed", type=int, default=reproduce_mod.DEFAULT_SEED)
    p_rep.add_argument("--paths", type=int, default=None, help="override pilot path count")
    p_rep.add_argument("--samples", type=int, default=None, help="override RMSE grid size")
    return parser


def _summarize_table(table, args) -> str:
    if isinstance(table, ConstantTable):
        rep = metrics.lp_error(table, p=2.0, measure=exact_dist.GaussianRef())
        return (
            f"constant table: q={table.q} ({table.n_intervals} intervals), "
            f"construction={table.construction}\n"
            f"L2 error vs exact quantile: {rep.value:.6g} (est {rep.error_estimate:.2g})\n"
            f"value range: [{table.values.min():.6g}, {table.values.max():.6g}]"
        )
    if isinstance(table, DyadicPolyTable):
        rep = metrics.lp_error(table, p=2.0, measure=exact_dist.GaussianRef())
        return (
            f"dyadic table: degree={table.degree}, intervals={table.n_intervals}, "
            f"decay={table.decay}\n"
            f"L2 error vs exact quantile: {rep.value:.6g} (est {rep.error_estimate:.2g})\n"
            f"coefficient range: [{table.coeffs.min():.6g}, {table.coeffs.max():.6g}]"
        )
    grid = metrics.rmse_ncchi2(table, [table.nu], n_samples=2 * 10**4)
    return (
        f"ncchi2 table family: nu={table.nu}, knots={table.n_knots}, "
        f"degree={table.degree}, intervals={table.n_intervals}\n"
        f"RMSE at lambda=nu: {grid.values[0, 0]:.6g} ({grid.n_samples} grid points)\n"
        f"coefficient range: [{table.eval_stacks.min():.6g}, {table.eval_stacks.max():.6g}]"
    )


def cmd_fit(args) -> int:
    if args.dist == "gaussian":
        if args.kind == "constant":
            table = fit.fit_constant(args.q, args.construction)
        else:
            table = fit.fit_dyadic_table(args.degree, args.intervals, args.decay,
                                         fit.GaussianQuantileOracle())
    else:
        table = fit.fit_ncchi2(args.nu, n_knots=args.knots, m=args.degree,
                               n_intervals=args.intervals)
    export_table(table, args.out, format=args.format)
    print(_summarize_table(table, args))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    table = import_table(args.table)
    stream = UniformStream(args.seed, args.stream_id)
    u = stream.uniforms(args.n)
    if isinstance(table, NcChi2Table):
        if args.lam is None:
            raise ConfigError("--lam is required for non-central chi-squared tables")
        approx = evaluate(table, u, lam=args.lam)
        exact = exact_dist.ncchi2_inv_cdf_batch(u, table.nu, args.lam) if args.coupled else None
    else:
        approx = evaluate(table, u)
        exact = gaussian_exact_batch(u) if args.coupled else None

    lines = []
    if args.coupled:
        lines.append("exact,approx")
        lines.extend(f"{float(e)!r},{float(a)!r}" for e, a in zip(exact, approx))
    else:
        lines.extend(repr(float(a)) for a in np.atleast_1d(approx))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_error(args) -> int:
    table = import_table(args.table)
    writer = csv.writer(sys.stdout)
    if isinstance(table, NcChi2Table):
        grid = metrics.rmse_ncchi2(table, args.lam, n_samples=args.samples)
        writer.writerow(["nu", "lambda", "rmse", "n_samples"])
        for i, lam in enumerate(args.lam):
            writer.writerow([table.nu, lam, f"{grid.values[i, 0]:.8e}", args.samples])
        return EXIT_OK
    writer.writerow(["p", "error", "method", "n_points", "error_estimate", "flagged"])
    for p in args.p:
        rep = metrics.lp_error(table, p=p, measure=exact_dist.GaussianRef(),
                               method=args.method, n_samples=args.samples, seed=args.seed)
        writer.writerow([p, f"{rep.value:.8e}", rep.method, rep.n_points,
                         f"{rep.error_estimate:.3e}", rep.flagged])
    return EXIT_OK


# ---------------------------------------------------------------------------
# MLMC experiment runner
# ---------------------------------------------------------------------------


def parse_experiment_config(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment."""
    cfg = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        cfg[key.strip().lower()] = val.strip()
    return cfg


def _source_from_spec(text: str, nu: float | None):
    """Source syntax: exact | rademacher | constant:<q> | linear:<K> |
    cubic:<K> | dyadic:<m>:<K> | ncchi2:<m>:<K> | file:<path>."""
    text = text.strip()
    if text == "exact":
        return "exact", text
    if text == "rademacher":
        return fit.fit_constant(1, "rademacher"), text
    head, _, rest = text.partition(":")
    if head == "constant":
        return fit.fit_constant(int(rest), "l1"), text
    if head in ("linear", "cubic"):
        m = 1 if head == "linear" else 3
        return fit.fit_gaussian_dyadic(m, int(rest)), text
    if head == "dyadic":
        m, k = (int(x) for x in rest.split(":"))
        return fit.fit_gaussian_dyadic(m, k), text
    if head == "ncchi2":
        if nu is None:
            raise ConfigError("ncchi2 sources need a CIR process (nu comes from it)")
        m, k = (int(x) for x in rest.split(":"))
        return fit.fit_ncchi2(nu, n_knots=16, m=m, n_intervals=k), text
    if head == "file":
        return import_table(rest), text
    raise ConfigError(f"unknown source spec {text!r}")


def _parse_levels(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.replace(",", " ").split()]


def run_experiment(cfg: dict, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    process_kind = cfg.get("process", "gbm").lower()
    scheme = cfg.get("scheme", "euler_maruyama").lower()
    seed = int(cfg.get("seed", 0))
    pilot = int(cfg.get("pilot", 20000))
    epsilon = float(cfg.get("epsilon", 0.01))
    n0 = int(cfg.get("n0", 2 if process_kind == "gbm" else 4))
    payoff = cfg.get("payoff", "identity")
    strike = float(cfg.get("strike", 1.0))
    levels = _parse_levels(cfg.get("levels", "0:4"))

    if process_kind == "gbm":
        process = mlmc.GbmParams(
            mu=float(cfg.get("mu", 0.05)), sigma=float(cfg.get("sigma", 0.2)),
            x0=float(cfg.get("x0", 1.0)), t_end=float(cfg.get("t_end", 1.0)),
        )
        nu = None
    elif process_kind == "cir":
        process = mlmc.CirParams(
            kappa=float(cfg.get("kappa", 0.5)), theta=float(cfg.get("theta", 1.0)),
            sigma=float(cfg.get("sigma", 1.0)), x0=float(cfg.get("x0", 1.0)),
            t_end=float(cfg.get("t_end", 1.0)),
        )
        nu = 4.0 * process.kappa * process.theta / process.sigma**2
    else:
        raise ConfigError(f"unknown process {process_kind!r}")

    sources = [s.strip() for s in cfg.get("sources", "exact").split(",") if s.strip()]
    rows = []
    alloc_rows = []
    summary = {"config": dict(cfg), "sources": {}}
    for source_text in sources:
        source, label = _source_from_spec(source_text, nu)
        per_level = {}
        for lvl in levels:
            stream = mlmc.level_stream(seed, lvl)
            if source == "exact":
                spec = mlmc.LevelSpec(level=lvl, scheme=scheme, process=process,
                                      rv_source="exact", kind="two_way", payoff=payoff,
                                      strike=strike, n0=n0)
                stats = {"two_way_exact": mlmc.estimate_level(spec, stream, pilot)}
            else:
                spec = mlmc.LevelSpec(level=lvl, scheme=scheme, process=process,
                                      rv_source=source, kind="four_way", payoff=payoff,
                                      strike=strike, n0=n0)
                stats = mlmc.estimate_level_suite(spec, stream, pilot)
            per_level[lvl] = stats
            for key, st in stats.items():
                for stat_name, value in (
                    ("mean", st.mean), ("variance", st.variance),
                    ("cost_per_path_seconds", st.cost_per_path_seconds),
                    ("cost_per_path_draws", st.cost_per_path_draws),
                    ("n_paths", st.n_paths),
                ):
                    rows.append([lvl, label, key, stat_name, f"{value:.10e}"])

        key = "two_way_exact" if source == "exact" else "two_way_approx"
        alloc = mlmc.optimal_allocation([per_level[l][key] for l in levels], epsilon)
        alloc_rows.append([label, "regular", f"{alloc.predicted_cost:.6e}",
                           " ".join(str(x) for x in alloc.n_paths)])
        entry = {"regular_cost": alloc.predicted_cost, "paths": alloc.n_paths}
        if source != "exact":
            cheap, corr, total = mlmc.optimal_allocation_nested(
                [per_level[l]["two_way_approx"] for l in levels],
                [per_level[l]["four_way"] for l in levels],
                epsilon,
            )
            alloc_rows.append([label, "nested", f"{total:.6e}",
                               " ".join(f"{a}/{b}" for a, b in zip(cheap.n_paths, corr.n_paths))])
            entry["nested_cost"] = total
        summary["sources"][label] = entry

    _write_rows(out_dir / "levels.csv",
                ["level", "source", "estimator", "statistic", "value"], rows)
    _write_rows(out_dir / "allocation.csv",
                ["source", "estimator", "predicted_cost", "paths_per_level"], alloc_rows)
    with open(out_dir / "experiment.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
    print(f"wrote {out_dir}/levels.csv, allocation.csv, experiment.json")
    return summary


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_mlmc(args) -> int:
    cfg = parse_experiment_config(args.config)
    run_experiment(cfg, args.out_dir)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.table:
        tables = {}
        for item in args.table:
            if "=" not in item:
                raise ConfigError(f"--table wants NAME=PATH, got {item!r}")
            name, _, path = item.partition("=")
            tables[name] = import_table(path)
    else:
        tables = {
            "rademacher": fit.fit_constant(1, "rademacher"),
            "constant_q10": fit.fit_constant(10, "l1"),
            "linear_k15": fit.fit_gaussian_dyadic(1, 15),
            "cubic_k15": fit.fit_gaussian_dyadic(3, 15),
        }
        if args.with_ncchi2:
            tables["ncchi2_linear_k15"] = fit.fit_ncchi2(1.0, n_knots=16, m=1, n_intervals=15)
    report = bench_mod.run_bench(tables, batch_size=args.batch, repetitions=args.reps)
    print(bench_mod.format_report(report))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.as_dict(), fh, indent=2, default=float)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    overrides = {}
    if args.paths is not None:
        if args.id in ("fig3a", "fig3b", "fig4b", "table3", "table6"):
            overrides["n_paths"] = args.paths
        else:
            raise ConfigError(f"--paths does not apply to {args.id}")
    if args.samples is not None:
        if args.id in ("table5a", "table5b"):
            overrides["n_samples"] = args.samples
        else:
            raise ConfigError(f"--samples does not apply to {args.id}")
    manifest = reproduce_mod.reproduce(args.id, args.out_dir, seed=args.seed, **overrides)
    for name, v in manifest["verdicts"].items():
        status = "pass" if v["pass"] else "FAIL"
        rng = f"[{v['low']}, {v['high']}]"
        print(f"{args.id} {name}: {v['value']:.6g} in {rng} -> {status}")
    print(f"wrote {manifest['files']} + {args.id}_manifest.json in {args.out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        set_max_workers(args.threads)
        handler = {
            "fit": cmd_fit,
            "sample": cmd_sample,
            "error": cmd_error,
            "mlmc": cmd_mlmc,
            "bench": cmd_bench,
            "reproduce": cmd_reproduce,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (TableIOError, OSError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
