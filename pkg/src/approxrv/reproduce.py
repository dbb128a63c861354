"""Deterministic reproduction bundles for the published figures and tables.

Each ``reproduce_*`` function runs the relevant study at desk scale,
writes CSV files, and returns a manifest dictionary embedding the
tolerance verdicts, so CI can gate on reproduction quality.  All runs
are seeded and bitwise reproducible on a fixed build.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import fit, metrics, mlmc
from ._threads import parallel_map
from .errors import ConfigError

REPRODUCIBLE_IDS = (
    "fig1b", "fig2b", "fig3a", "fig3b", "fig4b",
    "table3", "table5a", "table5b", "table6",
)

# Published reference grids the reproductions are checked against.
# Rows: lambda in (1, 5, 10, 50, 100, 200); columns: nu in (1, 5, 10, 50, 100).
RMSE_LAMBDAS = (1.0, 5.0, 10.0, 50.0, 100.0, 200.0)
RMSE_NUS = (1.0, 5.0, 10.0, 50.0, 100.0)
RMSE_REFERENCE_LINEAR = np.array([
    [0.036, 0.036, 0.041, 0.070, 0.095],
    [0.045, 0.047, 0.050, 0.076, 0.100],
    [0.054, 0.056, 0.059, 0.081, 0.104],
    [0.098, 0.099, 0.101, 0.116, 0.133],
    [0.134, 0.135, 0.136, 0.148, 0.161],
    [0.186, 0.187, 0.188, 0.196, 0.207],
])
RMSE_REFERENCE_CUBIC = np.array([
    [0.004, 0.005, 0.006, 0.007, 0.006],
    [0.004, 0.004, 0.005, 0.010, 0.015],
    [0.006, 0.005, 0.005, 0.009, 0.014],
    [0.006, 0.007, 0.005, 0.010, 0.011],
    [0.013, 0.008, 0.009, 0.011, 0.014],
    [0.009, 0.012, 0.011, 0.012, 0.015],
])

GBM_DEFAULT = mlmc.GbmParams(mu=0.05, sigma=0.2, x0=1.0, t_end=1.0)
CIR_DEFAULT = mlmc.CirParams(kappa=0.5, theta=1.0, sigma=1.0, x0=1.0, t_end=1.0)

DEFAULT_SEED = 20240817


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _verdict(value, lo=None, hi=None) -> dict:
    ok = True
    if lo is not None:
        ok = ok and value >= lo
    if hi is not None:
        ok = ok and value <= hi
    return {"value": float(value), "low": lo, "high": hi, "pass": bool(ok)}


def _manifest(out_dir: Path, rid: str, seed, config: dict, verdicts: dict, files: list) -> dict:
    manifest = {
        "id": rid,
        "seed": seed,
        "config": config,
        "verdicts": verdicts,
        "all_pass": all(v["pass"] for v in verdicts.values()) if verdicts else True,
        "files": files,
        "machine": bench_mod.machine_manifest(),
    }
    with open(out_dir / f"{rid}_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=float)
    return manifest


def gaussian_source_tables() -> dict:
    """The four approximation sources the savings tables compare."""
    return {
        "rademacher": fit.fit_constant(1, "rademacher"),
        "constant_q10": fit.fit_constant(10, "l1"),
        "linear_k15": fit.fit_gaussian_dyadic(1, 15),
        "cubic_k15": fit.fit_gaussian_dyadic(3, 15),
    }


# ---------------------------------------------------------------------------
# Error figures
# ---------------------------------------------------------------------------


def reproduce_fig1b(out_dir, seed=DEFAULT_SEED, q_max: int = 14) -> dict:
    """Constant-table Lp error against interval count, with the bound overlay."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p_list = (2.0, 4.0, 6.0)
    study = metrics.scaling_study_constant(range(1, q_max + 1), p_list=p_list)
    consts = {p: metrics.calibrate_bound_constant(study, p, q_ref=8) for p in p_list}
    rows = []
    for r in study.rows:
        q = r.config["q"]
        bound = (consts[r.p] * 2.0 ** (-q) * q ** (-r.p / 2.0)) ** (1.0 / r.p)
        rows.append([q, r.p, f"{r.error:.10e}", f"{r.error_estimate:.3e}", f"{bound:.10e}"])
    _write_csv(out_dir / "fig1b.csv", ["q", "p", "error", "error_estimate", "bound"], rows)

    err = {cfg["q"]: e for cfg, e in study.errors(2.0)}
    drop = err[1] / err[10]
    window = [q for q in range(8, q_max + 1)]
    slope = metrics.fit_log2_slope(window, [err[q] ** 2 for q in window])
    verdicts = {
        "rmse_drop_q1_to_q10": _verdict(drop, 50.0, 200.0),
        "slope_log2_err2_vs_q": _verdict(slope, -1.25, -0.95),
    }
    return _manifest(out_dir, "fig1b", seed, {"q_max": q_max, "p_list": p_list},
                     verdicts, ["fig1b.csv"])


def reproduce_fig2b(out_dir, seed=DEFAULT_SEED) -> dict:
    """Dyadic-table L2 error against interval count for degrees 1..5."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    k_grid = (2, 3, 4, 6, 8, 10, 12, 15, 16, 20)
    rows = []
    errors = {}
    for m in range(1, 6):
        study = metrics.scaling_study_dyadic(m, k_grid)
        for cfg, e in study.errors(2.0):
            errors[(m, cfg["K"])] = e
            rows.append([m, cfg["K"], f"{e:.10e}"])
    _write_csv(out_dir / "fig2b.csv", ["degree", "intervals", "l2_error"], rows)
    verdicts = {
        "linear_k15_plateau": _verdict(errors[(1, 15)], 5e-3, 2e-2),
        "cubic_k15": _verdict(errors[(3, 15)], 5e-5, 5e-4),
        "quintic_over_cubic_gain": _verdict(errors[(3, 15)] / errors[(5, 15)], None, 3.0),
    }
    return _manifest(out_dir, "fig2b", seed, {"k_grid": k_grid}, verdicts, ["fig2b.csv"])


# ---------------------------------------------------------------------------
# GBM variance structure (Fig. 3) and savings (Table 3)
# ---------------------------------------------------------------------------


def gbm_pilot_suites(scheme: str, seed: int, n_paths: int, levels, sources=None) -> dict:
    """Per-source, per-level coupled pilot statistics for one scheme."""
    tables = sources or gaussian_source_tables()
    suites = {name: [] for name in tables}
    for name, table in tables.items():
        for lvl in levels:
            spec = mlmc.LevelSpec(
                level=lvl, scheme=scheme, process=GBM_DEFAULT, rv_source=table, kind="four_way"
            )
            suites[name].append(
                mlmc.estimate_level_suite(spec, mlmc.level_stream(seed, lvl), n_paths)
            )
    return suites


def _fig3_verdicts(scheme: str, suites: dict, levels) -> dict:
    lvls = list(levels)
    slope_window = [l for l in lvls if l >= 2]
    four_window = [l for l in lvls if l >= 3]
    ref = suites["linear_k15"]
    by_level = {s["four_way"].level: s for s in ref}

    def var_slope(key, window):
        # dt halves per level, so slope vs dt = -slope vs level.
        xs = list(window)
        ys = [by_level[l][key].variance for l in xs]
        return -metrics.fit_log2_slope(xs, ys)

    def mean_gap(name):
        vals = []
        for s in suites[name]:
            lvl = s["four_way"].level
            if lvl >= 2 and s["two_way_exact"].variance > 0 and s["four_way"].variance > 0:
                vals.append(math.log2(s["four_way"].variance / s["two_way_exact"].variance))
        return float(np.mean(vals))

    two_way_target = (0.75, 1.25) if scheme == "euler_maruyama" else (1.6, 2.4)
    verdicts = {
        "two_way_variance_slope": _verdict(var_slope("two_way_exact", slope_window), *two_way_target),
        "four_way_variance_slope": _verdict(var_slope("four_way", four_window), 0.75, 1.25),
        "linear_gap_log2": _verdict(mean_gap("linear_k15"), -16.0, -12.0),
        "cubic_gap_log2": _verdict(mean_gap("cubic_k15"), None, -20.0),
        "rademacher_gap_log2": _verdict(mean_gap("rademacher"), -2.0, 0.0),
    }
    return verdicts


def reproduce_fig3(out_dir, scheme: str, seed=DEFAULT_SEED, n_paths: int = 10**5,
                   max_level: int = 8) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rid = "fig3a" if scheme == "euler_maruyama" else "fig3b"
    levels = range(0, max_level + 1)
    suites = gbm_pilot_suites(scheme, seed, n_paths, levels)
    rows = []
    for name, per_level in suites.items():
        for s in per_level:
            lvl = s["four_way"].level
            dt = GBM_DEFAULT.t_end / (2 << lvl)
            for key in ("two_way_exact", "two_way_approx", "four_way"):
                rows.append([scheme, name, lvl, f"{dt:.8e}", key, f"{s[key].variance:.10e}",
                             f"{s[key].mean:.10e}", s[key].n_paths])
    _write_csv(
        out_dir / f"{rid}.csv",
        ["scheme", "source", "level", "dt_fine", "statistic", "variance", "mean", "n_paths"],
        rows,
    )
    verdicts = _fig3_verdicts(scheme, suites, levels)
    manifest = _manifest(out_dir, rid, seed, {"scheme": scheme, "n_paths": n_paths,
                                              "max_level": max_level}, verdicts, [f"{rid}.csv"])
    manifest["suites"] = suites
    return manifest


def reproduce_table3(out_dir, seed=DEFAULT_SEED, n_paths: int = 10**5, max_level: int = 8,
                     suites: dict | None = None, bench_batch: int = 10**6) -> dict:
    """Savings table from pilot variances and quantile costs.

    Two cost models are emitted.  The wall-clock model uses per-draw
    quantile costs measured by the benchmark (machine-dependent; this is
    the savings-table shape).  The draw-count model attributes one unit
    to every uniform-to-variate conversion regardless of the routine --
    the machine-independent accounting the acceptance verdicts are
    pinned to, under which the cost ratio is 1 and the predicted speedup
    equals the efficiency.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = gaussian_source_tables()
    if suites is None:
        suites = gbm_pilot_suites("euler_maruyama", seed, n_paths, range(0, max_level + 1), tables)
    report = bench_mod.run_bench(tables, batch_size=bench_batch, repetitions=5, seed=seed)
    wall_ratios = {name: report.ratios[name]["vs_exact"] for name in tables}
    window = (2, max_level)
    csv_rows = []
    for model, ratios in (
        ("wall_clock", wall_ratios),
        ("draw_count", {name: 1.0 for name in tables}),
    ):
        for r in mlmc.speedup_report(suites, ratios, level_window=window):
            csv_rows.append(
                [model, r.name, f"{r.log2_variance_gap:.2f}", f"{r.cost_ratio:.2f}",
                 f"{r.speedup:.2f}", f"{r.efficiency:.4f}", f"{r.paths_ratio_cheap:.3f}",
                 f"{r.paths_ratio_correction:.1f}"]
            )
    _write_csv(
        out_dir / "table3.csv",
        ["cost_model", "approximation", "log2_variance_gap", "cost_ratio", "speedup",
         "efficiency", "paths_ratio_cheap", "paths_ratio_correction"],
        csv_rows,
    )
    draw_rows = mlmc.speedup_report(suites, {name: 1.0 for name in tables}, level_window=window)
    by_name = {r.name: r for r in draw_rows}
    verdicts = {
        "linear_efficiency": _verdict(by_name["linear_k15"].efficiency, 0.9, None),
        "cubic_efficiency": _verdict(by_name["cubic_k15"].efficiency, 0.9, None),
        "rademacher_efficiency": _verdict(by_name["rademacher"].efficiency, None, 0.3),
        "linear_vs_rademacher_speedup": _verdict(
            by_name["linear_k15"].speedup / by_name["rademacher"].speedup, 4.0, None
        ),
    }
    manifest = _manifest(out_dir, "table3", seed,
                         {"n_paths": n_paths, "bench_batch": bench_batch,
                          "wall_clock_cost_ratios": wall_ratios}, verdicts, ["table3.csv"])
    manifest["rows"] = draw_rows
    return manifest


# ---------------------------------------------------------------------------
# CIR experiment (Fig. 4b, Table 6)
# ---------------------------------------------------------------------------


def cir_pilot(out_dir_unused, seed: int, n_paths: int, levels=range(0, 7)) -> dict:
    """CIR statistics per time step: exact process variance, truncated-EM
    two-way variance, and exact-vs-table correction variances."""
    nu = 4.0 * CIR_DEFAULT.kappa * CIR_DEFAULT.theta / CIR_DEFAULT.sigma**2
    tables = {
        "linear_k15": fit.fit_ncchi2(nu, n_knots=16, m=1, n_intervals=15),
        "cubic_k15": fit.fit_ncchi2(nu, n_knots=16, m=3, n_intervals=15),
    }
    stats = {"process_variance": {}, "em_two_way_variance": {},
             "linear_k15_correction": {}, "cubic_k15_correction": {}}
    for lvl in levels:
        dt = CIR_DEFAULT.t_end / (4 << lvl)
        for name, table in tables.items():
            spec = mlmc.LevelSpec(level=lvl, scheme="cir_exact", process=CIR_DEFAULT,
                                  rv_source=table, kind="four_way", n0=4)
            batch = mlmc.simulate(spec, mlmc.level_stream(seed, lvl), n_paths, sides="both")
            corr = batch.p_fine_exact - batch.p_fine_approx
            stats[f"{name}_correction"][dt] = float(np.var(corr, ddof=1))
            if name == "linear_k15":
                stats["process_variance"][dt] = float(np.var(batch.p_fine_exact, ddof=1))
        em_spec = mlmc.LevelSpec(level=lvl, scheme="cir_euler_truncated", process=CIR_DEFAULT,
                                 rv_source="exact", kind="two_way", n0=4)
        em = mlmc.estimate_level(em_spec, mlmc.level_stream(seed + 1, lvl), n_paths)
        stats["em_two_way_variance"][dt] = em.variance
    return stats


def reproduce_fig4b(out_dir, seed=DEFAULT_SEED, n_paths: int = 10**5) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = cir_pilot(out_dir, seed, n_paths)
    rows = []
    for stat, series in stats.items():
        for dt, val in sorted(series.items(), reverse=True):
            rows.append([stat, f"{dt:.8e}", f"{val:.10e}", n_paths])
    _write_csv(out_dir / "fig4b.csv", ["statistic", "dt", "value", "n_paths"], rows)

    proc = stats["process_variance"]
    flat_ratio = max(proc.values()) / min(proc.values())
    em = stats["em_two_way_variance"]
    # Level 0 has no coarse partner (its "difference" is the plain value),
    # so the correction-variance slope regresses over levels >= 1 only.
    dts = sorted(em)[:-1]
    em_slope = metrics.fit_log2_slope(np.log2(dts), [em[d] for d in dts])
    gaps = [
        math.log2(stats["linear_k15_correction"][d] / proc[d]) for d in proc
    ]
    verdicts = {
        "exact_variance_flatness": _verdict(flat_ratio, None, 1.2),
        "em_variance_slope": _verdict(em_slope, 0.7, 1.3),
        "linear_correction_gap_log2": _verdict(float(np.median(gaps)), -17.0, -13.0),
    }
    manifest = _manifest(out_dir, "fig4b", seed, {"n_paths": n_paths}, verdicts, ["fig4b.csv"])
    manifest["stats"] = stats
    return manifest


def reproduce_table6(out_dir, seed=DEFAULT_SEED, n_paths: int = 3 * 10**4,
                     bench_batch: int = 10**6) -> dict:
    """Chi-squared savings rows from CIR pilots plus measured quantile costs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = cir_pilot(out_dir, seed, n_paths)
    nu = 4.0 * CIR_DEFAULT.kappa * CIR_DEFAULT.theta / CIR_DEFAULT.sigma**2
    tables = {
        "linear_k15": fit.fit_ncchi2(nu, n_knots=16, m=1, n_intervals=15),
        "cubic_k15": fit.fit_ncchi2(nu, n_knots=16, m=3, n_intervals=15),
    }
    report = bench_mod.run_bench(tables, batch_size=bench_batch, repetitions=5, seed=seed)
    rows = []
    verdicts = {}
    proc = stats["process_variance"]
    for name in tables:
        gaps = [math.log2(stats[f"{name}_correction"][d] / proc[d]) for d in proc]
        gap = float(np.median(gaps))
        ratio = report.ratios[name]["vs_exact"]
        eff = (1.0 + math.sqrt(2.0**gap * (1.0 + ratio))) ** -2
        rows.append([name, f"{gap:.2f}", f"{ratio:.1f}", f"{ratio * eff:.1f}", f"{eff:.4f}",
                     f"{math.sqrt(1.0 / eff):.3f}", f"{math.sqrt(2.0**-gap * (1.0 + ratio)):.1f}"])
        if name == "linear_k15":
            verdicts["linear_correction_gap_log2"] = _verdict(gap, -17.0, -13.0)
    _write_csv(
        out_dir / "table6.csv",
        ["approximation", "log2_variance_gap", "cost_ratio", "speedup", "efficiency",
         "paths_ratio_cheap", "paths_ratio_correction"],
        rows,
    )
    return _manifest(out_dir, "table6", seed,
                     {"n_paths": n_paths, "bench_batch": bench_batch}, verdicts, ["table6.csv"])


# ---------------------------------------------------------------------------
# Non-central chi-squared RMSE tables
# ---------------------------------------------------------------------------


def reproduce_table5(out_dir, degree: int, seed=DEFAULT_SEED, n_samples: int = 10**5) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rid = "table5a" if degree == 1 else "table5b"
    reference = RMSE_REFERENCE_LINEAR if degree == 1 else RMSE_REFERENCE_CUBIC
    tables = parallel_map(
        lambda nu: fit.fit_ncchi2(nu, n_knots=16, m=degree, n_intervals=15), RMSE_NUS
    )
    grid = metrics.rmse_ncchi2(tables, RMSE_LAMBDAS, n_samples=n_samples)
    rows = [
        [lam] + [f"{grid.values[i, j]:.6f}" for j in range(len(RMSE_NUS))]
        for i, lam in enumerate(RMSE_LAMBDAS)
    ]
    _write_csv(out_dir / f"{rid}.csv", ["lambda"] + [f"nu={int(nu)}" for nu in RMSE_NUS], rows)

    verdicts = {}
    if degree == 1:
        rel = np.abs(grid.values - reference) / reference
        verdicts["max_cell_relative_error"] = _verdict(float(np.nanmax(rel)), None, 0.5)
    else:
        ratio = grid.values / reference
        verdicts["max_cell_factor"] = _verdict(float(np.nanmax(ratio)), None, 3.0)
        verdicts["min_cell_factor"] = _verdict(float(np.nanmin(ratio)), 1.0 / 3.0, None)
    verdicts["all_cells_computed"] = _verdict(float(np.isnan(grid.values).sum()), None, 0.0)
    manifest = _manifest(out_dir, rid, seed,
                         {"degree": degree, "n_samples": n_samples}, verdicts, [f"{rid}.csv"])
    manifest["grid"] = grid
    return manifest


def reproduce(rid: str, out_dir, seed: int = DEFAULT_SEED, **overrides) -> dict:
    """Dispatch a reproduction id to its driver."""
    if rid not in REPRODUCIBLE_IDS:
        raise ConfigError(f"unknown reproduction id {rid!r}; known: {', '.join(REPRODUCIBLE_IDS)}")
    if rid == "fig1b":
        return reproduce_fig1b(out_dir, seed=seed, **overrides)
    if rid == "fig2b":
        return reproduce_fig2b(out_dir, seed=seed, **overrides)
    if rid == "fig3a":
        return reproduce_fig3(out_dir, "euler_maruyama", seed=seed, **overrides)
    if rid == "fig3b":
        return reproduce_fig3(out_dir, "milstein", seed=seed, **overrides)
    if rid == "fig4b":
        return reproduce_fig4b(out_dir, seed=seed, **overrides)
    if rid == "table3":
        return reproduce_table3(out_dir, seed=seed, **overrides)
    if rid == "table5a":
        return reproduce_table5(out_dir, 1, seed=seed, **overrides)
    if rid == "table5b":
        return reproduce_table5(out_dir, 3, seed=seed, **overrides)
    return reproduce_table6(out_dir, seed=seed, **overrides)
