"""Throughput benchmarks for the samplers and their reference quantiles.

Reports nanoseconds per sample for: a read-write baseline, the exact
Gaussian quantile (this package's rational approximation and scipy's
compiled one), every supplied table under both kernel backends, and the
exact non-central chi-squared batch quantile.  Ratios against the exact
routines are the cost inputs of the speedup accounting.  Timings carry
a coefficient of variation; noisy rows (cv > 10%) are flagged.

A per-element timing-uniformity probe (all-central vs all-tail inputs)
is included: branch-free evaluation should cost the same whatever the
values, so the gap between the two regimes should be small.
"""

from __future__ import annotations

import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special as _sp

from . import __version__, exact_dist
from ._backend import backend_name, get_kernels
from .sampler import gaussian_exact_batch
from .tables import ConstantTable, DyadicPolyTable, NcChi2Table

CACHE_RESIDENT_BATCH = 1 << 12


@dataclass
class BenchRow:
    name: str
    backend: str
    batch_size: int
    ns_per_sample: float
    cv: float
    noisy: bool


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    uniformity: dict = field(default_factory=dict)
    ratios: dict = field(default_factory=dict)
    soft_checks: dict = field(default_factory=dict)
    machine: dict = field(default_factory=dict)

    def row(self, name: str, batch_size=None, backend=None) -> BenchRow:
        for r in self.rows:
            if r.name == name and (batch_size is None or r.batch_size == batch_size) and (
                backend is None or r.backend == backend
            ):
                return r
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "uniformity": self.uniformity,
            "ratios": self.ratios,
            "soft_checks": self.soft_checks,
            "machine": self.machine,
        }


def machine_manifest() -> dict:
    cpu = ""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        cpu = platform.processor()
    import scipy

    return {
        "platform": platform.platform(),
        "cpu": cpu,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "approxrv": __version__,
        "kernel_backend": backend_name(),
    }


def _time_call(fn, repetitions: int) -> tuple[float, float]:
    fn()  # warm-up
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    times = np.asarray(times)
    mean = float(times.mean())
    cv = float(times.std() / mean) if mean > 0 else 0.0
    return mean, cv


def _available_backends() -> list[str]:
    names = ["python"]
    try:
        get_kernels("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def _bench_table(report, name, table, u, repetitions, lam):
    n = u.shape[0]
    out = np.empty_like(u)
    for backend in _available_backends():
        k = get_kernels(backend)
        if isinstance(table, ConstantTable):
            fn = lambda: k.constant_eval(table.values, u, out)
        elif isinstance(table, DyadicPolyTable):
            fn = lambda: k.dyadic_eval(table.coeffs, u, out)
        else:
            lam_arr = np.full(1, lam)
            fn = lambda: k.ncchi2_eval(table.eval_stacks, table.nu, u, lam_arr, out)
        mean, cv = _time_call(fn, repetitions)
        report.rows.append(
            BenchRow(name=name, backend=backend, batch_size=n,
                     ns_per_sample=mean / n * 1e9, cv=cv, noisy=cv > 0.10)
        )


def run_bench(
    tables: dict,
    batch_size: int = 10**6,
    repetitions: int = 7,
    seed: int = 0,
    lam: float = 1.0,
    ncchi2_exact_batch: int = 10**5,
) -> BenchReport:
    """Benchmark the supplied ``{name: table}`` map plus the references."""
    report = BenchReport(machine=machine_manifest())
    rng = np.random.default_rng(seed)

    for n in (CACHE_RESIDENT_BATCH, batch_size):
        u = rng.random(n) * (1.0 - 2e-9) + 1e-9
        out = np.empty_like(u)

        mean, cv = _time_call(lambda: np.copyto(out, u), repetitions)
        report.rows.append(BenchRow("read_write", "-", n, mean / n * 1e9, cv, cv > 0.10))

        mean, cv = _time_call(lambda: gaussian_exact_batch(u), max(3, repetitions // 2))
        report.rows.append(BenchRow("gaussian_exact", "-", n, mean / n * 1e9, cv, cv > 0.10))

        mean, cv = _time_call(lambda: _sp.ndtri(u), max(3, repetitions // 2))
        report.rows.append(BenchRow("gaussian_exact_scipy", "-", n, mean / n * 1e9, cv, cv > 0.10))

        for name, table in tables.items():
            _bench_table(report, name, table, u, repetitions, lam)

    # Exact non-central chi-squared quantile (amortized batch cost).
    n_chi = min(ncchi2_exact_batch, batch_size)
    u_chi = rng.random(n_chi) * 0.998 + 0.001
    mean, cv = _time_call(lambda: exact_dist.ncchi2_inv_cdf_batch(u_chi, 1.0, lam), 3)
    report.rows.append(
        BenchRow("ncchi2_exact", "-", n_chi, mean / n_chi * 1e9, cv, cv > 0.10)
    )

    # Timing-uniformity probe on the first dyadic table: tail-heavy vs
    # central batches through the same kernel.
    for name, table in tables.items():
        if isinstance(table, DyadicPolyTable):
            n = batch_size
            central = rng.random(n) * 0.4 + 0.3
            tail = np.concatenate(
                [rng.random(n // 2) * 2.0**-20 + 1e-12, 1.0 - rng.random(n - n // 2) * 2.0**-20 - 1e-12]
            )
            out = np.empty_like(central)
            k = get_kernels()
            t_central, _ = _time_call(lambda: k.dyadic_eval(table.coeffs, central, out), repetitions)
            t_tail, _ = _time_call(lambda: k.dyadic_eval(table.coeffs, tail, out), repetitions)
            report.uniformity = {
                "table": name,
                "central_ns": t_central / n * 1e9,
                "tail_ns": t_tail / n * 1e9,
                "relative_gap": abs(t_tail - t_central) / t_central,
            }
            break

    _derive_ratios(report, tables, batch_size)
    return report


def _derive_ratios(report: BenchReport, tables: dict, batch_size: int) -> None:
    """Cost ratios and the soft (warning-level) throughput criteria."""
    try:
        exact_ns = report.row("gaussian_exact_scipy", batch_size).ns_per_sample
        chi_exact_ns = report.row("ncchi2_exact").ns_per_sample
        base_ns = report.row("read_write", batch_size).ns_per_sample
    except KeyError:
        return
    active = backend_name()
    for name, table in tables.items():
        try:
            t_ns = report.row(name, batch_size, active).ns_per_sample
        except KeyError:
            continue
        exact_ref = chi_exact_ns if isinstance(table, NcChi2Table) else exact_ns
        report.ratios[name] = {
            "vs_exact": exact_ref / t_ns,
            "vs_read_write": t_ns / base_ns,
            "backend": active,
        }
        threshold = 50.0 if isinstance(table, NcChi2Table) else 5.0
        ok = exact_ref / t_ns >= threshold
        report.soft_checks[name] = {
            "throughput_ratio": exact_ref / t_ns,
            "threshold": threshold,
            "ok": bool(ok),
        }
        if not ok:
            warnings.warn(
                f"soft bench criterion: {name} is only {exact_ref / t_ns:.1f}x the exact "
                f"quantile (target {threshold}x)",
                UserWarning,
            )


def format_report(report: BenchReport) -> str:
    lines = ["machine: " + report.machine.get("cpu", "?")]
    lines.append(f"kernel backend: {report.machine.get('kernel_backend')}")
    lines.append(f"{'name':24s} {'backend':9s} {'batch':>9s} {'ns/sample':>10s} {'cv':>6s}")
    for r in report.rows:
        flag = " (noisy)" if r.noisy else ""
        lines.append(
            f"{r.name:24s} {r.backend:9s} {r.batch_size:9d} {r.ns_per_sample:10.2f} "
            f"{r.cv:6.1%}{flag}"
        )
    if report.uniformity:
        u = report.uniformity
        lines.append(
            f"timing uniformity ({u['table']}): central {u['central_ns']:.2f} ns, "
            f"tail {u['tail_ns']:.2f} ns, gap {u['relative_gap']:.1%}"
        )
    for name, r in report.ratios.items():
        lines.append(
            f"ratio {name}: {r['vs_exact']:.1f}x vs exact quantile, "
            f"{r['vs_read_write']:.1f}x read-write baseline"
        )
    return "\n".join(lines)
