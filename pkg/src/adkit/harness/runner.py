"""Correctness checks, benchmarks and suite reports.

Checks and benchmarks never raise on a wrong answer or an unsupported
operator: those outcomes are recorded as ``fail`` and ``skip``.  Only
configuration mistakes (unknown names, empty selections) raise
:class:`~adkit.errors.ConfigError`.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from adkit import api
from adkit.backends import backend_from_id
from adkit.errors import (ConfigError, ShapeMismatch, UnsupportedOperator,
                          UnsupportedPrimitive)
from adkit.harness import scenarios as sc
from adkit.harness.reference import evaluate

AD_TOLERANCE = 1e-8
FD_TOLERANCE = 1e-4

CSV_COLUMNS = ("scenario", "backend", "operator", "size", "prepared", "samples", "time_ns_min",
               "time_ns_median", "allocs", "status", "max_abs_err")

# an operator the backend cannot realize is a skip, not a failure
_SKIP = (UnsupportedOperator, UnsupportedPrimitive, ShapeMismatch)


def default_tolerance(scenario, backend):
    key = "fd" if "fd" in backend.id.split("-") else "ad"
    return scenario.tolerance.get(key, FD_TOLERANCE if key == "fd" else AD_TOLERANCE)


def _dense(r):
    if scipy.sparse.issparse(r):
        return r.toarray()
    return np.asarray(r, dtype=float)


def _errors(got, expected):
    got, expected = _dense(got), np.asarray(expected, dtype=float)
    if got.shape != expected.shape:
        if got.size != expected.size:
            return math.inf, math.inf
        got = got.reshape(expected.shape)
    diff = np.abs(got - expected)
    if diff.size == 0:
        return 0.0, 0.0
    abs_err = float(diff.max())
    rel_err = float((diff / np.maximum(1.0, np.abs(expected))).max())
    return abs_err, rel_err


def _args(case):
    if case.scenario.operator in sc.SEEDED:
        return (case.x, case.seed) + case.contexts
    return (case.x,) + case.contexts


def _buffer(r):
    if scipy.sparse.issparse(r):
        return r.copy()
    if isinstance(r, np.ndarray):
        return np.empty_like(r)
    return None


@dataclass
class CheckReport:
    """Outcome of :func:`check`.

    ``variants`` maps each of the four call variants to its max abs error.
    """

    scenario: str
    backend: str
    operator: str
    size: int
    status: str
    max_abs_err: float = math.nan
    max_rel_err: float = math.nan
    tolerance: float = math.nan
    reason: str = ""
    variants: dict = field(default_factory=dict)

    def line(self):
        err = "" if self.status == "skip" else f" max_abs={self.max_abs_err:.3g} max_rel={self.max_rel_err:.3g}"
        why = f" ({self.reason})" if self.reason else ""
        return f"{self.status.upper():4s} {self.scenario} [{self.backend}] n={self.size}{err}{why}"


def check(scenario, backend, tolerance=None, size=None):
    """Compare all four call variants of the scenario's operator against its reference.

    Parameters
    ----------
    scenario : Scenario or str
    backend : Backend or str
    tolerance : float, optional
        Absolute tolerance; by default 1e-8 for AD backends and 1e-4 for
        finite differences, unless the scenario overrides it.
    size : int, optional
        Input size for sized scenarios.

    Returns
    -------
    CheckReport
    """
    if isinstance(scenario, str):
        scenario = sc.get(scenario)
    if isinstance(backend, str):
        backend = backend_from_id(backend)
    op = scenario.operator
    case = scenario.instance(size)
    tol = default_tolerance(scenario, backend) if tolerance is None else float(tolerance)
    rep = CheckReport(scenario.name, backend.id, op, case.size, "pass", tolerance=tol)
    plain = getattr(api, op)
    with_value = getattr(api, f"value_and_{op}")
    args = _args(case)
    try:
        prep = api.prepare(op, case.f, backend, case.x, *case.contexts, seeds=case.seed)
    except _SKIP as e:
        rep.status, rep.reason = "skip", type(e).__name__
        return rep
    except Exception as e:  # noqa: BLE001  (a crashing backend is a failed check)
        rep.status, rep.reason = "fail", f"{type(e).__name__}: {e}"
        return rep
    try:
        y_ref = evaluate(case.f, case.x, case.contexts)
        r = plain(case.f, prep, backend, *args)
        results = {"plain": r}
        buf = _buffer(r)
        results["out"] = plain(case.f, prep, backend, *args, out=buf) if buf is not None else r
        y1, results["value_and"] = with_value(case.f, prep, backend, *args)
        buf2 = _buffer(r)
        y2, r2 = with_value(case.f, prep, backend, *args, out=buf2) if buf2 is not None else (y1, r)
        results["value_and_out"] = r2
        value_err = max(_errors(y, y_ref)[0] for y in (y1, y2))
    except _SKIP as e:
        rep.status, rep.reason = "skip", type(e).__name__
        return rep
    except Exception as e:  # noqa: BLE001
        rep.status, rep.reason = "fail", f"{type(e).__name__}: {e}"
        return rep
    abs_errs, rel_errs = [], []
    for name, res in results.items():
        a, rel = _errors(res, case.expected)
        rep.variants[name] = a
        abs_errs.append(a)
        rel_errs.append(rel)
    rep.max_abs_err, rep.max_rel_err = max(abs_errs), max(rel_errs)
    if not rep.max_abs_err <= tol:
        rep.status = "fail"
        rep.reason = f"error above tolerance {tol:g}"
    elif not value_err <= tol:
        rep.status = "fail"
        rep.reason = f"primal value off by {value_err:.3g}"
    return rep


@dataclass
class BenchmarkRecord:
    scenario: str
    backend: str
    operator: str
    size: int
    prepared: bool
    samples: int = 0
    time_ns_min: int = 0
    time_ns_median: int = 0
    allocs: int = 0
    status: str = "skip"
    max_abs_err: float = math.nan
    reason: str = ""

    def row(self):
        err = "" if self.status == "skip" or math.isnan(self.max_abs_err) else repr(self.max_abs_err)
        return [self.scenario, self.backend, self.operator, self.size,
                "true" if self.prepared else "false", self.samples, self.time_ns_min,
                self.time_ns_median, self.allocs, self.status, err]


def bench(scenario, backend, prepared=True, budget_ms=1000.0, samples=100, size=None,
          tolerance=None, warmup=1):
    """Time one operator call.

    ``prepared=True`` times calls that reuse one preparation and write into a
    preallocated output.  ``prepared=False`` times preparation plus call on
    every iteration, which is what a one-off call costs.  Sampling stops at
    ``samples`` runs or when ``budget_ms`` is spent, whichever comes first
    (at least one timed run is always made).

    ``allocs`` is the number of workspace buffers allocated per timed call,
    rounded up.  The result of the last timed call is checked against the
    scenario's reference.
    """
    if isinstance(scenario, str):
        scenario = sc.get(scenario)
    if isinstance(backend, str):
        backend = backend_from_id(backend)
    op = scenario.operator
    case = scenario.instance(size)
    rec = BenchmarkRecord(scenario.name, backend.id, op, case.size, bool(prepared))
    fn = getattr(api, op)
    args = _args(case)
    tol = default_tolerance(scenario, backend) if tolerance is None else float(tolerance)
    try:
        prep = api.prepare(op, case.f, backend, case.x, *case.contexts, seeds=case.seed)
        buf = _buffer(fn(case.f, prep, backend, *args))
    except _SKIP as e:
        rec.reason = type(e).__name__
        return rec
    except Exception as e:  # noqa: BLE001
        rec.status, rec.reason = "fail", f"{type(e).__name__}: {e}"
        return rec

    if prepared:
        def call():
            if buf is not None:
                return fn(case.f, prep, backend, *args, out=buf)
            return fn(case.f, prep, backend, *args)

        def allocated():
            return prep.allocations
    else:
        total = [0]

        def call():
            p = api.prepare(op, case.f, backend, case.x, *case.contexts, seeds=case.seed)
            r = fn(case.f, p, backend, *args)
            total[0] += p.allocations
            return r

        def allocated():
            return total[0]

    try:
        for _ in range(warmup):
            call()
        times = []
        a0 = allocated()
        budget = budget_ms * 1e6
        start = time.perf_counter_ns()
        result = None
        while len(times) < max(1, samples):
            t0 = time.perf_counter_ns()
            result = call()
            t1 = time.perf_counter_ns()
            times.append(t1 - t0)
            if t1 - start >= budget:
                break
        a1 = allocated()
    except Exception as e:  # noqa: BLE001
        rec.status, rec.reason = "fail", f"{type(e).__name__}: {e}"
        return rec
    rec.samples = len(times)
    rec.time_ns_min = int(min(times))
    rec.time_ns_median = int(statistics.median(times))
    rec.allocs = int(math.ceil((a1 - a0) / len(times)))
    rec.max_abs_err = _errors(result, case.expected)[0]
    rec.status = "pass" if rec.max_abs_err <= tol else "fail"
    return rec


@dataclass
class SuiteConfig:
    """What :func:`run_suite` runs.

    ``sizes`` applies to sized scenarios; scalar-input scenarios run once.
    ``prepared`` lists the flags to time (``(True, False)`` for both).  With
    ``mode="check"`` no timing is done and ``prepared`` is ignored.  ``jobs``
    runs cells in parallel threads; timing cells stay sequential unless
    ``parallel_timing`` is set, since contention distorts timings.
    """

    scenarios: list
    backends: list
    sizes: list = None
    prepared: tuple = (True, False)
    out: str = None
    markdown: str = None
    samples: int = 100
    budget_ms: float = 1000.0
    tolerance: float = None
    mode: str = "bench"
    jobs: int = 1
    parallel_timing: bool = False


def _cells(cfg):
    if not cfg.backends:
        raise ConfigError("no backends selected")
    scens = sc.select(cfg.scenarios)
    backs = [backend_from_id(b) if isinstance(b, str) else b for b in cfg.backends]
    if cfg.sizes is not None and not list(cfg.sizes):
        raise ConfigError("empty size list")
    if cfg.mode not in ("bench", "check"):
        raise ConfigError(f"unknown suite mode '{cfg.mode}'")
    if cfg.mode == "bench" and not cfg.prepared:
        raise ConfigError("no prepared flags selected")
    cells = []
    for s in scens:
        sizes = list(cfg.sizes) if cfg.sizes and s.sized else [None]
        for b in backs:
            for n in sizes:
                if cfg.mode == "check":
                    cells.append((s, b, n, None))
                else:
                    cells.extend((s, b, n, p) for p in cfg.prepared)
    return cells


def run_suite(cfg):
    """Run the cross product of scenarios, backends, sizes and prepared flags.

    Returns
    -------
    records : list
        :class:`BenchmarkRecord` (bench mode) or :class:`CheckReport` (check mode).
    status : int
        0 if nothing failed, 1 if any cell failed.
    """
    cells = _cells(cfg)

    def run(cell):
        s, b, n, p = cell
        if cfg.mode == "check":
            return check(s, b, cfg.tolerance, n)
        return bench(s, b, p, cfg.budget_ms, cfg.samples, n, cfg.tolerance)

    parallel = cfg.jobs > 1 and (cfg.mode == "check" or cfg.parallel_timing)
    if parallel:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            records = list(pool.map(run, cells))
    else:
        records = [run(c) for c in cells]
    if cfg.mode == "bench":
        if cfg.out:
            write_csv(records, cfg.out)
        if cfg.markdown:
            with open(cfg.markdown, "w") as fh:
                fh.write(markdown_table(records))
    status = 1 if any(r.status == "fail" for r in records) else 0
    return records, status


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def _fmt_ns(ns):
    if ns >= 1e9:
        return f"{ns / 1e9:.3g} s"
    if ns >= 1e6:
        return f"{ns / 1e6:.3g} ms"
    if ns >= 1e3:
        return f"{ns / 1e3:.3g} µs"
    return f"{ns} ns"


def markdown_table(records):
    head = "| scenario | backend | operator | size | prepared | samples | min | median | allocs | status | max abs err |"
    lines = [head, "|" + "---|" * 11]
    for r in records:
        err = "" if r.status == "skip" or math.isnan(r.max_abs_err) else f"{r.max_abs_err:.2g}"
        lines.append(
            f"| {r.scenario} | {r.backend} | {r.operator} | {r.size} | "
            f"{'yes' if r.prepared else 'no'} | {r.samples} | {_fmt_ns(r.time_ns_min)} | "
            f"{_fmt_ns(r.time_ns_median)} | {r.allocs} | {r.status} | {err} |")
    return "\n".join(lines) + "\n"
