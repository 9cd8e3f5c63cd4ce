"""Scenarios, correctness checks, benchmarks and the ``adkit`` command."""

from adkit.harness.reference import central_jacobian, oracle
from adkit.harness.runner import (CSV_COLUMNS, BenchmarkRecord, CheckReport, SuiteConfig, bench,
                                  check, markdown_table, run_suite, write_csv)
from adkit.harness.scenarios import SCENARIOS, Scenario, get, load_module, register

__all__ = [
    "Scenario", "SCENARIOS", "register", "get", "load_module", "oracle", "central_jacobian",
    "check", "bench", "run_suite", "SuiteConfig", "CheckReport", "BenchmarkRecord",
    "CSV_COLUMNS", "write_csv", "markdown_table",
]
