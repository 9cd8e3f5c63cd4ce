import csv
import subprocess
import sys
import textwrap

import numpy as np
import pytest

import adkit
from adkit.harness import cli, runner
from adkit.harness import scenarios as sc
from adkit.harness.reference import ORACLE_STEP, central_jacobian, evaluate, oracle
from oracles import fd_hessian

WRONG = textwrap.dedent("""
    import adkit.numpy as anp
    from adkit.harness.scenarios import Scenario

    SCENARIOS = [Scenario("wrong_sqnorm", "gradient", lambda x: anp.sum(x * x),
                          reference=lambda x, seed: 3.0 * x, default_size=5)]
""")


@pytest.fixture
def registry():
    saved = dict(sc.SCENARIOS)
    yield sc.SCENARIOS
    sc.SCENARIOS.clear()
    sc.SCENARIOS.update(saved)


@pytest.fixture
def wrong_module(tmp_path):
    path = tmp_path / "wrong.py"
    path.write_text(WRONG)
    return str(path)


# scenarios and references


def test_builtin_scenarios_cover_all_operators():
    ops = {s.operator for s in sc.SCENARIOS.values()}
    assert ops == set(adkit.OPERATORS)
    for name in ["sqnorm_gradient", "stencil_jacobian", "quadform_gradient", "inplace_stencil_jacobian",
                 "branchy_gradient"]:
        assert name in sc.SCENARIOS
    assert any(isinstance(c, adkit.Constant) for c in sc.get("quadform_gradient").instance().contexts)
    assert any(isinstance(c, adkit.Cache) for c in sc.get("inplace_stencil_jacobian").instance().contexts)


@pytest.mark.parametrize("name", sorted(sc.SCENARIOS))
def test_references_match_finite_differences(name):
    # closed-form references are checked against the backend-free oracle
    s = sc.SCENARIOS[name]
    if s.reference == "finite_difference":
        pytest.skip("reference is the oracle itself")
    case = s.instance(6 if s.sized else None)
    f = lambda z: float(evaluate(case.f, z, case.contexts))
    if s.operator == "hessian":
        got = fd_hessian(f, case.x)
    elif s.operator == "hvp":
        got = fd_hessian(f, case.x) @ case.seed
    elif s.operator == "second_derivative":
        h = 1e-4
        got = (f(case.x + h) - 2 * f(case.x) + f(case.x - h)) / h ** 2
    else:
        got = oracle(s.operator, case.f, case.x, case.contexts, case.seed)
    np.testing.assert_allclose(got, case.expected, atol=1e-5)


def test_oracle_step_and_exactness():
    assert ORACLE_STEP == 6.06e-6
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(central_jacobian(lambda x: A @ x, np.array([0.5, -0.25])), A, atol=1e-9)


def test_unknown_scenario_is_config_error():
    with pytest.raises(adkit.ConfigError):
        sc.get("nope")
    with pytest.raises(adkit.ConfigError):
        sc.select([])


# check


def test_check_sqnorm_dual_exact():
    r = runner.check("sqnorm_gradient", "dual", tolerance=1e-10)
    assert r.status == "pass" and r.max_abs_err == 0.0
    assert set(r.variants) == {"plain", "out", "value_and", "value_and_out"}


def test_check_fd_tolerance_boundary():
    assert runner.check("sqnorm_gradient", "fd", tolerance=1e-10).status == "fail"
    assert runner.check("sqnorm_gradient", "fd", tolerance=1e-5).status == "pass"


def test_check_skips_pullback_on_forward():
    r = runner.check("polymap_pullback", "dual")
    assert r.status == "skip" and r.reason == "UnsupportedOperator"


def test_check_default_tolerances():
    assert runner.check("sqnorm_gradient", "tape").tolerance == runner.AD_TOLERANCE
    assert runner.check("sqnorm_gradient", "fd").tolerance == runner.FD_TOLERANCE


def test_check_every_builtin_passes_or_skips():
    for name in sc.SCENARIOS:
        for b in ["dual", "tape", "fd", "mixed", "sparse-dual"]:
            r = runner.check(name, b)
            assert r.status in ("pass", "skip"), r.line()


def test_check_is_deterministic():
    for name in ["stencil_jacobian", "quartic_hessian", "curve_derivative"]:
        a = runner.check(name, "tape")
        b = runner.check(name, "tape")
        assert (a.status, a.max_abs_err, a.variants) == (b.status, b.max_abs_err, b.variants)


def test_wrong_reference_fails(registry, wrong_module):
    sc.load_module(wrong_module)
    assert runner.check("wrong_sqnorm", "tape").status == "fail"


# bench


def test_tape_preparation_pays_off():
    fast = runner.bench("sqnorm_gradient", "tape", True, budget_ms=300, samples=30, size=1000)
    slow = runner.bench("sqnorm_gradient", "tape", False, budget_ms=300, samples=5, size=1000)
    assert fast.status == slow.status == "pass"
    assert fast.time_ns_median < slow.time_ns_median


def test_dual_prepared_does_not_allocate():
    rec = runner.bench("sqnorm_gradient", "dual", True, budget_ms=300, samples=20, size=100)
    assert rec.allocs == 0 and rec.status == "pass"


def test_fd_preparation_is_trivial():
    a = runner.bench("sqnorm_gradient", "fd", True, budget_ms=500, samples=30, size=200)
    b = runner.bench("sqnorm_gradient", "fd", False, budget_ms=500, samples=30, size=200)
    ratio = a.time_ns_median / b.time_ns_median
    assert 0.5 <= ratio <= 2.0


def test_bench_respects_budget_and_samples():
    rec = runner.bench("sqnorm_gradient", "tape", True, budget_ms=1e9, samples=7, size=10)
    assert rec.samples == 7
    rec = runner.bench("sqnorm_gradient", "tape", False, budget_ms=0.0, samples=100, size=10)
    assert rec.samples == 1
    assert rec.time_ns_min <= rec.time_ns_median


def test_bench_skip_row():
    rec = runner.bench("polymap_pullback", "dual", True, budget_ms=10)
    assert rec.status == "skip"
    assert rec.row()[-1] == ""


# suites


def test_suite_config_errors():
    with pytest.raises(adkit.ConfigError):
        runner.run_suite(runner.SuiteConfig(["sqnorm_gradient"], []))
    with pytest.raises(adkit.ConfigError):
        runner.run_suite(runner.SuiteConfig(["sqnorm_gradient"], ["nope"]))
    with pytest.raises(adkit.ConfigError):
        runner.run_suite(runner.SuiteConfig(["nope"], ["dual"]))
    with pytest.raises(adkit.ConfigError):
        runner.run_suite(runner.SuiteConfig(["sqnorm_gradient"], ["dual"], sizes=[]))


def test_suite_csv_schema(tmp_path):
    out, md = tmp_path / "r.csv", tmp_path / "r.md"
    cfg = runner.SuiteConfig(["sqnorm_gradient", "curve_derivative"], ["dual", "tape"], sizes=[10, 20],
                             out=str(out), markdown=str(md), samples=3, budget_ms=50)
    records, status = runner.run_suite(cfg)
    assert status == 0
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == runner.CSV_COLUMNS
    assert tuple(rows[0]) == ("scenario", "backend", "operator", "size", "prepared", "samples", "time_ns_min",
                              "time_ns_median", "allocs", "status", "max_abs_err")
    # sized: 2 backends x 2 sizes x 2 flags; scalar: 2 backends x 2 flags
    assert len(rows) - 1 == len(records) == 12
    for r in rows[1:]:
        assert r[4] in ("true", "false") and r[9] in ("pass", "fail", "skip")
        int(r[3]), int(r[5]), int(r[6]), int(r[7]), int(r[8])
    assert md.read_text().startswith("| scenario |")


def test_suite_check_mode_parallel():
    cfg = runner.SuiteConfig(["all"], ["dual", "tape"], mode="check", jobs=4)
    records, status = runner.run_suite(cfg)
    seq, _ = runner.run_suite(runner.SuiteConfig(["all"], ["dual", "tape"], mode="check"))
    assert status == 0
    assert [(r.scenario, r.status, r.max_abs_err) for r in records] == \
        [(r.scenario, r.status, r.max_abs_err) for r in seq]


def test_suite_wrong_reference_status(registry, wrong_module):
    sc.load_module(wrong_module)
    _, status = runner.run_suite(runner.SuiteConfig(["wrong_sqnorm"], ["dual"], mode="check"))
    assert status == 1


# CLI


def test_cli_check_ok(capsys):
    assert cli.main(["check", "--scenarios", "sqnorm_gradient,stencil_jacobian", "--backends", "dual,tape"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4


def test_cli_config_errors(tmp_path, capsys):
    assert cli.main(["check", "--scenarios", "nope"]) == 2
    assert cli.main(["check", "--backends", ""]) == 2
    assert cli.main(["bench", "--sizes", "a,b", "--out", str(tmp_path / "x.csv")]) == 2
    assert cli.main(["check", "--scenario-module", str(tmp_path / "missing.py")]) == 2
    assert "adkit:" in capsys.readouterr().err


def test_cli_wrong_reference_exit_1(registry, wrong_module):
    assert cli.main(["check", "--scenarios", "wrong_sqnorm", "--backends", "tape",
                     "--scenario-module", wrong_module]) == 1


def test_cli_bench_writes_csv(tmp_path):
    out = tmp_path / "b.csv"
    code = cli.main(["bench", "--scenarios", "sqnorm_gradient", "--backends", "dual,fd", "--sizes", "10",
                     "--prepared", "true", "--samples", "3", "--budget-ms", "20", "--out", str(out)])
    assert code == 0
    assert len(list(csv.reader(out.open()))) == 3


def test_cli_pattern_matches_golden(tmp_path):
    from pathlib import Path

    out, col = tmp_path / "p.txt", tmp_path / "c.txt"
    assert cli.main(["pattern", "--scenario", "stencil_jacobian", "--size", "8", "--out", str(out),
                     "--coloring", str(col)]) == 0
    golden = Path(__file__).parent / "golden"
    assert out.read_text() == (golden / "stencil8_pattern.txt").read_text()
    assert col.read_text() == (golden / "stencil8_coloring.txt").read_text()


def test_cli_pattern_hessian(tmp_path):
    out = tmp_path / "h.txt"
    assert cli.main(["pattern", "--scenario", "quartic_hessian", "--size", "6", "--out", str(out)]) == 0
    p = adkit.sparse.SparsityPattern.load(out)
    assert p.is_symmetric() and p.nnz == 6 + 2 * 5


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "adkit", "check", "--scenarios", "sqnorm_gradient",
                        "--backends", "tape"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert r.stdout.startswith("PASS")
