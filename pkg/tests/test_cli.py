import io
import os
import re
import subprocess
import sys

import numpy as np
import pytest

from ccvp import fixtures
from ccvp.certify import load_certificate
from ccvp.cli import run
from ccvp.model import parse_problem

PROBLEMS = os.path.join(os.path.dirname(__file__), os.pardir, "problems")


def problem_path(name):
    return os.path.join(PROBLEMS, name)


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def machine(text):
    pairs = [line.split(" ", 1) for line in text.splitlines()]
    return {k: v for k, v in pairs}


# --- the documented invocations ----------------------------------------------------

def test_example1_verify_akkt_human_report():
    code, out, _ = call("example", "1", "--verify-akkt")
    assert code == 0
    assert "complementarity" in out and "stationarity" in out
    # rows are numbered from 0, so row 998 is k = 1000 with complementarity 2 / 3000
    row = re.search(r"^\s*998\s+(\S+)\s+(\S+)", out, re.M)
    assert float(row.group(1)) <= 1e-12
    assert float(row.group(2)) == pytest.approx(2 / 3000, rel=1e-6)


def test_example1_verify_akkt_machine_values():
    code, out, _ = call("example", "1", "--verify-akkt", "--machine")
    kv = machine(out)
    assert code == 0 and kv["akkt"] == "true"
    assert float(kv["max_stationarity"]) <= 1e-12
    assert float(kv["last_complementarity"]) == pytest.approx(2 / 3000, rel=1e-12)


def test_check_kkt_example1_fails_with_unit_residual():
    code, out, _ = call("check-kkt", problem_path("example1.ccvp"), "--point", "xbar", "--machine")
    kv = machine(out)
    assert code == 1
    assert float(kv["min_residual"]) == pytest.approx(1.0, abs=1e-6)
    assert kv["kkt_holds"] == "false"


def test_cq_example3_with_probe():
    code, out, _ = call("cq", problem_path("example3.ccvp"), "--point", "xbar", "--probe-regularity",
                        "--machine")
    kv = machine(out)
    assert code == 0
    assert kv["rcq"] == "false" and kv["regularity_violation"] == "false"


def test_check_kkt_with_given_multiplier():
    code, out, _ = call("check-kkt", problem_path("example2.ccvp"), "--point", "0,0", "--lambda", "1",
                        "--mu", "1 0 0", "--machine")
    assert code == 0
    assert float(machine(out)["stationarity"]) == 0.0
    code, _, _ = call("check-kkt", problem_path("example2.ccvp"), "--lambda", "1", "--mu", "0 0 0")
    assert code == 1


# --- output format ------------------------------------------------------------------

def test_machine_output_is_sorted_and_full_precision():
    _, out, _ = call("check-kkt", problem_path("example1.ccvp"), "--machine")
    keys = [line.split(" ", 1)[0] for line in out.splitlines()]
    assert keys == sorted(keys)
    for value in machine(out)["mu"].split():
        assert float(value) == float("%.17g" % float(value))
        assert value == "%.17g" % float(value)


def test_machine_output_is_reproducible():
    a = call("example", "1", "--cq", "--probe-regularity", "--machine")
    b = call("example", "1", "--cq", "--probe-regularity", "--machine")
    assert a == b


def test_example_without_flags_prints_parseable_problem():
    for i in (1, 2, 3):
        code, out, _ = call("example", i)
        ref, _ = fixtures.run_example(i)
        prob = parse_problem(out)
        assert code == 0
        assert prob.objectives == ref.objectives and prob.constraints == ref.constraints
        assert prob.cone == ref.cone


def test_problem_files_match_the_fixtures():
    for i in (1, 2, 3):
        ref, _ = fixtures.run_example(i)
        with open(problem_path(f"example{i}.ccvp"), encoding="utf-8") as fh:
            prob = parse_problem(fh.read())
        assert prob.constraints == ref.constraints and prob.cone == ref.cone


# --- seeds --------------------------------------------------------------------------

def test_seed_flag_and_environment(monkeypatch):
    args = ("cq", problem_path("example1.ccvp"), "--probe-regularity", "--machine")
    monkeypatch.delenv("CCVP_SEED", raising=False)
    assert machine(call(*args)[1])["probe_seed"] == "42"
    monkeypatch.setenv("CCVP_SEED", "7")
    env_run = machine(call(*args)[1])
    assert env_run["probe_seed"] == "7"
    flag_run = machine(call(*args, "--seed", "7")[1])
    assert flag_run == env_run
    assert machine(call(*args, "--seed", "9")[1])["probe_seed"] == "9"
    monkeypatch.setenv("CCVP_SEED", "abc")
    assert call(*args)[0] == 2


# --- generate and verify round trip -------------------------------------------------

def test_generate_writes_a_certificate_that_verifies(tmp_path):
    prob_file = tmp_path / "convex.ccvp"
    prob_file.write_text(fixtures.convex_biobjective().to_text())
    cert_file = tmp_path / "convex.cert"
    code, out, _ = call("generate", prob_file, "--lambda", "0.5,0.5", "--point", "0,0", "--out", cert_file,
                        "--machine")
    assert code == 0 and machine(out)["akkt"] == "true"
    cert = load_certificate(str(cert_file))
    np.testing.assert_allclose(cert.limit, [1.0, 0.0], atol=1e-9)
    code, out, _ = call("verify-akkt", prob_file, "--cert", cert_file, "--machine")
    assert code == 0 and machine(out)["akkt"] == "true"


def test_generate_example1_reports_failure_at_tight_tolerance():
    code, out, _ = call("generate", problem_path("example1.ccvp"), "--point", "1.2,0.1", "--machine")
    kv = machine(out)
    assert code == 1 and kv["bakkt"] == "false"


# --- errors ---------------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["example", "4"],
    ["example", "1", "--verify-akkt", "--cq"],
    ["example", "3", "--verify-akkt"],
    ["check-kkt", "no-such-file.ccvp"],
    ["check-kkt", "problems/example1.ccvp", "--point", "1,2,3"],
    ["check-kkt", "problems/example1.ccvp", "--point", "nowhere"],
    ["check-kkt", "problems/example1.ccvp", "--lambda", "0.5,0.5"],
    ["check-kkt", "problems/example1.ccvp", "--tol", "-1"],
    ["cq", "problems/example2.ccvp", "--point", "-1,0"],
    ["verify-akkt", "problems/example1.ccvp"],
    ["generate", "problems/example1.ccvp", "--gamma", "abc"],
])
def test_usage_errors_exit_2_with_one_line(argv):
    argv = [a.replace("problems/", PROBLEMS + os.sep) for a in argv]
    code, out, err = call(*argv)
    assert code == 2 and out == ""
    assert err.startswith("ccvp: error: ") and err.count("\n") == 1


def test_parse_error_reports_line_and_column(tmp_path):
    bad = tmp_path / "bad.ccvp"
    bad.write_text("vars x1 x2\nobjective x1 + y\nconstraint x1\ncone orthant 1\n")
    code, _, err = call("check-kkt", bad)
    assert code == 2
    assert "line 2, column 16" in err


def test_bad_certificate_file_is_usage_error(tmp_path):
    cert = tmp_path / "bad.cert"
    cert.write_text("lambda 0.5 0.5\nlimit 1 0\nstep 1 0 ; 0 0\n")
    code, _, err = call("verify-akkt", problem_path("example1.ccvp"), "--cert", cert)
    assert code == 2 and err.startswith("ccvp: error: ")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ccvp", "example", "2", "--check-kkt", "--machine"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert machine(proc.stdout)["kkt_holds"] == "true"
