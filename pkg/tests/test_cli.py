import itertools
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from bnfinv import cli
from bnfinv.observables import trace_samples
from bnfinv.phasepoly import PhasePoly


def run_cli(tmp_path, command, doc, *flags):
    src = tmp_path / f"{command}_in.json"
    out = tmp_path / f"{command}_out.json"
    src.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    status = cli.main([command, "--input", str(src), "--output", str(out), *flags])
    return status, json.loads(out.read_text()), out.read_text()


def test_roundtrip_bundled_example(tmp_path):
    out = tmp_path / "report.json"
    assert cli.main(["roundtrip", "--input", "builtin:cubic_well", "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["errors"]["max_rel_error"] <= 1e-8
    assert report["schema_version"] == cli.SCHEMA_VERSION
    assert "homological_residual" in report["forward_diagnostics"]["truncation"]


def test_bnf_of_harmonic_part(tmp_path):
    doc = {"setting": "well", "n": 2, "theta": [1.0, math.sqrt(2.0)], "E": 0.5, "order": 6}
    status, report, _ = run_cli(tmp_path, "bnf", doc)
    assert status == 0
    h = {(tuple(r["l"]), r["s"], r["p"]): r["re"] for r in report["h"]}
    assert h == {((0, 0), 0, 0): 0.5, ((1, 0), 0, 0): 1.0, ((0, 1), 0, 0): math.sqrt(2.0)}
    assert all(recs == [] for recs in report["generators"].values())


def test_freqs_three_frequencies(tmp_path):
    theta = [1.0, math.sqrt(2.0), math.sqrt(3.0)]
    levels = sorted(0.01 * sum(t * (m + 0.5) for t, m in zip(theta, mu))
                    for mu in itertools.product(range(10), repeat=3))[:300]
    status, report, _ = run_cli(tmp_path, "freqs", {"levels": levels, "hbar": 0.01, "n": 3})
    assert status == 0
    assert np.max(np.abs(np.array(report["theta"]) - theta)) < 1e-9


def test_output_is_deterministic(tmp_path):
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    for path in (first, second):
        assert cli.main(["melem", "--input", "builtin:cubic_well", "--output", str(path)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_floats_use_seventeen_digits():
    assert cli.dumps({"b": 0.1, "a": [1, 2.0]}) == '{"a": [1, 2.0], "b": 0.10000000000000001}\n'
    assert json.loads(cli.dumps({"x": 1 / 3}))["x"] == 1 / 3


def test_avg_then_invert_general(tmp_path, rng):
    terms = PhasePoly(2, {(0, (2, 0), (1, 0), 0, 0): 0.05, (0, (1, 0), (2, 0), 0, 0): 0.05,
                          (0, (0, 1), (1, 1), 0, 0): -0.03, (0, (1, 1), (0, 1), 0, 0): -0.03})
    doc = {"setting": "well", "n": 2, "theta": [1.0, math.sqrt(2.0)], "order": 4, "terms": terms.to_records()}
    status, forward, text = run_cli(tmp_path, "avg", doc)
    assert status == 0
    status, report, _ = run_cli(tmp_path, "invert", text)
    assert status == 0
    recovered = PhasePoly.from_records(2, report["coefficients"])
    assert (recovered - terms).max_abs() < 1e-12


def test_parse_error(tmp_path):
    status, report, _ = run_cli(tmp_path, "bnf", "{not json")
    assert status == cli.EXIT_PARSE
    assert report["error"]["type"] == "ParseError"
    status, _, _ = run_cli(tmp_path, "bnf", {"setting": "well"})
    assert status == cli.EXIT_PARSE
    status, _, _ = run_cli(tmp_path, "bnf", {"theta": [1.0]}, "--tol", "2")
    assert status == cli.EXIT_PARSE


def test_small_divisor_exit(tmp_path):
    terms = PhasePoly(2, {(0, (2, 0), (0, 1), 0, 0): 0.1, (0, (0, 1), (2, 0), 0, 0): 0.1})
    doc = {"setting": "well", "n": 2, "theta": [1.0, 2.0], "order": 4, "terms": terms.to_records()}
    status, report, _ = run_cli(tmp_path, "bnf", doc)
    assert status == cli.EXIT_SMALL_DIVISOR
    assert report["error"]["order"] == 3
    assert report["error"]["key"]["j"] in ([2, 0], [0, 1])


def test_rank_deficiency_exit(tmp_path):
    theta = [1.0, math.sqrt(2.0)]
    samples = trace_samples({((0, 0), 1, 0): 1.0}, theta, range(1, 40), 1)
    doc = {"theta": theta, "order": 1, "nu_terms": True,
           "samples": [{"p": p, "l": l, "re": v.real, "im": v.imag} for (p, l), v in samples.items()]}
    status, report, _ = run_cli(tmp_path, "unmix", doc)
    assert status == cli.EXIT_RANK
    assert report["error"]["keys"]
    doc["nu_terms"] = False
    status, report, _ = run_cli(tmp_path, "unmix", doc)
    assert status == 0
    b = {(tuple(r["k"]), r["m"], r["s"]): r["re"] for r in report["b"]}
    assert abs(b[((1, 0), 0, 0)] - 1.0) < 1e-10 and abs(b[((0, 1), 0, 0)] - math.sqrt(2.0)) < 1e-10


def test_residual_exit(tmp_path):
    out = tmp_path / "fwd.json"
    assert cli.main(["avg", "--input", "builtin:cubic_well", "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    doc["averages"]["mnp:1:0:0"].append({"l": [0], "s": 0, "p": 0, "re": 0.3, "im": 0.0})
    status, report, _ = run_cli(tmp_path, "invert", doc)
    assert status == cli.EXIT_RESIDUAL
    assert report["error"]["type"] == "ResidualError"


def test_fermi_loop_and_matrix(tmp_path):
    doc = {"loop": {"S0": np.eye(2).tolist(), "rates": [1.0]}}
    status, report, _ = run_cli(tmp_path, "fermi", doc, "--grid", "64")
    assert status == 0
    assert np.max(np.abs(np.array(report["theta_dot"]) - 2 * np.pi)) < 1e-8
    A = np.diag([2.0, 3.0, 0.5, 1.5])
    status, report, _ = run_cli(tmp_path, "fermi", {"setting": "well", "hessian": A.tolist(), "order": 3})
    assert status == 0
    assert np.allclose(sorted(report["williamson"]["lambda"]), sorted([1.0, math.sqrt(4.5)]))


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "bnfinv.cli", "freqs", "--input", "-"],
                          input=json.dumps({"levels": [0.5, 1.5, 2.5], "hbar": 1.0, "n": 1}),
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["theta"] == [1.0]


def test_missing_input_flag():
    with pytest.raises(SystemExit) as info:
        cli.main(["bnf"])
    assert info.value.code == cli.EXIT_PARSE
