import json
import math
import subprocess
import sys
import textwrap
from fractions import Fraction

import pytest

from liouville.cli import (
    ProblemSpec,
    SpecError,
    load_spec,
    main,
    parse_pi_multiple,
    render_json,
)

CROSS_TOML = """
[matrix]
entries = [["0", "2"], ["2", "0"]]
"""


def write_spec(tmp_path, body, name="problem.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return str(path)


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out


def test_parse_pi_multiple_forms():
    for text, value in (
        ("2pi", 2),
        ("3/2 pi", Fraction(3, 2)),
        ("1.5*pi", Fraction(3, 2)),
        ("pi", 1),
        ("2", 2),
    ):
        assert parse_pi_multiple(text, "x") == value
    with pytest.raises(SpecError):
        parse_pi_multiple("two pi", "x")


def test_render_json_is_deterministic_and_exact():
    payload = {"a": Fraction(3, 2), "b": [True, None, 0.1], "c": 3}
    text = render_json(payload)
    assert '"a": "3/2"' in text
    assert "0.10000000000000001" in text
    assert text == render_json(payload)
    assert json.loads(text) == {
        "a": "3/2",
        "b": [True, None, 0.1],
        "c": 3,
    }


def test_degree_command(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [topology]
        kind = "closed_surface"
        genus = 1

        [profile]
        points = [[0.5, 0.5]]
        strengths = ["3"]

        [rho]
        values = ["6pi", "6pi"]
        """,
    )
    code, out = run_cli(["degree", "--spec", spec], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["degree"] == 2
    assert payload["region"] == 1
    assert payload["ratio_over_8pi"] == "3/2"
    assert payload["coefficients"] == [1, 1]
    assert payload["bounds_over_8pi"] == ["1", "2"]


def test_spectrum_command_partial_sums(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [topology]
        kind = "closed_surface"
        genus = 1

        [profile]
        strengths = ["1", "1"]

        [spectrum]
        cutoff = "3"
        """,
    )
    code, out = run_cli(["spectrum", "--spec", spec], capsys)
    assert code == 0
    rows = json.loads(out)
    assert [r["n"] for r in rows] == ["1", "2", "3"]
    assert [r["b"] for r in rows] == [2, 1, 0]
    assert [r["partial_sum"] for r in rows] == [3, 4, 4]


def test_spectrum_cutoff_override_fractional(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [topology]
        kind = "closed_surface"
        genus = 1

        [profile]
        strengths = ["1/2"]

        [spectrum]
        cutoff = "1"
        """,
    )
    code, out = run_cli(["spectrum", "--spec", spec, "--cutoff", "3"], capsys)
    assert code == 0
    rows = json.loads(out)
    assert [r["n"] for r in rows] == ["1", "3/2", "2", "5/2", "3"]
    assert [r["b"] for r in rows] == [1, -1, 1, -1, 1]
    assert [r["partial_sum"] for r in rows] == [2, 1, 2, 1, 2]


def test_classify_command(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [profile]
        strengths = ["1"]

        [rho]
        values = ["2pi", "3pi"]
        """,
    )
    code, out = run_cli(["classify", "--spec", spec], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["region"] == 0
    assert payload["ratio_over_8pi"] == "3/5"
    assert payload["Q_over_pi2"] == "24"
    assert payload["L_over_pi"] == "5"
    assert payload["ratio"] == pytest.approx(8 * math.pi * 0.6)


def test_classify_on_critical_set_exit_code(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [profile]
        strengths = ["1"]

        [rho]
        values = ["4pi", "4pi"]
        """,
    )
    code, out = run_cli(["classify", "--spec", spec], capsys)
    assert code == 2
    payload = json.loads(out)
    assert payload["kind"] == "OnCriticalSet"
    assert payload["index"] == 1
    assert payload["value_over_8pi"] == "1"


def test_symmetrize_command(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        """
        [matrix]
        entries = [["1", "3"], ["2", "2"]]
        """,
    )
    code, out = run_cli(["symmetrize", "--spec", spec], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["b11"] == "3/2"
    assert payload["b12"] == "3"
    assert payload["b22"] == "2"
    assert payload["ratio"] == "2/3"
    assert payload["shift"] == pytest.approx(math.log(2 / 3))


def test_zero_rho_is_a_parse_error(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [rho]
        values = ["0", "0"]
        """,
    )
    code, out = run_cli(["classify", "--spec", spec], capsys)
    assert code == 1
    payload = json.loads(out)
    assert payload["kind"] == "ParseError"
    assert payload["field"] == "rho.values"


def test_missing_matrix_names_the_field(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        """
        [topology]
        kind = "closed_surface"
        genus = 1
        """,
    )
    code, out = run_cli(["degree", "--spec", spec], capsys)
    assert code == 1
    assert json.loads(out)["field"] == "matrix"


def test_unknown_section_is_rejected(tmp_path, capsys):
    spec = write_spec(tmp_path, CROSS_TOML + "\n[extras]\nfoo = 1\n")
    code, out = run_cli(["symmetrize", "--spec", spec], capsys)
    assert code == 1
    assert json.loads(out)["field"] == "extras"


def test_float_strength_is_rejected_with_advice(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [profile]
        strengths = [1.5]
        """,
    )
    code, out = run_cli(["symmetrize", "--spec", spec], capsys)
    assert code == 1
    payload = json.loads(out)
    assert payload["field"] == "profile.strengths[0]"
    assert "string" in payload["message"]


def test_invalid_toml_reports_file_error(tmp_path, capsys):
    spec = tmp_path / "broken.toml"
    spec.write_text("not = [toml\n")
    code, out = run_cli(["classify", "--spec", str(spec)], capsys)
    assert code == 1
    assert json.loads(out)["field"] == "<file>"
    with pytest.raises(SpecError):
        load_spec(str(spec))


def test_missing_spec_file(tmp_path, capsys):
    code, out = run_cli(["classify", "--spec", str(tmp_path / "nope.toml")], capsys)
    assert code == 1
    assert json.loads(out)["kind"] == "ParseError"


SOLVE_TOML = (
    CROSS_TOML
    + """
[profile]
points = [[0.5, 0.5]]
strengths = ["1"]

[rho]
values = ["2pi", "2pi"]

[solver]
grid = 32
"""
)


def test_solve_command_payload(tmp_path, capsys):
    spec = write_spec(tmp_path, SOLVE_TOML)
    code, out = run_cli(["solve", "--spec", spec], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["converged"] is True
    assert payload["residual"] < 1e-9
    assert payload["region"] == 0
    assert len(payload["max_u"]) == 2
    assert payload["rank"]["kind"] == "full_rank"
    masses = payload["local_masses"]
    assert len(masses) == 1
    assert masses[0]["strength"] == "1"
    assert 0 < masses[0]["sigma1"] < 2.0
    assert isinstance(payload["energy"], float)


def test_solve_output_is_byte_identical(tmp_path, capsys):
    spec = write_spec(tmp_path, SOLVE_TOML)
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    assert main(["solve", "--spec", spec, "--out", str(first)]) == 0
    assert main(["solve", "--spec", spec, "--out", str(second)]) == 0
    capsys.readouterr()
    assert first.read_bytes() == second.read_bytes()


def test_solve_fields_dir(tmp_path, capsys):
    spec = write_spec(tmp_path, SOLVE_TOML)
    out_dir = tmp_path / "fields"
    code, out = run_cli(
        ["solve", "--spec", spec, "--fields-dir", str(out_dir)], capsys
    )
    assert code == 0
    payload = json.loads(out)
    names = ["u1.csv", "u2.csv", "ustar1.csv", "ustar2.csv", "h1.csv", "h2.csv"]
    assert payload["fields_written"] == names
    for name in names:
        lines = (out_dir / name).read_text().splitlines()
        assert lines[0] == "x1,x2,value"
        assert len(lines) == 1 + 32 * 32


def test_solve_csv_format(tmp_path, capsys):
    spec = write_spec(tmp_path, SOLVE_TOML)
    code, out = run_cli(["solve", "--spec", spec, "--format", "csv"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "key,value"
    keys = {line.split(",")[0] for line in lines[1:]}
    assert "converged" in keys
    assert "max_u[0]" in keys or "max_u" in keys


def test_solve_rejects_non_torus_topology(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        SOLVE_TOML
        + """
        [topology]
        kind = "closed_surface"
        genus = 2
        """,
    )
    code, out = run_cli(["solve", "--spec", spec], capsys)
    assert code == 1
    assert json.loads(out)["field"] == "topology"


def test_solve_nonconvergence_exit_code(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [profile]
        strengths = ["1"]

        [rho]
        values = ["2pi", "2pi"]

        [solver]
        grid = 32
        max_iter = 1
        use_newton = false
        """,
    )
    code, out = run_cli(["solve", "--spec", spec], capsys)
    assert code == 3
    payload = json.loads(out)
    assert payload["kind"] == "NonConvergence"
    assert payload["residual"] > 0


def test_solve_on_critical_rho_exit_code(tmp_path, capsys):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [profile]
        strengths = ["1"]

        [rho]
        values = ["4pi", "4pi"]

        [solver]
        grid = 32
        """,
    )
    code, out = run_cli(["solve", "--spec", spec], capsys)
    assert code == 2
    assert json.loads(out)["kind"] == "OnCriticalSet"


SWEEP_TOML = (
    CROSS_TOML
    + """
[profile]
strengths = ["1"]

[solver]
grid = 32

[sweep]
start = ["1pi", "1pi"]
stop = ["1.2pi", "1.2pi"]
steps = 3
"""
)


def test_sweep_csv_output(tmp_path, capsys):
    spec = write_spec(tmp_path, SWEEP_TOML)
    code, out = run_cli(["sweep", "--spec", spec], capsys)
    assert code == 0
    lines = out.splitlines()
    assert (
        lines[0]
        == "t,rho1,rho2,region,converged,residual,max_u1,max_u2,J,sigma_11,sigma_21"
    )
    assert len(lines) == 4
    assert all(line.split(",")[4] == "true" for line in lines[1:])


def test_sweep_json_output(tmp_path, capsys):
    spec = write_spec(tmp_path, SWEEP_TOML)
    code, out = run_cli(["sweep", "--spec", spec, "--format", "json"], capsys)
    assert code == 0
    rows = json.loads(out)
    assert [r["t"] for r in rows] == ["0", "1/2", "1"]
    assert rows[0]["rho"][0] == pytest.approx(math.pi)
    assert all(r["converged"] for r in rows)
    assert all(r["region"] == 0 for r in rows)


def test_spec_round_trip(tmp_path):
    spec_path = write_spec(
        tmp_path,
        """
        [matrix]
        entries = [["1", "3"], ["2", "2"]]

        [topology]
        kind = "closed_surface"
        genus = 1

        [profile]
        points = [[0.25, 0.25], [0.75, 0.5]]
        strengths = ["1", "1/2"]

        [rho]
        values = ["2pi", "1pi"]

        [spectrum]
        cutoff = "5/2"

        [hstar]
        h1 = "1 + 0.5*cos(2*pi*x1)"
        h2 = "1"

        [solver]
        grid = 32
        tol = 1e-8

        [sweep]
        start = ["1pi", "1pi"]
        stop = ["2pi", "2pi"]
        steps = 5
        """,
    )
    spec = load_spec(spec_path)
    again = ProblemSpec.from_dict(spec.to_dict())
    assert again == spec
    assert spec.solve_config().n == 32
    assert spec.solve_config(grid_override=64).n == 64


def test_module_invocation(tmp_path):
    spec = write_spec(
        tmp_path,
        CROSS_TOML
        + """
        [topology]
        kind = "closed_surface"
        genus = 1

        [profile]
        strengths = ["3"]

        [rho]
        values = ["6pi", "6pi"]
        """,
    )
    proc = subprocess.run(
        [sys.executable, "-m", "liouville", "degree", "--spec", spec],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["degree"] == 2
