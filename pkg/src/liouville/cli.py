"""Command line front end.

Problems are described in TOML files with the sections

    [matrix]    entries = [["0", "2"], ["2", "0"]]
    [topology]  kind = "closed_surface"; genus = 1
    [profile]   points = [[0.5, 0.5]]; strengths = ["1"]
    [rho]       values = ["2pi", "2pi"]
    [spectrum]  cutoff = "3"
    [hstar]     h1 = "1"; h2 = "1"
    [solver]    grid = 128; tol = 1e-9; ...
    [sweep]     start = ["1pi", "1pi"]; stop = ["3pi", "3pi"]; steps = 10

Matrix entries, strengths and cutoffs are rational strings ("3/2",
"1.5", "2") so that classification stays exact; rho components are
multiples of pi written as "2pi", "3/2pi" or a bare multiplier.
Intensities h1, h2 are expressions in x1, x2 (sin, cos, exp, log, sqrt,
abs, pi, e are available).

Every command reads --spec, writes JSON (sweeps: CSV) to --out or
stdout, and renders floats with 17 significant digits and rationals as
"p/q" strings, so identical inputs produce byte-identical output.
Exit codes: 0 success, 1 invalid input, 2 parameter on the critical
set, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from typing import Any, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from .coupling import (
    CouplingMatrix,
    HypothesisError,
    InvalidRhoError,
    RhoVector,
    SingularMatrixError,
    quadratic_form,
    linear_form,
    rank_class,
    symmetrize,
)
from .counting import (
    OnCriticalSetError,
    SingularProfile,
    Topology,
    classify,
    enumerate_spectrum,
    expand_series,
)
from .fields import TorusGrid, export_csv
from .solver import (
    NonConvergenceError,
    SolveConfig,
    energy,
    linear_rho_path,
    local_masses,
    reconstruct_original,
    solve,
    sweep,
    sweep_csv,
)

__all__ = ["main", "ProblemSpec", "SpecError", "render_json"]


class SpecError(Exception):
    """A problem description is missing or malformed; names the field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(message)


def parse_rational(text: Any, field: str) -> Fraction:
    if isinstance(text, float):
        raise SpecError(
            field, f"{text!r} is a float; write it as a string like '3/2' to stay exact"
        )
    try:
        return Fraction(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise SpecError(field, f"cannot parse rational from {text!r}: {exc}") from None


def parse_pi_multiple(text: Any, field: str) -> Fraction:
    """Parse '2pi', '3/2 pi', '1.5*pi', 'pi', or a bare multiplier of pi."""
    s = str(text).strip()
    for suffix in ("pi", "π"):
        if s.endswith(suffix):
            s = s[: -len(suffix)].rstrip()
            if s.endswith("*"):
                s = s[:-1].rstrip()
            if s == "":
                s = "1"
            break
    return parse_rational(s, field)


def format_pi_multiple(value: Fraction) -> str:
    return f"{value}pi"


_INTENSITY_NAMES = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "pi": math.pi,
    "e": math.e,
}


def evaluate_intensity(expression: str, grid: TorusGrid, field: str) -> np.ndarray:
    """Evaluate an h* expression in x1, x2 on the grid."""
    x1, x2 = grid.coords()
    names = dict(_INTENSITY_NAMES)
    names["x1"] = x1
    names["x2"] = x2
    try:
        value = eval(  # noqa: S307 - restricted namespace, no builtins
            compile(expression, f"<{field}>", "eval"), {"__builtins__": {}}, names
        )
    except Exception as exc:
        raise SpecError(field, f"cannot evaluate {expression!r}: {exc}") from None
    try:
        return np.broadcast_to(
            np.asarray(value, dtype=np.float64), (grid.n, grid.n)
        ).copy()
    except Exception as exc:
        raise SpecError(field, f"{expression!r} is not a scalar field: {exc}") from None


@dataclass(frozen=True)
class SweepPath:
    start: RhoVector
    stop: RhoVector
    steps: int


_SECTIONS = ("matrix", "topology", "profile", "rho", "spectrum", "hstar", "solver", "sweep")
_SOLVER_KEYS = {
    "grid": "n",
    "damping": "damping",
    "max_iter": "max_iter",
    "tol": "tol",
    "use_newton": "use_newton",
    "newton_threshold": "newton_threshold",
    "newton_max_iter": "newton_max_iter",
    "stall_window": "stall_window",
    "gmres_rtol": "gmres_rtol",
    "gmres_restart": "gmres_restart",
    "gmres_maxiter": "gmres_maxiter",
    "green_modes": "green_modes",
    "mass_radius": "mass_radius",
}


@dataclass(frozen=True)
class ProblemSpec:
    """Parsed problem description; ``from_dict(to_dict(s)) == s``."""

    matrix: CouplingMatrix
    profile: SingularProfile
    topology: Topology | None = None
    rho: RhoVector | None = None
    cutoff: Fraction | None = None
    hstar: tuple[str, str] = ("1", "1")
    solver_options: dict = dataclass_field(default_factory=dict)
    sweep_path: SweepPath | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        if not isinstance(data, dict):
            raise SpecError("<root>", "problem description must be a table")
        for key in data:
            if key not in _SECTIONS:
                raise SpecError(key, f"unknown section {key!r}")

        if "matrix" not in data:
            raise SpecError("matrix", "section [matrix] is required")
        entries = data["matrix"].get("entries")
        if entries is None:
            raise SpecError("matrix.entries", "matrix entries are required")
        try:
            (e11, e12), (e21, e22) = entries
        except (TypeError, ValueError):
            raise SpecError("matrix.entries", "expected two rows of two entries") from None
        matrix = CouplingMatrix(
            parse_rational(e11, "matrix.entries[0][0]"),
            parse_rational(e12, "matrix.entries[0][1]"),
            parse_rational(e21, "matrix.entries[1][0]"),
            parse_rational(e22, "matrix.entries[1][1]"),
        )

        prof = data.get("profile", {})
        strengths = tuple(
            parse_rational(g, f"profile.strengths[{l}]")
            for l, g in enumerate(prof.get("strengths", ()))
        )
        points = prof.get("points")
        if points is not None:
            points = tuple((float(p[0]), float(p[1])) for p in points)
        try:
            profile = SingularProfile.from_strengths(strengths, points)
        except ValueError as exc:
            raise SpecError("profile", str(exc)) from None

        topology = None
        if "topology" in data:
            t = data["topology"]
            kind = t.get("kind")
            try:
                if kind == "closed_surface":
                    topology = Topology.closed_surface(t.get("genus"))
                elif kind == "planar_domain":
                    topology = Topology.planar_domain(t.get("holes"))
                else:
                    raise SpecError("topology.kind", f"unknown kind {kind!r}")
            except ValueError as exc:
                raise SpecError("topology", str(exc)) from None

        rho = None
        if "rho" in data:
            values = data["rho"].get("values")
            if not isinstance(values, (list, tuple)) or len(values) != 2:
                raise SpecError("rho.values", "expected two components")
            try:
                rho = RhoVector(
                    parse_pi_multiple(values[0], "rho.values[0]"),
                    parse_pi_multiple(values[1], "rho.values[1]"),
                )
            except InvalidRhoError as exc:
                raise SpecError("rho.values", str(exc)) from None

        cutoff = None
        if "spectrum" in data:
            cutoff = parse_rational(data["spectrum"].get("cutoff"), "spectrum.cutoff")

        h = data.get("hstar", {})
        hstar = (str(h.get("h1", "1")), str(h.get("h2", "1")))

        options = {}
        for key, value in data.get("solver", {}).items():
            if key not in _SOLVER_KEYS:
                raise SpecError(f"solver.{key}", f"unknown solver option {key!r}")
            options[key] = value

        sweep_path = None
        if "sweep" in data:
            s = data["sweep"]
            for part in ("start", "stop"):
                if not isinstance(s.get(part), (list, tuple)) or len(s[part]) != 2:
                    raise SpecError(f"sweep.{part}", "expected two components")
            steps = s.get("steps")
            if not isinstance(steps, int) or steps < 1:
                raise SpecError("sweep.steps", "steps must be a positive integer")
            try:
                sweep_path = SweepPath(
                    RhoVector(
                        parse_pi_multiple(s["start"][0], "sweep.start[0]"),
                        parse_pi_multiple(s["start"][1], "sweep.start[1]"),
                    ),
                    RhoVector(
                        parse_pi_multiple(s["stop"][0], "sweep.stop[0]"),
                        parse_pi_multiple(s["stop"][1], "sweep.stop[1]"),
                    ),
                    steps,
                )
            except InvalidRhoError as exc:
                raise SpecError("sweep", str(exc)) from None

        return cls(
            matrix=matrix,
            profile=profile,
            topology=topology,
            rho=rho,
            cutoff=cutoff,
            hstar=hstar,
            solver_options=options,
            sweep_path=sweep_path,
        )

    def to_dict(self) -> dict:
        doc: dict = {
            "matrix": {
                "entries": [[str(a) for a in row] for row in self.matrix.rows()]
            },
            "profile": {
                "points": [[x, y] for x, y in self.profile.points],
                "strengths": [str(g) for g in self.profile.strengths],
            },
        }
        if self.topology is not None:
            t: dict = {"kind": self.topology.kind}
            if self.topology.genus is not None:
                t["genus"] = self.topology.genus
            if self.topology.holes is not None:
                t["holes"] = self.topology.holes
            doc["topology"] = t
        if self.rho is not None:
            doc["rho"] = {
                "values": [
                    format_pi_multiple(self.rho.rho1),
                    format_pi_multiple(self.rho.rho2),
                ]
            }
        if self.cutoff is not None:
            doc["spectrum"] = {"cutoff": str(self.cutoff)}
        doc["hstar"] = {"h1": self.hstar[0], "h2": self.hstar[1]}
        if self.solver_options:
            doc["solver"] = dict(self.solver_options)
        if self.sweep_path is not None:
            doc["sweep"] = {
                "start": [
                    format_pi_multiple(self.sweep_path.start.rho1),
                    format_pi_multiple(self.sweep_path.start.rho2),
                ],
                "stop": [
                    format_pi_multiple(self.sweep_path.stop.rho1),
                    format_pi_multiple(self.sweep_path.stop.rho2),
                ],
                "steps": self.sweep_path.steps,
            }
        return doc

    def solve_config(self, grid_override: int | None = None) -> SolveConfig:
        kwargs = {_SOLVER_KEYS[k]: v for k, v in self.solver_options.items()}
        if grid_override is not None:
            kwargs["n"] = grid_override
        try:
            return SolveConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SpecError("solver", str(exc)) from None


def load_spec(path: str) -> ProblemSpec:
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except OSError as exc:
        raise SpecError("<file>", f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise SpecError("<file>", f"invalid TOML in {path}: {exc}") from None
    return ProblemSpec.from_dict(data)


def render_json(payload: Any) -> str:
    """Deterministic JSON: 17 significant digits, rationals as strings."""
    buf = io.StringIO()
    _render(payload, buf, 0)
    buf.write("\n")
    return buf.getvalue()


def _render(obj: Any, out: io.StringIO, level: int) -> None:
    pad = "  " * level
    inner = "  " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        for i, (key, value) in enumerate(obj.items()):
            out.write(f"{inner}{json.dumps(str(key))}: ")
            _render(value, out, level + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(pad + "}")
    elif isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            out.write("[]")
            return
        out.write("[\n")
        for i, value in enumerate(seq):
            out.write(inner)
            _render(value, out, level + 1)
            out.write(",\n" if i < len(seq) - 1 else "\n")
        out.write(pad + "]")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif isinstance(obj, Fraction):
        out.write(json.dumps(str(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        out.write(format(value, ".17g") if math.isfinite(value) else "null")
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif obj is None:
        out.write("null")
    else:
        raise TypeError(f"cannot render {type(obj).__name__} deterministically")


def _csv_scalar(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, default=str, separators=(",", ":"))
    return str(value)


def _flatten(prefix: str, obj: Any, rows: list) -> None:
    if isinstance(obj, dict):
        for key, value in obj.items():
            _flatten(f"{prefix}.{key}" if prefix else str(key), value, rows)
    elif isinstance(obj, (list, tuple)) and any(
        isinstance(v, (dict, list, tuple)) for v in obj
    ):
        for i, value in enumerate(obj):
            _flatten(f"{prefix}[{i}]", value, rows)
    else:
        rows.append((prefix, obj))


def render_csv(payload: Any) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(payload, list) and payload and all(isinstance(r, dict) for r in payload):
        header = list(payload[0].keys())
        writer.writerow(header)
        for row in payload:
            writer.writerow([_csv_scalar(row.get(k)) for k in header])
    else:
        writer.writerow(["key", "value"])
        rows: list = []
        _flatten("", payload, rows)
        for key, value in rows:
            writer.writerow([key, _csv_scalar(value)])
    return buf.getvalue()


def _classification_payload(where) -> dict:
    return {
        "region": where.region_index,
        "ratio_over_8pi": where.ratio_over_8pi,
        "ratio": where.ratio,
        "bounds_over_8pi": [where.lower_over_8pi, where.upper_over_8pi],
        "bounds": list(where.bounds),
    }


def cmd_degree(spec: ProblemSpec, args) -> dict:
    if spec.topology is None:
        raise SpecError("topology", "degree counting needs a [topology] section")
    if spec.rho is None:
        raise SpecError("rho", "degree counting needs a [rho] section")
    where = classify(spec.matrix, spec.rho, spec.profile)
    series = expand_series(spec.topology, spec.profile, where.spectrum.cutoff)
    below = where.spectrum.values[: where.region_index]
    coefficients = [1] + [series.coefficient(v) for v in below]
    payload = {"degree": sum(coefficients)}
    payload.update(_classification_payload(where))
    payload["coefficients"] = coefficients
    return payload


def cmd_spectrum(spec: ProblemSpec, args) -> list:
    cutoff = spec.cutoff
    if getattr(args, "cutoff", None) is not None:
        cutoff = parse_rational(args.cutoff, "--cutoff")
    if cutoff is None:
        raise SpecError("spectrum.cutoff", "a cutoff is required (--cutoff or [spectrum])")
    if spec.topology is None:
        raise SpecError("topology", "series coefficients need a [topology] section")
    if cutoff <= 0:
        raise SpecError("spectrum.cutoff", f"cutoff must be positive, got {cutoff}")
    spectrum = enumerate_spectrum(spec.profile, cutoff)
    series = expand_series(spec.topology, spec.profile, cutoff)
    rows = []
    partial = 1
    for value in spectrum.values:
        b = series.coefficient(value)
        partial += b
        rows.append({"n": value, "b": b, "partial_sum": partial})
    return rows


def cmd_classify(spec: ProblemSpec, args) -> dict:
    if spec.rho is None:
        raise SpecError("rho", "classification needs a [rho] section")
    where = classify(spec.matrix, spec.rho, spec.profile)
    q = quadratic_form(spec.matrix, spec.rho)
    lform = linear_form(spec.matrix, spec.rho)
    payload = _classification_payload(where)
    payload["Q_over_pi2"] = q
    payload["Q"] = float(q) * math.pi**2
    payload["L_over_pi"] = lform
    payload["L"] = float(lform) * math.pi
    return payload


def cmd_symmetrize(spec: ProblemSpec, args) -> dict:
    sym = symmetrize(spec.matrix)
    return {
        "b11": sym.b11,
        "b12": sym.b12,
        "b22": sym.b22,
        "ratio": sym.ratio,
        "shift": sym.shift,
    }


def cmd_solve(spec: ProblemSpec, args) -> dict:
    if spec.rho is None:
        raise SpecError("rho", "solving needs a [rho] section")
    if spec.topology is not None and spec.topology.euler_char != 0:
        raise SpecError(
            "topology", "the field solver works on the flat torus (genus 1) only"
        )
    config = spec.solve_config(getattr(args, "grid", None))
    grid = TorusGrid(config.n)
    hstar = (
        evaluate_intensity(spec.hstar[0], grid, "hstar.h1"),
        evaluate_intensity(spec.hstar[1], grid, "hstar.h2"),
    )
    where = classify(spec.matrix, spec.rho, spec.profile)
    solution = solve(spec.rho, spec.matrix, spec.profile, hstar=hstar, config=config)
    try:
        j = energy(solution.u1, solution.u2, spec.rho, spec.matrix, solution.weights)
    except SingularMatrixError:
        j = None
    payload: dict = {
        "converged": True,
        "iterations": solution.iterations,
        "newton_used": solution.newton_used,
        "residual": solution.residual,
        "region": where.region_index,
        "ratio_over_8pi": where.ratio_over_8pi,
        "normalizations": list(solution.normalizations),
        "constants": list(solution.constants),
        "max_u": [solution.u1.max_norm, solution.u2.max_norm],
        "energy": j,
    }
    if spec.profile.size > 0:
        report = local_masses(
            solution, spec.rho, spec.matrix, spec.profile, radius=config.mass_radius
        )
        payload["local_masses"] = [
            {
                "point": [m.point[0], m.point[1]],
                "strength": m.strength,
                "mass": m.mass,
                "sigma1": m.sigma1,
                "sigma2": m.sigma2,
                "pohozaev": m.pohozaev,
            }
            for m in report.masses
        ]
        payload["mass_radius"] = report.radius
    else:
        payload["local_masses"] = []
    rank = rank_class(spec.matrix)
    payload["rank"] = {"kind": rank.kind, "ratio": rank.ratio}
    if rank.kind != "full_rank":
        ratio = float(rank.ratio)
        payload["proportional_gap"] = float(
            np.max(np.abs(solution.u1.values - ratio * solution.u2.values))
        )
    fields_dir = getattr(args, "fields_dir", None)
    if fields_dir:
        os.makedirs(fields_dir, exist_ok=True)
        ustar1, ustar2 = reconstruct_original(
            solution, spec.profile, config.green_modes
        )
        written = []
        for name, field_obj in (
            ("u1", solution.u1),
            ("u2", solution.u2),
            ("ustar1", ustar1),
            ("ustar2", ustar2),
            ("h1", solution.weights[0]),
            ("h2", solution.weights[1]),
        ):
            path = os.path.join(fields_dir, f"{name}.csv")
            export_csv(field_obj, path)
            written.append(f"{name}.csv")
        payload["fields_written"] = written
    return payload


def cmd_sweep(spec: ProblemSpec, args):
    if spec.sweep_path is None:
        raise SpecError("sweep", "sweeping needs a [sweep] section")
    config = spec.solve_config(getattr(args, "grid", None))
    grid = TorusGrid(config.n)
    hstar = (
        evaluate_intensity(spec.hstar[0], grid, "hstar.h1"),
        evaluate_intensity(spec.hstar[1], grid, "hstar.h2"),
    )
    path = linear_rho_path(
        spec.sweep_path.start, spec.sweep_path.stop, spec.sweep_path.steps
    )
    records = sweep(
        path,
        spec.matrix,
        spec.profile,
        hstar=hstar,
        config=config,
        parallel=bool(getattr(args, "parallel", False)),
    )
    return records


def _sweep_records_json(records) -> list:
    rows = []
    for rec in records:
        rows.append(
            {
                "t": rec.t,
                "rho": list(rec.rho.as_floats()),
                "region": rec.region,
                "critical_index": rec.critical_index,
                "converged": rec.converged,
                "residual": rec.residual,
                "max_u1": rec.max_u1,
                "max_u2": rec.max_u2,
                "J": rec.energy,
                "sigmas": [list(pair) for pair in rec.sigmas] if rec.sigmas else None,
                "message": rec.message,
            }
        )
    return rows


def _write_text(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _emit_error(kind: str, message: str, code: int, **extra) -> int:
    payload = {"kind": kind}
    payload.update(extra)
    payload["message"] = message
    sys.stdout.write(render_json(payload))
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liouville",
        description="Degree counting and torus solves for 2x2 singular Liouville systems.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", required=True, help="TOML problem description")
    common.add_argument("--out", help="write output to this file instead of stdout")
    common.add_argument("--format", choices=("json", "csv"), help="output format")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("degree", parents=[common], help="count solutions in the region of rho")
    sp = sub.add_parser("spectrum", parents=[common], help="critical values and coefficients")
    sp.add_argument("--cutoff", help="largest value, in units of 8*pi (rational)")
    sub.add_parser("classify", parents=[common], help="locate rho relative to the critical set")
    sub.add_parser("symmetrize", parents=[common], help="symmetric form of the coupling matrix")
    so = sub.add_parser("solve", parents=[common], help="solve the system on the torus")
    so.add_argument("--grid", type=int, help="override the grid size")
    so.add_argument("--fields-dir", help="directory for u1/u2/ustar/h CSV exports")
    sw = sub.add_parser("sweep", parents=[common], help="continuation along a rho segment")
    sw.add_argument("--grid", type=int, help="override the grid size")
    sw.add_argument("--parallel", action="store_true", help="independent solves in processes")
    return parser


_COMMANDS = {
    "degree": cmd_degree,
    "spectrum": cmd_spectrum,
    "classify": cmd_classify,
    "symmetrize": cmd_symmetrize,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args.spec)
        result = _COMMANDS[args.command](spec, args)
        if args.command == "sweep":
            fmt = args.format or "csv"
            if fmt == "csv":
                buf = io.StringIO()
                sweep_csv(result, buf, spec.profile.size)
                _write_text(buf.getvalue(), args.out)
            else:
                _write_text(render_json(_sweep_records_json(result)), args.out)
        else:
            fmt = args.format or "json"
            text = render_json(result) if fmt == "json" else render_csv(result)
            _write_text(text, args.out)
        return 0
    except SpecError as exc:
        return _emit_error("ParseError", str(exc), 1, field=exc.field)
    except OnCriticalSetError as exc:
        return _emit_error(
            "OnCriticalSet", str(exc), 2, index=exc.index, value_over_8pi=exc.value
        )
    except NonConvergenceError as exc:
        return _emit_error("NonConvergence", str(exc), 3, residual=exc.residual)
    except (
        HypothesisError,
        InvalidRhoError,
        SingularMatrixError,
        ValueError,
        TypeError,
    ) as exc:
        return _emit_error("InvalidInput", str(exc), 1)
    except OSError as exc:
        return _emit_error("IOError", str(exc), 1)


if __name__ == "__main__":
    raise SystemExit(main())
