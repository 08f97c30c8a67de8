"""Command line front end.

Every subcommand reads one JSON document and writes one JSON report with
sorted keys and floats printed to 17 significant digits.  Failures produce a
report with an ``error`` record and a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from types import SimpleNamespace
from importlib import resources

import numpy as np

from .fermi import (
    FermiError, block_rotation, fermi_general, fermi_periodic, fermi_schrodinger, invariants_from,
    loop_trace, spectral_derivative,
)
from .inversion import (
    AmbiguityError, InversionError, RankDeficiencyError, ResidualError, invert_general,
    invert_schrodinger, recover_frequencies, to_original_coordinates, unmix_trace_coefficients,
)
from .normalform import HamiltonianSpec, SmallDivisorError, birkhoff
from .observables import forward_averages, observable_family, schrodinger_family
from .phasepoly import ActionPoly, PhasePoly, harmonic_part

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SMALL_DIVISOR = 3
EXIT_RANK = 4
EXIT_RESIDUAL = 5
EXIT_INPUT = 6

COMMANDS = ("fermi", "bnf", "avg", "melem", "freqs", "invert", "unmix", "roundtrip")


class ParseError(ValueError):
    pass


@dataclass
class JobConfig:
    command: str
    input: str
    output: str | None = None
    order: int | None = None
    fourier_band: int | None = None
    tol: float | None = None
    mode: str = "classical"
    grid: int = 256

    def validate(self):
        if self.order is not None and self.order < 1:
            raise ParseError("--order must be positive")
        if self.fourier_band is not None and self.fourier_band < 0:
            raise ParseError("--fourier-band must be non-negative")
        if self.tol is not None and not 0 < self.tol < 1:
            raise ParseError("--tol must lie in (0, 1)")
        if self.grid < 4:
            raise ParseError("--grid must be at least 4")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def _emit(obj):
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_emit(v)}" for k, v in items) + "}"
    if isinstance(obj, list):
        return "[" + ", ".join(_emit(v) for v in obj) + "]"
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return json.dumps(str(obj))
        text = format(obj, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    return json.dumps(obj)


def dumps(report):
    """Canonical JSON: sorted keys, 17 significant digits for every float."""
    return _emit(_plain(report)) + "\n"


# ---------------------------------------------------------------------------
# input
# ---------------------------------------------------------------------------

def read_document(path):
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        try:
            text = resources.files("bnfinv").joinpath("data", f"{name}.json").read_text()
        except FileNotFoundError as exc:
            raise ParseError(f"no bundled example named {name!r}") from exc
    elif path == "-":
        text = sys.stdin.read()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("the input must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version}")
    return doc


def _potential_dict(records):
    return {tuple(int(e) for e in r["x_exponents"]): float(r["value"]) for r in records}


def _potential_records(coeffs):
    return [{"x_exponents": list(k), "value": float(v)} for k, v in sorted(coeffs.items())]


@dataclass
class Problem:
    spec: HamiltonianSpec
    frame: object = None
    fermi: dict = None
    potential: dict = None


def load_problem(doc, config):
    """Hamiltonian document -> HamiltonianSpec in Fermi form, plus frame data."""
    setting = doc.get("setting", "well")
    order = config.order or int(doc.get("order", 4))
    band = config.fourier_band if config.fourier_band is not None else doc.get("fourier_band")
    E = float(doc.get("E", 0.0))
    if setting == "schrodinger":
        if "potential_hessian" not in doc:
            raise ParseError("schrodinger input needs potential_hessian")
        potential = _potential_dict(doc.get("potential", []))
        frame = fermi_schrodinger(np.asarray(doc["potential_hessian"], dtype=float), potential,
                                  V0=E, max_order=order)
        remainder = frame.symbol - harmonic_part(frame.theta, E)
        spec = HamiltonianSpec("schrodinger", frame.theta, remainder, E=E, order=order)
        return Problem(spec, frame, potential=potential)
    n = int(doc["n"]) if "n" in doc else None
    if "hessian" in doc:
        hessian = np.asarray(doc["hessian"], dtype=float)
        n = hessian.shape[0] // 2
        terms = PhasePoly.from_records(n, doc.get("terms", []))
        data, symbol = fermi_general(hessian, terms, E, order)
        remainder = symbol - harmonic_part(data.lam, E)
        spec = HamiltonianSpec(setting, data.lam, remainder, E=E, order=order, band=band)
        return Problem(spec, data, fermi={"S": data.S, "lambda": data.lam, "residuals": data.residuals})
    if "theta" not in doc:
        raise ParseError("input needs theta, hessian or potential_hessian")
    theta = doc["theta"]
    n = n or len(theta)
    terms = PhasePoly.from_records(n, doc.get("terms", []))
    return Problem(HamiltonianSpec(setting, theta, terms, E=E, order=order, band=band))


def _generator_band(spec):
    if not spec.periodic:
        return 0
    base = spec.band if spec.band is not None else max((abs(d) for (*_, d) in spec.taylor.terms), default=0)
    return base * max(spec.order - 2, 1)


def _family(spec):
    if spec.setting == "schrodinger":
        return schrodinger_family(spec.n)
    return observable_family(spec.n, spec.order, _generator_band(spec), spec.periodic)


def _diagnostics(result):
    return {"residual": result.residual, "truncation": result.truncation,
            "min_divisor": result.min_divisor()}


def _forward(problem, mode):
    spec = problem.spec
    result = birkhoff(spec, mode)
    family = _family(spec)
    data = forward_averages(result, family)
    return result, family, data


def _forward_document(problem, mode):
    spec = problem.spec
    result, family, data = _forward(problem, mode)
    doc = {"kind": "forward_data", "setting": spec.setting, "mode": mode, "n": spec.n,
           "theta": spec.theta, "E": spec.E, "order": spec.order,
           "generator_band": _generator_band(spec), "h": result.h.to_records(),
           "averages": {label: value.to_records() for label, value in sorted(data.items())},
           "diagnostics": _diagnostics(result)}
    if problem.frame is not None and spec.setting == "schrodinger":
        doc["frame"] = {"U": problem.frame.U, "theta": problem.frame.theta}
    return doc


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _synthetic_loop(loop, grid):
    S0 = np.asarray(loop["S0"], dtype=float)
    rates = np.asarray(loop["rates"], dtype=float)
    times = np.arange(grid) / grid
    S = np.array([S0 @ block_rotation(2 * np.pi * rates * t) for t in times])
    return np.array([invariants_from(s) for s in S]), loop_trace(S, spectral_derivative(S))


def cmd_fermi(doc, config):
    if "loop" in doc:
        loop = doc["loop"]
        if "invariants" in loop:
            inv = np.asarray(loop["invariants"], dtype=float)
            trace = np.asarray(loop["trace"], dtype=float)
        else:
            inv, trace = _synthetic_loop(loop, config.grid)
        frame = fermi_periodic(inv, trace)
        return {"kind": "loop_frame", "grid": frame.grid, "theta_dot": frame.theta_dot,
                "angles": frame.angles, "frames": frame.S_samples,
                "pairs": [list(p) for p in frame.pairs]}
    problem = load_problem(doc, config)
    report = {"kind": "fermi", "setting": problem.spec.setting, "theta": problem.spec.theta,
              "symbol": (problem.spec.taylor + harmonic_part(problem.spec.theta, problem.spec.E)).to_records()}
    if problem.fermi is not None:
        report["williamson"] = problem.fermi
    if problem.frame is not None and problem.spec.setting == "schrodinger":
        report["U"] = problem.frame.U
        report["remainder"] = _potential_records(problem.frame.remainder)
    return report


def cmd_bnf(doc, config):
    problem = load_problem(doc, config)
    result = birkhoff(problem.spec, config.mode)
    report = result.to_dict()
    report["kind"] = "normal_form"
    report["diagnostics"] = _diagnostics(result)
    return report


def cmd_avg(doc, config):
    return _forward_document(load_problem(doc, config), "classical")


def cmd_melem(doc, config):
    return _forward_document(load_problem(doc, config), "quantum")


def cmd_freqs(doc, config):
    levels = doc["levels"]
    tol = config.tol or float(doc.get("tol", 1e-6))
    theta = recover_frequencies(levels, float(doc["hbar"]), int(doc["n"]), tol=tol)
    return {"kind": "frequencies", "theta": theta}


def _label_to_m(label):
    _, m, _, _ = label.split(":")
    return tuple(int(v) for v in m.split(","))


def _invert_document(doc, config):
    n = int(doc["n"])
    setting = doc["setting"]
    mode = doc.get("mode", config.mode)
    theta = np.asarray(doc["theta"], dtype=float)
    order = config.order or int(doc["order"])
    tol = config.tol or 1e-8
    h = ActionPoly.from_records(n, doc["h"])
    averages = {label: ActionPoly.from_records(n, recs) for label, recs in doc["averages"].items()}
    if setting == "schrodinger":
        if mode != "classical":
            raise ParseError("the potential inversion uses classical averages")
        rec = invert_schrodinger(h, {_label_to_m(k): v for k, v in averages.items()}, theta, order, tol)
        report = rec.to_dict()
        report["fermi_coefficients"] = _potential_records(rec.coefficients)
        if "frame" in doc:
            frame = SimpleNamespace(U=np.asarray(doc["frame"]["U"], dtype=float),
                                    theta=np.asarray(doc["frame"]["theta"], dtype=float))
            report["potential"] = _potential_records(to_original_coordinates(rec.coefficients, frame))
        return report, rec, None
    band = int(doc.get("generator_band", 0))
    family = observable_family(n, order, band, setting == "periodic")
    rec, F = invert_general(h, averages, family, theta, order, setting, mode, band,
                            float(doc.get("E", 0.0)), tol)
    report = rec.to_dict()
    report["generator"] = F.to_records()
    return report, rec, F


def cmd_invert(doc, config):
    report, _, _ = _invert_document(doc, config)
    report["kind"] = "recovered_taylor"
    return report


def cmd_unmix(doc, config):
    theta = np.asarray(doc["theta"], dtype=float)
    samples = {(int(r["p"]), int(r["l"])): complex(r.get("re", 0.0), r.get("im", 0.0)) for r in doc["samples"]}
    order = config.order or int(doc["order"])
    b, report = unmix_trace_coefficients(samples, theta, order, nu_terms=bool(doc.get("nu_terms", False)))
    records = [{"k": list(k), "m": m, "s": s, "re": v.real, "im": v.imag} for (k, m, s), v in sorted(b.items())]
    return {"kind": "trace_taylor", "b": records, "report": report}


def _error_table(truth, recovered, describe):
    scale = max([abs(v) for v in truth.values()] + [1e-300])
    rows, worst = [], 0.0
    for key in sorted(set(truth) | set(recovered)):
        a, b = truth.get(key, 0.0), recovered.get(key, 0.0)
        worst = max(worst, abs(a - b))
        rows.append({"key": describe(key), "input": a, "recovered": b, "abs_error": abs(a - b)})
    return {"rows": rows, "max_abs_error": worst, "max_rel_error": worst / scale}


def cmd_roundtrip(doc, config):
    problem = load_problem(doc, config)
    mode = "classical" if problem.spec.setting == "schrodinger" else config.mode
    forward = _forward_document(problem, mode)
    report, rec, _ = _invert_document(forward, config)
    if problem.spec.setting == "schrodinger":
        recovered = {tuple(r["x_exponents"]): r["value"] for r in report["potential"]}
        table = _error_table(problem.potential, recovered, list)
    else:
        table = _error_table(dict(problem.spec.taylor.terms), dict(rec.coefficients.terms), _key_record)
    return {"kind": "roundtrip", "setting": problem.spec.setting, "mode": mode,
            "order": problem.spec.order, "errors": table,
            "forward_diagnostics": forward["diagnostics"],
            "inverse_report": report["residual_report"]}


HANDLERS = {"fermi": cmd_fermi, "bnf": cmd_bnf, "avg": cmd_avg, "melem": cmd_melem,
            "freqs": cmd_freqs, "invert": cmd_invert, "unmix": cmd_unmix, "roundtrip": cmd_roundtrip}


def _key_record(key):
    p, j, k, m, d = key
    return {"p": p, "j": list(j), "k": list(k), "m": m, "d": d}


def _any_key(key):
    if len(key) == 5:
        return _key_record(key)
    return [list(part) if isinstance(part, tuple) else part for part in key]


def _error_record(exc, code):
    record = {"type": type(exc).__name__, "code": code, "message": str(exc)}
    if isinstance(exc, SmallDivisorError):
        record.update(key=_key_record(exc.key), divisor=exc.divisor, order=exc.order,
                      completed=exc.completed)
    if isinstance(exc, RankDeficiencyError):
        record["keys"] = [_any_key(k) for k in exc.keys]
    return {"error": record}


def _exit_code(exc):
    if isinstance(exc, (ParseError, KeyError, TypeError, json.JSONDecodeError)):
        return EXIT_PARSE
    if isinstance(exc, SmallDivisorError):
        return EXIT_SMALL_DIVISOR
    if isinstance(exc, RankDeficiencyError):
        return EXIT_RANK
    if isinstance(exc, ResidualError):
        return EXIT_RESIDUAL
    if isinstance(exc, (FermiError, AmbiguityError, InversionError, ValueError, ZeroDivisionError,
                        np.linalg.LinAlgError)):
        return EXIT_INPUT
    return None


def run(config):
    """Execute one job; returns (exit status, report)."""
    try:
        config.validate()
        doc = read_document(config.input)
        report = HANDLERS[config.command](doc, config)
        status = EXIT_OK
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        status = _exit_code(exc)
        if status is None:
            raise
        if isinstance(exc, KeyError):
            exc = ParseError(f"missing field {exc}")
        report = _error_record(exc, status)
    report = dict(report)
    report["schema_version"] = SCHEMA_VERSION
    report["command"] = config.command
    return status, report


def build_parser():
    parser = argparse.ArgumentParser(prog="bnfinv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fermi": "Fermi coordinates: Williamson frame, potential frame or loop of frames",
        "bnf": "Birkhoff normal form (classical or quantum)",
        "avg": "classical averages of the observable family",
        "melem": "quantum diagonal matrix elements of the observable family",
        "freqs": "frequencies from the bottom of a spectrum",
        "invert": "Taylor data from a normal form and averages",
        "unmix": "trace coefficients from trace samples",
        "roundtrip": "forward pipeline followed by inversion, with an error table",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--input", required=True, help="JSON file, '-' for stdin or builtin:NAME")
        p.add_argument("--output", help="report path (default: stdout)")
        p.add_argument("--order", type=int, help="truncation order N")
        p.add_argument("--fourier-band", type=int, dest="fourier_band", help="Fourier band D")
        p.add_argument("--tol", type=float, help="residual tolerance (frequency lattice tolerance for freqs)")
        p.add_argument("--mode", choices=("classical", "quantum"), default="classical")
        p.add_argument("--grid", type=int, default=256, help="samples per period for loops")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = JobConfig(args.command, args.input, args.output, args.order, args.fourier_band,
                       args.tol, args.mode, args.grid)
    status, report = run(config)
    text = dumps(report)
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if status:
        sys.stderr.write(f"bnfinv {config.command}: {report['error']['type']}: {report['error']['message']}\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
