"""Command-line front end: one versioned JSON report per run."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import time
from typing import Any, Callable

import numpy as np

from . import __version__
from .config import DEFAULTS, SCHEMA_VERSION, resolve_threads
from .dispersion import (KINDS, DispersionContext, Divisor, classify_divisor,
                         evaluate_divisor, index_norms, k_vectors, scan_mass, scan_melnikov, trivial_mask)
from .lattice import ExcitedSetAnalysis, analyze_set, integer_sphere
from .normal_form import NormalFormParams, build_K, matrix_M, mu, omega_vector
from .random_sets import (TrialConfig, birthday_distinct_probability, estimate_probabilities,
                          sphere_growth)
from .spectral import (ClusteredSpectrumError, certificates, check_hypothesis_A1, discriminant_2d,
                       spectral_report, symplectic_diagonalize, two_site_coefficients)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

_POINT = re.compile(r"^(\(\s*-?\d+(\s*,\s*-?\d+)*\s*\)|-?\d+(\s*,\s*-?\d+)*)$")


class InputError(ValueError):
    pass


# parsing helpers

def parse_set(text: str, d: int | None = None) -> list[list[int]]:
    """'(0,1);(1,-1)' or '1;2'."""
    items = [s.strip() for s in text.split(";") if s.strip()]
    if not items:
        raise InputError("empty set literal")
    out = []
    for s in items:
        if not _POINT.match(s):
            raise InputError(f"bad point literal {s!r}")
        out.append([int(x) for x in s.strip("() ").split(",")])
    dims = {len(p) for p in out}
    if len(dims) != 1:
        raise InputError("points of mixed dimension")
    if d is not None and dims != {d}:
        raise InputError(f"points have dimension {dims.pop()}, expected {d}")
    return out


def parse_point(text: str | None, d: int) -> list[int] | None:
    if text is None:
        return None
    pts = parse_set(text, d)
    if len(pts) != 1:
        raise InputError(f"expected a single point, got {text!r}")
    return pts[0]


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad number list {text!r}") from exc


def parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad integer list {text!r}") from exc


def parse_grid(text: str | None) -> dict:
    if text is None:
        return {"start": 1.0, "stop": 2.0, "num": DEFAULTS["m_grid_points"]}
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError("grid must be start:stop:num")
    try:
        return {"start": float(parts[0]), "stop": float(parts[1]), "num": int(parts[2])}
    except ValueError as exc:
        raise InputError(f"bad grid {text!r}") from exc


def _fmt_point(p) -> str:
    return "(" + ",".join(str(int(x)) for x in p) + ")" if p is not None else ""


def jsonable(x: Any) -> Any:
    """Plain JSON types; non-finite floats become strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else ("nan" if math.isnan(v) else ("inf" if v > 0 else "-inf"))
    if isinstance(x, complex):
        return [jsonable(x.real), jsonable(x.imag)]
    if isinstance(x, np.complexfloating):
        return jsonable(complex(x))
    return x


def _require(inputs: dict, *keys: str) -> None:
    missing = [k for k in keys if inputs.get(k) is None]
    if missing:
        raise InputError("missing required input: " + ", ".join(missing))


def _analysis(inputs: dict) -> ExcitedSetAnalysis:
    try:
        return analyze_set([tuple(p) for p in inputs["set"]], inputs["d"])
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _ctx(inputs: dict) -> DispersionContext:
    try:
        return DispersionContext(inputs["d"], float(inputs["m"]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _params(inputs: dict, an: ExcitedSetAnalysis) -> NormalFormParams:
    try:
        return NormalFormParams(_ctx(inputs), an, tuple(float(r) for r in inputs["rho"]), float(inputs["nu"]))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# payload builders

def set_payload(an: ExcitedSetAnalysis) -> dict:
    w = an.strong_witness
    return {
        "points": an.points,
        "admissible": an.admissible,
        "strongly_admissible": an.strongly_admissible,
        "strong_witness": None if w is None else {"a": w[0], "b": w[1], "sphere_points": w[2]},
        "lambda_f": an.lambda_f,
        "ell_map": [{"site": s, "ell": an.ell_map[s]} for s in an.lambda_f] if an.admissible else [],
        "plus_pairs": sorted(an.plus_pairs),
        "minus_pairs": sorted(an.minus_pairs),
        "classes": an.classes,
        "M": an.M,
        "M_star": an.M_star,
    }


def run_analyze(inputs: dict, threads: int) -> dict:
    _require(inputs, "d", "m", "set")
    an = _analysis(inputs)
    out: dict = {"set": set_payload(an), "normal_form": None, "spectral": None}
    if not an.admissible or inputs.get("rho") is None:
        return out
    params = _params(inputs, an)
    K = build_K(params)
    out["normal_form"] = {
        "omega": params.omega,
        "M": matrix_M(params.ctx, an),
        "Omega": omega_vector(params),
        "mu": [{"site": s, "mu": mu(params, s)} for s in an.lambda_f],
        "blocks": [{"index": b.index, "members": b.members, "K": b.K} for b in K.blocks],
    }
    rep = spectral_report(params)
    blocks = []
    for bs, blk in zip(rep.blocks, K.blocks):
        sd = symplectic_diagonalize(blk.real_matrix)
        entry = {
            "index": bs.index,
            "members": bs.members,
            "size": 2 * len(bs.members),
            "eigenvalues": [complex(z) for z in bs.eigenvalues],
            "types": bs.types,
            "krein": bs.krein,
            "Lambda": bs.Lambda,
            "hyperbolic": bs.hyperbolic,
            "diagonalization": {"gap": sd.gap, "diag_residual": sd.diag_residual,
                                "symplectic_residual": sd.symplectic_residual},
        }
        if len(bs.members) == 2 and (bs.members[0], bs.members[1]) in an.plus_pairs:
            al, be, ga = two_site_coefficients(params, bs.members)
            entry["two_site"] = {"alpha": al, "beta": be, "gamma": ga,
                                 "discriminant": discriminant_2d(al, be, ga)}
        blocks.append(entry)
    cert = certificates(params)
    out["spectral"] = {
        "type_tol": rep.tol,
        "blocks": blocks,
        "hyperbolic_blocks": [b["index"] for b in blocks if b["hyperbolic"]],
        "elliptic_sites": rep.elliptic_sites,
        "hyperbolic_sites": rep.hyperbolic_sites,
        "certificates": {"P": cert.P.to_dict(), "D": cert.D.to_dict(), "M": cert.M.to_dict(),
                         "D_recipe": cert.recipe},
    }
    if inputs.get("a1_index_cutoff") is not None:
        a1 = check_hypothesis_A1(params, int(inputs["a1_index_cutoff"]), inputs.get("delta0"))
        out["hypothesis_a1"] = {"margins": a1.margins, "passed": a1.passed, "ok": a1.ok,
                                "delta0": a1.delta0, "c": a1.c, "beta": a1.beta,
                                "index_cutoff": a1.index_cutoff, "far_norms": a1.n_far,
                                "hyperbolic_dim": a1.hyperbolic_dim}
    return out


def run_scan_m(inputs: dict, threads: int) -> dict:
    _require(inputs, "d", "set", "kind")
    if inputs["kind"] not in KINDS:
        raise InputError(f"kind must be one of {KINDS}")
    an = _analysis(inputs)
    if not an.admissible:
        raise InputError("excited set is not admissible")
    g = inputs["m_grid"]
    if g["num"] < 1:
        raise InputError("empty mass grid")
    grid = np.linspace(g["start"], g["stop"], g["num"])
    try:
        scan = scan_mass(an, inputs["kind"], inputs["k_cutoff"], inputs["index_cutoff"], inputs["kappa"],
                         inputs["exponent"], grid, threads=threads)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return {"kind": scan.kind, "kappa": scan.kappa, "exponent": scan.exponent,
            "k_cutoff": scan.k_cutoff, "index_cutoff": scan.index_cutoff,
            "bad_fraction": scan.bad_fraction, "measure_estimator": "grid fraction",
            "excluded_masses_on_grid": int(scan.excluded.sum()),
            "rows": scan.rows()}


def _enumerate_trivial(an: ExcitedSetAnalysis, k_cutoff: int, index_cutoff: int) -> dict:
    r2, _ = index_norms(an, index_cutoff)
    excited = set(an.points)
    mult = np.array([sum(1 for x in integer_sphere(an.d, int(r)) if x not in excited) for r in r2])
    counts = {}
    for kind in KINDS:
        ks = k_vectors(an.n, k_cutoff, include_zero=kind != "D0")
        if kind == "D0":
            counts[kind] = int(trivial_mask(an, kind, ks).sum())
        elif kind == "D1":
            counts[kind] = int((trivial_mask(an, kind, ks, r2) * mult[None, :]).sum())
        else:
            ia, ib = (x.ravel() for x in np.meshgrid(np.arange(len(r2)), np.arange(len(r2)), indexing="ij"))
            mask = trivial_mask(an, kind, ks, r2[ia], r2[ib])
            counts[kind] = int((mask * (mult[ia] * mult[ib])[None, :]).sum())
    return counts


def run_divisors(inputs: dict, threads: int) -> dict:
    _require(inputs, "d", "set")
    an = _analysis(inputs)
    if not an.admissible:
        raise InputError("excited set is not admissible")
    if inputs.get("kind") is None:
        counts = _enumerate_trivial(an, inputs["k_cutoff"], inputs["index_cutoff"])
        return {"mode": "enumerate", "k_cutoff": inputs["k_cutoff"], "index_cutoff": inputs["index_cutoff"],
                "trivial_resonance_counts": counts}
    _require(inputs, "k")
    try:
        div = Divisor(inputs["kind"], tuple(inputs["k"]),
                      tuple(inputs["a"]) if inputs.get("a") is not None else None,
                      tuple(inputs["b"]) if inputs.get("b") is not None else None)
        out = {"mode": "classify", "classification": classify_divisor(an, div)}
        if inputs.get("m") is not None:
            out["value"] = evaluate_divisor(_ctx(inputs), an, div)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    return out


def run_melnikov(inputs: dict, threads: int) -> dict:
    _require(inputs, "d", "m", "set", "rho")
    an = _analysis(inputs)
    if not an.admissible:
        raise InputError("excited set is not admissible")
    params = _params(inputs, an)
    tau = inputs["tau"] if inputs.get("tau") is not None else an.n + 1
    res = scan_melnikov(params.ctx, an, params.rho, params.nu, inputs["k_cutoff"], inputs["index_cutoff"], tau)
    return {"margin": res.margin, "k": res.k, "a": res.a, "b": res.b, "tau": res.tau,
            "k_cutoff": res.k_cutoff, "index_cutoff": res.index_cutoff, "tail_eps": res.tail_eps}


def run_sample_sets(inputs: dict, threads: int) -> dict:
    _require(inputs, "d", "n", "R", "seed")
    rows = []
    for R in inputs["R"]:
        try:
            cfg = TrialConfig(inputs["d"], inputs["n"], int(R), inputs["trials"], inputs["seed"])
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        est = estimate_probabilities(cfg, strong=inputs["strong"], threads=threads)
        row = {"R": int(R), **est.to_dict(),
               "expected_collision_rate": 1.0 - birthday_distinct_probability(cfg.d, cfg.n, cfg.R)}
        row["admissible_failure"] = 1.0 - est.p_admissible
        row["strong_failure"] = None if est.strongly_admissible is None else 1.0 - est.p_strongly_admissible
        rows.append(row)
    out: dict = {"rows": rows, "seed": inputs["seed"]}
    fails = [r["admissible_failure"] for r in rows]
    if len(rows) >= 2 and all(f > 0 for f in fails):
        out["admissible_failure_loglog_slope"] = float(
            np.polyfit(np.log([r["R"] for r in rows]), np.log(fails), 1)[0])
    return out


def run_spheres(inputs: dict, threads: int) -> dict:
    _require(inputs, "d", "rmax")
    if inputs["d"] < 1 or inputs["rmax"] < 1:
        raise InputError("d and rmax must be >= 1")
    g = sphere_growth(inputs["d"], inputs["rmax"], inputs["theta"])
    return {"counts": g.counts, "C_fit": g.C_fit, "theta": g.theta,
            "envelope_exponent": g.envelope_exponent}


# argument handling

def _set_inputs(args) -> dict:
    if args.set is None:
        raise InputError("--set is required")
    if args.d is None:
        raise InputError("-d is required")
    return {"d": args.d, "set": parse_set(args.set, args.d)}


def inputs_analyze(args) -> dict:
    return {**_set_inputs(args), "m": args.m,
            "rho": parse_floats(args.rho) if args.rho is not None else None,
            "nu": args.nu, "a1_index_cutoff": args.a1_cutoff, "delta0": args.delta0}


def inputs_scan_m(args) -> dict:
    return {**_set_inputs(args), "kind": args.kind, "k_cutoff": args.k_cutoff,
            "index_cutoff": args.index_cutoff, "kappa": args.kappa,
            "exponent": args.exponent, "m_grid": parse_grid(args.m_grid)}


def inputs_divisors(args) -> dict:
    base = _set_inputs(args)
    return {**base, "m": args.m, "kind": args.kind,
            "k": parse_ints(args.k) if args.k is not None else None,
            "a": parse_point(args.a, args.d), "b": parse_point(args.b, args.d),
            "k_cutoff": args.k_cutoff, "index_cutoff": args.index_cutoff}


def inputs_melnikov(args) -> dict:
    return {**_set_inputs(args), "m": args.m,
            "rho": parse_floats(args.rho) if args.rho is not None else None,
            "nu": args.nu, "k_cutoff": args.k_cutoff, "index_cutoff": args.index_cutoff, "tau": args.tau}


def inputs_sample_sets(args) -> dict:
    if args.d is None or args.n is None or args.R is None:
        raise InputError("-d, -n and -R are required")
    if args.seed is None:
        raise InputError("--seed is required")
    return {"d": args.d, "n": args.n, "R": parse_ints(args.R), "trials": args.trials,
            "seed": args.seed, "strong": not args.no_strong}


def inputs_spheres(args) -> dict:
    return {"d": args.d, "rmax": args.rmax, "theta": args.theta}


COMMANDS: dict[str, tuple[Callable, Callable]] = {
    "analyze": (inputs_analyze, run_analyze),
    "scan-m": (inputs_scan_m, run_scan_m),
    "divisors": (inputs_divisors, run_divisors),
    "melnikov": (inputs_melnikov, run_melnikov),
    "sample-sets": (inputs_sample_sets, run_sample_sets),
    "spheres": (inputs_spheres, run_spheres),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--output", "-o", help="write the report here instead of stdout")
    common.add_argument("--threads", type=int, default=None, help="worker threads, 0 = all cores")
    common.add_argument("--timing", action="store_true", help="include wall-clock timing")
    common.add_argument("--from-report", help="take inputs from an earlier JSON report")

    setp = argparse.ArgumentParser(add_help=False)
    setp.add_argument("-d", type=int)
    setp.add_argument("--set", help="excited set, e.g. '(0,1);(1,-1)' or '1;2'")

    p = argparse.ArgumentParser(prog="beamnf", description=__doc__)
    p.add_argument("--version", action="version", version=f"beamnf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common, setp], help="set combinatorics, normal form, spectra")
    a.add_argument("-m", type=float, default=1.0)
    a.add_argument("--rho")
    a.add_argument("--nu", type=float, default=DEFAULTS["nu"])
    a.add_argument("--a1-cutoff", type=int, default=None, help="run the spectral-asymptotic check")
    a.add_argument("--delta0", type=float, default=None)

    s = sub.add_parser("scan-m", parents=[common, setp], help="small-divisor scan over the mass")
    s.add_argument("--kind", choices=KINDS, default="D0")
    s.add_argument("--k-cutoff", type=int, default=DEFAULTS["k_cutoff"])
    s.add_argument("--index-cutoff", type=int, default=DEFAULTS["index_cutoff"])
    s.add_argument("--kappa", type=float, default=DEFAULTS["kappa"])
    s.add_argument("--exponent", type=float, default=None)
    s.add_argument("--m-grid", help="start:stop:num")

    v = sub.add_parser("divisors", parents=[common, setp], help="classify one divisor or count trivial ones")
    v.add_argument("-m", type=float, default=None)
    v.add_argument("--kind", choices=KINDS, default=None)
    v.add_argument("--k")
    v.add_argument("--a")
    v.add_argument("--b")
    v.add_argument("--k-cutoff", type=int, default=DEFAULTS["divisor_k_cutoff"])
    v.add_argument("--index-cutoff", type=int, default=DEFAULTS["divisor_index_cutoff"])

    mk = sub.add_parser("melnikov", parents=[common, setp], help="finite Melnikov scan")
    mk.add_argument("-m", type=float, default=1.0)
    mk.add_argument("--rho")
    mk.add_argument("--nu", type=float, default=DEFAULTS["nu"])
    mk.add_argument("--k-cutoff", type=int, default=DEFAULTS["k_cutoff"])
    mk.add_argument("--index-cutoff", type=int, default=DEFAULTS["index_cutoff"])
    mk.add_argument("--tau", type=float, default=None)

    r = sub.add_parser("sample-sets", parents=[common], help="random-set admissibility frequencies")
    r.add_argument("-d", type=int)
    r.add_argument("-n", type=int)
    r.add_argument("-R", help="radius or comma list of radii")
    r.add_argument("--trials", type=int, default=DEFAULTS["trials"])
    r.add_argument("--seed", type=int)
    r.add_argument("--no-strong", action="store_true")

    g = sub.add_parser("spheres", parents=[common], help="lattice sphere cardinalities")
    g.add_argument("-d", type=int, default=3)
    g.add_argument("--rmax", type=int, default=100)
    g.add_argument("--theta", type=float, default=4.0 / 3.0)
    return p


def envelope(command: str, inputs: dict, result: dict, timing: dict | None) -> dict:
    return {"tool": "beamnf", "version": __version__, "schema": SCHEMA_VERSION, "command": command,
            "inputs": inputs, "config": DEFAULTS, "result": result, "timing": timing}


def render_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "min_divisor", "kind", "k", "a", "b"])
    for row in result["rows"]:
        w.writerow([repr(row["m"]), repr(row["min_divisor"]), row["kind"], _fmt_point(row["k"]),
                    _fmt_point(row["a"]), _fmt_point(row["b"])])
    return buf.getvalue()


def load_report_inputs(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            rep = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc
    if rep.get("command") != command:
        raise InputError(f"report is for {rep.get('command')!r}, not {command!r}")
    return rep["inputs"]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    make_inputs, run = COMMANDS[args.command]
    try:
        threads = resolve_threads(args.threads)
        inputs = load_report_inputs(args.from_report, args.command) if args.from_report else make_inputs(args)
        if args.format == "csv" and args.command != "scan-m":
            raise InputError("csv output is only available for scan-m")
        t0 = time.perf_counter()
        result = run(inputs, threads)
        elapsed = time.perf_counter() - t0
    except ClusteredSpectrumError as exc:
        print(f"beamnf: clustered spectrum: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError) as exc:
        print(f"beamnf: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"beamnf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    timing = {"seconds": elapsed, "threads": threads} if args.timing else None
    if args.format == "csv":
        text = render_csv(result)
    else:
        text = json.dumps(jsonable(envelope(args.command, inputs, result, timing)), indent=2) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
