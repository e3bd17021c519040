"""Command line interface.

Matrix literals
---------------
``diag(a,b,c)``, nested lists ``[[a,b],[c,d]]``, flat vectors ``[a,b,c]`` or a
well name (``A1``..``A3``, ``S1``..``S3``, ``Id``). Entries are integers,
decimals or fractions such as ``-2/3``; they are kept exact where the
computation allows it.

Exit codes: 0 success, 2 invalid input or usage, 3 a verification failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import platform
import re
import sys
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import CheckFailure, InvalidInputError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_CHECK = 0, 2, 3
GRID_CAP_3D = 128


# ------------------------------------------------------------------ literals

_NUMBER = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?:/\d+)?")


def _fraction(tok: str) -> Fraction:
    try:
        return Fraction(tok.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidInputError(f"not a number: {tok!r}") from exc


def parse_matrix(text: str) -> np.ndarray:
    """Parse a matrix or vector literal into an object array of ``Fraction``."""
    from .hulls_and_wells import named_triple

    s = text.strip()
    if not s:
        raise InvalidInputError("empty matrix literal")
    m = re.fullmatch(r"diag\((.*)\)", s)
    if m:
        entries = [_fraction(t) for t in m.group(1).split(",")]
        out = np.full((len(entries), len(entries)), Fraction(0), dtype=object)
        for i, e in enumerate(entries):
            out[i, i] = e
        return out
    if s.startswith("["):
        quoted = _NUMBER.sub(lambda mm: f'"{mm.group(0)}"', s)
        try:
            data = json.loads(quoted)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"malformed matrix literal {text!r}") from exc

        def conv(x):
            if isinstance(x, list):
                return [conv(y) for y in x]
            if isinstance(x, str):
                return _fraction(x)
            raise InvalidInputError(f"unexpected entry {x!r} in {text!r}")

        rows = conv(data)
        ragged = any(isinstance(r, list) for r in rows) and (
            not all(isinstance(r, list) for r in rows) or len({len(r) for r in rows}) != 1)
        arr = np.array(rows, dtype=object)
        if ragged or arr.ndim not in (1, 2) or arr.size == 0 or any(isinstance(x, list) for x in arr.flat):
            raise InvalidInputError(f"literal {text!r} is not a vector or rectangular matrix")
        return arr
    try:
        t = named_triple(s)
    except InvalidInputError:
        raise InvalidInputError(f"cannot parse matrix literal {text!r}") from None
    out = np.full((3, 3), Fraction(0), dtype=object)
    for i, e in enumerate(t):
        out[i, i] = e
    return out


def as_float(arr: np.ndarray) -> np.ndarray:
    return np.array(arr.tolist(), dtype=float) if arr.dtype == object else np.asarray(arr, dtype=float)


def parse_number(text: str) -> float:
    return float(_fraction(text))


# ------------------------------------------------------------------ output


def fmt(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x:.17g}"


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def dumps(obj: Any, indent: int = 0) -> str:
    """JSON with every float printed at 17 significant digits, keys sorted."""
    obj = _plain(obj)
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(v, indent + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        # strict JSON has no inf/nan
        return fmt(obj) if math.isfinite(obj) else "null"
    return json.dumps(obj)


def _emit(result: dict, out=None) -> None:
    (out or sys.stdout).write(dumps(result) + "\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(target: str, argv: Sequence[str], outputs: Sequence[str], extra: dict | None = None) -> str:
    """Write ``target + '.manifest.json'`` recording how the outputs were produced."""
    path = target + ".manifest.json"
    data = {
        "argv": list(argv),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("MICROLAM_THREADS", "1"),
        "outputs": {os.path.basename(o): _sha256(o) for o in outputs if os.path.exists(o)},
    }
    if extra:
        data.update(_plain(extra))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(data) + "\n")
    return path


# ------------------------------------------------------------------ energies of files


def field_energies(field, eps: float, F=None, op_name: str = "div", u=None) -> dict:
    """Energies of a stored field; the same routine serves ``build`` and ``energy eval``."""
    from .energy import (
        diagonal_relaxed_energy,
        elastic_energy_pair,
        elastic_energy_relaxed,
        surface_energy,
        two_well_relaxed_energy,
    )
    from .field_grid import PhaseField, field_values
    from .symbol_core import load_operator

    out: dict[str, Any] = {"eps": eps, "grid": field.grid.n, "d": field.grid.d}
    surf = surface_energy(field, periodic=True)
    out["E_surf"] = surf
    relaxed = None
    if F is not None:
        F = np.asarray(F, dtype=float)
        diag_wells = (isinstance(field, PhaseField) and field.value_shape == (field.grid.d,) * 2
                      and all(np.allclose(w, np.diag(np.diag(w))) for w in field.wells))
        if op_name == "div" and isinstance(field, PhaseField) and len(field.wells) == 2:
            relaxed = two_well_relaxed_energy(field.labels == 1, field.wells[0], field.wells[1], F)
        elif op_name == "div" and diag_wells:
            relaxed = diagonal_relaxed_energy(field, F)
        else:
            grid, v = field_values(field)
            vs = v.shape[grid.d:]
            op = load_operator(op_name)
            if op_name == "div" and len(vs) == 2:
                from .symbol_core import divergence

                op = divergence(vs[0], vs[1]) if vs[1] == grid.d else None
                if op is None:
                    raise InvalidInputError("divergence needs one column per grid axis")
            relaxed = elastic_energy_relaxed(field, F, op).value
    out["E_el_relaxed"] = relaxed
    out["E_el_pair"] = elastic_energy_pair(u, field) if u is not None else None
    el = out["E_el_pair"] if out["E_el_pair"] is not None else relaxed
    out["E_total"] = None if el is None else el + eps * surf
    return out


# ------------------------------------------------------------------ commands


def _grid_points(d_field: int, n: int, d_full: int) -> np.ndarray:
    c = (np.arange(n) + 0.5) / n
    pts = np.stack(np.meshgrid(*([c] * d_field), indexing="ij"), axis=-1).reshape(-1, d_field)
    if d_full > d_field:
        pts = np.hstack([pts, np.full((len(pts), d_full - d_field), 0.5)])
    return pts


def _save_outputs(args, field, meta: dict, u=None) -> list[str]:
    from .field_grid import save_field

    paths = [args.out]
    save_field(args.out, field, meta)
    paths.append(args.out + ".json")
    if u is not None:
        save_field(args.out + ".u", u, meta)
        paths += [args.out + ".u", args.out + ".u.json"]
    return paths


def _emit_regions(path: str, rc) -> list[str]:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(rc.to_dict()) + "\n")
    return [path]


def cmd_build(args) -> tuple[dict, list[str], dict]:
    from .field_grid import Grid, PhaseField, rasterize
    from .regions import interface_check
    from .symbol_core import divergence, load_operator

    outputs: list[str] = []
    extra: dict = {}
    if args.kind == "branching":
        from .constructions import BranchingParams, branching_complex, branching_labels, build_two_well_branching

        N = args.N if args.N is not None else max(1, round(args.eps ** (-1.0 / 3)))
        p = BranchingParams(N=N, theta=args.theta, lam=args.lam, d=args.d, variant=args.variant)
        res = build_two_well_branching(p, args.eps)
        rep = interface_check(branching_complex(p, periods=min(2, p.N)), divergence(p.d, p.d))
        result = {"construction": "branching", "params": p.to_dict(), "eps": args.eps,
                  "analytic": res.energy.to_dict(), "E_surf_anisotropic": res.E_surf_anisotropic,
                  "interface": {"passed": rep.passed, "residual": rep.max_residual / rep.scale}}
        F = p.F
        if args.emit_regions:
            outputs += _emit_regions(args.emit_regions, res.region_complex())
        if args.out:
            dg = 2 if (p.d == 2 or args.grid_d == 2) else 3
            n = args.grid if dg == 2 else min(args.grid, GRID_CAP_3D)
            labels = branching_labels(p, _grid_points(dg, n, p.d)).reshape((n,) * dg).astype(np.int64)
            # an extruded section keeps the full wells; the missing wavevector
            # components are zero, which is exact for fields constant along them
            field = PhaseField(Grid(dg, n), labels, np.stack([p.A, p.B]))
            meta = {"eps": args.eps, "F": F.tolist(), "op": "div", "construction": "branching"}
            result["raster"] = field_energies(field, args.eps, F, "div")
            outputs = _save_outputs(args, field, meta) + outputs
    elif args.kind == "t3":
        from .t3_construction import (
            S_MATS,
            T3Params,
            build_t3_laminate,
            paper_schedule,
            rasterize_t3,
            round_schedule,
            t3_region_complex,
            t3_rules,
        )

        F = S_MATS[3] if args.F is None else as_float(parse_matrix(args.F))
        if args.r and args.m and "," not in args.r:
            ratio = float(_fraction(args.r))
            p = T3Params(args.m, round_schedule([ratio**k for k in range(1, args.m + 1)]), args.eps)
        elif args.r:
            r = tuple(_fraction(t) for t in args.r.split(","))
            if args.m is not None and args.m != len(r):
                raise InvalidInputError("--m disagrees with the number of --r values")
            p = T3Params(len(r), r, args.eps)
        elif args.m:
            raise InvalidInputError("--m needs --r (a ratio or a list of widths)")
        else:
            p = paper_schedule(args.eps, t3_rules(F)[2])
        res = build_t3_laminate(p, F, args.eps, increments=True, check=True)
        result = {"construction": "t3", "params": p.to_dict(), "eps": args.eps,
                  "analytic": res.energy.to_dict(), "E_surf_anisotropic": res.E_surf_anisotropic,
                  "increments": res.increments, "bound": res.bound,
                  "interface": {"passed": res.interface_passed, "residual": res.interface_residual}}
        rep_passed = res.interface_passed
        if args.emit_regions:
            outputs += _emit_regions(args.emit_regions, t3_region_complex(p, F))
        if args.out:
            n = min(args.grid, GRID_CAP_3D)
            ras = rasterize_t3(p, n, F)
            field, u = ras.phase_field(), ras.tensor_field()
            meta = {"eps": args.eps, "F": F.tolist(), "op": "div", "construction": "t3"}
            result["raster"] = field_energies(field, args.eps, F, "div", u)
            outputs = _save_outputs(args, field, meta, u) + outputs
        if not rep_passed:
            raise CheckFailure(dumps(result))
        return result, outputs, extra
    else:
        from .constructions import simple_laminate

        if args.A is None or args.B is None:
            raise InvalidInputError("build laminate needs --A and --B")
        A, B = as_float(parse_matrix(args.A)), as_float(parse_matrix(args.B))
        op = load_operator(args.op) if args.op != "div" else divergence(A.shape[0], A.shape[1])
        xi = None if args.xi is None else as_float(parse_matrix(args.xi))
        rc = simple_laminate(A, B, xi, args.lam, args.periods, op)
        rep = interface_check(rc, op) if op.order == 1 else None
        F = args.lam * A + (1 - args.lam) * B
        result = {"construction": "laminate", "regions": len(rc), "eps": args.eps,
                  "E_surf": rc.surface_energy(), "E_el_pair": rc.elastic_energy(),
                  "interface": None if rep is None else {"passed": rep.passed,
                                                         "residual": rep.max_residual / rep.scale}}
        if args.emit_regions:
            outputs += _emit_regions(args.emit_regions, rc)
        if args.out:
            n = args.grid if rc.d == 2 else min(args.grid, GRID_CAP_3D)
            field = rasterize(rc, Grid(rc.d, n)).phase_field()
            meta = {"eps": args.eps, "F": F.tolist(), "op": args.op, "construction": "laminate"}
            result["raster"] = field_energies(field, args.eps, F, args.op)
            outputs = _save_outputs(args, field, meta) + outputs
    if result["interface"] is not None and not result["interface"]["passed"]:
        raise CheckFailure(dumps(result))
    return result, outputs, extra


def cmd_energy(args) -> tuple[dict, list[str], dict]:
    from .field_grid import TensorField, load_field

    field, side = load_field(args.file)
    meta = side.get("meta", {})
    eps = args.eps if args.eps is not None else meta.get("eps")
    if eps is None:
        raise InvalidInputError("no eps given and none recorded with the field")
    F = as_float(parse_matrix(args.F)) if args.F else (np.array(meta["F"]) if "F" in meta else None)
    op = args.op or meta.get("op", "div")
    u = None
    upath = args.u or (args.file + ".u" if os.path.exists(args.file + ".u") else None)
    if upath:
        u, _ = load_field(upath)
        if not isinstance(u, TensorField):
            raise InvalidInputError("--u must name a tensor field")
    return field_energies(field, float(eps), F, op, u), [], {}


def cmd_ops(args) -> tuple[dict, list[str], dict]:
    from .symbol_core import constant_rank_check, load_operator, omega_reduction, wave_cone_contains

    op = load_operator(args.op)
    if args.what == "wave-cone":
        if args.mu is None:
            raise InvalidInputError("ops wave-cone needs --mu")
        mu = as_float(parse_matrix(args.mu)).reshape(-1)
        cert = wave_cone_contains(op, mu)
        return {"member": cert.member, "xi": cert.direction, "residual": cert.residual}, [], {}
    if args.what == "rank":
        rep = constant_rank_check(op, samples=args.samples)
        return {"constant": rep.constant, "min_rank": rep.min_rank, "max_rank": rep.max_rank}, [], {}
    om = omega_reduction(op)
    return {"matrix": om.matrix, "kernel": om.kernel, "shape": list(om.shape)}, [], {}


def cmd_hull(args) -> tuple[dict, list[str], dict]:
    from .hulls_and_wells import hull_decompose, t3_qc_hull_contains

    F = parse_matrix(args.F)
    if args.what == "check":
        mem = t3_qc_hull_contains(F.tolist())
        return {"inside": mem.inside, "kind": mem.kind, "barycentric": mem.barycentric,
                "legs": [list(x) for x in mem.legs]}, [], {}
    dec = hull_decompose(F.tolist())
    return {"kind": dec.kind, "lam": dec.lam, "nu1": dec.nu1, "j": dec.j, "nu2": dec.nu2, "k": dec.k,
            "direction": dec.direction}, [], {}


def cmd_rigidity(args) -> tuple[dict, list[str], dict]:
    from .hulls_and_wells import exact_rigidity_search, well_set_from_names

    names = ["A1", "A2", "A3"] if args.wells.strip().lower() == "t3" else args.wells.split(",")
    ws = well_set_from_names(names)
    found = exact_rigidity_search(args.n, args.d, ws, max_nodes=args.max_nodes)
    constant = sum(1 for f in found if np.all(f == f.flat[0]))
    return {"count": len(found), "constant": constant, "wells": list(ws.names), "n": args.n,
            "d": args.d}, [], {}


def cmd_sweep(args) -> tuple[dict, list[str], dict]:
    from .scaling_lab import SweepConfig, run_sweep

    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = SweepConfig.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise InvalidInputError(f"cannot read sweep config: {exc}") from exc
    table = run_sweep(cfg)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(table.COLUMNS)
        for row in table.rows:
            w.writerow(["" if v is None else fmt(v) if isinstance(v, float) else v for v in row.csv_cells()])
    failed = [r.eps for r in table.rows if r.status != "ok"]
    bad_checks = [r.eps for r in table.rows
                  if r.status == "ok" and (r.checks.get("interface") is False or r.checks.get("ordering") is False)]
    result = {"rows": len(table), "failed_rows": failed, "failed_checks": bad_checks, "out": args.out}
    if bad_checks:
        raise CheckFailure(dumps(result))
    return result, [args.out], {"config": cfg.to_dict()}


def read_sweep_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    eps, E = [], []
    for r in rows:
        if r.get("status", "ok") != "ok" or not r.get("E_total"):
            continue
        eps.append(float(r["eps"]))
        E.append(float(r["E_total"]))
    return np.array(eps), np.array(E)


def cmd_fit(args) -> tuple[dict, list[str], dict]:
    from .scaling_lab import fit_scaling

    eps, E = read_sweep_csv(args.csv)
    models = ("algebraic", "stretched") if args.model == "both" else (args.model,)
    return {m: fit_scaling((eps, E), m).to_dict() for m in models}, [], {}


def _load_phase(path: str):
    from .field_grid import PhaseField, load_field

    field, side = load_field(path)
    if not isinstance(field, PhaseField):
        raise InvalidInputError("diagnostics need a phase field")
    return field, side.get("meta", {})


def cmd_diagnose(args) -> tuple[dict, list[str], dict]:
    from . import scaling_lab as sl

    field, meta = _load_phase(args.file)
    eps = args.eps if args.eps is not None else meta.get("eps")
    if eps is None:
        raise InvalidInputError("no eps given and none recorded with the field")
    F = as_float(parse_matrix(args.F)) if args.F else (np.array(meta["F"]) if "F" in meta else None)
    if args.what == "cones":
        prof = sl.cone_truncation_profile(field, eps, kmax=args.kmax, nu=args.nu, F=F)
        return prof.to_dict(), [], {}
    if args.what == "lowerbound":
        from .energy import AuxConstants, calibrate_aux_constants

        if len(field.wells) != 2:
            raise InvalidInputError("the lower-bound certificate needs a two-well field")
        m = (field.wells[1] - field.wells[0])[:, : field.grid.d]
        if args.constants:
            with open(args.constants, encoding="utf-8") as fh:
                constants = AuxConstants(**json.load(fh))
        elif args.calibrate:
            constants = calibrate_aux_constants(m, d=field.grid.d, lam=args.lam)
        else:
            constants = None
        cert = sl.lower_bound_certificate(field, eps, m, constants, lam=args.lam)
        result = cert.to_dict()
        if not cert.respected:
            raise CheckFailure(dumps(result))
        return result, [], {"calibration": cert.constants}
    # rigidity-estimate
    if args.c_nu is None and not args.calibrate:
        from .errors import CalibrationError

        raise CalibrationError("rigidity constant must be calibrated: pass --c-nu or --calibrate")
    F = np.diag([0.0, 1 / 3, 1.0]) if F is None else F
    c_nu = args.c_nu
    if c_nu is None:
        c_nu = sl.calibrate_rigidity_constant(sl.rigidity_reference_set(seed=args.seed), F, args.nu)
    res = sl.rigidity_estimate_check(field, F, eps, c_nu, args.nu)
    result = {"lhs": res.lhs, "rhs": res.rhs, "passed": res.passed, "c_nu": c_nu, "nu": args.nu,
              "smallest_c": res.smallest_c, "elastic": res.elastic, "surface": res.surface}
    if not res.passed:
        raise CheckFailure(dumps(result))
    return result, [], {"calibration": {"c_nu": c_nu, "nu": args.nu}}


def cmd_replay(args) -> tuple[dict, list[str], dict]:
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            argv = json.load(fh)["argv"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InvalidInputError(f"cannot read manifest: {exc}") from exc
    code = main(argv)
    if code == EXIT_INVALID:
        raise InvalidInputError("replayed command was rejected")
    if code == EXIT_CHECK:
        raise CheckFailure("replayed command failed a check")
    return {}, [], {}


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INVALID)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="microlam", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build", help="build a construction and optionally rasterise it")
    b.add_argument("kind", choices=("branching", "t3", "laminate"))
    b.add_argument("--eps", type=parse_number, default=1e-3)
    b.add_argument("--N", type=int, help="branching periods (default round(eps^-1/3))")
    b.add_argument("--theta", type=parse_number, default=0.3)
    b.add_argument("--lam", "--lambda", dest="lam", type=parse_number, default=0.5)
    b.add_argument("--d", "--dim", dest="d", type=int, default=3)
    b.add_argument("--variant", choices=("upper", "d_dim"), default="upper")
    b.add_argument("--grid-d", type=int, choices=(2, 3), default=3,
                   help="raster dimension for branching fields (2 = extruded section)")
    b.add_argument("--F", help="T3 boundary datum (default S3)")
    b.add_argument("--m", type=int, help="T3 depth; with a single --r value the widths target r^k")
    b.add_argument("--r", help="T3 widths as comma separated fractions (default paper schedule)")
    b.add_argument("--A")
    b.add_argument("--B")
    b.add_argument("--xi")
    b.add_argument("--periods", type=int, default=1)
    b.add_argument("--op", default="div")
    b.add_argument("--grid", type=int, default=64, help="cells per axis of the raster")
    b.add_argument("--out", help="write the rasterised phase field here")
    b.add_argument("--emit-regions", help="write the exact region complex as JSON")
    b.set_defaults(func=cmd_build)

    e = sub.add_parser("energy", help="evaluate energies of a stored field")
    e.add_argument("what", choices=("eval",))
    e.add_argument("file")
    e.add_argument("--eps", type=parse_number)
    e.add_argument("--F")
    e.add_argument("--op")
    e.add_argument("--u", help="tensor field for the pair energy")
    e.set_defaults(func=cmd_energy)

    o = sub.add_parser("ops", help="operator queries")
    o.add_argument("what", choices=("wave-cone", "rank", "omega"))
    o.add_argument("--op", default="div", help="div, div2, curl3, curlcurl2, a JSON file or inline JSON")
    o.add_argument("--mu")
    o.add_argument("--samples", type=int, default=2000)
    o.set_defaults(func=cmd_ops)

    h = sub.add_parser("hull", help="T3 hull membership and lamination recipes")
    h.add_argument("what", choices=("check", "decompose"))
    h.add_argument("--F", required=True)
    h.set_defaults(func=cmd_hull)

    r = sub.add_parser("rigidity", help="exhaustive search for exactly compatible fields")
    r.add_argument("what", choices=("search",))
    r.add_argument("--n", "--grid", dest="n", type=int, default=2)
    r.add_argument("--d", type=int, default=3)
    r.add_argument("--wells", default="t3", help="comma separated well names, or t3")
    r.add_argument("--max-nodes", type=int, default=10**7)
    r.set_defaults(func=cmd_rigidity)

    s = sub.add_parser("sweep", help="run an eps sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit a scaling law to a sweep CSV")
    f.add_argument("csv")
    f.add_argument("--model", choices=("algebraic", "stretched", "both"), default="both")
    f.set_defaults(func=cmd_fit)

    dg = sub.add_parser("diagnose", help="calibrated diagnostics on a stored phase field")
    dg.add_argument("what", choices=("cones", "lowerbound", "rigidity-estimate"))
    dg.add_argument("file")
    dg.add_argument("--eps", type=parse_number)
    dg.add_argument("--F")
    dg.add_argument("--lam", type=parse_number, default=0.5)
    dg.add_argument("--nu", type=parse_number, default=0.25)
    dg.add_argument("--c-nu", type=parse_number)
    dg.add_argument("--kmax", type=int, default=5)
    dg.add_argument("--constants", help="JSON file with calibrated lower-bound constants")
    dg.add_argument("--calibrate", action="store_true", help="calibrate on the declared reference set")
    dg.add_argument("--seed", type=int, default=0)
    dg.set_defaults(func=cmd_diagnose)

    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    try:
        result, outputs, extra = args.func(args)
    except CheckFailure as exc:
        sys.stdout.write(str(exc) + "\n")
        sys.stderr.write("check failed\n")
        return EXIT_CHECK
    except ValidationError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    if args.command == "replay":
        return EXIT_OK
    if outputs:
        write_manifest(outputs[0], argv, outputs, extra)
    _emit(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
