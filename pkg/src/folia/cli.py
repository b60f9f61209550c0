"""Command-line front end.

Every command reads a JSON manifest, writes JSON/CSV results (and SVG
figures unless ``--svg off``) into the output directory and exits with 0 on
success, 2 on a domain error and 1 on I/O or manifest errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from folia import foliation, formats, harmonic, qdiff, rtree, shear

EXIT_OK = 0
EXIT_IO = 1
EXIT_DOMAIN = 2

TOL_QUAD = 1e-8
TOL_SOLVER = 1e-10
TOL_COMPAT = 1e-2

DOMAIN_ERRORS = (qdiff.QDiffError, foliation.FoliationError, rtree.TreeError,
                 harmonic.HarmonicError, shear.ShearError)


class ManifestError(Exception):
    pass


# ------------------------------------------------------------- schemas --

_NUM = {"type": "number"}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_COMPLEX = {"oneOf": [_NUM, _PAIR]}
_POLE = {"oneOf": [{"const": "inf"}, _PAIR]}
_FOURIER = {"type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 3, "maxItems": 3,
                      "prefixItems": [{"type": "integer", "minimum": 0}, _NUM, _NUM]}}
_POS = {"type": "number", "exclusiveMinimum": 0}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


DIFFERENTIAL_SCHEMA = {"oneOf": [
    {"type": "string"},
    _obj({"numerator": {"type": "array", "items": _COMPLEX, "minItems": 1},
          "denominator": {"type": "array", "items": _COMPLEX, "minItems": 1},
          "poles": {"type": "array", "items": _obj({"at": _POLE, "order": {"type": "integer"}},
                                                   ["at", "order"])}},
         ["numerator"]),
    _obj({"order": {"type": "integer", "minimum": 2},
          "sqrt_coeffs": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                      "minItems": 3, "maxItems": 3}}},
         ["order", "sqrt_coeffs"]),
    _obj({"normal_form": _obj({"n": {"type": "integer", "minimum": 3}, "a": _COMPLEX}, ["n"])},
         ["normal_form"]),
]}

PARAM_SCHEMAS = {
    "trace": _obj({"start": _PAIR, "kind": {"enum": ["horizontal", "vertical"]},
                   "orientation": {"enum": [1, -1]}, "max_length": _POS,
                   "max_steps": {"type": "integer", "minimum": 1}}, ["start"]),
    "decompose": _obj({"consistency_tol": _POS}),
    "residue": _obj({"pole": _POLE, "radius": _POS,
                     "npts": {"type": "integer", "minimum": 16}}, ["pole"]),
    "compat": _obj({"pole": _POLE, "radius": _POS,
                    "local_params": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                   ["pole"]),
    "tree": _obj({"n": {"type": "integer", "minimum": 3}, "boundary_measure": {"type": "number", "minimum": 0},
                  "expansion": {"type": "integer", "minimum": 0},
                  "lengths": {"type": "array", "items": {"type": "number", "minimum": 0}},
                  "a0": {"type": "number", "minimum": 0}, "a_last": {"type": "number", "minimum": 0},
                  "root_width": _NUM}, ["n", "boundary_measure"]),
    "solve": _obj({"L": _POS, "mode": {"enum": [harmonic.DIRICHLET, harmonic.PARTIALLY_FREE]},
                   "f_top": _FOURIER, "f_bottom": _FOURIER, "f_fixed": _FOURIER,
                   "method": {"enum": ["cg", "spectral"]}}, ["L", "mode"]),
    "decay": _obj({"f": _FOURIER, "L_values": {"type": "array", "items": _POS, "minItems": 2},
                   "method": {"enum": ["cg", "spectral"]}}, ["f", "L_values"]),
    "exhaust": _obj({"a": _COMPLEX, "n": {"type": "integer", "minimum": 4},
                     "delta": _POS, "i_values": {"type": "array", "items": {"type": "integer", "minimum": 2},
                                                 "minItems": 2}}, ["n", "delta"]),
    "shear": _obj({"s": {"type": "array", "items": _NUM}, "trust_factor": _POS}, ["s"]),
    "dims": _obj({"g": {"type": "integer", "minimum": 0},
                  "orders": {"type": "array", "items": {"type": "integer", "minimum": 3}, "minItems": 1}}),
}

MANIFEST_SCHEMA = _obj({
    "differential": DIFFERENTIAL_SCHEMA,
    "output": {"type": "string"},
    "tolerances": _obj({"quadrature": _POS, "solver": _POS, "compat": _POS}),
    "resolution": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 2},
    "svg": {"type": "boolean"},
    "params": {"type": "object"},
})

NEEDS_DIFFERENTIAL = {"trace", "decompose", "residue", "compat", "shear"}


def validate_manifest(command: str, data) -> dict:
    v = jsonschema.Draft202012Validator
    try:
        v(MANIFEST_SCHEMA).validate(data)
        v(PARAM_SCHEMAS[command]).validate(data.get("params", {}))
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ManifestError(f"manifest invalid at {where}: {err.message}") from None
    if command in NEEDS_DIFFERENTIAL and "differential" not in data:
        raise ManifestError(f"manifest for {command!r} needs a differential")
    return data


def load_manifest(path, command: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ManifestError(f"cannot read manifest: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ManifestError(f"manifest is not valid JSON: {err}") from None
    data = validate_manifest(command, data)
    diff = data.get("differential")
    if isinstance(diff, str):
        ref = Path(diff)
        if not ref.is_absolute():
            ref = Path(path).parent / ref
        if not ref.exists():
            raise ManifestError(f"differential file not found: {ref}")
        try:
            data["differential"] = json.loads(ref.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ManifestError(f"differential file is not valid JSON: {err}") from None
        data = validate_manifest(command, data)
    return data


# ------------------------------------------------------------- helpers --

class Context:
    def __init__(self, command, manifest, args):
        self.command = command
        self.manifest = manifest
        self.params = manifest.get("params", {})
        tol = manifest.get("tolerances", {})
        self.tol_quad = args.tol_quad or tol.get("quadrature", TOL_QUAD)
        self.tol_solver = args.tol_solver or tol.get("solver", TOL_SOLVER)
        self.tol_compat = args.tol_compat or tol.get("compat", TOL_COMPAT)
        self.svg = (args.svg == "on") if args.svg else manifest.get("svg", True)
        self.resolution = args.resolution or manifest.get("resolution")
        self.out = Path(args.out or manifest.get("output", "folia_out"))
        self.written = []

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def json(self, name, obj):
        formats.write_json(self.path(name), obj)

    def differential(self):
        return qdiff.from_manifest(self.manifest["differential"])


def _resolution(text: str):
    try:
        nx, nt = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("resolution must look like NX,NT") from None
    return [nx, nt]


def _fourier(terms):
    def f(theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for n, a, b in terms:
            out = out + a * np.cos(n * theta) + b * np.sin(n * theta)
        return out
    return f


def _cpx(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _pole(v):
    return qdiff.pole_ref_from_json(v)


# ------------------------------------------------------------ commands --

def cmd_trace(ctx: Context):
    q = ctx.differential()
    p = ctx.params
    limits = foliation.TraceLimits(max_length=p.get("max_length", 1e8), max_steps=p.get("max_steps", 20000))
    traj = foliation.trace_trajectory(q, _cpx(p["start"]), p.get("kind", "horizontal"),
                                      p.get("orientation", 1), limits)
    ctx.json("trajectory.json", {**traj.to_json(), "length": traj.length, "drift": traj.drift})
    formats.write_csv(ctx.path("trajectory.csv"), ["s", "re", "im"],
                      zip(traj.natural_parameter.tolist(), traj.points.real.tolist(), traj.points.imag.tolist()))
    if ctx.svg:
        from folia import plotting
        plotting.plot_trajectory(traj, q, ctx.path("trajectory.svg"))


def cmd_decompose(ctx: Context):
    q = ctx.differential()
    if not isinstance(q, qdiff.RationalSphere):
        raise foliation.FoliationError("decomposition needs a rational differential on the sphere")
    sk = foliation.strip_decomposition(q, consistency_tol=ctx.params.get("consistency_tol", 1e-6))
    ctx.json("skeleton.json", {**sk.to_json(), "strip_count": len(sk.strips),
                               "half_plane_count": len(sk.half_planes),
                               "expected_strip_count": sk.euler_count()})
    shear.write_periods_csv(ctx.path("periods.csv"), shear.skeleton_periods(sk))
    if ctx.svg:
        from folia import plotting
        plotting.plot_skeleton(sk, ctx.path("skeleton.svg"))


def cmd_residue(ctx: Context):
    q = ctx.differential()
    pole = _pole(ctx.params["pole"])
    n = q.pole(pole).order
    series = qdiff.residue(q, pole, "series")
    out = {"pole": qdiff.pole_ref_to_json(pole), "order": n,
           "residue": series.canonical()}
    if n % 2 == 0:
        radius = ctx.params.get("radius") or qdiff.default_radius(q, pole)
        contour = qdiff.residue(q, pole, "contour", radius, ctx.params.get("npts", 4096))
        diff = abs(contour.canonical() - series.canonical())
        out.update({"contour_residue": contour.canonical(), "contour_radius": radius,
                    "agree": diff <= ctx.tol_quad * max(1.0, abs(series.value))})
    if n >= 3:
        P = qdiff.principal_part(q, pole)
        out["principal_part"] = list(P.coefficients)
    ctx.json("residue.json", out)


def cmd_compat(ctx: Context):
    q = ctx.differential()
    pole = _pole(ctx.params["pole"])
    P = qdiff.principal_part(q, pole)
    out = {"pole": qdiff.pole_ref_to_json(pole), "order": P.pole_order, "residue": P.residue.canonical()}
    if "local_params" in ctx.params:
        mu = list(ctx.params["local_params"])
    else:
        if isinstance(q, qdiff.LaurentModel) and "radius" not in ctx.params:
            radius = foliation.sink_radius(q)
        else:
            radius = ctx.params.get("radius") or qdiff.default_radius(q, pole)
        dp = foliation.distinguished_points(q, pole, radius, tol=ctx.tol_quad)
        mu = list(dp.arc_measures)
        out.update({"radius": radius, "angles": list(dp.angles), "alternating_sum": dp.alternating_sum()})
    ok, residual = qdiff.check_compatibility(P, mu, ctx.tol_compat)
    out.update({"local_params": mu, "target": 2 * math.pi * P.residue.value.real,
                "residual": residual, "compatible": ok})
    ctx.json("compat.json", out)


def cmd_tree(ctx: Context):
    p = ctx.params
    n = p["n"]
    exp = None
    if "expansion" in p:
        V = n if p["boundary_measure"] > 0 else n - 1
        options = rtree.enumerate_expansions(V) if V >= 3 else []
        if p["expansion"] >= len(options):
            raise rtree.TreeError(f"expansion index {p['expansion']} out of range ({len(options)} types)")
        exp = options[p["expansion"]]
    space = rtree.build_pole_leafspace(n, p["boundary_measure"], exp, p.get("lengths", ()),
                                      p.get("a0", 0.0), p.get("a_last"), p.get("root_width", 0.0))
    tree = space.fundamental_domain
    ctx.json("tree.json", {**tree.to_json(), "case": space.case,
                           "translation_length": space.translation_length,
                           "parameter_dimension": space.parameter_dimension,
                           "strip_widths": list(space.strip_widths)})
    ctx.path("tree.dot").write_text(tree.to_dot(), encoding="utf-8")
    if ctx.svg:
        from folia import plotting
        plotting.plot_tree(tree, ctx.path("tree.svg"), f"pole leaf space, n = {n}")


def _grid_resolution(ctx, default):
    nx, nt = ctx.resolution or default
    return nx, nt


def cmd_solve(ctx: Context):
    p = ctx.params
    nx, nt = _grid_resolution(ctx, (257, 256))
    grid = harmonic.CylinderGrid(p["L"], nx, nt)
    method = p.get("method", "cg")
    if p["mode"] == harmonic.DIRICHLET:
        if "f_top" not in p or "f_bottom" not in p:
            raise ManifestError("dirichlet mode needs f_top and f_bottom")
        fld = harmonic.solve_dirichlet(grid, _fourier(p["f_top"]), _fourier(p["f_bottom"]), method,
                                       ctx.tol_solver)
    else:
        if "f_fixed" not in p:
            raise ManifestError("partially_free mode needs f_fixed")
        fld = harmonic.solve_partially_free(grid, _fourier(p["f_fixed"]), method, ctx.tol_solver)
    summary = {"mode": fld.mode, "L": grid.length, "nx": grid.nx, "ntheta": grid.ntheta,
               "solver": fld.solver, "iterations": fld.iterations, "residual": fld.residual,
               "energy": fld.energy, "max_abs": float(np.max(np.abs(fld.values)))}
    if fld.mode == harmonic.PARTIALLY_FREE:
        summary["free_boundary_max"] = float(np.max(np.abs(fld.free_boundary())))
        summary["normal_derivative_max"] = float(np.max(np.abs(fld.normal_derivative())))
    ctx.json("solve.json", summary)
    harmonic.write_field_csv(ctx.path("field.csv"), fld)
    harmonic.write_folh(ctx.path("field.folh"), fld.values)
    if ctx.svg:
        from folia import plotting
        plotting.plot_field(fld, ctx.path("field.svg"))


def cmd_decay(ctx: Context):
    p = ctx.params
    per_unit, nt = _grid_resolution(ctx, (64, 256))
    rows = harmonic.decay_experiment(_fourier(p["f"]), p["L_values"], per_unit, nt, p.get("method", "cg"))
    cols = ["L", "midline_max", "ratio", "dtheta_max", "dtheta_ratio"]
    harmonic.write_table_csv(ctx.path("decay.csv"), rows, cols)
    slope = harmonic.fitted_slope([r.L for r in rows], [r.midline_max for r in rows])
    K = max(max(r.ratio, r.dtheta_ratio) for r in rows)
    ctx.json("decay.json", {"slope": slope, "K": K, "rows": [[getattr(r, c) for c in cols] for r in rows],
                            "columns": cols})
    if ctx.svg:
        from folia import plotting
        plotting.plot_decay(rows, ctx.path("decay.svg"), slope)


def cmd_exhaust(ctx: Context):
    p = ctx.params
    per_unit, nt = _grid_resolution(ctx, (50, 128))
    rows = harmonic.exhaustion_experiment(_cpx(p.get("a", 0.0)), p["n"], p["delta"],
                                          p.get("i_values", [2, 4, 8, 16, 32]), nt, 1.0 / per_unit)
    cols = ["i", "modulus", "boundary_max", "free_sup"]
    harmonic.write_table_csv(ctx.path("exhaust.csv"), rows, cols)
    ctx.json("exhaust.json", {"columns": cols, "rows": [[getattr(r, c) for c in cols] for r in rows]})
    if ctx.svg:
        from folia import plotting
        plotting.plot_exhaustion(rows, ctx.path("exhaust.svg"))


def cmd_shear(ctx: Context):
    q = ctx.differential()
    sk = foliation.strip_decomposition(q)
    before = shear.strip_periods(q, sk)
    after = shear.apply_shear(before, ctx.params["s"], ctx.params.get("trust_factor", shear.TRUST_FACTOR))
    shear.write_periods_csv(ctx.path("periods.csv"), before)
    shear.write_periods_csv(ctx.path("sheared.csv"), after)
    ctx.json("shear.json", {"before": [p.to_json() for p in before], "after": [p.to_json() for p in after]})
    if ctx.svg:
        from folia import plotting
        plotting.plot_periods(before, after, ctx.path("shear.svg"))


def cmd_dims(ctx: Context, args):
    p = ctx.params
    g = args.g if args.g is not None else p.get("g")
    orders = args.orders or p.get("orders")
    if g is None or not orders:
        raise ManifestError("dims needs g and pole orders (flags --g/--orders or manifest params)")
    d = rtree.mf_dimension(g, orders)
    out = {"chi": d.chi, "boundary_dimension": d.boundary_dimension,
           "pointed_pole_dimensions": list(d.pointed_pole_dimensions),
           "identity_holds": d.identity_holds,
           "compat_space_dimension": qdiff.compat_space_dimension(orders),
           "total_parameter_count": qdiff.total_parameter_count(g, orders)}
    if d.note:
        out["note"] = d.note
    print(json.dumps({"chi": d.chi}))
    if args.out or args.manifest:
        ctx.json("dims.json", out)


COMMANDS = {"trace": cmd_trace, "decompose": cmd_decompose, "residue": cmd_residue,
            "compat": cmd_compat, "tree": cmd_tree, "solve": cmd_solve, "decay": cmd_decay,
            "exhaust": cmd_exhaust, "shear": cmd_shear, "dims": cmd_dims}


# ---------------------------------------------------------------- main --

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--manifest", help="JSON manifest")
    common.add_argument("--out", help="output directory (default: manifest 'output' or ./folia_out)")
    common.add_argument("--tol-quad", type=float, help=f"quadrature tolerance (default {TOL_QUAD:g})")
    common.add_argument("--tol-solver", type=float, help=f"linear solver tolerance (default {TOL_SOLVER:g})")
    common.add_argument("--tol-compat", type=float, help=f"compatibility tolerance (default {TOL_COMPAT:g})")
    common.add_argument("--svg", choices=("on", "off"), help="write SVG figures (default on)")
    common.add_argument("--resolution", type=_resolution, metavar="NX,NT",
                        help="grid size; for decay/exhaust NX is axial nodes per unit length")
    parser = _Parser(prog="folia", description="Quadratic differentials, foliations and harmonic maps.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp_ = sub.add_parser(name, parents=[common])
        if name == "dims":
            sp_.add_argument("--g", type=int)
            sp_.add_argument("--orders", type=int, nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.manifest:
            manifest = load_manifest(args.manifest, args.command)
        elif args.command == "dims":
            manifest = {}
        else:
            raise ManifestError(f"{args.command} needs --manifest")
        ctx = Context(args.command, manifest, args)
        if args.command == "dims":
            cmd_dims(ctx, args)
        else:
            COMMANDS[args.command](ctx)
    except ManifestError as err:
        print(f"folia: {err}", file=sys.stderr)
        return EXIT_IO
    except DOMAIN_ERRORS as err:
        print(f"folia: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as err:
        print(f"folia: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    for p in ctx.written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
