"""Command-line front end and exporters (JSON, SVG for plane curves, OBJ
polylines for space curves and projections of higher-dimensional traces)."""

from __future__ import annotations

import argparse
import json
import sys as _sys
from dataclasses import dataclass, field

import numpy as np

from .driver import ApproxCurve, RunConfig, approx_plot, verify_epsilon
from .geometry import Box
from .poly import CurveSystem, ParseError, PolyError, parse_polynomial
from .solver import TotalDegreeCapError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAP = 3


class InputError(ValueError):
    pass


@dataclass
class JobSpec:
    system: list[str]
    variables: list[str]
    box: list[list[float]]
    config: dict = field(default_factory=dict)

    def validate(self) -> None:
        if len(self.system) != len(self.variables) - 1:
            raise InputError(
                f"need {len(self.variables) - 1} polynomials for {len(self.variables)} "
                f"variables, got {len(self.system)}"
            )
        if len(self.box) != len(self.variables):
            raise InputError("box needs one [lo, hi] pair per variable")
        for pair in self.box:
            if len(pair) != 2 or not pair[0] < pair[1]:
                raise InputError(f"bad box interval {pair}")

    def build(self) -> tuple[CurveSystem, Box]:
        self.validate()
        polys = [parse_polynomial(text, self.variables) for text in self.system]
        lo = [pair[0] for pair in self.box]
        hi = [pair[1] for pair in self.box]
        return CurveSystem(polys), Box(np.asarray(lo), np.asarray(hi))

    @classmethod
    def from_json(cls, data: dict) -> "JobSpec":
        try:
            return cls(
                system=list(data["system"]),
                variables=list(data["variables"]),
                box=[list(p) for p in data["box"]],
                config=dict(data.get("config", {})),
            )
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed job file: {exc}") from exc


# ----------------------------------------------------------------------
# exporters


def _fmt(x: float) -> float:
    return float(format(float(x), ".17g"))


def _fmt_point(p) -> list[float]:
    return [_fmt(v) for v in p]


def export_json(curve: ApproxCurve, config_echo: dict | None = None) -> bytes:
    """Serialize chains, singular points, clusters, diagnostics and stats.

    Floats carry 17 significant digits so parsing the output reproduces the
    vertex values bit-exactly.
    """
    doc = {
        "nvars": curve.nvars,
        "chains": [
            {
                "closed": ch.closed,
                "start_kind": ch.start_kind,
                "end_kind": ch.end_kind,
                "vertices": [_fmt_point(v) for v in ch.vertices],
            }
            for ch in curve.chains
        ],
        "singular_points": [_fmt_point(p) for p in curve.singular_points],
        "clusters": [
            {
                "center": _fmt_point(cl.center),
                "radius": _fmt(cl.radius),
                "members": [_fmt_point(m) for m in cl.members],
            }
            for cl in curve.clusters
        ],
        "jump_reports": [f"curve jump at {loc}: {desc}" for loc, desc in curve.jump_reports],
        "stats": _jsonable(curve.stats),
        "config_echo": _jsonable(config_echo or {}),
    }
    return (json.dumps(doc, indent=2) + "\n").encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return _fmt(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def export_svg(curve: ApproxCurve, box: Box, width_px: int = 800, height_px: int = 800) -> bytes:
    """One SVG path per chain; singular points become filled 3 px circles."""
    if curve.nvars != 2:
        raise InputError("SVG export needs a plane curve")
    lo, hi = box.lower, box.upper
    sx = width_px / (hi[0] - lo[0])
    sy = height_px / (hi[1] - lo[1])

    def to_px(p):
        return (p[0] - lo[0]) * sx, (hi[1] - p[1]) * sy  # y grows downward in SVG

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="0 0 {width_px} {height_px}">',
        f'<rect width="{width_px}" height="{height_px}" fill="white"/>',
    ]
    for ch in curve.chains:
        if len(ch.vertices) < 2:
            continue
        coords = [to_px(v) for v in ch.vertices]
        d = "M " + " L ".join(f"{x:.3f} {y:.3f}" for x, y in coords)
        if ch.closed:
            d += " Z"
        parts.append(f'<path d="{d}" fill="none" stroke="crimson" stroke-width="1.5"/>')
    for p in curve.singular_points:
        x, y = to_px(p)
        parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="3" fill="darkgreen"/>')
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode()


def export_obj(curve: ApproxCurve, projection: tuple[int, int, int] | None = None) -> bytes:
    """OBJ polylines: one "v" record per vertex, one "l" record per chain.

    Traces in more than three variables are projected onto three chosen
    coordinates (default: the first three)."""
    if curve.nvars < 3 and projection is None:
        raise InputError("OBJ export needs at least 3 variables or an explicit projection")
    if projection is None:
        projection = (0, 1, 2)
    if len(projection) != 3 or any(not 0 <= j < curve.nvars for j in projection):
        raise InputError(f"bad projection {projection} for {curve.nvars} variables")
    lines = ["# curvetrace polyline export"]
    index = 1
    records = []
    for ch in curve.chains:
        ids = []
        for v in ch.vertices:
            x, y, z = (float(v[j]) for j in projection)
            lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
            ids.append(index)
            index += 1
        if len(ids) >= 2:
            if ch.closed and ids[0] != ids[-1]:
                ids.append(ids[0])
            records.append("l " + " ".join(str(i) for i in ids))
    lines.extend(records)
    return ("\n".join(lines) + "\n").encode()


# ----------------------------------------------------------------------
# CLI


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="curvetrace",
        description="Polygonal approximation of implicit real algebraic curves in a box.",
    )
    src = ap.add_argument_group("input")
    src.add_argument("--input", help="JSON job file with system/variables/box/config")
    src.add_argument("--expr", action="append", default=[], help="polynomial (repeatable)")
    src.add_argument("--vars", help="comma-separated variable names, e.g. x,y")
    src.add_argument("--box", help='per-variable bounds "lo,hi;lo,hi;..."')
    run = ap.add_argument_group("run")
    run.add_argument("--eps", type=float, help="target approximation distance (required)")
    run.add_argument("--mode", choices=["practical", "robust"], default=None)
    run.add_argument("--coeffs", choices=["exact", "perturbed"], default=None)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--rho", type=float, default=None)
    out = ap.add_argument_group("output")
    out.add_argument("--format", action="append", choices=["json", "svg", "obj"], default=[])
    out.add_argument("-o", "--output", help="output path (base name when multiple formats)")
    out.add_argument("--verify", action="store_true", help="measure one-sided distances to a grid oracle")
    return ap


def _job_from_args(args) -> JobSpec:
    if args.input:
        try:
            with open(args.input, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read job file: {exc}") from exc
        job = JobSpec.from_json(data)
    else:
        if not args.expr or not args.vars or not args.box:
            raise InputError("either --input or all of --expr/--vars/--box are required")
        variables = [v.strip() for v in args.vars.split(",") if v.strip()]
        box = []
        for piece in args.box.split(";"):
            nums = [float(t) for t in piece.split(",")]
            if len(nums) != 2:
                raise InputError(f"bad box interval {piece!r}")
            box.append(nums)
        job = JobSpec(system=list(args.expr), variables=variables, box=box, config={})
    return job


def _config_from(job: JobSpec, args) -> RunConfig:
    cfg = dict(job.config)
    if args.eps is not None:
        cfg["eps"] = args.eps
    if args.mode is not None:
        cfg["mode"] = args.mode
    if args.coeffs is not None:
        cfg["coefficient_mode"] = args.coeffs
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.rho is not None:
        cfg["rho"] = args.rho
    if "coeffs" in cfg:
        cfg["coefficient_mode"] = cfg.pop("coeffs")
    if "eps" not in cfg:
        raise InputError("--eps is required")
    allowed = {
        "eps", "rho", "mode", "coefficient_mode", "seed", "corrector_tol", "imag_tol",
        "dedup_radius", "h_min", "total_degree_cap", "threads", "drop_rule",
        "pseudo_eps", "fence_growth_cap",
    }
    unknown = set(cfg) - allowed
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    try:
        return RunConfig(**cfg)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def run_cli(argv: list[str] | None = None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    try:
        job = _job_from_args(args)
        cfg = _config_from(job, args)
        system, box = job.build()
    except (InputError, ParseError, PolyError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        ap.print_usage(_sys.stderr)
        return EXIT_INPUT

    try:
        curve = approx_plot(system, box, cfg)
    except TotalDegreeCapError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CAP

    for loc, desc in curve.jump_reports:
        print(f"curve jump at {loc}: {desc}", file=_sys.stderr)

    if args.verify:
        report = verify_epsilon(curve, system, box)
        print(f"curve->chain distance: {report.curve_to_chain}")
        print(f"chain->curve distance: {report.chain_to_curve}")

    formats = list(dict.fromkeys(args.format or ["json"]))
    echo = {k: v for k, v in vars(cfg).items()}
    try:
        for fmt in formats:
            if fmt == "json":
                payload = export_json(curve, config_echo=echo)
            elif fmt == "svg":
                payload = export_svg(curve, box)
            else:
                payload = export_obj(curve)
            _write_output(payload, fmt, args.output, multi=len(formats) > 1)
    except InputError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _write_output(payload: bytes, fmt: str, output: str | None, multi: bool) -> None:
    if output is None:
        _sys.stdout.write(payload.decode())
        return
    path = output
    if multi:
        name = output.rsplit("/", 1)[-1]
        base = output[: len(output) - len(name)] + (name.rsplit(".", 1)[0] if "." in name else name)
        path = f"{base}.{fmt}"
    with open(path, "wb") as fh:
        fh.write(payload)


def main() -> None:
    raise SystemExit(run_cli())
