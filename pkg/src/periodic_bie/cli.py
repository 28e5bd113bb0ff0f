"""Command-line driver: ``solve``, ``sweep`` and ``verify`` from a YAML or JSON config.

Exit codes: 0 success, 2 invalid config or arguments, 3 runtime or
admissibility failure, 4 a verdict or invariant failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .analyticity import (
    FamilyInvalidError,
    InsufficientDataError,
    ParameterFamily,
    chebyshev_coefficients,
    fit_decay,
    reports_to_csv,
    sample_traces,
)
from .cell_greens import InvalidCellError, make_cell
from .checks import format_table, run_all
from .geometry import AffineDiffeo, DiffeoMap, InvalidGeometryError, RadialDiffeo, ReferenceCurve
from .potentials import near_boundary_distance
from .solver import (
    DomainError,
    NeumannProblem,
    SingularOperatorError,
    constant_datum,
    cos_datum,
    sin_datum,
    solve,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_VERDICT = 4

NEAR_UPSAMPLE = 8

Pair = tuple[float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CircleGeometry(_Strict):
    kind: Literal["circle"]
    center: Pair = (0.5, 0.5)
    radius: float = Field(0.25, gt=0)
    n: int = 128


class EllipseGeometry(_Strict):
    kind: Literal["ellipse"]
    center: Pair = (0.5, 0.5)
    axes: Pair = (0.2, 0.1)
    n: int = 128


class RadialGeometry(_Strict):
    kind: Literal["radial"]
    center: Pair = (0.5, 0.5)
    radius: float = Field(0.25, gt=0)
    cos_coeffs: list[float] = []
    sin_coeffs: list[float] = []
    n: int = 128


Geometry = Annotated[Union[CircleGeometry, EllipseGeometry, RadialGeometry], Field(discriminator="kind")]


class ConstantDatum(_Strict):
    kind: Literal["constant"]
    value: float = 0.0


class ModeDatum(_Strict):
    kind: Literal["cos", "sin"]
    m: int = Field(1, ge=0)
    amplitude: float = 1.0


class NodeDatum(_Strict):
    kind: Literal["nodes"]
    values: list[float]

    @field_validator("values")
    @classmethod
    def _enough(cls, v):
        if len(v) < 4:
            raise ValueError("need at least 4 node values")
        return v


DatumSpec = Annotated[Union[ConstantDatum, ModeDatum, NodeDatum], Field(discriminator="kind")]


class GridSpec(_Strict):
    x: tuple[float, float, int]
    y: tuple[float, float, int]


class SolveBlock(_Strict):
    probes: list[Pair] = []
    grid: Optional[GridSpec] = None


class FamilySpec(_Strict):
    dq: Pair = (0.0, 0.0)
    dradius: float = 0.0
    dcos: list[float] = []
    dsin: list[float] = []
    ddatum: Optional[DatumSpec] = None
    dk: float = 0.0
    interval: Pair = (-1.0, 1.0)


class SweepBlock(_Strict):
    family: FamilySpec
    probes: list[Pair] = Field(min_length=1)
    degree: int = Field(24, ge=4)


class VerifyBlock(_Strict):
    seed: int = 0
    flip_normals: bool = False


class OutputSpec(_Strict):
    solution: str = "solution.json"
    grid: str = "grid.csv"
    reports: str = "decay.json"
    coefficients: str = "decay.csv"
    checks: str = "checks.json"


class RunConfig(_Strict):
    dimension: int = 2
    cell: Pair = (1.0, 1.0)
    ewald_xi: Optional[float] = None
    geometry: Geometry = CircleGeometry(kind="circle")
    datum: DatumSpec = ModeDatum(kind="cos")
    k: float = 0.0
    solve: Optional[SolveBlock] = None
    sweep: Optional[SweepBlock] = None
    verify: VerifyBlock = VerifyBlock()
    output: OutputSpec = OutputSpec()

    @field_validator("dimension")
    @classmethod
    def _planar(cls, v):
        if v != 2:
            raise ValueError(
                f"dimension {v} is out of scope: this solver handles the planar (n = 2) case only"
            )
        return v

    @model_validator(mode="after")
    def _positive_cell(self):
        if min(self.cell) <= 0:
            raise ValueError("cell edges must be positive")
        return self


class ConfigError(ValueError):
    pass


def _line_index(text: str) -> dict[tuple, int]:
    """Map key paths of a YAML/JSON document to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    index: dict[tuple, int] = {}

    def walk(node, path):
        if node is None:
            return
        index[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key, val in node.value:
                index[path + (key.value,)] = key.start_mark.line + 1
                walk(val, path + (key.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, val in enumerate(node.value):
                walk(val, path + (i,))

    walk(root, ())
    return index


def load_config(path: str | os.PathLike) -> RunConfig:
    """Parse and validate a config file; :class:`ConfigError` carries line/field diagnostics."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{line}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = _line_index(text)
        msgs = []
        for err in exc.errors():
            clean = _data_path(data, tuple(err["loc"]))
            line = next((lines[clean[:i]] for i in range(len(clean), 0, -1) if clean[:i] in lines), None)
            where = f"{path}:{line}" if line else str(path)
            field = ".".join(str(p) for p in clean) or "<root>"
            msgs.append(f"{where}: {field}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from None


def _data_path(data, loc: tuple) -> tuple:
    """Error location restricted to keys of the document (drops union tags and validator names)."""
    node, path = data, []
    for part in loc:
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and isinstance(part, int) and part < len(node):
            node = node[part]
        elif isinstance(node, dict) and isinstance(part, str) and part not in _UNION_TAGS and "[" not in part:
            # missing field: name it, nothing below it exists
            node = None
        else:
            continue
        path.append(part)
    return tuple(path)


_UNION_TAGS = {"circle", "ellipse", "radial", "constant", "cos", "sin", "nodes"}


def build_diffeo(geo) -> DiffeoMap:
    if isinstance(geo, CircleGeometry):
        return RadialDiffeo(tuple(geo.center), geo.radius)
    if isinstance(geo, RadialGeometry):
        return RadialDiffeo(tuple(geo.center), geo.radius, tuple(geo.cos_coeffs), tuple(geo.sin_coeffs))
    return AffineDiffeo(ReferenceCurve(tuple(geo.center), geo.axes[0], geo.axes[1]))


def build_datum(spec):
    if isinstance(spec, ConstantDatum):
        return constant_datum(spec.value)
    if isinstance(spec, NodeDatum):
        return np.asarray(spec.values, dtype=float)
    make = cos_datum if spec.kind == "cos" else sin_datum
    return make(spec.m, spec.amplitude)


def build_problem(cfg: RunConfig) -> NeumannProblem:
    cell = make_cell(*cfg.cell, ewald_xi=cfg.ewald_xi)
    return NeumannProblem(cell, build_diffeo(cfg.geometry), build_datum(cfg.datum), cfg.k, cfg.geometry.n)


def build_family(cfg: RunConfig) -> ParameterFamily:
    fam = cfg.sweep.family
    shape_moves = fam.dradius or any(fam.dcos) or any(fam.dsin)
    if shape_moves and isinstance(cfg.geometry, EllipseGeometry):
        raise ConfigError("sweep.family: shape deltas need a circle or radial geometry")
    return ParameterFamily(
        q0=tuple(cfg.cell),
        diffeo=build_diffeo(cfg.geometry),
        datum=build_datum(cfg.datum),
        k0=cfg.k,
        dq=tuple(fam.dq),
        dr0=fam.dradius,
        dcos=tuple(fam.dcos),
        dsin=tuple(fam.dsin),
        ddatum=None if fam.ddatum is None else build_datum(fam.ddatum),
        dk=fam.dk,
        interval=tuple(fam.interval),
        n=cfg.geometry.n,
        ewald_xi=cfg.ewald_xi,
    )


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float at 17 significant digits; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps_json(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def write_atomic(path: Path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def grid_rows(sol, spec: GridSpec) -> str:
    """CSV of ``x, y, u, u_x, u_y``; value fields are empty at points inside a hole."""
    xs = np.linspace(*spec.x[:2], int(spec.x[2]))
    ys = np.linspace(*spec.y[:2], int(spec.y[2]))
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    hole = sol.bmap.inside_hole(pts)
    dist = sol.bmap.distance_to_nodes(pts)
    u = np.full(len(pts), np.nan)
    g = np.full((len(pts), 2), np.nan)
    guard = near_boundary_distance(sol.bmap)
    far = ~hole & (dist >= guard)
    near = ~hole & (dist < guard) & (dist > 1e-12)
    if np.any(far):
        u[far] = sol.evaluate(pts[far])
        g[far] = sol.gradient(pts[far])
    if np.any(near):
        u[near] = sol.evaluate(pts[near], upsample=NEAR_UPSAMPLE)
        g[near] = sol.gradient(pts[near], upsample=NEAR_UPSAMPLE)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "u", "u_x", "u_y"])
    for p, val, grad in zip(pts, u, g):
        cells = ["", "", ""] if not np.isfinite(val) else [_fmt(val), _fmt(grad[0]), _fmt(grad[1])]
        writer.writerow([_fmt(p[0]), _fmt(p[1]), *cells])
    return buf.getvalue()


def cmd_solve(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    block = cfg.solve or SolveBlock()
    sol = solve(build_problem(cfg))
    doc = sol.to_dict()
    doc["geometry"] = sol.problem.diffeo.describe()
    if block.probes:
        pts = np.asarray(block.probes, dtype=float)
        doc["probes"] = [
            {"x": list(p), "u": float(v), "grad": list(gr)}
            for p, v, gr in zip(pts, sol.evaluate(pts), sol.gradient(pts))
        ]
    write_atomic(out / cfg.output.solution, dumps_json(doc) + "\n")
    if block.grid is not None:
        write_atomic(out / cfg.output.grid, grid_rows(sol, block.grid))
    print(f"residual {_fmt(sol.residual)}  constant {_fmt(sol.constant)}  perimeter {_fmt(sol.perimeter)}")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep: block is required for the sweep command")
    family = build_family(cfg)
    traces = sample_traces(family, cfg.sweep.probes, cfg.sweep.degree, threads=threads)
    reports = []
    for probe, trace in zip(cfg.sweep.probes, traces):
        coeffs = chebyshev_coefficients(trace)
        try:
            reports.append(fit_decay(coeffs, tuple(probe)))
        except InsufficientDataError as exc:
            raise ConfigError(f"sweep: {exc}; raise the degree") from None
    passed = all(r.passed for r in reports)
    doc = {
        "family": family.kind,
        "degree": cfg.sweep.degree,
        "interval": list(family.interval),
        "passed": passed,
        "reports": [r.to_dict() for r in reports],
    }
    write_atomic(out / cfg.output.reports, dumps_json(doc) + "\n")
    write_atomic(out / cfg.output.coefficients, reports_to_csv(reports))
    for r in reports:
        rate = "-" if r.rate is None else _fmt(r.rate)
        r2 = "-" if r.r2 is None else _fmt(r.r2)
        print(f"probe {r.probe}: rho {rate}  r2 {r2}  {r.verdict}")
    return EXIT_OK if passed else EXIT_VERDICT


def cmd_verify(cfg: RunConfig, out: Path, threads: int = 1, seed: int | None = None) -> int:
    results = run_all(
        cfg.cell,
        n=cfg.geometry.n,
        seed=cfg.verify.seed if seed is None else seed,
        flip_normals=cfg.verify.flip_normals,
    )
    print(format_table(results))
    doc = {"cell": list(cfg.cell), "passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    write_atomic(out / cfg.output.checks, dumps_json(doc) + "\n")
    return EXIT_OK if doc["passed"] else EXIT_VERDICT


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periodic-bie", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="YAML or JSON run config (defaults apply when omitted)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for family sweeps")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized invariant points")
    parser.add_argument("--flip-normals", action="store_true", help="debug: reverse boundary normals in verify")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.flip_normals:
            cfg = cfg.model_copy(update={"verify": VerifyBlock(seed=cfg.verify.seed, flip_normals=True)})
        out = Path(args.out)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.threads, args.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FamilyInvalidError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    except (InvalidGeometryError, InvalidCellError, SingularOperatorError, DomainError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
