"""Command-line front end: ``fhbem {mesh,solve,converge,field-grid,validate}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error. CSV files
hold only deterministic quantities (17 significant digits); wall-clock
timings go to the JSON metadata written next to them.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, canonical, config_hash, load_config
from .errors import ConfigurationError, FhbemError, NearSingularityError
from .galerkin import assemble, dump_system, resolve_threads, solve
from .geometry import build_multi_mesh, dof_bounds
from .postprocess import ConvergenceRecord, FieldEvaluator, estimate_orders, sommerfeld_defect
from .kernels import incident_value


class StageError(FhbemError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


@contextlib.contextmanager
def stage(name: str, timings: dict | None = None):
    t0 = time.perf_counter()
    try:
        yield
    except ConfigurationError:
        raise
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, row) -> None:
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} values for {len(self.columns)} columns")
        self.rows.append(list(row))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, stem: str) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, meta_path = out / f"{stem}.csv", out / f"{stem}.json"
        csv_path.write_text(self.to_csv())
        meta_path.write_text(json.dumps(self.metadata, indent=1, sort_keys=True, default=_json_default) + "\n")
        return csv_path, meta_path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _metadata(cfg: ExperimentConfig, command: str, timings: dict, **extra) -> dict:
    meta = {"command": command, "config": canonical(cfg), "config_hash": config_hash(cfg),
            "versions": {"fhbem": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "timings_seconds": timings}
    meta.update(extra)
    return meta


def _h_columns(cfg: ExperimentConfig) -> list[str]:
    return [f"h_{j + 1}" for j in range(len(cfg.obstacle))]


def _probe_columns(cfg: ExperimentConfig, prefix: str) -> list[str]:
    return [f"{prefix}_{i + 1}" for i in range(len(cfg.probes))]


def _dof_window(cfg: ExperimentConfig, h) -> tuple[int, int]:
    lo = hi = 0
    for comp, hj in zip(cfg.obstacle.components, h):
        a, b = dof_bounds(comp, hj)
        lo, hi = lo + a, hi + b
    return lo, hi


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def run_mesh(cfg: ExperimentConfig, out_dir=None) -> ResultTable:
    timings = {}
    h = _require_h(cfg)
    with stage("mesh", timings):
        mesh = build_multi_mesh(cfg.obstacle, h)
    n = cfg.obstacle.ambient_dim
    table = ResultTable(["component", "word", "diameter", "measure"] + [f"x{i + 1}" for i in range(n)])
    for el in mesh:
        table.add([el.component_index + 1, ".".join(map(str, el.word)) or "-", el.diameter, el.measure,
                   *el.barycentre.tolist()])
    lo, hi = _dof_window(cfg, h)
    table.metadata = _metadata(cfg, "mesh", timings, counts=mesh.counts, dof_bounds=[lo, hi])
    if out_dir is not None:
        table.write(out_dir, f"{cfg.name}_mesh")
    return table


def _require_h(cfg: ExperimentConfig) -> tuple:
    if cfg.h is not None:
        return cfg.h
    if cfg.ladder is not None:
        return cfg.ladder.h[0]
    raise ConfigurationError("mesh: this command needs a 'mesh' section (or a ladder)")


def run_solve(cfg: ExperimentConfig, out_dir=None, threads=None) -> ResultTable:
    timings = {}
    h = _require_h(cfg)
    with stage("mesh", timings):
        mesh = build_multi_mesh(cfg.obstacle, h)
    with stage("assemble", timings):
        system = assemble(mesh, cfg.wave, cfg.incident, cfg.quad, threads=threads)
    with stage("solve", timings):
        sol = solve(system)
    with stage("probes", timings):
        ev = FieldEvaluator(sol, cfg.quad)
        vals = [ev.point(p) for p in cfg.probes]
    cols = _h_columns(cfg) + ["dof", "residual_norm", "condition_estimate"]
    cols += [c for i in range(len(cfg.probes)) for c in (f"probe_{i + 1}_re", f"probe_{i + 1}_im")]
    row = list(h) + [len(mesh), sol.residual_norm, sol.condition_estimate]
    row += [x for v in vals for x in (v.real, v.imag)]
    extra = {}
    if cfg.sommerfeld:
        with stage("sommerfeld", timings):
            defect = sommerfeld_defect(sol, cfg.sommerfeld["radii"], cfg.sommerfeld["directions"], cfg=cfg.quad)
        for a, r in enumerate(cfg.sommerfeld["radii"]):
            for b in range(len(cfg.sommerfeld["directions"])):
                cols.append(f"sommerfeld_r{a + 1}_d{b + 1}")
                row.append(defect[a, b])
        extra["sommerfeld_radii"] = cfg.sommerfeld["radii"]
    table = ResultTable(cols)
    table.add(row)
    table.metadata = _metadata(cfg, "solve", timings, stats=system.stats, **extra)
    if out_dir is not None:
        table.write(out_dir, f"{cfg.name}_solve")
        dump_system(system, Path(out_dir) / f"{cfg.name}_system.bin")
        np.savetxt(Path(out_dir) / f"{cfg.name}_coeffs.csv",
                   np.c_[sol.coeffs.real, sol.coeffs.imag], fmt="%.17g", delimiter=",",
                   header="re,im", comments="")
    return table


def pipeline_level(cfg: ExperimentConfig, h, quad, threads=None):
    """Mesh, assemble, solve and probe at mesh size ``h``; returns (dof, probe values, info)."""
    mesh = build_multi_mesh(cfg.obstacle, h)
    sol = solve(assemble(mesh, cfg.wave, cfg.incident, quad, threads=threads))
    ev = FieldEvaluator(sol, quad)
    vals = np.array([ev.point(p) for p in cfg.probes])
    return len(mesh), vals, {"condition_estimate": sol.condition_estimate, "residual_norm": sol.residual_norm}


def run_converge(cfg: ExperimentConfig, out_dir=None, threads=None, level_runner=None) -> ResultTable:
    """Run every ladder level against a reference and estimate orders.

    ``level_runner(h, quad) -> (dof, probe_values, info)`` replaces the
    pipeline (used to inject synthetic errors). Failed levels produce a row
    marked ``failed:<error>`` and the run continues.
    """
    if cfg.ladder is None:
        raise ConfigurationError("ladder: converge needs a 'ladder' section")
    if not len(cfg.probes):
        raise ConfigurationError("probes: converge needs at least one probe point")
    runner = level_runner or (lambda h, q: pipeline_level(cfg, h, q, threads))
    timings = {}
    lad = cfg.ladder
    if lad.reference_values is not None:
        ref = np.asarray(lad.reference_values, dtype=complex)
    else:
        fine = tuple(hj * c.ifs.rho_max ** lad.fine_levels for hj, c in zip(lad.h[-1], cfg.obstacle.components))
        with stage("reference", timings):
            ref_dof, ref, _ = runner(fine, cfg.quad.doubled())
    cols = ["level"] + _h_columns(cfg) + ["dof", "dof_lo", "dof_hi", "condition_estimate"]
    cols += _probe_columns(cfg, "err") + _probe_columns(cfg, "order") + ["status"]
    table = ResultTable(cols)
    records = []
    failures = 0
    np_ = len(cfg.probes)
    for lvl, h in enumerate(lad.h):
        lo, hi = _dof_window(cfg, h)
        try:
            with stage(f"level {lvl + 1}", timings):
                dof, vals, info = runner(h, cfg.quad)
        except StageError as exc:
            failures += 1
            table.add([lvl + 1, *h, 0, lo, hi, math.nan] + [math.nan] * (2 * np_)
                      + [f"failed:{type(exc.cause).__name__}"])
            continue
        err = np.abs(np.asarray(vals) - ref) / np.maximum(np.abs(ref), 1e-300)
        records.append(ConvergenceRecord(tuple(h), dof, err))
        orders = estimate_orders(records) if len(records) >= 3 else np.full(np_, math.nan)
        records[-1].estimated_orders = orders
        status = "ok" if lo <= dof <= hi else "dof-out-of-bounds"
        table.add([lvl + 1, *h, dof, lo, hi, info.get("condition_estimate", math.nan)]
                  + err.tolist() + orders.tolist() + [status])
    final = records[-1].estimated_orders.tolist() if len(records) >= 3 else []
    table.metadata = _metadata(cfg, "converge", timings, estimated_orders=final, failed_levels=failures,
                               reference_values=[[v.real, v.imag] for v in ref])
    if out_dir is not None:
        table.write(out_dir, f"{cfg.name}_converge")
    return table


def run_field_grid(cfg: ExperimentConfig, out_dir=None, threads=None) -> ResultTable:
    if cfg.grid is None:
        raise ConfigurationError("field_grid: this command needs a 'field_grid' section")
    timings = {}
    h = _require_h(cfg)
    with stage("mesh", timings):
        mesh = build_multi_mesh(cfg.obstacle, h)
    with stage("assemble", timings):
        system = assemble(mesh, cfg.wave, cfg.incident, cfg.quad, threads=threads)
    with stage("solve", timings):
        sol = solve(system)
    axes = [np.linspace(a, b, c) for a, b, c in cfg.grid.axes]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    n = len(axes)
    table = ResultTable([f"x{i + 1}" for i in range(n)] + ["re", "im", "abs", "status"])
    ev = FieldEvaluator(sol, cfg.quad)
    with stage("field", timings):
        for p in pts:
            status = "ok"
            try:
                val = 0j if cfg.grid.kind == "incident" else ev.point(p)
                if cfg.grid.kind != "scattered":
                    val += incident_value(cfg.incident, p, cfg.wave)
            except NearSingularityError as exc:
                val, status = complex(math.nan, math.nan), f"near-element-{exc.element_index}"
            table.add([*p.tolist(), val.real, val.imag, abs(val), status])
    table.metadata = _metadata(cfg, "field-grid", timings, kind=cfg.grid.kind)
    if out_dir is not None:
        table.write(out_dir, f"{cfg.name}_field")
    return table


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def _production_value(case_id: str) -> tuple[complex, float]:
    """Production-path value for a fixture case and its relative tolerance."""
    from . import presets
    from .geometry import attractor_barycentre, attractor_diameter
    from .quadrature import QuadConfig, self_interaction_log, self_interaction_power, single_integral
    from .special import hankel1_0

    head, _, tail = case_id.partition("/")
    if head == "hankel1_0":
        return hankel1_0(float(tail.split("=")[1])), 1e-10
    if head in ("interval", "cantor") or head.startswith("cantor_ratio="):
        comp = presets.interval() if head == "interval" else (
            presets.cantor(ratio=float(head.split("=")[1])) if "=" in head else presets.cantor())
        if tail == "log":
            return self_interaction_log(comp), 1e-4
        if tail.startswith("power/t="):
            return self_interaction_power(comp, float(tail.split("=")[1])), 1e-4
        if tail == "x^3":
            return single_integral(comp.element(()), lambda x: x[:, 0] ** 3, QuadConfig(depth=10)), 1e-6
    if head == "sierpinski":
        b = attractor_barycentre(presets.sierpinski())
        return float(b[0 if tail.endswith("_x") else 1]), 1e-12
    if head == "koch" and tail == "diameter":
        return attractor_diameter(presets.koch_curve(exact_diameter=False)), 1e-4
    raise ConfigurationError(f"fixture case {case_id!r} has no production counterpart")


def _invariant_checks():
    from . import presets
    from .geometry import Obstacle
    from .kernels import PlaneWave, Wave

    geos = {"interval": presets.interval(), "cantor": presets.cantor(), "koch": presets.koch_curve(),
            "sierpinski": presets.sierpinski(), "snowflake": presets.koch_snowflake()}
    for name, comp in geos.items():
        for lvl in range(1, 5):
            h = comp.diam * comp.ifs.rho_max ** lvl
            mesh = build_multi_mesh(Obstacle((comp,)), h)
            mass_ok = abs(mesh.measures.sum() - comp.weight) <= 1e-10
            window_ok = all(comp.ifs.rho_min * h < e.diameter <= h * (1 + 1e-12) for e in mesh)
            lo, hi = dof_bounds(comp, h)
            yield f"mesh-laws/{name}/level={lvl}", mass_ok and window_ok and lo <= len(mesh) <= hi, ""
    mesh = build_multi_mesh(Obstacle((presets.interval(),)), 1 / 8)
    a = assemble(mesh, Wave(1.0, 2), PlaneWave(np.array([1.0, 0.0]))).matrix
    sym = float(np.max(np.abs(a - a.T)) / np.max(np.abs(a)))
    yield "galerkin/symmetry/segment", sym <= 1e-12, f"{sym:.2e}"


def run_validate(fixture_path=None) -> tuple[bool, list[str]]:
    """Compare oracle fixtures with production values and run quick invariant suites."""
    from .validation import load_fixtures

    fixtures = load_fixtures(fixture_path)
    lines, ok = [], True
    for case_id, row in sorted(fixtures.items()):
        try:
            value, rtol = _production_value(case_id)
        except ConfigurationError:
            raise
        except FhbemError as exc:
            ok = False
            lines.append(f"FAIL {case_id}: {type(exc).__name__}: {exc}")
            continue
        ref = complex(row["value_re"], row["value_im"])
        diff = abs(complex(value) - ref)
        tol = rtol * max(1.0, abs(ref)) + 2.0 * float(row["est_error"])
        passed = diff <= tol
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {case_id}: |production - oracle| = {diff:.3e} "
                     f"(tolerance {tol:.3e})")
    for name, passed, note in _invariant_checks():
        ok &= bool(passed)
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}" + (f": {note}" if note else ""))
    return ok, lines


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fhbem", description="Helmholtz scattering by multifractal obstacles")
    parser.add_argument("--version", action="version", version=f"fhbem {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("mesh", "build and list the self-similar mesh"),
                           ("solve", "assemble, solve and evaluate probes"),
                           ("converge", "run a refinement ladder against a reference"),
                           ("field-grid", "evaluate the field on a grid")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", default=None, help="output directory (default: config output.dir or .)")
        p.add_argument("--threads", type=int, default=None, help="assembly threads (default: $FHBEM_THREADS or 1)")
        p.add_argument("--seed", type=int, default=None, help="reserved; the solver uses no randomness")
    p = sub.add_parser("validate", help="compare oracle fixtures and run invariant suites")
    p.add_argument("--fixtures", default=None, help="fixture JSON (default: packaged fixtures)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            ok, lines = run_validate(args.fixtures)
            print("\n".join(lines))
            print("validate: all checks passed" if ok else "validate: FAILURES")
            return 0 if ok else 1
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config)
        out = args.out or cfg.output_dir or "."
        runner = {"mesh": lambda: run_mesh(cfg, out),
                  "solve": lambda: run_solve(cfg, out, threads),
                  "converge": lambda: run_converge(cfg, out, threads),
                  "field-grid": lambda: run_field_grid(cfg, out, threads)}[args.command]
        table = runner()
        print(f"{args.command}: wrote {len(table.rows)} rows to {out}")
        if args.command == "converge" and table.metadata.get("failed_levels"):
            print(f"converge: {table.metadata['failed_levels']} level(s) failed", file=sys.stderr)
            return 1
        return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        if isinstance(exc.cause, ConfigurationError):
            print(f"configuration error: {exc}", file=sys.stderr)
            return 2
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FhbemError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
