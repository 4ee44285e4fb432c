"""JSON experiment configuration: parsing, validation and canonical form.

Every key is checked; unknown keys and malformed values raise
:class:`ConfigurationError` naming the offending field path, e.g.
``obstacle.components[1].maps[0].scale``. :func:`canonical` returns the
config with every default filled in; parsing the canonical form again yields
the same canonical form.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import presets
from .errors import ConfigurationError, FhbemError
from .geometry import IFS, Component, ComponentKind, Obstacle, Similarity
from .kernels import PlaneWave, PointSource, Wave
from .quadrature import QuadConfig

OBSTACLE_PRESETS = {"koch_snowflake_obstacle": presets.koch_snowflake_obstacle}

_QUAD_FIELDS = ("depth", "eta", "max_recursion", "singular_terms", "max_pairs",
                "table_ratio", "table_max_leaves", "max_unknowns")


@dataclass(frozen=True)
class LadderSpec:
    h: tuple                  # one per-component h tuple per level
    fine_levels: int = 2
    reference_values: np.ndarray | None = None


@dataclass(frozen=True)
class GridSpec:
    axes: tuple               # per axis (start, stop, count)
    kind: str = "total"


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    obstacle: Obstacle
    wave: Wave
    incident: object
    h: tuple | None
    ladder: LadderSpec | None
    quad: QuadConfig
    probes: np.ndarray
    grid: GridSpec | None
    sommerfeld: dict | None
    output_dir: str | None
    raw: dict


def _err(path: str, msg: str) -> ConfigurationError:
    return ConfigurationError(f"{path}: {msg}")


def _check_keys(obj, path: str, allowed, required=()):
    if not isinstance(obj, dict):
        raise _err(path, f"expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            raise _err(f"{path}.{key}" if path else key, "unknown key")
    for key in required:
        if key not in obj:
            raise _err(f"{path}.{key}" if path else key, "missing required key")


def _num(v, path, lo=-math.inf, hi=math.inf, strict_lo=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _err(path, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v) or v < lo or v > hi or (strict_lo and v == lo):
        raise _err(path, f"value {v} out of range")
    return v


def _int(v, path, lo=0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise _err(path, f"expected an integer >= {lo}, got {v!r}")
    return v


def _vec(v, path, n=None) -> list:
    if not isinstance(v, list) or not v:
        raise _err(path, "expected a list of numbers")
    out = [_num(x, f"{path}[{i}]") for i, x in enumerate(v)]
    if n is not None and len(out) != n:
        raise _err(path, f"expected {n} entries, got {len(out)}")
    return out


# ---------------------------------------------------------------------------
# obstacle
# ---------------------------------------------------------------------------

def _parse_map(raw, path, n) -> tuple[Similarity, dict]:
    _check_keys(raw, path, ("scale", "angle", "reflect", "matrix", "translation"), ("scale", "translation"))
    scale = _num(raw["scale"], f"{path}.scale", 0.0, 1.0, strict_lo=True)
    trans = _vec(raw["translation"], f"{path}.translation", n)
    canon = {"scale": scale, "translation": trans}
    if "matrix" in raw:
        if "angle" in raw or "reflect" in raw:
            raise _err(path, "give either matrix or angle/reflect, not both")
        mat = raw["matrix"]
        if not isinstance(mat, list) or len(mat) != n:
            raise _err(f"{path}.matrix", f"expected a {n}x{n} matrix")
        rows = [_vec(r, f"{path}.matrix[{i}]", n) for i, r in enumerate(mat)]
        try:
            sim = Similarity(scale, np.array(rows), np.array(trans))
        except ConfigurationError as exc:
            raise _err(f"{path}.matrix", str(exc)) from None
        canon["matrix"] = rows
    else:
        if n != 2:
            raise _err(path, "rotations in R^3 must be given as a 3x3 matrix")
        angle = _num(raw.get("angle", 0.0), f"{path}.angle")
        reflect = raw.get("reflect", False)
        if not isinstance(reflect, bool):
            raise _err(f"{path}.reflect", "expected true or false")
        sim = Similarity.planar(scale, angle, trans, reflect)
        canon.update(angle=angle, reflect=reflect)
    if not sim.scale < 1.0:
        raise _err(f"{path}.scale", "maps must be contractions")
    return sim, canon


def _parse_component(raw, path, n) -> tuple[Component, dict]:
    common = ("weight", "kind", "declared_disjoint", "diameter", "d")
    if "preset" in raw:
        _check_keys(raw, path, ("preset", "params", "weight"), ("preset",))
        name = raw["preset"]
        if name not in presets.PRESETS:
            raise _err(f"{path}.preset", f"unknown preset {name!r}; choose from {sorted(presets.PRESETS)}")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise _err(f"{path}.params", "expected an object")
        weight = _num(raw.get("weight", 1.0), f"{path}.weight", 0.0, strict_lo=True)
        try:
            comp = presets.PRESETS[name](**params, weight=weight)
        except TypeError as exc:
            raise _err(f"{path}.params", str(exc)) from None
        if comp.ambient_dim != n:
            raise _err(path, f"preset lives in R^{comp.ambient_dim}, obstacle in R^{n}")
        return comp, {"preset": name, "params": params, "weight": weight}
    _check_keys(raw, path, ("maps",) + common, ("maps",))
    if not isinstance(raw["maps"], list):
        raise _err(f"{path}.maps", "expected a list")
    parsed = [_parse_map(m, f"{path}.maps[{i}]", n) for i, m in enumerate(raw["maps"])]
    try:
        ifs = IFS(tuple(p[0] for p in parsed), n)
    except ConfigurationError as exc:
        raise _err(f"{path}.maps", str(exc)) from None
    d = raw.get("d", "moran")
    if d != "moran":
        d = _num(d, f"{path}.d")
    kind = raw.get("kind", "fractal")
    if kind not in ("fractal", "interior"):
        raise _err(f"{path}.kind", "expected 'fractal' or 'interior'")
    disjoint = raw.get("declared_disjoint", False)
    if not isinstance(disjoint, bool):
        raise _err(f"{path}.declared_disjoint", "expected true or false")
    diameter = raw.get("diameter")
    if diameter is not None:
        diameter = _num(diameter, f"{path}.diameter", 0.0, strict_lo=True)
    weight = _num(raw.get("weight", 1.0), f"{path}.weight", 0.0, strict_lo=True)
    try:
        comp = Component(ifs, None if d == "moran" else d, weight, ComponentKind(kind), disjoint, diameter)
    except ConfigurationError as exc:
        raise _err(path, str(exc)) from None
    canon = {"maps": [p[1] for p in parsed], "d": d, "weight": weight, "kind": kind,
             "declared_disjoint": disjoint, "diameter": diameter}
    return comp, canon


def _parse_obstacle(raw, path) -> tuple[Obstacle, dict]:
    if "preset" in raw:
        _check_keys(raw, path, ("preset", "params"), ("preset",))
        name = raw["preset"]
        if name not in OBSTACLE_PRESETS:
            raise _err(f"{path}.preset", f"unknown obstacle preset {name!r}")
        params = raw.get("params", {})
        try:
            obs = OBSTACLE_PRESETS[name](**params)
        except TypeError as exc:
            raise _err(f"{path}.params", str(exc)) from None
        return obs, {"preset": name, "params": params}
    _check_keys(raw, path, ("ambient_dim", "components"), ("ambient_dim", "components"))
    n = raw["ambient_dim"]
    if n not in (2, 3):
        raise _err(f"{path}.ambient_dim", "expected 2 or 3")
    comps = raw["components"]
    if not isinstance(comps, list) or not comps:
        raise _err(f"{path}.components", "expected a non-empty list")
    parsed = [_parse_component(c, f"{path}.components[{i}]", n) for i, c in enumerate(comps)]
    return Obstacle(tuple(p[0] for p in parsed), n), {"ambient_dim": n, "components": [p[1] for p in parsed]}


# ---------------------------------------------------------------------------
# remaining sections
# ---------------------------------------------------------------------------

def _parse_h(raw, path, obstacle: Obstacle, relative: bool) -> tuple:
    j = len(obstacle)
    vals = [raw] * j if not isinstance(raw, list) else raw
    if len(vals) != j:
        raise _err(path, f"expected {j} mesh sizes (one per component), got {len(vals)}")
    out = []
    for i, (v, c) in enumerate(zip(vals, obstacle.components)):
        v = _num(v, f"{path}[{i}]" if isinstance(raw, list) else path, 0.0, strict_lo=True)
        v = v * c.diam if relative else v
        if v > c.diam * (1 + 1e-12):
            raise _err(f"{path}[{i}]" if isinstance(raw, list) else path,
                       f"mesh size {v} exceeds the component diameter {c.diam}")
        out.append(v)
    return tuple(out)


def _parse_incident(raw, path, n):
    _check_keys(raw, path, ("type", "direction", "location"), ("type",))
    if raw["type"] == "plane":
        _check_keys(raw, path, ("type", "direction"), ("direction",))
        d = _vec(raw["direction"], f"{path}.direction", n)
        try:
            return PlaneWave(np.array(d)), {"type": "plane", "direction": d}
        except ConfigurationError as exc:
            raise _err(f"{path}.direction", str(exc)) from None
    if raw["type"] == "point":
        _check_keys(raw, path, ("type", "location"), ("location",))
        loc = _vec(raw["location"], f"{path}.location", n)
        return PointSource(np.array(loc)), {"type": "point", "location": loc}
    raise _err(f"{path}.type", "expected 'plane' or 'point'")


def _parse_quad(raw, path) -> tuple[QuadConfig, dict]:
    _check_keys(raw, path, _QUAD_FIELDS)
    kwargs = {}
    for key, val in raw.items():
        if key == "singular_terms" and val is None:
            kwargs[key] = None
        elif key in ("eta", "table_ratio"):
            kwargs[key] = _num(val, f"{path}.{key}")
        else:
            kwargs[key] = _int(val, f"{path}.{key}")
    try:
        q = QuadConfig(**kwargs)
    except ConfigurationError as exc:
        raise _err(path, str(exc)) from None
    return q, {f: getattr(q, f) for f in _QUAD_FIELDS}


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config dictionary."""
    _check_keys(raw, "", ("name", "obstacle", "wave", "incident", "mesh", "ladder", "quadrature",
                          "probes", "field_grid", "sommerfeld", "output"),
                ("obstacle", "wave", "incident"))
    name = raw.get("name", "experiment")
    if not isinstance(name, str):
        raise _err("name", "expected a string")
    obstacle, c_obs = _parse_obstacle(raw["obstacle"], "obstacle")
    n = obstacle.ambient_dim

    _check_keys(raw["wave"], "wave", ("k", "n"), ("k",))
    k = _num(raw["wave"]["k"], "wave.k", 0.0, strict_lo=True)
    if raw["wave"].get("n", n) != n:
        raise _err("wave.n", f"must equal the obstacle dimension {n}")
    wave = Wave(k, n)
    incident, c_inc = _parse_incident(raw["incident"], "incident", n)

    h, c_mesh = None, None
    if "mesh" in raw:
        _check_keys(raw["mesh"], "mesh", ("h", "relative"), ("h",))
        rel = raw["mesh"].get("relative", False)
        if not isinstance(rel, bool):
            raise _err("mesh.relative", "expected true or false")
        h = _parse_h(raw["mesh"]["h"], "mesh.h", obstacle, rel)
        c_mesh = {"h": raw["mesh"]["h"], "relative": rel}

    ladder, c_lad = None, None
    if "ladder" in raw:
        lad = raw["ladder"]
        _check_keys(lad, "ladder", ("h", "relative", "fine_levels", "reference_values"), ("h",))
        rel = lad.get("relative", False)
        if not isinstance(lad["h"], list) or len(lad["h"]) < 3:
            raise _err("ladder.h", "expected a list of at least 3 levels")
        hs = tuple(_parse_h(v, f"ladder.h[{i}]", obstacle, rel) for i, v in enumerate(lad["h"]))
        for i in range(1, len(hs)):
            if not max(hs[i]) < max(hs[i - 1]):
                raise _err(f"ladder.h[{i}]", "mesh sizes must decrease from level to level")
        fine = _int(lad.get("fine_levels", 2), "ladder.fine_levels")
        ref = lad.get("reference_values")
        ref_arr = None
        if ref is not None:
            if not isinstance(ref, list):
                raise _err("ladder.reference_values", "expected a list of [re, im] pairs")
            pairs = [_vec(v, f"ladder.reference_values[{i}]", 2) for i, v in enumerate(ref)]
            ref_arr = np.array([complex(a, b) for a, b in pairs])
        ladder = LadderSpec(hs, fine, ref_arr)
        c_lad = {"h": lad["h"], "relative": rel, "fine_levels": fine, "reference_values": ref}

    quad, c_quad = _parse_quad(raw.get("quadrature", {}), "quadrature")

    probes_raw = raw.get("probes", [])
    if not isinstance(probes_raw, list):
        raise _err("probes", "expected a list of points")
    probes = np.array([_vec(p, f"probes[{i}]", n) for i, p in enumerate(probes_raw)]).reshape(-1, n)
    if ladder is not None and ladder.reference_values is not None and len(ladder.reference_values) != len(probes):
        raise _err("ladder.reference_values", "need one reference value per probe")

    grid, c_grid = None, None
    if "field_grid" in raw:
        g = raw["field_grid"]
        _check_keys(g, "field_grid", ("axes", "kind"), ("axes",))
        axes = g["axes"]
        if not isinstance(axes, list) or len(axes) != n:
            raise _err("field_grid.axes", f"expected {n} axes of [start, stop, count]")
        parsed = []
        for i, ax in enumerate(axes):
            v = _vec(ax, f"field_grid.axes[{i}]", 3)
            if v[2] != int(v[2]) or v[2] < 1:
                raise _err(f"field_grid.axes[{i}]", "count must be a positive integer")
            parsed.append((v[0], v[1], int(v[2])))
        kind = g.get("kind", "total")
        if kind not in ("scattered", "total", "incident"):
            raise _err("field_grid.kind", "expected scattered, total or incident")
        grid = GridSpec(tuple(parsed), kind)
        c_grid = {"axes": [list(a) for a in parsed], "kind": kind}

    som, c_som = None, None
    if "sommerfeld" in raw:
        s = raw["sommerfeld"]
        _check_keys(s, "sommerfeld", ("radii", "directions"), ("radii", "directions"))
        radii = _vec(s["radii"], "sommerfeld.radii")
        dirs = [_vec(d, f"sommerfeld.directions[{i}]", n) for i, d in enumerate(s["directions"])]
        som = {"radii": radii, "directions": dirs}
        c_som = som

    out_dir = None
    if "output" in raw:
        _check_keys(raw["output"], "output", ("dir",))
        out_dir = raw["output"].get("dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise _err("output.dir", "expected a string")

    canon = {"name": name, "obstacle": c_obs, "wave": {"k": k, "n": n}, "incident": c_inc,
             "quadrature": c_quad, "probes": probes.tolist()}
    for key, val in (("mesh", c_mesh), ("ladder", c_lad), ("field_grid", c_grid), ("sommerfeld", c_som)):
        if val is not None:
            canon[key] = val
    if out_dir is not None:
        canon["output"] = {"dir": out_dir}
    return ExperimentConfig(name, obstacle, wave, incident, h, ladder, quad, probes, grid, som,
                            out_dir, canon)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_config(raw)
    except ConfigurationError:
        raise
    except FhbemError as exc:
        raise ConfigurationError(str(exc)) from None


def canonical(cfg: ExperimentConfig) -> dict:
    return copy.deepcopy(cfg.raw)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.raw, sort_keys=True).encode()).hexdigest()
