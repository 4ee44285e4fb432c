"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import math
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from fhbem import presets
from fhbem.cli import main, run_converge, run_solve
from fhbem.config import load_config
from fhbem.galerkin import assemble, solve
from fhbem.geometry import Obstacle, build_multi_mesh, dof_bounds, moran_dimension
from fhbem.kernels import PlaneWave, Wave
from fhbem.postprocess import scattered_field, sommerfeld_defect
from fhbem.quadrature import self_interaction_log, self_interaction_power
from fhbem.special import bessel01, hankel1_0
from fhbem.validation import OracleConfig, brute_double_singular, hankel1_0_oracle

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_criterion_01_moran(criterion):
    cases = [("koch", presets.koch_curve_ifs(), math.log(4) / math.log(3)),
             ("interval", presets.interval_ifs(), 1.0),
             ("cantor", presets.cantor_ifs(), math.log(2) / math.log(3))]
    worst_err, worst_time = 0.0, 0.0
    for _, ifs, exact in cases:
        moran_dimension(ifs)
        times = []
        for _ in range(5):
            d, dt = timed(moran_dimension, ifs)
            times.append(dt)
        worst_err = max(worst_err, abs(d - exact))
        worst_time = max(worst_time, statistics.median(times))
    ok = worst_err <= 1e-12 and worst_time < 1e-3
    criterion(1, ok, f"max |d - exact| = {worst_err:.1e} (<= 1e-12), median time {worst_time * 1e3:.3f} ms (< 1 ms)")
    assert ok


def test_criterion_02_mesh_laws(criterion):
    geos = [presets.interval(), presets.cantor(), presets.koch_curve(), presets.sierpinski(),
            presets.koch_snowflake()]
    t0 = time.perf_counter()
    failures = []
    for comp in geos:
        for lvl in range(1, 5):
            h = comp.diam * comp.ifs.rho_max ** lvl
            mesh = build_multi_mesh(Obstacle((comp,)), h)
            if abs(mesh.measures.sum() - comp.weight) > 1e-10:
                failures.append(("mass", lvl))
            if not all(comp.ifs.rho_min * h < e.diameter <= h * (1 + 1e-12) for e in mesh):
                failures.append(("diameter", lvl))
            lo, hi = dof_bounds(comp, h)
            if not lo <= len(mesh) <= hi:
                failures.append(("dof", lvl))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 1.0
    criterion(2, ok, f"20 meshes, {len(failures)} law violations, {dt:.2f} s (< 1 s)")
    assert ok


def test_criterion_03_interval_integrals(criterion):
    t0 = time.perf_counter()
    interval = presets.interval()
    cfg = OracleConfig(leaf_depth=12)
    rec_p = self_interaction_power(interval, 0.5)
    rec_l = self_interaction_log(interval)
    orc_p = brute_double_singular(interval, "power", 0.5, cfg).value.real
    orc_l = brute_double_singular(interval, "log", 0.0, cfg).value.real
    dt = time.perf_counter() - t0
    errs = [abs(rec_p - 8 / 3) / (8 / 3), abs(rec_l + 1.5) / 1.5,
            abs(orc_p - 8 / 3) / (8 / 3), abs(orc_l + 1.5) / 1.5]
    ok = max(errs) <= 1e-5 and dt < 10
    criterion(3, ok, "relative errors recursion (t=1/2, log) = "
              f"{errs[0]:.1e}, {errs[1]:.1e}; oracle = {errs[2]:.1e}, {errs[3]:.1e} (<= 1e-5), {dt:.1f} s (< 10 s)")
    assert ok


def test_criterion_04_cantor_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    cantor = presets.cantor()
    cfg = OracleConfig(leaf_depth=13)
    pairs = []
    for t in (0.25, 0.5):
        pairs.append((self_interaction_power(cantor, t), brute_double_singular(cantor, "power", t, cfg).value.real))
    pairs.append((self_interaction_log(cantor), brute_double_singular(cantor, "log", 0.0, cfg).value.real))
    dt = time.perf_counter() - t0
    errs = [abs(a - b) / abs(b) for a, b in pairs]
    ok = max(errs) <= 1e-4 and dt < 60
    criterion(4, ok, "recursion vs oracle (t=0.25, 0.5, log) = "
              + ", ".join(f"{e:.1e}" for e in errs) + f" (<= 1e-4), {dt:.1f} s (< 60 s)")
    assert ok


def regression_meshes():
    plane2, plane3 = PlaneWave(np.array([1.0, 0.0])), PlaneWave(np.array([0.0, 0.0, 1.0]))
    two = Obstacle((presets.koch_curve(), presets.cantor(start=(0.0, -1.0), end=(1.0, -1.0))))
    snow = presets.koch_snowflake_obstacle()
    cases = [
        (Obstacle((presets.interval(),)), 1 / 8, Wave(1.0, 2), plane2),
        (Obstacle((presets.interval(),)), 1 / 32, Wave(10.0, 2), plane2),
        (Obstacle((presets.cantor(),)), 1 / 27, Wave(5.0, 2), plane2),
        (Obstacle((presets.koch_curve(),)), 0.12, Wave(2.0, 2), plane2),
        (Obstacle((presets.sierpinski(),)), 0.13, Wave(3.0, 2), plane2),
        (Obstacle((presets.koch_snowflake(),)), 0.4, Wave(2.0, 2), plane2),
        (two, 0.12, Wave(2.0, 2), plane2),
        (snow, tuple(0.3 * max(c.diam for c in snow.components) for _ in snow.components), Wave(2.0, 2), plane2),
        (Obstacle((presets.square(),)), 0.36, Wave(2.0, 3), plane3),
        (Obstacle((presets.sierpinski(n=3),)), 0.26, Wave(1.0, 3), plane3),
    ]
    return cases


def test_criterion_05_matrix_properties(criterion):
    sym = []
    for ob, h, wave, field in regression_meshes():
        a = assemble(build_multi_mesh(ob, h), wave, field).matrix
        sym.append(float(np.max(np.abs(a - a.T)) / np.max(np.abs(a))))
    rng = np.random.default_rng(20261015)
    static = [(Obstacle((presets.interval(),)), 2), (Obstacle((presets.cantor(),)), 2),
              (Obstacle((presets.koch_curve(),)), 2), (Obstacle((presets.square(),)), 3)]
    min_re = math.inf
    for ob, n in static:
        diam = ob.components[0].diam
        mesh = build_multi_mesh(ob, diam / 4)
        a = assemble(mesh, Wave(0.1 / diam, n), PlaneWave(np.eye(n)[0])).matrix
        for _ in range(20):
            c = rng.normal(size=len(a)) + 1j * rng.normal(size=len(a))
            min_re = min(min_re, float((c.conj() @ a @ c).real / (c.conj() @ c).real))
    ok = max(sym) <= 1e-12 and min_re > 0
    criterion(5, ok, f"max |A - A^T| / |A| = {max(sym):.1e} on 10 meshes (<= 1e-12); "
              f"min Re(c^H A c)/|c|^2 = {min_re:.3e} over 4 x 20 static-limit trials (> 0)")
    assert ok


def test_criterion_06_rescaling(criterion):
    probes = np.array([[0.5, 1.0], [2.0, 0.5], [-1.0, -1.0], [0.3, -0.7], [1.5, 2.0]])
    cases = [("segment", Obstacle((presets.interval(),)), 1 / 16, Wave(1.0, 2)),
             ("cantor", Obstacle((presets.cantor(),)), 1 / 27, Wave(5.0, 2)),
             ("koch+cantor", Obstacle((presets.koch_curve(weight=1.0),
                                       presets.cantor(weight=0.4, start=(0.0, -0.5), end=(1.0, -0.5)))),
              0.12, Wave(2.0, 2))]
    field = PlaneWave(np.array([0.6, 0.8]))
    worst = 0.0
    for _, ob, h, wave in cases:
        u = [scattered_field(solve(assemble(build_multi_mesh(o, h), wave, field)), probes)
             for o in (ob, ob.rescaled(7.3))]
        worst = max(worst, float(np.max(np.abs(u[1] - u[0]) / np.abs(u[0]))))
    ok = worst < 1e-10
    criterion(6, ok, f"max relative change of u_N at 5 probes under weights x7.3 = {worst:.1e} (< 1e-10)")
    assert ok


def test_criterion_07_convergence(criterion, tmp_path):
    t0 = time.perf_counter()
    notes, ok = [], True
    for name in ("segment", "cantor_screen"):
        cfg = load_config(CONFIGS / f"{name}.json")
        table = run_converge(cfg, tmp_path)
        np_ = len(cfg.probes)
        errs = np.array([[float(v) for v in table.column(f"err_{i + 1}")] for i in range(np_)])
        orders = np.array([float(v) for v in table.rows[-1][-1 - np_:-1]])
        monotone = bool(np.all(np.diff(errs, axis=1) < 0))
        good = monotone and bool(np.all(orders > 0.3)) and len(table.rows) == 4
        ok &= good
        notes.append(f"{name}: monotone={monotone}, min order {orders.min():.2f}")
    cfg = load_config(CONFIGS / "snowflake.json")
    row = run_solve(cfg).rows[0]
    dof, residual = int(row[len(cfg.obstacle)]), float(row[len(cfg.obstacle) + 1])
    snow_ok = dof <= 2000 and residual < 1e-10
    ok &= snow_ok
    dt = time.perf_counter() - t0
    ok &= dt < 600
    notes.append(f"snowflake: {dof} dof, residual {residual:.1e}")
    criterion(7, ok, "; ".join(notes) + f" (orders > 0.3, dof <= 2000); {dt:.0f} s (< 600 s)")
    assert ok


def test_criterion_08_radiation(criterion):
    results = []
    seg = Obstacle((presets.interval(),))
    sol2 = solve(assemble(build_multi_mesh(seg, 1 / 8), Wave(1.0, 2), PlaneWave(np.array([0.6, 0.8]))))
    sq = Obstacle((presets.square(),))
    sol3 = solve(assemble(build_multi_mesh(sq, sq.components[0].diam / 4), Wave(2.0, 3),
                          PlaneWave(np.array([0.0, 0.0, 1.0]))))
    for name, sol, ob, dirs in (("n=2 segment", sol2, seg, [[1.0, 0.0], [0.0, 1.0], [-0.6, 0.8]]),
                                ("n=3 square", sol3, sq, [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.0, 0.0, -1.0]])):
        diam = ob.components[0].diam
        d = sommerfeld_defect(sol, [10 * diam, 100 * diam], dirs)
        results.append((name, float(np.min(d[0] / d[1]))))
    ok = all(r >= 2.0 for _, r in results)
    criterion(8, ok, "min defect ratio r=10 diam / r=100 diam: "
              + ", ".join(f"{n} {r:.1f}" for n, r in results) + " (>= 2)")
    assert ok


def test_criterion_09_special_functions(criterion):
    z = np.concatenate([np.geomspace(1e-3, 1.0, 10, endpoint=False), np.linspace(1.0, 100.0, 40)])
    assert len(z) == 50 and z.min() > 0 and z.max() <= 100
    got = hankel1_0(z)
    ref = np.array([hankel1_0_oracle(float(x)) for x in z])
    rel = float(np.max(np.abs(got - ref) / np.abs(ref)))
    j0, y0, j1, y1 = bessel01(z)
    wr = float(np.max(np.abs((j1 * y0 - j0 * y1) * np.pi * z / 2 - 1)))
    ok = rel <= 1e-10 and wr <= 1e-9
    criterion(9, ok, f"max relative error vs multiprecision series at 50 points = {rel:.1e} (<= 1e-10), "
              f"Wronskian defect = {wr:.1e} (<= 1e-9)")
    assert ok


def test_criterion_10_determinism(criterion, tmp_path):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["converge", "--config", str(CONFIGS / "segment.json"), "--out", str(out)]) == 0
        outs.append((out / "segment_converge.csv").read_bytes())
    ok = outs[0] == outs[1]
    criterion(10, ok, f"two converge runs on the segment config: CSVs byte-identical = {ok} ({len(outs[0])} bytes)")
    assert ok
