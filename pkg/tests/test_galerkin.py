import numpy as np
import pytest

from fhbem import presets
from fhbem.errors import ConfigurationError, SolverError
from fhbem.galerkin import (GalerkinSystem, assemble, condition_number, dump_system,
                            galerkin_orthogonality_check, load_system, solve)
from fhbem.geometry import Obstacle, build_multi_mesh
from fhbem.kernels import PlaneWave, Wave, phi_r
from fhbem.quadrature import QuadConfig
from fhbem.validation import OracleConfig, brute_double_singular, brute_pair

PLANE = PlaneWave(np.array([1.0, 0.0]))


def trivial_system(matrix, rhs):
    mesh = build_multi_mesh(Obstacle((presets.interval(),)), 1.0 / len(rhs))
    return GalerkinSystem(np.asarray(matrix, dtype=complex), np.asarray(rhs, dtype=complex),
                          mesh, Wave(1.0, 2))


@pytest.fixture(scope="module")
def segment():
    mesh = build_multi_mesh(Obstacle((presets.interval(),)), 1 / 8)
    return assemble(mesh, Wave(1.0, 2), PLANE)


def test_segment_entries_against_oracle(segment):
    wave = segment.wave
    els = segment.mesh.elements
    kern = lambda r: phi_r(r, wave)  # noqa: E731
    cfg = OracleConfig(leaf_depth=9)
    for j in range(len(els)):
        a, b = els[0], els[j]
        if j == 0:
            ref, _ = brute_double_singular(a, "log", 0.0, cfg, kernel=kern)
        else:
            ref, _ = brute_pair(a, b, kern, cfg)
        ref /= np.sqrt(a.measure * b.measure)
        assert abs(segment.matrix[0, j] - ref) <= 1e-4 * abs(ref), j


def test_segment_symmetry_and_solve(segment):
    a = segment.matrix
    assert np.array_equal(a, a.T)
    sol = solve(segment)
    assert sol.residual_norm < 1e-12
    assert galerkin_orthogonality_check(segment, sol) <= 1e-12 * np.max(np.abs(segment.rhs))
    assert sol.condition_estimate == pytest.approx(np.linalg.cond(a, 1), rel=0.5)
    assert segment.stats["elements"] == 8


def test_identity_system():
    b = np.array([1.0 + 2j, -0.5, 3j])
    sol = solve(trivial_system(np.eye(3), b))
    assert np.allclose(sol.coeffs, b, rtol=0, atol=1e-15)


def test_one_by_one():
    sol = solve(trivial_system([[2.0 - 1j]], [3.0 + 1j]))
    assert sol.coeffs[0] == pytest.approx((3.0 + 1j) / (2.0 - 1j))


def test_singular_pivot():
    with pytest.raises(SolverError) as info:
        solve(trivial_system([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]))
    assert info.value.pivot_index == 1


def test_orthogonality_defect_is_linear(segment):
    sol = solve(segment)
    delta = 1e-3 * np.ones(len(sol.coeffs))
    perturbed = type(sol)(sol.coeffs + delta, sol.mesh, sol.wave, 0.0, 1.0)
    d1 = galerkin_orthogonality_check(segment, perturbed)
    perturbed = type(sol)(sol.coeffs + 2 * delta, sol.mesh, sol.wave, 0.0, 1.0)
    assert galerkin_orthogonality_check(segment, perturbed) == pytest.approx(2 * d1, rel=1e-6)


def test_cantor_regression_baseline():
    mesh = build_multi_mesh(Obstacle((presets.cantor(),)), 1 / 27)
    system = assemble(mesh, Wave(5.0, 2), PLANE)
    sol = solve(system)
    assert galerkin_orthogonality_check(system, sol) <= 1e-12 * np.max(np.abs(system.rhs))
    assert np.allclose(system.matrix, system.matrix.T, rtol=0, atol=1e-12 * np.max(np.abs(system.matrix)))


def test_threads_do_not_change_matrix():
    mesh = build_multi_mesh(Obstacle((presets.koch_curve(),)), 0.12)
    a1 = assemble(mesh, Wave(2.0, 2), PLANE, threads=1).matrix
    a3 = assemble(mesh, Wave(2.0, 2), PLANE, threads=3).matrix
    assert np.array_equal(a1, a3)


def test_dimension_mismatch():
    mesh = build_multi_mesh(Obstacle((presets.interval(),)), 0.5)
    with pytest.raises(ConfigurationError):
        assemble(mesh, Wave(1.0, 3), PlaneWave(np.array([1.0, 0.0, 0.0])))


def test_dump_roundtrip(segment, tmp_path):
    path = tmp_path / "system.bin"
    dump_system(segment, path)
    a, b = load_system(path)
    assert np.array_equal(a, segment.matrix) and np.array_equal(b, segment.rhs)
    raw = path.read_bytes()
    assert raw[:8] == b"FHBM0001"
    path.write_bytes(raw[:-3])
    with pytest.raises(ConfigurationError):
        load_system(path)
    path.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(ConfigurationError):
        load_system(path)


def test_condition_number():
    assert condition_number(np.diag([1.0, 4.0])) == pytest.approx(4.0)


def test_quadrature_config_recorded(segment):
    assert isinstance(segment.cfg, QuadConfig)


def test_one_element_rhs():
    comp = presets.koch_curve(weight=2.0)
    mesh = build_multi_mesh(Obstacle((comp,)), comp.diam)
    wave = Wave(1.7, 2)
    system = assemble(mesh, wave, PLANE, QuadConfig(depth=0))
    el = mesh.elements[0]
    expect = -np.sqrt(el.measure) * np.exp(1j * wave.k * el.barycentre[0])
    assert system.rhs[0] == pytest.approx(expect, rel=1e-14)


def test_far_pair_depth_zero():
    a = presets.cantor(weight=0.5)
    b = presets.cantor(weight=2.0, start=(6.0, 0.0), end=(7.0, 0.0))
    ob = Obstacle((a, b))
    mesh = build_multi_mesh(ob, (a.diam, b.diam))
    wave = Wave(1.0, 2)
    system = assemble(mesh, wave, PLANE, QuadConfig(depth=0))
    e1, e2 = mesh.elements
    expect = np.sqrt(e1.measure * e2.measure) * phi_r(np.linalg.norm(e1.barycentre - e2.barycentre), wave)
    assert system.matrix[0, 1] == pytest.approx(expect, rel=1e-14)
