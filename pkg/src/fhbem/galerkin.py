"""Galerkin system for the piecewise-constant orthonormal basis and its dense solve.

With ``e_i = 1_{T_i} / sqrt(mu(T_i))`` the entries are

    a_ij = int_{T_i} int_{T_j} Phi dmu dmu / sqrt(mu_i mu_j),
    b_i  = -int_{T_i} u_inc dmu / sqrt(mu_i).

Only ``i <= j`` is computed; the lower triangle is mirrored, so the matrix is
exactly complex symmetric.
"""

from __future__ import annotations

import math
import struct
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import ConfigurationError, FhbemError, SolverError
from .geometry import Mesh
from .kernels import Wave, incident_value, kernel_split, phi_r
from .quadrature import CHUNK, QuadConfig, SelfInteractionTable, element_pair_integral

MAGIC = b"FHBM0001"


@dataclass(eq=False)
class GalerkinSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    mesh: Mesh = field(repr=False)
    wave: Wave
    incident: object = None
    cfg: QuadConfig | None = None
    stats: dict = field(default_factory=dict)


@dataclass(eq=False)
class Solution:
    coeffs: np.ndarray
    mesh: Mesh = field(repr=False)
    wave: Wave
    residual_norm: float
    condition_estimate: float
    cfg: QuadConfig | None = None
    tags: dict = field(default_factory=dict)

    @property
    def measures(self) -> np.ndarray:
        return self.mesh.measures

    def scaled(self, factor) -> "Solution":
        """Same mesh and metadata with coefficients multiplied by ``factor``."""
        return Solution(self.coeffs * factor, self.mesh, self.wave, self.residual_norm,
                        self.condition_estimate, self.cfg, dict(self.tags))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        import os
        env = os.environ.get("FHBEM_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigurationError(f"FHBEM_THREADS must be an integer, got {env!r}") from None
        else:
            threads = 1
    if threads < 1:
        raise ConfigurationError(f"thread count must be positive, got {threads}")
    return int(threads)


def _element_arrays(mesh: Mesh):
    els = mesh.elements
    n = mesh.obstacle.ambient_dim
    return dict(
        bary=np.array([e.barycentre for e in els]).reshape(-1, n),
        radius=np.array([e.radius for e in els]),
        diam=np.array([e.diameter for e in els]),
        mass=np.array([e.measure for e in els]),
        comp=np.array([e.component_index for e in els]),
        scale=np.array([e.map.scale for e in els]),
        rot=np.array([e.map.rotation for e in els]).reshape(-1, n, n),
        trans=np.array([e.map.translation for e in els]).reshape(-1, n),
        rho=np.array([e.component.ifs.rho_max for e in els]),
    )


def _levels_vec(diam, rho, length, depth):
    ratio = rho ** depth * np.sqrt(np.maximum(length / diam, 1.0))
    with np.errstate(divide="ignore"):
        lvl = np.ceil(np.log(np.minimum(ratio, 1.0)) / np.log(rho) - 1e-9)
    return np.clip(lvl, 0, depth).astype(int)


def _far_group(arr, comps, I, J, la, lb, wave):
    """Tensor barycentre sums for the pairs (I, J) sharing components and leaf levels."""
    ca, cb = comps[arr["comp"][I[0]]], comps[arr["comp"][J[0]]]
    pa, wa, _ = ca.leaves(la)
    pb, wb, _ = cb.leaves(lb)
    out = np.empty(len(I), dtype=complex)
    per = max(1, CHUNK // (len(pa) * len(pb)))
    for s in range(0, len(I), per):
        i, j = I[s:s + per], J[s:s + per]
        xa = arr["scale"][i, None, None] * np.einsum("gij,lj->gli", arr["rot"][i], pa) + arr["trans"][i, None, :]
        xb = arr["scale"][j, None, None] * np.einsum("gij,lj->gli", arr["rot"][j], pb) + arr["trans"][j, None, :]
        diff = xa[:, :, None, :] - xb[:, None, :, :]
        r = np.sqrt(np.einsum("gabk,gabk->gab", diff, diff))
        vals = np.einsum("a,gab,b->g", wa, phi_r(r, wave), wb)
        out[s:s + per] = vals * arr["mass"][i] * arr["mass"][j]
    return out


def assemble(mesh: Mesh, wave: Wave, field, cfg: QuadConfig | None = None,
             threads: int | None = None, table: SelfInteractionTable | None = None) -> GalerkinSystem:
    """Dense Galerkin matrix and right-hand side in the orthonormal basis."""
    cfg = cfg or QuadConfig()
    els = mesh.elements
    nel = len(els)
    if nel == 0:
        raise ConfigurationError("cannot assemble on an empty mesh")
    if mesh.obstacle.ambient_dim != wave.n:
        raise ConfigurationError(f"mesh lives in R^{mesh.obstacle.ambient_dim} but the wave in R^{wave.n}")
    threads = resolve_threads(threads)
    comps = mesh.obstacle.components
    arr = _element_arrays(mesh)
    split = kernel_split(wave, cfg.singular_terms)
    table = table or SelfInteractionTable.for_wave(mesh.obstacle, wave, cfg)

    iu, ju = np.triu_indices(nel)
    diff = arr["bary"][iu] - arr["bary"][ju]
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff)) - arr["radius"][iu] - arr["radius"][ju]
    admissible = (dist > 0) & (dist >= cfg.eta * np.maximum(arr["diam"][iu], arr["diam"][ju]))

    upper = np.zeros(len(iu), dtype=complex)

    # far field, grouped by component pair and leaf levels
    fi = np.nonzero(admissible)[0]
    length = np.minimum(dist[fi], cfg.eta / wave.k) / cfg.eta
    la = _levels_vec(arr["diam"][iu[fi]], arr["rho"][iu[fi]], length, cfg.depth)
    lb = _levels_vec(arr["diam"][ju[fi]], arr["rho"][ju[fi]], length, cfg.depth)
    groups = defaultdict(list)
    for idx, key in enumerate(zip(arr["comp"][iu[fi]], la, arr["comp"][ju[fi]], lb)):
        groups[key].append(idx)
    tasks = []
    for (_, a_lvl, _, b_lvl), members in sorted(groups.items()):
        members = np.asarray(members)
        for s in range(0, len(members), 4096):
            sel = fi[members[s:s + 4096]]
            tasks.append((sel, int(a_lvl), int(b_lvl)))
    for j, c in enumerate(comps):
        for lvl in range(cfg.depth + 1):
            c.leaves(lvl)

    def run_far(task):
        sel, a_lvl, b_lvl = task
        return sel, _far_group(arr, comps, iu[sel], ju[sel], a_lvl, b_lvl, wave)

    # near field: prepare the self-similarity tables, then evaluate entry by entry
    ni = np.nonzero(~admissible)[0]
    seeds = defaultdict(list)
    for p in ni:
        a, b = els[iu[p]], els[ju[p]]
        if a.component_index == b.component_index:
            seeds[a.component_index].append(a.map.inverse().compose(b.map))
    for cj in sorted(seeds):
        table.prepare(cj, seeds[cj])

    def run_near(chunk):
        vals = np.empty(len(chunk), dtype=complex)
        for q, p in enumerate(chunk):
            try:
                vals[q] = element_pair_integral(els[iu[p]], els[ju[p]], wave, table, cfg, split)
            except FhbemError as exc:
                raise type(exc)(f"entry ({iu[p]}, {ju[p]}): {exc}") from exc
        return chunk, vals

    near_chunks = [ni[s:s + 256] for s in range(0, len(ni), 256)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run_far, tasks)) + list(pool.map(run_near, near_chunks))
    else:
        results = [run_far(t) for t in tasks] + [run_near(c) for c in near_chunks]
    for sel, vals in results:
        upper[sel] = vals

    norm = np.sqrt(arr["mass"])
    mat = np.zeros((nel, nel), dtype=complex)
    mat[iu, ju] = upper / (norm[iu] * norm[ju])
    mat[ju, iu] = mat[iu, ju]
    if not np.all(np.isfinite(mat)):
        bad = np.argwhere(~np.isfinite(mat))[0]
        raise FhbemError(f"non-finite matrix entry at ({bad[0]}, {bad[1]})")

    rhs = -assemble_rhs(mesh, wave, field, cfg) / norm
    stats = {"elements": nel, "far_pairs": int(len(fi)), "near_pairs": int(len(ni)),
             "table_unresolved": table.unresolved}
    return GalerkinSystem(mat, rhs, mesh, wave, field, cfg, stats)


def assemble_rhs(mesh: Mesh, wave: Wave, field, cfg: QuadConfig) -> np.ndarray:
    """``int_{T_i} u_inc dmu`` for every element (composite rule at ``cfg.depth``)."""
    arr = _element_arrays(mesh)
    out = np.empty(len(mesh), dtype=complex)
    comps = mesh.obstacle.components
    for j, c in enumerate(comps):
        idx = np.nonzero(arr["comp"] == j)[0]
        if not len(idx):
            continue
        pts, w, _ = c.leaves(cfg.depth)
        for s in range(0, len(idx), max(1, CHUNK // len(pts))):
            i = idx[s:s + max(1, CHUNK // len(pts))]
            x = arr["scale"][i, None, None] * np.einsum("gij,lj->gli", arr["rot"][i], pts) + arr["trans"][i, None, :]
            vals = np.asarray(incident_value(field, x, wave)).reshape(len(i), len(pts))
            out[i] = arr["mass"][i] * (vals @ w)
    return out


def solve(system: GalerkinSystem) -> Solution:
    """Dense LU with partial pivoting; records the relative residual and a 1-norm condition estimate."""
    a = np.asarray(system.matrix)
    b = np.asarray(system.rhs)
    if not np.all(np.isfinite(a)):
        raise SolverError("matrix has non-finite entries", pivot_index=None)
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SolverError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    zero = np.nonzero(np.diag(lu) == 0)[0]
    if len(zero):
        raise SolverError(f"exactly singular pivot at index {int(zero[0])}", pivot_index=int(zero[0]))
    coeffs = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    anorm = float(np.max(np.sum(np.abs(a), axis=0)))
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    cond = float("inf") if rcond == 0 or info != 0 else 1.0 / float(rcond)
    res = np.linalg.norm(a @ coeffs - b)
    bn = np.linalg.norm(b)
    residual = float(res / bn) if bn > 0 else float(res)
    return Solution(coeffs, system.mesh, system.wave, residual, cond, system.cfg)


def galerkin_orthogonality_check(system: GalerkinSystem, solution: Solution) -> float:
    """``max_i |(A c - b)_i|``."""
    return float(np.max(np.abs(system.matrix @ solution.coeffs - system.rhs)))


def dump_system(system: GalerkinSystem, path) -> None:
    """Write magic, ``uint64`` size, then matrix (row-major) and rhs as little-endian complex128."""
    nel = system.matrix.shape[0]
    with open(Path(path), "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", nel))
        fh.write(np.ascontiguousarray(system.matrix, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(system.rhs, dtype="<c16").tobytes())


def load_system(path) -> tuple[np.ndarray, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ConfigurationError(f"{path} is not a system dump (bad magic)")
    (nel,) = struct.unpack("<Q", data[8:16])
    expected = 16 + 16 * (nel * nel + nel)
    if len(data) != expected:
        raise ConfigurationError(f"{path} has {len(data)} bytes, expected {expected}")
    body = np.frombuffer(data[16:], dtype="<c16")
    return body[:nel * nel].reshape(nel, nel).copy(), body[nel * nel:].copy()


def condition_number(matrix) -> float:
    """2-norm condition number (exact, for small diagnostics)."""
    s = np.linalg.svd(matrix, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else math.inf
