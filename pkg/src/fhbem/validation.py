"""Brute-force oracles, independent of the production quadrature.

The oracles only borrow geometry primitives (the IFS maps and measure
weights). Integrals are computed on uniform word-length subdivisions and
extrapolated in the level ``L`` with generalised Richardson elimination: the
level-``L`` sum is fitted by ``I + sum_k c_k phi_k(L)`` with known error
profiles ``phi_k`` (geometric sequences ``lam**L``, possibly times ``L``).
The spread between the fits on the last and the second-to-last window of
levels is reported as the error estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import mpmath
import numpy as np

from .errors import ConfigurationError, DivergenceError
from .geometry import Component, MeshElement, Obstacle

FIXTURE_FILE = "oracle_fixtures.json"


@dataclass(frozen=True)
class OracleConfig:
    """``leaf_depth``: finest uniform level; ``richardson_levels``: levels per fit window."""

    leaf_depth: int = 10
    richardson_levels: int = 4
    max_leaves: int = 8192

    def __post_init__(self):
        if not 0 <= self.leaf_depth <= 16:
            raise ConfigurationError(f"leaf_depth must lie in [0, 16], got {self.leaf_depth}")
        if self.richardson_levels < 2:
            raise ConfigurationError("richardson_levels must be at least 2")


@dataclass(frozen=True)
class OracleValue:
    value: complex
    est_error: float

    def __iter__(self):
        return iter((self.value, self.est_error))


def uniform_leaves(component: Component, level: int):
    """Barycentres, probabilities and scales of all ``M**level`` words of length ``level``."""
    n = component.ambient_dim
    maps = component.ifs.maps
    rho = np.array([s.scale for s in maps])
    qs = np.array([s.rotation for s in maps])
    ts = np.array([s.translation for s in maps])
    p = rho ** component.d
    sc, rot, tr, prob = np.ones(1), np.eye(n)[None], np.zeros((1, n)), np.ones(1)
    for _ in range(level):
        sc_new = (sc[:, None] * rho[None, :]).reshape(-1)
        tr_new = (tr[:, None, :] + sc[:, None, None] * np.einsum("kij,mj->kmi", rot, ts)).reshape(-1, n)
        rot_new = np.einsum("kij,mjl->kmil", rot, qs).reshape(-1, n, n)
        prob = (prob[:, None] * p[None, :]).reshape(-1)
        sc, rot, tr = sc_new, rot_new, tr_new
    pts = sc[:, None] * np.einsum("kij,j->ki", rot, component.barycentre) + tr
    return pts, prob, sc


def _element_leaves(el: MeshElement, level: int):
    pts, prob, sc = uniform_leaves(el.component, level)
    return el.map(pts), el.measure * prob, el.map.scale * sc


def _fit(levels, values, profiles):
    """Solve ``values[i] = I + sum_k c_k profiles[k](levels[i])`` for ``I``."""
    rows = [[1.0] + [f(L) for f in profiles] for L in levels]
    a = np.array(rows, dtype=float)
    sol = np.linalg.solve(a, np.asarray(values, dtype=complex))
    return complex(sol[0])


def _extrapolate(levels, values, profiles) -> OracleValue:
    k = len(profiles) + 1
    if len(levels) < k:
        raise ConfigurationError("not enough levels for the requested extrapolation")
    last = _fit(levels[-k:], values[-k:], profiles)
    if len(levels) > k:
        prev = _fit(levels[-k - 1:-1], values[-k - 1:-1], profiles)
        err = abs(last - prev)
    else:
        err = abs(values[-1] - last)
    return OracleValue(last, err + 1e-14 * abs(last))


def _smooth_ratio(component: Component) -> float:
    p = component.probabilities
    return float(np.sum(p * component.ifs.scales ** 2))


def _levels(component: Component, cfg: OracleConfig, windows: int) -> list[int]:
    m = len(component.ifs)
    top = cfg.leaf_depth
    cap = cfg.max_leaves
    while top > 0 and m ** top > cap:
        top -= 1
    first = max(0, top - windows + 1)
    return list(range(first, top + 1))


def _eval(f, pts):
    vals = np.asarray(f(pts))
    if vals.shape != (pts.shape[0],):
        vals = np.array([f(x) for x in pts])
    return vals


def brute_single(element: MeshElement, f, cfg: OracleConfig | None = None) -> OracleValue:
    """Uniform barycentre sums of ``int_T f dmu`` extrapolated assuming order 2."""
    cfg = cfg or OracleConfig()
    comp = element.component
    ratio = _smooth_ratio(comp)
    profiles = [lambda L, r=ratio: r ** L]
    levels = _levels(comp, cfg, cfg.richardson_levels)
    vals = []
    for L in levels:
        pts, w, _ = _element_leaves(element, L)
        vals.append(complex(np.dot(w, _eval(f, pts))))
    if len(levels) < 2:
        return OracleValue(vals[-1], float("inf"))
    return _extrapolate(levels, vals, profiles)


def _pair_sum(pa, wa, pb, wb, kern, exclude_diagonal: bool) -> complex:
    total = 0j
    rows = max(1, (1 << 21) // len(pb))
    for s in range(0, len(pa), rows):
        diff = pa[s:s + rows, None, :] - pb[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if exclude_diagonal:
            idx = np.arange(s, min(s + rows, len(pa)))
            r[idx - s, idx] = 1.0
            kr = kern(r).astype(complex)
            kr[idx - s, idx] = 0.0
        else:
            kr = kern(r)
        total += complex(wa[s:s + rows] @ kr @ wb)
    return total


def singular_profiles(component: Component, kind: str, t: float = 0.0, extra: int = 2):
    """Error profiles of diagonal-excluded uniform sums for a kernel ``r^-t`` or ``log r``."""
    rho = component.ifs.scales
    d = component.d
    smooth = _smooth_ratio(component)
    if kind == "log":
        lam = float(np.sum(rho ** (2 * d)))
        base = [lambda L, l=lam: L * l ** L, lambda L, l=lam: l ** L]
    else:
        lam = float(np.sum(rho ** (2 * d - t)))
        base = [lambda L, l=lam: l ** L]
    prof = base + [lambda L, s=smooth: s ** L]
    if extra >= 1:
        prof += [lambda L, f=f, s=smooth: f(L) * s ** L for f in base]
    if extra >= 2:
        prof.append(lambda L, s=smooth: s ** (2 * L))
    return prof


def brute_double_singular(target, kind: str = "power", t: float = 0.0,
                          cfg: OracleConfig | None = None, kernel=None, profiles=None,
                          extra: int = 2) -> OracleValue:
    """``int int k(|x-y|) dmu dmu`` over ``target x target``.

    ``target`` is a :class:`Component` (normalised measure) or a
    :class:`MeshElement` (its own measure). ``kind`` is "power" (kernel
    ``r^-t``) or "log"; an explicit ``kernel`` callable on distances may be
    given instead, with ``kind``/``t`` describing its leading singularity.
    Same-leaf pairs are dropped and their vanishing contribution is
    extrapolated away.
    """
    cfg = cfg or OracleConfig()
    if isinstance(target, Component):
        comp = target
        leaves = lambda L: uniform_leaves(comp, L)  # noqa: E731
    else:
        comp = target.component
        leaves = lambda L: _element_leaves(target, L)  # noqa: E731
    if kind == "power" and t >= comp.d:
        raise DivergenceError(f"|x-y|^-{t} is not integrable on a set of dimension {comp.d}")
    if kernel is None:
        kernel = np.log if kind == "log" else (lambda r: r ** (-t))
    profiles = profiles or singular_profiles(comp, kind, t, extra)
    levels = _levels(comp, cfg, len(profiles) + 2)
    vals = []
    for L in levels:
        pts, w, _ = leaves(L)
        vals.append(_pair_sum(pts, w, pts, w, kernel, True))
    return _extrapolate(levels, vals, profiles)


def brute_pair(a: MeshElement, b: MeshElement, kernel, cfg: OracleConfig | None = None,
               profiles=None) -> OracleValue:
    """``int_a int_b k(|x-y|)`` for distinct elements (touching allowed) by uniform sums.

    Elements of one component use the log-singular profiles of that
    component; elements of different components default to the two
    smooth-integrand rates and their product.
    """
    cfg = cfg or OracleConfig()
    if profiles is not None:
        prof = list(profiles)
    elif a.component is b.component:
        prof = singular_profiles(a.component, "log", 0.0, 2)
    else:
        sa, sb = _smooth_ratio(a.component), _smooth_ratio(b.component)
        prof = [lambda L, s=sa: s ** L, lambda L, s=sb: s ** L, lambda L, s=sa * sb: s ** L]
    levels = []
    vals = []
    m = max(len(a.component.ifs), len(b.component.ifs))
    top = cfg.leaf_depth
    while top > 0 and m ** top > cfg.max_leaves:
        top -= 1
    for L in range(max(0, top - len(prof) - 1), top + 1):
        pa, wa, _ = _element_leaves(a, L)
        pb, wb, _ = _element_leaves(b, L)
        levels.append(L)
        vals.append(_pair_sum(pa, wa, pb, wb, kernel, False))
    return _extrapolate(levels, vals, prof)


# ---------------------------------------------------------------------------
# special-function oracle
# ---------------------------------------------------------------------------

def hankel1_0_oracle(z: float) -> complex:
    """``H_0^(1)(z)`` from the ascending series in multiprecision arithmetic."""
    if not z > 0:
        raise ConfigurationError("z must be positive")
    dps = int(30 + 0.87 * z)
    with mpmath.workdps(dps):
        zz = mpmath.mpf(z)
        u = zz * zz / 4
        term = mpmath.mpf(1)
        j0 = mpmath.mpf(0)
        ysum = mpmath.mpf(0)
        harm = mpmath.mpf(0)
        k = 0
        eps = mpmath.mpf(10) ** (-dps + 5)
        while True:
            if k > 0:
                term = -term * u / (k * k)
                harm += mpmath.mpf(1) / k
            j0 += term
            ysum -= harm * term
            k += 1
            if k > 10 and abs(term) < eps:
                break
        y0 = 2 / mpmath.pi * ((mpmath.log(zz / 2) + mpmath.euler) * j0 + ysum)
        return complex(float(j0), float(y0))


def bessel_oracle(z: float) -> tuple[float, float, float, float]:
    """``(J0, Y0, J1, Y1)`` at multiprecision, for Wronskian checks."""
    with mpmath.workdps(40):
        return (float(mpmath.besselj(0, z)), float(mpmath.bessely(0, z)),
                float(mpmath.besselj(1, z)), float(mpmath.bessely(1, z)))


# ---------------------------------------------------------------------------
# reference solutions and fixtures
# ---------------------------------------------------------------------------

def reference_solution(obstacle: Obstacle, wave, field, fine_levels: int, h, cfg=None, threads=None):
    """Pipeline run on ``h * rho_max**fine_levels`` with doubled quadrature depth."""
    from .galerkin import assemble, solve
    from .geometry import build_multi_mesh
    from .quadrature import QuadConfig

    cfg = cfg or QuadConfig()
    hs = np.broadcast_to(np.asarray(h, dtype=float), (len(obstacle),))
    fine = [float(hj) * c.ifs.rho_max ** fine_levels for hj, c in zip(hs, obstacle.components)]
    mesh = build_multi_mesh(obstacle, fine)
    sol = solve(assemble(mesh, wave, field, cfg.doubled(), threads=threads))
    sol.tags["reference"] = True
    return sol


def fixture_path() -> Path:
    return Path(str(resources.files("fhbem") / "data" / FIXTURE_FILE))


def load_fixtures(path=None) -> dict:
    path = Path(path) if path is not None else fixture_path()
    if not path.exists():
        raise ConfigurationError(f"fixture file {path} not found")
    with open(path) as fh:
        rows = json.load(fh)
    return {r["case_id"]: r for r in rows}


def oracle_cases() -> dict:
    """Case id -> zero-argument callable returning an :class:`OracleValue`."""
    from . import presets

    interval, cantor = presets.interval(), presets.cantor()
    deep = OracleConfig(leaf_depth=13, max_leaves=8192)
    cases = {}
    for z in (1.0, 10.0, 0.5, 25.0, 100.0):
        cases[f"hankel1_0/z={z:g}"] = lambda z=z: OracleValue(hankel1_0_oracle(z), 1e-15)
    cases["interval/power/t=0.5"] = lambda: brute_double_singular(interval, "power", 0.5, deep)
    cases["interval/log"] = lambda: brute_double_singular(interval, "log", 0.0, deep)
    for t in (0.25, 0.5, 0.0, -1.0):
        cases[f"cantor/power/t={t:g}"] = lambda t=t: brute_double_singular(cantor, "power", t, deep)
    cases["cantor/log"] = lambda: brute_double_singular(cantor, "log", 0.0, deep)
    for r in (0.1, 0.2):
        cases[f"cantor_ratio={r:g}/log"] = lambda r=r: brute_double_singular(
            presets.cantor(ratio=r), "log", 0.0, deep)
    cases["sierpinski/barycentre_x"] = lambda: _sierpinski_bary(0)
    cases["sierpinski/barycentre_y"] = lambda: _sierpinski_bary(1)
    cases["koch/diameter"] = _koch_diameter
    cases["interval/x^3"] = lambda: brute_single(interval.element(()), lambda x: x[:, 0] ** 3,
                                                 OracleConfig(leaf_depth=12))
    return cases


def _sierpinski_bary(axis: int) -> OracleValue:
    from . import presets
    comp = presets.sierpinski()
    x = np.zeros(2)
    for _ in range(200):
        x = sum(p * s(x) for p, s in zip(comp.probabilities, comp.ifs.maps))
    return OracleValue(complex(x[axis]), 1e-14)


def _koch_diameter() -> OracleValue:
    """Certified bracket from a depth-9 cloud of attractor points (images of fixed points)."""
    from scipy.spatial import ConvexHull

    from . import presets
    comp = presets.koch_curve(exact_diameter=False)
    level = 9
    pts = np.array([s.fixed_point() for s in comp.ifs.maps])
    for _ in range(level):
        pts = np.concatenate([s(pts) for s in comp.ifs.maps])
    pts = np.unique(np.round(pts, 14), axis=0)
    hull = pts[ConvexHull(pts).vertices]
    lo = float(np.max(np.linalg.norm(hull[:, None] - hull[None], axis=-1)))
    width = 2 * comp.ifs.rho_max ** level * comp.bounding_ball[1]
    return OracleValue(complex(lo + 0.5 * width), 0.5 * width)


def generate_fixtures(path=None, cases=None) -> list[dict]:
    cases = cases or oracle_cases()
    rows = []
    for case_id, fn in cases.items():
        val, err = fn()
        rows.append({"case_id": case_id, "value_re": float(np.real(val)),
                     "value_im": float(np.imag(val)), "est_error": float(err)})
    path = Path(path) if path is not None else fixture_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")
    return rows


if __name__ == "__main__":  # pragma: no cover
    for row in generate_fixtures():
        print(f"{row['case_id']:32s} {row['value_re']:.15g} {row['value_im']:.15g} {row['est_error']:.2e}")
