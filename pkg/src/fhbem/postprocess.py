"""Field evaluation, radiation diagnostics and convergence-rate estimation."""

from __future__ import annotations

import enum
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NearSingularityError, PreconditionError
from .galerkin import Solution
from .kernels import incident_value, phi_r
from .quadrature import QuadConfig, level_for


TRACE_SIZE = 1e-9
TRACE_LEVELS = 200


class FieldKind(enum.Enum):
    SCATTERED = "scattered"
    TOTAL = "total"
    INCIDENT = "incident"


@dataclass(eq=False)
class FieldGrid:
    points: np.ndarray
    values: np.ndarray
    kind: FieldKind = FieldKind.SCATTERED

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if len(self.points) != len(self.values):
            raise PreconditionError("field grid points and values differ in length")
        self.kind = FieldKind(self.kind)


@dataclass(eq=False)
class ConvergenceRecord:
    h: tuple
    dof: int
    probe_errors: np.ndarray
    estimated_orders: np.ndarray = field(default_factory=lambda: np.array([]))

    @property
    def h_max(self) -> float:
        return float(max(self.h))


class FieldEvaluator:
    """Evaluates ``u_N(x) = sum_j c_j / sqrt(mu_j) int_{T_j} Phi(x, y) dmu(y)``.

    Elements far from ``x`` use a barycentre rule whose level follows the
    distance; elements closer than ``eta * diam`` are split until every piece
    is well separated. Points that stay inside some piece's separation zone
    after ``max_recursion`` splits (points on the obstacle, or within about
    ``rho**max_recursion * diam`` of it) raise :class:`NearSingularityError`
    unless ``on_set`` is true: then the pieces
    still containing ``x`` are split down to ``TRACE_SIZE * diam`` and added
    with a one-point rule at distance equal to their radius, which is how
    the trace of ``u_N`` on the obstacle is evaluated.
    """

    def __init__(self, solution: Solution, cfg: QuadConfig | None = None, on_set: bool = False):
        self.on_set = on_set
        self.solution = solution
        self.cfg = cfg or solution.cfg or QuadConfig()
        mesh = solution.mesh
        self.elements = mesh.elements
        self.wave = solution.wave
        els = self.elements
        self.bary = np.array([e.barycentre for e in els])
        self.radius = np.array([e.radius for e in els])
        self.diam = np.array([e.diameter for e in els])
        self.rho = np.array([e.component.ifs.rho_max for e in els])
        self.comp = np.array([e.component_index for e in els])
        mass = np.array([e.measure for e in els])
        # c_j / sqrt(mu_j) * mu_j
        self.amp = np.asarray(solution.coeffs, dtype=complex) * np.sqrt(mass)
        self._cache = {}

    def _leaf_points(self, j: int, level: int):
        key = (j, level)
        if key not in self._cache:
            comp = self.solution.mesh.obstacle.components[j]
            idx = np.nonzero(self.comp == j)[0]
            pts, w, _ = comp.leaves(level)
            xs = np.array([self.elements[i].map(pts) for i in idx])
            pos = np.full(len(self.elements), -1)
            pos[idx] = np.arange(len(idx))
            self._cache[key] = (xs, w, pos)
        return self._cache[key]

    def _near(self, i: int, x: np.ndarray) -> complex:
        cfg, wave = self.cfg, self.wave
        el = self.elements[i]
        leaf_size = el.component.ifs.rho_max ** cfg.depth * min(el.diameter, 1.0 / wave.k)
        total = 0j
        queue = deque([(el, 0)])
        while queue:
            sub, lvl = queue.popleft()
            dist = float(np.linalg.norm(x - sub.barycentre)) - sub.radius
            if dist >= cfg.eta * sub.diameter:
                rho = sub.component.ifs.rho_max
                lv = min(level_for(rho ** cfg.depth * min(dist, cfg.eta / wave.k) / (cfg.eta * sub.diameter), rho),
                         level_for(leaf_size / sub.diameter, rho), cfg.depth)
                pts, w = sub.leaves(lv)
                total += complex(w @ phi_r(np.linalg.norm(pts - x, axis=1), wave))
            elif self.on_set and (sub.diameter <= TRACE_SIZE * el.diameter or lvl >= TRACE_LEVELS):
                total += sub.measure * complex(phi_r(max(sub.radius, 1e-300), wave))
            elif self.on_set:
                queue.extend((c, lvl + 1) for c in sub.children())
            elif lvl >= cfg.max_recursion:
                raise NearSingularityError(
                    f"field point {x.tolist()} is too close to element {i} (distance bound {dist:.3g})",
                    element_index=i)
            else:
                queue.extend((c, lvl + 1) for c in sub.children())
        return total * self.solution.coeffs[i] / np.sqrt(el.measure)

    def point(self, x) -> complex:
        x = np.asarray(x, dtype=float)
        cfg, wave = self.cfg, self.wave
        dist = np.linalg.norm(self.bary - x, axis=1) - self.radius
        far = dist >= cfg.eta * self.diam
        total = 0j
        if np.any(far):
            fi = np.nonzero(far)[0]
            length = np.minimum(dist[fi], cfg.eta / wave.k) / cfg.eta
            ratio = self.rho[fi] ** cfg.depth * length / self.diam[fi]
            lvl = np.clip(np.ceil(np.log(np.minimum(ratio, 1.0)) / np.log(self.rho[fi]) - 1e-9),
                          0, cfg.depth).astype(int)
            groups = defaultdict(list)
            for i, c, lv in zip(fi, self.comp[fi], lvl):
                groups[(int(c), int(lv))].append(i)
            for (c, lv), idx in sorted(groups.items()):
                xs, w, pos = self._leaf_points(c, lv)
                idx = np.asarray(idx)
                r = np.linalg.norm(xs[pos[idx]] - x, axis=-1)
                total += complex(np.sum(self.amp[idx] * (phi_r(r, wave) @ w)))
        for i in np.nonzero(~far)[0]:
            total += self._near(int(i), x)
        return total

    def __call__(self, points) -> np.ndarray | complex:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            return self.point(pts)
        return np.array([self.point(p) for p in pts.reshape(-1, pts.shape[-1])]).reshape(pts.shape[:-1])


def scattered_field(solution: Solution, x, cfg: QuadConfig | None = None):
    """``u_N`` at a point ``(n,)`` or at an array of points ``(..., n)``."""
    return FieldEvaluator(solution, cfg)(x)


def total_field(solution: Solution, field, x, cfg: QuadConfig | None = None):
    """``u_inc + u_N``."""
    return incident_value(field, x, solution.wave) + scattered_field(solution, x, cfg)


def boundary_trace(solution: Solution, points, field=None, cfg: QuadConfig | None = None) -> np.ndarray:
    """``u_N`` (or ``u_inc + u_N`` when ``field`` is given) at points on the obstacle.

    The sound-soft condition makes the total field vanish there, so its size
    at element barycentres measures the discretisation error.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.atleast_1d(FieldEvaluator(solution, cfg, on_set=True)(pts))
    if field is not None:
        vals = vals + np.atleast_1d(incident_value(field, pts, solution.wave))
    return vals


def field_grid(solution: Solution, points, kind=FieldKind.SCATTERED, field=None,
               cfg: QuadConfig | None = None) -> FieldGrid:
    kind = FieldKind(kind)
    pts = np.asarray(points, dtype=float)
    if kind is FieldKind.INCIDENT:
        vals = np.atleast_1d(incident_value(field, pts, solution.wave))
    else:
        vals = np.atleast_1d(FieldEvaluator(solution, cfg)(pts))
        if kind is FieldKind.TOTAL:
            vals = vals + np.atleast_1d(incident_value(field, pts, solution.wave))
    return FieldGrid(pts, vals, kind)


def sommerfeld_defect(solution: Solution, radii, directions, center=None,
                      cfg: QuadConfig | None = None) -> np.ndarray:
    """``|du/dr - ik u| * r^((n-1)/2)`` on a (radius, direction) table.

    ``du/dr`` is a central difference with step ``1e-4 r``; ``center``
    defaults to the barycentre of the obstacle's first component.
    """
    ev = FieldEvaluator(solution, cfg)
    n, k = solution.wave.n, solution.wave.k
    c = np.asarray(center if center is not None else solution.mesh.obstacle.components[0].barycentre, float)
    out = np.empty((len(radii), len(directions)))
    for a, r in enumerate(radii):
        step = 1e-4 * r
        for b, theta in enumerate(directions):
            theta = np.asarray(theta, dtype=float)
            theta = theta / np.linalg.norm(theta)
            u = ev.point(c + r * theta)
            du = (ev.point(c + (r + step) * theta) - ev.point(c + (r - step) * theta)) / (2 * step)
            out[a, b] = abs(du - 1j * k * u) * r ** ((n - 1) / 2)
    return out


def estimate_orders(records) -> np.ndarray:
    """Least-squares slope of ``log(error)`` against ``log(h)`` for each probe.

    Probes with a non-positive error at some level get ``nan``.
    """
    records = list(records)
    if len(records) < 3:
        raise PreconditionError("order estimation needs at least 3 levels")
    h = np.array([r.h_max for r in records])
    if np.any(np.diff(h) >= 0):
        raise PreconditionError(f"mesh sizes must decrease strictly, got {h.tolist()}")
    errs = np.array([np.asarray(r.probe_errors, dtype=float) for r in records])
    lh = np.log(h)
    orders = np.full(errs.shape[1], np.nan)
    for p in range(errs.shape[1]):
        e = errs[:, p]
        if np.all(e > 0):
            orders[p] = np.polyfit(lh, np.log(e), 1)[0]
    return orders
