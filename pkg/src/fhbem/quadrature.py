"""Integrals against the multifractal measure.

Smooth integrands use the composite barycentre rule: split an element into
sub-copies and sum ``mass * f(barycentre)``. Singular double integrals of the
homogeneous kernels ``|x-y|^-t`` and ``log|x-y|`` use self-similarity: for a
relative similarity ``g`` write

    K(g) = int int k(|x - g(y)|) dmu(x) dmu(y)      (mu normalised on Gamma)

and split either factor into its M sub-copies. Children that are well
separated are integrated with the barycentre rule; the rest are again of the
form ``K(g')``. For finite-type attractors (interval, Cantor, Koch, ...) only
finitely many ``g'`` occur, so the recursion closes into a small linear
system. With ``g = identity`` this gives the self-interaction values; other
``g`` cover touching and nearby neighbours inside one component.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DivergenceError, FhbemError
from .geometry import Component, MeshElement, Obstacle, Similarity
from .kernels import KernelSplit, Wave, kernel_split, phi_r

#: max number of kernel evaluations per vectorised chunk
CHUNK = 1 << 21


@dataclass(frozen=True)
class QuadConfig:
    """Quadrature knobs.

    depth: barycentre-rule refinement below an element, as leaf diameter
        ``rho_max**depth * diam`` (identical to ``depth`` extra IFS levels for
        homogeneous IFS).
    eta: admissibility; a pair is regular when its separation is at least
        ``eta * max(diam)``.
    max_recursion: level cap for the hierarchical near-field recursion.
    singular_terms: Taylor order of the n = 3 kernel split (None -> 3).
    max_pairs: per-entry budget of sub-pairs visited by that recursion.
    table_ratio: leaf size / separation used for regular terms inside the
        self-similarity tables.
    table_max_leaves: cap on leaves per factor inside those tables.
    max_unknowns: cap on the size of one self-similarity system.
    """

    depth: int = 4
    eta: float = 1.0
    max_recursion: int = 20
    singular_terms: int | None = None
    max_pairs: int = 4096
    table_ratio: float = 4e-3
    table_max_leaves: int = 1024
    max_unknowns: int = 2000

    def __post_init__(self):
        if not 0 <= self.depth <= 12:
            raise ConfigurationError(f"quadrature depth must lie in [0, 12], got {self.depth}")
        if not 0 < self.eta <= 10:
            raise ConfigurationError(f"eta must lie in (0, 10], got {self.eta}")
        if self.max_recursion < 0 or self.max_pairs < 1 or self.max_unknowns < 1:
            raise ConfigurationError("recursion caps must be positive")
        if not 0 < self.table_ratio < 1:
            raise ConfigurationError("table_ratio must lie in (0, 1)")

    def doubled(self) -> "QuadConfig":
        return QuadConfig(min(12, 2 * self.depth), self.eta, self.max_recursion, self.singular_terms,
                          self.max_pairs, self.table_ratio, self.table_max_leaves, self.max_unknowns)


# ---------------------------------------------------------------------------
# leaves and level selection
# ---------------------------------------------------------------------------

def level_for(ratio: float, rho: float) -> int:
    """Smallest ``l >= 0`` with ``rho**l <= ratio``."""
    if ratio >= 1.0:
        return 0
    if ratio <= 0.0:
        return 10**6
    return max(0, math.ceil(math.log(ratio) / math.log(rho) - 1e-9))


def far_levels(da: float, rho_a: float, db: float, rho_b: float, dist: float, k: float,
               cfg: QuadConfig) -> tuple[int, int]:
    """Leaf levels for an admissible pair: ``depth`` at the admissibility boundary,
    one level fewer for every factor ``1/rho**2`` of extra separation (capped at the wavelength)."""
    length = min(dist, cfg.eta / k) / cfg.eta
    la = level_for(rho_a ** cfg.depth * np.sqrt(max(length / da, 1.0)), rho_a)
    lb = level_for(rho_b ** cfg.depth * np.sqrt(max(length / db, 1.0)), rho_b)
    return min(la, cfg.depth), min(lb, cfg.depth)


def smooth_level(el: MeshElement, k: float, cfg: QuadConfig) -> int:
    """Leaf level for the continuous kernel remainder: leaf size ``rho**depth * min(diam, 1/k)``."""
    rho = el.component.ifs.rho_max
    return min(cfg.depth, level_for(rho ** cfg.depth * min(1.0, 1.0 / (k * el.diameter)), rho))


def _eval(f, pts):
    vals = f(pts)
    vals = np.asarray(vals)
    if vals.shape != (pts.shape[0],):
        vals = np.array([f(p) for p in pts])
    return vals


def single_integral(element: MeshElement, f, cfg: QuadConfig, depth: int | None = None) -> complex:
    """Composite barycentre rule ``sum_leaves mu(L) f(barycentre(L))``.

    ``f`` receives an ``(K, n)`` array of points (scalar callables are applied
    point by point).
    """
    pts, w = element.leaves(cfg.depth if depth is None else depth)
    return complex(np.dot(w, _eval(f, pts)))


def tensor_sum(pa, wa, pb, wb, kern) -> complex:
    """``sum_ij wa_i wb_j kern(|pa_i - pb_j|)`` evaluated in chunks."""
    rows = max(1, CHUNK // max(1, len(pb)))
    total = 0j
    for s in range(0, len(pa), rows):
        r = cdist(pa[s:s + rows], pb)
        total += complex(wa[s:s + rows] @ kern(r) @ wb)
    return total


def admissible_distance(ba, ra, bb, rb) -> float:
    """Lower bound on the distance between two sets with given centres and radii."""
    return float(np.linalg.norm(np.asarray(ba) - np.asarray(bb))) - ra - rb


def is_admissible(a: MeshElement, b: MeshElement, eta: float) -> tuple[bool, float]:
    dist = admissible_distance(a.barycentre, a.radius, b.barycentre, b.radius)
    return dist >= eta * max(a.diameter, b.diameter) and dist > 0, dist


# ---------------------------------------------------------------------------
# self-similarity tables
# ---------------------------------------------------------------------------

def _labels_kernel(labels):
    def kern(r):
        out = []
        for kind, t in labels:
            if kind == "log":
                out.append(np.log(r))
            elif t == 0:
                out.append(np.ones_like(r))
            else:
                out.append(r ** (-t))
        return out
    return kern


def _tensor_multi(pa, wa, pb, wb, labels) -> np.ndarray:
    total = np.zeros(len(labels))
    live = [i for i, (kind, t) in enumerate(labels) if kind == "log" or t != 0]
    for i in set(range(len(labels))) - set(live):
        total[i] = wa.sum() * wb.sum()
    if not live:
        return total
    kern = _labels_kernel([labels[i] for i in live])
    rows = max(1, CHUNK // max(1, len(pb)))
    for s in range(0, len(pa), rows):
        r = cdist(pa[s:s + rows], pb)
        for i, kr in zip(live, kern(r)):
            total[i] += wa[s:s + rows] @ kr @ wb
    return total


class SelfInteractionTable:
    """Per-component cache of ``K(g)`` for the homogeneous terms of a kernel split.

    ``labels`` are ``("power", t)`` / ``("log", 0.0)`` pairs. Values are
    computed lazily; :meth:`prepare` solves for many relative maps at once.
    """

    def __init__(self, obstacle: Obstacle, labels, cfg: QuadConfig | None = None):
        self.obstacle = obstacle
        self.labels = tuple((str(k), float(t)) for k, t in labels)
        self.cfg = cfg or QuadConfig()
        for j, comp in enumerate(obstacle.components):
            for kind, t in self.labels:
                if kind == "power" and t >= comp.d:
                    raise DivergenceError(
                        f"|x-y|^-{t} is not integrable on component {j} of dimension {comp.d}")
        self._cache = [dict() for _ in obstacle.components]
        self.unresolved = 0
        self.systems_solved = 0

    @classmethod
    def for_wave(cls, obstacle: Obstacle, wave: Wave, cfg: QuadConfig | None = None):
        cfg = cfg or QuadConfig()
        split = kernel_split(wave, cfg.singular_terms)
        return cls(obstacle, [t.label for t in split.singular_terms], cfg)

    def index(self, label) -> int:
        try:
            return self.labels.index((label[0], float(label[1])))
        except ValueError:
            raise ConfigurationError(f"table has no entry for kernel term {label}") from None

    def _key(self, j: int, g: Similarity):
        return g.key(self.obstacle.components[j].diam)

    def lookup(self, j: int, g: Similarity) -> np.ndarray:
        key = self._key(j, g)
        cache = self._cache[j]
        if key not in cache:
            self.prepare(j, [g])
        return cache[key]

    def self_values(self, j: int) -> np.ndarray:
        return self.lookup(j, Similarity.identity(self.obstacle.ambient_dim))

    def value(self, j: int, label, g: Similarity | None = None) -> float:
        g = Similarity.identity(self.obstacle.ambient_dim) if g is None else g
        return float(self.lookup(j, g)[self.index(label)])

    # -- closure system ----------------------------------------------------

    def _admissible(self, comp: Component, g: Similarity) -> tuple[bool, float]:
        b, rad, diam = comp.barycentre, comp.radius, comp.diam
        dist = float(np.linalg.norm(b - g(b))) - rad - g.scale * rad
        return dist >= self.cfg.eta * diam * max(1.0, g.scale) and dist > 0, dist

    def _leaf_level(self, comp: Component, size: float, dist: float) -> int:
        rho = comp.ifs.rho_max
        lvl = level_for(self.cfg.table_ratio * dist / size, rho)
        while lvl > 0 and comp.leaf_count(lvl) > self.cfg.table_max_leaves:
            lvl -= 1
        return lvl

    def regular(self, comp: Component, g: Similarity, dist: float) -> np.ndarray:
        lx = self._leaf_level(comp, comp.diam, dist)
        ly = self._leaf_level(comp, g.scale * comp.diam, dist)
        px, wx, _ = comp.leaves(lx)
        py, wy, _ = comp.leaves(ly)
        return _tensor_multi(px, wx, g(py), wy, self.labels)

    def _fallback(self, comp: Component, g: Similarity) -> np.ndarray:
        # unresolved near pair: one-point rule at a regularised distance
        b = comp.barycentre
        r = max(float(np.linalg.norm(b - g(b))), 0.5 * comp.diam * max(1.0, g.scale))
        return np.array([_labels_kernel(self.labels)(np.array(r))[i] for i in range(len(self.labels))],
                        dtype=float)

    @staticmethod
    def _expand(comp: Component, g: Similarity):
        """Yield ``(weight, x_scale, child)`` with ``K(g) = sum w * x_scale^-t * K(child)``."""
        maps, p = comp.ifs.maps, comp.probabilities
        if g.scale > 1.0 + 1e-9:
            for m, s in enumerate(maps):
                yield p[m], 1.0, g.compose(s)
        elif g.scale < 1.0 - 1e-9:
            for m, s in enumerate(maps):
                yield p[m], s.scale, s.inverse().compose(g)
        else:
            for m, s in enumerate(maps):
                sinv_g = s.inverse().compose(g)
                for mm, ss in enumerate(maps):
                    yield p[m] * p[mm], s.scale, sinv_g.compose(ss)

    def prepare(self, j: int, seeds) -> None:
        """Solve the closure system for every relative map in ``seeds``."""
        comp = self.obstacle.components[j]
        cache = self._cache[j]
        nl = len(self.labels)
        is_log = np.array([k == "log" for k, _ in self.labels])
        expo = np.array([0.0 if k == "log" else t for k, t in self.labels])
        unknowns: list[Similarity] = []
        index: dict = {}
        queue = deque()
        for g in seeds:
            key = self._key(j, g)
            if key not in cache and key not in index:
                index[key] = len(unknowns)
                unknowns.append(g)
                queue.append(index[key])
        if not unknowns:
            return
        coupling: list[list] = []
        rhs: list[np.ndarray] = []
        while queue:
            u = queue.popleft()
            while len(coupling) <= u:
                coupling.append([])
                rhs.append(np.zeros(nl))
            for w, xs, child in self._expand(comp, unknowns[u]):
                mult = np.where(is_log, w, w * xs ** (-expo))
                rhs[u] = rhs[u] + np.where(is_log, w * math.log(xs), 0.0)
                key = self._key(j, child)
                if key in cache:
                    rhs[u] = rhs[u] + mult * cache[key]
                    continue
                if key in index:
                    coupling[u].append((index[key], mult))
                    continue
                ok, dist = self._admissible(comp, child)
                if ok:
                    rhs[u] = rhs[u] + mult * self.regular(comp, child, dist)
                elif len(unknowns) >= self.cfg.max_unknowns:
                    self.unresolved += 1
                    rhs[u] = rhs[u] + mult * self._fallback(comp, child)
                else:
                    index[key] = len(unknowns)
                    unknowns.append(child)
                    queue.append(index[key])
                    coupling[u].append((index[key], mult))
        nu = len(unknowns)
        sol = np.empty((nu, nl))
        b = np.array(rhs)
        for i in range(nl):
            mat = np.eye(nu)
            for u in range(nu):
                for v, mult in coupling[u]:
                    mat[u, v] -= mult[i]
            sol[:, i] = np.linalg.solve(mat, b[:, i])
        if not np.all(np.isfinite(sol)):
            raise FhbemError("self-similarity system produced non-finite values")
        for key, u in index.items():
            vals = sol[u].copy()
            vals.setflags(write=False)
            cache[key] = vals
        self.systems_solved += 1


def _check_exponent(component: Component, t: float) -> None:
    if t >= component.d:
        raise DivergenceError(f"int int |x-y|^-{t} diverges on a set of dimension {component.d}")


def _separated_value(comp: Component, g: Similarity, label, cfg: QuadConfig,
                     table: SelfInteractionTable, level: int = 0) -> float:
    """``K(g)`` for disjoint ``Gamma`` and ``g(Gamma)`` by splitting until admissible."""
    ok, dist = table._admissible(comp, g)
    if ok:
        return float(table.regular(comp, g, dist)[0])
    if level >= cfg.max_recursion:
        raise FhbemError("copies declared disjoint did not separate within max_recursion levels")
    total = 0.0
    for w, xs, child in SelfInteractionTable._expand(comp, g):
        if label[0] == "log":
            total += w * (math.log(xs) + _separated_value(comp, child, label, cfg, table, level + 1))
        else:
            total += w * xs ** (-label[1]) * _separated_value(comp, child, label, cfg, table, level + 1)
    return total


def self_interaction_power(component: Component, t: float, cfg: QuadConfig | None = None) -> float:
    """``int int |x-y|^-t dmu dmu`` for the normalised measure on ``component``.

    Disjoint components use ``I_t = sum_{m != m'} J_mm' / (1 - sum_m rho_m^(2d-t))``;
    otherwise the general closure system is solved.
    """
    cfg = cfg or QuadConfig()
    _check_exponent(component, t)
    label = ("power", float(t))
    obstacle = Obstacle((component,))
    table = SelfInteractionTable(obstacle, [label], cfg)
    if component.declared_disjoint:
        return _disjoint_identity(component, label, cfg, table)
    return table.value(0, label)


def self_interaction_log(component: Component, cfg: QuadConfig | None = None) -> float:
    """``int int log|x-y| dmu dmu`` for the normalised measure on ``component``."""
    cfg = cfg or QuadConfig()
    label = ("log", 0.0)
    table = SelfInteractionTable(Obstacle((component,)), [label], cfg)
    if component.declared_disjoint:
        return _disjoint_identity(component, label, cfg, table)
    return table.value(0, label)


def _disjoint_identity(comp: Component, label, cfg, table) -> float:
    maps, p = comp.ifs.maps, comp.probabilities
    rho = comp.ifs.scales
    cross = 0.0
    for m, s in enumerate(maps):
        for mm, ss in enumerate(maps):
            if m == mm:
                continue
            g = s.inverse().compose(ss)
            val = _separated_value(comp, g, label, cfg, table)
            if label[0] == "log":
                cross += p[m] * p[mm] * (math.log(rho[m]) + val)
            else:
                cross += p[m] * p[mm] * rho[m] ** (-label[1]) * val
    if label[0] == "log":
        diag = float(np.sum(p ** 2 * np.log(rho)))
        return (cross + diag) / (1.0 - float(np.sum(p ** 2)))
    denom = 1.0 - float(np.sum(rho ** (2 * comp.d - label[1])))
    if denom <= 0:
        raise FhbemError("non-positive denominator in the self-similarity identity")
    return cross / denom


# ---------------------------------------------------------------------------
# element pairs
# ---------------------------------------------------------------------------

def _far_pair(a: MeshElement, b: MeshElement, wave: Wave, dist: float, cfg: QuadConfig,
              leaf_size: float | None = None) -> complex:
    la, lb = far_levels(a.diameter, a.component.ifs.rho_max, b.diameter,
                        b.component.ifs.rho_max, dist, wave.k, cfg)
    if leaf_size is not None:
        # inside a recursion: never resolve below the leaf size of the root pair
        la = min(la, level_for(leaf_size / a.diameter, a.component.ifs.rho_max))
        lb = min(lb, level_for(leaf_size / b.diameter, b.component.ifs.rho_max))
    pa, wa = a.leaves(la)
    pb, wb = b.leaves(lb)
    return tensor_sum(pa, wa, pb, wb, lambda r: phi_r(r, wave))


def _same_component_near(a: MeshElement, b: MeshElement, wave: Wave, split: KernelSplit,
                         table: SelfInteractionTable, cfg: QuadConfig) -> complex:
    j = a.component_index
    g = a.map.inverse().compose(b.map)
    vals = table.lookup(j, g)
    mass = a.measure * b.measure
    rho_a = a.map.scale
    total = 0j
    for term in split.singular_terms:
        kval = vals[table.index(term.label)]
        if term.kind == "log":
            total += term.coefficient * mass * (math.log(rho_a) + kval)
        else:
            total += term.coefficient * mass * rho_a ** (-term.exponent) * kval
    la, lb = smooth_level(a, wave.k, cfg), smooth_level(b, wave.k, cfg)
    pa, wa = a.leaves(la)
    pb, wb = b.leaves(lb)
    return total + tensor_sum(pa, wa, pb, wb, split.remainder)


def _fallback_pair(a: MeshElement, b: MeshElement, wave: Wave) -> complex:
    r = max(float(np.linalg.norm(a.barycentre - b.barycentre)), 0.5 * max(a.diameter, b.diameter))
    return a.measure * b.measure * complex(phi_r(r, wave))


class Pieces:
    """Sub-copies ``s(Gamma_j)`` of one component held as arrays of maps."""

    def __init__(self, comp: Component, scale, rot, trans, mass):
        self.comp = comp
        self.scale = np.asarray(scale, dtype=float)
        self.rot = np.asarray(rot, dtype=float)
        self.trans = np.asarray(trans, dtype=float)
        self.mass = np.asarray(mass, dtype=float)

    @classmethod
    def from_elements(cls, elements) -> "Pieces":
        els = list(elements)
        return cls(els[0].component, [e.map.scale for e in els], [e.map.rotation for e in els],
                   [e.map.translation for e in els], [e.measure for e in els])

    def __len__(self) -> int:
        return len(self.scale)

    @property
    def bary(self) -> np.ndarray:
        return self.scale[:, None] * (self.rot @ self.comp.barycentre) + self.trans

    @property
    def radius(self) -> np.ndarray:
        return self.scale * self.comp.radius

    @property
    def diam(self) -> np.ndarray:
        return self.scale * self.comp.diam

    def take(self, idx) -> "Pieces":
        return Pieces(self.comp, self.scale[idx], self.rot[idx], self.trans[idx], self.mass[idx])

    def repeat(self, times: int) -> "Pieces":
        return self.take(np.repeat(np.arange(len(self)), times))

    def children(self) -> "Pieces":
        """All children, piece by piece in map order."""
        maps = self.comp.ifs.maps
        m = len(maps)
        rho = self.comp.ifs.scales
        qm = np.array([s.rotation for s in maps])
        tm = np.array([s.translation for s in maps])
        sc = (self.scale[:, None] * rho[None, :]).reshape(-1)
        rot = np.einsum("kij,mjl->kmil", self.rot, qm).reshape(-1, *self.rot.shape[1:])
        tr = (self.trans[:, None, :] + self.scale[:, None, None]
              * np.einsum("kij,mj->kmi", self.rot, tm)).reshape(-1, self.trans.shape[1])
        mass = (self.mass[:, None] * self.comp.probabilities[None, :]).reshape(-1)
        return Pieces(self.comp, sc, rot, tr, mass)

    def leaf_points(self, level: int):
        pts, w, _ = self.comp.leaves(level)
        xs = self.scale[:, None, None] * np.einsum("kij,lj->kli", self.rot, pts) + self.trans[:, None, :]
        return xs, w


def _concat(parts) -> Pieces:
    parts = [p for p in parts if len(p)]
    comp = parts[0].comp
    return Pieces(comp, *(np.concatenate([getattr(p, f) for p in parts])
                          for f in ("scale", "rot", "trans", "mass")))


def levels_vec(diam, rho, length, depth) -> np.ndarray:
    """Vectorised leaf level of :func:`far_levels`, clipped to ``[0, depth]``."""
    ratio = np.minimum(rho ** depth * np.sqrt(np.maximum(np.asarray(length) / np.asarray(diam), 1.0)), 1.0)
    lvl = np.ceil(np.log(ratio) / np.log(rho) - 1e-9)
    return np.clip(lvl, 0, depth).astype(int)


def size_levels(diam, rho, leaf_size, depth) -> np.ndarray:
    """Smallest levels whose leaves are no larger than ``leaf_size``, clipped to ``[0, depth]``."""
    ratio = np.minimum(leaf_size / np.asarray(diam), 1.0)
    lvl = np.ceil(np.log(ratio) / np.log(rho) - 1e-9)
    return np.clip(lvl, 0, depth).astype(int)


def batched_far(a: Pieces, b: Pieces, la, lb, wave: Wave) -> np.ndarray:
    """Tensor barycentre rule for the paired pieces ``(a[i], b[i])`` at leaf levels ``(la[i], lb[i])``."""
    out = np.empty(len(a), dtype=complex)
    la, lb = np.asarray(la), np.asarray(lb)
    keys = sorted(set(zip(la.tolist(), lb.tolist())))
    for ka, kb in keys:
        sel = np.nonzero((la == ka) & (lb == kb))[0]
        pa, wa, _ = a.comp.leaves(ka)
        pb, wb, _ = b.comp.leaves(kb)
        per = max(1, CHUNK // (len(pa) * len(pb)))
        for s in range(0, len(sel), per):
            i = sel[s:s + per]
            xa, _ = a.take(i).leaf_points(ka)
            xb, _ = b.take(i).leaf_points(kb)
            diff = xa[:, :, None, :] - xb[:, None, :, :]
            r = np.sqrt(np.einsum("gabk,gabk->gab", diff, diff))
            out[i] = np.einsum("a,gab,b->g", wa, phi_r(r, wave), wb) * a.mass[i] * b.mass[i]
    return out


def _hierarchical_pair(a: MeshElement, b: MeshElement, wave: Wave, cfg: QuadConfig) -> complex:
    """Breadth-first splitting of the larger piece until sub-pairs are admissible.

    Sub-pairs left over when ``max_recursion`` levels or ``max_pairs`` visited
    sub-pairs are exhausted get a one-point rule at a regularised distance.
    """
    big = a if a.diameter >= b.diameter else b
    leaf_size = big.component.ifs.rho_max ** cfg.depth * min(big.diameter, 1.0 / wave.k)
    ua, ub = Pieces.from_elements([a]), Pieces.from_elements([b])
    ma, mb = len(a.component.ifs), len(b.component.ifs)
    rho_a, rho_b = a.component.ifs.rho_max, b.component.ifs.rho_max
    total = 0j
    visited = 0
    level = 0
    while len(ua):
        visited += len(ua)
        da, db = ua.diam, ub.diam
        dist = np.linalg.norm(ua.bary - ub.bary, axis=1) - ua.radius - ub.radius
        ok = (dist > 0) & (dist >= cfg.eta * np.maximum(da, db))
        if ok.any():
            length = np.minimum(dist[ok], cfg.eta / wave.k) / cfg.eta
            la = np.minimum(levels_vec(da[ok], rho_a, length, cfg.depth),
                            size_levels(da[ok], rho_a, leaf_size, cfg.depth))
            lb = np.minimum(levels_vec(db[ok], rho_b, length, cfg.depth),
                            size_levels(db[ok], rho_b, leaf_size, cfg.depth))
            total += complex(np.sum(batched_far(ua.take(ok), ub.take(ok), la, lb, wave)))
        rest = ~ok
        if not rest.any():
            break
        ua, ub = ua.take(rest), ub.take(rest)
        split_a = ua.diam >= ub.diam
        grow = int(np.sum(np.where(split_a, ma, mb)))
        if level >= cfg.max_recursion or visited + grow > cfg.max_pairs:
            r = np.maximum(np.linalg.norm(ua.bary - ub.bary, axis=1), 0.5 * np.maximum(ua.diam, ub.diam))
            total += complex(np.sum(ua.mass * ub.mass * phi_r(r, wave)))
            break
        sa, sb = ua.take(split_a), ub.take(split_a)
        ta, tb = ua.take(~split_a), ub.take(~split_a)
        parts_a, parts_b = [], []
        if len(sa):
            parts_a.append(sa.children())
            parts_b.append(sb.repeat(ma))
        if len(ta):
            parts_a.append(ta.repeat(mb))
            parts_b.append(tb.children())
        ua, ub = _concat(parts_a), _concat(parts_b)
        level += 1
    return total


def element_pair_integral(a: MeshElement, b: MeshElement, wave: Wave,
                          table: SelfInteractionTable, cfg: QuadConfig,
                          split: KernelSplit | None = None) -> complex:
    """``int_a int_b Phi(x, y) dmu(y) dmu(x)`` (unnormalised basis).

    Admissible pairs use the tensor barycentre rule. Inadmissible pairs in one
    component (including a == b) combine table values for the singular terms
    with a barycentre rule on the continuous remainder; inadmissible pairs
    across components are split hierarchically.
    """
    if b.sort_key < a.sort_key:
        a, b = b, a
    ok, dist = is_admissible(a, b, cfg.eta)
    if ok:
        return _far_pair(a, b, wave, dist, cfg)
    if a.component_index == b.component_index:
        split = split or kernel_split(wave, cfg.singular_terms)
        return _same_component_near(a, b, wave, split, table, cfg)
    return _hierarchical_pair(a, b, wave, cfg)
