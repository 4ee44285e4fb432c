"""Self-similar geometry: similarities, IFS attractors, multifractal obstacles and meshes.

Every attractor carries the normalised self-similar measure (total mass 1)
scaled by its component weight, so a sub-copy ``s_w(Gamma)`` has mass
``weight * prod(scale_m ** d)`` and diameter ``prod(scale_m) * diam(Gamma)``.
Words are tuples of 1-based map indices; ``s_w = s_{w[0]} o ... o s_{w[-1]}``.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionError

ORTHO_TOL = 1e-12
#: relative slack used when comparing computed diameters against a target h
H_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Similarity:
    """``x -> scale * rotation @ x + translation``.

    ``rotation`` may be any orthogonal matrix (reflections allowed). The
    scale is only required to be positive here; contraction is enforced by
    :class:`IFS`, since relative maps ``s_u^{-1} o s_v`` may expand.
    """

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(-1)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] != t.shape[0]:
            raise ConfigurationError(
                f"rotation {q.shape} and translation {t.shape} have incompatible shapes")
        if not self.scale > 0:
            raise ConfigurationError(f"similarity scale must be positive, got {self.scale}")
        if np.max(np.abs(q.T @ q - np.eye(q.shape[0]))) > ORTHO_TOL:
            raise ConfigurationError("rotation matrix is not orthogonal to 1e-12")
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, n: int) -> "Similarity":
        return cls(1.0, np.eye(n), np.zeros(n))

    @classmethod
    def planar(cls, scale: float, angle: float = 0.0, translation=(0.0, 0.0),
               reflect: bool = False) -> "Similarity":
        """2-D similarity from a rotation angle; ``reflect`` flips y before rotating."""
        c, s = math.cos(angle), math.sin(angle)
        q = np.array([[c, -s], [s, c]])
        if reflect:
            q = q @ np.diag([1.0, -1.0])
        return cls(scale, q, np.asarray(translation, dtype=float))

    @property
    def dim(self) -> int:
        return self.translation.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.scale * (x @ self.rotation.T) + self.translation

    def compose(self, other: "Similarity") -> "Similarity":
        """Return ``self o other``."""
        return Similarity(self.scale * other.scale,
                          self.rotation @ other.rotation,
                          self.scale * (self.rotation @ other.translation) + self.translation)

    def inverse(self) -> "Similarity":
        qt = self.rotation.T
        return Similarity(1.0 / self.scale, qt, -(qt @ self.translation) / self.scale)

    def fixed_point(self) -> np.ndarray:
        """Unique fixed point; only defined for contractions."""
        n = self.dim
        return np.linalg.solve(np.eye(n) - self.scale * self.rotation, self.translation)

    def key(self, length: float = 1.0, digits: int = 10) -> tuple:
        """Hashable rounded fingerprint; translations measured in units of ``length``."""
        parts = [self.scale, *self.rotation.ravel(), *(self.translation / length)]
        return tuple(round(float(v), digits) + 0.0 for v in parts)


@dataclass(frozen=True, eq=False)
class IFS:
    """A finite family (M >= 2) of contracting similarities on R^n."""

    maps: tuple
    ambient_dim: int

    def __post_init__(self):
        maps = tuple(self.maps)
        object.__setattr__(self, "maps", maps)
        if len(maps) < 2:
            raise ConfigurationError("an IFS needs at least two maps")
        if self.ambient_dim not in (2, 3):
            raise ConfigurationError(f"ambient_dim must be 2 or 3, got {self.ambient_dim}")
        for i, s in enumerate(maps):
            if s.dim != self.ambient_dim:
                raise ConfigurationError(f"map {i} acts on R^{s.dim}, expected R^{self.ambient_dim}")
            if not 0.0 < s.scale < 1.0:
                raise ConfigurationError(f"map {i} has scale {s.scale}, need 0 < scale < 1")

    def __len__(self) -> int:
        return len(self.maps)

    @cached_property
    def scales(self) -> np.ndarray:
        return np.array([s.scale for s in self.maps])

    @property
    def rho_min(self) -> float:
        return float(self.scales.min())

    @property
    def rho_max(self) -> float:
        return float(self.scales.max())

    def conjugate(self, placement: Similarity) -> "IFS":
        """IFS whose attractor is ``placement(attractor of self)``."""
        inv = placement.inverse()
        return IFS(tuple(placement.compose(s).compose(inv) for s in self.maps), self.ambient_dim)


def moran_dimension(ifs: IFS) -> float:
    """Solve ``sum_m scale_m**d = 1`` by bisection on [0, n] then Newton polish."""
    rho = ifs.scales
    logs = np.log(rho)

    def g(d):
        return float(np.sum(rho ** d)) - 1.0

    lo, hi = 0.0, float(ifs.ambient_dim)
    if g(hi) > 0:  # overlapping maps with sum rho^n > 1: root beyond n
        while g(hi) > 0:
            hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    for _ in range(5):
        step = g(d) / float(np.sum(logs * rho ** d))
        d -= step
        if abs(step) < 1e-17:
            break
    return d


def apply_word(ifs: IFS, word: Sequence[int], x) -> np.ndarray:
    """Evaluate ``s_{w[0]} o ... o s_{w[-1]} (x)``; the empty word is the identity."""
    y = np.asarray(x, dtype=float)
    for m in reversed(tuple(word)):
        if not 1 <= m <= len(ifs):
            raise ConfigurationError(f"map index {m} out of range [1, {len(ifs)}]")
        y = ifs.maps[m - 1](y)
    return y


def word_map(ifs: IFS, word: Sequence[int]) -> Similarity:
    s = Similarity.identity(ifs.ambient_dim)
    for m in word:
        if not 1 <= m <= len(ifs):
            raise ConfigurationError(f"map index {m} out of range [1, {len(ifs)}]")
        s = s.compose(ifs.maps[m - 1])
    return s


class ComponentKind(enum.Enum):
    FRACTAL_SET = "fractal"
    OPEN_INTERIOR_N_SET = "interior"


@dataclass(frozen=True, eq=False)
class Component:
    """One attractor ``Gamma_j`` carrying ``weight * H^d`` normalised to mass ``weight``.

    ``d`` may be given explicitly; it must then agree with the Moran root to
    1e-10, and the Moran root is stored. ``diameter`` overrides the numerical
    diameter estimate when the exact value is known.
    """

    ifs: IFS
    d: float | None = None
    weight: float = 1.0
    kind: ComponentKind = ComponentKind.FRACTAL_SET
    declared_disjoint: bool = False
    diameter: float | None = None

    def __post_init__(self):
        root = moran_dimension(self.ifs)
        if self.d is not None and abs(self.d - root) > 1e-10:
            raise ConfigurationError(
                f"declared dimension {self.d} disagrees with the Moran root {root}")
        n = self.ifs.ambient_dim
        if not n - 2 < root <= n + 1e-12:
            raise ConfigurationError(f"dimension {root} outside the admissible range ({n - 2}, {n}]")
        kind = ComponentKind(self.kind)
        if kind is ComponentKind.OPEN_INTERIOR_N_SET:
            if abs(root - n) > 1e-10:
                raise ConfigurationError("an open interior component needs d = n")
            root = float(n)
        if not self.weight > 0:
            raise ConfigurationError(f"component weight must be positive, got {self.weight}")
        if self.diameter is not None and not self.diameter > 0:
            raise ConfigurationError("diameter override must be positive")
        object.__setattr__(self, "d", root)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def ambient_dim(self) -> int:
        return self.ifs.ambient_dim

    @cached_property
    def probabilities(self) -> np.ndarray:
        """Hutchinson weights ``p_m = scale_m ** d`` (they sum to 1)."""
        return self.ifs.scales ** self.d

    @cached_property
    def barycentre(self) -> np.ndarray:
        return attractor_barycentre(self)

    @cached_property
    def fixed_points(self) -> np.ndarray:
        return np.array([s.fixed_point() for s in self.ifs.maps])

    @cached_property
    def bounding_ball(self) -> tuple[np.ndarray, float]:
        """A ball ``B(c, R)`` with ``s_m(B) subset B`` for all m, hence containing Gamma."""
        c = self.barycentre
        r = max(np.linalg.norm(s(c) - c) / (1.0 - s.scale) for s in self.ifs.maps)
        return c, float(r)

    @cached_property
    def diameter_bracket(self) -> tuple[float, float]:
        return _diameter_bracket(self)

    @cached_property
    def diam(self) -> float:
        if self.diameter is not None:
            return float(self.diameter)
        lo, hi = self.diameter_bracket
        return 0.5 * (lo + hi)

    @cached_property
    def radius(self) -> float:
        """Upper bound on ``max_{x in Gamma} |x - barycentre|``."""
        return _radius_bound(self)

    def with_weight(self, weight: float) -> "Component":
        return Component(self.ifs, self.d, weight, self.kind, self.declared_disjoint, self.diameter)

    def element(self, word: Sequence[int], component_index: int = 0) -> "MeshElement":
        word = tuple(int(m) for m in word)
        s = word_map(self.ifs, word)
        mass = self.weight * float(np.prod(self.probabilities[[m - 1 for m in word]])) if word else self.weight
        return MeshElement(component_index, word, s.scale * self.diam, mass,
                           s(self.barycentre), s, s.scale * self.radius, self)

    def leaves(self, level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Barycentres, probabilities and relative scales of the level-``level`` leaves.

        Leaves are the sub-copies obtained by splitting every copy whose
        relative scale exceeds ``rho_max**level``; for a homogeneous IFS these
        are exactly the ``M**level`` copies of word length ``level``. Returned
        in lexicographic word order, relative to the whole attractor.
        """
        if level < 0:
            raise ConfigurationError(f"leaf level must be non-negative, got {level}")
        return _leaves(self, int(level))[:3]

    def leaf_count(self, level: int) -> int:
        return len(_leaves(self, int(level))[2])


def _leaves(comp: Component, level: int):
    cache = comp.__dict__.setdefault("_leaf_cache", {})
    if level in cache:
        return cache[level]
    n = comp.ambient_dim
    if level == 0:
        sc, rot, tr = np.ones(1), np.eye(n)[None], np.zeros((1, n))
    else:
        _, _, sc0, rot0, tr0 = _leaves(comp, level - 1)
        maps = comp.ifs.maps
        nm = len(maps)
        split = sc0 > comp.ifs.rho_max ** level * (1.0 + H_SLACK)
        counts = np.where(split, nm, 1)
        idx = np.repeat(np.arange(len(sc0)), counts)
        pos = np.arange(len(idx)) - np.repeat(np.cumsum(counts) - counts, counts)
        child = np.where(split[idx], pos, -1)
        sc, rot, tr = sc0[idx].copy(), rot0[idx].copy(), tr0[idx].copy()
        kid = child >= 0
        m = child[kid]
        rho = comp.ifs.scales[m]
        qm = np.array([s.rotation for s in maps])[m]
        tm = np.array([s.translation for s in maps])[m]
        tr[kid] = tr[kid] + sc[kid, None] * np.einsum("kij,kj->ki", rot[kid], tm)
        rot[kid] = rot[kid] @ qm
        sc[kid] = sc[kid] * rho
    pts = sc[:, None] * np.einsum("kij,j->ki", rot, comp.barycentre) + tr
    prob = sc ** comp.d
    prob = prob / prob.sum()
    out = (pts, prob, sc, rot, tr)
    for a in out:
        a.setflags(write=False)
    cache[level] = out
    return out


def attractor_barycentre(component: Component) -> np.ndarray:
    """Fixed point of ``x = sum_m p_m s_m(x)``: the centroid of the self-similar measure."""
    n = component.ambient_dim
    p = component.probabilities
    lhs = np.eye(n)
    rhs = np.zeros(n)
    for pm, s in zip(p, component.ifs.maps):
        lhs -= pm * s.scale * s.rotation
        rhs += pm * s.translation
    return np.linalg.solve(lhs, rhs)


class _Cell:
    __slots__ = ("map", "centre", "radius", "anchors")

    def __init__(self, comp, s, c0, r0):
        self.map = s
        self.centre = s(c0)
        self.radius = s.scale * r0
        self.anchors = s(comp.fixed_points)

    def children(self, comp, c0, r0):
        return [_Cell(comp, self.map.compose(m), c0, r0) for m in comp.ifs.maps]


def _diameter_bracket(comp: Component, rtol: float = 1e-13, max_pairs: int = 20000,
                      max_iter: int = 80) -> tuple[float, float]:
    """Branch-and-bound bracket on diam(Gamma).

    Lower bounds come from pairs of points known to lie in Gamma (images of the
    maps' fixed points); upper bounds from the invariant bounding ball of each
    sub-copy. Pairs whose upper bound falls below the best lower bound are pruned.
    """
    c0, r0 = comp.bounding_ball
    root = _Cell(comp, Similarity.identity(comp.ambient_dim), c0, r0)
    a = root.anchors
    lower = float(np.max(np.linalg.norm(a[:, None, :] - a[None, :, :], axis=-1)))
    pairs = [(root, root)]
    upper = 2.0 * r0
    for _ in range(max_iter):
        ubs = [np.linalg.norm(u.centre - v.centre) + u.radius + v.radius for u, v in pairs]
        upper = max(ubs)
        if upper - lower <= rtol * max(lower, 1e-300):
            break
        new = []
        for (u, v), ub in zip(pairs, ubs):
            if ub < lower:
                continue
            if u is v:
                kids = u.children(comp, c0, r0)
                for i, j in itertools.combinations_with_replacement(range(len(kids)), 2):
                    new.append((kids[i], kids[j]))
            else:
                ku, kv = u.children(comp, c0, r0), v.children(comp, c0, r0)
                new.extend(itertools.product(ku, kv))
        for u, v in new:
            if u is not v:
                dd = np.linalg.norm(u.anchors[:, None, :] - v.anchors[None, :, :], axis=-1)
                lower = max(lower, float(dd.max()))
        pairs = [(u, v) for u, v in new
                 if np.linalg.norm(u.centre - v.centre) + u.radius + v.radius >= lower]
        if len(pairs) > max_pairs:
            # bracket cannot be tightened further at acceptable cost
            upper = max(np.linalg.norm(u.centre - v.centre) + u.radius + v.radius for u, v in pairs)
            break
    return lower, max(upper, lower)


def _radius_bound(comp: Component, rtol: float = 1e-6, max_cells: int = 20000) -> float:
    c0, r0 = comp.bounding_ball
    b = comp.barycentre
    cells = [_Cell(comp, Similarity.identity(comp.ambient_dim), c0, r0)]
    upper = np.linalg.norm(cells[0].centre - b) + cells[0].radius
    for _ in range(60):
        lower = max(float(np.max(np.linalg.norm(c.anchors - b, axis=1))) for c in cells)
        ubs = [np.linalg.norm(c.centre - b) + c.radius for c in cells]
        upper = max(ubs)
        if upper - lower <= rtol * upper:
            break
        nxt = [k for c, ub in zip(cells, ubs) if ub >= lower for k in c.children(comp, c0, r0)]
        if len(nxt) > max_cells:
            break
        cells = nxt
    return float(upper)


def attractor_diameter(component: Component) -> float:
    """Diameter of the attractor (midpoint of a certified bracket, or the override)."""
    return component.diam


@dataclass(frozen=True)
class Obstacle:
    """A union of components carrying ``mu = sum_j weight_j * (normalised H^{d_j})``."""

    components: tuple
    ambient_dim: int | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigurationError("an obstacle needs at least one component")
        n = comps[0].ambient_dim if self.ambient_dim is None else self.ambient_dim
        for j, c in enumerate(comps):
            if c.ambient_dim != n:
                raise ConfigurationError(f"component {j} lives in R^{c.ambient_dim}, expected R^{n}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "ambient_dim", n)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def total_mass(self) -> float:
        return sum(c.weight for c in self.components)

    @property
    def diam(self) -> float:
        """Upper bound on the diameter of the union."""
        pts = [(c.barycentre, c.radius) for c in self.components]
        return max(np.linalg.norm(a - b) + ra + rb for a, ra in pts for b, rb in pts)

    def rescaled(self, factor: float) -> "Obstacle":
        return Obstacle(tuple(c.with_weight(c.weight * factor) for c in self.components),
                        self.ambient_dim)


@dataclass(frozen=True, eq=False)
class MeshElement:
    """The sub-copy ``s_word(Gamma_j)`` of component ``component_index``."""

    component_index: int
    word: tuple
    diameter: float
    measure: float
    barycentre: np.ndarray
    map: Similarity = field(repr=False)
    radius: float = field(repr=False)
    component: Component = field(repr=False)

    @property
    def open_interior(self) -> bool:
        return self.component.kind is ComponentKind.OPEN_INTERIOR_N_SET

    @property
    def sort_key(self) -> tuple:
        return (self.component_index, self.word)

    def children(self) -> list["MeshElement"]:
        comp = self.component
        out = []
        for m, s in enumerate(comp.ifs.maps):
            sm = self.map.compose(s)
            out.append(MeshElement(self.component_index, self.word + (m + 1,), sm.scale * comp.diam,
                                   self.measure * float(comp.probabilities[m]),
                                   sm(comp.barycentre), sm, sm.scale * comp.radius, comp))
        return out

    def leaves(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Barycentres and masses of the level-``level`` sub-copies of this element."""
        pts, prob, _ = self.component.leaves(level)
        return self.map(pts), self.measure * prob


def build_self_similar_mesh(component: Component, h: float,
                            component_index: int = 0) -> list[MeshElement]:
    """Subdivide every copy whose diameter exceeds ``h``; words come out lexicographically."""
    diam = component.diam
    if not (h > 0 and h <= diam * (1.0 + H_SLACK)):
        raise PreconditionError(f"mesh size h={h} must lie in (0, diam(Gamma)={diam}]")
    out: list[MeshElement] = []
    limit = h * (1.0 + H_SLACK)

    def visit(el: MeshElement):
        if el.diameter <= limit:
            out.append(el)
        else:
            for child in el.children():
                visit(child)

    visit(component.element((), component_index))
    return out


@dataclass(frozen=True, eq=False)
class Mesh:
    elements: tuple
    h: tuple
    obstacle: Obstacle = field(repr=False)

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[MeshElement]:
        return iter(self.elements)

    @property
    def counts(self) -> list[int]:
        out = [0] * len(self.obstacle)
        for el in self.elements:
            out[el.component_index] += 1
        return out

    @property
    def measures(self) -> np.ndarray:
        return np.array([el.measure for el in self.elements])

    @property
    def barycentres(self) -> np.ndarray:
        return np.array([el.barycentre for el in self.elements])


def build_multi_mesh(obstacle: Obstacle, h) -> Mesh:
    """Union of per-component self-similar meshes; components in declaration order."""
    hs = np.broadcast_to(np.asarray(h, dtype=float), (len(obstacle),))
    elements = []
    for j, (comp, hj) in enumerate(zip(obstacle.components, hs)):
        elements.extend(build_self_similar_mesh(comp, float(hj), j))
    return Mesh(tuple(elements), tuple(float(x) for x in hs), obstacle)


def dof_bounds(component: Component, h: float) -> tuple[int, int]:
    """Integer bounds on the element count of ``build_self_similar_mesh(component, h)``."""
    ratio = h / component.diam
    lo = ratio ** (-component.d)
    hi = (component.ifs.rho_min * ratio) ** (-component.d)
    return math.ceil(lo * (1 - 1e-9)), math.floor(hi * (1 + 1e-9))
