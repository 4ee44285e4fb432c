"""Ready-made IFS components and obstacles used by tests, configs and examples."""

from __future__ import annotations

import math

import numpy as np

from .geometry import IFS, Component, ComponentKind, Obstacle, Similarity


def _embed(sim2: Similarity, n: int) -> Similarity:
    if n == 2:
        return sim2
    q = np.eye(3)
    q[:2, :2] = sim2.rotation
    return Similarity(sim2.scale, q, np.r_[sim2.translation, 0.0])


def _segment_placement(start, end) -> Similarity:
    """Planar similarity taking (0,0)-(1,0) onto start-end."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    v = end - start
    return Similarity.planar(float(np.hypot(v[0], v[1])), math.atan2(v[1], v[0]), start)


def interval_ifs(n: int = 2) -> IFS:
    """[0,1] x {0} as the attractor of x/2 and x/2 + e_1/2."""
    maps = [_embed(Similarity.planar(0.5, 0.0, (0.0, 0.0)), n),
            _embed(Similarity.planar(0.5, 0.0, (0.5, 0.0)), n)]
    return IFS(tuple(maps), n)


def interval(n: int = 2, weight: float = 1.0, exact_diameter: bool = True) -> Component:
    return Component(interval_ifs(n), weight=weight, diameter=1.0 if exact_diameter else None)


def cantor_ifs(n: int = 2, ratio: float = 1.0 / 3.0, start=(0.0, 0.0), end=(1.0, 0.0)) -> IFS:
    """Symmetric two-map Cantor set on the segment start-end with contraction ``ratio``."""
    std = IFS((Similarity.planar(ratio, 0.0, (0.0, 0.0)),
               Similarity.planar(ratio, 0.0, (1.0 - ratio, 0.0))), 2)
    ifs = std.conjugate(_segment_placement(start, end))
    if n == 3:
        ifs = IFS(tuple(_embed(s, 3) for s in ifs.maps), 3)
    return ifs


def cantor(n: int = 2, ratio: float = 1.0 / 3.0, weight: float = 1.0, start=(0.0, 0.0),
           end=(1.0, 0.0), exact_diameter: bool = True) -> Component:
    length = float(np.hypot(end[0] - start[0], end[1] - start[1]))
    return Component(cantor_ifs(n, ratio, start, end), weight=weight, declared_disjoint=ratio < 0.5,
                     diameter=length if exact_diameter else None)


def koch_curve_ifs(start=(0.0, 0.0), end=(1.0, 0.0)) -> IFS:
    """Koch curve from ``start`` to ``end`` with its bumps on the left of the chord."""
    h = math.sqrt(3.0) / 6.0
    std = IFS((Similarity.planar(1 / 3, 0.0, (0.0, 0.0)),
               Similarity.planar(1 / 3, math.pi / 3, (1 / 3, 0.0)),
               Similarity.planar(1 / 3, -math.pi / 3, (0.5, h)),
               Similarity.planar(1 / 3, 0.0, (2 / 3, 0.0))), 2)
    return std.conjugate(_segment_placement(start, end))


def koch_curve(start=(0.0, 0.0), end=(1.0, 0.0), weight: float = 1.0,
               exact_diameter: bool = True) -> Component:
    length = float(np.hypot(end[0] - start[0], end[1] - start[1]))
    return Component(koch_curve_ifs(start, end), weight=weight,
                     diameter=length if exact_diameter else None)


def snowflake_vertices(side: float = 1.0) -> np.ndarray:
    """Vertices of the base triangle of a Koch snowflake centred at the origin."""
    r = side / math.sqrt(3.0)
    angles = np.deg2rad([90.0, 210.0, 330.0])
    return r * np.c_[np.cos(angles), np.sin(angles)]


def koch_snowflake_ifs(side: float = 1.0) -> IFS:
    """Solid snowflake: a central copy (scale 1/sqrt3, turned 30 degrees) and six tip copies (1/3)."""
    r = side / math.sqrt(3.0)
    maps = [Similarity.planar(1 / math.sqrt(3.0), math.pi / 6, (0.0, 0.0))]
    for k in range(6):
        th = math.pi / 2 + k * math.pi / 3
        maps.append(Similarity.planar(1 / 3, 0.0, (2 * r / 3 * math.cos(th), 2 * r / 3 * math.sin(th))))
    return IFS(tuple(maps), 2)


def koch_snowflake(side: float = 1.0, weight: float = 1.0, exact_diameter: bool = True) -> Component:
    return Component(koch_snowflake_ifs(side), d=2.0, weight=weight,
                     kind=ComponentKind.OPEN_INTERIOR_N_SET,
                     diameter=2 * side / math.sqrt(3.0) if exact_diameter else None)


def koch_snowflake_obstacle(side: float = 1.0, interior_weight: float = 1.0,
                            boundary_weight: float = 1.0) -> Obstacle:
    """Solid snowflake plus its three boundary Koch curves (J = 4)."""
    v0, v1, v2 = snowflake_vertices(side)
    comps = [koch_snowflake(side, interior_weight)]
    for a, b in ((v0, v2), (v2, v1), (v1, v0)):
        # traversed clockwise so the bumps point outwards
        comps.append(koch_curve(a, b, boundary_weight))
    return Obstacle(tuple(comps), 2)


def sierpinski_ifs(vertices=((0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3.0) / 2)), n: int = 2) -> IFS:
    v = np.asarray(vertices, dtype=float)
    if v.shape[1] == 2 and n == 3:
        v = np.c_[v, np.zeros(3)]
    return IFS(tuple(Similarity(0.5, np.eye(n), 0.5 * p) for p in v), n)


def sierpinski(vertices=((0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3.0) / 2)), n: int = 2,
               weight: float = 1.0) -> Component:
    return Component(sierpinski_ifs(vertices, n), weight=weight)


def square_ifs(n: int = 3, side: float = 1.0) -> IFS:
    """The square [0,side]^2 (times {0} when n = 3) split into four quarters."""
    maps = []
    for ox, oy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        t = np.zeros(n)
        t[:2] = (0.5 * side * ox, 0.5 * side * oy)
        maps.append(Similarity(0.5, np.eye(n), t))
    return IFS(tuple(maps), n)


def square(n: int = 3, side: float = 1.0, weight: float = 1.0) -> Component:
    kind = ComponentKind.OPEN_INTERIOR_N_SET if n == 2 else ComponentKind.FRACTAL_SET
    return Component(square_ifs(n, side), weight=weight, kind=kind, diameter=side * math.sqrt(2.0))


PRESETS = {
    "interval": interval,
    "cantor": cantor,
    "koch_curve": koch_curve,
    "koch_snowflake": koch_snowflake,
    "sierpinski": sierpinski,
    "square": square,
}
