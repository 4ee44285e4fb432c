"""Helmholtz fundamental solution, its singular/smooth split, and incident fields."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, SingularityError
from .special import EULER_GAMMA, SERIES_MAX, hankel1_0

FOUR_PI = 4.0 * math.pi
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Wave:
    k: float
    n: int

    def __post_init__(self):
        if not self.k > 0:
            raise ConfigurationError(f"wavenumber must be positive, got {self.k}")
        if self.n not in (2, 3):
            raise ConfigurationError(f"ambient dimension must be 2 or 3, got {self.n}")


@dataclass(frozen=True, eq=False)
class PlaneWave:
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ConfigurationError("plane-wave direction must be a unit vector")
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True, eq=False)
class PointSource:
    location: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", np.asarray(self.location, dtype=float))


IncidentField = PlaneWave | PointSource


def phi_r(r, wave: Wave):
    """Fundamental solution as a function of distance ``r > 0`` (array friendly)."""
    r = np.asarray(r, dtype=float)
    if wave.n == 3:
        return np.exp(1j * wave.k * r) / (FOUR_PI * r)
    return 0.25j * hankel1_0(wave.k * r)


def phi(x, y, wave: Wave) -> complex:
    """``Phi(x, y)``; symmetric in its arguments."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if r == 0.0:
        raise SingularityError("fundamental solution evaluated at x = y")
    return complex(phi_r(r, wave))


@dataclass(frozen=True)
class SingularTerm:
    """``coefficient * r**(-exponent)`` (kind "power") or ``coefficient * log r`` (kind "log")."""

    kind: str
    exponent: float
    coefficient: complex

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "log":
            return self.coefficient * np.log(r)
        if self.exponent == 0:
            return self.coefficient * np.ones_like(r)
        return self.coefficient * r ** (-self.exponent)

    @property
    def label(self) -> tuple:
        return ("log", 0.0) if self.kind == "log" else ("power", float(self.exponent))


@dataclass(frozen=True)
class KernelSplit:
    singular_terms: tuple
    remainder: Callable

    def singular(self, r):
        r = np.asarray(r, dtype=float)
        return sum((t(r) for t in self.singular_terms), np.zeros(r.shape, dtype=complex))

    def __call__(self, r):
        return self.singular(r) + self.remainder(r)


def _remainder3(k: float, n_terms: int):
    def rem(r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape, dtype=complex)
        small = k * r < 1.0
        rs = r[small]
        # sum_{j >= n_terms} (ik)^j r^(j-1) / (4 pi j!)
        term = (1j * k) ** n_terms / math.factorial(n_terms) * rs ** (n_terms - 1)
        acc = np.zeros(rs.shape, dtype=complex)
        j = n_terms
        for _ in range(30):
            acc += term
            j += 1
            term = term * (1j * k) * rs / j
        out[small] = acc / FOUR_PI
        rb = r[~small]
        if rb.size:
            sing = sum(((1j * k) ** j / math.factorial(j) * rb ** (j - 1) for j in range(n_terms)),
                       np.zeros(rb.shape, dtype=complex))
            out[~small] = np.exp(1j * k * rb) / (FOUR_PI * rb) - sing / FOUR_PI
        return out
    return rem


def _remainder2(k: float, const: complex):
    wave = Wave(k, 2)

    def rem(r):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        z = k * r
        small = (z <= SERIES_MAX) & (r > 0)
        zs = z[small]
        u = 0.25 * zs * zs
        a = np.ones_like(zs)
        j0m1 = np.zeros_like(zs)
        ysum = np.zeros_like(zs)
        harm = 0.0
        for kk in range(1, 40):
            a = a * (-u) / (kk * kk)
            harm += 1.0 / kk
            j0m1 += a
            ysum -= harm * a
        logt = np.log(0.5 * zs) + EULER_GAMMA
        out[small] = 0.25j * j0m1 - (logt * j0m1 + ysum) / TWO_PI
        big = z > SERIES_MAX
        if big.any():
            rb = r[big]
            out[big] = phi_r(rb, wave) + np.log(rb) / TWO_PI - const
        return out
    return rem


def kernel_split(wave: Wave, n_terms: int | None = None) -> KernelSplit:
    """Split ``Phi = sum of singular terms + continuous remainder``.

    n = 3: the first ``n_terms`` Taylor terms of ``exp(ikr)/(4 pi r)``
    (exponents 1, 0, -1, ...). n = 2: ``-(1/2pi) log r`` plus the constant
    ``i/4 - (log(k/2) + gamma)/(2 pi)``; ``n_terms`` is ignored.
    """
    k = wave.k
    if wave.n == 3:
        n_terms = 3 if n_terms is None else int(n_terms)
        if n_terms < 1:
            raise ConfigurationError("n_terms must be at least 1")
        terms = tuple(SingularTerm("power", float(1 - j), (1j * k) ** j / (math.factorial(j) * FOUR_PI))
                      for j in range(n_terms))
        return KernelSplit(terms, _remainder3(k, n_terms))
    const = 0.25j - (math.log(k / 2.0) + EULER_GAMMA) / TWO_PI
    terms = (SingularTerm("log", 0.0, complex(-1.0 / TWO_PI)), SingularTerm("power", 0.0, const))
    return KernelSplit(terms, _remainder2(k, const))


def incident_value(field, x, wave: Wave):
    """Incident field at ``x`` (shape ``(n,)`` or ``(..., n)``)."""
    x = np.asarray(x, dtype=float)
    if isinstance(field, PlaneWave):
        val = np.exp(1j * wave.k * (x @ field.direction))
    elif isinstance(field, PointSource):
        r = np.linalg.norm(x - field.location, axis=-1)
        if np.any(r == 0.0):
            raise SingularityError("point source evaluated at its own location")
        val = phi_r(r, wave)
    else:
        raise ConfigurationError(f"unknown incident field {field!r}")
    return complex(val) if np.ndim(val) == 0 else val
