"""Bessel functions of orders 0 and 1 and the Hankel functions built from them.

Three regimes, chosen per argument:

* ``z <= 8``: ascending series (logarithmic coupling for Y through Euler's constant);
* ``8 < z <= 25``: Miller backward recurrence for J_n normalised by
  ``J_0 + 2 sum J_2k = 1``, with the Neumann series for Y_0 and its derivative for Y_1;
* ``z > 25``: Hankel's large-argument expansion.

The asymptotic expansion alone is only good to about ``exp(-2z)``, which is why
the middle regime exists.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.577215664901532860606512090082
SERIES_MAX = 8.0
MILLER_MAX = 25.0
_SERIES_TERMS = 40
_ASYM_TERMS = 30
_TWO_OVER_PI = 2.0 / np.pi


def _series_coefficients(nterms):
    """Coefficients in ``u = z^2 / 4`` of the four ascending series."""
    k = np.arange(nterms)
    fact = np.cumprod(np.concatenate(([1.0], np.arange(1.0, nterms))))
    sign = (-1.0) ** k
    a = sign / fact ** 2                        # (-u)^k / (k!)^2
    b = sign / (fact * fact * (k + 1))          # (-u)^k / (k! (k+1)!)
    harm = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1.0, nterms))))
    # psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
    return a, -harm * a, b, (2.0 * harm + 1.0 / (k + 1) - 2.0 * EULER_GAMMA) * b


_SERIES_COEFFS = _series_coefficients(_SERIES_TERMS)


def _horner(coeffs, u, nterms):
    acc = np.full_like(u, coeffs[nterms - 1])
    for c in coeffs[nterms - 2::-1]:
        acc *= u
        acc += c
    return acc


def _series(z, order1=True):
    if z.size == 0:
        return (z, z, z, z) if order1 else (z, z, None, None)
    u = 0.25 * z * z
    nterms = min(_SERIES_TERMS, int(12 + 2.7 * float(np.max(z))))
    ca, cy0, cb, cy1 = _SERIES_COEFFS
    j0 = _horner(ca, u, nterms)
    y0 = _TWO_OVER_PI * ((np.log(0.5 * z) + EULER_GAMMA) * j0 + _horner(cy0, u, nterms))
    if not order1:
        return j0, y0, None, None
    j1 = 0.5 * z * _horner(cb, u, nterms)
    y1 = (-_TWO_OVER_PI / z + _TWO_OVER_PI * np.log(0.5 * z) * j1
          - 0.5 * z * _horner(cy1, u, nterms) / np.pi)
    return j0, y0, j1, y1


def _miller(z, order1=True):
    nstart = 2 * int(np.ceil((float(np.max(z)) + 40.0) / 2.0))
    jp1 = np.zeros_like(z)          # J_{n+1}
    jn = np.full_like(z, 1e-30)     # J_n, starting at n = nstart
    norm = np.zeros_like(z)         # J_0 + 2 sum_k J_2k
    s0 = np.zeros_like(z)           # sum_k (-1)^k J_2k / k
    s1 = np.zeros_like(z)           # sum_k (-1)^k (J_{2k-1} - J_{2k+1}) / k, regrouped by odd order
    j1 = jn
    for n in range(nstart, 0, -1):
        if n % 2 == 0:
            k = n // 2
            norm += 2.0 * jn
            s0 += (-1.0) ** k * jn / k
        else:
            m = (n - 1) // 2
            c = 1.0 / (m + 1) + (1.0 / m if m else 0.0)
            s1 += (-1.0) ** (m + 1) * c * jn
            if n == 1:
                j1 = jn
        jp1, jn = jn, (2.0 * n / z) * jn - jp1
    j0 = jn
    norm += j0
    j0, j1, s0, s1 = j0 / norm, j1 / norm, s0 / norm, s1 / norm
    logt = np.log(0.5 * z) + EULER_GAMMA
    y0 = _TWO_OVER_PI * (logt * j0 - 2.0 * s0)
    y1 = -_TWO_OVER_PI * j0 / z + _TWO_OVER_PI * logt * j1 + _TWO_OVER_PI * s1
    return j0, y0, j1, y1


def _asymptotic(z, nu):
    mu = 4.0 * nu * nu
    term = np.ones(z.shape, dtype=complex)
    total = np.ones(z.shape, dtype=complex)
    for k in range(1, _ASYM_TERMS):
        term = term * 1j * (mu - (2 * k - 1) ** 2) / (8.0 * k * z)
        total += term
    phase = z - 0.5 * nu * np.pi - 0.25 * np.pi
    return np.sqrt(_TWO_OVER_PI / z) * np.exp(1j * phase) * total


def bessel01(z, order1=True):
    """Return ``(J0, Y0, J1, Y1)`` at positive real ``z`` (scalar or array).

    With ``order1=False`` the order-one entries are ``None``.
    """
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise DomainError("Bessel functions of the second kind need z > 0")
    flat = z.reshape(-1)
    nout = 4 if order1 else 2
    out = [np.empty_like(flat) for _ in range(nout)]
    m1 = flat <= SERIES_MAX
    m2 = (flat > SERIES_MAX) & (flat <= MILLER_MAX)
    m3 = flat > MILLER_MAX
    # the series needs more terms as z grows, so small arguments get their own pass
    m0 = flat <= 2.0
    m1 = m1 & ~m0
    for mask, fn in ((m0, _series), (m1, _series), (m2, _miller)):
        if mask.any():
            for o, v in zip(out, fn(flat[mask], order1)):
                o[mask] = v
    if m3.any():
        h0 = _asymptotic(flat[m3], 0.0)
        out[0][m3], out[1][m3] = h0.real, h0.imag
        if order1:
            h1 = _asymptotic(flat[m3], 1.0)
            out[2][m3], out[3][m3] = h1.real, h1.imag
    res = [o.reshape(z.shape) for o in out]
    if z.ndim == 0:
        res = [float(r) for r in res]
    if not order1:
        res += [None, None]
    return tuple(res)


def hankel1_0(z):
    """Hankel function of the first kind and order zero, ``J0 + i Y0``."""
    j0, y0, _, _ = bessel01(z, order1=False)
    return j0 + 1j * y0 if np.ndim(j0) else complex(j0, y0)


def hankel1_1(z):
    _, _, j1, y1 = bessel01(z)
    return j1 + 1j * y1 if np.ndim(j1) else complex(j1, y1)


def bessel_j0(z):
    return bessel01(z, order1=False)[0]


def bessel_y0(z):
    return bessel01(z, order1=False)[1]
