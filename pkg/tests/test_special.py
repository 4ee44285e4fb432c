import numpy as np
import pytest

from fhbem.errors import DomainError
from fhbem.special import bessel01, bessel_j0, bessel_y0, hankel1_0, hankel1_1
from fhbem.validation import bessel_oracle, hankel1_0_oracle


def test_reference_values():
    assert abs(hankel1_0(1.0) - complex(0.7651976866, 0.0882569642)) < 1e-10
    assert abs(hankel1_0(10.0) - complex(-0.2459357645, 0.0556711673)) < 1e-10


def test_log_divergence_at_zero():
    assert hankel1_0(1e-8).imag < -10


@pytest.mark.parametrize("z", [0.0, -1.0, np.nan])
def test_domain(z):
    with pytest.raises(DomainError):
        hankel1_0(z)


@pytest.mark.parametrize("z", [1e-6, 0.3, 2.0, 7.99, 8.01, 12.0, 24.9, 25.1, 60.0, 100.0])
def test_regimes_against_oracle(z):
    j0, y0, j1, y1 = bessel01(z)
    o = bessel_oracle(z)
    got = (j0, y0, j1, y1)
    for a, b in zip(got, o):
        assert abs(a - b) <= 1e-11 * max(1.0, abs(b))


def test_continuity_at_regime_boundaries():
    for z0 in (8.0, 25.0):
        z = np.array([z0 * (1 - 1e-12), z0 * (1 + 1e-12)])
        h = hankel1_0(z)
        assert abs(h[0] - h[1]) < 1e-10


def test_array_and_scalar_agree():
    z = np.array([0.5, 9.0, 40.0])
    arr = hankel1_0(z)
    assert all(abs(arr[i] - hankel1_0(float(z[i]))) == 0 for i in range(3))
    assert hankel1_0(z.reshape(3, 1)).shape == (3, 1)


def test_components():
    z = 3.7
    assert hankel1_0(z) == pytest.approx(complex(bessel_j0(z), bessel_y0(z)))
    assert abs(hankel1_1(z) - complex(*bessel_oracle(z)[2:])) < 1e-12


def test_wronskian():
    z = np.linspace(0.05, 100.0, 200)
    j0, y0, j1, y1 = bessel01(z)
    w = j1 * y0 - j0 * y1
    assert np.max(np.abs(w * np.pi * z / 2 - 1)) < 1e-9


def test_oracle_itself_at_reference_point():
    assert abs(hankel1_0_oracle(1.0) - complex(0.7651976866, 0.0882569642)) < 1e-10
