import math

import numpy as np
import pytest

from fhbem.errors import ConfigurationError, SingularityError
from fhbem.kernels import PlaneWave, PointSource, Wave, incident_value, kernel_split, phi, phi_r


def test_phi_3d():
    v = phi([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], Wave(1.0, 3))
    assert abs(v - complex(math.cos(1), math.sin(1)) / (4 * math.pi)) < 1e-15
    assert v.real == pytest.approx(0.04300, abs=1e-5) and v.imag == pytest.approx(0.06697, abs=1e-5)


def test_phi_3d_modulus():
    r = np.array([3.0, 50.0, 1e4])
    assert np.allclose(np.abs(phi_r(r, Wave(2.5, 3))), 1 / (4 * math.pi * r), rtol=1e-14)


def test_phi_2d():
    v = phi([0.0, 0.0], [1.0, 0.0], Wave(1.0, 2))
    assert abs(v - 0.25j * complex(0.7651976866, 0.0882569642)) < 1e-10


def test_phi_symmetric_and_singular():
    w = Wave(1.3, 2)
    assert phi([0.1, 0.2], [0.7, -0.3], w) == phi([0.7, -0.3], [0.1, 0.2], w)
    with pytest.raises(SingularityError):
        phi([1.0, 1.0], [1.0, 1.0], w)


def test_wave_validation():
    with pytest.raises(ConfigurationError):
        Wave(0.0, 2)
    with pytest.raises(ConfigurationError):
        Wave(1.0, 4)


@pytest.mark.parametrize("n,k", [(2, 1.0), (2, 7.0), (3, 1.0), (3, 4.0)])
def test_split_reassembles(n, k):
    wave = Wave(k, n)
    split = kernel_split(wave)
    r = np.array([1e-4, 0.01, 0.3, 1.0, 2.5, 9.0])
    assert np.allclose(split(r), phi_r(r, wave), rtol=1e-12, atol=1e-14)


def test_split_terms_2d():
    split = kernel_split(Wave(1.0, 2))
    labels = [t.label for t in split.singular_terms]
    assert labels == [("log", 0.0), ("power", 0.0)]
    assert split.singular_terms[0].coefficient == pytest.approx(-1 / (2 * math.pi))


def test_split_terms_3d():
    split = kernel_split(Wave(2.0, 3))
    assert [t.label[1] for t in split.singular_terms] == [1.0, 0.0, -1.0]


def test_remainder_small_near_zero():
    wave = Wave(1.0, 2)
    split = kernel_split(wave)
    limit = split.remainder(np.array([1e-9]))[0]
    r = 0.01
    assert abs(split.remainder(np.array([r]))[0] - limit) < 1e-3
    assert abs(phi_r(r, wave) + math.log(r) / (2 * math.pi) - split.singular_terms[1].coefficient - limit) < 1e-3


def test_remainder_continuous_3d():
    rem = kernel_split(Wave(3.0, 3)).remainder
    r = np.array([0.333, 1 / 3, 0.334])
    vals = rem(r)
    assert abs(vals[0] - vals[1]) < 1e-3 and abs(vals[2] - vals[1]) < 1e-3


def test_bad_term_count():
    with pytest.raises(ConfigurationError):
        kernel_split(Wave(1.0, 3), 0)


def test_plane_wave_phase():
    v = incident_value(PlaneWave(np.array([1.0, 0.0])), np.array([math.pi / 2, 0.0]), Wave(2.0, 2))
    assert abs(v + 1) < 1e-15


def test_plane_wave_needs_unit_direction():
    with pytest.raises(ConfigurationError):
        PlaneWave(np.array([3.0, 4.0]))


def test_point_source():
    wave = Wave(1.0, 3)
    src = PointSource(np.zeros(3))
    assert incident_value(src, np.array([1.0, 0.0, 0.0]), wave) == phi(np.zeros(3), [1.0, 0.0, 0.0], wave)
    with pytest.raises(SingularityError):
        incident_value(src, np.zeros(3), wave)
