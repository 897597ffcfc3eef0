import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hohomog import coeffs
from hohomog.coeffs import Preset
from hohomog.errors import ValidationError


def test_constant_preset():
    A = coeffs.constant(1.0, 8)
    assert np.all(A.values == 1.0) and A.mu == 1.0
    assert A.is_constant and A.symmetric


def test_cosine_samples():
    A = coeffs.sample(Preset("cosine_1d", {"a0": 2.0, "a1": 1.0}), 8)
    a = A.values[0, 0, 0, 0]
    assert a[0] == pytest.approx(3.0)
    assert a[4] == pytest.approx(1.0)
    assert A.check_bounds()


def test_laminate_constant_along_second_axis():
    A = coeffs.sample("laminate_2d", 16, m=1)
    v = A.values
    assert v.shape == (2, 2, 1, 1, 16, 16)
    np.testing.assert_array_equal(v, np.repeat(v[..., :1], 16, axis=-1))
    np.testing.assert_array_equal(v[0, 1], 0.0)


@pytest.mark.parametrize("params", [{"a0": 1.0, "a1": 1.0}, {"a0": 1.0, "a1": 2.0}])
def test_vanishing_cosine_rejected(params):
    with pytest.raises(ValidationError):
        coeffs.sample(Preset("cosine_1d", params), 16)


@pytest.mark.parametrize("N", [3, 7, 2])
def test_bad_resolution_rejected(N):
    with pytest.raises(ValidationError):
        coeffs.sample("cosine_1d", N)


def test_unknown_preset_and_bad_mu():
    with pytest.raises(ValidationError):
        coeffs.sample("nope", 8)
    with pytest.raises(ValidationError):
        coeffs.sample(Preset("cosine_1d", {"mu": 1.0}), 8)  # max a = 3 > 1/mu


def test_checkerboard_and_skew():
    A = coeffs.sample(Preset("smoothed_checkerboard_2d", {"contrast": 4.0, "width": 0.05}), 32, m=2)
    assert A.symmetric and A.check_bounds()
    S = coeffs.sample(Preset("smoothed_checkerboard_2d", {"skew": 0.5}), 32, m=1)
    assert not S.symmetric
    np.testing.assert_array_equal(S.adjoint().values, np.swapaxes(np.swapaxes(S.values, 0, 1), 2, 3))


def test_tabulated_round_trip():
    v = 2.0 + np.sin(2 * np.pi * np.arange(16) / 16)
    A = coeffs.sample(Preset("tabulated", {"values": v}), 16, m=2)
    np.testing.assert_array_equal(A.values[0, 0, 0, 0], v)
    with pytest.raises(ValidationError):
        coeffs.sample(Preset("tabulated", {"values": v[:8]}), 16)


def test_at_interpolates_smooth_preset():
    A = coeffs.sample("cosine_1d", 16)
    y = np.array([0.1, 0.37])
    np.testing.assert_allclose(A.at([y])[0, 0, 0, 0], 2 + np.cos(2 * np.pi * y), atol=1e-13)


def test_rescaled_tiles_periods():
    A = coeffs.sample("cosine_1d", 32)
    fine = A.rescaled(1 / 4, 128)
    x = np.arange(128) / 128
    np.testing.assert_allclose(fine[0, 0, 0, 0], 2 + np.cos(2 * np.pi * 4 * x), atol=1e-12)


def test_preset_key_stable():
    k1 = Preset("cosine_1d", {"a0": 2.0, "a1": 1.0}).key()
    assert k1 == Preset("cosine_1d", {"a1": 1.0, "a0": 2.0}).key()
    assert k1 != Preset("cosine_1d", {"a0": 2.0, "a1": 0.5}).key()


# -- coercivity probe ----------------------------------------------------------

def test_probe_constant_is_exact():
    A = coeffs.constant(2.5, 16, m=2)
    assert coeffs.coercivity_probe(A, 20) == pytest.approx(2.5, rel=1e-12)


def test_probe_flags_sign_change():
    v = np.ones(32)
    v[16:] = -1.0
    A = coeffs.sample(Preset("tabulated", {"values": v}), 32, m=1)
    assert coeffs.coercivity_probe(A, 16) < 0


@pytest.mark.parametrize("m", [1, 2])
def test_probe_converges_to_ess_inf(m):
    A = coeffs.sample("cosine_1d", 64, m=m)
    mu = coeffs.coercivity_probe(A, 10_000, seed=1)
    assert 1.0 <= mu <= 1.01


@given(seed=st.integers(0, 1000), t1=st.integers(1, 40), extra=st.integers(1, 40))
def test_probe_nonincreasing_in_trials(seed, t1, extra):
    A = coeffs.sample("cosine_1d", 16, m=1)
    assert coeffs.coercivity_probe(A, t1 + extra, seed) <= coeffs.coercivity_probe(A, t1, seed)


def test_probe_rejects_zero_trials():
    with pytest.raises(ValidationError):
        coeffs.coercivity_probe(coeffs.constant(1.0, 8), 0)


@given(c=st.floats(0.1, 10.0), N=st.sampled_from([4, 8, 16]))
def test_bounds_check_exact(c, N):
    A = coeffs.constant(c, N)
    assert np.max(np.abs(A.values)) <= 1 / A.mu * (1 + 1e-15)
