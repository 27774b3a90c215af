import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import iv

from rydsps import retrieval as rt
from rydsps.core import MHZ


def bessel_i0_40(x):
    """Reference I0 from 40 terms of its power series."""
    x = np.asarray(x, float)
    term = np.ones_like(x)
    total = term.copy()
    for k in range(1, 40):
        term = term * (x * x / 4) / (k * k)
        total = total + term
    return total


def kernel_oracle(z, zp, d, xs, dt):
    f = 2.0 / (2.0 + xs * (1 + dt * dt))
    a = d * f / 2
    return a * np.exp(-a * ((1 + xs * (1 - 1j * dt)) * z + (1 + xs * (1 + 1j * dt)) * zp)) * bessel_i0_40(d * np.sqrt(z * zp) * f)


def trapezoid_eta(d, xs, dt, n=2000):
    z = np.linspace(0, 1, n + 1)
    K = kernel_oracle(z[:, None], z[None, :], d, xs, dt)
    w = np.full(n + 1, 1.0 / n)
    w[0] = w[-1] = 0.5 / n
    return float(np.real(w @ K @ w))


def rp_for(d, xs=0.0, dt=0.0, omega=1.0):
    # gamma_s chosen to give the requested x_s
    return rt.RetrievalParams.build(d, dt, omega, xs * omega**2 / 2)


def test_dimensionless_params_baseline(base_cfg):
    rp = rt.dimensionless_params(base_cfg.physics)
    g_s = (0.088 + 0.005) / 6.9
    om = 6.8 / 6.9
    dt = 2 * 7.0 / 6.9
    xs = 2 * g_s / om**2
    assert rp.d == 6.5
    assert rp.gamma_s_tilde == pytest.approx(g_s, rel=1e-13)
    assert rp.omega_tilde == pytest.approx(om, rel=1e-13)
    assert rp.delta_tilde == pytest.approx(dt, rel=1e-13)
    assert rp.x_s == pytest.approx(xs, rel=1e-13)
    assert rp.f_xs == pytest.approx(2 / (2 + xs * (1 + dt * dt)), rel=1e-13)
    # frozen values: x_s = 0.027755, f = 0.93370
    assert rp.x_s == pytest.approx(0.027755, abs=1e-6)
    assert rp.f_xs == pytest.approx(0.93370, abs=1e-5)


def test_dimensionless_params_no_dephasing(base_cfg):
    p = base_cfg.physics.replace(gamma_gr=0.0, gamma_cr=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rp = rt.dimensionless_params(p)
    assert rp.x_s == 0.0 and rp.f_xs == 1.0


def test_dimensionless_params_errors(base_cfg):
    with pytest.raises(ValueError):
        rt.dimensionless_params(base_cfg.physics.replace(omega_c_ret=0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            rt.dimensionless_params(base_cfg.physics.replace(gamma_ge=0.0))


def test_params_validation():
    with pytest.raises(ValueError):
        rt.RetrievalParams(6.5, 0.0, 1.0, 0.0, 0.0, 0.9)  # inconsistent f
    with pytest.raises(ValueError):
        rt.RetrievalParams.build(0.0, 0.0, 1.0, 0.0)


def test_kernel_origin():
    rp = rp_for(6.5, 0.03, 2.0)
    assert rt.kernel(0.0, 0.0, rp) == pytest.approx(rp.d * rp.f_xs / 2, rel=1e-15)


@given(z=st.floats(0, 1), zp=st.floats(0, 1), d=st.floats(0.1, 30), xs=st.floats(0, 2), dt=st.floats(-10, 10))
def test_kernel_hermitian(z, zp, d, xs, dt):
    rp = rp_for(d, xs, dt)
    assert rt.kernel(z, zp, rp) == pytest.approx(np.conj(rt.kernel(zp, z, rp)), rel=1e-12, abs=1e-300)


@given(z=st.floats(0, 1), zp=st.floats(0, 1), d=st.floats(0.1, 30), xs=st.floats(0, 2), dt=st.floats(-10, 10))
def test_kernel_matches_series_oracle(z, zp, d, xs, dt):
    rp = rp_for(d, xs, dt)
    assert rt.kernel(z, zp, rp) == pytest.approx(kernel_oracle(z, zp, d, xs, dt), rel=1e-12, abs=1e-300)


def test_kernel_domain():
    with pytest.raises(ValueError):
        rt.kernel(1.2, 0.5, rp_for(1.0))


def test_zero_spin_wave():
    rp = rp_for(6.5)
    assert rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(0.0), rp) == 0.0


def test_baseline_retrieval_efficiency(base_cfg):
    # frozen: 0.63444 at Delta = 2pi x 7 MHz, d = 6.5
    eta = rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(), rt.dimensionless_params(base_cfg.physics))
    assert eta == pytest.approx(0.63444, abs=1e-5)


def test_matches_dense_trapezoid():
    eta = rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(), rp_for(6.5))
    assert eta == pytest.approx(trapezoid_eta(6.5, 0.0, 0.0), abs=1e-4)


def test_matches_dense_trapezoid_with_dephasing():
    eta = rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(), rp_for(6.5, 0.027755, 2.0290))
    assert eta == pytest.approx(trapezoid_eta(6.5, 0.027755, 2.0290), abs=1e-4)


def test_monotone_in_optical_depth():
    ds = [0.5, 1, 2, 4, 8, 16]
    ours = [rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(), rp_for(d)) for d in ds]
    ref = [trapezoid_eta(d, 0.0, 0.0) for d in ds]
    assert np.all(np.diff(ours) >= 0)
    np.testing.assert_allclose(ours, ref, atol=1e-4)


@settings(max_examples=10)
@given(d=st.floats(0.5, 20), xs=st.floats(0, 0.5), dt=st.floats(0.1, 8))
def test_detuning_sign_invariance(d, xs, dt):
    S = rt.SpinWaveProfile.uniform()
    a = rt.retrieval_efficiency(S, rp_for(d, xs, dt))
    b = rt.retrieval_efficiency(S, rp_for(d, xs, -dt))
    assert a == pytest.approx(b, rel=1e-7)
    assert 0.0 <= a <= 1.0


def test_shaped_profile_in_range():
    f = lambda z: np.exp(-((z - 0.5) / 0.2) ** 2)
    rp = rp_for(6.5, 0.02, 1.0)
    coarse = rt.retrieval_efficiency(rt.SpinWaveProfile.from_function(f, 101), rp)
    fine = rt.retrieval_efficiency(rt.SpinWaveProfile.from_function(f, 201), rp)
    assert 0.0 < fine < 1.0
    assert coarse == pytest.approx(fine, rel=1e-3)


def test_tabulated_flat_profile_matches_uniform():
    rp = rp_for(6.5, 1.0, 1.0)
    flat = rt.SpinWaveProfile.from_function(lambda z: np.ones_like(z), 41)
    assert rt.retrieval_efficiency(flat, rp) == pytest.approx(
        rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(), rp), abs=1e-10)


def test_quadrature_failure_is_reported(monkeypatch):
    def noisy(*a, **k):
        warnings.warn("roundoff", integrate.IntegrationWarning)
        return 0.0, 0.0

    monkeypatch.setattr(rt.integrate, "dblquad", noisy)
    with pytest.raises(rt.QuadratureError):
        rt.retrieval_efficiency(rt.SpinWaveProfile.uniform(), rp_for(1.0))


def test_profile_validation():
    with pytest.raises(ValueError):
        rt.SpinWaveProfile([0.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValueError):
        rt.SpinWaveProfile([0.0, 1.0], [1.0, np.nan])
    S = rt.SpinWaveProfile([0.0, 1.0], [0.0, 2.0])
    assert S(0.25) == pytest.approx(0.5)
    assert S(1.5) == 0.0


@given(re=st.floats(-20, 20), im=st.floats(-20, 20))
def test_complex_i0_series(re, im):
    z = complex(re, im)
    # imaginary arguments cancel; error scales with the modulus of the terms
    assert abs(rt.i0_series(z) - iv(0, z)) <= 1e-12 * max(1.0, iv(0, abs(z)))


def test_i0_series_nonconvergence():
    with pytest.raises(rt.SeriesError):
        rt.i0_series(500.0, max_terms=20)


def test_envelope_without_drive_is_zero():
    rp = rp_for(6.5, 0.0, 2.0)
    t = np.linspace(0, 5, 7)
    np.testing.assert_array_equal(rt.field_envelope(t, rt.SpinWaveProfile.uniform(), rp, lambda s: 0.0), 0)


def test_envelope_at_time_zero():
    rp = rp_for(6.5, 0.03, 2.0, omega=0.9)
    a = 1 / (1 + 1j * rp.delta_tilde)
    re = integrate.quad(lambda z: (a * np.exp(-rp.d * z * a)).real, 0, 1, epsabs=1e-14)[0]
    im = integrate.quad(lambda z: (a * np.exp(-rp.d * z * a)).imag, 0, 1, epsabs=1e-14)[0]
    expected = -math.sqrt(rp.d) * rp.omega_tilde * complex(re, im)
    assert rt.field_envelope(0.0, rt.SpinWaveProfile.uniform(), rp) == pytest.approx(expected, rel=1e-12)


def test_time_domain_route_agrees(base_cfg):
    rp = rt.dimensionless_params(base_cfg.physics)
    S = rt.SpinWaveProfile.uniform()
    assert rt.emitted_efficiency(S, rp) == pytest.approx(rt.retrieval_efficiency(S, rp), abs=1e-3)


def test_time_domain_callable_drive_matches_constant():
    rp = rp_for(4.0, 0.02, 1.0, omega=1.2)
    S = rt.SpinWaveProfile.uniform()
    t = np.array([0.0, 0.3, 1.1])
    np.testing.assert_allclose(rt.field_envelope(t, S, rp, lambda s: 1.2), rt.field_envelope(t, S, rp), rtol=1e-10)


def test_envelope_table_columns():
    tab = rt.envelope_table(rt.SpinWaveProfile.uniform(), rp_for(2.0), 3.0, n=11)
    assert tab.shape == (11, 4)
    np.testing.assert_allclose(tab[:, 3], tab[:, 1] ** 2 + tab[:, 2] ** 2)


def test_generation_probability():
    assert rt.generation_probability(0.82, 0.82, 0.63) == pytest.approx(0.423612)
    assert rt.generation_probability(0.0, 0.5, 0.5) == 0.0
    assert rt.generation_probability(1.0, 1.0, 1.0) == 1.0
    with pytest.raises(ValueError):
        rt.generation_probability(1.1, 1.0, 1.0)


def test_delta_used_is_retrieval_stage(base_cfg):
    p = base_cfg.physics
    assert p.delta_ret == pytest.approx(7 * MHZ)
    rp = rt.dimensionless_params(p.replace(delta_p=100 * MHZ))
    assert rp.delta_tilde == pytest.approx(2 * 7 / 6.9)
