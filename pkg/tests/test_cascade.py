import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from xxcascade.cascade import (
    HBAR_UEV_PS,
    CascadeParams,
    ParameterError,
    background_channel,
    calibrate_background,
    calibrate_overhauser_sigma,
    fss_fidelity_scan,
    instantaneous_state,
    integrated_coherence,
    overhauser_average,
    precession_parameter,
    predicted_visibilities,
    spin_flip_channel,
    time_integrated_dm,
)
from xxcascade.metrics import concurrence, fidelity_to_psi_plus
from xxcascade.qcore import PSI_PLUS, dm_from_ket, maximally_mixed, validate_density_matrix


def quad_coherence(x):
    """E[exp(i x u)] for u ~ Exp(1), integrated on [0, 40] lifetimes."""
    re = quad(lambda u: math.exp(-u) * math.cos(x * u), 0, 40, epsabs=1e-13, epsrel=1e-13, limit=500)[0]
    im = quad(lambda u: math.exp(-u) * math.sin(x * u), 0, 40, epsabs=1e-13, epsrel=1e-13, limit=500)[0]
    return complex(re, im)


def quad_fidelity(fss, t1=250.0):
    c = quad_coherence(precession_parameter(fss, t1))
    return 0.5 + 0.5 * c.real


def gaussian_quad(f, mu, sigma):
    return quad(lambda s: f(s) * math.exp(-0.5 * ((s - mu) / sigma) ** 2), mu - 12 * sigma, mu + 12 * sigma,
                epsabs=1e-13, limit=500)[0] / (sigma * math.sqrt(2 * math.pi))


class TestParams:
    @pytest.mark.parametrize(
        "kwargs,field",
        [
            ({"t1_ps": -1}, "t1_ps"),
            ({"t1_ps": 0}, "t1_ps"),
            ({"fss_ueV": -0.1}, "fss_ueV"),
            ({"spin_flip_prob": 1.5}, "spin_flip_prob"),
            ({"background_fraction": -0.01}, "background_fraction"),
            ({"overhauser_sigma_ueV": -1}, "overhauser_sigma_ueV"),
            ({"t1_ps": float("nan")}, "t1_ps"),
        ],
    )
    def test_invalid(self, kwargs, field):
        with pytest.raises(ParameterError) as info:
            CascadeParams(**kwargs)
        assert info.value.field == field

    def test_xx_lifetime_default(self):
        assert CascadeParams(t1_ps=300).xx_lifetime_ps == 150
        assert CascadeParams(t1_xx_ps=90).xx_lifetime_ps == 90


class TestInstantaneous:
    def test_zero_splitting(self):
        np.testing.assert_allclose(instantaneous_state(CascadeParams(), 123.0), PSI_PLUS)

    def test_half_period(self):
        p = CascadeParams(fss_ueV=6.5)
        t = math.pi * HBAR_UEV_PS / 6.5
        np.testing.assert_allclose(instantaneous_state(p, t), [2**-0.5, 0, 0, -(2**-0.5)], atol=1e-12)

    def test_phase_at_one_lifetime(self):
        k = instantaneous_state(CascadeParams(fss_ueV=1.2), 250.0)
        assert np.angle(k[3] / k[0]) == pytest.approx(0.4558, abs=1e-4)

    def test_precession_parameter_from_si_units(self):
        # hbar = 6.582119569e-16 eV s, converted independently.
        hbar_uev_ps = 6.582119569e-16 * 1e6 * 1e12
        assert precession_parameter(1.2, 250.0) == pytest.approx(1.2 * 250 / hbar_uev_ps, rel=1e-7)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            instantaneous_state(CascadeParams(), -1.0)


class TestTimeIntegrated:
    def test_zero_splitting_is_bell_state(self):
        rho = time_integrated_dm(CascadeParams())
        np.testing.assert_allclose(rho, dm_from_ket(PSI_PLUS), atol=1e-15)

    @pytest.mark.parametrize("fss,fid", [(1.2, 0.914), (6.5, 0.570)])
    def test_fidelity_against_quadrature(self, fss, fid):
        rho = time_integrated_dm(CascadeParams(fss_ueV=fss))
        assert fidelity_to_psi_plus(rho) == pytest.approx(quad_fidelity(fss), abs=1e-10)
        assert fidelity_to_psi_plus(rho) == pytest.approx(fid, abs=5e-4)

    def test_coherence_magnitude(self):
        rho = time_integrated_dm(CascadeParams(fss_ueV=1.2))
        assert abs(rho[0, 3]) == pytest.approx(0.455, abs=5e-4)

    def test_closed_form_matches_quadrature_over_range(self):
        for x in np.linspace(0, 10, 41):
            assert abs(integrated_coherence(x) - quad_coherence(x)) < 1e-9

    def test_coherence_sign_convention(self):
        # rho[VV, HH] = 1/2 E[exp(+i phi)]
        rho = time_integrated_dm(CascadeParams(fss_ueV=1.2))
        assert rho[3, 0].imag > 0

    def test_matches_instantaneous_average(self):
        p = CascadeParams(fss_ueV=2.0)
        ts = np.linspace(0, 40 * p.t1_ps, 200001)
        w = np.exp(-ts / p.t1_ps)
        w /= np.trapezoid(w, ts) if hasattr(np, "trapezoid") else np.trapz(w, ts)
        ph = np.exp(1j * p.fss_ueV * ts / HBAR_UEV_PS)
        integral = np.trapezoid(w * ph, ts) if hasattr(np, "trapezoid") else np.trapz(w * ph, ts)
        assert abs(2 * time_integrated_dm(p)[3, 0] - integral) < 1e-6

    @given(st.floats(0, 20), st.floats(0, 3), st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_always_valid(self, fss, sigma, sf, bg):
        rho = time_integrated_dm(CascadeParams(fss, 250.0, sigma, sf, bg))
        validate_density_matrix(rho)

    @given(st.floats(0, 20))
    @settings(max_examples=30, deadline=None)
    def test_sign_symmetry(self, x):
        a = integrated_coherence(x)
        b = integrated_coherence(-x)
        assert 0.5 + 0.5 * a.real == pytest.approx(0.5 + 0.5 * b.real, abs=1e-14)

    def test_full_background_is_maximally_mixed(self):
        rho = time_integrated_dm(CascadeParams(fss_ueV=1.2, background_fraction=1.0))
        np.testing.assert_allclose(rho, maximally_mixed(), atol=1e-15)

    def test_full_spin_flip_kills_linear_visibility(self):
        v = predicted_visibilities(time_integrated_dm(CascadeParams(spin_flip_prob=1.0)))
        assert v.c_linear == pytest.approx(0.0, abs=1e-15)

    def test_spin_flip_keeps_xx_marginal(self):
        rho = time_integrated_dm(CascadeParams(fss_ueV=1.0))
        out = spin_flip_channel(rho, 0.3)
        marg = lambda m: np.einsum("ajbj->ab", m.reshape(2, 2, 2, 2))
        np.testing.assert_allclose(marg(out), marg(rho), atol=1e-15)

    def test_background_channel(self):
        rho = dm_from_ket(PSI_PLUS)
        np.testing.assert_allclose(background_channel(rho, 0.2), 0.8 * rho + 0.05 * np.eye(4), atol=1e-15)


class TestOverhauser:
    def test_zero_sigma_identical(self):
        p = CascadeParams(fss_ueV=1.2)
        np.testing.assert_allclose(overhauser_average(p, 1000, 1), time_integrated_dm(p), atol=1e-12)

    def test_closed_form_against_gaussian_quadrature(self):
        for fss, sigma in [(0.0, 1.0), (1.2, 0.5), (6.5, 2.0)]:
            p = CascadeParams(fss_ueV=fss, overhauser_sigma_ueV=sigma)

            def f(s):
                x = precession_parameter(s, 250.0)
                return 0.5 + 0.5 / (1 + x * x)

            assert fidelity_to_psi_plus(time_integrated_dm(p)) == pytest.approx(gaussian_quad(f, fss, sigma), abs=1e-10)

    def test_monte_carlo_within_three_standard_errors(self):
        p = CascadeParams(fss_ueV=0.0, overhauser_sigma_ueV=1.0)
        n = 100_000
        mc = fidelity_to_psi_plus(overhauser_average(p, n, seed=4))
        s = p.fss_ueV + p.overhauser_sigma_ueV * np.random.default_rng(0).standard_normal(200_000)
        x = s * 250 / HBAR_UEV_PS
        sem = np.std(0.5 + 0.5 / (1 + x * x)) / math.sqrt(n)

        def f(s):
            x = precession_parameter(s, 250.0)
            return 0.5 + 0.5 / (1 + x * x)

        exact = gaussian_quad(f, 0.0, 1.0)
        assert mc < 1
        assert abs(mc - exact) < 3 * sem

    def test_monotone_in_sigma(self):
        f1 = fidelity_to_psi_plus(time_integrated_dm(CascadeParams(overhauser_sigma_ueV=1.0)))
        f2 = fidelity_to_psi_plus(time_integrated_dm(CascadeParams(overhauser_sigma_ueV=2.0)))
        assert f2 < f1 < 1

    def test_bit_reproducible(self):
        p = CascadeParams(fss_ueV=1.0, overhauser_sigma_ueV=0.7)
        a = overhauser_average(p, 70_000, 9)
        b = overhauser_average(p, 70_000, 9)
        assert np.array_equal(a, b)

    def test_calibrate_to_ceiling(self):
        sigma = calibrate_overhauser_sigma(CascadeParams(), 0.99)
        f = fidelity_to_psi_plus(time_integrated_dm(CascadeParams(overhauser_sigma_ueV=sigma)))
        assert f == pytest.approx(0.99, abs=1e-10)
        assert 0.3 < sigma < 0.5


class TestVisibilities:
    def test_bell_state(self):
        v = predicted_visibilities(dm_from_ket(PSI_PLUS))
        assert v.as_tuple() == pytest.approx((1, 1, -1), abs=1e-15)

    def test_mixed(self):
        assert predicted_visibilities(maximally_mixed()).as_tuple() == pytest.approx((0, 0, 0), abs=1e-15)

    def test_fss_state(self):
        x = 1.2 * 250 / 658.2119
        v = predicted_visibilities(time_integrated_dm(CascadeParams(fss_ueV=1.2)))
        assert v.as_tuple() == pytest.approx((1, 1 / (1 + x * x), -1 / (1 + x * x)), abs=1e-12)
        assert v.c_diagonal == pytest.approx(0.828, abs=1e-3)


class TestScan:
    def test_values(self):
        rows = fss_fidelity_scan(CascadeParams(), [0, 1.2, 6.5])
        assert [r.fidelity for r in rows] == pytest.approx([1.0, 0.914, 0.570], abs=5e-4)
        assert rows[0].concurrence == pytest.approx(1.0, abs=1e-12)

    @given(st.lists(st.floats(0, 30), min_size=2, max_size=10), st.floats(0, 2), st.floats(0, 0.5))
    @settings(max_examples=40, deadline=None)
    def test_monotone_in_fss(self, grid, sigma, bg):
        grid = sorted(grid)
        rows = fss_fidelity_scan(CascadeParams(overhauser_sigma_ueV=sigma, background_fraction=bg), grid)
        fid = [r.fidelity for r in rows]
        assert all(b <= a + 1e-12 for a, b in zip(fid, fid[1:]))

    def test_negative_grid(self):
        with pytest.raises(ValueError):
            fss_fidelity_scan(CascadeParams(), [-1])


def test_background_calibration():
    p = CascadeParams(fss_ueV=1.3)
    beta = calibrate_background(p, 0.84)
    assert concurrence(time_integrated_dm(replace(p, background_fraction=beta))) == pytest.approx(0.84, abs=1e-9)
