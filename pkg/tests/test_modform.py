import cmath
import math

import numpy as np
import pytest
from scipy.special import zeta

from ellzeta.modform import (
    BranchRefinementError,
    LatticeParam,
    LaurentSeries,
    ModformError,
    SingularPointError,
    UnsupportedIndexError,
    eisenstein,
    log_theta,
    sigma_coefficients,
    sigma_kernels,
    theta,
    theta_log_derivative,
    theta_log_derivative_series,
    theta_series_oracle,
    wp,
    wp_tilde_series,
)

TAUS = [1j, 0.3 + 1.1j]


@pytest.fixture(params=TAUS, ids=["i", "0.3+1.1i"])
def lat(request):
    return LatticeParam(request.param)


class TestLatticeParam:
    def test_rejects_lower_half_plane(self):
        with pytest.raises(ModformError):
            LatticeParam(-1j)

    def test_truncation_meets_tolerance(self):
        lat = LatticeParam(1j)
        assert abs(lat.q) ** lat.trunc_q < 1e-16
        assert abs(lat.q) ** (lat.trunc_q - 1) >= 1e-16

    def test_cap(self):
        assert LatticeParam(0.001j).trunc_q == 400


class TestLaurentSeries:
    def test_product_commutes_with_truncation(self):
        rng = np.random.default_rng(0)
        a = LaurentSeries(-1, rng.normal(size=8) + 1j * rng.normal(size=8))
        b = LaurentSeries(-1, rng.normal(size=9))
        full = (a * b).truncate(3)
        trunc = (a.truncate(5) * b.truncate(5)).truncate(3)
        np.testing.assert_allclose(full.coeffs, trunc.coeffs)

    def test_inverse(self):
        a = LaurentSeries(-1, [1.0, 0.5, 0.25, 2.0, 1.0])
        one = a * a.inverse()
        assert one.min_deg == 0
        np.testing.assert_allclose(one.coeffs, [1, 0, 0, 0, 0], atol=1e-14)

    def test_inverse_needs_leading_coefficient(self):
        with pytest.raises(ZeroDivisionError):
            LaurentSeries(0, [0.0, 1.0]).inverse()

    def test_derivative_and_eval(self):
        a = LaurentSeries(-1, [1.0, 2.0, 3.0])
        x = 0.3
        assert a(x) == pytest.approx(1 / x + 2 + 3 * x)
        assert a.derivative()(x) == pytest.approx(-1 / x**2 + 3)


class TestTheta:
    def test_odd(self):
        lat = LatticeParam(1j)
        assert abs(theta(lat, 0.3) + theta(lat, -0.3)) < 1e-12

    def test_antiperiodic(self):
        lat = LatticeParam(1j)
        assert abs(theta(lat, 1.3) + theta(lat, 0.3)) < 1e-12

    def test_derivative_at_zero(self, lat):
        h = 1e-5
        d = (theta(lat, h) - theta(lat, -h)) / (2 * h)
        assert abs(d - 1) < 1e-8

    def test_series_oracle(self, lat):
        z = np.array([0.25, 0.1 + 0.3j, 0.7 - 0.2j])
        np.testing.assert_allclose(theta(lat, z), theta_series_oracle(lat, z), atol=1e-14)

    def test_quasi_periodicity(self, lat):
        rng = np.random.default_rng(1)
        z = rng.random(100) + lat.tau * rng.random(100)
        tau = lat.tau
        shifted = theta(lat, z + tau)
        lhs = shifted + cmath.exp(-1j * math.pi * tau) * np.exp(-2j * np.pi * z) * theta(lat, z)
        # |theta(z + tau)| reaches ~1e5 here, so the residual is scaled by it
        assert np.max(np.abs(lhs) / np.maximum(1, np.abs(shifted))) < 1e-10

    def test_zero_on_lattice(self, lat):
        assert abs(theta(lat, 1 + lat.tau)) < 1e-12

    def test_modular_transform(self, lat):
        tau = lat.tau
        z = np.array([0.2, 0.3 + 0.1j, -0.15 + 0.4j])
        lhs = theta(lat.inverted(), z)
        rhs = np.exp(1j * np.pi * tau * z**2) * theta(lat, tau * z) / tau
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_out_of_range(self):
        with pytest.raises(ModformError):
            theta(LatticeParam(1j), 200j)


class TestEisenstein:
    def test_g0(self):
        assert eisenstein(LatticeParam(1j), 0) == -1

    def test_constant_term_dominates(self):
        assert abs(eisenstein(LatticeParam(10j), 4) - 2 * zeta(4)) < 1e-12

    def test_odd_index(self):
        with pytest.raises(UnsupportedIndexError):
            eisenstein(LatticeParam(1j), 3)

    def test_g2_anomaly(self):
        for tau in [1j + 0.1, 0.3 + 1.1j, 1j]:
            lat = LatticeParam(tau)
            lhs = eisenstein(lat.inverted(), 2)
            rhs = tau**2 * eisenstein(lat, 2) - 2j * math.pi * tau
            assert abs(lhs - rhs) < 1e-10

    @pytest.mark.parametrize("k", [4, 6, 8, 12])
    def test_weight_k_modularity(self, k):
        lat = LatticeParam(0.3 + 1.1j)
        lhs = eisenstein(lat.inverted(), k)
        assert abs(lhs - lat.tau**k * eisenstein(lat, k)) < 1e-9 * abs(lhs)

    def test_lattice_sum_oracle(self):
        # G_4 = (pi^4/90)(theta_2^8 + theta_3^8 + theta_4^8) with nome e^(i pi tau)
        mpmath = pytest.importorskip("mpmath")
        for tau in [1j, 0.3 + 1.1j]:
            qj = mpmath.exp(1j * mpmath.pi * tau)
            ref = mpmath.pi**4 / 90 * sum(mpmath.jtheta(k, 0, qj) ** 8 for k in (2, 3, 4))
            assert abs(eisenstein(LatticeParam(tau), 4) - complex(ref)) < 1e-12


class TestWeierstrass:
    def test_wp_tilde_leading(self, lat):
        s = wp_tilde_series(lat, 8)
        assert s[-2] == pytest.approx(1)
        assert s[0] == pytest.approx(eisenstein(lat, 2))
        assert s[-1] == 0 and s[1] == 0
        assert s[2] == pytest.approx(3 * eisenstein(lat, 4))

    def test_wp_tilde_matches_log_derivative(self):
        lat = LatticeParam(1j)
        x, h = 0.2, 1e-5
        fd = -(theta_log_derivative(lat, x + h) - theta_log_derivative(lat, x - h)) / (2 * h)
        assert abs(wp_tilde_series(lat, 30)(x) - fd) < 1e-7

    def test_wp_laurent(self, lat):
        x = 0.05 + 0.02j
        s = wp_tilde_series(lat, 30)
        assert abs(wp(lat, x) - (s(x) - eisenstein(lat, 2))) < 1e-10

    def test_theta_log_derivative_laurent_data(self, lat):
        s = theta_log_derivative_series(lat, 7)
        expect = [1, 0, -eisenstein(lat, 2), 0, -eisenstein(lat, 4), 0, -eisenstein(lat, 6), 0, -eisenstein(lat, 8)]
        np.testing.assert_allclose(s.coeffs, expect, atol=1e-15)
        x = 0.01
        assert abs(theta_log_derivative_series(lat, 31)(x) - theta_log_derivative(lat, x)) < 1e-10

    def test_wp_modularity(self, lat):
        tau = lat.tau
        x = np.array([0.2, 0.1 + 0.25j])
        lhs = wp(lat.inverted(), x)
        rhs = tau**2 * wp(lat, tau * x)
        assert np.max(np.abs(lhs - rhs)) < 1e-9 * np.max(np.abs(lhs))


def _sigma_direct(lat, z, x):
    return theta(lat, z + x) / (theta(lat, z) * theta(lat, x))


class TestSigmaKernels:
    def test_pole_and_k0(self):
        lat = LatticeParam(1j)
        s = sigma_kernels(lat, 0.3, 5)
        assert s[-1] == 1
        assert abs(s[0] - theta_log_derivative(lat, 0.3)) < 1e-10

    def test_against_theta_quotient(self, lat):
        z = np.array([0.3, 0.37 + 0.1j, 0.02, 0.97, 0.5 + lat.tau, 0.3 - 0.6 * lat.tau])
        c = sigma_coefficients(lat, z, 20)
        for x in [0.05, 0.03j]:
            ser = sum(c[:, i] * x ** (i - 1) for i in range(c.shape[1]))
            np.testing.assert_allclose(ser, _sigma_direct(lat, z, x), rtol=1e-12)

    def test_bounded_near_endpoints(self):
        lat = LatticeParam(1j)
        for a, b in [(1e-3, 1e-4), (1 - 1e-3, 1 - 1e-4)]:
            ka, kb = sigma_coefficients(lat, np.array([a, b]), 2)[:, 3]
            assert abs(ka - kb) < 10 * 1e-3

    def test_regimes_agree(self, lat):
        # both sides of the Taylor/product switch radius
        r = lat.settings.taylor_radius * lat.rho
        w = np.array([r * (1 - 1e-12), r * (1 + 1e-12)]) * cmath.exp(0.7j)
        c = sigma_coefficients(lat, w, 10)
        np.testing.assert_allclose(c[0], c[1], rtol=1e-9, atol=1e-9)

    def test_singular(self):
        with pytest.raises(SingularPointError):
            sigma_kernels(LatticeParam(1j), 1 + 1j, 3)

    def test_oddness(self, lat):
        z = np.array([0.3, 0.2 + 0.4j])
        c = sigma_coefficients(lat, z, 6)
        cm = sigma_coefficients(lat, -z, 6)
        for n in range(7):
            np.testing.assert_allclose(cm[:, n + 1], (-1) ** (n + 1) * c[:, n + 1], atol=1e-12)

    def test_fay_identity(self, lat):
        """(d_x s_x) s_y - s_x (d_y s_y) = s_{x+y} (p(y) - p(x)), times (x+y)."""
        N = 16
        z = 0.37
        k = sigma_coefficients(lat, np.array([z]), N)[0]  # degrees -1..N
        p = wp_tilde_series(lat, N).coeffs  # degrees -2..N ; G2 cancels in p(y)-p(x)
        size = N + 4
        # 2D arrays with offset 2: entry [i, j] is the x^(i-2) y^(j-2) coefficient
        sig = np.zeros(size, complex)
        sig[1: N + 3] = k
        dsig = np.zeros(size, complex)
        for deg in range(-1, N + 1):
            if deg != 0:
                dsig[deg + 1] = deg * k[deg + 1]
        lhs = np.outer(dsig, sig) - np.outer(sig, dsig)
        # multiply by (x + y)
        xl = np.zeros((size + 1, size + 1), complex)
        xl[1:, :-1] += lhs
        xl[:-1, 1:] += lhs
        # (x+y) s_{x+y} = 1 + sum_n k_n (x+y)^(n+1) as a polynomial
        poly = np.zeros((size + 1, size + 1), complex)
        poly[2, 2] = 1
        for n in range(0, N + 1):
            for a in range(n + 2):
                if a + 2 <= size and n + 1 - a + 2 <= size:
                    poly[a + 2, n + 1 - a + 2] += k[n + 1] * math.comb(n + 1, a)
        diff = np.zeros((size + 1, size + 1), complex)
        pp = np.zeros(size + 1, complex)
        pp[: N + 3] = p
        diff[2, :] += pp
        diff[:, 2] -= pp
        rhs = np.zeros((2 * size + 2, 2 * size + 2), complex)
        for i, j in zip(*np.nonzero(poly)):
            rhs[i: i + size + 1, j: j + size + 1] += poly[i, j] * diff
        # compare on total degree range unaffected by truncation (offset 4 in rhs)
        worst = 0.0
        for a in range(-3, N // 2):
            for b in range(-3, N // 2):
                if a + b > N // 2 - 2:
                    continue
                lv = xl[a + 2, b + 2] if 0 <= a + 2 < size + 1 and 0 <= b + 2 < size + 1 else 0
                rv = rhs[a + 4, b + 4]
                worst = max(worst, abs(lv - rv))
        assert worst < 1e-9

    def test_modular_transform(self, lat):
        tau = lat.tau
        N = 8
        z = np.array([0.3, 0.2 + 0.15j])
        left = sigma_coefficients(lat.inverted(), z, N)
        right = sigma_coefficients(lat, tau * z, N)
        for n in range(-1, N + 1):
            pred = sum(
                (2j * np.pi * tau * z) ** j / math.factorial(j) * tau ** (n - j) * right[:, n - j + 1]
                for j in range(n + 2)
            ) * tau
            np.testing.assert_allclose(left[:, n + 1], pred, rtol=1e-9, atol=1e-9)

    def test_heat_equation(self, lat):
        N, h = 6, 1e-4
        z = 0.31 + 0.12j
        dt = (sigma_coefficients(lat.shifted(h), z, N + 1) - sigma_coefficients(lat.shifted(-h), z, N + 1)) / (2 * h)
        dz = (sigma_coefficients(lat, z + h, N + 1) - sigma_coefficients(lat, z - h, N + 1)) / (2 * h)
        for n in range(0, N):
            rhs = (n + 1) * dz[n + 2] / (2j * np.pi)
            assert abs(dt[n + 1] - rhs) < 1e-6


class TestLogTheta:
    def _path(self, eps=1e-9, end=0.5, n=400):
        return np.concatenate([[eps], np.linspace(eps, end, n)[1:]])

    def test_pinned_at_zero(self):
        lat = LatticeParam(1j)
        path = self._path()
        vals = log_theta(lat, path)
        assert abs(vals[0] - cmath.log(-2j * math.pi * path[0])) < 1e-12
        assert cmath.log(-2j * math.pi).imag == pytest.approx(-math.pi / 2)

    def test_exponential(self):
        lat = LatticeParam(1j)
        path = self._path()
        v = log_theta(lat, path, 0.5)
        assert abs(cmath.exp(v) - (-2j * math.pi * theta(lat, 0.5))) < 1e-10

    def test_step_independence(self):
        lat = LatticeParam(0.3 + 1.1j)
        a = log_theta(lat, self._path(n=300, end=0.999), 0.999)
        b = log_theta(lat, self._path(n=600, end=0.999), 0.999)
        assert abs(a - b) < 1e-10

    def test_tau_segment_branch(self):
        # along [0, tau] the branch picks up -i pi tau s^2 relative to the
        # principal-looking value; check continuity via the refined unwinding
        lat = LatticeParam(1j)
        s = np.linspace(1e-9, 0.999, 800)
        vals = log_theta(lat, s * lat.tau)
        assert np.max(np.abs(np.diff(vals.imag))) < 0.1

    def test_singular(self):
        lat = LatticeParam(1j)
        with pytest.raises(SingularPointError):
            log_theta(lat, np.array([1e-9, 0.5, 1.0]))

    def test_coarse_step_refinement_error(self):
        # grazing a zero of theta makes the phase jump by ~pi within one substep
        lat = LatticeParam(1j)
        path = np.array([1e-9, 1.5 + 1e-10j])
        with pytest.raises(BranchRefinementError):
            log_theta(lat, path)
