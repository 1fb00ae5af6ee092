import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from ellzeta.itint import (
    ChargeMismatchError,
    PanelRule,
    PreconditionError,
    RegForm,
    Regulator,
    SampledPath,
    ibp_variation_check,
    reg_iterated_integral,
    renormalized_holonomy,
)
from ellzeta.modform import LatticeParam, eisenstein, log_theta_derivatives, sigma_coefficients, theta, wp

UNIT = SampledPath.segment(0, 1)
NOREG = Regulator(func=lambda z: np.zeros_like(z), dfunc=lambda z: np.zeros_like(z))


def const_form(c):
    return RegForm(func=lambda z: np.full(z.shape, c, dtype=complex))


class TestPanelRule:
    def test_weights_sum_to_one(self):
        r = PanelRule()
        assert r.weights.sum() == pytest.approx(1, abs=1e-14)
        left = r.base == 0
        assert np.all(np.diff(r.delta[left]) > 0)
        assert np.all(np.diff(r.delta[~left]) < 0)
        assert np.all(r.delta <= 0.5)

    def test_log_singularity(self):
        r = PanelRule()
        t = r.t
        # int_0^1 log(t)^2 dt = 2
        val = r.integrate(np.where(r.base == 0, np.log(r.delta), np.log1p(-r.delta)) ** 2)
        assert abs(val - 2) < 1e-12

    def test_cumulative(self):
        r = PanelRule(min_width=1e-12)
        F = r.cumulative(np.cos(r.t))
        np.testing.assert_allclose(F, np.sin(r.t), atol=1e-14)

    def test_breaks_become_panel_edges(self):
        r = PanelRule(breaks=(0.3,))
        assert r.weights.sum() == pytest.approx(1, abs=1e-14)
        assert not np.any(np.isclose(r.t, 0.3, atol=0, rtol=1e-15))


class TestSampledPath:
    def test_piecewise(self):
        p = SampledPath([0, 1, 1 + 1j], t=[0, 0.5, 1])
        r = PanelRule(min_width=1e-10, breaks=p.breaks)
        z, dz = p.at(r)
        w = r.weights
        assert abs(np.sum(w * dz) - (1 + 1j)) < 1e-14
        assert abs(np.sum(w * dz * z) - (1 + 1j) ** 2 / 2) < 1e-14

    def test_validation(self):
        with pytest.raises(ValueError):
            SampledPath([0])
        with pytest.raises(ValueError):
            SampledPath([0, 1, 2], t=[0, 0.7, 0.5])


class TestRegIteratedIntegral:
    def test_empty_word_is_unit(self):
        assert reg_iterated_integral(UNIT, [], NOREG) == 1

    def test_plain_integral(self):
        assert abs(reg_iterated_integral(UNIT, [const_form(2)], NOREG) - 2) < 1e-14

    def test_simplex_volume(self):
        assert abs(reg_iterated_integral(UNIT, [const_form(1)] * 2, NOREG) - 0.5) < 1e-14

    @pytest.mark.parametrize("n,m", [(1, 1), (1, 2), (2, 2)])
    def test_shuffle(self, n, m):
        fs = [
            RegForm(func=lambda z: np.cos(z)),
            RegForm(func=lambda z: z**2),
            RegForm(func=lambda z: np.exp(1j * z)),
            RegForm(func=lambda z: 1 / (z + 2)),
        ]
        path = SampledPath([0, 0.5 + 0.5j, 1.2], t=[0, 0.4, 1])
        left, right = fs[:n], fs[n: n + m]
        prod = reg_iterated_integral(path, left, NOREG) * reg_iterated_integral(path, right, NOREG)
        tot = 0
        for pos in _shuffle_positions(n, m):
            word, i, j = [], 0, 0
            for k in range(n + m):
                if k in pos:
                    word.append(left[i])
                    i += 1
                else:
                    word.append(right[j])
                    j += 1
            tot += reg_iterated_integral(path, word, NOREG)
        assert abs(prod - tot) < 1e-10

    def test_reversal(self):
        fs = [RegForm(func=lambda z: np.cos(z)), RegForm(func=lambda z: z**2), RegForm(func=np.exp)]
        path = SampledPath([0.1, 1 + 0.3j])
        a = reg_iterated_integral(path, fs, NOREG)
        b = reg_iterated_integral(path.reversed(), fs[::-1], NOREG)
        assert abs(a - (-1) ** 3 * b) < 1e-12

    def test_refinement_stable(self):
        fs = [RegForm(func=lambda z: np.cos(3 * z)), RegForm(func=lambda z: z)]
        a = reg_iterated_integral(UNIT, fs, NOREG, rule=PanelRule(24))
        b = reg_iterated_integral(UNIT, fs, NOREG, rule=PanelRule(48))
        assert abs(a - b) < 1e-12

    def test_charge_mismatch(self):
        reg = Regulator(func=np.log, dfunc=lambda z: 1 / z, charge=1)
        with pytest.raises(ChargeMismatchError):
            reg_iterated_integral(UNIT, [const_form(1)], reg)

    def test_error_estimate(self):
        val, err = reg_iterated_integral(UNIT, [const_form(1)] * 3, NOREG, return_error=True)
        assert abs(val - 1 / 6) < 1e-14 and err < 1e-12


def _shuffle_positions(n, m):
    from itertools import combinations

    return [set(c) for c in combinations(range(n + m), n)]


# forms with a unit logarithmic charge at both ends of [0, 1]


def _log_reg(charge=1.0):
    def ell(base, delta):
        return np.log(delta) + np.log1p(-delta)

    def dell(base, delta):
        # d/dt log(t(1-t)) = 1/t - 1/(1-t)
        sgn = np.where(base == 0, 1.0, -1.0)
        return sgn * (1 / delta - 1 / (1 - delta))

    return Regulator(charge=charge, local=ell, dlocal=dell)


def _log_form(smooth, charge=1.0):
    def local(base, delta):
        t = np.where(base == 0, delta, 1 - delta)
        sgn = np.where(base == 0, 1.0, -1.0)
        return sgn * (1 / delta - 1 / (1 - delta)) + smooth(t)

    return RegForm(charge=charge, local=local)


class TestRegularization:
    def test_log_only_word(self):
        # omega = d ell exactly: every term has a vanishing middle letter
        reg = _log_reg()
        f = _log_form(lambda t: 0 * t)
        assert abs(reg_iterated_integral(UNIT, [f], reg)) < 1e-12
        assert abs(reg_iterated_integral(UNIT, [f, f], reg)) < 1e-12

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_ell_shift(self, n):
        reg = _log_reg()
        smooths = [lambda t: np.cos(t), lambda t: t**2 + 1, lambda t: np.exp(-t)]
        forms = [_log_form(s) for s in smooths[:n]]
        phi = lambda t: 0.3 + 0.7 * t - 0.4 * t**2
        reg2 = Regulator(
            charge=1.0,
            local=lambda b, d: reg.local(b, d) + phi(np.where(b == 0, d, 1 - d)),
            dlocal=lambda b, d: reg.dlocal(b, d) + 0.7 - 0.8 * np.where(b == 0, d, 1 - d),
        )
        lhs = reg_iterated_integral(UNIT, forms, reg2)
        pa, pb = phi(0.0), phi(1.0)
        rhs = 0
        # the shift formula includes a + b = n, paired with the unit value of the empty word
        for a in range(n + 1):
            for b in range(n + 1 - a):
                coef = (-1) ** b / (math.factorial(a) * math.factorial(b)) * pa**a * pb**b
                rhs += coef * reg_iterated_integral(UNIT, forms[a: n - b], reg)
        assert abs(lhs - rhs) < 1e-9

    def test_symmetric_shuffle_with_charge(self):
        reg = _log_reg()
        f1 = _log_form(lambda t: np.cos(t))
        f2 = _log_form(lambda t: t)
        prod = reg_iterated_integral(UNIT, [f1], reg) * reg_iterated_integral(UNIT, [f2], reg)
        tot = reg_iterated_integral(UNIT, [f1, f2], reg) + reg_iterated_integral(UNIT, [f2, f1], reg)
        assert abs(prod - tot) < 1e-10


class TestHolonomy:
    def test_scalar_exponential(self):
        m = renormalized_holonomy(UNIT, const_form(2.0), NOREG, depth=30)
        assert abs(m - math.exp(2)) < 1e-10

    def test_nilpotent(self):
        N = np.array([[0, 1], [0, 0]], dtype=complex)
        om = RegForm(func=lambda z: np.broadcast_to(N, z.shape + (2, 2)))
        reg = Regulator(func=lambda z: np.zeros_like(z), dfunc=lambda z: np.zeros_like(z), charge=np.zeros((2, 2)))
        om = RegForm(func=om.func, charge=np.zeros((2, 2)))
        m = renormalized_holonomy(UNIT, om, reg, depth=4)
        np.testing.assert_allclose(m, np.eye(2) + N, atol=1e-14)

    def test_consistency_with_words(self):
        om = RegForm(func=lambda z: np.cos(z))
        total = sum(reg_iterated_integral(UNIT, [om] * n, NOREG) for n in range(5))
        assert total == pytest.approx(renormalized_holonomy(UNIT, om, NOREG, depth=4), abs=1e-15)

    def test_matrix_charge_against_ode(self):
        """Renormalised holonomy with a non-commuting matrix charge, compared
        with a direct ODE solve normalised by exp(alpha ell) at both ends."""
        alpha = np.array([[0, 1, 0.5], [0, 0, 2], [0, 0, 0]], dtype=complex) * 0.3
        beta = np.array([[0.2, 0, 0], [1, -0.1, 0], [0.3, 0.7, 0]], dtype=complex) * 0.5

        def ell(z):
            return np.log(z * (1 - z))

        def local_form(base, delta):
            sgn = np.where(base == 0, 1.0, -1.0)
            c = sgn * (1 / delta - 1 / (1 - delta))
            return c[:, None, None] * alpha + beta

        reg = Regulator(
            charge=alpha,
            local=lambda b, d: np.log(d) + np.log1p(-d),
            dlocal=lambda b, d: np.where(b == 0, 1.0, -1.0) * (1 / d - 1 / (1 - d)),
        )
        om = RegForm(charge=alpha, local=local_form)
        M = renormalized_holonomy(UNIT, om, reg, depth=16)

        def solve(end, sgn, eps, y0):
            # distance d from the starting end, integrated in u = log(d) up to d = 1/2;
            # 1/z and 1/(1-z) are formed from d directly to avoid rounding 1 - d
            def rhs(u, y):
                d = math.exp(u)
                near, far = 1 / d, 1 / (1 - d)
                om = alpha * (near - far if end == 0 else far - near) + beta
                return (sgn * d * om @ y.reshape(3, 3)).ravel()

            sol = solve_ivp(rhs, [math.log(eps), math.log(0.5)], y0.ravel(), method="DOP853", rtol=1e-13, atol=1e-15)
            return sol.y[:, -1].reshape(3, 3)

        eps = 1e-11
        y0 = solve(0.0, 1, eps, expm(alpha * ell(eps)))
        y1 = solve(1.0, -1, eps, expm(alpha * ell(1 - eps)))
        ref = np.linalg.solve(y1, y0)
        assert np.max(np.abs(M - ref)) < 1e-7


class TestIbpVariation:
    def test_constant_g(self):
        # equal forms make g_i omega_(i+1) - g_(i+1) omega_i vanish for constant g
        fs = [RegForm(func=lambda z: np.cos(z))] * 3
        c = 0.7
        g = [(lambda z: np.full(z.shape, c, complex), lambda z: np.zeros(z.shape, complex))] * 3
        psi = [RegForm(func=lambda z: np.zeros(z.shape, complex))] * 2
        assert ibp_variation_check(UNIT, fs, NOREG, g, psi) < 1e-10

    def test_single_form(self):
        # d/de I(omega + e dg) = g(end) - g(start)
        fs = [RegForm(func=lambda z: np.cos(z))]
        g = [(lambda z: z**2 + 1, lambda z: 2 * z)]
        assert ibp_variation_check(UNIT, fs, NOREG, g, []) < 1e-10

    def test_hypothesis_violation(self):
        fs = [RegForm(func=lambda z: np.cos(z)), RegForm(func=lambda z: z)]
        g = [(lambda z: z, lambda z: np.ones_like(z)), (lambda z: 0 * z, lambda z: 0 * z)]
        psi = [RegForm(func=lambda z: 0 * z)]
        with pytest.raises(PreconditionError):
            ibp_variation_check(UNIT, fs, NOREG, g, psi)

    def test_elliptic_instance(self):
        lat = LatticeParam(1j)
        xs = [0.3, 0.17, 0.41]

        def sigma(x):
            return lambda z: theta(lat, z + x) / (theta(lat, z) * theta(lat, x))

        def g_of(x):
            # near the lattice, use sigma_x(z) = sigma_z(x) = 1/z + sum_n k_n(x) z^n,
            # so d/dx sigma_x(z) = sum_n k_n'(x) z^n; elsewhere the theta quotient
            h, order = 2e-4, 30
            st = [sigma_coefficients(lat, np.array([x + j * h]), order)[0, 1:] for j in (-2, -1, 1, 2)]
            dk = (st[0] - 8 * st[1] + 8 * st[2] - st[3]) / (12 * h)
            n = np.arange(order + 1)

            def near(z):
                w = z - np.round(z.real)
                return np.abs(w) < 0.1, w

            def g(z):
                z = np.asarray(z, complex)
                mask, w = near(z)
                out = np.empty(z.shape, complex)
                out[mask] = np.polynomial.polynomial.polyval(w[mask], dk)
                zz = z[~mask]
                d = log_theta_derivatives(lat, np.array([zz + x, x + 0 * zz]), 1)[0]
                out[~mask] = sigma(x)(zz) * (d[0] - d[1])
                return out / (2j * math.pi)

            def dg(z):
                z = np.asarray(z, complex)
                mask, w = near(z)
                out = np.empty(z.shape, complex)
                out[mask] = np.polynomial.polynomial.polyval(w[mask], (n * dk)[1:])
                zz = z[~mask]
                d1 = log_theta_derivatives(lat, np.stack([zz + x, zz, x + 0 * zz]), 2)
                a = d1[0, 0] - d1[0, 2]
                bz = d1[0, 0] - d1[0, 1]
                out[~mask] = sigma(x)(zz) * (bz * a + d1[1, 0])
                return out / (2j * math.pi)

            return g, dg

        reg = Regulator(
            func=lambda z: np.log(-2j * math.pi * theta(lat, z)),
            dfunc=lambda z: log_theta_derivatives(lat, z, 1)[0],
            charge=1.0,
        )
        forms = [RegForm(func=sigma(x), charge=1.0) for x in xs]
        psi = [RegForm(func=sigma(xs[i] + xs[i + 1]), charge=1.0) for i in range(2)]
        g = [g_of(x) for x in xs]
        assert ibp_variation_check(UNIT, forms, reg, g, psi) < 1e-7
