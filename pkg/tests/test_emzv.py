import math

import numpy as np
import pytest
from scipy.special import zeta

from ellzeta import emzv as E
from ellzeta.itint import PanelRule, RegForm, Regulator, SampledPath, reg_iterated_integral
from ellzeta.modform import LatticeParam, OutOfRangeError, log_theta, sigma_coefficients

LAT_I = LatticeParam(1j)
LAT_2I = LatticeParam(2j)


class TestIndexWord:
    def test_depth_and_weight(self):
        w = E.IndexWord((0, 2, -1))
        assert (w.depth, w.weight) == (3, 7)
        assert E.IndexWord(()).weight == 0

    def test_rejects_small_index(self):
        with pytest.raises(E.EmzvError):
            E.IndexWord((0, -2))

    def test_parse(self):
        assert E.IndexWord.parse("(0,2)").d == (0, 2)
        assert E.IndexWord.parse("-1").d == (-1,)
        assert E.IndexWord.parse("()").d == ()

    def test_enumeration(self):
        for w in range(1, 7):
            words = E.words_of_weight(w)
            assert len(words) == 2 ** (w - 1)
            assert all(E.IndexWord(d).weight == w for d in words)
        assert len(E.words_of_depth(2, 3)) == 25

    def test_shuffles(self):
        assert sorted(E.shuffles((1,), (2,))) == [(1, 2), (2, 1)]
        assert len(E.shuffles((1, 2), (3, 4, 5))) == math.comb(5, 2)


class TestSpecialValues:
    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_I_minus_ones(self, n):
        v = E.compute_I(LAT_I, (-1,) * n)
        assert abs(v.value - 1 / math.factorial(n)) < 1e-10
        assert v.est_error < 1e-10 and not v.flagged

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_J_minus_ones(self, n):
        v = E.compute_J(LAT_2I, (-1,) * n)
        assert abs(v.value - (2j) ** n / math.factorial(n)) < 1e-9

    def test_J_single(self):
        assert abs(E.compute_J(LAT_I, (-1,)).value - 1j) < 1e-10

    @pytest.mark.parametrize("kind", ["I", "J"])
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_zero_words(self, kind, n):
        tab = E.compute_table(LAT_I, [(0,) * n], kind)
        assert tab[(0,) * n].value == 0

    def test_empty_word(self):
        assert E.compute_I(LAT_I, ()).value == 1


class TestDepthOne:
    def test_tau_independence(self):
        for d in range(-1, 5):
            a = E.compute_I(LAT_I, (d,)).value
            b = E.compute_I(LAT_2I, (d,)).value
            c = E.compute_I(LatticeParam(0.3 + 1.3j), (d,)).value
            assert abs(a - b) < 1e-8 and abs(a - c) < 1e-8

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_odd_index_closed_form(self, k):
        # the constant Fourier term of k_{2k-1} on the real period is -2 zeta(2k)
        assert abs(E.compute_I(LAT_I, (2 * k - 1,)).value + 2 * zeta(2 * k)) < 1e-10

    @pytest.mark.parametrize("d", [2, 4])
    def test_even_index_vanishes(self, d):
        # k_d(1 - z) = -k_d(z) for even d
        assert abs(E.compute_I(LAT_I, (d,)).value) < 1e-12


class TestRegulator:
    @pytest.mark.parametrize("kind,tau", [("I", 1j), ("I", 0.3 + 1.1j), ("J", 1j), ("J", 0.3 + 1.1j)])
    def test_matches_branch_tracking(self, kind, tau):
        lat = LatticeParam(tau)
        rule = PanelRule(min_width=1e-12)
        data = E.PathData(lat, kind, rule, 2)
        keep = rule.delta > 1e-6
        t = rule.t[keep]
        gamma = 1.0 if kind == "I" else tau
        z = t * gamma
        expect = log_theta(lat, z)
        if kind == "J":
            expect = expect + 1j * np.pi * z ** 2 / tau
        np.testing.assert_allclose(data.ell[keep], expect, atol=1e-9)

    def test_J_kernels_match_direct(self):
        tau = 0.3 + 1.1j
        lat = LatticeParam(tau)
        rule = PanelRule(min_width=1e-8)
        data = E.PathData(lat, "J", rule, 3)
        z = rule.t * tau
        sig = sigma_coefficients(lat, z, 3)
        sel = (rule.delta > 0.05)
        for n in range(0, 4):
            direct = sum((2j * np.pi * z / tau) ** j / math.factorial(j) * sig[:, n - j + 1] for j in range(n + 2))
            np.testing.assert_allclose(data.letter(n)[sel], (direct * tau)[sel], rtol=1e-10, atol=1e-10)


class TestAgainstGenericEngine:
    @pytest.mark.parametrize("word", [(1, 2), (-1, 3), (1, 0, 1), (2, -1, 1)])
    def test_regular_words(self, word):
        lat = LatticeParam(0.2 + 1.2j)

        def form(d):
            return RegForm(func=lambda z: sigma_coefficients(lat, z, 3)[..., d + 1])

        reg = Regulator(func=lambda z: np.zeros_like(z), dfunc=lambda z: np.zeros_like(z))
        ref = reg_iterated_integral(SampledPath.segment(0, 1), [form(d) for d in word], reg)
        assert abs(E.compute_I(lat, word).value - ref) < 1e-9


class TestShuffle:
    def test_special_values(self):
        assert E.check_shuffle(LAT_I, (-1,), (-1,)) < 1e-14

    def test_zero_and_two(self):
        assert E.check_shuffle(LAT_I, (0,), (2,)) < 1e-8

    def test_empty_left(self):
        assert E.check_shuffle(LAT_I, (), (2, 1)) == 0

    @pytest.mark.parametrize("kind", ["I", "J"])
    def test_suite(self, kind):
        res = E.shuffle_suite(LAT_I, 6, kind)
        assert len(res) > 0
        assert max(r for _, r in res) < 1e-8


class TestReversal:
    def test_depth_one(self):
        assert E.check_reversal(LAT_I, (-1,)) < 1e-15

    def test_minus_ones(self):
        assert E.check_reversal(LAT_I, (-1, -1)) < 1e-14

    def test_zero_two(self):
        assert E.check_reversal(LAT_I, (0, 2)) < 1e-8

    @pytest.mark.parametrize("kind", ["I", "J"])
    def test_suite(self, kind):
        assert max(r for _, r in E.reversal_suite(LAT_I, 6, kind)) < 1e-8


class TestModular:
    @pytest.mark.parametrize("tau", [1j, 2j, 0.5 + 0.9j])
    def test_identity(self, tau):
        assert E.check_modular(LatticeParam(tau), 2, 3) < 1e-7

    def test_depth_one_special(self):
        assert E.check_modular(LatticeParam(1.5j), 1, 0) < 1e-12


class TestOde:
    @pytest.mark.parametrize("d", [-1, 0, 1, 2, 3])
    def test_depth_one(self, d):
        assert E.check_ode(LAT_I, (d,)) < 1e-6

    def test_zero_zero(self):
        assert E.check_ode(LAT_I, (0, 0)) < 1e-5

    def test_J_special(self):
        assert E.check_ode(LAT_I, (-1,), "J") < 1e-8

    @pytest.mark.parametrize("kind", ["I", "J"])
    def test_suite(self, kind):
        assert max(r for _, r in E.ode_suite(LatticeParam(0.1 + 1.05j), 4, kind)) < 1e-5

    def test_sensitive_to_euler_term(self):
        # J values checked against the I-equation (no Euler term) must fail
        d = (2, -1)
        v0, shifted, wpt, wp = E._ode_tables(LAT_I, [d], "J", E.DEFAULT, 1e-3)
        assert E._ode_residual(d, LAT_I, "J", v0, shifted, 1e-3, wpt, wp) < 1e-5
        assert E._ode_residual(d, LAT_I, "I", v0, shifted, 1e-3, wpt, wp) > 1e-2


class TestGenSeries:
    def test_evaluation(self):
        g = E.gen_series(LAT_I, 2, 2)
        assert len(g.coeffs) == 16
        x = (0.3, 0.2)
        direct = sum(c * x[0] ** d[0] * x[1] ** d[1] for d, c in g.coeffs.items())
        assert g(*x) == pytest.approx(direct)
        assert g[(-1, -1)] == pytest.approx(0.5)


class TestLimits:
    def test_depth_cap(self):
        with pytest.raises(E.CapExceededError):
            E.compute_I(LAT_I, (-1,) * 5)

    def test_index_cap(self):
        with pytest.raises(E.CapExceededError):
            E.compute_I(LAT_I, (7,))

    def test_low_imaginary_part(self):
        with pytest.raises(OutOfRangeError):
            E.compute_I(LatticeParam(0.05j), (1,))

    def test_bad_kind(self):
        with pytest.raises(E.EmzvError):
            E.compute_table(LAT_I, [(1,)], "K")
