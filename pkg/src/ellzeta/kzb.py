"""Generating series of elliptic MZVs, the KZ associator, and the expansion at i infinity.

A(tau) and B(tau) live in the completed free algebra on x, y. They are
assembled from the I and J values through the Lazard words

    e^{i pi t} A = sum_n (-1)^n sum_d I_{d_1..d_n} b_{d_n} ... b_{d_1},

with b_d = ad(x)^(d+1)(y) and t = -[x, y], and similarly for B with J and
the automorphism exp((2 pi i / tau) e_+).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import zeta

from . import emzv
from .freelie import (
    NcSeries,
    TDerivation,
    delta,
    e_plus,
    coproduct_residual,
    lazard_expand,
    lazard_extract,
    series_x,
    series_y,
    t_element,
)
from .modform import TWO_PI_I, LatticeParam, wp_tilde_series
from .settings import DEFAULT, Settings


class KzbError(ValueError):
    pass


class DependencyError(KzbError):
    """A coefficient needed for assembly is missing."""


class TruncationError(KzbError):
    pass


MAX_TRUNC = 8


def _dim(n: int) -> int:
    return 2 ** (n + 1) - 1


def _off(d: int) -> int:
    return 2 ** d - 1


# ---------------------------------------------------------------------------
# KZ associator


def _letter_matrix(letter: int, trunc: int, side: str) -> np.ndarray:
    """Matrix of left or right multiplication by a letter on the truncated algebra."""
    m = np.zeros((_dim(trunc), _dim(trunc)))
    for d in range(trunc):
        i = np.arange(2 ** d)
        j = (letter << d) + i if side == "left" else 2 * i + letter
        m[_off(d + 1) + j, _off(d) + i] = 1
    return m


def _frobenius_at_half(trunc: int, first: int, tol: float, max_terms: int) -> np.ndarray:
    """P(1/2) where H = P(z) z^a solves H' = (a/z + b/(z-1)) H, a = letter ``first``.

    The coefficients satisfy (k - ad a) P_k = -b (P_0 + ... + P_{k-1}).
    """
    second = 1 - first
    ad_a = _letter_matrix(first, trunc, "left") - _letter_matrix(first, trunc, "right")
    left_b = _letter_matrix(second, trunc, "left")
    p = np.zeros(_dim(trunc), dtype=complex)
    p[0] = 1
    cum = p.copy()
    total = p.copy()
    for k in range(1, max_terms + 1):
        rhs = -(left_b @ cum)
        pk = np.zeros_like(rhs)
        term = rhs / k
        while np.any(term != 0):
            pk += term
            term = (ad_a @ term) / k
        cum += pk
        contrib = pk * 0.5 ** k
        total += contrib
        if k > 8 and np.max(np.abs(contrib)) < tol:
            return total
    raise KzbError("Frobenius series did not converge")


def kz_associator(trunc: int = MAX_TRUNC, tol: float = 1e-18, max_terms: int = 400) -> NcSeries:
    """Phi(a, b) = H_1^{-1} H_0 with letters a = x, b = y.

    H_0 ~ z^a at 0 and H_1 ~ (1-z)^b at 1 are both evaluated at z = 1/2 from
    their convergent Frobenius expansions.
    """
    if trunc > MAX_TRUNC:
        raise TruncationError(f"truncation {trunc} exceeds {MAX_TRUNC}")
    a, b = series_x(trunc), series_y(trunc)
    p = NcSeries(trunc, _frobenius_at_half(trunc, 0, tol, max_terms))
    q = NcSeries(trunc, _frobenius_at_half(trunc, 1, tol, max_terms))
    log_half = math.log(0.5)
    h0 = p * (a * log_half).exp()
    h1 = q * (b * log_half).exp()
    return h1.inverse() * h0


# ---------------------------------------------------------------------------
# assembly


@dataclass
class KzbSeries:
    """A(tau) or B(tau) at truncation ``trunc``."""

    series: NcSeries
    tau: LatticeParam
    trunc: int
    kind: str

    def group_like_residual(self) -> float:
        return coproduct_residual(self.series)


def _reversed_word(e: Tuple[int, ...]) -> Tuple[int, ...]:
    return tuple(reversed(e))


def series_from_values(values: Dict[Tuple[int, ...], complex], trunc: int) -> NcSeries:
    """sum_n (-1)^n sum_d V_d b_{d_n} ... b_{d_1} over all words of weight <= trunc."""
    s = NcSeries.one(trunc)
    for d in emzv.words_up_to_weight(trunc):
        if d not in values:
            raise DependencyError(f"missing coefficient for {emzv.IndexWord(d)}")
        v = values[d]
        if v != 0:
            s = s + lazard_expand(_reversed_word(d), trunc, exact=False) * ((-1) ** len(d) * v)
    return s


def values_from_series(s: NcSeries, tol: Optional[float] = None) -> Dict[Tuple[int, ...], complex]:
    """Inverse of series_from_values (dictionary of coefficients by word)."""
    coeffs = lazard_extract(s, tol)
    return {_reversed_word(e): (-1) ** len(e) * c for e, c in coeffs.items() if e}


def _values(lat: LatticeParam, trunc: int, kind: str, settings: Settings) -> Dict[Tuple[int, ...], complex]:
    words = emzv.words_up_to_weight(trunc)
    table = emzv.compute_table(lat, words, kind, settings, with_error=False, enforce_caps=False)
    return {d: v.value for d, v in table.items()}


def _check_trunc(trunc: int, cap: int = MAX_TRUNC):
    if not 1 <= trunc <= cap:
        raise TruncationError(f"truncation {trunc} outside 1..{cap}")


def _exp_t(trunc: int, c: complex) -> NcSeries:
    return (t_element(trunc) * c).exp()


def e_plus_exp(s: NcSeries, c: complex) -> NcSeries:
    """exp(c e_+)(s): the substitution y -> y + c x."""
    n = s.trunc
    return s.substitute([series_x(n), series_y(n) + series_x(n) * c])


def a_from_values(values, trunc: int) -> NcSeries:
    return _exp_t(trunc, -1j * math.pi) * series_from_values(values, trunc)


def b_from_values(values, tau: complex, trunc: int) -> NcSeries:
    inner = e_plus_exp(series_from_values(values, trunc), -TWO_PI_I / tau)
    return _exp_t(trunc, 1j * math.pi) * inner


def assemble_A(lat: LatticeParam, trunc: int = 5, settings: Settings = DEFAULT) -> KzbSeries:
    _check_trunc(trunc)
    return KzbSeries(a_from_values(_values(lat, trunc, "I", settings), trunc), lat, trunc, "A")


def assemble_B(lat: LatticeParam, trunc: int = 5, settings: Settings = DEFAULT) -> KzbSeries:
    _check_trunc(trunc)
    vals = _values(lat, trunc, "J", settings)
    return KzbSeries(b_from_values(vals, lat.tau, trunc), lat, trunc, "B")


# ---------------------------------------------------------------------------
# relations


def sign_flip(s: NcSeries) -> NcSeries:
    """The automorphism x -> -x, y -> -y."""
    n = s.trunc
    return s.substitute([-series_x(n), -series_y(n)])


def check_group_relations(A: KzbSeries, B: KzbSeries) -> Dict[str, float]:
    """Residuals of the A- and B-reflection identities and of (A, B) = e^{-2 pi i t}."""
    n = min(A.trunc, B.trunc)
    if n < 4:
        raise TruncationError("group relations need truncation >= 4")
    a, b = A.series.truncated(n), B.series.truncated(n)
    one = NcSeries.one(n)
    ep, em = _exp_t(n, 1j * math.pi), _exp_t(n, -1j * math.pi)
    return {
        "A:A": (ep * a * ep * sign_flip(a) - one).max_abs(),
        "B:B": (em * b * em * sign_flip(b) - one).max_abs(),
        "comm:A:B": (a * b * a.inverse() * b.inverse() - _exp_t(n, -TWO_PI_I)).max_abs(),
    }


def eisenstein_derivation(lat: LatticeParam, trunc: int) -> TDerivation:
    """sum_{n >= -1} (2n+1) G_{2n+2} delta_{2n}, with G_0 = -1."""
    wpt = wp_tilde_series(lat, trunc)
    out = delta(-2, trunc) * 1.0
    out = TDerivation(out.u.to_complex(), out.v.to_complex())
    for k in range(0, trunc, 2):
        d = delta(k, trunc)
        out = out + TDerivation(d.u.to_complex(), d.v.to_complex()) * complex(wpt[k])
    return out


def _stencil(f, lat: LatticeParam, h: float):
    vals = [f(lat.shifted(s * h)) for s in (1, -1, 2, -2)]
    return (8 * (vals[0] - vals[1]) - (vals[2] - vals[3])) * (1 / (12 * h))


@dataclass
class OdeReport:
    residual_A: float
    residual_B: float
    residual_J: float
    layer_gap_I: float
    layer_gap_J: float
    defects: Dict[str, NcSeries] = field(repr=False, default_factory=dict)


def check_kzb_ode(lat: LatticeParam, trunc: int = 5, dtau: Optional[float] = None,
                  settings: Settings = DEFAULT) -> OdeReport:
    """Residuals of 2 pi i dA/dtau = -D(A) and the same for B.

    The derivative is a five-point central difference of assembled series.
    The defect of the coefficient series is compared word by word with the
    signed defects of the scalar system in emzv (``layer_gap_*``).
    """
    _check_trunc(trunc, 6)
    h = settings.fd_step if dtau is None else dtau
    der = eisenstein_derivation(lat, trunc)
    tau = lat.tau

    def s_I(l):
        return series_from_values(_values(l, trunc, "I", settings), trunc)

    def s_J(l):
        return series_from_values(_values(l, trunc, "J", settings), trunc)

    sa, sj = s_I(lat), s_J(lat)
    dsa, dsj = _stencil(s_I, lat, h), _stencil(s_J, lat, h)
    em, ep = _exp_t(trunc, -1j * math.pi), _exp_t(trunc, 1j * math.pi)
    a = em * sa
    da = em * dsa
    # B = e^{i pi t} exp(-(2 pi i / tau) e_+)(S_J); differentiate the tau in the automorphism too
    c = -TWO_PI_I / tau
    b = ep * e_plus_exp(sj, c)
    ep_der = e_plus(trunc, exact=False)
    db = ep * (e_plus_exp(dsj, c) + e_plus_exp(ep_der.apply(sj), c) * (TWO_PI_I / tau ** 2))
    res_a = da * TWO_PI_I + der.apply(a)
    res_b = db * TWO_PI_I + der.apply(b)
    # the J coefficient series carries the extra Euler term (2 pi i / tau) h
    hder = TDerivation(series_x(trunc), -series_y(trunc))
    res_j = dsj * TWO_PI_I + der.apply(sj) + hder.apply(sj) * (TWO_PI_I / tau)
    res_s = dsa * TWO_PI_I + der.apply(sa)

    words = emzv.words_up_to_weight(trunc)
    gaps = []
    for kind, res in (("I", res_s), ("J", res_j)):
        scalar = emzv.ode_defects(lat, words, kind, h, settings)
        layered = values_from_series(res, tol=np.inf)
        gaps.append(max(abs(layered.get(d, 0) - scalar[d]) for d in words))
    return OdeReport(res_a.max_abs(), res_b.max_abs(), res_j.max_abs(), gaps[0], gaps[1],
                     {"A": res_a, "B": res_b, "I": res_s, "J": res_j})


def _ad_power_t(trunc: int, c: complex) -> NcSeries:
    """(-1/tau)^{-t} style element exp(-c t) for c = log(-1/tau)."""
    return _exp_t(trunc, -c)


def check_modular_AB(lat: LatticeParam, trunc: int = 4, settings: Settings = DEFAULT) -> Dict[str, float]:
    """Residuals of the two modular identities relating A, B at tau and -1/tau.

    A(-1/tau) = Ad((-1/tau)^{-t}) alpha_tau(B(tau)^{-1}) and
    B(-1/tau) = Ad((-1/tau)^{-t}) alpha_tau(B A B^{-1}(tau)), with
    alpha_tau: x -> -tau x, y -> -2 pi i x - y / tau.
    """
    _check_trunc(trunc, 6)
    tau = lat.tau
    inv = lat.inverted()
    a, b = assemble_A(lat, trunc, settings).series, assemble_B(lat, trunc, settings).series
    a_inv, b_inv = assemble_A(inv, trunc, settings).series, assemble_B(inv, trunc, settings).series
    x, y = series_x(trunc), series_y(trunc)
    alpha = [x * (-tau), x * (-TWO_PI_I) - y * (1 / tau)]
    log_m = cmath.log(-1 / tau)  # principal branch: imaginary part in (0, pi) for tau in H
    g = _ad_power_t(trunc, log_m)
    gi = g.inverse()

    def ad(s):
        return g * s * gi

    r1 = (a_inv - ad(b.inverse().substitute(alpha))).max_abs()
    r2 = (b_inv - ad((b * a * b.inverse()).substitute(alpha))).max_abs()
    return {"A": r1, "B": r2}


# ---------------------------------------------------------------------------
# expansion at i infinity


def bernoulli_over_factorial(n: int) -> List[Fraction]:
    """B_k / k! for k <= n, by inverting (e^u - 1)/u = sum u^k/(k+1)!."""
    c = [Fraction(1)]
    for k in range(1, n + 1):
        c.append(-sum(c[k - j] / math.factorial(j + 1) for j in range(1, k + 1)))
    return c


def y_tilde(trunc: int) -> NcSeries:
    """-(ad x / (e^{2 pi i ad x} - 1))(y) as a truncated Lie series."""
    bk = bernoulli_over_factorial(trunc)
    x = series_x(trunc)
    term = series_y(trunc)
    out = NcSeries.zero(trunc)
    for k in range(trunc):
        out = out - term * (float(bk[k]) * TWO_PI_I ** (k - 1))
        term = x.bracket(term)
    return out


def g_coefficient(weight: int, m: int) -> complex:
    """q^m coefficient of G_weight; G_0 = -1."""
    if weight == 0:
        return -1.0 if m == 0 else 0.0
    if m == 0:
        return 2 * zeta(weight)
    sigma = sum(dv ** (weight - 1) for dv in range(1, m + 1) if m % dv == 0)
    return 2 * TWO_PI_I ** weight / math.factorial(weight - 1) * sigma


@dataclass
class AsymptoticEngine:
    trunc: int
    m_max: int
    D: List[np.ndarray]
    h: List[np.ndarray]
    phi: NcSeries
    y_tilde: NcSeries
    A_inf: NcSeries

    def A_series(self, tau: complex, n_max: Optional[int] = None) -> NcSeries:
        """sum_{m <= n_max} q^m h_m(A_inf)."""
        n_max = self.m_max if n_max is None else n_max
        q = cmath.exp(TWO_PI_I * tau)
        vec = sum(q ** m * (self.h[m] @ self.A_inf.data) for m in range(n_max + 1))
        return NcSeries(self.trunc, vec)

    def A_layer(self, m: int) -> NcSeries:
        return NcSeries(self.trunc, self.h[m] @ self.A_inf.data)

    def B_leading(self, tau: complex) -> NcSeries:
        """e^{i pi t} Phi(-y~ - t, t) e^{2 pi i x} e^{2 pi i y~ tau} Phi(y~, t)^{-1}."""
        n = self.trunc
        t = t_element(n)
        yt = self.y_tilde
        phi_minus = self.phi.substitute([-yt - t, t])
        phi_plus = self.phi.substitute([yt, t])
        return (_exp_t(n, 1j * math.pi) * phi_minus * (series_x(n) * TWO_PI_I).exp()
                * (yt * (TWO_PI_I * tau)).exp() * phi_plus.inverse())

    def coefficient_series_I(self, m: int) -> NcSeries:
        return _exp_t(self.trunc, 1j * math.pi) * self.A_layer(m)

    def coefficient_series_J0(self, tau: complex) -> NcSeries:
        inner = _exp_t(self.trunc, -1j * math.pi) * self.B_leading(tau)
        return e_plus_exp(inner, TWO_PI_I / tau)


def _derivation_matrix(weights: Dict[int, complex], trunc: int) -> np.ndarray:
    m = np.zeros((_dim(trunc), _dim(trunc)), dtype=complex)
    for k, c in weights.items():
        if c != 0 and k + 1 <= trunc:
            m += c * delta(k, trunc).matrix()
    return m


def asymptotic_engine(trunc: int = 6, m_max: int = 2) -> AsymptoticEngine:
    """D_0, D_m, h_m, Phi, y~ and A_inf at a truncation."""
    if not 1 <= trunc <= 6:
        raise TruncationError(f"asymptotic engine supports truncation <= 6, got {trunc}")
    if not 0 <= m_max <= 4:
        raise TruncationError(f"m_max must lie in 0..4, got {m_max}")
    pref = -1 / TWO_PI_I
    ks = list(range(-2, trunc, 2))
    D = [pref * _derivation_matrix({k: (k + 1) * g_coefficient(k + 2, m) for k in ks}, trunc)
         for m in range(m_max + 1)]
    ident = np.eye(_dim(trunc), dtype=complex)
    h = [ident]
    for m in range(1, m_max + 1):
        x = sum(D[j] @ h[m - j] for j in range(1, m + 1))
        # (2 pi i m - ad D_0)^{-1}: finite geometric series, ad D_0 raises the y-degree
        hm = np.zeros_like(ident)
        term = x / (TWO_PI_I * m)
        for _ in range(trunc + 2):
            hm += term
            term = (D[0] @ term - term @ D[0]) / (TWO_PI_I * m)
        if np.max(np.abs(term)) > 1e-12 * max(1.0, np.max(np.abs(hm))):
            raise KzbError("ad D_0 series did not terminate")
        h.append(hm)
    phi = kz_associator(trunc)
    yt = y_tilde(trunc)
    phi_y = phi.substitute([yt, t_element(trunc)])
    a_inf = phi_y * (yt * TWO_PI_I).exp() * phi_y.inverse()
    return AsymptoticEngine(trunc, m_max, D, h, phi, yt, a_inf)


def asymptotic_coefficients(engine: AsymptoticEngine, word, n_max: int) -> List[complex]:
    """Predicted I_{d,n}, n = 0..n_max, in I_d(tau) ~ sum_n I_{d,n} q^n."""
    d = emzv.IndexWord.parse(word).d if isinstance(word, str) else tuple(word)
    if emzv.IndexWord(d).weight > engine.trunc:
        raise TruncationError(f"weight of {d} exceeds engine truncation {engine.trunc}")
    if n_max > engine.m_max:
        raise TruncationError(f"n_max {n_max} exceeds engine m_max {engine.m_max}")
    out = []
    for m in range(n_max + 1):
        vals = values_from_series(engine.coefficient_series_I(m), tol=np.inf)
        out.append(vals.get(d, 0j))
    return out


def asymptotic_J0(engine: AsymptoticEngine, word, tau: complex) -> complex:
    """n = 0 layer of J_d(tau), a polynomial in tau and 1/tau."""
    d = tuple(word)
    vals = values_from_series(engine.coefficient_series_J0(tau), tol=np.inf)
    return vals.get(d, 0j)


@dataclass
class DecayResult:
    """|I_d(iT) - I_{d,0}| at two heights and the observed decay relative to e^{-2 pi dT}."""

    word: Tuple[int, ...]
    diffs: Tuple[float, float]
    q_coeffs: float
    ratio: Optional[float]
    passed: bool


def decay_suite(max_weight: int = 4, heights: Tuple[float, float] = (3.0, 4.0), rel_tol: float = 0.2,
                floor: float = 1e-12, engine: Optional[AsymptoticEngine] = None,
                settings: Settings = DEFAULT) -> List[DecayResult]:
    """Compare I_d(iT) with its predicted constant term at two heights.

    Where the difference at the lower height exceeds ``floor`` the observed
    decay factor must be within ``rel_tol`` of e^{-2 pi (T2 - T1)}; otherwise
    the word must be constant in tau (both differences and the predicted
    q-coefficients vanish).
    """
    engine = engine or asymptotic_engine(max(max_weight, 1), 2)
    words = emzv.words_up_to_weight(max_weight)
    vals = [_values_for(LatticeParam(1j * T), words, settings) for T in heights]
    expected = math.exp(-2 * math.pi * (heights[1] - heights[0]))
    out = []
    for d in words:
        c = asymptotic_coefficients(engine, d, 2)
        diffs = (float(abs(vals[0][d] - c[0])), float(abs(vals[1][d] - c[0])))
        qc = float(max(abs(v) for v in c[1:]))
        if diffs[0] > floor:
            ratio = diffs[1] / diffs[0] / expected
            passed = abs(ratio - 1) < rel_tol
        else:
            ratio = None
            passed = diffs[1] <= floor and qc < 1e-8
        out.append(DecayResult(d, diffs, qc, ratio, passed))
    return out


def _values_for(lat: LatticeParam, words, settings: Settings) -> Dict[Tuple[int, ...], complex]:
    table = emzv.compute_table(lat, words, "I", settings, with_error=False, enforce_caps=False)
    return {d: v.value for d, v in table.items()}
