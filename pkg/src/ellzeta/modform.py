"""Theta function, Eisenstein series, Weierstrass functions and the
Kronecker-Eisenstein kernels for a lattice Z + tau Z.

Everything is evaluated with complex double precision from q-products and
Lambert series; no numerical differentiation is used.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import zeta as _hurwitz_zeta

from .settings import DEFAULT, Settings

TWO_PI_I = 2j * math.pi


class ModformError(ValueError):
    pass


class SingularPointError(ModformError):
    """Evaluation requested at (or numerically on) a lattice point."""


class BranchRefinementError(ModformError):
    """Phase jump along a sampled path too large to unwind reliably."""


class UnsupportedIndexError(ModformError):
    pass


class OutOfRangeError(ModformError):
    pass


@dataclass(frozen=True)
class LatticeParam:
    """Modulus tau in the upper half plane together with its q-truncation."""

    tau: complex
    trunc_q: int = 0
    settings: Settings = field(default=DEFAULT, compare=False, repr=False)

    def __post_init__(self):
        tau = complex(self.tau)
        if not tau.imag > 0:
            raise ModformError(f"tau must lie in the upper half plane, got {tau}")
        object.__setattr__(self, "tau", tau)
        if self.trunc_q <= 0:
            aq = math.exp(-2 * math.pi * tau.imag)
            n = math.ceil(math.log(self.settings.q_tol) / math.log(aq))
            object.__setattr__(self, "trunc_q", int(min(max(n, 1), self.settings.q_cap)))

    @property
    def q(self) -> complex:
        return cmath.exp(TWO_PI_I * self.tau)

    @property
    def nome(self) -> complex:
        return cmath.exp(1j * math.pi * self.tau)

    @property
    def rho(self) -> float:
        """Length of the shortest nonzero lattice vector."""
        return _shortest_vector(self.tau)

    def shifted(self, dtau: complex) -> "LatticeParam":
        return LatticeParam(self.tau + dtau, settings=self.settings)

    def inverted(self) -> "LatticeParam":
        """The lattice of -1/tau."""
        return LatticeParam(-1 / self.tau, settings=self.settings)


def _shortest_vector(tau: complex) -> float:
    best = 1.0
    for n in range(1, 6):
        for m in range(-8, 9):
            best = min(best, abs(m + n * tau))
    return best


# ---------------------------------------------------------------------------
# Laurent series in one variable


@dataclass
class LaurentSeries:
    """Truncated Laurent series sum_i coeffs[i] x^(min_deg + i)."""

    min_deg: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.min_deg < -2:
            raise ValueError("poles of order > 2 are not supported")

    @property
    def trunc(self) -> int:
        return self.min_deg + len(self.coeffs) - 1

    def __getitem__(self, deg: int) -> complex:
        i = deg - self.min_deg
        if i < 0:
            return 0j
        if i >= len(self.coeffs):
            raise IndexError(f"degree {deg} beyond truncation {self.trunc}")
        return complex(self.coeffs[i])

    def _aligned(self, other: "LaurentSeries"):
        lo = min(self.min_deg, other.min_deg)
        hi = min(self.trunc, other.trunc)
        a = np.zeros(hi - lo + 1, dtype=complex)
        b = np.zeros(hi - lo + 1, dtype=complex)
        for src, dst in ((self, a), (other, b)):
            n = hi - src.min_deg + 1
            dst[src.min_deg - lo: src.min_deg - lo + n] = src.coeffs[:n]
        return lo, a, b

    def __add__(self, other):
        if not isinstance(other, LaurentSeries):
            other = LaurentSeries(0, [other])
        lo, a, b = self._aligned(other)
        return LaurentSeries(lo, a + b)

    __radd__ = __add__

    def __neg__(self):
        return LaurentSeries(self.min_deg, -self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, LaurentSeries):
            return LaurentSeries(self.min_deg, self.coeffs * other)
        lo = self.min_deg + other.min_deg
        hi = min(self.trunc + other.min_deg, other.trunc + self.min_deg)
        c = np.convolve(self.coeffs, other.coeffs)[: hi - lo + 1]
        return LaurentSeries(lo, c)

    __rmul__ = __mul__

    def derivative(self) -> "LaurentSeries":
        degs = np.arange(self.min_deg, self.trunc + 1)
        c = self.coeffs * degs
        if self.min_deg == 0:
            return LaurentSeries(0, c[1:] if len(c) > 1 else [0])
        return LaurentSeries(self.min_deg - 1, c)

    def inverse(self) -> "LaurentSeries":
        if self.coeffs[0] == 0:
            raise ZeroDivisionError("leading coefficient vanishes")
        n = len(self.coeffs)
        a = self.coeffs
        b = np.zeros(n, dtype=complex)
        b[0] = 1 / a[0]
        for k in range(1, n):
            b[k] = -np.dot(a[1: k + 1], b[k - 1:: -1][:k]) / a[0]
        return LaurentSeries(-self.min_deg, b)

    def truncate(self, deg: int) -> "LaurentSeries":
        return LaurentSeries(self.min_deg, self.coeffs[: deg - self.min_deg + 1])

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        out = np.zeros_like(x)
        for c in self.coeffs[::-1]:
            out = out * x + c
        return out * x ** self.min_deg


def _series_exp(a: np.ndarray) -> np.ndarray:
    """exp of a power series with zero constant term, batched on axis 0."""
    n = a.shape[-1]
    e = np.zeros_like(a)
    e[..., 0] = 1
    k = np.arange(n)
    for m in range(1, n):
        e[..., m] = np.sum(k[1: m + 1] * a[..., 1: m + 1] * e[..., m - 1:: -1][..., :m], axis=-1) / m
    return e


def _series_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Truncated product of batched power series (last axis = degree)."""
    n = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    for i in range(n):
        out[..., i:] += a[..., i: i + 1] * b[..., : n - i]
    return out


# ---------------------------------------------------------------------------
# theta


def _n_factors(lat: LatticeParam, max_im: float) -> int:
    extra = 2 * math.pi * max_im / (2 * math.pi * lat.tau.imag)
    return int(min(lat.trunc_q + math.ceil(extra) + 1, 4 * lat.settings.q_cap))


def theta(lat: LatticeParam, z):
    """Odd theta function with theta(z+1) = -theta(z) and theta'(0) = 1.

    The argument is first reduced to the centred fundamental parallelogram;
    the product is only evaluated there, where it is well conditioned.
    """
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise OutOfRangeError("non-finite argument")
    if z.size and 2 * math.pi * float(np.max(np.abs(z.imag))) > 700:
        raise OutOfRangeError("imaginary part too large for double precision")
    w, m, n = _reduce(lat, z)
    val = _theta_product(lat, w)
    # theta(w + n tau) = (-1)^n exp(-i pi n^2 tau - 2 pi i n w) theta(w)
    if np.any(n != 0):
        val = val * np.exp(-1j * math.pi * n * n * lat.tau - TWO_PI_I * n * w)
    val = val * np.where((m + n) % 2 == 0, 1.0, -1.0)
    return val if val.ndim else complex(val)


def _theta_product(lat: LatticeParam, w: np.ndarray) -> np.ndarray:
    max_im = float(np.max(np.abs(w.imag))) if w.size else 0.0
    q = lat.q
    e = np.exp(TWO_PI_I * w)
    ei = np.exp(-TWO_PI_I * w)
    val = np.sin(np.pi * w) / np.pi
    qn = 1.0 + 0j
    for _ in range(_n_factors(lat, max_im)):
        qn *= q
        val = val * ((1 - qn * e) * (1 - qn * ei) / (1 - qn) ** 2)
    return val


def theta_series_oracle(lat: LatticeParam, z, terms: int = 50):
    """Same function from the Fourier series of theta_1, normalised by its
    derivative at 0. Kept independent of the product formula on purpose."""
    z = np.asarray(z, dtype=complex)
    qj = lat.nome
    num = np.zeros_like(z)
    den = 0j
    for n in range(terms):
        c = (-1) ** n * qj ** ((n + 0.5) ** 2)
        num = num + c * np.sin((2 * n + 1) * np.pi * z)
        den += c * (2 * n + 1) * np.pi
    val = num / den
    return val if val.ndim else complex(val)


def _reduce(lat: LatticeParam, z: np.ndarray):
    """z = w + m + n tau with w in the centred fundamental parallelogram."""
    tau = lat.tau
    n = np.rint(z.imag / tau.imag)
    m = np.rint(z.real - n * tau.real)
    w = z - m - n * tau
    return w, m, n


@lru_cache(maxsize=256)
def _lambert(tau: complex, jmax: int) -> np.ndarray:
    q = cmath.exp(TWO_PI_I * tau)
    j = np.arange(1, jmax + 1)
    qj = q ** j
    return qj / (1 - qj)


def _jmax(lat: LatticeParam, max_im: float, order: int) -> int:
    gap = 2 * math.pi * (lat.tau.imag - max_im)
    if gap <= 0:
        raise OutOfRangeError("argument outside the convergence strip")
    j = 1
    while order * math.log(j + 1) + order * math.log(2 * math.pi) - gap * j > math.log(1e-20):
        j += 1
        if j > 20000:
            break
    return j


def log_theta_derivatives(lat: LatticeParam, z, order: int) -> np.ndarray:
    """(log theta)^(k)(z) for k = 1..order, shape (order, *z.shape)."""
    z = np.asarray(z, dtype=complex)
    w, _, n = _reduce(lat, z)
    if np.any(np.abs(w) < 1e-300):
        raise SingularPointError("lattice point")
    out = np.zeros((order,) + z.shape, dtype=complex)
    # log sin(pi w): derivatives are polynomials in c = cot(pi w)
    c = 1 / np.tan(np.pi * w)
    poly = np.array([0.0, math.pi])  # pi * c
    for k in range(order):
        out[k] = np.polynomial.polynomial.polyval(c, poly)
        dp = np.polynomial.polynomial.polyder(poly)
        poly = -math.pi * np.polynomial.polynomial.polymul(dp, [1.0, 0.0, 1.0])
    max_im = float(np.max(np.abs(w.imag))) if w.size else 0.0
    jmax = _jmax(lat, max_im, order)
    lam = _lambert(lat.tau, jmax)
    j = np.arange(1, jmax + 1)
    ep = np.exp(TWO_PI_I * np.multiply.outer(w, j))
    em = np.exp(-TWO_PI_I * np.multiply.outer(w, j))
    for k in range(1, order + 1):
        coef = lam * j ** (k - 1.0)
        out[k - 1] += -(TWO_PI_I ** k) * ((ep + (-1) ** k * em) @ coef)
    out[0] += -TWO_PI_I * n
    return out


def wp(lat: LatticeParam, z):
    """Weierstrass p-function."""
    d2 = log_theta_derivatives(lat, z, 2)[1]
    val = -d2 - eisenstein(lat, 2)
    return val if np.ndim(val) else complex(val)


def theta_log_derivative(lat: LatticeParam, z):
    val = log_theta_derivatives(lat, z, 1)[0]
    return val if np.ndim(val) else complex(val)


# ---------------------------------------------------------------------------
# Eisenstein series


@lru_cache(maxsize=1024)
def _eisenstein(tau: complex, k: int) -> complex:
    if k == 0:
        return -1.0 + 0j
    y = tau.imag
    q = cmath.exp(TWO_PI_I * tau)
    log_aq = -2 * math.pi * y
    # Lambert sum  sum_d d^(k-1) q^d / (1 - q^d)
    peak = max(1, int((k - 1) / (2 * math.pi * y)))
    log_peak = (k - 1) * math.log(peak) + log_aq * peak
    total = 0j
    d = 1
    qd = 1 + 0j
    while True:
        qd *= q
        term = d ** (k - 1) * qd / (1 - qd)
        total += term
        if d > peak and (k - 1) * math.log(d) + log_aq * d < log_peak + math.log(1e-20):
            break
        d += 1
        if d > 100000:
            raise OutOfRangeError("Eisenstein series failed to converge")
    pref = 2 * TWO_PI_I ** k / math.factorial(k - 1)
    return 2 * float(_hurwitz_zeta(k, 1)) + pref * total


def eisenstein(lat: LatticeParam, k: int) -> complex:
    """G_k(tau) from its q-expansion; G_0 = -1, G_2 in Eisenstein summation."""
    if k < 0 or k % 2:
        raise UnsupportedIndexError(f"G_k needs even k >= 0, got {k}")
    return _eisenstein(lat.tau, int(k))


def eisenstein_q_coefficient(k: int, n: int) -> complex:
    """Coefficient of q^n in G_k; g_0(0) = -1, g_0(n>0) = 0."""
    if k % 2 or k < 0:
        raise UnsupportedIndexError(f"G_k needs even k >= 0, got {k}")
    if k == 0:
        return -1.0 + 0j if n == 0 else 0j
    if n == 0:
        return 2 * float(_hurwitz_zeta(k, 1)) + 0j
    sigma = sum(d ** (k - 1) for d in range(1, n + 1) if n % d == 0)
    return 2 * TWO_PI_I ** k / math.factorial(k - 1) * sigma


def wp_tilde_series(lat: LatticeParam, order: int) -> LaurentSeries:
    """p(x) + G_2 = sum_{n>=-1} (2n+1) G_{2n+2} x^(2n) up to x^order."""
    if order < -2:
        raise ValueError("order must be >= -2")
    c = np.zeros(order + 3, dtype=complex)
    for deg in range(-2, order + 1, 2):
        n = deg // 2
        c[deg + 2] = (2 * n + 1) * eisenstein(lat, 2 * n + 2)
    return LaurentSeries(-2, c)


def wp_series(lat: LatticeParam, order: int) -> LaurentSeries:
    s = wp_tilde_series(lat, order)
    s.coeffs[2] -= eisenstein(lat, 2)
    return s


def theta_log_derivative_series(lat: LatticeParam, order: int) -> LaurentSeries:
    """Laurent data of theta'/theta: 1/x - G_2 x - G_4 x^3 - ..."""
    c = np.zeros(order + 2, dtype=complex)
    c[0] = 1
    for deg in range(1, order + 1, 2):
        c[deg + 1] = -eisenstein(lat, deg + 1)
    return LaurentSeries(-1, c)


# ---------------------------------------------------------------------------
# Kronecker-Eisenstein kernels


@lru_cache(maxsize=256)
def _x_over_theta(tau: complex, n: int) -> np.ndarray:
    """Maclaurin coefficients of x / theta(x) from the product formula."""
    lat = LatticeParam(tau)
    log_c = np.zeros(n + 1, dtype=complex)
    # log(sin(pi x)/(pi x)) = -sum zeta(2k) x^(2k) / k
    for m in range(2, n + 1, 2):
        log_c[m] -= float(_hurwitz_zeta(m, 1)) / (m // 2)
    if n >= 2:
        jmax = _jmax(lat, 0.0, n)
        lam = _lambert(tau, jmax)
        j = np.arange(1, jmax + 1)
        for m in range(2, n + 1, 2):
            deriv = -2 * TWO_PI_I ** m * np.sum(lam * j ** (m - 1.0))
            log_c[m] += deriv / math.factorial(m)
    return _series_exp(-log_c)


@lru_cache(maxsize=256)
def _taylor_table(tau: complex, order: int, terms: int) -> np.ndarray:
    """T[n+1, b] with k_n(w) = [n == 0]/w + sum_b T[n+1, b] w^b near 0.

    Uses sigma_x(w) = (1/x + 1/w) exp(-sum_k G_2k/(2k) ((w+x)^2k - w^2k - x^2k)).
    """
    lat = LatticeParam(tau)
    nx, nw = order + 2, terms + 2
    s = np.zeros((nx, nw), dtype=complex)
    kmax = (nx + nw) // 2 + 1
    for k in range(1, kmax + 1):
        g = eisenstein(lat, 2 * k) / (2 * k)
        for a in range(1, 2 * k):
            b = 2 * k - a
            if a < nx and b < nw:
                s[a, b] -= g * math.comb(2 * k, a)
    # E = exp(s) in x, coefficients are polynomials in w
    e = np.zeros_like(s)
    e[0, 0] = 1
    for a in range(1, nx):
        acc = np.zeros(nw, dtype=complex)
        for j in range(1, a + 1):
            acc += j * np.convolve(s[j], e[a - j])[:nw]
        e[a] = acc / a
    t = np.zeros((order + 2, terms), dtype=complex)
    t[0, 0] = 1
    for n in range(0, order + 1):
        t[n + 1] = e[n + 1, :terms] + e[n, 1: terms + 1]
    return t


def _sigma_product(lat: LatticeParam, w: np.ndarray, order: int) -> np.ndarray:
    n = order + 2
    m = np.arange(n)
    c = 1 / np.tan(np.pi * w)
    base = np.pi ** m / np.array([math.factorial(i) for i in m], dtype=float)
    sign = np.array([(-1) ** (i // 2) for i in m], dtype=float)
    s = base * sign
    s = np.broadcast_to(s, w.shape + (n,)).astype(complex).copy()
    s[..., 1::2] *= c[..., None]
    # exp of the product-part Taylor series around w
    max_im = float(np.max(np.abs(w.imag))) if w.size else 0.0
    jmax = _jmax(lat, max_im, n)
    lam = _lambert(lat.tau, jmax)
    j = np.arange(1, jmax + 1)
    ep = np.exp(TWO_PI_I * np.multiply.outer(w, j))
    em = np.exp(-TWO_PI_I * np.multiply.outer(w, j))
    qser = np.zeros(w.shape + (n,), dtype=complex)
    for k in range(1, n):
        coef = lam * j ** (k - 1.0)
        qser[..., k] = -(TWO_PI_I ** k) * ((ep + (-1) ** k * em) @ coef) / math.factorial(k)
    a = _series_mul(s, _series_exp(qser))
    return _series_mul(a, _x_over_theta(lat.tau, n - 1))


def sigma_coefficients(lat: LatticeParam, z, order: int) -> np.ndarray:
    """Coefficients of sigma_x(z) in x, columns x^-1, x^0, ..., x^order.

    Column n+1 holds k_n(z). Vectorised over z.
    """
    z = np.asarray(z, dtype=complex)
    flat = z.reshape(-1)
    w, _, nshift = _reduce(lat, flat)
    aw = np.abs(w)
    if np.any(aw < 1e-300):
        raise SingularPointError("sigma kernels are singular on the lattice")
    st = lat.settings
    out = np.empty(flat.shape + (order + 2,), dtype=complex)
    near = aw < st.taylor_radius * lat.rho
    if np.any(near):
        t = _taylor_table(lat.tau, order, st.taylor_terms)
        wn = w[near]
        vals = np.zeros(wn.shape + (order + 2,), dtype=complex)
        for b in range(t.shape[1] - 1, -1, -1):
            vals = vals * wn[:, None] + t[:, b]
        vals[:, 1] += 1 / wn
        out[near] = vals
    far = ~near
    if np.any(far):
        out[far] = _sigma_product(lat, w[far], order)
    if np.any(nshift != 0):
        # sigma_x(w + n tau) = exp(-2 pi i n x) sigma_x(w)
        k = np.arange(order + 2)
        fact = np.array([math.factorial(i) for i in k], dtype=float)
        ex = (-TWO_PI_I * nshift[:, None]) ** k / fact
        out = _shift_mul(out, ex)
    return out.reshape(z.shape + (order + 2,))


def _shift_mul(sig: np.ndarray, ex: np.ndarray) -> np.ndarray:
    # sig starts at x^-1, ex at x^0: product keeps the x^-1 start
    return _series_mul(sig, ex)


def sigma_kernels(lat: LatticeParam, z: complex, order: int) -> LaurentSeries:
    """sigma_x(z) = 1/x + sum_{n<=order} k_n(z) x^n as a Laurent series in x."""
    c = sigma_coefficients(lat, np.array([z]), order)[0]
    return LaurentSeries(-1, c)


@dataclass(frozen=True)
class KernelFamily:
    """z -> (k_-1, k_0, ..., k_order) for a fixed lattice."""

    lattice: LatticeParam
    order: int

    def __call__(self, z) -> np.ndarray:
        return sigma_coefficients(self.lattice, z, self.order)


# ---------------------------------------------------------------------------
# branch of log(-2 pi i theta) along a sampled path


def _log_theta_principal(lat: LatticeParam, z: np.ndarray) -> np.ndarray:
    """log|theta| + i arg(theta) for each sample, arg only defined mod 2 pi."""
    th = theta(lat, z)
    return np.log(np.abs(th)) + 1j * np.angle(th)


def unwind_log(lat: LatticeParam, points: np.ndarray, start: complex) -> np.ndarray:
    """Continuous branch of log(-2 pi i theta) along ordered samples.

    ``start`` is the value at points[0] (the pinned branch); phases are
    unwound step by step and coarse steps are refined.
    """
    st = lat.settings
    pts = np.asarray(points, dtype=complex)
    if np.any(np.abs(_reduce(lat, pts)[0]) < 1e-300):
        raise SingularPointError("path meets a lattice point")
    vals = _log_theta_principal(lat, pts) + cmath.log(-TWO_PI_I)
    ph = vals.imag
    jumps = np.angle(np.exp(1j * np.diff(ph)))
    bad = np.nonzero(np.abs(jumps) >= st.branch_refine_jump)[0]
    for i in bad:
        # refine the offending step and accumulate the phase over substeps
        sub = np.linspace(pts[i], pts[i + 1], 65)
        sph = np.angle(theta(lat, sub))
        d = np.angle(np.exp(1j * np.diff(sph)))
        if np.max(np.abs(d)) >= st.branch_max_jump:
            raise BranchRefinementError(f"phase jump too large between samples {i} and {i + 1}")
        jumps[i] = float(np.sum(d))
    phase = start.imag + np.concatenate([[0.0], np.cumsum(jumps)])
    return vals.real + 1j * phase


def log_theta(lat: LatticeParam, path, z=None):
    """Branch of log(-2 pi i theta(z)) continued along ``path`` from 0+.

    ``path`` is an ordered array of samples starting close to 0; the branch
    is pinned there by log(-2 pi i theta) = log(-2 pi i z) + o(1) with the
    principal logarithm. Returns the values on all samples, or at ``z``
    when given (``z`` must be one of the samples).
    """
    pts = np.asarray(path, dtype=complex)
    if pts.ndim != 1 or len(pts) < 2:
        raise ValueError("path needs at least two samples")
    z0 = pts[0]
    if abs(z0) > 1e-3 * lat.rho:
        raise ModformError("path must start close to 0")
    length = float(np.sum(np.abs(np.diff(pts))))
    need = int(math.ceil(lat.settings.branch_samples_per_unit * length))
    if len(pts) < need:
        # densify for the unwinding, then read back at the requested samples
        dense, idx = _densify(pts, need)
        start = cmath.log(-TWO_PI_I * z0) + cmath.log(theta(lat, z0) / z0)
        vals = unwind_log(lat, dense, start)[idx]
    else:
        start = cmath.log(-TWO_PI_I * z0) + cmath.log(theta(lat, z0) / z0)
        vals = unwind_log(lat, pts, start)
    if z is None:
        return vals
    hit = np.nonzero(np.abs(pts - z) <= 1e-15 * max(1.0, abs(z)))[0]
    if len(hit) == 0:
        raise ValueError("z is not a sample of the path")
    return complex(vals[hit[0]])


def _densify(pts: np.ndarray, need: int):
    seg = np.abs(np.diff(pts))
    total = seg.sum()
    out = [pts[:1]]
    idx = [0]
    for i, s in enumerate(seg):
        k = max(1, int(math.ceil(need * s / total)))
        out.append(np.linspace(pts[i], pts[i + 1], k + 1)[1:])
        idx.append(idx[-1] + k)
    return np.concatenate(out), np.array(idx)
