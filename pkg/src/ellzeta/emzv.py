"""Elliptic multizeta values I_d(tau), J_d(tau) and their identity checks.

Values are computed from the coefficient formula: leading and trailing runs
of zero indices become powers of the regulator l = log(-2 pi i theta) at the
end points, the remaining word k_{d_a} dz ... k_{d_b} dz is integrated by a
Chen march on a panel rule graded towards both ends.

Along the I path z = s (s in [0, 1]); along the J path z = s tau with the
kernels of exp(2 pi i x z / tau) sigma_x(z). Near either end the integrands
are evaluated in the exact local offset so panels can shrink to 1e-28.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .itint import PanelRule, QuadratureError
from .modform import (
    TWO_PI_I,
    LatticeParam,
    OutOfRangeError,
    _series_mul,
    sigma_coefficients,
    wp_series,
    wp_tilde_series,
)
from .settings import DEFAULT, Settings

KINDS = ("I", "J")


class EmzvError(ValueError):
    pass


class CapExceededError(EmzvError):
    pass


# ---------------------------------------------------------------------------
# index words


@dataclass(frozen=True)
class IndexWord:
    """A tuple of indices d_i >= -1; the empty word has value 1."""

    d: Tuple[int, ...] = ()

    def __post_init__(self):
        d = tuple(int(v) for v in self.d)
        if any(v < -1 for v in d):
            raise EmzvError(f"indices must be >= -1, got {d}")
        object.__setattr__(self, "d", d)

    @classmethod
    def parse(cls, text: str) -> "IndexWord":
        body = text.strip().strip("()[]")
        if not body:
            return cls(())
        return cls(tuple(int(p) for p in body.replace(";", ",").split(",") if p.strip()))

    @property
    def depth(self) -> int:
        return len(self.d)

    @property
    def weight(self) -> int:
        return sum(v + 2 for v in self.d)

    @property
    def is_zero(self) -> bool:
        return bool(self.d) and all(v == 0 for v in self.d)

    def __len__(self):
        return len(self.d)

    def __iter__(self):
        return iter(self.d)

    def __str__(self):
        return "(" + ",".join(str(v) for v in self.d) + ")"


def _as_word(w) -> IndexWord:
    return w if isinstance(w, IndexWord) else IndexWord(tuple(w))


def words_of_weight(weight: int) -> List[Tuple[int, ...]]:
    """All words of exactly the given weight (compositions with parts >= 1)."""
    if weight == 0:
        return [()]
    out = []
    for first in range(1, weight + 1):
        out.extend((first - 2,) + rest for rest in words_of_weight(weight - first))
    return out


def words_up_to_weight(max_weight: int, min_weight: int = 1) -> List[Tuple[int, ...]]:
    return [w for k in range(min_weight, max_weight + 1) for w in words_of_weight(k)]


def words_of_depth(depth: int, dmax: int) -> List[Tuple[int, ...]]:
    return list(product(range(-1, dmax + 1), repeat=depth))


@dataclass(frozen=True)
class EmzvValue:
    word: IndexWord
    tau: LatticeParam
    value: complex
    est_error: float
    kind: str
    flagged: bool = False


@dataclass
class GenSeries:
    """Truncated generating series sum_d c_d x_1^d_1 ... x_n^d_n."""

    kind: str
    tau: LatticeParam
    depth: int
    dmax: int
    coeffs: Dict[Tuple[int, ...], complex] = field(default_factory=dict)

    def __getitem__(self, d) -> complex:
        return self.coeffs.get(tuple(d), 0j)

    def __call__(self, *x) -> complex:
        if len(x) != self.depth:
            raise ValueError(f"expected {self.depth} variables")
        return sum(c * math.prod(xi ** di for xi, di in zip(x, d)) for d, c in self.coeffs.items())


# ---------------------------------------------------------------------------
# nodal data along the paths


def _check_range(lat: LatticeParam):
    if lat.tau.imag < 0.1 - 1e-12:
        raise OutOfRangeError(f"Im tau must be >= 0.1, got {lat.tau.imag}")


def _log_sinc(w: np.ndarray) -> np.ndarray:
    """log(sin(pi w) / (pi w)), continuous in the order given, 0 at w = 0."""
    pw = np.pi * w
    small = np.abs(pw) < 1e-4
    s = np.empty_like(pw)
    s[~small] = np.sin(pw[~small]) / pw[~small]
    p2 = pw[small] ** 2
    s[small] = 1 - p2 / 6 + p2 * p2 / 120
    return np.log(np.abs(s)) + 1j * np.unwrap(np.angle(s))


def _log_theta_over_w(lat: LatticeParam, w: np.ndarray) -> np.ndarray:
    """log(theta(w) / w) continued from w = 0 along increasing |w|.

    ``w`` must be ordered along a ray from the origin.
    """
    out = _log_sinc(w)
    q = lat.q
    e_p, e_m = np.exp(TWO_PI_I * w), np.exp(-TWO_PI_I * w)
    qn = 1.0 + 0j
    for _ in range(lat.trunc_q):
        qn *= q
        if abs(qn) * max(1.0, np.max(np.abs(e_p)), np.max(np.abs(e_m))) < 1e-18:
            break
        out += np.log1p(-qn * e_p) + np.log1p(-qn * e_m) - 2 * np.log1p(-qn)
    return out


class PathData:
    """Kernels k_{-1..dmax} times dz/ds and the regulator at panel nodes."""

    def __init__(self, lat: LatticeParam, kind: str, rule: PanelRule, dmax: int):
        if kind not in KINDS:
            raise EmzvError(f"kind must be I or J, got {kind!r}")
        self.lat, self.kind, self.rule, self.dmax = lat, kind, rule, dmax
        tau = lat.tau
        delta, base = rule.delta, rule.base
        gamma = 1.0 if kind == "I" else tau
        sign = np.where(base == 0, 1.0, -1.0)
        w = sign * delta * gamma  # local coordinate at the nearer end

        sig = sigma_coefficients(lat, w, dmax)  # (N, dmax + 2), column 0 = x^-1
        if kind == "J":
            k = np.arange(dmax + 2)
            fact = np.array([math.factorial(i) for i in k], dtype=float)
            ex = (TWO_PI_I * w[:, None] / tau) ** k / fact
            sig = _series_mul(sig, ex)
        self.kern = (sig * gamma).T  # row d + 1 holds the integrand of letter d

        # the regulator depends on delta only: sort once, unwrap, scatter back
        order = np.argsort(delta, kind="stable")
        lhat = np.empty(len(delta), dtype=complex)
        lhat[order] = _log_theta_over_w(lat, delta[order] * gamma)
        ell = cmath.log(-TWO_PI_I * gamma) + np.log(delta) + lhat
        if kind == "J":
            ell = ell + 1j * np.pi * delta ** 2 * tau
        self.ell = ell

    def letter(self, d: int) -> np.ndarray:
        return self.kern[d + 1]


class _Evaluator:
    """Memoized Chen march over a prefix trie of words."""

    def __init__(self, data: PathData):
        self.data = data
        self._acc: Dict[Tuple[int, Tuple[int, ...]], np.ndarray] = {}
        self._pow: Dict[int, np.ndarray] = {}

    def _ell_power(self, k: int) -> np.ndarray:
        # l^k / k!
        if k not in self._pow:
            self._pow[k] = self.data.ell ** k / math.factorial(k)
        return self._pow[k]

    def _cumulative(self, a: int, prefix: Tuple[int, ...]) -> np.ndarray:
        key = (a, prefix)
        if key not in self._acc:
            rule, data = self.data.rule, self.data
            if len(prefix) == 1:
                f = self._ell_power(a) * data.letter(prefix[0])
            else:
                f = data.letter(prefix[-1]) * self._cumulative(a, prefix[:-1])
            self._acc[key] = rule.cumulative(f)
        return self._acc[key]

    def value(self, d: Tuple[int, ...]) -> complex:
        if not d:
            return 1.0 + 0j
        nz = [i for i, v in enumerate(d) if v != 0]
        if not nz:
            return 0j
        alpha, beta = nz[0], nz[-1]
        a, b = alpha, len(d) - 1 - beta
        inner = d[alpha: beta + 1]
        right = self._ell_power(b) * (-1) ** b * self.data.letter(inner[-1])
        if len(inner) == 1:
            f = self._ell_power(a) * right
        else:
            f = right * self._cumulative(a, inner[:-1])
        return complex(self.data.rule.integrate(f))


def _rule(settings: Settings, coarse: bool = False) -> PanelRule:
    r = PanelRule(settings.quad_nodes, settings.quad_ratio, settings.quad_min_width)
    return r.coarser() if coarse else r


def _check_caps(words: Iterable[Tuple[int, ...]], settings: Settings):
    for d in words:
        w = IndexWord(d)
        if w.depth > settings.max_depth:
            raise CapExceededError(f"depth {w.depth} of {w} exceeds cap {settings.max_depth}")
        if w.d and max(w.d) > settings.max_d:
            raise CapExceededError(f"index {max(w.d)} of {w} exceeds cap {settings.max_d}")
        if w.weight > settings.max_weight:
            raise CapExceededError(f"weight {w.weight} of {w} exceeds cap {settings.max_weight}")


def _raw_values(lat, words, kind, settings, coarse=False) -> Dict[Tuple[int, ...], complex]:
    words = [tuple(w) for w in words]
    dmax = max([max(w) for w in words if w] + [0])
    ev = _Evaluator(PathData(lat, kind, _rule(settings, coarse), dmax))
    return {w: ev.value(w) for w in words}


def compute_table(
    lat: LatticeParam,
    words: Iterable,
    kind: str = "I",
    settings: Settings = DEFAULT,
    with_error: bool = True,
    enforce_caps: bool = True,
) -> Dict[Tuple[int, ...], EmzvValue]:
    """Values for many words at one modulus, sharing kernel data and prefixes."""
    _check_range(lat)
    words = [_as_word(w).d for w in words]
    if enforce_caps:
        _check_caps(words, settings)
    fine = _raw_values(lat, words, kind, settings)
    coarse = _raw_values(lat, words, kind, settings, coarse=True) if with_error else {}
    out = {}
    for d in words:
        err = abs(fine[d] - coarse[d]) if with_error else 0.0
        if err > settings.quad_fail:
            raise QuadratureError(f"{kind}{IndexWord(d)} at tau={lat.tau}: error {err:.2e}", err)
        out[d] = EmzvValue(IndexWord(d), lat, fine[d], err, kind, err > settings.quad_tol)
    return out


def compute_I(lat: LatticeParam, word, settings: Settings = DEFAULT) -> EmzvValue:
    """I_d(tau) with an error estimate from a coarser rule."""
    d = _as_word(word).d
    return compute_table(lat, [d], "I", settings)[d]


def compute_J(lat: LatticeParam, word, settings: Settings = DEFAULT) -> EmzvValue:
    """J_d(tau), the analogue of I_d along the segment [0, tau]."""
    d = _as_word(word).d
    return compute_table(lat, [d], "J", settings)[d]


def gen_series(lat: LatticeParam, depth: int, dmax: int, kind: str = "I", settings: Settings = DEFAULT) -> GenSeries:
    words = words_of_depth(depth, dmax)
    vals = _values(lat, words, kind, settings)
    return GenSeries(kind, lat, depth, dmax, vals)


def _values(lat, words, kind, settings) -> Dict[Tuple[int, ...], complex]:
    """Plain values without caps or error estimates, for identity checks."""
    _check_range(lat)
    return _raw_values(lat, list({tuple(w) for w in words}), kind, settings)


# ---------------------------------------------------------------------------
# algebraic identities


def shuffles(u: Sequence[int], v: Sequence[int]) -> List[Tuple[int, ...]]:
    """All (n, m)-shuffles of two words, with multiplicity."""
    u, v = tuple(u), tuple(v)
    n, m = len(u), len(v)
    out = []
    for pos in combinations(range(n + m), n):
        w, iu, iv = [], 0, 0
        ps = set(pos)
        for k in range(n + m):
            if k in ps:
                w.append(u[iu])
                iu += 1
            else:
                w.append(v[iv])
                iv += 1
        out.append(tuple(w))
    return out


def _shuffle_residual(vals, u, v) -> float:
    def val(w):
        return vals[w] if w else 1.0

    return abs(val(u) * val(v) - sum(val(w) for w in shuffles(u, v)))


def _reversal_residual(vals, d) -> float:
    def val(w):
        return vals[w] if w else 1.0

    total = 0j
    for k in range(len(d) + 1):
        total += (-1) ** (sum(d[:k]) % 2) * val(d[:k]) * val(d[k:])
    return abs(total)


def check_shuffle(lat, d_left, d_right, kind: str = "I", settings: Settings = DEFAULT) -> float:
    u, v = _as_word(d_left).d, _as_word(d_right).d
    if not u or not v:
        return 0.0
    needed = [u, v] + shuffles(u, v)
    return _shuffle_residual(_values(lat, needed, kind, settings), u, v)


def check_reversal(lat, d, kind: str = "I", settings: Settings = DEFAULT) -> float:
    d = _as_word(d).d
    if not d:
        raise EmzvError("reversal identity needs a nonempty word")
    needed = [w for k in range(len(d) + 1) for w in (d[:k], d[k:]) if w]
    return _reversal_residual(_values(lat, needed, kind, settings), d)


def shuffle_suite(lat, max_weight: int = 6, kind: str = "I", settings: Settings = DEFAULT):
    """Residuals for every pair of nonempty words of combined weight <= max_weight."""
    vals = _values(lat, words_up_to_weight(max_weight), kind, settings)
    out = []
    for wl in range(1, max_weight):
        for wr in range(1, max_weight - wl + 1):
            for u in words_of_weight(wl):
                for v in words_of_weight(wr):
                    out.append(((u, v), _shuffle_residual(vals, u, v)))
    return out


def reversal_suite(lat, max_weight: int = 6, kind: str = "I", settings: Settings = DEFAULT):
    words = words_up_to_weight(max_weight)
    vals = _values(lat, words, kind, settings)
    return [(d, _reversal_residual(vals, d)) for d in words]


# ---------------------------------------------------------------------------
# modular identity


def check_modular(lat: LatticeParam, depth: int, dmax: int, settings: Settings = DEFAULT) -> float:
    """Max coefficientwise residual of J(tau) against I(-1/tau) up to the given depth."""
    tau = lat.tau
    inv = lat.inverted()
    words = [w for n in range(1, depth + 1) for w in words_of_depth(n, dmax)]
    jv = _values(lat, words, "J", settings)
    iv = _values(inv, words, "I", settings)
    log_tau = cmath.log(tau)  # imaginary part in (0, pi)
    worst = 0.0
    for d in words:
        n = len(d)
        rhs = 0j
        for a in range(n):
            if a and d[a - 1] != 0:
                break
            for b in range(n - a):
                if b and d[n - b] != 0:
                    break
                mid = d[a: n - b]
                rhs += ((-1) ** b / (math.factorial(a) * math.factorial(b))
                        * log_tau ** (a + b) * tau ** (-sum(mid)) * iv[mid])
        worst = max(worst, abs(jv[d] - rhs))
    return worst


# ---------------------------------------------------------------------------
# differential system in tau


def _binom(e: int, k: int) -> int:
    return math.comb(e, k) if 0 <= k <= e else 0


def _ode_terms(d: Tuple[int, ...]) -> List[Tuple[str, int, Tuple[int, ...], float]]:
    """Right-hand side of the tau-equation at the coefficient of x^d.

    Each term is (series, index, word, sign): sign * series[index] * V(word)
    with series "wpt" (p + G_2) or "wp" (p).
    """
    n = len(d)
    terms = [("wpt", d[0], d[1:], 1.0), ("wpt", d[-1], d[:-1], -1.0)]
    for i in range(n - 1):
        x, y = d[i], d[i + 1]
        head, tail = d[:i], d[i + 2:]
        for e in range(0, x + y + 3):
            c = _binom(e, x) - _binom(e, y)
            if c:
                terms.append(("wp", x + y - e, head + (e,) + tail, float(c)))
        # merged index -1: (p(y) - p(x)) / (x + y) is a Laurent polynomial
        if x >= 0 and y >= 0 and (x + y) % 2 == 1:
            terms.append(("wp", x + y + 1, head + (-1,) + tail, -float((-1) ** y)))
    return terms


def _ode_words(d: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    return [w for _, _, w, _ in _ode_terms(d) if w] + [d]


def _ode_residual(d, lat, kind, v0, shifted, h, wpt, wp) -> float:
    return abs(_ode_defect(d, lat, kind, v0, shifted, h, wpt, wp))


def _ode_defect(d, lat, kind, v0, shifted, h, wpt, wp) -> complex:
    """Signed LHS - RHS of the tau-equation at the coefficient of x^d."""
    def val(w):
        return v0[w] if w else 1.0

    series = {"wpt": wpt, "wp": wp}
    rhs = sum(s * series[name][k] * val(w) for name, k, w, s in _ode_terms(d))
    if kind == "J":
        rhs -= TWO_PI_I / lat.tau * sum(d) * v0[d]
    # five-point central difference: O(h^4) truncation at step h
    vp, vm, vp2, vm2 = shifted
    lhs = TWO_PI_I * (8 * (vp[d] - vm[d]) - (vp2[d] - vm2[d])) / (12 * h)
    return lhs - rhs


def _ode_tables(lat, words, kind, settings, h):
    needed = sorted({w for d in words for w in _ode_words(d)})
    v0 = _values(lat, needed, kind, settings)
    shifted = tuple(_values(lat.shifted(s * h), words, kind, settings) for s in (1, -1, 2, -2))
    order = max(max(abs(v) for v in w) for w in needed) * 2 + 4
    return v0, shifted, wp_tilde_series(lat, order), wp_series(lat, order)


def check_ode(lat: LatticeParam, word, kind: str = "I", dtau: Optional[float] = None,
              settings: Settings = DEFAULT) -> float:
    """Residual of the tau-equation at one coefficient, LHS by a central difference in tau."""
    d = _as_word(word).d
    if not d:
        raise EmzvError("the differential system needs a nonempty word")
    h = settings.fd_step if dtau is None else dtau
    v0, shifted, wpt, wp = _ode_tables(lat, [d], kind, settings, h)
    return _ode_residual(d, lat, kind, v0, shifted, h, wpt, wp)


def ode_suite(lat, max_weight: int = 5, kind: str = "I", dtau: Optional[float] = None,
              settings: Settings = DEFAULT):
    h = settings.fd_step if dtau is None else dtau
    words = words_up_to_weight(max_weight)
    v0, shifted, wpt, wp = _ode_tables(lat, words, kind, settings, h)
    return [(d, _ode_residual(d, lat, kind, v0, shifted, h, wpt, wp)) for d in words]


def ode_defects(lat, words, kind: str = "I", dtau: Optional[float] = None,
                settings: Settings = DEFAULT) -> Dict[Tuple[int, ...], complex]:
    """Signed residuals LHS - RHS of the tau-equation for many words."""
    h = settings.fd_step if dtau is None else dtau
    words = [_as_word(w).d for w in words]
    v0, shifted, wpt, wp = _ode_tables(lat, words, kind, settings, h)
    return {d: _ode_defect(d, lat, kind, v0, shifted, h, wpt, wp) for d in words}
