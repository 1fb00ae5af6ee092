"""Free associative and Lie algebra on two letters, and its functional model.

Series in the letters x, y (index 0 and 1) are stored densely, truncated at
a total degree N; coefficients are either exact (Python ints / Fractions in
object arrays) or complex. The same machinery serves the associator letters
a, b of the KZ equation.

The subalgebra generated by b_d = ad(x)^(d+1)(y), d >= -1, is free on these
generators (Lazard elimination). Its words b_{d_1}...b_{d_n} correspond to
monomials x_1^{d_1}...x_n^{d_n} of the algebra F; a t-preserving derivation
with values there corresponds to a cyclically invariant rational function
phi(x_1, ..., x_n) / (x_1...x_n (x_1+...+x_n)) in G0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


class FreeLieError(ValueError):
    pass


class LazardError(FreeLieError):
    """The series does not lie in the subalgebra generated by the b_d."""


class InvarianceError(FreeLieError):
    """A G0 numerator is not cyclically invariant (a genuine pole remains)."""


class ContractError(FreeLieError):
    """A derivation does not annihilate t = -[x, y]."""


# ---------------------------------------------------------------------------
# dense truncated series


def _dim(n: int) -> int:
    return 2 ** (n + 1) - 1


def _off(d: int) -> int:
    return 2 ** d - 1


def word_index(word: str) -> Tuple[int, int]:
    """(degree, index within degree) of a word over 'xy' (or 'ab')."""
    bits = word.translate(str.maketrans("xyab", "0101"))
    return len(word), (int(bits, 2) if bits else 0)


def index_word(deg: int, idx: int, letters: str = "xy") -> str:
    return "".join(letters[(idx >> (deg - 1 - k)) & 1] for k in range(deg))


def _zeros(n: int, exact: bool) -> np.ndarray:
    return np.zeros(n, dtype=object) if exact else np.zeros(n, dtype=complex)


def _is_scalar(v) -> bool:
    return isinstance(v, (int, float, complex, Fraction, np.number))


class NcSeries:
    """Truncated noncommutative series; ``data`` is the flat coefficient vector."""

    __slots__ = ("trunc", "data")

    def __init__(self, trunc: int, data: Optional[np.ndarray] = None, exact: bool = False):
        self.trunc = int(trunc)
        if data is None:
            data = _zeros(_dim(trunc), exact)
        if len(data) != _dim(trunc):
            raise FreeLieError("coefficient vector does not match the truncation")
        self.data = data

    # construction -----------------------------------------------------------
    @classmethod
    def zero(cls, trunc: int, exact: bool = False) -> "NcSeries":
        return cls(trunc, exact=exact)

    @classmethod
    def one(cls, trunc: int, exact: bool = False) -> "NcSeries":
        s = cls(trunc, exact=exact)
        s.data[0] = 1
        return s

    @classmethod
    def letter(cls, i: int, trunc: int, exact: bool = False) -> "NcSeries":
        s = cls(trunc, exact=exact)
        if trunc >= 1:
            s.data[1 + i] = 1
        return s

    @classmethod
    def from_words(cls, terms: Dict[str, object], trunc: int, exact: bool = False) -> "NcSeries":
        s = cls(trunc, exact=exact)
        for w, c in terms.items():
            d, i = word_index(w)
            if d <= trunc:
                s.data[_off(d) + i] += c
        return s

    # access -----------------------------------------------------------------
    @property
    def exact(self) -> bool:
        return self.data.dtype == object

    def part(self, d: int) -> np.ndarray:
        return self.data[_off(d): _off(d + 1)]

    def coeff(self, word: str):
        d, i = word_index(word)
        return self.data[_off(d) + i] if d <= self.trunc else 0

    def __getitem__(self, word: str):
        return self.coeff(word)

    def terms(self, letters: str = "xy") -> Iterable[Tuple[str, object]]:
        for d in range(self.trunc + 1):
            p = self.part(d)
            for i in np.nonzero(p != 0)[0]:
                yield index_word(d, int(i), letters), p[i]

    def copy(self) -> "NcSeries":
        return NcSeries(self.trunc, self.data.copy())

    def to_complex(self) -> "NcSeries":
        return NcSeries(self.trunc, np.asarray(self.data, dtype=complex))

    def truncated(self, n: int) -> "NcSeries":
        return NcSeries(n, self.data[: _dim(n)].copy())

    def homogeneous(self, d: int) -> "NcSeries":
        s = NcSeries(self.trunc, _zeros(_dim(self.trunc), self.exact))
        s.part(d)[:] = self.part(d)
        return s

    def degrees(self) -> List[int]:
        return [d for d in range(self.trunc + 1) if np.any(self.part(d) != 0)]

    # arithmetic -------------------------------------------------------------
    def _align(self, other: "NcSeries"):
        n = min(self.trunc, other.trunc)
        a, b = self.data[: _dim(n)], other.data[: _dim(n)]
        if a.dtype != b.dtype:
            a, b = np.asarray(a, complex), np.asarray(b, complex)
        return n, a, b

    def __add__(self, other):
        if _is_scalar(other):
            s = self.copy()
            s.data[0] += other
            return s
        n, a, b = self._align(other)
        return NcSeries(n, a + b)

    __radd__ = __add__

    def __neg__(self):
        return NcSeries(self.trunc, -self.data)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if _is_scalar(other):
            if self.exact and isinstance(other, (complex, float, np.number)):
                return NcSeries(self.trunc, np.asarray(self.data, complex) * other)
            return NcSeries(self.trunc, self.data * other)
        n, a, b = self._align(other)
        out = _zeros(_dim(n), a.dtype == object)
        da = [d for d in range(n + 1) if np.any(a[_off(d): _off(d + 1)] != 0)]
        db = [d for d in range(n + 1) if np.any(b[_off(d): _off(d + 1)] != 0)]
        for p in da:
            ap = a[_off(p): _off(p + 1)]
            for q in db:
                if p + q > n:
                    break
                out[_off(p + q): _off(p + q + 1)] += np.outer(ap, b[_off(q): _off(q + 1)]).ravel()
        return NcSeries(n, out)

    def __rmul__(self, other):
        if _is_scalar(other):
            return self * other
        return NotImplemented

    def __truediv__(self, c):
        if self.exact and isinstance(c, int):
            c = Fraction(c)
        return self * (1 / c)

    def bracket(self, other: "NcSeries") -> "NcSeries":
        return self * other - other * self

    def __eq__(self, other):
        if not isinstance(other, NcSeries):
            return NotImplemented
        n, a, b = self._align(other)
        return bool(np.all(a == b))

    __hash__ = None

    def is_zero(self) -> bool:
        return bool(np.all(self.data == 0))

    def max_abs(self) -> float:
        return float(np.max(np.abs(np.asarray(self.data, complex)))) if len(self.data) else 0.0

    # functions ----------------------------------------------------------------
    def _unit_scalar(self, k: int):
        return Fraction(1, k) if self.exact else 1.0 / k

    def exp(self) -> "NcSeries":
        if self.data[0] != 0:
            raise FreeLieError("exp needs a series without constant term")
        out = NcSeries.one(self.trunc, self.exact)
        term = NcSeries.one(self.trunc, self.exact)
        for k in range(1, self.trunc + 1):
            term = term * self * self._unit_scalar(k)
            out = out + term
        return out

    def log(self) -> "NcSeries":
        if self.data[0] != 1:
            raise FreeLieError("log needs constant term 1")
        x = self - 1
        out = NcSeries.zero(self.trunc, self.exact)
        power = NcSeries.one(self.trunc, self.exact)
        for k in range(1, self.trunc + 1):
            power = power * x
            out = out + power * ((-1) ** (k + 1) * self._unit_scalar(k))
        return out

    def inverse(self) -> "NcSeries":
        c0 = self.data[0]
        if c0 == 0:
            raise FreeLieError("series is not invertible")
        inv0 = Fraction(1) / c0 if self.exact else 1 / c0
        x = (self - c0) * inv0
        out = NcSeries.one(self.trunc, self.exact)
        power = NcSeries.one(self.trunc, self.exact)
        for _ in range(self.trunc):
            power = power * (-x)
            out = out + power
        return out * inv0

    def substitute(self, images: Sequence["NcSeries"]) -> "NcSeries":
        """Image under the algebra morphism sending letter i to images[i].

        Images must have zero constant term.
        """
        n = self.trunc
        imgs = [im.truncated(n) if im.trunc >= n else im for im in images]
        n = min([n] + [im.trunc for im in imgs])
        exact = self.exact and all(im.exact for im in imgs)
        dtype = object if exact else complex
        if any(im.data[0] != 0 for im in imgs):
            raise FreeLieError("images must have zero constant term")
        L = np.array([np.asarray(im.data[: _dim(n)], dtype) for im in imgs])  # (2, dim)
        out = _zeros(_dim(n), exact)
        out[0] = self.data[0]
        # rows: images of all words of the current degree
        rows = np.zeros((1, _dim(n)), dtype=dtype)
        rows[0, 0] = 1
        for d in range(1, n + 1):
            new = np.zeros((rows.shape[0] * 2, _dim(n)), dtype=dtype)
            nz_r = [p for p in range(n + 1) if np.any(rows[:, _off(p): _off(p + 1)] != 0)]
            nz_l = [q for q in range(1, n + 1) if np.any(L[:, _off(q): _off(q + 1)] != 0)]
            for p in nz_r:
                rp = rows[:, _off(p): _off(p + 1)]
                for q in nz_l:
                    if p + q > n:
                        break
                    blk = rp[:, None, :, None] * L[None, :, None, _off(q): _off(q + 1)]
                    new[:, _off(p + q): _off(p + q + 1)] += blk.reshape(rows.shape[0] * 2, -1)
            rows = new
            coef = np.asarray(self.part(d), dtype)
            if np.any(coef != 0):
                out += coef @ rows
        return NcSeries(n, out)


def series_x(trunc: int, exact: bool = False) -> NcSeries:
    return NcSeries.letter(0, trunc, exact)


def series_y(trunc: int, exact: bool = False) -> NcSeries:
    return NcSeries.letter(1, trunc, exact)


def t_element(trunc: int, exact: bool = False) -> NcSeries:
    """t = -[x, y]."""
    x, y = series_x(trunc, exact), series_y(trunc, exact)
    return -(x.bracket(y))


# ---------------------------------------------------------------------------
# Lie criteria and group-likeness


def _dynkin_batch(p: np.ndarray, n: int) -> np.ndarray:
    """Right-nested bracketing r(w1...wn) = [w1,[w2,...,wn]] on rows of ``p``."""
    if n == 1:
        return p.copy()
    b = p.shape[0]
    q = _dynkin_batch(p.reshape(b * 2, -1), n - 1).reshape(b, 2, -1)
    r = np.zeros_like(p)
    r.reshape(b, 2, -1)[...] += q
    r.reshape(b, -1, 2)[...] -= q.transpose(0, 2, 1)
    return r


def dynkin(s: NcSeries) -> NcSeries:
    """Dynkin map applied degreewise."""
    out = NcSeries(s.trunc, _zeros(_dim(s.trunc), s.exact))
    for d in range(1, s.trunc + 1):
        out.part(d)[:] = _dynkin_batch(s.part(d)[None, :], d)[0]
    return out


def lie_residual(s: NcSeries) -> float:
    """max_n |r(P_n) - n P_n|, zero exactly when every component is Lie."""
    worst = 0.0
    for d in range(1, s.trunc + 1):
        p = s.part(d)
        diff = _dynkin_batch(p[None, :], d)[0] - d * p
        worst = max(worst, float(np.max(np.abs(np.asarray(diff, complex)))) if len(diff) else 0.0)
    if s.data[0] != 0:
        worst = max(worst, abs(complex(s.data[0])))
    return worst


def is_lie(s: NcSeries, tol: float = 0.0) -> bool:
    return lie_residual(s) <= tol


def group_like_residual(s: NcSeries) -> float:
    """Residual of the group-like property via log and the Dynkin criterion."""
    c0 = complex(s.data[0])
    if abs(c0 - 1) > 0:
        return abs(c0 - 1)
    return lie_residual(s.log())


@lru_cache(maxsize=None)
def _shuffle_maps(p: int, q: int) -> np.ndarray:
    """Indices of all shuffles of words of degrees p, q; shape (C, 2^p, 2^q)."""
    u = np.arange(2 ** p)[:, None]
    v = np.arange(2 ** q)[None, :]
    n = p + q
    maps = []
    for pos in combinations(range(n), p):
        rest = [k for k in range(n) if k not in pos]
        idx = np.zeros((2 ** p, 2 ** q), dtype=np.int64)
        for k, at in enumerate(pos):
            idx += ((u >> (p - 1 - k)) & 1) << (n - 1 - at)
        for k, at in enumerate(rest):
            idx += ((v >> (q - 1 - k)) & 1) << (n - 1 - at)
        maps.append(idx)
    return np.array(maps)


def coproduct_residual(s: NcSeries) -> float:
    """max |<S, u sh v> - <S,u><S,v>| over words with |u| + |v| <= N."""
    worst = abs(complex(s.data[0]) - 1)
    for p in range(1, s.trunc):
        for q in range(1, s.trunc - p + 1):
            maps = _shuffle_maps(p, q)
            part = s.part(p + q)
            lhs = np.asarray(part[maps].sum(axis=0), complex)
            rhs = np.outer(np.asarray(s.part(p), complex), np.asarray(s.part(q), complex))
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def is_group_like(s: NcSeries, tol: float = 0.0) -> bool:
    return group_like_residual(s) <= tol


# ---------------------------------------------------------------------------
# Lazard generators b_d = ad(x)^(d+1)(y) and the correspondence with F


@lru_cache(maxsize=None)
def _b_gen(d: int) -> np.ndarray:
    """Homogeneous coefficients of ad(x)^m(y), m = d + 1, degree m + 1 (ints)."""
    m = d + 1
    out = np.zeros(2 ** (m + 1), dtype=object)
    for j in range(m + 1):
        # x^(m-j) y x^j
        idx = 1 << j
        out[idx] += (-1) ** j * math.comb(m, j)
    return out


@lru_cache(maxsize=None)
def _b_word(ds: Tuple[int, ...]) -> np.ndarray:
    """Homogeneous coefficients of b_{d_1} ... b_{d_n} (ints)."""
    if not ds:
        return np.ones(1, dtype=object)
    head = _b_word(ds[:-1])
    return np.outer(head, _b_gen(ds[-1])).ravel()


def bword_weight(ds: Sequence[int]) -> int:
    return sum(d + 2 for d in ds)


def lazard_expand(ds: Sequence[int], trunc: int, exact: bool = True) -> NcSeries:
    """The x, y expansion of b_{d_1} ... b_{d_n}."""
    ds = tuple(ds)
    s = NcSeries(trunc, exact=exact)
    w = bword_weight(ds)
    if w <= trunc:
        s.part(w)[:] = _b_word(ds)
    return s


@lru_cache(maxsize=None)
def _patterns(deg: int) -> List[Tuple[int, ...]]:
    """Block exponents (a_1..a_n) of words x^a1 y ... x^an y of a degree, lex descending."""
    out = []

    def rec(left, acc):
        if left == 0:
            out.append(tuple(acc))
            return
        for a in range(left - 1, -1, -1):
            rec(left - a - 1, acc + [a])

    rec(deg, [])
    return out


def _pattern_index(pattern: Tuple[int, ...]) -> int:
    idx = 0
    for a in pattern:
        idx = (idx << (a + 1)) | 1
    return idx


def lazard_extract(s: NcSeries, tol: Optional[float] = None) -> Dict[Tuple[int, ...], object]:
    """Coefficients of ``s`` on the b-words; raises LazardError outside the subalgebra.

    Exact series must be reproduced exactly; complex ones up to ``tol``
    (default 1e-9 relative to the largest coefficient).
    """
    out: Dict[Tuple[int, ...], object] = {}
    if s.data[0] != 0:
        out[()] = s.data[0]
    if tol is None and not s.exact:
        tol = 1e-9 * max(1.0, s.max_abs())
    for deg in range(1, s.trunc + 1):
        part = s.part(deg).copy()
        if not np.any(part != 0):
            continue
        for pattern in _patterns(deg):
            c = part[_pattern_index(pattern)]
            if c == 0:
                continue
            ds = tuple(a - 1 for a in pattern)
            out[ds] = c
            part = part - c * _b_word(ds)
        if s.exact:
            bad = np.any(part != 0)
        else:
            bad = np.max(np.abs(np.asarray(part, complex))) > tol
        if bad:
            raise LazardError(f"degree {deg} component is not generated by the b_d")
    return out


# ---------------------------------------------------------------------------
# the algebra F


@dataclass
class FElement:
    """Finite sum of monomials x_1^e_1 ... x_n^e_n (e_i >= -1) over all depths."""

    terms: Dict[Tuple[int, ...], object] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for e, c in self.terms.items():
            e = tuple(int(v) for v in e)
            if any(v < -1 for v in e):
                raise FreeLieError(f"pole order above one in {e}")
            if c != 0:
                clean[e] = clean.get(e, 0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0}

    @classmethod
    def monomial(cls, e: Sequence[int], c=1) -> "FElement":
        return cls({tuple(e): c})

    def depth_part(self, n: int) -> "FElement":
        return FElement({e: c for e, c in self.terms.items() if len(e) == n})

    def truncated(self, cap: int) -> "FElement":
        return FElement({e: c for e, c in self.terms.items() if bword_weight(e) <= cap})

    def __add__(self, other: "FElement") -> "FElement":
        t = dict(self.terms)
        for e, c in other.terms.items():
            t[e] = t.get(e, 0) + c
        return FElement(t)

    def __neg__(self):
        return FElement({e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "FElement":
        return FElement({e: c * v for e, v in self.terms.items()})

    def __eq__(self, other):
        if not isinstance(other, FElement):
            return NotImplemented
        return (self - other).terms == {}

    def max_abs(self) -> float:
        return max((abs(complex(c)) for c in self.terms.values()), default=0.0)


def f_mul(f: FElement, g: FElement, cap: Optional[int] = None) -> FElement:
    """h(x_1..x_{n+m}) = f(x_1..x_n) g(x_{n+1}..x_{n+m})."""
    out: Dict[Tuple[int, ...], object] = {}
    for e1, c1 in f.terms.items():
        for e2, c2 in g.terms.items():
            e = e1 + e2
            if cap is not None and bword_weight(e) > cap:
                continue
            out[e] = out.get(e, 0) + c1 * c2
    return FElement(out)


def f_from_series(s: NcSeries, tol: Optional[float] = None) -> FElement:
    return FElement(lazard_extract(s, tol))


def series_from_f(f: FElement, trunc: int, exact: Optional[bool] = None) -> NcSeries:
    if exact is None:
        exact = all(isinstance(c, (int, Fraction)) for c in f.terms.values())
    s = NcSeries(trunc, exact=exact)
    for e, c in f.terms.items():
        w = bword_weight(e)
        if w <= trunc:
            s.part(w)[:] += c * (_b_word(e) if exact else np.asarray(_b_word(e), complex))
    return s


def xi(f: FElement) -> FElement:
    """Euler operator sum_i x_i d/dx_i."""
    return FElement({e: sum(e) * c for e, c in f.terms.items()})


# ---------------------------------------------------------------------------
# derivations


class TDerivation:
    """Derivation of the free algebra given by the images of x and y."""

    def __init__(self, u: NcSeries, v: NcSeries):
        n = min(u.trunc, v.trunc)
        self.u, self.v = u.truncated(n), v.truncated(n)
        self.trunc = n

    @property
    def exact(self) -> bool:
        return self.u.exact and self.v.exact

    def apply(self, s: NcSeries) -> NcSeries:
        n = min(self.trunc, s.trunc)
        exact = self.exact and s.exact
        dtype = object if exact else complex
        out = _zeros(_dim(n), exact)
        img = [np.asarray(self.u.data, dtype), np.asarray(self.v.data, dtype)]
        img_deg = [k for k in range(n + 1) if np.any(img[0][_off(k): _off(k + 1)] != 0)
                   or np.any(img[1][_off(k): _off(k + 1)] != 0)]
        for d in range(1, n + 1):
            sd = np.asarray(s.part(d), dtype)
            if not np.any(sd != 0):
                continue
            for k in img_deg:
                e = d - 1 + k
                if e > n:
                    break
                acc = np.zeros(2 ** e, dtype=dtype)
                for i in range(d):
                    blk = sd.reshape(2 ** i, 2, 2 ** (d - i - 1))
                    res = np.zeros((2 ** i, 2 ** k, 2 ** (d - i - 1)), dtype=dtype)
                    for c in (0, 1):
                        ic = img[c][_off(k): _off(k + 1)]
                        if np.any(ic != 0):
                            res += blk[:, c, None, :] * ic[None, :, None]
                    acc += res.ravel()
                out[_off(e): _off(e + 1)] += acc
        return NcSeries(n, out)

    def __call__(self, s: NcSeries) -> NcSeries:
        return self.apply(s)

    def __add__(self, other: "TDerivation") -> "TDerivation":
        return TDerivation(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "TDerivation") -> "TDerivation":
        return TDerivation(self.u - other.u, self.v - other.v)

    def __mul__(self, c) -> "TDerivation":
        return TDerivation(self.u * c, self.v * c)

    __rmul__ = __mul__

    def commutator(self, other: "TDerivation") -> "TDerivation":
        """[D1, D2] = D1 D2 - D2 D1."""
        return TDerivation(self.apply(other.u) - other.apply(self.u), self.apply(other.v) - other.apply(self.v))

    def __eq__(self, other):
        if not isinstance(other, TDerivation):
            return NotImplemented
        return self.u == other.u and self.v == other.v

    __hash__ = None

    def is_zero(self) -> bool:
        return self.u.is_zero() and self.v.is_zero()

    def max_abs(self) -> float:
        return max(self.u.max_abs(), self.v.max_abs())

    def t_image(self) -> NcSeries:
        """D(t) = -([u, y] + [x, v])."""
        x, y = series_x(self.trunc, self.exact), series_y(self.trunc, self.exact)
        return -(self.u.bracket(y) + x.bracket(self.v))

    def is_t_preserving(self, tol: float = 0.0) -> bool:
        return self.t_image().max_abs() <= tol

    def matrix(self, trunc: Optional[int] = None) -> np.ndarray:
        """Complex matrix of the derivation on the truncated algebra (columns = words)."""
        n = self.trunc if trunc is None else min(trunc, self.trunc)
        m = np.zeros((_dim(n), _dim(n)), dtype=complex)
        img = [np.asarray(self.u.data, complex), np.asarray(self.v.data, complex)]
        for d in range(1, n + 1):
            for k in range(0, n - d + 2):
                e = d - 1 + k
                ik = np.stack([img[0][_off(k): _off(k + 1)], img[1][_off(k): _off(k + 1)]], axis=1)
                if not np.any(ik != 0):
                    continue
                blk = np.zeros((2 ** e, 2 ** d), dtype=complex)
                for i in range(d):
                    blk += np.kron(np.kron(np.eye(2 ** i), ik), np.eye(2 ** (d - i - 1)))
                m[_off(e): _off(e + 1), _off(d): _off(d + 1)] += blk
        return m


def e_plus(trunc: int, exact: bool = True) -> TDerivation:
    """(x, y) -> (0, x)."""
    return TDerivation(NcSeries.zero(trunc, exact), series_x(trunc, exact))


def h_derivation(trunc: int, exact: bool = True) -> TDerivation:
    """(x, y) -> (x, -y)."""
    return TDerivation(series_x(trunc, exact), -series_y(trunc, exact))


def special_derivations(trunc: int, exact: bool = True):
    """(e_plus, h, xi): the sl2 pair on the free algebra and the Euler operator on F."""
    return e_plus(trunc, exact), h_derivation(trunc, exact), xi


def apply_exp(d: TDerivation, s: NcSeries, c=1) -> NcSeries:
    """exp(c D)(s) by the power series, for locally nilpotent D."""
    out = s.copy()
    term = s
    for k in range(1, 4 * s.trunc + 2):
        term = d.apply(term) * (c / k if not (s.exact and d.exact and isinstance(c, (int, Fraction)))
                                else Fraction(c) / k)
        if term.is_zero():
            break
        out = out + term
    return out


# ---------------------------------------------------------------------------
# exact polynomials and G0


Linear = Tuple[int, ...]


@dataclass(frozen=True)
class Poly:
    """Polynomial with rational coefficients in ``nv`` variables."""

    nv: int
    terms: Tuple[Tuple[Tuple[int, ...], Fraction], ...] = ()

    @classmethod
    def make(cls, nv: int, terms: Dict[Tuple[int, ...], object]) -> "Poly":
        return cls(nv, tuple(sorted((e, Fraction(c)) for e, c in terms.items() if c != 0)))

    @classmethod
    def const(cls, nv: int, c=1) -> "Poly":
        return cls.make(nv, {(0,) * nv: c})

    @classmethod
    def monomial(cls, exps: Sequence[int], c=1) -> "Poly":
        return cls.make(len(exps), {tuple(exps): c})

    @classmethod
    def linear(cls, form: Linear) -> "Poly":
        nv = len(form)
        t = {}
        for i, c in enumerate(form):
            if c:
                e = [0] * nv
                e[i] = 1
                t[tuple(e)] = c
        return cls.make(nv, t)

    def as_dict(self) -> Dict[Tuple[int, ...], Fraction]:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "Poly") -> "Poly":
        t = self.as_dict()
        for e, c in other.terms:
            t[e] = t.get(e, 0) + c
        return Poly.make(self.nv, t)

    def __neg__(self):
        return Poly(self.nv, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly.make(self.nv, {e: c * other for e, c in self.terms})
        t: Dict[Tuple[int, ...], Fraction] = {}
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                e = tuple(a + b for a, b in zip(e1, e2))
                t[e] = t.get(e, 0) + c1 * c2
        return Poly.make(self.nv, t)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        out = Poly.const(self.nv)
        for _ in range(k):
            out = out * self
        return out

    def subs(self, forms: Sequence[Linear]) -> "Poly":
        """Substitute variable i -> linear form forms[i] (all of equal length)."""
        nv = len(forms[0]) if forms else 0
        lin = [Poly.linear(f) for f in forms]
        cache: Dict[Tuple[int, int], Poly] = {}

        def power(i, k):
            if (i, k) not in cache:
                cache[(i, k)] = lin[i] ** k
            return cache[(i, k)]

        out = Poly(nv)
        for e, c in self.terms:
            term = Poly.const(nv, c)
            for i, k in enumerate(e):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def div_linear(self, form: Linear) -> Optional["Poly"]:
        """Exact quotient by a linear form, or None if it does not divide."""
        k = max(i for i, c in enumerate(form) if c)
        ck = Fraction(form[k])
        # group by the power of x_k
        by: Dict[int, Dict[Tuple[int, ...], Fraction]] = {}
        for e, c in self.terms:
            rest = e[:k] + (0,) + e[k + 1:]
            by.setdefault(e[k], {})[rest] = c
        if not by:
            return Poly(self.nv)
        top = max(by)
        r = Poly.linear(tuple(0 if i == k else c for i, c in enumerate(form))) * (1 / ck)
        xk = [0] * self.nv
        xk[k] = 1
        quotient = Poly(self.nv)
        carry = Poly(self.nv)
        # synthetic division by (x_k + r): q_{a-1} = p_a - r q_a
        for a in range(top, 0, -1):
            pa = Poly.make(self.nv, by.get(a, {}))
            qa = pa - r * carry
            e = list(xk)
            e[k] = a - 1
            quotient = quotient + qa * Poly.monomial(e)
            carry = qa
        rem = Poly.make(self.nv, by.get(0, {})) - r * carry
        if not rem.is_zero():
            return None
        return quotient * (1 / ck)


def _unit(nv: int, i: int) -> Linear:
    return tuple(1 if j == i else 0 for j in range(nv))


def _block(nv: int, lo: int, hi: int) -> Linear:
    """x_lo + ... + x_hi (0-based, inclusive)."""
    return tuple(1 if lo <= j <= hi else 0 for j in range(nv))


@dataclass
class _Rat:
    num: Poly
    den: Counter


def _combine(terms: List[_Rat], nv: int, target: Counter) -> Poly:
    """Sum of rational terms written over the ``target`` denominator."""
    den: Counter = Counter()
    for t in terms:
        for f, k in t.den.items():
            den[f] = max(den[f], k)
    num = Poly(nv)
    for t in terms:
        p = t.num
        for f, k in den.items():
            extra = k - t.den.get(f, 0)
            if extra:
                p = p * Poly.linear(f) ** extra
        num = num + p
    if num.is_zero():
        return num
    for f in list(den):
        excess = den[f] - target.get(f, 0)
        for _ in range(max(excess, 0)):
            q = num.div_linear(f)
            if q is None:
                raise InvarianceError(f"a pole along {f} does not cancel")
            num = q
            den[f] -= 1
    for f, k in target.items():
        missing = k - den.get(f, 0)
        if missing > 0:
            num = num * Poly.linear(f) ** missing
    return num


@dataclass(frozen=True)
class GZeroElement:
    """phi = num(x_1..x_n) / (x_1 ... x_n (x_1 + ... + x_n))."""

    depth: int
    num: Poly

    def __post_init__(self):
        if self.num.nv != self.depth:
            raise FreeLieError("numerator has the wrong number of variables")

    @classmethod
    def power(cls, k: int) -> "GZeroElement":
        """x_1^k in depth one (k even, k >= -2)."""
        if k < -2 or k % 2:
            raise FreeLieError(f"G0[1] is spanned by even powers >= -2, got {k}")
        return cls(1, Poly.monomial((k + 2,)))

    def denominator(self) -> Counter:
        n = self.depth
        c = Counter({_unit(n, i): 1 for i in range(n)})
        c[_block(n, 0, n - 1)] += 1
        return c

    def at(self, forms: Sequence[Linear]) -> _Rat:
        """phi evaluated at the given linear forms."""
        den: Counter = Counter()
        for f in list(forms) + [tuple(map(sum, zip(*forms)))]:
            den[f] += 1
        return _Rat(self.num.subs(list(forms)), den)

    def is_invariant(self) -> bool:
        n = self.depth
        shifted = [_unit(n, i + 1) for i in range(n - 1)] + [tuple(-1 for _ in range(n))]
        return self.num.subs(shifted) == self.num

    def __add__(self, other: "GZeroElement") -> "GZeroElement":
        return GZeroElement(self.depth, self.num + other.num)

    def __sub__(self, other: "GZeroElement") -> "GZeroElement":
        return GZeroElement(self.depth, self.num - other.num)

    def __mul__(self, c) -> "GZeroElement":
        return GZeroElement(self.depth, self.num * c)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.num.is_zero()


def _args(nv: int, n: int, start: int) -> List[Linear]:
    return [_unit(nv, start + k) for k in range(n)]


def _merged_args(nv: int, m: int, i: int, width: int) -> List[Linear]:
    """Slots 1..i-1 single, slot i = x_i + ... + x_{i+width}, then single (0-based i)."""
    out = [_unit(nv, k) for k in range(i)]
    out.append(_block(nv, i, i + width))
    out += [_unit(nv, k) for k in range(i + width + 1, i + width + 1 + (m - i - 1))]
    return out


def _mono_at(e: Sequence[int], forms: Sequence[Linear], nv: int) -> _Rat:
    num = Poly.const(nv)
    den: Counter = Counter()
    for k, f in zip(e, forms):
        if k >= 0:
            num = num * Poly.linear(f) ** k
        else:
            den[f] += -k
    return _Rat(num, den)


def _prod(a: _Rat, b: _Rat) -> _Rat:
    return _Rat(a.num * b.num, a.den + b.den)


def _neg(a: _Rat) -> _Rat:
    return _Rat(-a.num, a.den)


def _shift_terms(phi: GZeroElement, nv: int, i: int) -> List[_Rat]:
    """phi^{i..i+n-1} - phi^{i+1..i+n} (0-based i)."""
    n = phi.depth
    return [phi.at(_args(nv, n, i)), _neg(phi.at(_args(nv, n, i + 1)))]


def g0_bracket(phi: GZeroElement, psi: GZeroElement) -> GZeroElement:
    """The bracket of G0, antisymmetric and transported from derivations."""
    n, m = phi.depth, psi.depth
    nv = n + m
    terms: List[_Rat] = []
    for i in range(m):
        inner = psi.at(_merged_args(nv, m, i, n))
        terms += [_prod(t, inner) for t in _shift_terms(phi, nv, i)]
    for j in range(n):
        inner = phi.at(_merged_args(nv, n, j, m))
        terms += [_neg(_prod(t, inner)) for t in _shift_terms(psi, nv, j)]
    terms.append(_neg(_prod(phi.at(_args(nv, n, 0)), psi.at(_args(nv, m, n)))))
    terms.append(_prod(psi.at(_args(nv, m, 0)), phi.at(_args(nv, n, m))))
    target = GZeroElement(nv, Poly(nv)).denominator()
    return GZeroElement(nv, _combine(terms, nv, target))


def g0_act(phi: GZeroElement, f: FElement, cap: Optional[int] = None) -> FElement:
    """phi . f, the G0-module structure on F; depth-0 parts are killed."""
    n = phi.depth
    out: Dict[Tuple[int, ...], object] = {}
    for e, c in f.terms.items():
        m = len(e)
        if m == 0:
            continue
        nv = n + m
        terms: List[_Rat] = []
        for i in range(m):
            inner = _mono_at(e, _merged_args(nv, m, i, n), nv)
            terms += [_prod(t, inner) for t in _shift_terms(phi, nv, i)]
        terms.append(_neg(_prod(phi.at(_args(nv, n, 0)), _mono_at(e, _args(nv, m, n), nv))))
        terms.append(_prod(phi.at(_args(nv, n, m)), _mono_at(e, _args(nv, m, 0), nv)))
        target = Counter({_unit(nv, k): 1 for k in range(nv)})
        num = _combine(terms, nv, target)
        for ex, v in num.terms:
            key = tuple(a - 1 for a in ex)
            if cap is not None and bword_weight(key) > cap:
                continue
            out[key] = out.get(key, 0) + c * v
    return FElement(out)


def _laurent_to_f(num: Poly) -> FElement:
    """num / (x_1 ... x_n) as an element of F_n."""
    return FElement({tuple(a - 1 for a in e): c for e, c in num.terms})


def _f_to_numerator(f: FElement, n: int) -> Poly:
    return Poly.make(n, {tuple(a + 1 for a in e): c for e, c in f.terms.items()})


def uv_from_g0(phi: GZeroElement) -> Tuple[FElement, FElement]:
    """The images (u, v) of x, y as elements of F_n and F_{n+1}."""
    n = phi.depth
    u = _laurent_to_f(phi.num)
    nv = n + 1
    diff = phi.num.subs(_args(nv, n, 1)) - phi.num.subs(_args(nv, n, 0))
    q = diff.div_linear(_block(nv, 0, n))
    if q is None:
        raise InvarianceError("numerator is not cyclically invariant")
    return u, _laurent_to_f(q)


def der_from_g0(phi: GZeroElement, trunc: int) -> TDerivation:
    u, v = uv_from_g0(phi)
    return TDerivation(series_from_f(u, trunc, True), series_from_f(v, trunc, True))


def g0_from_der(d: TDerivation) -> GZeroElement:
    """Inverse of der_from_g0 for a t-preserving derivation of pure y-degree."""
    if not d.is_t_preserving():
        raise ContractError("derivation does not annihilate t")
    u = f_from_series(d.u)
    depths = {len(e) for e in u.terms}
    if len(depths) > 1:
        raise FreeLieError("derivation is not homogeneous in the y-degree")
    if not depths:
        if not d.v.is_zero():
            raise ContractError("u = 0 forces v = 0")
        return GZeroElement(1, Poly(1))
    n = depths.pop()
    phi = GZeroElement(n, _f_to_numerator(u, n))
    if not phi.is_invariant():
        raise InvarianceError("u / (x_1 + ... + x_n) is not cyclically invariant")
    return phi


def delta(n2: int, trunc: int) -> TDerivation:
    """delta_{2n}: the t-preserving derivation attached to x_1^{2n} (n >= -1)."""
    return der_from_g0(GZeroElement.power(n2), trunc)
