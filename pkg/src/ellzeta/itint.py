"""Regularized iterated integrals along paths with logarithmic endpoints.

Integrals are computed on a composite Gauss-Legendre rule whose panels are
graded geometrically towards both endpoints. Every node remembers which
endpoint it is close to and its exact distance ``delta`` from it, so that
integrands can be evaluated in a local coordinate without the rounding that
``1 - delta`` would cause. Iterated integrals are accumulated by a Chen
march: one cumulative integration per letter.

Values live either in the scalars (arrays of shape ``(m,)`` over nodes) or
in a matrix algebra (arrays of shape ``(m, d, d)``). Products follow the
opposite-algebra convention: the form attached to the later time is
multiplied on the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as L

from .settings import DEFAULT, Settings


class QuadratureError(ArithmeticError):
    """Raised when two rules disagree beyond the configured tolerance."""

    def __init__(self, msg: str, estimate: float):
        super().__init__(f"{msg} (estimated error {estimate:.3g})")
        self.estimate = estimate


class ChargeMismatchError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quadrature rule


@lru_cache(maxsize=16)
def _reference(nodes: int):
    """Gauss-Legendre nodes, weights and spectral integration matrix on [-1, 1].

    ``Q @ f`` gives the integral from -1 to each node of the polynomial
    interpolating f at the nodes.
    """
    x, w = L.leggauss(nodes)
    V = L.legvander(x, nodes - 1)
    W = np.empty((nodes, nodes))
    for j in range(nodes):
        e = np.zeros(nodes)
        e[j] = 1
        W[:, j] = L.legval(x, L.legint(e, lbnd=-1))
    Q = W @ np.linalg.inv(V)
    return x, w, Q


@dataclass(frozen=True)
class PanelRule:
    """Composite Gauss rule on [0, 1] graded towards both endpoints.

    Nodes are sorted by increasing t. ``base[i]`` is 0 or 1 (the nearer
    endpoint) and ``delta[i]`` the exact distance from it.
    """

    nodes: int = 24
    ratio: float = 1.0 / 3.0
    min_width: float = 1e-28
    breaks: tuple = ()

    def __post_init__(self):
        x, w, Q = _reference(self.nodes)
        edges = [0.5]
        while edges[-1] * self.ratio >= self.min_width:
            edges.append(edges[-1] * self.ratio)
        edges.append(0.0)
        edges = np.array(edges[::-1])  # 0, small, ..., 0.5
        panels = []  # (base, lo, hi) in delta
        left = list(zip(edges[:-1], edges[1:]))
        right = list(zip(edges[:-1], edges[1:]))[::-1]
        for base, seq in ((0, left), (1, right)):
            for lo, hi in seq:
                cuts = sorted(
                    d for b, d in (_split_break(t) for t in self.breaks) if b == base and lo < d < hi
                )
                pts = [lo, *cuts, hi]
                pieces = list(zip(pts[:-1], pts[1:]))
                if base == 1:
                    pieces = pieces[::-1]
                panels.extend((base, a, b) for a, b in pieces)
        base = []
        delta = []
        half = []
        for b, lo, hi in panels:
            mid, h = 0.5 * (lo + hi), 0.5 * (hi - lo)
            base.append(np.full(self.nodes, b))
            delta.append(mid + h * x if b == 0 else mid - h * x)
            half.append(h)
        object.__setattr__(self, "_base", np.concatenate(base))
        object.__setattr__(self, "_delta", np.concatenate(delta))
        object.__setattr__(self, "_half", np.array(half))
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_Q", Q)

    @property
    def base(self) -> np.ndarray:
        return self._base

    @property
    def delta(self) -> np.ndarray:
        return self._delta

    @property
    def t(self) -> np.ndarray:
        return np.where(self._base == 0, self._delta, 1.0 - self._delta)

    @property
    def weights(self) -> np.ndarray:
        return np.repeat(self._half, self.nodes) * np.tile(self._w, len(self._half))

    @property
    def size(self) -> int:
        return len(self._delta)

    def coarser(self) -> "PanelRule":
        """Same panels with fewer nodes, used for error estimates."""
        return PanelRule(max(4, (2 * self.nodes) // 3), self.ratio, self.min_width, self.breaks)

    def integrate(self, f: np.ndarray):
        """Total integral over [0, 1] of nodal values (leading axis = nodes)."""
        f = np.asarray(f)
        return np.tensordot(self.weights, f, axes=(0, 0))

    def cumulative(self, f: np.ndarray) -> np.ndarray:
        """Integral from 0 to every node, same shape as ``f``."""
        f = np.asarray(f)
        p, q = len(self._half), self.nodes
        fp = f.reshape((p, q) + f.shape[1:])
        h = self._half.reshape((p,) + (1,) * (f.ndim - 1))
        loc = np.einsum("ij,pj...->pi...", self._Q, fp) * h[:, None]
        tot = np.einsum("j,pj...->p...", self._w, fp) * h
        off = np.cumsum(tot, axis=0) - tot
        return (loc + off[:, None]).reshape(f.shape)


def _split_break(t: float):
    return (0, t) if t <= 0.5 else (1, 1.0 - t)


def default_rule(settings: Settings = DEFAULT, min_width: Optional[float] = None, breaks=()) -> PanelRule:
    return PanelRule(
        settings.quad_nodes,
        settings.quad_ratio,
        settings.quad_min_width if min_width is None else min_width,
        tuple(breaks),
    )


# ---------------------------------------------------------------------------
# paths, forms and regulators


class SampledPath:
    """A smooth path gamma: [0, 1] -> C.

    Built either from samples (piecewise linear through ``points`` at
    parameters ``t``) or from a callable with its derivative. ``points``
    always returns samples of the path.
    """

    def __init__(self, points=None, t=None, func=None, dfunc=None, samples: int = 257):
        if func is None:
            pts = np.asarray(points, dtype=complex)
            if pts.ndim != 1 or len(pts) < 2:
                raise ValueError("a sampled path needs at least two points")
            tt = np.linspace(0.0, 1.0, len(pts)) if t is None else np.asarray(t, dtype=float)
            if tt[0] != 0 or tt[-1] != 1 or np.any(np.diff(tt) <= 0):
                raise ValueError("sample parameters must increase from 0 to 1")
            self._pts, self._t = pts, tt
            self._func = self._dfunc = None
            self.breaks = tuple(tt[1:-1])
        else:
            if dfunc is None:
                raise ValueError("a functional path needs its derivative")
            self._func, self._dfunc = func, dfunc
            self._t = np.linspace(0.0, 1.0, samples)
            self._pts = np.asarray(func(self._t), dtype=complex)
            self.breaks = ()

    @classmethod
    def segment(cls, a: complex, b: complex) -> "SampledPath":
        return cls([a, b])

    @property
    def points(self) -> np.ndarray:
        return self._pts

    @property
    def start(self) -> complex:
        return complex(self._pts[0])

    @property
    def end(self) -> complex:
        return complex(self._pts[-1])

    def reversed(self) -> "SampledPath":
        if self._func is None:
            return SampledPath(self._pts[::-1], 1 - self._t[::-1])
        f, df = self._func, self._dfunc
        return SampledPath(func=lambda t: f(1 - t), dfunc=lambda t: -df(1 - t))

    def at(self, rule: PanelRule):
        """(z, dz/dt) at the nodes of ``rule``."""
        if self._func is not None:
            t = rule.t
            return np.asarray(self._func(t), complex), np.asarray(self._dfunc(t), complex)
        base, delta = rule.base, rule.delta
        z = np.empty(rule.size, complex)
        dz = np.empty(rule.size, complex)
        t0, t1 = self._t, self._pts
        # left endpoint measured from t = 0, right from t = 1
        for b in (0, 1):
            sel = base == b
            tt = delta[sel] if b == 0 else 1.0 - delta[sel]
            k = np.clip(np.searchsorted(t0, tt, side="right") - 1, 0, len(t0) - 2)
            slope = (t1[k + 1] - t1[k]) / (t0[k + 1] - t0[k])
            if b == 0:
                z[sel] = t1[k] + slope * (delta[sel] - t0[k])
            else:
                z[sel] = t1[k + 1] - slope * (delta[sel] - (1.0 - t0[k + 1]))
            dz[sel] = slope
        return z, dz


Evaluator = Callable[[np.ndarray], np.ndarray]
LocalEvaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RegForm:
    """A 1-form f(z) dz with a d(charge * log) singularity at each endpoint.

    ``func`` maps an array of points to values (shape ``(m,)`` or
    ``(m, d, d)``). ``local``, if given, is called as ``local(base, delta)``
    with the exact endpoint offsets of the nodes and must return
    f(gamma) * gamma' (the pulled-back coefficient of dt); it takes
    precedence over ``func``.
    """

    func: Optional[Evaluator] = None
    charge: object = 0
    local: Optional[LocalEvaluator] = None

    def pullback(self, path: SampledPath, rule: PanelRule, cache: dict) -> np.ndarray:
        key = ("form", id(self))
        if key not in cache:
            if self.local is not None:
                val = np.asarray(self.local(rule.base, rule.delta))
            else:
                z, dz = _nodes(path, rule, cache)
                val = np.asarray(self.func(z))
                val = val * dz.reshape((-1,) + (1,) * (val.ndim - 1))
            cache[key] = val
        return cache[key]


@dataclass(frozen=True)
class Regulator:
    """The function ell with gamma*(ell) - charge * log(t(1-t)) smooth.

    ``dfunc`` is dell/dz. Local variants return ell and dell/dt.
    """

    func: Optional[Evaluator] = None
    dfunc: Optional[Evaluator] = None
    charge: object = 0
    local: Optional[LocalEvaluator] = None
    dlocal: Optional[LocalEvaluator] = None

    def values(self, path: SampledPath, rule: PanelRule, cache: dict):
        key = ("reg", id(self))
        if key not in cache:
            if self.local is not None:
                ell = np.asarray(self.local(rule.base, rule.delta))
                dell = np.asarray(self.dlocal(rule.base, rule.delta))
            else:
                z, dz = _nodes(path, rule, cache)
                ell = np.asarray(self.func(z))
                dell = np.asarray(self.dfunc(z))
                dell = dell * dz.reshape((-1,) + (1,) * (dell.ndim - 1))
            cache[key] = (ell, dell)
        return cache[key]


def _nodes(path, rule, cache):
    if "nodes" not in cache:
        cache["nodes"] = path.at(rule)
    return cache["nodes"]


# ---------------------------------------------------------------------------
# algebra helpers (scalar or batched matrices)


def _is_matrix(v) -> bool:
    return np.ndim(v) >= 2


def _lift(v, like):
    """Promote nodal scalars to multiples of the identity when ``like`` is a matrix."""
    if _is_matrix(like) and not _is_matrix(v):
        v = np.asarray(v)
        eye = np.eye(like.shape[-1])
        return v.reshape(v.shape + (1, 1)) * eye if v.ndim else v * eye
    return v


def _mul(a, b):
    if _is_matrix(a) or _is_matrix(b):
        like = a if _is_matrix(a) else b
        return np.matmul(_lift(a, like), _lift(b, like))
    return a * b


def _charge_times(alpha, v):
    """alpha * v at every node, alpha a scalar or a (d, d) matrix."""
    if np.ndim(alpha) == 2:
        if not _is_matrix(v):
            v = np.asarray(v)
            return v.reshape(v.shape + (1, 1)) * alpha
        return np.matmul(alpha, v)
    return alpha * v


def _power(v, k: int, like):
    """Nodewise v**k in the algebra; unit when k = 0."""
    v = _lift(v, like)
    if _is_matrix(v):
        out = np.broadcast_to(np.eye(v.shape[-1], dtype=complex), v.shape).copy()
        for _ in range(k):
            out = np.matmul(out, v)
        return out
    return v**k


def _same_charge(a, b) -> bool:
    return np.shape(a) == np.shape(b) and np.allclose(a, b)


def _unit(like):
    if _is_matrix(like):
        return np.eye(like.shape[-1], dtype=complex)
    return 1.0 + 0j


# ---------------------------------------------------------------------------
# iterated integrals


def chen_march(rule: PanelRule, letters: Sequence[np.ndarray]):
    """int_{t1 < ... < tm} F_m(t_m) ... F_1(t_1) for nodal values F_j dt."""
    acc = rule.cumulative(letters[0])
    for f in letters[1:-1]:
        acc = rule.cumulative(_mul(f, acc))
    if len(letters) == 1:
        return rule.integrate(letters[0])
    return rule.integrate(_mul(letters[-1], acc))


def _reg_integral_on(path, forms, reg, rule, cache):
    n = len(forms)
    alpha = reg.charge
    ell, dell = reg.values(path, rule, cache)
    vals = [f.pullback(path, rule, cache) for f in forms]
    like = vals[0] if vals else ell
    if n == 0:
        return _unit(like)
    aell = _charge_times(alpha, ell)
    adl = _charge_times(alpha, dell)
    zero_charge = not np.any(np.asarray(alpha))
    total = 0
    for a in range(n):
        pa = _power(aell, a, like)
        first = vals[a] - _lift(adl, vals[a])
        # prefix marches shared by every b: acc[j] integrates letters a..a+j
        acc = None
        for b in range(n - a - 1, -1, -1):
            if zero_charge and (a or b):
                continue
            m = n - a - b
            coef = (-1) ** b / (math.factorial(a) * math.factorial(b))
            pb = _power(aell, b, like)
            last = vals[n - b - 1] - _lift(adl, vals[n - b - 1])
            if m == 1:
                term = rule.integrate(_mul(_mul(pb, first), pa))
            else:
                if acc is None:
                    acc = rule.cumulative(_mul(first, pa))
                    done = 1
                while done < m - 1:
                    acc = rule.cumulative(_mul(vals[a + done], acc))
                    done += 1
                term = rule.integrate(_mul(_mul(pb, last), acc))
            total = total + coef * term
    return total


def _check_charges(forms, reg):
    for f in forms:
        if not _same_charge(f.charge, reg.charge):
            raise ChargeMismatchError("all forms must carry the regulator's charge")


def reg_iterated_integral(
    path: SampledPath,
    forms: Sequence[RegForm],
    reg: Regulator,
    rule: Optional[PanelRule] = None,
    settings: Settings = DEFAULT,
    return_error: bool = False,
):
    """Regularized iterated integral of ``forms`` along ``path``.

    The empty word gives the unit. With ``return_error`` the result is
    ``(value, est_error)`` where the estimate compares against a coarser
    rule on the same panels.
    """
    _check_charges(forms, reg)
    if rule is None:
        rule = _rule_for(forms, reg, path, settings)
    value = _reg_integral_on(path, forms, reg, rule, {})
    if not return_error and not settings.quad_check:
        return value
    coarse = _reg_integral_on(path, forms, reg, rule.coarser(), {})
    est = float(np.max(np.abs(np.asarray(value) - np.asarray(coarse))))
    if est > settings.quad_fail:
        raise QuadratureError("iterated integral did not converge", est)
    return (value, est) if return_error else value


def _rule_for(forms, reg, path, settings):
    local = reg.local is not None and all(f.local is not None for f in forms)
    min_width = settings.quad_min_width if local else settings.quad_min_width_global
    return default_rule(settings, min_width, path.breaks)


def renormalized_holonomy(
    path: SampledPath,
    omega: RegForm,
    reg: Regulator,
    depth: int,
    rule: Optional[PanelRule] = None,
    settings: Settings = DEFAULT,
):
    """sum_{n <= depth} I^ell(omega, ..., omega) (the renormalized transport)."""
    _check_charges([omega], reg)
    if rule is None:
        rule = _rule_for([omega], reg, path, settings)
    cache: dict = {}
    total = _unit(omega.pullback(path, rule, cache))
    for n in range(1, depth + 1):
        total = total + _reg_integral_on(path, [omega] * n, reg, rule, cache)
    return total


def ibp_variation_check(
    path: SampledPath,
    forms: Sequence[RegForm],
    reg: Regulator,
    g: Sequence[tuple],
    psi: Sequence[RegForm],
    eps: Optional[float] = None,
    rule: Optional[PanelRule] = None,
    settings: Settings = DEFAULT,
) -> float:
    """|LHS - RHS| of the integration-by-parts variation identity.

    ``g`` is a list of pairs (g_i, dg_i/dz) of callables; ``psi`` the forms
    psi_{i,i+1}. The boundary term of the last form is taken at the end
    point of the path (for n = 1 this gives d/de I(omega + e dg) =
    g(end) - g(start)); in the elliptic application g_n takes equal values
    at both ends. The eps-derivative of I(omega_i + eps dg_i) is a central
    difference with one Richardson step.
    """
    n = len(forms)
    if len(g) != n or len(psi) != max(n - 1, 0):
        raise ValueError("need one g per form and one psi per adjacent pair")
    eps = settings.ibp_eps if eps is None else eps
    if rule is None:
        rule = _rule_for(list(forms) + list(psi), reg, path, settings)
    a, b = path.start, path.end
    ga = [complex(np.asarray(gi(np.array([a])))[0]) for gi, _ in g]
    gb = [complex(np.asarray(gi(np.array([b])))[0]) for gi, _ in g]
    _check_ibp_hypotheses(path, rule, forms, g, psi, ga, gb, settings)

    def varied(e):
        fs = [
            RegForm(func=(lambda z, f=f, dg=dg: np.asarray(f.func(z)) + e * np.asarray(dg(z))), charge=f.charge)
            for f, (_, dg) in zip(forms, g)
        ]
        return _reg_integral_on(path, fs, reg, rule, {})

    d1 = (varied(eps) - varied(-eps)) / (2 * eps)
    d2 = (varied(eps / 2) - varied(-eps / 2)) / eps
    lhs = (4 * d2 - d1) / 3
    cache: dict = {}
    rhs = 0
    if n >= 1:
        rhs = rhs - ga[0] * _reg_integral_on(path, list(forms[1:]), reg, rule, cache)
        rhs = rhs + gb[-1] * _reg_integral_on(path, list(forms[:-1]), reg, rule, cache)
    for i in range(n - 1):
        word = list(forms[:i]) + [psi[i]] + list(forms[i + 2:])
        rhs = rhs + (ga[i] - ga[i + 1]) * _reg_integral_on(path, word, reg, rule, cache)
    return float(np.max(np.abs(np.asarray(lhs - rhs))))


class PreconditionError(ValueError):
    pass


def _check_ibp_hypotheses(path, rule, forms, g, psi, ga, gb, settings):
    tol = settings.identity_tol * 100
    for i in range(len(forms) - 1):
        if abs((ga[i] - ga[i + 1]) - (gb[i] - gb[i + 1])) > tol:
            raise PreconditionError(f"g_{i + 1} - g_{i + 2} differs at the two endpoints")
    if not forms:
        return
    z, _ = path.at(rule)
    inner = (rule.delta > 1e-3)
    zz = z[inner][:: max(1, inner.sum() // 50)]
    for i in range(len(forms) - 1):
        lhs = g[i][0](zz) * forms[i + 1].func(zz) - g[i + 1][0](zz) * forms[i].func(zz)
        rhs = (ga[i] - ga[i + 1]) * psi[i].func(zz)
        scale = max(1.0, float(np.max(np.abs(rhs))))
        if np.max(np.abs(lhs - rhs)) > tol * scale:
            raise PreconditionError(f"g_i omega_(i+1) - g_(i+1) omega_i is not proportional to psi at i = {i + 1}")
