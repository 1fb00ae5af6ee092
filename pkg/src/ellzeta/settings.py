"""Numeric configuration shared by every module.

A single immutable record carries tolerances and truncation parameters so
that a run is reproducible from its settings alone.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class Settings:
    # q-series
    q_tol: float = 1e-16
    q_cap: int = 400

    # branch tracking of log(-2 pi i theta)
    branch_samples_per_unit: int = 256
    branch_refine_jump: float = math.pi / 4
    branch_max_jump: float = math.pi / 2

    # panel quadrature for iterated integrals
    quad_nodes: int = 24
    quad_ratio: float = 1.0 / 3.0
    quad_min_width: float = 1e-28
    quad_tol: float = 1e-10
    quad_fail: float = 1e-6
    quad_check: bool = False
    # narrowest panel when integrands are only available as functions of z
    quad_min_width_global: float = 1e-13

    # kernel evaluation: Taylor expansion around lattice points
    taylor_terms: int = 40
    taylor_radius: float = 0.25

    # identity checks
    identity_tol: float = 1e-8
    ode_tol: float = 1e-5
    modular_tol: float = 1e-7
    fd_step: float = 1e-3
    ibp_eps: float = 1e-5

    # caps
    max_depth: int = 4
    max_d: int = 6
    max_weight: int = 8

    def with_(self, **kw) -> "Settings":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT = Settings()
