"""Cumulants, the polynomial cumulant generating function K, and truncated CGFs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_legendre

from .displacement import StdWeibullDisplacement, truncated_exp_moment


def kappa_for(r: float) -> int:
    """Cutoff order floor((2 - r)/(1 - r))."""
    return int(math.floor((2.0 - r) / (1.0 - r) + 1e-12))


@dataclass(frozen=True)
class CumulantTable:
    kappa: int
    k: tuple[float, ...]   # k[0] is k_1

    def __post_init__(self):
        if self.kappa < 2:
            raise ValueError("kappa must be at least 2")
        if len(self.k) != self.kappa:
            raise ValueError("need exactly kappa cumulants")

    def cumulant(self, j: int) -> float:
        return self.k[j - 1]

    @classmethod
    def gaussian(cls, kappa: int = 2) -> "CumulantTable":
        return cls(kappa, (0.0, 1.0) + (0.0,) * (kappa - 2))

    @classmethod
    def zero(cls, kappa: int = 2) -> "CumulantTable":
        return cls(kappa, (0.0,) * kappa)


def build_cumulants(moments, kappa: int) -> CumulantTable:
    """k_j = E[X^j] - sum_{i=1}^{j-1} C(j-1, i) k_{j-i} E[X^i], with k_1 = 0.

    `moments[j]` is E[X^j]; entry 0 is ignored.
    """
    if kappa < 2:
        raise ValueError("kappa must be at least 2")
    if len(moments) < kappa + 1:
        raise ValueError(f"need moments up to order {kappa}")
    mom = [float(v) for v in moments[: kappa + 1]]
    if not all(math.isfinite(v) for v in mom[1:]):
        raise ValueError("moments must be finite")
    if abs(mom[1]) > 1e-12:
        raise ValueError("the recursion assumes a centred variable (moments[1] = 0)")
    k = [0.0] * (kappa + 1)
    for j in range(2, kappa + 1):
        k[j] = mom[j] - sum(math.comb(j - 1, i) * k[j - i] * mom[i] for i in range(1, j))
    return CumulantTable(kappa, tuple(k[1:]))


def moments_from_cumulants(table: CumulantTable) -> list[float]:
    """Inverse relation E[X^j] = sum_{i=1}^{j} C(j-1, i-1) k_i E[X^{j-i}]."""
    mom = [1.0] + [0.0] * table.kappa
    for j in range(1, table.kappa + 1):
        mom[j] = sum(math.comb(j - 1, i - 1) * table.cumulant(i) * mom[j - i]
                     for i in range(1, j + 1))
    return mom


def cumulant_table(dist: StdWeibullDisplacement, kappa: int | None = None) -> CumulantTable:
    kappa = kappa_for(dist.r) if kappa is None else kappa
    return build_cumulants(dist.moments(kappa), kappa)


def K_eval(table: CumulantTable, s, order: int = 0):
    """sum_{j=2}^{kappa} k_j s^j / j! and its first two derivatives."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for j in range(table.kappa, 1, -1):
        p = j - order
        if p >= 0:
            out = out + table.cumulant(j) * s ** p / math.factorial(p)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def _truncated_nodes(lam: float, r: float, L: float, n_gl: int = 48):
    """Quadrature nodes for E[g(X) 1{X <= L}] written as int_0^{u_L} g(x(u)) e^{-u} du."""
    dist = StdWeibullDisplacement(lam, r)
    u_L = -dist.log_survival(L)
    if not u_L > 0:
        raise ValueError("L must exceed the lower edge of the support")
    edges = [0.0] + [2.0 ** k for k in range(-40, 3)]   # graded toward the u=0 endpoint
    u = 8.0
    while u < u_L:
        edges.append(u)
        u += 4.0
    edges = np.array([e for e in edges if e < u_L] + [u_L])
    t, w = roots_legendre(n_gl)
    a, b = edges[:-1, None], edges[1:, None]
    uu = (0.5 * (b - a) * t + 0.5 * (a + b)).ravel()
    ww = (0.5 * (b - a) * w).ravel() * np.exp(-uu)
    xx = dist.from_log_survival(-uu)
    return xx, ww, -math.expm1(-u_L)


def K_truncated(dist: StdWeibullDisplacement, L: float, s, order: int = 0, method: str = "nodes"):
    """Derivatives of K_L(s) = log E[e^{sX} | X <= L].

    method="nodes" (default) integrates in the Weibull exponent with composite
    Gauss-Legendre and carries e^{sX} - 1 through expm1, which keeps the tiny
    differences K_L - K resolvable in double precision. method="ibp" forms the
    same ratios from truncated_exp_moment and serves as a cross-check.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise ValueError("s must be nonnegative")
    if method == "ibp":
        P = 1.0 - float(dist.survival(L))
        vals = []
        for sv in s_arr:
            F = [truncated_exp_moment(dist, sv, -math.inf, L, power=k) / P for k in range(order + 1)]
            vals.append(_cgf_from_ratios(F, order))
        out = np.array(vals)
    elif method == "nodes":
        xx, ww, P = _truncated_nodes(dist.lam, dist.r, float(L))
        em1 = np.expm1(np.outer(s_arr, xx))                  # e^{sx} - 1
        eps0 = em1 @ ww / P                                   # E_L[e^{sX}] - 1
        if order == 0:
            out = np.log1p(eps0)
        else:
            f1 = (xx @ ww) / P + (em1 * xx) @ ww / P
            k1 = f1 / (1.0 + eps0)
            if order == 1:
                out = k1
            else:
                f2 = (xx * xx @ ww) / P + (em1 * xx * xx) @ ww / P
                out = f2 / (1.0 + eps0) - k1 * k1
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out[0]) if np.ndim(s) == 0 else out


def _cgf_from_ratios(F, order):
    if order == 0:
        return math.log(F[0])
    k1 = F[1] / F[0]
    if order == 1:
        return k1
    return F[2] / F[0] - k1 * k1


def chebyshev_grid(lo: float, hi: float, points: int = 64) -> np.ndarray:
    """Chebyshev-Lobatto points on [lo, hi], endpoints included."""
    j = np.arange(points)
    return lo + 0.5 * (hi - lo) * (1.0 - np.cos(np.pi * j / (points - 1)))


def truncation_gap_sup(dist: StdWeibullDisplacement, table: CumulantTable, L: float,
                       s_max: float, order: int, points: int = 64) -> float:
    """sup over a Chebyshev grid on [0, s_max] of |K_L^(i)(s) - K^(i)(s)|."""
    s = chebyshev_grid(0.0, s_max, points)
    gap = K_truncated(dist, L, s, order) - K_eval(table, s, order)
    return float(np.max(np.abs(gap)))
