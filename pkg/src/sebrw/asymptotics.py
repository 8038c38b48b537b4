"""Centring and scaling sequences and the large-deviation rate function."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cumulants import CumulantTable, K_eval
from .displacement import DomainError, TailSpec

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class BracketError(RuntimeError):
    """The root is not bracketed on the search interval."""


class ConvergenceError(RuntimeError):
    """An iterative solver did not meet its tolerance."""


def _R_at_edge(spec: TailSpec) -> float:
    u0 = max(spec.scale * spec.x0 + spec.shift, 0.0)
    return spec.lam * float(spec._g(u0, 0)) if u0 > 0 else 0.0


def solve_d_n(spec: TailSpec, n: float, m: float, rtol: float = 1e-12) -> float:
    """Smallest x with R(x) = n log m: bracketing, bisection, then Newton polish."""
    if not n > 0:
        raise ValueError("n must be positive")
    if not m > 1:
        raise ValueError("m must exceed 1")
    target = n * math.log(m)
    lo = spec.x0
    if _R_at_edge(spec) >= target:
        raise BracketError("R exceeds n log m already at the domain edge")
    hi = max(lo + 1.0, 1.0)
    for _ in range(4000):
        if spec.R(hi) >= target:
            break
        hi = lo + 2.0 * (hi - lo)
    else:
        raise BracketError("R does not reach n log m on the search interval")
    while hi - lo > 1e-6 * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if spec.R(mid) < target:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(100):
        step = (spec.R(x) - target) / spec.R(x, 1)
        x_new = min(max(x - step, lo), hi)
        if abs(x_new - x) <= rtol * 1e-3 * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    if abs(spec.R(x) - target) > 1e-10 * target:
        raise ConvergenceError("Newton polish failed for d_n")
    return x


def feasible_s_max(spec: TailSpec, table: CumulantTable, x: float, n: float) -> float:
    """Largest s in [0, 1] keeping x - n K'(s) inside the domain of R."""
    if not x > spec.x0:
        raise DomainError("x must exceed x0")

    def inside(s):
        return x - n * K_eval(table, s, 1) > spec.x0

    if inside(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return lo


def rate_objective(spec: TailSpec, table: CumulantTable, x: float, n: float, s):
    """R(x - n K'(s)) + n (s K'(s) - K(s))."""
    k1 = K_eval(table, s, 1)
    k0 = K_eval(table, s, 0)
    return spec.R(x - n * k1) + n * (np.asarray(s) * k1 - k0)


@dataclass(frozen=True)
class SStar:
    s: float
    residual: float
    iterations: int
    method: str          # "fixed_point", "boundary", "closed" (n = 0) or "grid"
    converged: bool


def _golden(f, a: float, b: float, tol: float) -> tuple[float, float]:
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    s = 0.5 * (a + b)
    return s, f(s)


def minimize_rate_objective(spec, table, x, n, grid: int = 257, tol: float = 1e-10):
    """Coarse grid to locate the global basin, then golden section inside it."""
    s_hi = feasible_s_max(spec, table, x, n)
    ss = np.linspace(0.0, s_hi, grid)
    vals = rate_objective(spec, table, x, n, ss)
    i = int(np.argmin(vals))
    a, b = ss[max(i - 1, 0)], ss[min(i + 1, grid - 1)]
    s, v = _golden(lambda t: float(rate_objective(spec, table, x, n, t)), a, b, tol)
    if vals[i] < v:
        s, v = float(ss[i]), float(vals[i])
    return s, v


def _residual(spec, table, x, n, s):
    y = x - n * K_eval(table, s, 1)
    if not y > spec.x0:
        return math.inf
    return abs(s - spec.R(y, 1))


def solve_s_star(spec: TailSpec, table: CumulantTable, x: float, n: float,
                 omega: float = 0.5, tol: float = 1e-12, maxiter: int = 10_000,
                 fallback: bool = True) -> SStar:
    """Fixed point of s = R'(x - n K'(s)) by damped iteration, clamped to [0, 1].

    Falls back to direct minimization of the rate objective when the iteration
    leaves the domain or stalls; the returned record says which route was used.
    """
    if not x > spec.x0:
        raise DomainError("x must exceed x0")
    if n == 0:
        return SStar(min(spec.R(x, 1), 1.0), 0.0, 0, "closed", True)
    s = min(spec.R(x, 1), 1.0)
    fail = "no convergence"
    for it in range(1, maxiter + 1):
        y = x - n * K_eval(table, s, 1)
        if not y > spec.x0:
            fail = "argument of R' fell below x0"
            break
        g = spec.R(y, 1)
        if abs(s - g) < tol:
            return SStar(s, abs(s - g), it, "fixed_point", True)
        s = min(max((1.0 - omega) * s + omega * g, 0.0), 1.0)
        if s == 1.0:
            y1 = x - n * K_eval(table, 1.0, 1)
            if y1 > spec.x0 and spec.R(y1, 1) >= 1.0:
                return SStar(1.0, 0.0, it, "boundary", True)
            fail = "iteration pinned at s = 1 outside the domain"
            break
    if not fallback:
        raise ConvergenceError(f"s* iteration failed: {fail}")
    s, _ = minimize_rate_objective(spec, table, x, n)
    return SStar(s, _residual(spec, table, x, n, s), maxiter, "grid", False)


@dataclass(frozen=True)
class RateValue:
    value: float
    s_star: float
    residual: float
    method: str
    golden_value: float | None = None
    golden_s: float | None = None
    discrepancy: float | None = None
    consistent: bool = True


def rate_I(spec: TailSpec, table: CumulantTable, x: float, n: float,
           cross_check: bool = True, atol: float = 1e-8) -> RateValue:
    """inf over s in [0,1] of R(x - nK'(s)) + n(sK'(s) - K(s)), evaluated at s*.

    With cross_check the value is compared with a grid-plus-golden-section
    minimum; a disagreement above `atol` is recorded and the smaller value kept.
    """
    st = solve_s_star(spec, table, x, n)
    value = float(rate_objective(spec, table, x, n, st.s))
    if not cross_check:
        return RateValue(value, st.s, st.residual, st.method)
    gs, gv = minimize_rate_objective(spec, table, x, n)
    disc = abs(value - gv)
    ok = disc <= atol
    if not ok and gv < value:
        value = gv
    return RateValue(value, st.s, st.residual, st.method, gv, gs, disc, ok)


def solve_tau_n(spec: TailSpec, table: CumulantTable, n: float, m: float,
                d_n: float | None = None, rtol: float = 1e-10) -> float:
    """Smallest z with Psi_n(z) = I(d_n + z) = R(d_n), by bisection."""
    d = solve_d_n(spec, n, m) if d_n is None else d_n
    target = spec.R(d)

    def psi(z):
        # the objective can have two local minima at small n, so always take the global one
        return rate_I(spec, table, d + z, n).value

    p0 = psi(0.0)
    if p0 > target * (1.0 + 1e-14):
        raise BracketError(f"Psi_n(0) = {p0} exceeds R(d_n) = {target}")
    if p0 >= target:
        return 0.0
    hi = max(n * spec.R(d, 1), 1e-12 * max(1.0, abs(d)))
    for _ in range(200):
        if psi(hi) >= target:
            break
        hi *= 2.0
    else:
        raise BracketError("Psi_n never reaches R(d_n)")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if psi(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def window_exponent(r: float, fraction: float = 0.9) -> float:
    return fraction * (2.0 - 1.0 / r) if r > 2.0 / 3.0 else fraction * (1.0 / r - 0.5)


@dataclass(frozen=True)
class CentringScaling:
    n: int
    m: float
    r: float
    d_n: float
    a_n: float
    tau_n: float
    b_n: float
    delta: float
    delta_n: float
    y_n: float
    w_n: float
    H_lo: float
    H_hi: float

    def rescale(self, v):
        """(v - b_n)/a_n"""
        return (np.asarray(v, dtype=float) - self.b_n) / self.a_n

    def as_dict(self) -> dict:
        return asdict(self)


def compute_scaling(spec: TailSpec, table: CumulantTable, n: int, m: float,
                    delta: float = 0.9, window_fraction: float = 0.9,
                    with_tau: bool = True) -> CentringScaling:
    r = spec.r
    if not 2.0 ** (-r) < delta < 1.0:
        raise ValueError(f"delta must lie in (2^-r, 1) = ({2.0 ** -r:.4f}, 1), got {delta}")
    d = solve_d_n(spec, n, m)
    Rd, R1 = spec.R(d), spec.R(d, 1)
    tau = solve_tau_n(spec, table, n, m, d_n=d) if with_tau else 0.0
    ln2 = math.log(n) ** 2
    if r <= 2.0 / 3.0 + 1e-12:
        y = d - ln2 * (d * d + n * Rd * Rd) / (d * Rd)
        w = d + ln2 / R1
    else:
        y = d - n * R1
        w = d + n * R1 / 3.0
    centre = d + n * R1 / 2.0
    z = n ** window_exponent(r, window_fraction)
    return CentringScaling(n=n, m=m, r=r, d_n=d, a_n=1.0 / R1, tau_n=tau, b_n=d + tau,
                           delta=delta, delta_n=delta * d, y_n=y, w_n=w,
                           H_lo=centre - z, H_hi=centre + z)


SCALING_COLUMNS = ("n", "d_n", "a_n", "tau_n", "b_n", "delta_n", "y_n", "w_n",
                   "H_lo", "H_hi", "s_star_at_b_n", "I_at_b_n")


def scaling_row(spec: TailSpec, table: CumulantTable, sc: CentringScaling) -> dict:
    """One CSV row; the rate at b_n carries its fixed-point/grid discrepancy."""
    rv = rate_I(spec, table, sc.b_n, sc.n)
    row = {k: getattr(sc, k) for k in SCALING_COLUMNS[:10]}
    row.update(s_star_at_b_n=rv.s_star, I_at_b_n=rv.value, I_discrepancy=rv.discrepancy)
    return row
