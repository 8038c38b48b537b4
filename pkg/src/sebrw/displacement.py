"""Stretched-exponential tails and the standardized Weibull displacement law."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma, gammaln


class DomainError(ValueError):
    """Argument outside the domain of a tail function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class Variant(str, enum.Enum):
    PURE_WEIBULL = "PureWeibull"
    WEIBULL_LOG = "WeibullLog"


@dataclass(frozen=True)
class TailSpec:
    """R(x) = lam * g(scale*x + shift), g(u) = u^r for PureWeibull and
    u^r * log(e + u)^p for WeibullLog.

    `scale` and `shift` default to the identity. They let the same object
    describe the exact tail of an affinely transformed Weibull variable,
    in which case x0 = -shift/scale may be negative.
    """

    r: float
    lam: float = 1.0
    a: float = 1.0
    x0: float = 0.0
    variant: Variant = Variant.PURE_WEIBULL
    p: float = 0.0
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0,1), got {self.r}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.scale * self.x0 + self.shift < -1e-12 * max(1.0, abs(self.shift)):
            raise ValueError("x0 lies below the zero of the affine argument")

    @property
    def log_exponent(self) -> float:
        return self.p if self.variant is Variant.WEIBULL_LOG else 0.0

    def _g(self, u, order):
        r, p = self.r, self.log_exponent
        if p == 0.0:
            if order == 0:
                return u ** r
            if order == 1:
                return r * u ** (r - 1)
            return r * (r - 1) * u ** (r - 2)
        e_u = math.e + u
        lg = np.log(e_u)
        base = u ** r * lg ** p
        if order == 0:
            return base
        # logarithmic derivative of g and its derivative
        ell = r / u + p / (e_u * lg)
        if order == 1:
            return base * ell
        dell = -r / u ** 2 - p * (lg + 1.0) / (e_u * lg) ** 2
        return base * (ell ** 2 + dell)

    def R(self, x, order: int = 0):
        """R and its first two derivatives; raises DomainError for x <= x0."""
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        xa = np.asarray(x, dtype=float)
        if np.any(~(xa > self.x0)):
            raise DomainError(f"R evaluated at or below x0={self.x0}")
        u = self.scale * xa + self.shift
        val = self.lam * self.scale ** order * self._g(u, order)
        return float(val) if np.ndim(val) == 0 else val


def R_eval(spec: TailSpec, x, order: int = 0):
    return spec.R(x, order)


@dataclass(frozen=True)
class RegularityReport:
    ok: bool
    d: float | None
    elasticity_min: float
    elasticity_max: float
    messages: tuple[str, ...] = ()


def check_regularity(spec: TailSpec, x_max: float = 1e8, points: int = 400) -> RegularityReport:
    """Grid check of the growth conditions through the elasticity x R'(x)/R(x).

    R(x) x^{-d} is decreasing exactly where the elasticity is below d, so the
    conditions reduce to bounds on the elasticity over the upper part of the grid.
    """
    lo = max(spec.x0, 0.0) + 1.0
    xs = np.geomspace(lo, x_max, points)
    R0, R1 = spec.R(xs, 0), spec.R(xs, 1)
    msgs = []
    if np.any(R1 <= 0) or np.any(np.diff(R0) <= 0):
        msgs.append("R is not increasing on the grid")
    el = xs * R1 / R0
    tail = el[points // 2:]
    emin, emax = float(tail.min()), float(tail.max())
    d = None
    if emax < 1.0:
        d = max(0.5 * (emax + 1.0), 0.5 * (spec.r + 1.0))
    else:
        msgs.append("no d in (r,1) makes R(x) x^-d decreasing")
    if spec.r > 2.0 / 3.0 and not (0.5 < emin and emax < 1.0):
        msgs.append("elasticity leaves (1/2, 1) on the tail")
    return RegularityReport(not msgs, d, emin, emax, tuple(msgs))


@dataclass(frozen=True)
class StdWeibullDisplacement:
    """X = (B - mu)/sigma with P[B > b] = exp(-lam b^r); mean 0, variance 1."""

    lam: float = 1.0
    r: float = 0.5
    spec: TailSpec = field(init=False)
    mu: float = field(init=False)
    sigma: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.r < 1.0 or not self.lam > 0:
            raise ValueError("need 0 < r < 1 and lam > 0")
        c = self.lam ** (-1.0 / self.r)
        g1 = gamma(1.0 + 1.0 / self.r)
        g2 = gamma(1.0 + 2.0 / self.r)
        object.__setattr__(self, "spec", TailSpec(r=self.r, lam=self.lam))
        object.__setattr__(self, "mu", c * g1)
        object.__setattr__(self, "sigma", c * math.sqrt(g2 - g1 * g1))

    @property
    def lower(self) -> float:
        """Left edge of the support of X."""
        return -self.mu / self.sigma

    @property
    def tail(self) -> TailSpec:
        """Exact tail of X: P[X > x] = exp(-lam (sigma x + mu)^r)."""
        return TailSpec(r=self.r, lam=self.lam, a=1.0, x0=self.lower,
                        scale=self.sigma, shift=self.mu)

    def log_survival(self, x):
        u = self.sigma * np.asarray(x, dtype=float) + self.mu
        out = -self.lam * np.maximum(u, 0.0) ** self.r
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, x):
        return np.exp(self.log_survival(x))

    def cdf(self, x):
        return -np.expm1(self.log_survival(x))

    def pdf(self, x):
        u = self.sigma * np.asarray(x, dtype=float) + self.mu
        pos = u > 0
        up = np.where(pos, u, 1.0)
        dens = self.sigma * self.lam * self.r * up ** (self.r - 1) * np.exp(-self.lam * up ** self.r)
        out = np.where(pos, dens, 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def from_uniform(self, u):
        """Inverse transform: B = (-log U / lam)^(1/r), X = (B - mu)/sigma."""
        b = (-np.log(u) / self.lam) ** (1.0 / self.r)
        return (b - self.mu) / self.sigma

    def from_log_survival(self, log_s):
        """Point x with log P[X > x] = log_s (log_s <= 0)."""
        b = (-np.asarray(log_s, dtype=float) / self.lam) ** (1.0 / self.r)
        return (b - self.mu) / self.sigma

    def sample(self, rng: np.random.Generator, size=None):
        return self.from_uniform(1.0 - rng.random(size))

    def base_moment(self, j: int) -> float:
        return math.exp(gammaln(1.0 + j / self.r) - (j / self.r) * math.log(self.lam))

    def raw_moment(self, j: int) -> float:
        """E[X^j] by binomial expansion of ((B - mu)/sigma)^j."""
        total = sum(math.comb(j, i) * self.base_moment(i) * (-self.mu) ** (j - i)
                    for i in range(j + 1))
        return total / self.sigma ** j

    def moments(self, kmax: int) -> list[float]:
        """[E[X^0], ..., E[X^kmax]] with the first two set exactly to 1 and 0."""
        out = [1.0, 0.0] + [self.raw_moment(j) for j in range(2, kmax + 1)]
        return out[: kmax + 1]


def _u_breakpoints(dist: StdWeibullDisplacement, lo: float, hi: float) -> list[float]:
    # geometric breakpoints in the Weibull exponent u = lam (sigma x + mu)^r
    pts = [lo]
    u_lo = max(-dist.log_survival(lo), 0.0)
    u_hi = -dist.log_survival(hi) if math.isfinite(hi) else math.inf
    u = max(u_lo, 1.0 / 64)
    while True:
        u *= 2.0
        if u >= u_hi:
            break
        x = float(dist.from_log_survival(-u))
        if x > pts[-1]:
            pts.append(x)
    pts.append(hi)
    return pts


def truncated_exp_moment(dist: StdWeibullDisplacement, h: float, A: float, B: float,
                         power: int = 0, log: bool = False, rtol: float = 1e-10):
    """E[X^power e^{hX} 1{A < X <= B}] via integration by parts against the survival function.

    With psi(t) = t^power e^{ht}:
        int_A^B psi'(t) P[X > t] dt + psi(A) P[X > A] - psi(B) P[X > B].
    The integrand is handled on the log scale: h t + log P[X > t] is convex, so
    its maximum over [A, B] sits at an endpoint and serves as the scaling constant.
    An empty interval returns 0. With log=True the log of the value is returned
    (requires a positive value).
    """
    if h < 0:
        raise ValueError("h must be nonnegative")
    lo = max(A, dist.lower)
    if not B > lo:
        return -math.inf if log else 0.0
    if not math.isfinite(B) and h > 0:
        return math.inf
    k = power

    def expo(t):
        return h * t + dist.log_survival(t)

    c = expo(lo) if not math.isfinite(B) else max(expo(lo), expo(B))

    def psi_scaled(t):
        if not math.isfinite(t):
            return 0.0
        return t ** k * math.exp(expo(t) - c)

    def integrand(t):
        poly = h * t ** k + (k * t ** (k - 1) if k > 0 else 0.0)
        return poly * math.exp(expo(t) - c)

    total, err = 0.0, 0.0
    if h > 0 or k > 0:
        pts = _u_breakpoints(dist, lo, B)
        for a_, b_ in zip(pts[:-1], pts[1:]):
            val, e = integrate.quad(integrand, a_, b_, epsabs=0.0, epsrel=rtol * 0.1, limit=200)
            total += val
            err += e
    total += psi_scaled(lo) - psi_scaled(B)
    scale_ref = max(abs(total), psi_scaled(lo), abs(psi_scaled(B)) * 1e-16, 1e-300)
    if err > 1e2 * rtol * scale_ref:
        raise QuadratureError(f"quadrature error {err:.3e} exceeds tolerance (value {total:.3e})")
    if log:
        if total <= 0:
            raise ValueError("log requested for a nonpositive moment")
        return c + math.log(total)
    try:
        return total * math.exp(c)
    except OverflowError:
        return math.copysign(math.inf, total)
