"""Estimators of P[S_n > x] for sums of standardized Weibull variables.

Naive frequency, a one-big-jump conditional estimator, an exponentially tilted
importance sampler for the typical summands, and a lattice convolution oracle
for small n.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .asymptotics import CentringScaling, solve_s_star
from .cumulants import CumulantTable
from .displacement import StdWeibullDisplacement, truncated_exp_moment


class Estimator(str, enum.Enum):
    NAIVE = "Naive"
    ONE_BIG_JUMP = "OneBigJump"
    TILTED = "Tilted"
    ORACLE = "ConvolutionOracle"


class OracleError(RuntimeError):
    pass


@dataclass
class TailEstimate:
    estimator: Estimator
    n: int
    x: float
    p_hat: float
    se: float
    reps: int
    j: int = 0
    ess: float | None = None
    total: float | None = None       # sum of per-replica values (for merging)
    total_sq: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def log_p_hat(self) -> float:
        return math.log(self.p_hat) if self.p_hat > 0 else -math.inf

    @property
    def rel_se(self) -> float:
        return self.se / self.p_hat if self.p_hat > 0 else math.inf


def _from_values(est, n, x, values_sum, values_sq, reps, j=0, **kw) -> TailEstimate:
    p = values_sum / reps
    var = max(values_sq / reps - p * p, 0.0)
    return TailEstimate(est, n, x, p, math.sqrt(var / reps), reps, j=j,
                        total=values_sum, total_sq=values_sq, **kw)


def merge_estimates(parts: list[TailEstimate]) -> TailEstimate:
    """Combine shards additively in (sum, sum of squares, count)."""
    first = parts[0]
    if any(p.estimator != first.estimator or p.n != first.n or p.x != first.x or p.j != first.j
           for p in parts):
        raise ValueError("can only merge shards of the same estimate")
    reps = sum(p.reps for p in parts)
    tot = sum(p.total for p in parts)
    sq = sum(p.total_sq for p in parts)
    out = _from_values(first.estimator, first.n, first.x, tot, sq, reps, first.j)
    if first.estimator == Estimator.NAIVE and tot == 0:
        out.se = 3.0 / reps
    if "w_sum" in first.extra:
        ws = sum(p.extra["w_sum"] for p in parts)
        wq = sum(p.extra["w_sq"] for p in parts)
        out.ess = ws * ws / wq
        out.extra.update(w_sum=ws, w_sq=wq, weight_mean=ws / reps,
                         weight_mean_se=math.sqrt(max(wq / reps - (ws / reps) ** 2, 0.0) / reps))
    return out


def _chunks(reps: int, chunk: int):
    done = 0
    while done < reps:
        k = min(chunk, reps - done)
        yield k
        done += k


def naive_tail(dist: StdWeibullDisplacement, n: int, x: float, reps: int,
               rng: np.random.Generator, chunk: int = 100_000) -> TailEstimate:
    """Frequency of S_n > x; zero hits get the rule-of-three bound 3/reps as se."""
    if reps < 1 or n < 1:
        raise ValueError("need n >= 1 and reps >= 1")
    hits = 0
    for k in _chunks(reps, max(1, chunk // n)):
        s = dist.sample(rng, (k, n)).sum(axis=1)
        hits += int(np.count_nonzero(s > x))
    est = _from_values(Estimator.NAIVE, n, x, float(hits), float(hits), reps)
    if hits == 0:
        est.se = 3.0 / reps
    return est


def _one_big_jump_values(dist, n_eff, x, xs, mode, delta_n):
    # n_eff * P[X > max(M, x - S)] with the big jump integrated out
    if xs.shape[1] == 0:
        s = np.zeros(xs.shape[0])
        mx = np.full(xs.shape[0], -np.inf)
    else:
        s = xs.sum(axis=1)
        mx = xs.max(axis=1)
    if mode == "exact":
        return n_eff * dist.survival(np.maximum(mx, x - s)), s, mx
    return n_eff * dist.survival(x - s) * (mx <= delta_n), s, mx


def one_big_jump_tail(dist: StdWeibullDisplacement, n: int, x: float, reps: int,
                      rng: np.random.Generator, scaling: CentringScaling | None = None,
                      j: int = 0, mode: str = "exact", chunk: int = 200_000) -> TailEstimate:
    """Conditional estimator of P[S_{n-j} > x] with the largest summand integrated out.

    mode="exact" uses n' E[P[X > max(M_{n'-1}, x - S_{n'-1})]], n' = n - j, which
    is unbiased: the event splits by which summand is the strict maximum.
    mode="truncated" uses n' E[P[X > x - S_{n'-1}] 1{M_{n'-1} <= delta_n}].
    With a scaling, window diagnostics (N <= delta_n, x - S in [y_n, w_n]) are recorded.
    """
    n_eff = n - j
    if n_eff < 1 or reps < 1:
        raise ValueError("need n - j >= 1 and reps >= 1")
    if mode not in ("exact", "truncated"):
        raise ValueError("mode must be 'exact' or 'truncated'")
    if mode == "truncated" and scaling is None:
        raise ValueError("truncated mode needs a scaling for delta_n")
    delta_n = scaling.delta_n if scaling is not None else math.inf
    tot = sq = 0.0
    n_small = n_win = 0
    for k in _chunks(reps, max(1, chunk // max(n_eff - 1, 1))):
        xs = dist.sample(rng, (k, n_eff - 1)) if n_eff > 1 else np.empty((k, 0))
        v, s, mx = _one_big_jump_values(dist, n_eff, x, xs, mode, delta_n)
        tot += float(v.sum())
        sq += float((v * v).sum())
        if scaling is not None:
            n_small += int(np.count_nonzero(mx <= delta_n))
            gap = x - s
            n_win += int(np.count_nonzero((gap >= scaling.y_n) & (gap <= scaling.w_n)))
    est = _from_values(Estimator.ONE_BIG_JUMP, n, x, tot, sq, reps, j, extra={"mode": mode})
    if n_eff == 1:
        est.se = 0.0
    if scaling is not None:
        est.extra.update(frac_small_max=n_small / reps, frac_jump_window=n_win / reps)
    return est


class CappedTiltSampler:
    """Exact sampler for q(x) proportional to exp(s min(x, c)) f(x).

    [lower, c] is cut into pieces on which s * width <= max_step; a piece is
    chosen with weight e^{s * right edge} P[piece], X is drawn from f restricted
    to it (a truncated exponential in u = lam (sigma x + mu)^r) and accepted
    with probability e^{s (X - right edge)}. Above c the law is f itself.
    """

    def __init__(self, dist: StdWeibullDisplacement, s: float, cap: float, max_step: float = 0.05):
        if s < 0:
            raise ValueError("tilt must be nonnegative")
        self.dist, self.s, self.cap = dist, float(s), float(cap)
        lo = dist.lower
        pieces = max(1, math.ceil(s * max(cap - lo, 0.0) / max_step)) if cap > lo else 0
        if pieces > 200_000:
            raise ValueError("tilt too strong for the piecewise envelope")
        edges = np.linspace(lo, cap, pieces + 1) if pieces else np.array([lo])
        u = -dist.log_survival(edges)
        u[0] = 0.0
        self.u_edges = u
        self.right = edges[1:]
        self.u_cap = -dist.log_survival(max(cap, lo))
        # log P[piece] = -u_j + log(1 - e^{-(u_{j+1} - u_j)})
        logp = -u[:-1] + np.log(-np.expm1(-(u[1:] - u[:-1]))) if pieces else np.empty(0)
        logw = np.concatenate([s * self.right + logp, [s * max(cap, lo) - self.u_cap]])
        w = np.exp(logw - logw.max())
        self.cum = np.cumsum(w / w.sum())
        self.cum[-1] = 1.0
        if cap > lo:
            body = truncated_exp_moment(dist, s, -math.inf, cap, log=True)
            tail = s * cap - self.u_cap
            self.log_norm = float(np.logaddexp(body, tail))
        else:
            self.log_norm = 0.0
        self.proposed = 0
        self.accepted = 0

    def log_lr(self, xs):
        """log f/q per draw."""
        return self.log_norm - self.s * np.minimum(xs, self.cap)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty(size)
        todo = np.arange(size)
        npieces = self.right.size
        while todo.size:
            k = todo.size
            J = np.searchsorted(self.cum, rng.random(k), side="right")
            J = np.minimum(J, npieces)
            e = rng.random(k)
            tail = J == npieces
            Jb = np.minimum(J, max(npieces - 1, 0))
            if npieces:
                ua, ub = self.u_edges[Jb], self.u_edges[Jb + 1]
                u_in = ua - np.log1p(-e * (-np.expm1(-(ub - ua))))
            else:
                u_in = np.zeros(k)
            u = np.where(tail, self.u_cap - np.log(e), u_in)
            xs = self.dist.from_log_survival(-u)
            if npieces:
                acc = tail | (rng.random(k) < np.exp(self.s * (xs - self.right[Jb])))
            else:
                acc = np.ones(k, dtype=bool)
            self.proposed += k
            self.accepted += int(acc.sum())
            out[todo[acc]] = xs[acc]
            todo = todo[~acc]
        return out

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else math.nan


def tilted_tail(dist: StdWeibullDisplacement, table: CumulantTable, scaling: CentringScaling,
                n: int, x: float, reps: int, rng: np.random.Generator, s: float | None = None,
                j: int = 0, chunk: int = 100_000, ess_floor: float = 100.0) -> TailEstimate:
    """One-big-jump estimator with the typical summands drawn from a tilted law.

    The n - j - 1 typical summands come from q proportional to
    e^{s min(x, delta_n)} f(x), s = s*(x, n) by default. The tilt is capped at
    delta_n so the likelihood ratio stays bounded while q keeps full support,
    which keeps the estimator unbiased. Draws always have n - 1 columns so runs
    with different j on the same stream are paired.
    """
    n_eff = n - j
    if n_eff < 1 or reps < 1:
        raise ValueError("need n - j >= 1 and reps >= 1")
    if s is None:
        st = solve_s_star(dist.tail, table, x, n)
        s, s_method = st.s, st.method
    else:
        s_method = "given"
    if s == 0.0:
        est = one_big_jump_tail(dist, n, x, reps, rng, scaling=scaling, j=j, chunk=chunk)
        est.estimator = Estimator.TILTED
        est.ess = float(reps)
        est.extra.update(s=0.0, s_method=s_method, w_sum=float(reps), w_sq=float(reps),
                         weight_mean=1.0, weight_mean_se=0.0, acceptance=1.0)
        return est
    sampler = CappedTiltSampler(dist, s, scaling.delta_n)
    tot = sq = ws = wq = 0.0
    cols = n - 1
    for k in _chunks(reps, max(1, chunk // max(cols, 1))):
        xs = sampler.sample(rng, k * cols).reshape(k, cols)[:, : n_eff - 1]
        lw = sampler.log_lr(xs).sum(axis=1)
        w = np.exp(lw)
        v = w * _one_big_jump_values(dist, n_eff, x, xs, "exact", math.inf)[0]
        tot += float(v.sum())
        sq += float((v * v).sum())
        ws += float(w.sum())
        wq += float((w * w).sum())
    est = _from_values(Estimator.TILTED, n, x, tot, sq, reps, j)
    est.ess = ws * ws / wq
    est.extra.update(s=s, s_method=s_method, w_sum=ws, w_sq=wq, weight_mean=ws / reps,
                     weight_mean_se=math.sqrt(max(wq / reps - (ws / reps) ** 2, 0.0) / reps),
                     acceptance=sampler.acceptance_rate, log_norm=sampler.log_norm)
    if est.ess < ess_floor:
        est.extra["ess_collapse"] = True
        warnings.warn(f"effective sample size {est.ess:.1f} below {ess_floor}")
    return est


def _lattice_tail(dist: StdWeibullDisplacement, n: int, x: float, h: float) -> float:
    lo = dist.lower
    upper = x - (n - 1) * lo
    cells = int(math.ceil((upper - lo) / h)) + 1
    edges = lo + h * np.arange(cells + 1)
    ls = dist.log_survival(edges)
    mass = np.empty(cells + 1)
    # P[t_k < X <= t_{k+1}] = S(t_k) (1 - S(t_{k+1})/S(t_k)); the last cell collects all mass above
    mass[:cells] = np.exp(ls[:-1]) * -np.expm1(ls[1:] - ls[:-1])
    mass[cells] = math.exp(ls[-1])
    length = n * cells + 1
    nfft = 1 << (length - 1).bit_length()
    conv = np.fft.irfft(np.fft.rfft(mass, nfft) ** n, nfft)[:length]
    conv = np.maximum(conv, 0.0)
    k = np.arange(length)
    return float(conv[n * lo + h * (k + 0.5 * n) > x].sum())


def convolution_oracle(dist: StdWeibullDisplacement, n: int, x: float, rel_tol: float = 0.005,
                       h0: float | None = None, max_cells: int = 1 << 22) -> TailEstimate:
    """Tail of the n-fold convolution on a lattice, refined until halving h moves it < rel_tol.

    Cell masses are exact cdf differences; mass beyond x - (n-1)*lower is
    lumped into one cell, which is exact for the event S_n > x because any
    summand that large forces it. The se field holds the last h vs h/2 change.
    """
    if not 1 <= n <= 8:
        raise ValueError("the oracle supports 1 <= n <= 8")
    lo = dist.lower
    if x < n * lo:
        return TailEstimate(Estimator.ORACLE, n, x, 1.0, 0.0, 0)
    span = x - n * lo + 1.0
    h = h0 if h0 is not None else span / 2048
    prev = _lattice_tail(dist, n, x, h)
    while True:
        if (span / h) * 2 > max_cells:
            raise OracleError("lattice refinement limit reached before the tolerance was met")
        h *= 0.5
        cur = _lattice_tail(dist, n, x, h)
        change = abs(cur - prev)
        if change <= rel_tol * cur:
            return TailEstimate(Estimator.ORACLE, n, x, cur, change, 0, extra={"h": h})
        prev = cur


def asymptotic_ratio(estimate: TailEstimate, I_value: float, n: int | None = None) -> tuple[float, float]:
    """p_hat / (n e^{-I}) and its standard error."""
    if not estimate.p_hat > 0:
        raise ValueError("need a positive estimate")
    nn = estimate.n if n is None else n
    ratio = math.exp(estimate.log_p_hat - math.log(nn) + I_value)
    return ratio, ratio * estimate.rel_se


def with_ratio(estimate: TailEstimate, I_value: float) -> TailEstimate:
    ratio, rse = asymptotic_ratio(estimate, I_value)
    return replace(estimate, extra={**estimate.extra, "I_value": I_value, "ratio": ratio, "ratio_se": rse})
