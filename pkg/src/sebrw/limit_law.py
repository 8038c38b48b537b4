"""The limiting cluster point process, its maximum, Laplace functionals and goodness-of-fit reports."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .galton_watson import ClusterLawCache, OffspringLaw, sample_T


@dataclass(frozen=True)
class LimitProcessSample:
    locations: np.ndarray          # cluster locations >= L, descending
    multiplicities: np.ndarray     # cluster sizes T_k
    W: float
    L: float
    max_location: float            # top cluster location, also when it lies below L
    max_multiplicity: int

    @property
    def count(self) -> int:
        """Points in the window counted with multiplicity."""
        return int(self.multiplicities.sum())

    @property
    def points(self) -> np.ndarray:
        return self.locations


TSampler = Callable[[np.random.Generator, int], np.ndarray]


def t_sampler_for(law: OffspringLaw, cache: ClusterLawCache) -> TSampler:
    return lambda rng, size: sample_T(law, cache, rng, size)


def sample_limit_process(a: float, W: float, upsilon: float, t_sampler: TSampler, L: float,
                         rng: np.random.Generator) -> LimitProcessSample:
    """Cluster centres iota_k + log(upsilon W), iota a Poisson process with intensity a e^{-x}.

    Centres in [L, inf) come from iota >= L' = L - log(upsilon W): a Poisson
    count with mass a e^{-L'} and locations L' + Exp(1). If the window is
    empty, the top centre is drawn from its law conditioned to lie below L',
    which by memorylessness of the Poisson arrivals is -log((a e^{-L'} + E)/a)
    with E ~ Exp(1).
    """
    if not (a > 0 and W > 0 and upsilon >= 1):
        raise ValueError("need a > 0, W > 0 and upsilon >= 1")
    shift = math.log(upsilon * W)
    Lp = L - shift
    mass = a * math.exp(-Lp) if math.isfinite(Lp) else (0.0 if Lp > 0 else math.inf)
    N = int(rng.poisson(mass)) if mass > 0 else 0
    if N:
        iota = np.sort(Lp + rng.standard_exponential(N))[::-1]
        mult = np.asarray(t_sampler(rng, N), dtype=np.int64)
        top, top_mult = float(iota[0] + shift), int(mult[0])
    else:
        iota = np.empty(0)
        mult = np.empty(0, dtype=np.int64)
        top = -math.log((mass + rng.standard_exponential()) / a) + shift
        top_mult = int(np.asarray(t_sampler(rng, 1))[0])
    return LimitProcessSample(iota + shift, mult, W, L, top, top_mult)


def draw_limit_max(a: float, upsilon: float, W_samples, rng: np.random.Generator) -> np.ndarray:
    """Maxima of the limit process: log(a upsilon W) + standard Gumbel, one per W draw."""
    w = np.asarray(W_samples, dtype=float)
    return np.log(a * upsilon * w) - np.log(rng.standard_exponential(w.size))


def gumbel_shift_cdf(a: float, upsilon: float, W_samples, x):
    """E[exp(-a upsilon W e^{-x})] averaged over the W draws."""
    w = np.asarray(W_samples, dtype=float)
    if w.size == 0 or np.any(w <= 0):
        raise ValueError("W samples must be nonempty and positive")
    xs = np.asarray(x, dtype=float)
    val = np.exp(-a * upsilon * np.multiply.outer(np.exp(-xs), w)).mean(axis=-1)
    return float(val) if xs.ndim == 0 else val


@dataclass(frozen=True)
class PiecewiseLinear:
    """Nonnegative continuous test function, linear between knots and zero outside them."""

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        k, v = np.asarray(self.knots, float), np.asarray(self.values, float)
        if k.size != v.size or not 2 <= k.size <= 16:
            raise ValueError("need 2 to 16 knots with one value each")
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must increase")
        if np.any(v < 0):
            raise ValueError("test function must be nonnegative")
        if v[0] != 0 or v[-1] != 0:
            raise ValueError("test function must vanish at its end knots")

    def __call__(self, x):
        return np.interp(x, self.knots, self.values, left=0.0, right=0.0)

    def scaled(self, c: float) -> "PiecewiseLinear":
        return PiecewiseLinear(self.knots, tuple(c * v for v in self.values))


def laplace_functional(samples: Sequence, f: PiecewiseLinear) -> tuple[float, float]:
    """Monte Carlo mean of exp(-sum_i mult_i f(loc_i)) and its standard error."""
    if not samples:
        raise ValueError("no samples")
    vals = np.empty(len(samples))
    for i, s in enumerate(samples):
        if f.knots[0] < s.L - 1e-12:
            raise ValueError("test function support extends below the window edge")
        vals[i] = math.exp(-float(np.dot(s.multiplicities, f(s.points))))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0


def laplace_series(a: float, W: float, law: OffspringLaw, f: PiecewiseLinear,
                   j_max: int = 40) -> tuple[float, float]:
    """exp(-a W sum_{j<=j_max} m^-j int (1 - e^{-Z_j f(x)}) e^{-x} dx) for a deterministic law.

    Returns the value and a bound on the log-scale truncation remainder.
    """
    if not law.deterministic:
        raise NotImplementedError("closed form implemented for deterministic offspring laws")
    k, m = law.ks[0], law.m
    knots = list(f.knots)
    vals = list(f.values)
    total = 0.0
    for j in range(j_max + 1):
        z = float(k) ** j
        piece = 0.0
        for lo, hi, v0, v1 in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
            # f is linear on the piece, so z f(x) + x = g0 + c (x - lo) and the integral is exact
            c = z * (v1 - v0) / (hi - lo) + 1.0
            w = hi - lo
            g_min = min(z * v0 + lo, z * v1 + hi)
            expo_part = math.exp(-g_min) * (-math.expm1(-abs(c) * w) / abs(c) if c != 0 else w)
            piece += (math.exp(-lo) - math.exp(-hi)) - expo_part
        total += m ** (-j) * piece
    support_mass = math.exp(-knots[0]) - math.exp(-knots[-1])
    remainder = a * W * m ** (-(j_max + 1)) / (1.0 - 1.0 / m) * support_mass
    return math.exp(-a * W * total), remainder


def void_probability(samples: Sequence[LimitProcessSample], x: float) -> tuple[float, float]:
    """Fraction of samples with no point in [x, inf) and its binomial standard error."""
    hit = np.array([s.max_location < x for s in samples], dtype=float)
    p = float(hit.mean())
    return p, math.sqrt(p * (1 - p) / hit.size)


def merge_samples(s1: LimitProcessSample, s2: LimitProcessSample) -> LimitProcessSample:
    """Superposition of two independent samples on a common window."""
    loc = np.concatenate([s1.locations, s2.locations])
    mult = np.concatenate([s1.multiplicities, s2.multiplicities])
    order = np.argsort(loc)[::-1]
    top = s1 if s1.max_location >= s2.max_location else s2
    return LimitProcessSample(loc[order], mult[order], s1.W + s2.W, max(s1.L, s2.L),
                              top.max_location, top.max_multiplicity)


COUNT_BINS = (0, 1, 2, 3, 4)          # last bin is 4+
MULT_EDGES = (1, 2, 3, 5, 9, 17)       # bins [1], [2], [3,4], [5,8], [9,16], [17, inf)


def _binned(values, edges) -> np.ndarray:
    idx = np.searchsorted(np.asarray(edges), np.asarray(values), side="right") - 1
    return np.bincount(np.clip(idx, 0, len(edges) - 1), minlength=len(edges))


def chi2_two_sample(a_counts, b_counts) -> tuple[float, float, int]:
    """Chi-square test of homogeneity on a 2 x k table, empty columns dropped."""
    table = np.vstack([a_counts, b_counts]).astype(float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 1.0, 0
    stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), float(p), int(dof)


def count_table(counts) -> np.ndarray:
    return _binned(counts, COUNT_BINS)


def _top(sample) -> float:
    # BRW windows carry max_point, limit samples max_location
    return sample.max_point if hasattr(sample, "max_point") else sample.max_location


def compare_extremes(windows: Sequence, limit_samples: Sequence[LimitProcessSample],
                     brw_multiplicities=None, min_samples: int = 100) -> dict:
    """Two-sample comparison of a window sample with limit-process draws on the same edge L.

    Tests: KS on the rescaled maximum, chi-square on window counts binned at
    {0,1,2,3,4+}, and chi-square on the multiplicity at the maximum.
    """
    if len(windows) < min_samples or len(limit_samples) < min_samples:
        raise ValueError(f"need at least {min_samples} samples on each side")
    Ls = {round(float(w.L), 12) for w in windows} | {round(float(s.L), 12) for s in limit_samples}
    if len(Ls) != 1:
        raise ValueError("window edges differ")
    tests = []
    bmax = np.array([_top(w) for w in windows], dtype=float)
    lmax = np.array([_top(s) for s in limit_samples], dtype=float)
    ks = stats.ks_2samp(bmax, lmax)
    tests.append({"test": "ks_max", "statistic": float(ks.statistic), "p_value": float(ks.pvalue)})
    ca = count_table([w.count for w in windows])
    cb = count_table([s.count for s in limit_samples])
    st, p, dof = chi2_two_sample(ca, cb)
    tests.append({"test": "chi2_window_count", "statistic": st, "p_value": p, "dof": dof,
                  "brw_table": ca.tolist(), "limit_table": cb.tolist()})
    if brw_multiplicities is None and hasattr(windows[0], "max_multiplicity"):
        brw_multiplicities = [w.max_multiplicity for w in windows]
    if brw_multiplicities is not None:
        ma = _binned(brw_multiplicities, MULT_EDGES)
        mb = _binned([s.max_multiplicity for s in limit_samples], MULT_EDGES)
        st, p, dof = chi2_two_sample(ma, mb)
        tests.append({"test": "chi2_multiplicity_at_max", "statistic": st, "p_value": p,
                      "dof": dof, "brw_table": ma.tolist(), "limit_table": mb.tolist()})
    return {"L": Ls.pop(), "n_brw": len(windows), "n_limit": len(limit_samples), "tests": tests}


def ks_against_cdf(values, a: float, upsilon: float, W_samples) -> tuple[float, float]:
    """One-sample KS distance and p-value against E[exp(-a upsilon W e^{-x})]."""
    res = stats.kstest(np.asarray(values, float), lambda x: gumbel_shift_cdf(a, upsilon, W_samples, x))
    return float(res.statistic), float(res.pvalue)
