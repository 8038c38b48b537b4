"""Galton-Watson offspring laws, population sizes, the martingale limit W and cluster sizes T."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class PopulationCapExceeded(RuntimeError):
    pass


class ExcessiveExtinction(RuntimeError):
    pass


class LawKind(str, enum.Enum):
    DETERMINISTIC_BINARY = "DeterministicBinary"
    GEOMETRIC_TRUNCATED = "GeometricTruncated"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring law given as parallel tuples of counts and probabilities."""

    ks: tuple[int, ...]
    ps: tuple[float, ...]
    kind: LawKind = LawKind.CUSTOM
    m: float = field(init=False)

    def __post_init__(self):
        if len(self.ks) != len(self.ps) or not self.ks:
            raise ValueError("counts and probabilities must be nonempty and aligned")
        if any(k < 0 for k in self.ks) or len(set(self.ks)) != len(self.ks):
            raise ValueError("offspring counts must be distinct nonnegative integers")
        if any(p < 0 for p in self.ps):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(self.ps) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(self.ps)}, not 1")
        order = np.argsort(self.ks)
        object.__setattr__(self, "ks", tuple(int(self.ks[i]) for i in order))
        object.__setattr__(self, "ps", tuple(float(self.ps[i]) for i in order))
        object.__setattr__(self, "kind", LawKind(self.kind))
        m = sum(k * p for k, p in zip(self.ks, self.ps))
        if not m > 1.0:
            raise ValueError(f"offspring mean {m} is not supercritical")
        if dict(zip(self.ks, self.ps)).get(1, 0.0) >= 1.0:
            raise ValueError("P[Z_1 = 1] must be below 1")
        object.__setattr__(self, "m", m)

    @classmethod
    def from_pmf(cls, pmf: dict, kind=LawKind.CUSTOM) -> "OffspringLaw":
        items = sorted((int(k), float(p)) for k, p in pmf.items() if float(p) > 0)
        return cls(tuple(k for k, _ in items), tuple(p for _, p in items), kind)

    @classmethod
    def deterministic_binary(cls) -> "OffspringLaw":
        return cls((2,), (1.0,), LawKind.DETERMINISTIC_BINARY)

    @classmethod
    def truncated_geometric(cls, p: float, kmax: int) -> "OffspringLaw":
        """P[k] proportional to (1-p)^k p on {0, ..., kmax}."""
        w = np.array([(1 - p) ** k * p for k in range(kmax + 1)])
        w /= w.sum()
        return cls(tuple(range(kmax + 1)), tuple(w), LawKind.GEOMETRIC_TRUNCATED)

    @property
    def pmf(self) -> dict[int, float]:
        return dict(zip(self.ks, self.ps))

    @property
    def deterministic(self) -> bool:
        return len(self.ks) == 1

    @property
    def kesten_stigum(self) -> float:
        """E[Z_1 log+ Z_1]; finite for every finite-support law."""
        return sum(p * k * math.log(k) for k, p in zip(self.ks, self.ps) if k > 1)

    def pgf(self, s):
        s = np.asarray(s, dtype=float)
        return sum(p * s ** k for k, p in zip(self.ks, self.ps))

    def extinction_probability(self, tol: float = 1e-15) -> float:
        q = 0.0
        for _ in range(100_000):
            q_new = float(self.pgf(q))
            if abs(q_new - q) < tol:
                return q_new
            q = q_new
        return q

    def offspring_counts(self, u):
        """Map uniforms to offspring counts by inverting the cdf."""
        cdf = np.cumsum(self.ps)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="right")
        return np.asarray(self.ks, dtype=np.int64)[np.minimum(idx, len(self.ks) - 1)]


def next_generation(law: OffspringLaw, z, rng: np.random.Generator):
    """Z_{k+1} given Z_k (vectorized over replicas) via multinomial counts."""
    z = np.asarray(z, dtype=np.int64)
    if law.deterministic:
        return z * law.ks[0]
    counts = rng.multinomial(z, law.ps)
    return counts @ np.asarray(law.ks, dtype=np.int64)


def simulate_Z(law: OffspringLaw, n: int, rng: np.random.Generator, cap: float = 1e8) -> list[int]:
    """Z_0 = 1, ..., Z_n by forward simulation."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    zs = [1]
    for _ in range(n):
        z = int(next_generation(law, zs[-1], rng))
        if z > cap:
            raise PopulationCapExceeded(f"population {z} exceeds cap {cap:g}")
        zs.append(z)
    return zs


def simulate_Z_batch(law: OffspringLaw, n: int, replicas: int, rng: np.random.Generator,
                     cap: float = 1e8) -> np.ndarray:
    """Array of shape (replicas, n+1) of independent population paths."""
    out = np.empty((replicas, n + 1), dtype=np.int64)
    z = np.ones(replicas, dtype=np.int64)
    out[:, 0] = z
    for k in range(1, n + 1):
        z = next_generation(law, z, rng)
        if z.max(initial=0) > cap:
            raise PopulationCapExceeded(f"population {int(z.max())} exceeds cap {cap:g}")
        out[:, k] = z
    return out


def estimate_W(law: OffspringLaw, n: int, replicas: int, rng: np.random.Generator,
               max_extinct_fraction: float = 0.9, cap: float = 1e8) -> np.ndarray:
    """`replicas` draws of m^-n Z_n among runs with Z_n > 0, extinct runs discarded."""
    if law.deterministic:
        return np.full(replicas, 1.0)
    kept: list[np.ndarray] = []
    have = tried = 0
    batch = replicas
    while have < replicas:
        zn = simulate_Z_batch(law, n, batch, rng, cap)[:, -1]
        tried += batch
        alive = zn[zn > 0]
        if tried >= 1000 and 1.0 - (have + alive.size) / tried > max_extinct_fraction:
            raise ExcessiveExtinction(f"extinction fraction above {max_extinct_fraction}")
        kept.append(alive)
        have += alive.size
        batch = max(100, int(1.2 * (replicas - have) * tried / max(have, 1)))
    w = np.concatenate(kept)[:replicas].astype(float)
    return w / law.m ** n


@dataclass(frozen=True)
class ClusterLawCache:
    upsilon: float
    i_max: int
    survival: tuple[float, ...]      # P[Z_i > 0], i = 0..i_max
    depth_probs: tuple[float, ...]   # m^-i P[Z_i > 0] / upsilon


def build_cluster_cache(law: OffspringLaw, tol: float = 1e-10) -> ClusterLawCache:
    """upsilon = sum_i m^-i P[Z_i > 0], truncated where m^-i/(1 - 1/m) < tol."""
    m = law.m
    i_max = 0
    while m ** (-i_max) / (1.0 - 1.0 / m) >= tol:
        i_max += 1
    q, surv = 0.0, []
    for _ in range(i_max + 1):
        surv.append(1.0 - q)
        q = float(law.pgf(q))
    terms = np.array([m ** (-i) * s for i, s in enumerate(surv)])
    ups = float(terms.sum())
    return ClusterLawCache(ups, i_max, tuple(surv), tuple(terms / ups))


@dataclass
class TStats:
    draws: int = 0
    rejections: int = 0
    hit_truncation: int = 0


def sample_T(law: OffspringLaw, cache: ClusterLawCache, rng: np.random.Generator,
             size: int | None = None, stats: TStats | None = None):
    """Cluster sizes: depth i w.p. m^-i P[Z_i>0]/upsilon, then Z_i given Z_i > 0 by rejection."""
    nval = 1 if size is None else int(size)
    depths = rng.choice(cache.i_max + 1, size=nval, p=np.asarray(cache.depth_probs))
    out = np.empty(nval, dtype=np.int64)
    st = stats if stats is not None else TStats()
    st.draws += nval
    hits = int(np.sum(depths == cache.i_max))
    if hits:
        st.hit_truncation += hits
        warnings.warn(f"{hits} cluster depth draws reached the truncation depth {cache.i_max}")
    for i in np.unique(depths):
        sel = np.flatnonzero(depths == i)
        todo = sel
        while todo.size:
            z = np.ones(todo.size, dtype=np.int64)
            for _ in range(int(i)):
                z = next_generation(law, z, rng)
            ok = z > 0
            out[todo[ok]] = z[ok]
            st.rejections += int((~ok).sum())
            todo = todo[~ok]
    return int(out[0]) if size is None else out


def binary_T_pmf(i: int) -> float:
    """P[T = 2^i] = 2^-(i+1) for the deterministic binary law."""
    return 2.0 ** (-(i + 1))
