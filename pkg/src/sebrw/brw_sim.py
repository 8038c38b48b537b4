"""Branching random walk: generation-by-generation simulation with ancestry metadata.

Each particle carries its position, its Ulam-Harris key, the largest and second
largest jump along its ancestral line, and the depth and key of the particle
v* where the largest jump happened (closest to the root on ties). That is
enough to classify particles into trimming classes for any threshold without
storing the tree.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import CentringScaling
from .displacement import StdWeibullDisplacement
from .galton_watson import OffspringLaw, PopulationCapExceeded
from .rng import child_keys, keyed_uniforms, root_key


class EmptyFrameError(ValueError):
    pass


@dataclass(frozen=True)
class Exact:
    cap: float = 1e8


@dataclass(frozen=True)
class Pruned:
    width: float

    def __post_init__(self):
        if not self.width >= 0:
            raise ValueError("pruning width must be nonnegative")


@dataclass
class GenerationFrame:
    n: int
    positions: np.ndarray
    keys: np.ndarray
    max_jump: np.ndarray
    second_jump: np.ndarray
    vstar_depth: np.ndarray
    vstar_key: np.ndarray
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    approximate: bool = False
    pruned: int = 0
    history: list | None = None

    @property
    def size(self) -> int:
        return int(self.positions.size)

    def big_jump_count(self, threshold: float) -> np.ndarray:
        """Number of ancestral jumps above threshold, capped at 2."""
        return (self.max_jump > threshold).astype(np.int8) + (self.second_jump > threshold)

    def _take(self, idx):
        for name in ("positions", "keys", "max_jump", "second_jump", "vstar_depth", "vstar_key"):
            setattr(self, name, getattr(self, name)[idx])
        for d in self.snapshots:
            self.snapshots[d] = self.snapshots[d][idx]


def simulate_brw(law: OffspringLaw, dist: StdWeibullDisplacement, n: int, seed: int,
                 replica: int = 0, mode: Exact | Pruned = Exact(),
                 record_depths=(), debug: bool = False) -> GenerationFrame:
    """Breadth-first simulation to generation n.

    Offspring counts and jumps come from keyed uniforms of each particle's
    path key, so the frame depends only on (seed, replica) and not on any
    traversal order. `record_depths` keeps, for each particle, the position
    of its ancestor at those depths.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if isinstance(mode, Exact) and law.m ** n > mode.cap:
        raise PopulationCapExceeded(f"expected population {law.m ** n:g} exceeds cap {mode.cap:g}")
    k0 = root_key(seed, replica)
    f = GenerationFrame(
        n=n,
        positions=np.zeros(1),
        keys=np.array([k0], dtype=np.uint64),
        max_jump=np.full(1, -np.inf),
        second_jump=np.full(1, -np.inf),
        vstar_depth=np.zeros(1, dtype=np.int16),
        vstar_key=np.array([k0], dtype=np.uint64),
        history=[] if debug else None,
    )
    depths = sorted(set(int(d) for d in record_depths if 0 <= d <= n))
    if 0 in depths:
        f.snapshots[0] = f.positions.copy()
    for gen in range(1, n + 1):
        if law.deterministic:
            counts = np.full(f.size, law.ks[0], dtype=np.int64)
        else:
            counts = law.offspring_counts(keyed_uniforms(f.keys, counter=1))
        total = int(counts.sum())
        if isinstance(mode, Exact) and total > mode.cap:
            raise PopulationCapExceeded(f"generation {gen} has {total} particles")
        parent = np.repeat(np.arange(f.size), counts)
        sib = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        ckeys = child_keys(f.keys[parent], sib)
        jumps = dist.from_uniform(keyed_uniforms(ckeys, counter=0))
        pm, ps = f.max_jump[parent], f.second_jump[parent]
        bigger = jumps > pm
        f.second_jump = np.where(bigger, pm, np.maximum(ps, jumps))
        f.max_jump = np.where(bigger, jumps, pm)
        f.vstar_depth = np.where(bigger, np.int16(gen), f.vstar_depth[parent])
        f.vstar_key = np.where(bigger, ckeys, f.vstar_key[parent])
        f.positions = f.positions[parent] + jumps
        f.keys = ckeys
        for d in f.snapshots:
            f.snapshots[d] = f.snapshots[d][parent]
        if gen in depths:
            f.snapshots[gen] = f.positions.copy()
        if debug:
            f.history.append((parent, jumps))
        if total == 0:
            break
        if isinstance(mode, Pruned) and math.isfinite(mode.width):
            keep = f.positions >= f.positions.max() - mode.width
            dropped = int(total - keep.sum())
            if dropped:
                f.pruned += dropped
                f.approximate = True
                f._take(keep)
                if debug:
                    f.history.append(("keep", np.flatnonzero(keep)))
    return f


def replay_jumps(frame: GenerationFrame, index: int) -> np.ndarray:
    """Ancestral jump sequence of one particle from the debug history."""
    if frame.history is None:
        raise ValueError("frame was not simulated with debug=True")
    jumps = []
    i = index
    for entry in reversed(frame.history):
        if isinstance(entry[0], str):
            i = int(entry[1][i])
            continue
        parent, jv = entry
        jumps.append(jv[i])
        i = int(parent[i])
    return np.array(jumps[::-1])


def max_position(frame: GenerationFrame) -> float:
    if frame.size == 0:
        raise EmptyFrameError("frame has no particles")
    return float(frame.positions.max())


@dataclass(frozen=True)
class ExtremalWindow:
    L: float
    points: np.ndarray               # rescaled positions >= L, descending
    max_point: float | None = None   # rescaled maximum of the whole frame

    @property
    def count(self) -> int:
        return int(self.points.size)

    @property
    def multiplicities(self) -> np.ndarray:
        return np.ones(self.points.size, dtype=np.int64)


def window_from_positions(positions, a_n: float, b_n: float, L: float) -> ExtremalWindow:
    z = (np.asarray(positions, dtype=float) - b_n) / a_n
    pts = np.sort(z[z >= L])[::-1]
    top = float(z.max()) if z.size else None
    return ExtremalWindow(L, pts, top)


def extract_window(frame: GenerationFrame, scaling: CentringScaling, L: float) -> ExtremalWindow:
    if frame.n != scaling.n:
        raise ValueError("frame generation does not match the scaling")
    return window_from_positions(frame.positions, scaling.a_n, scaling.b_n, L)


CLASS_NAMES = ("A", "B", "C", "D", "E")


@dataclass(frozen=True)
class TrimTally:
    A: int
    B: int
    C: int
    D: int
    E: int

    @property
    def remainder(self) -> int:
        return self.D + self.E

    @property
    def total(self) -> int:
        return self.A + self.B + self.C + self.D + self.E

    def as_dict(self) -> dict:
        return {"A": self.A, "B": self.B, "C": self.C, "D": self.D, "E": self.E}


def default_k_n(n: int, r: float, clamp: bool = True) -> int:
    """ceil((log n)^4) for r <= 2/3, ceil(n^(0.9(1-r))) otherwise; optionally clamped to n // 2."""
    if n <= 1:
        return 0
    k = math.ceil(math.log(n) ** 4) if r <= 2.0 / 3.0 + 1e-12 else math.ceil(n ** (0.9 * (1.0 - r)))
    return min(k, n // 2) if clamp else k


def trim_labels(frame: GenerationFrame, scaling: CentringScaling, k_n: int) -> np.ndarray:
    """Class index per particle: 0..4 for A..E."""
    delta = scaling.delta_n
    A = frame.max_jump <= delta
    B = frame.second_jump > delta
    C = ~A & ~B & (frame.max_jump <= scaling.y_n)
    rest = ~(A | B | C)
    E = rest & (frame.vstar_depth > frame.n - k_n)
    lab = np.full(frame.size, 3, dtype=np.int8)
    lab[A], lab[B], lab[C], lab[E] = 0, 1, 2, 4
    return lab


def classify_trim(frame: GenerationFrame, scaling: CentringScaling, k_n: int) -> TrimTally:
    c = np.bincount(trim_labels(frame, scaling, k_n), minlength=5)
    return TrimTally(*(int(v) for v in c))


def decomposition(frame: GenerationFrame, idx, k_n: int) -> dict:
    """V = H1 + T + X_v* + H2 split at depths k_n and n - k_n.

    Needs snapshots at k_n and n - k_n. The big jump is removed from whichever
    segment contains v*, so the four parts always add up to V.
    """
    n = frame.n
    idx = np.asarray(idx)
    V = frame.positions[idx]
    xv = frame.max_jump[idx]
    dv = frame.vstar_depth[idx]
    p_k = frame.snapshots[k_n][idx]
    p_nk = frame.snapshots[n - k_n][idx]
    h1 = p_k - np.where(dv <= k_n, xv, 0.0)
    t = p_nk - p_k - np.where((dv > k_n) & (dv <= n - k_n), xv, 0.0)
    h2 = V - p_nk - np.where(dv > n - k_n, xv, 0.0)
    return {"V": V, "H1": h1, "T": t, "X_vstar": xv, "H2": h2, "vstar_depth": dv}


def multiplicity_at_max(frame: GenerationFrame) -> int:
    """Number of generation-n particles whose largest ancestral jump is the maximizer's.

    When the top cluster descends from a single big-jump ancestor v*, this is
    the size of v*'s generation-n family (a power of m for deterministic laws).
    """
    i = int(np.argmax(frame.positions))
    return int(np.count_nonzero(frame.vstar_key == frame.vstar_key[i]))


def is_power_of_two(k: int) -> bool:
    return k > 0 and (k & (k - 1)) == 0


def replica_summary(law: OffspringLaw, dist: StdWeibullDisplacement, scaling: CentringScaling,
                    seed: int, replica: int, L: float = -1.0, k_n: int | None = None,
                    mode: Exact | Pruned = Exact()) -> dict:
    """One JSON-ready record per replica."""
    n = scaling.n
    k = default_k_n(n, dist.r) if k_n is None else k_n
    fr = simulate_brw(law, dist, n, seed, replica, mode, record_depths=(k, n - k))
    rec = {"replica": replica, "n": n, "Z_n": fr.size, "approximate": fr.approximate,
           "pruned": fr.pruned, "k_n": k}
    if fr.size == 0:
        rec.update(extinct=True)
        return rec
    win = extract_window(fr, scaling, L)
    lab = trim_labels(fr, scaling, k)
    tally = np.bincount(lab, minlength=5)
    i = int(np.argmax(fr.positions))
    dec = decomposition(fr, i, k)
    z = scaling.rescale(fr.positions)
    in_e = (lab == 4) & (z >= L)
    h1e = np.abs(decomposition(fr, np.flatnonzero(in_e), k)["H1"]) / scaling.a_n if in_e.any() else None
    rec.update(
        extinct=False,
        M_n=float(fr.positions[i]),
        max_rescaled=float(z[i]),
        window_L=L,
        window=[float(v) for v in win.points],
        window_count=win.count,
        trim=dict(zip(CLASS_NAMES, (int(v) for v in tally))),
        maximizer={"class": CLASS_NAMES[lab[i]], **{kk: float(vv) for kk, vv in dec.items()}},
        multiplicity_at_max=multiplicity_at_max(fr),
        maximizer_big_jumps=int(fr.big_jump_count(scaling.delta_n)[i]),
        max_abs_H1_E_window=None if h1e is None else float(h1e.max()),
    )
    return rec
