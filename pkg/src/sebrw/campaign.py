"""Replica fan-out for BRW runs and limit-process draws shared by the CLI and the acceptance suite."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import CentringScaling, compute_scaling
from .brw_sim import Exact, ExtremalWindow, Pruned, replica_summary
from .cumulants import CumulantTable
from .displacement import StdWeibullDisplacement
from .galton_watson import OffspringLaw, build_cluster_cache, estimate_W
from .limit_law import LimitProcessSample, sample_limit_process, t_sampler_for
from .rng import stream

log = logging.getLogger(__name__)


def _replica_batch(args):
    law, dist, scaling, seed, replicas, L, k_n, mode = args
    return [replica_summary(law, dist, scaling, seed, i, L, k_n, mode) for i in replicas]


def _batches(n_items: int, n_batches: int):
    size = max(1, math.ceil(n_items / n_batches))
    return [range(i, min(i + size, n_items)) for i in range(0, n_items, size)]


def run_replicas(law: OffspringLaw, dist: StdWeibullDisplacement, scaling: CentringScaling,
                 seed: int, replicas: int, L: float = -1.0, k_n: int | None = None,
                 mode: Exact | Pruned = Exact(), workers: int = 1) -> list[dict]:
    """Replica records in replica order; each replica depends only on (seed, index)."""
    if workers <= 1:
        return _replica_batch((law, dist, scaling, seed, range(replicas), L, k_n, mode))
    jobs = [(law, dist, scaling, seed, b, L, k_n, mode) for b in _batches(replicas, 4 * workers)]
    out: list[dict] = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_replica_batch, jobs):
            out.extend(part)
    return out


@dataclass
class BrwCampaign:
    """Replica records per generation n, with the scaling used to rescale them."""
    seed: int
    L: float
    scalings: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)

    def survivors(self, n: int) -> list[dict]:
        return [r for r in self.records[n] if not r["extinct"]]

    def windows(self, n: int) -> list[ExtremalWindow]:
        return [ExtremalWindow(r["window_L"], np.asarray(r["window"], dtype=float), r["max_rescaled"])
                for r in self.survivors(n)]


def run_campaign(law: OffspringLaw, dist: StdWeibullDisplacement, table: CumulantTable,
                 ns, replicas: int, seed: int, L: float = -1.0, k_n: int | None = None,
                 mode: Exact | Pruned = Exact(), delta: float = 0.9,
                 window_fraction: float = 0.9, workers: int = 1) -> BrwCampaign:
    camp = BrwCampaign(seed, L)
    for n in ns:
        sc = compute_scaling(dist.tail, table, n, law.m, delta, window_fraction)
        log.info("brw n=%d: %d replicas", n, replicas)
        camp.scalings[n] = sc
        camp.records[n] = run_replicas(law, dist, sc, seed, replicas, L, k_n, mode, workers)
    return camp


def limit_draws(law: OffspringLaw, a: float, count: int, L: float, seed: int, *labels,
                w_generations: int = 30) -> list[LimitProcessSample]:
    """`count` independent limit-process draws, each with its own W."""
    cache = build_cluster_cache(law)
    rng = stream(seed, "limit", *labels)
    W = estimate_W(law, w_generations, count, rng)
    ts = t_sampler_for(law, cache)
    return [sample_limit_process(a, float(w), cache.upsilon, ts, L, rng) for w in W]
