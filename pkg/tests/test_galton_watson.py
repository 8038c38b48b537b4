import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sebrw.galton_watson import (OffspringLaw, binary_T_pmf, build_cluster_cache, estimate_W, sample_T,
                                 simulate_Z, simulate_Z_batch)
from sebrw.rng import stream

CUSTOM = OffspringLaw.from_pmf({0: 0.25, 2: 0.75})


def test_binary_population():
    law = OffspringLaw.deterministic_binary()
    assert simulate_Z(law, 10, stream(0))[-1] == 1024
    assert law.m == 2.0 and law.deterministic


def test_law_validation():
    for pmf in ({0: 1.0}, {1: 1.0}, {0: 0.5, 2: 0.5}, {2: 0.5, 3: 0.4}):
        with pytest.raises(ValueError):
            OffspringLaw.from_pmf(pmf)
    with pytest.raises(ValueError):
        OffspringLaw((2, 2), (0.5, 0.5))


def test_extinction_probability_matches_quadratic_root():
    # q = 0.25 + 0.75 q^2 has smallest root 1/3
    assert CUSTOM.extinction_probability() == pytest.approx(1 / 3, abs=1e-12)
    assert OffspringLaw.deterministic_binary().extinction_probability() == 0.0


def test_mean_population():
    z5 = simulate_Z_batch(CUSTOM, 5, 100_000, stream(1, "gw-mean"))[:, -1]
    se = z5.std(ddof=1) / math.sqrt(z5.size)
    assert abs(z5.mean() - 1.5 ** 5) < 3 * se


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.05, 0.3), kmax=st.integers(5, 10))
def test_truncated_geometric_mean(p, kmax):
    law = OffspringLaw.truncated_geometric(p, kmax)
    w = np.array([(1 - p) ** k for k in range(kmax + 1)])
    assert law.m == pytest.approx(float((np.arange(kmax + 1) * w).sum() / w.sum()), rel=1e-12)


def test_W_deterministic_is_one():
    w = estimate_W(OffspringLaw.deterministic_binary(), 10, 50, stream(2))
    assert np.all(w == 1.0)


def test_W_mean_times_survival_is_one():
    # samples are conditioned on survival, so E[W | survival] P[survival] = E[W] = 1
    w = estimate_W(CUSTOM, 20, 20_000, stream(3, "W"))
    surv = 1 - CUSTOM.extinction_probability()
    se = w.std(ddof=1) / math.sqrt(w.size)
    assert abs(w.mean() * surv - 1.0) < 3 * se * surv


def test_W_variance_stable_between_generations():
    # same stream for both runs so the comparison isolates martingale convergence
    v20 = estimate_W(CUSTOM, 20, 20_000, stream(4, "Wvar")).var()
    v30 = estimate_W(CUSTOM, 30, 20_000, stream(4, "Wvar")).var()
    assert abs(v30 / v20 - 1) < 0.05


def test_binary_cluster_law():
    law = OffspringLaw.deterministic_binary()
    cache = build_cluster_cache(law)
    assert cache.upsilon == pytest.approx(2.0, rel=1e-9)
    assert binary_T_pmf(0) == 0.5 and binary_T_pmf(1) == 0.25
    assert cache.depth_probs[:3] == pytest.approx([0.5, 0.25, 0.125], rel=1e-9)


def test_binary_cluster_sizes_chi_square():
    law = OffspringLaw.deterministic_binary()
    cache = build_cluster_cache(law)
    t = sample_T(law, cache, stream(5, "T"), 100_000)
    assert np.all((t & (t - 1)) == 0)
    i = np.log2(t).astype(int)
    obs = np.bincount(np.minimum(i, 7), minlength=8)
    exp = np.array([binary_T_pmf(k) for k in range(7)] + [2.0 ** -7]) * t.size
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_custom_cluster_upsilon_against_direct_sum():
    cache = build_cluster_cache(CUSTOM)
    # P[Z_i > 0] = 1 - f^{(i)}(0) by iterating the generating function
    q, total = 0.0, 0.0
    for i in range(200):
        total += CUSTOM.m ** (-i) * (1 - q)
        q = float(CUSTOM.pgf(q))
    assert cache.upsilon == pytest.approx(total, rel=1e-8)
    t = sample_T(CUSTOM, cache, stream(6), 2000)
    assert np.all(t >= 1)
