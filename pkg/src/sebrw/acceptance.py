"""Acceptance checks, one function per criterion, each returning a CriterionResult."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import compute_scaling, rate_I, solve_d_n
from .brw_sim import is_power_of_two
from .campaign import BrwCampaign, limit_draws, run_campaign
from .cumulants import cumulant_table, truncation_gap_sup
from .displacement import StdWeibullDisplacement, TailSpec
from .galton_watson import OffspringLaw, build_cluster_cache
from .ldp_mc import convolution_oracle, naive_tail, one_big_jump_tail, tilted_tail
from .limit_law import (PiecewiseLinear, compare_extremes, gumbel_shift_cdf, ks_against_cdf,
                        laplace_functional, laplace_series, merge_samples, sample_limit_process,
                        t_sampler_for, void_probability)
from .rng import stream

CAMPAIGN_NS = (10, 15, 20)
CAMPAIGN_REPLICAS = 500
LLN_REPLICAS = 200
WINDOW_L = -1.0

TEST_FUNCTIONS = (
    PiecewiseLinear((-1.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
    PiecewiseLinear((0.0, 1.0, 2.0), (0.0, 0.5, 0.0)),
    PiecewiseLinear((-2.0, -1.0, 0.0, 1.0, 3.0), (0.0, 0.3, 2.0, 2.0, 0.0)),
)


@dataclass
class Check:
    name: str
    value: float
    bound: str
    ok: bool

    def as_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound, "ok": bool(self.ok)}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def check(self, name: str, value, bound: str, ok) -> bool:
        self.checks.append(Check(name, float(value), bound, bool(ok)))
        return bool(ok)

    def failed_checks(self) -> list:
        return [c for c in self.checks if not c.ok]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = f"criterion {self.number:>2} [{status}] {self.title} ({self.runtime:.1f}s)"
        bad = self.failed_checks()
        if bad:
            msg += "; failed: " + ", ".join(f"{c.name}={c.value:.4g} (need {c.bound})" for c in bad)
        return msg

    def as_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "runtime_s": round(self.runtime, 3), "checks": [c.as_dict() for c in self.checks],
                "details": self.details}


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def criterion_1() -> CriterionResult:
    res = CriterionResult(1, "d_n solver vs closed form")
    worst = 0.0
    with _Timer() as t:
        for r in (1 / 3, 1 / 2, 3 / 4):
            spec = TailSpec(r)
            for m in (1.5, 2.0):
                for n in (1, 10, 100, 1000, 10000):
                    exact = (math.log(m) * n) ** (1.0 / r)
                    worst = max(worst, abs(solve_d_n(spec, n, m) / exact - 1.0))
    res.runtime = t.elapsed
    res.check("max_rel_error", worst, "<= 1e-10", worst <= 1e-10)
    res.check("runtime_s", t.elapsed, "< 1", t.elapsed < 1.0)
    return res


def criterion_2(seed: int) -> CriterionResult:
    res = CriterionResult(2, "rate function: fixed point vs grid minimum")
    dist = StdWeibullDisplacement(1.0, 0.5)
    table = cumulant_table(dist)
    spec = dist.spec
    with _Timer() as t:
        for n in (10, 100):
            sc = compute_scaling(spec, table, n, 2.0, with_tau=False)
            xs = stream(seed, "criterion2", n).uniform(sc.H_lo, sc.H_hi, 100)
            disc, resid = [], []
            for x in xs:
                rv = rate_I(spec, table, float(x), n)
                disc.append(rv.discrepancy)
                resid.append(abs(rv.residual))
            res.check(f"max_discrepancy_n{n}", max(disc), "<= 1e-8", max(disc) <= 1e-8)
            res.check(f"max_residual_n{n}", max(resid), "< 1e-12", max(resid) < 1e-12)
    res.runtime = t.elapsed
    return res


def criterion_3(seed: int, naive_reps: int = 1_000_000, reps: int = 100_000) -> CriterionResult:
    res = CriterionResult(3, "estimators agree with the convolution oracle")
    dist = StdWeibullDisplacement(1.0, 0.5)
    table = cumulant_table(dist)
    rows = []
    with _Timer() as t:
        for n in (2, 4, 6):
            sc = compute_scaling(dist.tail, table, n, 2.0)
            for label, x in (("d_n", sc.d_n), ("d_n+a_n", sc.d_n + sc.a_n)):
                ref = convolution_oracle(dist, n, x)
                ests = {
                    "naive": naive_tail(dist, n, x, naive_reps, stream(seed, "c3", "naive", n, label)),
                    "one_big_jump": one_big_jump_tail(dist, n, x, reps, stream(seed, "c3", "obj", n, label)),
                    "tilted": tilted_tail(dist, table, sc, n, x, reps, stream(seed, "c3", "tilt", n, label)),
                }
                for name, e in ests.items():
                    tol = max(3.0 * math.hypot(e.se, ref.se), 0.05 * ref.p_hat)
                    err = abs(e.p_hat - ref.p_hat)
                    rows.append({"n": n, "x": label, "estimator": name, "p_hat": e.p_hat,
                                 "se": e.se, "oracle": ref.p_hat})
                    res.check(f"{name}_n{n}_{label}", err / tol, "<= 1 (error / allowed)", err <= tol)
    res.runtime = t.elapsed
    res.check("runtime_s", t.elapsed, "< 300", t.elapsed < 300)
    res.details["rows"] = rows
    return res


def criterion_4(seed: int, reps: int = 100_000) -> CriterionResult:
    res = CriterionResult(4, "tilted estimate over n e^{-I} stays bounded")
    dist = StdWeibullDisplacement(1.0, 0.5)
    table = cumulant_table(dist)
    spec = dist.tail
    ratios = {}
    with _Timer() as t, warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in (10, 20, 40):
            sc = compute_scaling(spec, table, n, 2.0, with_tau=False)
            I = rate_I(spec, table, sc.d_n, n).value
            logs = {}
            for j in ((0, 2, 4) if n == 40 else (0,)):
                e = tilted_tail(dist, table, sc, n, sc.d_n, reps, stream(seed, "c4", n), j=j)
                logs[j] = e.log_p_hat - math.log(n) + I
                if j == 0:
                    ratio = math.exp(logs[0])
                    ratios[n] = {"ratio": ratio, "rel_se": e.rel_se, "I": I}
                    res.check(f"ratio_n{n}", ratio, "in [0.3, 3]", 0.3 <= ratio <= 3.0)
                    res.check(f"rel_se_n{n}", e.rel_se, "<= 0.05", e.rel_se <= 0.05)
            if n == 40:
                R1 = spec.R(sc.d_n, 1)
                for j in (2, 4):
                    spread = abs(logs[j] - logs[0])
                    bound = 10.0 * j * R1 * R1
                    res.check(f"log_ratio_spread_j{j}", spread, f"<= {bound:.4g}", spread <= bound)
    res.runtime = t.elapsed
    res.details["ratios"] = ratios
    return res


def criterion_5() -> CriterionResult:
    res = CriterionResult(5, "n times truncated-CGF gap decreases")
    table_out = {}
    with _Timer() as t:
        for r in (1 / 3, 1 / 2):
            dist = StdWeibullDisplacement(1.0, r)
            table = cumulant_table(dist)
            scs = {n: compute_scaling(dist.tail, table, n, 2.0, with_tau=False) for n in (50, 100, 200, 400)}
            for i in (0, 1, 2):
                vals = [n * truncation_gap_sup(dist, table, sc.delta_n, dist.tail.R(sc.d_n, 1), i)
                        for n, sc in scs.items()]
                table_out[f"r={r:.4f},i={i}"] = vals
                dec = all(b < a for a, b in zip(vals, vals[1:]))
                worst = max(b / a for a, b in zip(vals, vals[1:]))
                res.check(f"decreasing_r{r:.3f}_i{i}", worst, "< 1 (largest successive ratio)", dec)
    res.runtime = t.elapsed
    res.check("runtime_s", t.elapsed, "< 60", t.elapsed < 60)
    res.details["n_times_gap"] = table_out
    return res


def binary_campaign(seed: int, workers: int = 1) -> BrwCampaign:
    """The shared BRW runs for criteria 6 to 9: binary tree, r = 1/2, n in {10, 15, 20}."""
    dist = StdWeibullDisplacement(1.0, 0.5)
    return run_campaign(OffspringLaw.deterministic_binary(), dist, cumulant_table(dist),
                        CAMPAIGN_NS, CAMPAIGN_REPLICAS, seed, WINDOW_L, workers=workers)


def criterion_6(camp: BrwCampaign, runtime: float) -> CriterionResult:
    res = CriterionResult(6, "M_n / d_n approaches 1")
    devs = []
    for n in CAMPAIGN_NS:
        surv = camp.survivors(n)[:LLN_REPLICAS]
        ratio = np.array([r["M_n"] for r in surv]) / camp.scalings[n].d_n
        devs.append(abs(float(ratio.mean()) - 1.0))
        res.details[f"n{n}"] = {"mean": float(ratio.mean()), "se": float(ratio.std(ddof=1) / math.sqrt(ratio.size)),
                                "replicas": len(surv)}
    res.check("decreasing", max(b / a for a, b in zip(devs, devs[1:])), "< 1 (largest successive ratio)",
              all(b < a for a, b in zip(devs, devs[1:])))
    res.check("deviation_n20", devs[-1], "<= 0.3", devs[-1] <= 0.3)
    res.check("runtime_s", runtime, "< 600", runtime < 600)
    res.runtime = runtime
    return res


def criterion_7(camp: BrwCampaign, runtime: float) -> CriterionResult:
    res = CriterionResult(7, "rescaled maximum vs exp(-2a e^{-x})")
    ks = {}
    for n in CAMPAIGN_NS:
        z = [r["max_rescaled"] for r in camp.survivors(n)]
        ks[n] = ks_against_cdf(z, 1.0, 2.0, [1.0])[0]
    res.details["ks"] = ks
    res.check("ks_n20", ks[20], "<= 0.15", ks[20] <= 0.15)
    res.check("ks_n20_minus_n10", ks[20] - ks[10], "< 0", ks[20] < ks[10])
    res.check("runtime_s", runtime, "< 900", runtime < 900)
    res.runtime = runtime
    return res


def criterion_8(camp: BrwCampaign, seed: int) -> CriterionResult:
    res = CriterionResult(8, "window counts and cluster multiplicity at the maximum")
    with _Timer() as t:
        law = OffspringLaw.deterministic_binary()
        lim = limit_draws(law, 1.0, CAMPAIGN_REPLICAS, WINDOW_L, seed, "criterion8")
        for n in CAMPAIGN_NS:
            surv = camp.survivors(n)
            rep = compare_extremes(camp.windows(n), lim, [r["multiplicity_at_max"] for r in surv])
            pow2 = float(np.mean([is_power_of_two(r["multiplicity_at_max"]) for r in surv]))
            res.details[f"n{n}"] = {"tests": rep["tests"], "power_of_two_fraction": pow2}
            if n == 20:
                p = next(x["p_value"] for x in rep["tests"] if x["test"] == "chi2_window_count")
                res.check("chi2_window_count_p_n20", p, "> 0.001", p > 0.001)
                res.check("power_of_two_fraction_n20", pow2, ">= 0.95", pow2 >= 0.95)
    res.runtime = t.elapsed
    return res


def criterion_9(camp: BrwCampaign) -> CriterionResult:
    res = CriterionResult(9, "trimming negligibility")
    anyB, h1 = {}, {}
    for n in CAMPAIGN_NS:
        surv = camp.survivors(n)
        anyB[n] = float(np.mean([r["trim"]["B"] > 0 for r in surv]))
        vals = [r["max_abs_H1_E_window"] for r in surv if r["max_abs_H1_E_window"] is not None]
        h1[n] = float(np.median(vals)) if vals else math.nan
    res.details.update(any_B_fraction=anyB, H1_median=h1)
    first, last = CAMPAIGN_NS[0], CAMPAIGN_NS[-1]
    res.check("any_B_fraction_n20", anyB[last], "<= 0.05", anyB[last] <= 0.05)
    res.check("any_B_fraction_n20_minus_n10", anyB[last] - anyB[first], "< 0", anyB[last] < anyB[first])
    res.check("H1_median_n20_minus_n10", h1[last] - h1[first], "< 0", h1[last] < h1[first])
    return res


def criterion_10(seed: int, samples: int = 20_000) -> CriterionResult:
    res = CriterionResult(10, "limit process internal consistency")
    law = OffspringLaw.deterministic_binary()
    cache = build_cluster_cache(law)
    ts = t_sampler_for(law, cache)
    ups = cache.upsilon
    with _Timer() as t:
        rng = stream(seed, "criterion10")
        L = min(f.knots[0] for f in TEST_FUNCTIONS)
        sam = [sample_limit_process(1.0, 1.0, ups, ts, L, rng) for _ in range(samples)]
        for x in (-1.0, 0.0, 1.0, 2.0):
            p, se = void_probability(sam, x)
            exact = float(gumbel_shift_cdf(1.0, ups, [1.0], x))
            res.check(f"void_x{x:g}", abs(p - exact) / se, "<= 3 SE", abs(p - exact) <= 3 * se)
        for k, f in enumerate(TEST_FUNCTIONS):
            v, se = laplace_functional(sam, f)
            exact, rem = laplace_series(1.0, 1.0, law, f)
            res.check(f"laplace_f{k}", abs(v - exact) / se, "<= 3 SE", abs(v - exact) <= 3 * se)
        # m independent copies shifted down by log m superpose to one copy
        other = [sample_limit_process(1.0, 1.0, ups, ts, L, rng) for _ in range(2 * samples)]
        merged = [merge_samples(a, b) for a, b in zip(other[::2], other[1::2])]
        shift = math.log(law.m)
        for x in (-1.0, 0.0, 1.0):
            p1, se1 = void_probability(sam, x)
            p2, se2 = void_probability(merged, x + shift)
            se = math.hypot(se1, se2)
            res.check(f"superposition_x{x:g}", abs(p1 - p2) / se, "<= 3 SE", abs(p1 - p2) <= 3 * se)
    res.runtime = t.elapsed
    res.check("runtime_s", t.elapsed, "< 60", t.elapsed < 60)
    return res


def run_acceptance(seed: int, workers: int = 1, only=None, progress=None) -> list[CriterionResult]:
    """Run the requested criteria (all by default) and return their results in order."""
    say = progress or (lambda msg: None)
    state = {}

    def camp():
        if "camp" not in state:
            t0 = time.perf_counter()
            state["camp"] = binary_campaign(seed, workers)
            state["time"] = time.perf_counter() - t0
        return state["camp"]

    runners = {
        1: criterion_1,
        2: lambda: criterion_2(seed),
        3: lambda: criterion_3(seed),
        4: lambda: criterion_4(seed),
        5: criterion_5,
        6: lambda: criterion_6(camp(), state["time"]),
        7: lambda: criterion_7(camp(), state["time"]),
        8: lambda: criterion_8(camp(), seed),
        9: lambda: criterion_9(camp()),
        10: lambda: criterion_10(seed),
    }
    out = []
    for k in sorted(set(only or runners)):
        if k not in runners:
            raise ValueError(f"no criterion {k}")
        say(f"criterion {k} running")
        r = runners[k]()
        say(r.line())
        out.append(r)
    return out
