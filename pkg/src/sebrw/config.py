"""Experiment configuration: TOML in, validated dataclasses out."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import tomli

from .cumulants import CumulantTable, cumulant_table, kappa_for
from .displacement import StdWeibullDisplacement, TailSpec
from .galton_watson import OffspringLaw


class ConfigError(ValueError):
    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("invalid config:\n  " + "\n  ".join(self.messages))


@dataclass
class TailConfig:
    lam: float = 1.0
    r: float = 0.5
    delta: float = 0.9
    window_fraction: float = 0.9
    kappa: int | None = None        # None: floor((2-r)/(1-r))


@dataclass
class OffspringConfig:
    pmf: dict = field(default_factory=lambda: {"2": 1.0})


@dataclass
class AsymptoticsConfig:
    n_list: list = field(default_factory=lambda: [1, 10, 100, 1000, 10000])
    tail: str = "nominal"           # "nominal" (lam x^r) or "effective" (exact tail of the standardized X)


@dataclass
class LdpConfig:
    n_list: list = field(default_factory=lambda: [2, 4, 6])
    x_offsets: list = field(default_factory=lambda: [0.0, 1.0])   # x = d_n + c a_n
    j_list: list = field(default_factory=lambda: [0])
    naive_reps: int = 1_000_000
    obj_reps: int = 100_000
    tilted_reps: int = 100_000
    oracle: bool = True
    shards: int = 1


@dataclass
class BrwConfig:
    n_list: list = field(default_factory=lambda: [10, 15, 20])
    replicas: int = 500
    mode: str = "exact"             # "exact" or "pruned"
    cap: float = 1e8
    prune_width: float | None = None   # None: 2 d_n
    window_L: float = -1.0
    k_n: int | None = None          # None: default rule clamped to n // 2


@dataclass
class LimitConfig:
    samples: int = 500


@dataclass
class ExperimentConfig:
    seed: int = 20240611
    workers: int = 1
    out_dir: str = "runs/default"
    tail: TailConfig = field(default_factory=TailConfig)
    offspring: OffspringConfig = field(default_factory=OffspringConfig)
    asymptotics: AsymptoticsConfig = field(default_factory=AsymptoticsConfig)
    ldp: LdpConfig = field(default_factory=LdpConfig)
    brw: BrwConfig = field(default_factory=BrwConfig)
    limit: LimitConfig = field(default_factory=LimitConfig)

    def displacement(self) -> StdWeibullDisplacement:
        return StdWeibullDisplacement(self.tail.lam, self.tail.r)

    def tail_spec(self, which: str = "effective") -> TailSpec:
        d = self.displacement()
        return d.tail if which == "effective" else d.spec

    def cumulants(self) -> CumulantTable:
        return cumulant_table(self.displacement(), self.tail.kappa)

    def offspring_law(self) -> OffspringLaw:
        pmf = {int(k): float(v) for k, v in self.offspring.pmf.items()}
        law = OffspringLaw.from_pmf(pmf)
        if law.deterministic and law.ks == (2,):
            law = OffspringLaw.deterministic_binary()
        return law

    def hash(self) -> str:
        """Digest of everything that affects results (not workers or output location)."""
        d = asdict(self)
        d.pop("workers")
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {"tail": TailConfig, "offspring": OffspringConfig, "asymptotics": AsymptoticsConfig,
             "ldp": LdpConfig, "brw": BrwConfig, "limit": LimitConfig}


def config_from_dict(raw: dict) -> ExperimentConfig:
    errors = []
    kwargs = {}
    for key, val in raw.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                errors.append(f"{key}: expected a table")
                continue
            known = _SECTIONS[key].__dataclass_fields__
            bad = [k for k in val if k not in known]
            errors += [f"{key}.{k}: unknown field" for k in bad]
            kwargs[key] = _SECTIONS[key](**{k: v for k, v in val.items() if k in known})
        elif key in ("seed", "workers", "out_dir"):
            kwargs[key] = val
        else:
            errors.append(f"{key}: unknown field")
    if errors:
        raise ConfigError(errors)
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def load_config(path: str | os.PathLike | None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
        validate(cfg)
        return cfg
    with open(path, "rb") as fh:
        return config_from_dict(tomli.load(fh))


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_n_list(errors, name, ns, lo=1, hi=None):
    if not isinstance(ns, list) or not ns:
        errors.append(f"{name}: must be a nonempty list")
        return
    for v in ns:
        if not _is_int(v) or v < lo or (hi is not None and v > hi):
            bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            errors.append(f"{name}: entry {v!r} must be an integer {bound}")


def validate(cfg: ExperimentConfig) -> None:
    """Check every field against the preconditions of the code that consumes it."""
    e = []
    if not _is_int(cfg.seed) or not 0 <= cfg.seed < 2**64:
        e.append("seed: must be an integer in [0, 2^64)")
    if not _is_int(cfg.workers) or cfg.workers < 1:
        e.append("workers: must be a positive integer")
    t = cfg.tail
    if not (isinstance(t.r, (int, float)) and 0 < t.r < 1):
        e.append("tail.r: must lie in (0, 1)")
    if not (isinstance(t.lam, (int, float)) and t.lam > 0):
        e.append("tail.lam: must be positive")
    if isinstance(t.r, (int, float)) and 0 < t.r < 1 and not 2.0 ** (-t.r) < t.delta < 1:
        e.append(f"tail.delta: must lie in (2^-r, 1) = ({2.0 ** -t.r:.4f}, 1)")
    if not 0 < t.window_fraction < 1:
        e.append("tail.window_fraction: must lie in (0, 1)")
    if t.kappa is not None and (not _is_int(t.kappa) or t.kappa < 2):
        e.append("tail.kappa: must be an integer >= 2")
    try:
        pmf = {int(k): float(v) for k, v in cfg.offspring.pmf.items()}
        OffspringLaw.from_pmf(pmf)
    except (TypeError, ValueError, AttributeError) as exc:
        e.append(f"offspring.pmf: {exc}")
    _check_n_list(e, "asymptotics.n_list", cfg.asymptotics.n_list)
    if cfg.asymptotics.tail not in ("effective", "nominal"):
        e.append("asymptotics.tail: must be 'effective' or 'nominal'")
    L = cfg.ldp
    _check_n_list(e, "ldp.n_list", L.n_list)
    if not isinstance(L.x_offsets, list) or not L.x_offsets:
        e.append("ldp.x_offsets: must be a nonempty list")
    if not isinstance(L.j_list, list) or not L.j_list or any(not _is_int(j) or j < 0 for j in L.j_list):
        e.append("ldp.j_list: must be a nonempty list of nonnegative integers")
    elif isinstance(L.n_list, list) and L.n_list and all(_is_int(n) for n in L.n_list):
        if max(L.j_list) >= min(L.n_list):
            e.append("ldp.j_list: every j must be below every n")
    for name in ("naive_reps", "obj_reps", "tilted_reps", "shards"):
        v = getattr(L, name)
        if not _is_int(v) or v < 1:
            e.append(f"ldp.{name}: must be a positive integer")
    B = cfg.brw
    _check_n_list(e, "brw.n_list", B.n_list, lo=2)
    if not _is_int(B.replicas) or B.replicas < 1:
        e.append("brw.replicas: must be a positive integer")
    if B.mode not in ("exact", "pruned"):
        e.append("brw.mode: must be 'exact' or 'pruned'")
    if B.prune_width is not None and not B.prune_width > 0:
        e.append("brw.prune_width: must be positive")
    if B.k_n is not None and (not _is_int(B.k_n) or B.k_n < 0):
        e.append("brw.k_n: must be a nonnegative integer")
    if B.mode == "exact" and not e:
        m = cfg.offspring_law().m
        big = [n for n in B.n_list if m ** n > B.cap]
        if big:
            e.append(f"brw.n_list: expected population m^n exceeds brw.cap for n in {big}")
    if B.k_n is not None and isinstance(B.n_list, list) and any(_is_int(n) and 2 * B.k_n > n for n in B.n_list):
        e.append("brw.k_n: must not exceed n/2 for any n in brw.n_list")
    if not _is_int(cfg.limit.samples) or cfg.limit.samples < 100:
        e.append("limit.samples: must be an integer >= 100")
    if e:
        raise ConfigError(e)


def apply_overrides(cfg: ExperimentConfig, seed=None, workers=None, out=None, env=None) -> ExperimentConfig:
    """CLI flags win over environment variables, which win over the file."""
    env = os.environ if env is None else env
    if env.get("SEBRW_SEED"):
        cfg.seed = int(env["SEBRW_SEED"])
    if env.get("SEBRW_WORKERS"):
        cfg.workers = int(env["SEBRW_WORKERS"])
    if seed is not None:
        cfg.seed = seed
    if workers is not None:
        cfg.workers = workers
    if out is not None:
        cfg.out_dir = str(out)
    validate(cfg)
    return cfg


def dump_toml(cfg: ExperimentConfig) -> str:
    """Minimal TOML writer for the flat structure used here (None fields are omitted)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, list):
            return "[" + ", ".join(fmt(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{ " + ", ".join(f"{json.dumps(str(k))} = {fmt(x)}" for k, x in v.items()) + " }"
        return repr(v)

    d = asdict(cfg)
    lines = [f"{k} = {fmt(d[k])}" for k in ("seed", "workers", "out_dir")]
    for sec in _SECTIONS:
        lines.append(f"\n[{sec}]")
        lines += [f"{k} = {fmt(v)}" for k, v in d[sec].items() if v is not None]
    return "\n".join(lines) + "\n"


def write_default(path: str | os.PathLike) -> None:
    Path(path).write_text(dump_toml(ExperimentConfig()))
