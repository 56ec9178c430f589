"""Seeded multi-run campaigns comparing allocation strategies.

Every run draws one model pool and hands the identical pool (and, for
synthetic data, identical noise) to each strategy, so per-run relative
metrics against plain Successive Halving are paired.
"""
from __future__ import annotations

import concurrent.futures as cf
import csv
import enum
import hashlib
import io
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import allocator, synthgen
from .allocator import AllocConfig, Surrogate
from .curves import CurveSet, ModelSpec, read_curves, write_curves
from .scaling_law import PowerScalingLaw, abc, law_from_curves
from .sources import RecordedCurveSource, SyntheticCurveSource
from .synthgen import NoiseConfig

PETA = 10**15
# Losses within this relative gap count as equal (leftover-budget bonuses
# shift otherwise identical allocations by ~1e-7).
EQUAL_RTOL = 1e-6


class Strategy(str, enum.Enum):
    UA = "UA"
    SH = "SH"
    SH_LMC = "SH_LMC"
    SH_DE_PL = "SH_DE_PL"
    SH_DE_EXP = "SH_DE_EXP"
    SH_DE_MMF = "SH_DE_MMF"

    @property
    def surrogate(self) -> Surrogate:
        return {
            "UA": Surrogate.NONE,
            "SH": Surrogate.NONE,
            "SH_LMC": Surrogate.LMC,
            "SH_DE_PL": Surrogate.DE_PL,
            "SH_DE_EXP": Surrogate.DE_EXP,
            "SH_DE_MMF": Surrogate.DE_MMF,
        }[self.value]


SYNTHETIC = {"SyntheticHoffmann": "hoffmann", "SyntheticBesiroglu": "besiroglu"}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "SyntheticHoffmann"  # or "RecordedFile:<path>"
    pool_sizes: tuple = (5,)
    budgets: tuple = (1e4,)  # petaFLOPs
    strategies: tuple = ("SH", "SH_LMC", "UA")
    runs: int = 100
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    region: tuple | None = None
    base_seed: int = 0
    eta: int = 2
    points_per_curve: int = 20
    gp_restarts: int = 20
    gp_max_iter: int = 500
    gp_ftol: float = 1e-9
    de_iterations: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "pool_sizes", tuple(int(m) for m in self.pool_sizes))
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        object.__setattr__(self, "strategies", tuple(Strategy(s) for s in self.strategies))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseConfig(**self.noise))
        if self.region is not None:
            object.__setattr__(self, "region", (float(self.region[0]), float(self.region[1])))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.pool_sizes or not self.budgets:
            raise ValueError("pool_sizes and budgets must be non-empty")
        if any(m < 1 for m in self.pool_sizes) or any(b <= 0 for b in self.budgets):
            raise ValueError("pool sizes and budgets must be positive")
        if not (self.dataset in SYNTHETIC or self.dataset.startswith("RecordedFile:")):
            raise ValueError(f"unknown dataset {self.dataset!r}")

    @property
    def recorded_path(self) -> str | None:
        return self.dataset.split(":", 1)[1] if self.dataset.startswith("RecordedFile:") else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategies"] = [s.value for s in self.strategies]
        d["noise"] = {**asdict(self.noise), "kind": self.noise.kind.value}
        d["pool_sizes"], d["budgets"] = list(self.pool_sizes), list(self.budgets)
        d["region"] = list(self.region) if self.region else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


# ------------------------------------------------------------------ metrics

def relative_improvement(l_sh: float, l_surr: float) -> float:
    """(l_sh - l_surr) / l_sh; positive when the other strategy is better."""
    if not l_sh > 0:
        raise ValueError("l_sh must be > 0")
    return (l_sh - l_surr) / l_sh


def regret(obtained: float, oracle: float | None, tol: float = 1e-6) -> float:
    """obtained - oracle, clipped at 0 within ``tol`` (relative).

    Leftover-budget bonuses can push a model marginally past the oracle
    horizon, hence the tolerance.
    """
    if oracle is None or not np.isfinite(oracle):
        raise ValueError("oracle unavailable")
    gap = obtained - oracle
    if gap < -tol * abs(oracle):
        raise ValueError(f"obtained loss {obtained} is below the oracle {oracle}")
    return max(gap, 0.0)


def cost_saving(budget: float, full_training_cost: float) -> float:
    """1 - budget / full cost; warns (and goes negative) if the budget is larger."""
    if not full_training_cost > 0:
        raise ValueError("full_training_cost must be > 0")
    if full_training_cost < budget:
        warnings.warn("budget exceeds the full training cost", RuntimeWarning, stacklevel=2)
    return 1.0 - budget / full_training_cost


def pool_hash(models) -> str:
    key = ";".join(f"{m.id}:{m.n_params}" for m in sorted(models, key=lambda m: m.id))
    return hashlib.sha1(key.encode()).hexdigest()[:12]


def run_seed(base_seed: int, m0: int, budget_pf: float, run: int) -> int:
    ss = np.random.SeedSequence([int(base_seed), int(m0), int(round(budget_pf * 1000)), int(run)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


# --------------------------------------------------------------- campaign

@dataclass
class RunResult:
    m0: int
    budget: float
    strategy: str
    run: int
    seed: int
    pool_hash: str
    loss: float = math.nan
    selected: str | None = None
    spent: int = 0
    oracle: float = math.nan
    oracle_model: str | None = None
    full_cost: float = math.nan
    abc_full: float = math.nan
    abc_entire: float = math.nan
    error: str | None = None


@dataclass
class CellStats:
    m0: int
    budget: float
    strategy: str
    runs: int
    failures: int
    mean_loss: float
    std_loss: float
    eligible: int
    rel_mean: float
    rel_max: float
    rel_min: float
    worse_mean: float
    wins: int
    equal: int
    losses: int
    mean_regret: float
    mean_spent: float
    cost_saving: float
    abc_full: float
    abc_entire: float


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    results: list
    cells: list

    def cell(self, m0, budget, strategy) -> CellStats:
        for c in self.cells:
            if c.m0 == m0 and c.budget == float(budget) and c.strategy == Strategy(strategy).value:
                return c
        raise KeyError((m0, budget, strategy))


def _make_source(config: ExperimentConfig, budget_flops: int, seed: int, recorded: CurveSet | None):
    if recorded is not None:
        return RecordedCurveSource(recorded)
    params = synthgen.preset(SYNTHETIC[config.dataset])
    c_max = max(float(budget_flops), config.region[1] if config.region else 0.0)
    return SyntheticCurveSource(params, c_max, config.noise, seed=seed)


def _sample_pool(config, rng, m0, recorded):
    if recorded is not None:
        models = recorded.models
        if m0 > len(models):
            raise ValueError(f"pool of {m0} exceeds the {len(models)} recorded curves")
        idx = rng.choice(len(models), size=m0, replace=False)
        return [models[i] for i in sorted(idx)]
    return [ModelSpec(f"n{n}", n) for n in synthgen.sample_model_sizes(rng, m0)]


def _truth_laws(config, source, pool, recorded):
    """Full-data and entire-LC laws, or None if the region is not covered."""
    if recorded is not None:
        full_set, entire_set = recorded, recorded.subset([m.id for m in pool])
    else:
        every = [ModelSpec(f"n{2**e}", 2**e) for e in synthgen.SIZE_EXPONENTS]
        full_set = CurveSet([c for c in (source.curve(m, source.c_max) for m in every) if len(c)])
        entire_set = CurveSet([source.curve(m, source.c_max) for m in pool])
    try:
        return law_from_curves(full_set, config.region), law_from_curves(entire_set, config.region)
    except ValueError:
        return None


def execute_run(config: ExperimentConfig, m0: int, budget_pf: float, run: int, recorded: CurveSet | None = None):
    """All strategies on one paired pool; returns a list of RunResult."""
    seed = run_seed(config.base_seed, m0, budget_pf, run)
    rng = np.random.default_rng(seed)
    B = int(round(budget_pf * PETA))
    pool = _sample_pool(config, rng, m0, recorded)
    source = _make_source(config, B, seed, recorded)
    ph = pool_hash(pool)
    horizon = allocator.full_survival_horizon(m0, B, config.eta)
    if recorded is not None:
        oracles = {m.id: source.oracle(m) for m in pool}
        full_cost = float(sum(source.full_compute(m) for m in pool))
    else:
        oracles = {m.id: source.oracle(m, horizon) for m in pool}
        full_cost = float(m0 * source.c_max)
    oracle_model = min(pool, key=lambda m: (oracles[m.id], m.n_params, m.id)).id
    truth = _truth_laws(config, source, pool, recorded) if config.region is not None else None
    out = []
    for strat in config.strategies:
        res = RunResult(m0, budget_pf, strat.value, run, seed, ph, oracle=oracles[oracle_model],
                        oracle_model=oracle_model, full_cost=full_cost)
        acfg = AllocConfig(
            B, config.eta, strat.surrogate, config.points_per_curve, seed,
            gp_restarts=config.gp_restarts, gp_max_iter=config.gp_max_iter, gp_ftol=config.gp_ftol,
            de_iterations=config.de_iterations,
        )
        try:
            runner = allocator.run_uniform if strat is Strategy.UA else allocator.run_sh
            trace = runner(pool, acfg, source)
            res.loss, res.selected, res.spent = trace.min_loss, trace.selected, trace.spent
            if truth is not None:
                try:
                    law = law_from_curves(trace.final_curves, config.region)
                    res.abc_full = abc(law, truth[0], config.region)
                    res.abc_entire = abc(law, truth[1], config.region)
                except ValueError:
                    pass
        except Exception as exc:  # recorded in the report, excluded from means
            res.error = f"{type(exc).__name__}: {exc}"
        out.append(res)
    return out


def _nanmean(vals):
    vals = [v for v in vals if np.isfinite(v)]
    return float(np.mean(vals)) if vals else math.nan


def summarize(config: ExperimentConfig, results: list) -> list[CellStats]:
    cells = []
    by_key = {}
    for r in results:
        by_key.setdefault((r.m0, r.budget, r.run), {})[r.strategy] = r
    for m0 in config.pool_sizes:
        for b in config.budgets:
            runs = [by_key.get((m0, b, i), {}) for i in range(config.runs)]
            for strat in config.strategies:
                mine = [d.get(strat.value) for d in runs]
                ok = [r for r in mine if r is not None and r.error is None]
                losses = np.array([r.loss for r in ok])
                rel, wins, equal, lost = [], 0, 0, 0
                for d in runs:
                    r, sh = d.get(strat.value), d.get("SH")
                    if r is None or sh is None or r.error or sh.error:
                        continue
                    x = relative_improvement(sh.loss, r.loss)
                    if abs(x) <= EQUAL_RTOL:
                        equal += 1
                    elif x > 0:
                        wins += 1
                    else:
                        lost += 1
                    if sh.selected != sh.oracle_model:
                        rel.append(x)
                rel = np.array(rel)
                neg = rel[rel < -1e-9]
                regrets = [regret(r.loss, r.oracle, tol=math.inf) for r in ok]
                cells.append(
                    CellStats(
                        m0, b, strat.value, len(mine), len(mine) - len(ok),
                        float(losses.mean()) if ok else math.nan,
                        float(losses.std()) if ok else math.nan,
                        int(rel.size),
                        float(rel.mean()) if rel.size else 0.0,
                        float(rel.max()) if rel.size else 0.0,
                        float(rel.min()) if rel.size else 0.0,
                        float(neg.mean()) if neg.size else 0.0,
                        wins, equal, lost,
                        float(np.mean(regrets)) if regrets else math.nan,
                        float(np.mean([r.spent for r in ok])) if ok else math.nan,
                        cost_saving(b * PETA, ok[0].full_cost) if ok else math.nan,
                        _nanmean([r.abc_full for r in ok]),
                        _nanmean([r.abc_entire for r in ok]),
                    )
                )
    return cells


def run_campaign(config: ExperimentConfig, workers: int = 1, progress=None) -> ExperimentReport:
    """Execute every (M0, B, run) cell and aggregate in run order."""
    recorded = read_curves(config.recorded_path) if config.recorded_path else None
    jobs = [(m0, b, i) for m0 in config.pool_sizes for b in config.budgets for i in range(config.runs)]
    results = []
    if workers > 1:
        with cf.ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(execute_run, config, m0, b, i, recorded) for m0, b, i in jobs]
            for job, fut in zip(jobs, futs):
                results.extend(fut.result())
                if progress:
                    progress(job)
    else:
        for job in jobs:
            results.extend(execute_run(config, *job, recorded=recorded))
            if progress:
                progress(job)
    return ExperimentReport(config, results, summarize(config, results))


# --------------------------------------------------------------------- emit

TABLE_COLUMNS = [
    "M0", "B_petaflops", "strategy", "runs", "failures", "mean_loss", "std_loss", "eligible",
    "mean_rel", "max_rel", "min_rel", "mean_worse", "wins", "equal", "losses", "mean_regret",
    "mean_spent", "cost_saving", "abc_full", "abc_entire",
]


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def format_table(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for c in report.cells:
        w.writerow([_fmt(v) for v in (
            c.m0, c.budget, c.strategy, c.runs, c.failures, c.mean_loss, c.std_loss, c.eligible,
            c.rel_mean, c.rel_max, c.rel_min, c.worse_mean, c.wins, c.equal, c.losses, c.mean_regret,
            c.mean_spent, c.cost_saving, c.abc_full, c.abc_entire,
        )])
    return buf.getvalue()


def _open_out(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot write to {out_dir}: {exc}") from exc


def emit(report: ExperimentReport, fmt: str, out_dir) -> list[str]:
    """Write the report as a table or as plot data; returns written paths."""
    _open_out(out_dir)
    paths = []
    if fmt == "table":
        p = os.path.join(out_dir, "table.tsv")
        with open(p, "w") as fh:
            fh.write(format_table(report))
        paths.append(p)
        p = os.path.join(out_dir, "runs.jsonl")
        with open(p, "w") as fh:
            for r in report.results:
                fh.write(json.dumps(asdict(r), sort_keys=True) + "\n")
        paths.append(p)
    elif fmt == "plotdata":
        p = os.path.join(out_dir, "cells.json")
        with open(p, "w") as fh:
            json.dump({"config": report.config.to_dict(), "cells": [asdict(c) for c in report.cells]}, fh,
                      indent=1, sort_keys=True)
        paths.append(p)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return paths


def emit_plotdata(curves: CurveSet, laws: dict, out_dir, n_samples: int = 64) -> list[str]:
    """Curves as CSV plus law records and samples as JSON."""
    _open_out(out_dir)
    cp = os.path.join(out_dir, "curves.csv")
    write_curves(curves, cp)
    rec = {}
    for name, law in laws.items():
        c = np.geomspace(law.region_lo, law.region_hi, n_samples)
        rec[name] = {**law.to_record(), "samples": [[float(a), float(b)] for a, b in zip(c, law(c))]}
    lp = os.path.join(out_dir, "laws.json")
    with open(lp, "w") as fh:
        json.dump(rec, fh, indent=1, sort_keys=True)
    return [cp, lp]


def read_laws(path) -> dict[str, PowerScalingLaw]:
    with open(path) as fh:
        return {k: PowerScalingLaw.from_record(v) for k, v in json.load(fh).items()}
