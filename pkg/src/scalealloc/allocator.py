"""Successive Halving over a model pool, optionally guided by a surrogate.

Each round every surviving model gets the same FLOP budget, trains for a
whole number of optimizer steps, and the best ``max(1, |pool| // eta)``
models advance. With a surrogate, each curve is extended by a predicted
tail out to the compute the model would reach by surviving every round,
and models are ranked on the minimum of trained and predicted points.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import deep_ensemble, gp_lmc
from .curves import CurveSet, LearningCurve, ModelSpec
from .preprocess import NormalizationSpec, normalize, subsample


class Surrogate(str, enum.Enum):
    NONE = "none"
    LMC = "lmc"
    DE_PL = "de_pl"
    DE_EXP = "de_exp"
    DE_MMF = "de_mmf"

    @property
    def family(self):
        return {"de_pl": "pl", "de_exp": "exp", "de_mmf": "mmf"}.get(self.value)


@dataclass(frozen=True)
class AllocConfig:
    total_budget: int
    eta: int = 2
    surrogate: Surrogate = Surrogate.NONE
    points_per_curve: int = 20
    seed: int = 0
    gp_restarts: int = 20
    gp_max_iter: int = 500
    gp_ftol: float = 1e-9
    gp_warm_start: bool = True
    de_iterations: int = 1000
    tail_points: int = 256

    def __post_init__(self):
        object.__setattr__(self, "total_budget", int(self.total_budget))
        object.__setattr__(self, "surrogate", Surrogate(self.surrogate))
        if self.total_budget <= 0:
            raise ValueError("total_budget must be > 0")
        if int(self.eta) != self.eta or self.eta < 2:
            raise ValueError("eta must be an integer >= 2")
        if self.points_per_curve < 2:
            raise ValueError("points_per_curve must be >= 2")


@dataclass
class RoundRecord:
    index: int
    budget: int
    pool: list
    survivors: list
    scores: dict
    steps: dict
    notes: list = field(default_factory=list)


@dataclass
class AllocationTrace:
    rounds: list
    final_curves: CurveSet
    spent: int
    total_budget: int
    notes: list = field(default_factory=list)

    @property
    def selected(self) -> str | None:
        """The model that survived the last round."""
        return self.rounds[-1].survivors[0] if self.rounds and self.rounds[-1].survivors else None

    @property
    def min_loss(self) -> float:
        """Lowest trained loss over every curve the allocation produced."""
        vals = [c.min_loss() for c in self.final_curves if len(c)]
        return min(vals) if vals else float("inf")

    def schedule(self) -> list[int]:
        return [len(r.pool) for r in self.rounds]


def n_rounds(initial_pool: int, eta: int) -> int:
    """ceil(log_eta |M0|) in exact integer arithmetic, at least 1."""
    if initial_pool < 1:
        raise ValueError("pool must be non-empty")
    r, reach = 0, 1
    while reach < initial_pool:
        reach *= eta
        r += 1
    return max(r, 1)


def round_budget(total_budget: int, current_pool: int, initial_pool: int, eta: int) -> int:
    """floor(B / (|M_r| * ceil(log_eta |M0|))); one full-budget round if |M0| = 1."""
    if current_pool < 1:
        raise ValueError("pool must be non-empty")
    return int(total_budget) // (current_pool * n_rounds(initial_pool, eta))


def pool_schedule(initial_pool: int, eta: int) -> list[int]:
    """Pool size entering each round."""
    sizes = [initial_pool]
    for _ in range(n_rounds(initial_pool, eta) - 1):
        sizes.append(max(1, sizes[-1] // eta))
    return sizes


def survivors_count(pool: int, eta: int) -> int:
    return max(1, pool // eta)


def quantize_steps(allocated: int, model: ModelSpec) -> tuple[int, int]:
    """Whole optimizer steps affordable with ``allocated`` FLOPs."""
    allocated = int(allocated)
    if allocated < 0:
        raise ValueError("allocated must be >= 0")
    steps = allocated // model.step_cost
    return steps, steps * model.step_cost


def _rank_key(curve: LearningCurve):
    score = curve.min_loss(include_predicted=True) if len(curve) else float("inf")
    return (score, curve.model.n_params, curve.model.id)


def top_k(pool, working: CurveSet, eta: int) -> list[ModelSpec]:
    """Keep the best ``max(1, |pool| // eta)`` models by minimum working loss.

    Ties go to the smaller model, then to the lexicographically first id.
    """
    pool = list(pool)
    if not pool:
        raise ValueError("pool must be non-empty")
    ranked = sorted(pool, key=lambda m: _rank_key(working[m.id]))
    return ranked[: survivors_count(len(pool), eta)]


@dataclass
class BudgetLedger:
    """Per-model FLOP accounting with carried-over rounding leftovers."""

    consumed: dict = field(default_factory=dict)
    carry: dict = field(default_factory=dict)

    def train(self, model: ModelSpec, allocated: int) -> int:
        avail = int(allocated) + self.carry.get(model.id, 0)
        steps, used = quantize_steps(avail, model)
        self.consumed[model.id] = self.consumed.get(model.id, 0) + used
        self.carry[model.id] = avail - used
        return steps

    def release(self, model_id: str) -> int:
        """Drop a model's leftover and return it."""
        return self.carry.pop(model_id, 0)

    @property
    def spent(self) -> int:
        return sum(self.consumed.values())


def _warm_init(state: dict | None, keys: list):
    """Previous round's hyperparameters restricted to the surviving tasks."""
    if not state or "hyper" not in state:
        return None
    prev = {k: i for i, k in enumerate(state["keys"])}
    if any(k not in prev for k in keys):
        return None
    h = state["hyper"]
    idx = [prev[k] for k in keys]
    return gp_lmc.KernelHyperparams(
        h.expdec_alpha, h.expdec_beta, h.expdec_var, h.white_var, h.noise_var,
        w1=h.w1[idx], kappa1=h.kappa1[idx], w2=h.w2[idx], kappa2=h.kappa2[idx], kappa3=h.kappa3[idx],
    )


def _surrogate_tails(trained: dict, horizon: int, config: AllocConfig, round_index: int, state: dict | None = None):
    """Predicted tails for each trained curve, keyed by model id.

    ``state`` carries the fitted GP hyperparameters between rounds so that the
    next fit can start from them (in addition to its random restarts).
    """
    usable = {k: c for k, c in trained.items() if len(c) >= 2}
    if len(usable) == 0:
        return {}, ["no curve long enough for the surrogate"]
    curves = {k: subsample(c, config.points_per_curve) for k, c in usable.items()}
    losses = np.concatenate([c.loss for c in curves.values()])
    lo_c = min(c.compute[0] for c in curves.values())
    hi_c = max(float(horizon), max(c.compute[-1] for c in curves.values()))
    is_de = config.surrogate is not Surrogate.LMC
    if is_de:
        lo_c *= 0.5  # keeps normalized inputs strictly positive
    l_lo, l_hi = float(losses.min()), float(losses.max())
    if not l_hi > l_lo:
        l_hi = l_lo * (1 + 1e-6)
    spec = NormalizationSpec(lo_c, hi_c, l_lo, l_hi)
    norm = {k: normalize(c, spec) for k, c in curves.items()}
    seed = np.random.SeedSequence([config.seed, round_index]).generate_state(1)[0]
    x_hi = float(spec.x(hi_c))
    tails, notes = {}, []
    if not is_de:
        keys = list(norm)
        init = _warm_init(state, keys) if config.gp_warm_start else None
        model = gp_lmc.fit(
            [(norm[k].x, norm[k].y) for k in keys],
            restarts=config.gp_restarts,
            seed=int(seed),
            max_iter=config.gp_max_iter,
            ftol=config.gp_ftol,
            init=init,
        )
        if state is not None:
            state.update(hyper=model.hyper, keys=keys)
        for t, k in enumerate(keys):
            x0 = float(norm[k].x[-1])
            if x0 >= x_hi:
                continue
            xq = np.linspace(x0, x_hi, config.tail_points)
            mean, _ = gp_lmc.predict(model, t, xq)
            tails[k] = (spec.compute(xq), spec.loss(mean))
    else:
        data = [(c.model.n_params, norm[k].x, norm[k].y) for k, c in curves.items() if len(c) >= 3]
        if len({d[0] for d in data}) < 2:
            return {}, ["deep ensemble needs two model sizes with three points; no prediction"]
        model = deep_ensemble.fit(data, config.surrogate.family, iterations=config.de_iterations, seed=int(seed))
        for k, c in curves.items():
            x0 = float(norm[k].x[-1])
            if x0 >= x_hi:
                continue
            xq = np.linspace(x0, x_hi, config.tail_points)
            tails[k] = (spec.compute(xq), spec.loss(deep_ensemble.predict(model, c.model.n_params, xq)))
    return tails, notes


def obtain_lcs(pool, round_budget_flops: int, ledger: BudgetLedger, horizon: int, config: AllocConfig, source,
               round_index: int = 0, bonus: int = 0, predict: bool = True, state: dict | None = None):
    """Train each pool model for its share of the round and build working curves.

    Returns the working curve set (trained prefixes plus predicted tails when
    a surrogate is active), the steps taken per model and trace notes.
    """
    trained, steps, notes = {}, {}, []
    for m in pool:
        steps[m.id] = ledger.train(m, round_budget_flops + bonus)
        if steps[m.id] == 0:
            notes.append(f"{m.id}: zero steps in round {round_index}")
        try:
            trained[m.id] = source.curve(m, ledger.consumed[m.id])
        except Exception as exc:  # provider failure drops the model
            notes.append(f"{m.id}: curve source failed ({exc}); dropped")
    working = dict(trained)
    if predict and config.surrogate is not Surrogate.NONE:
        try:
            tails, extra = _surrogate_tails(trained, horizon, config, round_index, state)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            tails, extra = {}, [f"surrogate failed in round {round_index} ({exc}); ranking on trained points"]
        notes += extra
        for k, (c, l) in tails.items():
            working[k] = trained[k].with_tail(c, l)
    return CurveSet(list(working.values())), steps, notes


def run_sh(models, config: AllocConfig, source) -> AllocationTrace:
    """Successive Halving with optional surrogate-guided selection."""
    pool = sorted(models, key=lambda m: m.id)
    if not pool:
        raise ValueError("pool must be non-empty")
    if len({m.id for m in pool}) != len(pool):
        raise ValueError("duplicate model ids in pool")
    B, eta = config.total_budget, config.eta
    m0 = len(pool)
    R = n_rounds(m0, eta)
    sizes = pool_schedule(m0, eta)
    budgets = [round_budget(B, s, m0, eta) for s in sizes]
    horizon = sum(budgets)
    remainder = B - sum(s * c for s, c in zip(sizes, budgets))

    ledger = BudgetLedger()
    state: dict = {}
    latest: dict[str, LearningCurve] = {}
    rounds, notes = [], []
    for r in range(R):
        bonus = 0
        if r == R - 1:
            bonus = remainder // len(pool)
        k = survivors_count(len(pool), eta)
        working, steps, rnotes = obtain_lcs(
            pool, budgets[r], ledger, horizon, config, source, r, bonus, predict=k < len(pool), state=state
        )
        for c in working:
            latest[c.model.id] = c.trained
        alive = [m for m in pool if m.id in working]
        if not alive:
            notes.append(f"every model dropped in round {r}")
            break
        survivors = top_k(alive, working, eta)
        scores = {c.model.id: _rank_key(c)[0] for c in working}
        rounds.append(RoundRecord(r, budgets[r], [m.id for m in pool], [m.id for m in survivors], scores, steps, rnotes))
        if all(s == 0 for s in steps.values()):
            notes.append(f"round {r}: no model could afford a step; stopping")
            break
        keep = {m.id for m in survivors}
        for m in pool:
            if m.id not in keep:
                remainder += ledger.release(m.id)
        pool = survivors
    final = CurveSet(list(latest.values()))
    spent = ledger.spent
    assert spent <= B, "budget overrun"
    return AllocationTrace(rounds, final, spent, B, notes)


def run_uniform(models, config: AllocConfig, source) -> AllocationTrace:
    """Uniform allocation: one round, floor(B / |M0|) per model, no pruning."""
    pool = sorted(models, key=lambda m: m.id)
    if not pool:
        raise ValueError("pool must be non-empty")
    share = config.total_budget // len(pool)
    ledger = BudgetLedger()
    curves, steps, notes = [], {}, []
    for m in pool:
        steps[m.id] = ledger.train(m, share)
        try:
            curves.append(source.curve(m, ledger.consumed[m.id]))
        except Exception as exc:
            notes.append(f"{m.id}: curve source failed ({exc}); dropped")
    final = CurveSet(curves)
    scores = {c.model.id: _rank_key(c)[0] for c in final}
    ids = [m.id for m in pool]
    best = min(final, key=_rank_key).model.id if len(final) else None
    rec = RoundRecord(0, share, ids, [best] if best else [], scores, steps, notes)
    return AllocationTrace([rec], final, ledger.spent, config.total_budget)


def full_survival_horizon(initial_pool: int, total_budget: int, eta: int) -> int:
    """Compute a model reaches by surviving every round (before leftovers)."""
    return sum(round_budget(total_budget, s, initial_pool, eta) for s in pool_schedule(initial_pool, eta))
