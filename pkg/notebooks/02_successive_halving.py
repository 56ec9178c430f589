"""
Successive Halving with and without a surrogate
===============================================

One pool, one budget, three strategies. The trace shows how the budget is
split across rounds and which models survive.
"""

# %%
import numpy as np

from scalealloc import AllocConfig, run_sh, run_uniform, synthgen
from scalealloc.allocator import full_survival_horizon
from scalealloc.curves import ModelSpec
from scalealloc.sources import SyntheticCurveSource

PF = 10**15
budget = 1000 * PF
rng = np.random.default_rng(4)
pool = [ModelSpec(f"n{n}", n) for n in sorted(synthgen.sample_model_sizes(rng, 10))]
source = SyntheticCurveSource(synthgen.HOFFMANN, budget)
print("pool:", [m.id for m in pool])

# %% Plain SH: rank by the last observed loss.
plain = run_sh(pool, AllocConfig(budget), source)
for r in plain.rounds:
    print(f"round {r.index}: {len(r.pool):2d} models x {r.budget / PF:8.1f} PF -> keep {r.survivors}")
print("selected", plain.selected, "loss", round(plain.min_loss, 4), "spent", plain.spent / budget)

# %% SH with the multitask GP: rank by the predicted loss at the horizon a
# model would reach if it survived every round.
guided = run_sh(pool, AllocConfig(budget, surrogate="lmc", gp_restarts=3, seed=0), source)
print("selected", guided.selected, "loss", round(guided.min_loss, 4))
for r in guided.rounds:
    if r.scores:
        best = sorted(r.scores.items(), key=lambda kv: kv[1])[:3]
        print(f"round {r.index} top predictions:", [(k, round(v, 3)) for k, v in best])

# %% Uniform allocation splits the budget evenly and never prunes.
ua = run_uniform(pool, AllocConfig(budget), source)
print("UA loss", round(ua.min_loss, 4))

# %% What an oracle would have picked.
h = full_survival_horizon(len(pool), budget, 2)
oracle = min(pool, key=lambda m: source.oracle(m, h))
print("oracle", oracle.id, round(source.oracle(oracle, h), 4))
