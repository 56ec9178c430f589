"""Independent reference implementations used as test oracles.

Nothing here imports the allocator; the schedule and budget accounting are
re-derived from their definitions so that agreement is meaningful.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def chinchilla(n, d, nc, dc, e, a, b):
    return nc / n**a + dc / d**b + e


def sh_schedule(m0, eta, budget):
    """(pool sizes, per-model round budgets) straight from the definitions."""
    r = max(1, math.ceil(round(math.log(m0, eta), 12))) if m0 > 1 else 1
    sizes = [m0]
    for _ in range(r - 1):
        sizes.append(max(1, sizes[-1] // eta))
    return sizes, [budget // (s * r) for s in sizes]


def brute_force_selection(sizes_n, eta, budget, loss_at):
    """Best final model over every survivor sequence the schedule admits.

    ``loss_at(n, flops)`` is the noiseless loss of a model with ``n``
    parameters after ``flops`` of training (monotone in flops), and models
    are trained in whole steps of 6n FLOPs with per-model carry. Pruned
    models' leftovers and the schedule slack are shared equally by the
    last-round models. Returns (best loss, best model index).
    """
    m0 = len(sizes_n)
    pools, budgets = sh_schedule(m0, eta, budget)
    slack = budget - sum(p * c for p, c in zip(pools, budgets))
    best = (math.inf, None)

    def rec(r, pool, consumed, carry, remainder):
        nonlocal best
        bonus = remainder // len(pool) if r == len(pools) - 1 else 0
        consumed, carry = dict(consumed), dict(carry)
        for i in pool:
            avail = budgets[r] + bonus + carry.get(i, 0)
            step = 6 * sizes_n[i]
            used = (avail // step) * step
            consumed[i] = consumed.get(i, 0) + used
            carry[i] = avail - used
        if r == len(pools) - 1:
            for i, c in consumed.items():
                if c > 0:
                    key = (loss_at(sizes_n[i], c), sizes_n[i])
                    if key < (best[0], sizes_n[best[1]] if best[1] is not None else math.inf):
                        best = (key[0], i)
            return
        k = max(1, len(pool) // eta)
        for keep in itertools.combinations(pool, k):
            dropped = sum(carry[i] for i in pool if i not in keep)
            rec(r + 1, list(keep), consumed, {i: v for i, v in carry.items() if i in keep or i not in pool},
                remainder + dropped)

    rec(0, list(range(m0)), {}, {}, slack)
    return best


def expdec(x, xp, alpha, beta, var):
    return var * beta**alpha / (x + xp + beta) ** alpha


def savgol_reference(y, window, order):
    """Least-squares polynomial fit per window, evaluated at each point."""
    y = np.asarray(y, dtype=float)
    n, h = y.size, window // 2
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - h, 0), n - window)
        t = np.arange(lo, lo + window)
        coef = np.polyfit(t, y[lo : lo + window], order)
        out[i] = np.polyval(coef, i)
    return out
