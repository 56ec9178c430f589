"""Limited-memory BFGS with Armijo backtracking, random restarts and Huber loss.

Objectives take a parameter vector and return ``(value, gradient)``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass
class OptimResult:
    params: np.ndarray
    objective: float
    converged: bool
    iterations: int
    restart_index: int = 0


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    s, y = S[-1], Y[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def minimize(
    objective: Objective,
    init,
    max_iter: int = 500,
    tol: float = 1e-8,
    memory: int = 10,
    ftol: float = 0.0,
    shrink: float = 0.5,
    c1: float = 1e-4,
    max_backtracks: int = 60,
) -> OptimResult:
    """Minimize ``objective`` from ``init`` with L-BFGS.

    Stops when the max-norm of the gradient drops below ``tol``, after
    ``max_iter`` iterations, or (if ``ftol > 0``) when the relative decrease
    of one accepted step is below ``ftol``. Trial points with a non-finite
    value are treated as failed line-search steps; if no finite decrease can
    be found the run stops and reports ``converged=False``.
    """
    x = np.array(init, dtype=float)
    f, g = objective(x)
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return OptimResult(x, float(f), False, 0)
    S: deque = deque(maxlen=memory)
    Y: deque = deque(maxlen=memory)
    converged = False
    it = 0
    while it < max_iter:
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        d = -_two_loop(g, S, Y) if S else -g
        slope = g @ d
        if not slope < 0:
            S.clear(), Y.clear()
            d, slope = -g, -(g @ g)
        step = 1.0 if S else min(1.0, 1.0 / np.linalg.norm(g))
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * d
            f_new, g_new = objective(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope and np.all(np.isfinite(g_new)):
                accepted = True
                break
            step *= shrink
        if not accepted:
            if S:
                S.clear(), Y.clear()
                continue
            break
        it += 1
        g_new = np.asarray(g_new, dtype=float)
        s, y = x_new - x, g_new - g
        if s @ y > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        rel = (f - f_new) / max(abs(f), abs(f_new), 1.0)
        x, f, g = x_new, float(f_new), g_new
        if ftol > 0 and rel <= ftol:
            converged = True
            break
    else:
        converged = bool(np.max(np.abs(g)) < tol)
    return OptimResult(x, float(f), converged, it)


def minimize_with_restarts(
    objective: Objective,
    sampler: Callable[[np.random.Generator], np.ndarray],
    restarts: int,
    seed=0,
    inits=(),
    **kwargs,
) -> OptimResult:
    """Run :func:`minimize` from ``restarts`` sampled inits and keep the best.

    Inits are drawn sequentially from one generator, so a run with more
    restarts always includes the starts of a run with fewer. ``inits`` are
    extra deterministic starting points tried before the sampled ones.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = np.random.default_rng(seed)
    starts = [np.asarray(p, dtype=float) for p in inits]
    starts += [np.asarray(sampler(rng), dtype=float) for _ in range(restarts)]
    best = None
    for i, x0 in enumerate(starts):
        res = minimize(objective, x0, **kwargs)
        res.restart_index = i
        if not np.isfinite(res.objective):
            continue
        if best is None or res.objective < best.objective:
            best = res
    if best is None:
        raise RuntimeError("all restarts produced non-finite objectives")
    return best


def huber(residual, delta: float):
    """Huber loss: r**2/2 inside |r| <= delta, linear outside."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    r = np.abs(np.asarray(residual, dtype=float))
    out = np.where(r <= delta, 0.5 * r**2, delta * (r - 0.5 * delta))
    return out if out.ndim else float(out)


def huber_grad(residual, delta: float):
    r = np.asarray(residual, dtype=float)
    return np.clip(r, -delta, delta)


def check_gradient(objective: Objective, point, eps: float = 1e-5, atol: float = 1e-8) -> float:
    """Largest per-coordinate relative gap between analytic and central-difference gradients.

    Components smaller than ``atol * max(1, |f|)`` are compared against that
    floor instead; central differences cannot resolve derivatives that are
    numerically zero relative to the objective's own magnitude.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = np.asarray(point, dtype=float)
    f0, g = objective(x)
    g = np.asarray(g, dtype=float)
    floor = atol * max(1.0, abs(float(f0)))
    worst = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        fd = (objective(x + e)[0] - objective(x - e)[0]) / (2 * eps)
        denom = max(abs(fd), abs(g[i]), floor)
        worst = max(worst, abs(fd - g[i]) / denom)
    return worst
