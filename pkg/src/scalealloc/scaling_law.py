"""Loss-compute frontiers, power-law and L(N, D) fits, and the AbC metric."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import gp_lmc, numopt
from .curves import CurveSet, LearningCurve
from .preprocess import NormalizationSpec, normalize, subsample
from .synthgen import ChinchillaParams

DEFAULT_REGION = (1e18, 1e20)


@dataclass(frozen=True)
class PowerScalingLaw:
    """L(C) = (C / alpha_c) ** -gamma on [region_lo, region_hi]."""

    alpha_c: float
    gamma: float
    region_lo: float = DEFAULT_REGION[0]
    region_hi: float = DEFAULT_REGION[1]

    def __post_init__(self):
        if not (self.alpha_c > 0 and self.gamma > 0):
            raise ValueError("alpha_c and gamma must be > 0")
        if not 0 < self.region_lo < self.region_hi:
            raise ValueError("need 0 < region_lo < region_hi")

    def log_loss(self, compute):
        return -self.gamma * (np.log(np.asarray(compute, dtype=float)) - np.log(self.alpha_c))

    def __call__(self, compute):
        return np.exp(self.log_loss(compute))

    def to_record(self) -> dict:
        return {"alpha": self.alpha_c, "gamma": self.gamma, "region_lo": self.region_lo, "region_hi": self.region_hi}

    @classmethod
    def from_record(cls, rec: dict) -> PowerScalingLaw:
        return cls(float(rec["alpha"]), float(rec["gamma"]), float(rec["region_lo"]), float(rec["region_hi"]))


class FrontierPoint(NamedTuple):
    compute: float
    loss: float
    source_model: str


def _check_region(lo, hi):
    if not 0 < lo < hi:
        raise ValueError("need 0 < region_lo < region_hi")


def efficient_frontier(
    curves: CurveSet, region_lo: float, region_hi: float, n_grid: int = 256, include_predicted: bool = False
) -> list[FrontierPoint]:
    """Lower envelope of the curves on a log-spaced grid over the region.

    Curves are interpolated linearly in log-log space and only used inside
    their own compute range. A running minimum keeps the result non-increasing.
    """
    _check_region(region_lo, region_hi)
    grid = np.geomspace(region_lo, region_hi, n_grid)
    lg = np.log(grid)
    best = np.full(n_grid, np.inf)
    source = np.full(n_grid, -1)
    ids = []
    for i, c in enumerate(curves):
        ids.append(c.model.id)
        cc = c if include_predicted else c.trained
        if len(cc) == 0:
            continue
        lc, ll = np.log(cc.compute), np.log(cc.loss)
        inside = (lg >= lc[0] - 1e-12) & (lg <= lc[-1] + 1e-12)
        if not inside.any():
            continue
        vals = np.full(n_grid, np.inf)
        vals[inside] = np.interp(lg[inside], lc, ll) if lc.size > 1 else ll[0]
        better = vals < best
        best[better] = vals[better]
        source[better] = i
    covered = np.isfinite(best)
    if not covered.any():
        raise ValueError("empty frontier")
    out: list[FrontierPoint] = []
    running, run_src = np.inf, -1
    for g, v, s in zip(grid[covered], best[covered], source[covered]):
        if v < running:
            running, run_src = v, s
        out.append(FrontierPoint(float(g), float(np.exp(running)), ids[run_src]))
    return out


def fit_lc_law(frontier, region=None) -> PowerScalingLaw:
    """Ordinary least squares of log L on log C over the frontier points."""
    pts = list(frontier)
    if region is None:
        region = (min(p.compute for p in pts), max(p.compute for p in pts))
    lo, hi = region
    _check_region(lo, hi)
    c = np.array([p.compute for p in pts if lo * (1 - 1e-12) <= p.compute <= hi * (1 + 1e-12)])
    l = np.array([p.loss for p in pts if lo * (1 - 1e-12) <= p.compute <= hi * (1 + 1e-12)])
    if c.size < 2:
        raise ValueError("need at least 2 frontier points in the region")
    slope, intercept = np.polyfit(np.log(c), np.log(l), 1)
    gamma = -slope
    if not gamma > 1e-12:
        raise ValueError("frontier not decreasing")
    return PowerScalingLaw(float(np.exp(intercept / gamma)), float(gamma), float(lo), float(hi))


def abc(law_a: PowerScalingLaw, law_b: PowerScalingLaw, region=None, n_grid: int = 512) -> float:
    """Area between two laws: integral of |ln L_a - ln L_b| over log10 C."""
    lo, hi = region if region is not None else (law_a.region_lo, law_a.region_hi)
    _check_region(lo, hi)
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    t = np.linspace(np.log10(lo), np.log10(hi), n_grid)
    c = 10.0**t
    gap = np.abs(law_a.log_loss(c) - law_b.log_loss(c))
    return float(np.trapezoid(gap, t))


def ground_truth_laws(full_dataset: CurveSet, selected_models, region, n_grid: int = 256):
    """Laws fitted to all curves and to the selected models' complete curves."""
    lo, hi = region
    full = fit_lc_law(efficient_frontier(full_dataset, lo, hi, n_grid), region)
    sel = full_dataset.subset(list(selected_models))
    entire = fit_lc_law(efficient_frontier(sel, lo, hi, n_grid), region)
    return full, entire


# ---------------------------------------------------------------- L(N, D) fit

class LawFitError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


_LND_LO = np.array([0.0, 0.0, -1.0, 0.0, 0.0])
_LND_HI = np.array([25.0, 25.0, 1.5, 2.0, 2.0])


def _lnd_unpack(theta):
    log_nc, log_dc, log_e, ra, rb = theta
    return log_nc, log_dc, log_e, gp_lmc.softplus(ra), gp_lmc.softplus(rb)


def _lnd_objective(theta, log_n, log_d, log_l, delta):
    log_nc, log_dc, log_e, a, b = _lnd_unpack(theta)
    terms = np.stack([log_nc - a * log_n, log_dc - b * log_d, np.full_like(log_n, log_e)])
    pred = logsumexp(terms, axis=0)
    r = pred - log_l
    w = np.exp(terms - pred)  # d pred / d term
    hg = numopt.huber_grad(r, delta)
    grad = np.array(
        [
            np.sum(hg * w[0]),
            np.sum(hg * w[1]),
            np.sum(hg * w[2]),
            np.sum(hg * w[0] * -log_n) * gp_lmc.sigmoid(theta[3]),
            np.sum(hg * w[1] * -log_d) * gp_lmc.sigmoid(theta[4]),
        ]
    )
    return float(np.sum(numopt.huber(r, delta))), grad


def lnd_objective(params: ChinchillaParams, observations, delta: float = 1e-3) -> float:
    """Total Huber loss of log predictions against log observed losses."""
    n, d, l = (np.asarray(v, dtype=float) for v in zip(*observations))
    pred = np.log(params.n_c / n**params.alpha_n + params.d_c / d**params.beta_d + params.e)
    return float(np.sum(numopt.huber(pred - np.log(l), delta)))


def fit_lnd_law(observations, delta: float = 1e-3, restarts: int = 20, seed=0, max_iter: int = 2000) -> ChinchillaParams:
    """Fit L(N, D) = N_c/N^a + D_c/D^b + E with a Huber loss in log space."""
    obs = [tuple(map(float, o)) for o in observations]
    if len(obs) < 5:
        raise ValueError("need at least 5 observations")
    n, d, l = (np.array(v) for v in zip(*obs))
    if len(set(n)) < 2 or len(set(d)) < 2:
        raise ValueError("need at least 2 distinct N and 2 distinct D values")
    if np.any(n <= 0) or np.any(d <= 0) or np.any(l <= 0):
        raise ValueError("observations must be positive")
    log_n, log_d, log_l = np.log(n), np.log(d), np.log(l)

    def objective(theta):
        return _lnd_objective(theta, log_n, log_d, log_l, delta)

    def sampler(rng):
        t = rng.uniform(_LND_LO, _LND_HI)
        t[3:] = gp_lmc.softplus_inv(np.maximum(t[3:], 1e-3))
        return t

    best = numopt.minimize_with_restarts(objective, sampler, restarts, seed, max_iter=max_iter, tol=1e-12, ftol=1e-15)
    log_nc, log_dc, log_e, a, b = _lnd_unpack(best.params)
    params = ChinchillaParams(float(np.exp(log_nc)), float(np.exp(log_dc)), float(np.exp(log_e)), float(a), float(b))
    if not best.converged:
        raise LawFitError("L(N, D) fit did not converge on any restart", best=params)
    return params


# ------------------------------------------------------- surrogate extrapolation

def fit_extrapolation_surrogate(curves: CurveSet, region, points_per_curve: int = 20, restarts: int = 20, seed=0):
    """Fit the multitask GP on a final curve set for post-allocation extrapolation.

    Returns the surrogate and the normalization used; tasks follow the set's
    (sorted-by-id) order.
    """
    trained = [subsample(c.trained, points_per_curve) for c in curves]
    trained = [c for c in trained if len(c) >= 2]
    if not trained:
        raise ValueError("no curve with at least 2 trained points")
    losses = np.concatenate([c.loss for c in trained])
    spec = NormalizationSpec(
        min(c.compute[0] for c in trained),
        max(region[1], max(c.compute[-1] for c in trained)),
        float(losses.min()),
        float(max(losses.max(), losses.min() * (1 + 1e-6))),
    )
    norm = [normalize(c, spec) for c in trained]
    model = gp_lmc.fit([(c.x, c.y) for c in norm], restarts=restarts, seed=seed)
    return model, spec, CurveSet(trained)


def extrapolated_laws(surrogate, spec: NormalizationSpec, curves: CurveSet, region, z: float = 2.0,
                      n_tail: int = 256, n_grid: int = 256):
    """Mean, upper and lower laws from GP-extended curves.

    ``curves`` must be the set the surrogate was fitted on, in task order.
    """
    if z < 0:
        raise ValueError("z must be >= 0")
    lo, hi = region
    x_hi = float(spec.x(hi))
    sets = {"mean": [], "ucb": [], "lcb": []}
    for t, c in enumerate(curves):
        base = c.trained
        x0 = float(spec.x(base.compute[-1]))
        if x_hi <= x0:
            for k in sets:
                sets[k].append(base)
            continue
        xq = np.linspace(x0, x_hi, n_tail)
        mean, var = gp_lmc.predict(surrogate, t, xq)
        sd = np.sqrt(var)
        cq = spec.compute(xq)
        sets["mean"].append(base.with_tail(cq, spec.loss(mean)))
        sets["ucb"].append(base.with_tail(cq, spec.loss(mean + z * sd)))
        sets["lcb"].append(base.with_tail(cq, spec.loss(mean - z * sd)))
    laws = {}
    for k, cs in sets.items():
        front = efficient_frontier(CurveSet(cs), lo, hi, n_grid, include_predicted=True)
        laws[k] = fit_lc_law(front, region)
    return laws["mean"], laws["ucb"], laws["lcb"]


def law_from_curves(curves: CurveSet, region, n_grid: int = 256, include_predicted: bool = False) -> PowerScalingLaw:
    lo, hi = region
    return fit_lc_law(efficient_frontier(curves, lo, hi, n_grid, include_predicted), region)
