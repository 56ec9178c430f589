"""Synthetic learning curves from the parametric L(N, D) loss surface.

Curves are produced by fixing the parameter count N, converting each compute
value to tokens with C = 6ND, and evaluating

    L(N, D) = N_c / N**alpha + D_c / D**beta + E.

Optional noise is added to the log-loss.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .curves import LearningCurve, ModelSpec


@dataclass(frozen=True)
class ChinchillaParams:
    n_c: float
    d_c: float
    e: float
    alpha_n: float
    beta_d: float

    def __post_init__(self):
        for name in ("n_c", "d_c", "e", "alpha_n", "beta_d"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.n_c, self.d_c, self.e, self.alpha_n, self.beta_d])


HOFFMANN = ChinchillaParams(n_c=406.40, d_c=410.7, e=1.6934, alpha_n=0.3478, beta_d=0.3658)
BESIROGLU = ChinchillaParams(n_c=482.01, d_c=2085.43, e=1.8172, alpha_n=0.3392, beta_d=0.2849)
PRESETS = {"hoffmann": HOFFMANN, "besiroglu": BESIROGLU}


def preset(name: str) -> ChinchillaParams:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


class NoiseKind(str, enum.Enum):
    NONE = "none"
    AWGN = "awgn"
    BROWNIAN = "brownian"
    OU = "ou"


@dataclass(frozen=True)
class NoiseConfig:
    """Noise added to the log-loss of synthetic curves.

    ``sigma2`` is the intensity shared by all kinds; ``weight`` scales it.
    AWGN uses a standard deviation of ``weight * sqrt(sigma2)``, Brownian
    increments have variance ``weight * sigma2 * dt`` and the OU path is
    multiplied by ``weight``. The time step is the natural-log compute step.
    Noise stops at the first point where the noiseless log-log slope falls
    below ``gradient_threshold`` in magnitude.
    """

    kind: NoiseKind = NoiseKind.NONE
    sigma2: float = 0.0
    weight: float = 1.0
    ou_mu: float = 0.0
    ou_tau: float = 1.0
    gradient_threshold: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if not 0 <= self.weight <= 1:
            raise ValueError("weight must lie in [0, 1]")
        if self.kind is NoiseKind.OU and not self.ou_tau > 0:
            raise ValueError("ou_tau must be > 0")
        if not self.gradient_threshold > 0:
            raise ValueError("gradient_threshold must be > 0")


NO_NOISE = NoiseConfig()


def loss_surface(params: ChinchillaParams, n, d):
    """Evaluate L(N, D); ``n`` and ``d`` may be arrays and may be infinite."""
    n = np.asarray(n, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(n <= 0) or np.any(d <= 0):
        raise ValueError("parameter and token counts must be positive")
    out = params.n_c / n**params.alpha_n + params.d_c / d**params.beta_d + params.e
    return out if out.ndim else float(out)


def loglog_slope(params: ChinchillaParams, n, d):
    """d log L / d log C at fixed N (analytic)."""
    d = np.asarray(d, dtype=float)
    term = params.d_c / d**params.beta_d
    return -params.beta_d * term / loss_surface(params, n, d)


def log_grid(lo: float, hi: float, num: int = 200) -> np.ndarray:
    """Logarithmically spaced compute grid from ``lo`` to ``hi`` inclusive."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    return np.geomspace(lo, hi, num)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def inclination_index(gradients, threshold: float) -> int:
    """First index whose |slope| is below ``threshold`` (len if none)."""
    flat = np.flatnonzero(np.abs(np.asarray(gradients)) < threshold)
    return int(flat[0]) if flat.size else len(gradients)


def sample_noise(noise: NoiseConfig, grid, curve_gradients, seed) -> np.ndarray:
    """Additive log-loss noise for each grid point."""
    grid = np.asarray(grid, dtype=float)
    grads = np.asarray(curve_gradients, dtype=float)
    if grid.shape != grads.shape:
        raise ValueError("grid and gradients must have the same length")
    n = grid.size
    out = np.zeros(n)
    if noise.kind is NoiseKind.NONE or n == 0:
        return out
    rng = _rng(seed)
    w = noise.weight
    sigma = np.sqrt(noise.sigma2)
    dt = np.diff(np.log(grid))
    if noise.kind is NoiseKind.AWGN:
        out = rng.normal(0.0, 1.0, n) * (w * sigma)
    elif noise.kind is NoiseKind.BROWNIAN:
        steps = rng.normal(0.0, 1.0, n - 1) * np.sqrt(w * noise.sigma2 * dt)
        out[1:] = np.cumsum(steps)
    elif noise.kind is NoiseKind.OU:
        z = rng.normal(0.0, 1.0, n - 1)
        decay = np.exp(-dt / noise.ou_tau)
        scale = sigma * np.sqrt(1.0 - decay**2)
        path = np.empty(n)
        path[0] = noise.ou_mu
        for k in range(1, n):
            path[k] = noise.ou_mu + (path[k - 1] - noise.ou_mu) * decay[k - 1] + scale[k - 1] * z[k - 1]
        out = w * path
    out[inclination_index(grads, noise.gradient_threshold):] = 0.0
    return out


def generate_curve(
    params: ChinchillaParams,
    model: ModelSpec,
    compute_grid,
    noise: NoiseConfig = NO_NOISE,
    seed=0,
) -> LearningCurve:
    """Trained learning curve of ``model`` on ``compute_grid``.

    Grid points that correspond to less than one token are dropped.
    """
    grid = np.asarray(compute_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("compute grid must be positive and strictly ascending")
    d = grid / (6.0 * model.n_params)
    keep = d >= 1.0
    if not keep.any():
        raise ValueError("grid below one token")
    grid, d = grid[keep], d[keep]
    clean = loss_surface(params, model.n_params, d)
    clean = np.atleast_1d(clean)
    if noise.kind is NoiseKind.NONE:
        return LearningCurve(model, grid, clean)
    eps = sample_noise(noise, grid, loglog_slope(params, model.n_params, d), seed)
    return LearningCurve(model, grid, np.exp(np.log(clean) + eps))


SIZE_EXPONENTS = tuple(range(2, 43))


def sample_model_sizes(rng, k: int, exponents=SIZE_EXPONENTS) -> list[int]:
    """Draw ``k`` distinct parameter counts 2**e, e from ``exponents``."""
    rng = _rng(rng)
    if k > len(exponents):
        raise ValueError(f"cannot draw {k} distinct sizes from {len(exponents)}")
    picked = rng.choice(np.asarray(exponents), size=k, replace=False)
    return [2 ** int(e) for e in picked]
