"""Curve providers the allocator trains against.

A source answers one question: what does model ``m``'s learning curve look
like after ``c`` FLOPs of training? Both implementations are stateless, so
prefixes are always consistent: the curve at ``c2 > c1`` starts with the
curve at ``c1`` (up to the interpolated end point).
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

from . import synthgen
from .curves import CurveSet, LearningCurve, ModelSpec
from .synthgen import NO_NOISE, ChinchillaParams, NoiseConfig


class CurveSource(Protocol):
    def curve(self, model: ModelSpec, compute: int) -> LearningCurve: ...

    def oracle(self, model: ModelSpec, horizon: int) -> float: ...


def model_seed(seed: int, model: ModelSpec) -> np.random.SeedSequence:
    """Noise seed for one model, independent of which pool it sits in."""
    key = [ord(ch) for ch in model.id] + [model.n_params % (2**32), model.n_params >> 32]
    return np.random.SeedSequence([int(seed) % (2**32), *key])


class SyntheticCurveSource:
    """Curves from the parametric loss surface on a fixed per-model grid.

    Each model has ``n_points`` log-spaced grid points from one optimizer step
    up to ``c_max``. A query at compute ``c`` returns the grid points up to
    ``c`` plus an end point at ``c`` itself, whose noise is interpolated
    between neighbouring grid points.
    """

    def __init__(
        self,
        params: ChinchillaParams,
        c_max: float,
        noise: NoiseConfig = NO_NOISE,
        n_points: int = 200,
        seed: int = 0,
    ):
        if not c_max > 0:
            raise ValueError("c_max must be > 0")
        self.params = params
        self.c_max = float(c_max)
        self.noise = noise
        self.n_points = n_points
        self.seed = seed
        self._cache: dict = {}

    def _grid(self, model: ModelSpec):
        hit = self._cache.get(model)
        if hit is not None:
            return hit
        lo = float(model.step_cost)
        if lo >= self.c_max:
            out = (np.array([lo]), np.zeros(1))
        else:
            grid = synthgen.log_grid(lo, self.c_max, self.n_points)
            d = grid / (6.0 * model.n_params)
            slopes = synthgen.loglog_slope(self.params, model.n_params, d)
            eps = synthgen.sample_noise(self.noise, grid, slopes, model_seed(self.seed, model))
            out = (grid, eps)
        self._cache[model] = out
        return out

    def _loss(self, model: ModelSpec, compute, eps):
        d = np.asarray(compute, dtype=float) / (6.0 * model.n_params)
        return np.exp(np.log(synthgen.loss_surface(self.params, model.n_params, d)) + eps)

    def curve(self, model: ModelSpec, compute) -> LearningCurve:
        c = float(compute)
        grid, eps = self._grid(model)
        if c < model.step_cost:
            return LearningCurve(model, [], [])
        keep = grid <= c * (1 + 1e-12)
        g, e = grid[keep], eps[keep]
        if g.size == 0 or g[-1] < c * (1 - 1e-12):
            e_end = np.interp(np.log(c), np.log(grid), eps)
            g = np.append(g, c)
            e = np.append(e, e_end)
        return LearningCurve(model, g, self._loss(model, g, e))

    def oracle(self, model: ModelSpec, horizon) -> float:
        """Lowest loss the model reaches when trained up to ``horizon``."""
        c = self.curve(model, horizon)
        return c.min_loss() if len(c) else float("inf")


class RecordedCurveSource:
    """Slices of pre-collected full learning curves."""

    def __init__(self, curves: CurveSet):
        self.curves = curves.trained_only()

    @property
    def models(self) -> list[ModelSpec]:
        return self.curves.models

    def curve(self, model: ModelSpec, compute) -> LearningCurve:
        full = self.curves[model.id]
        keep = full.compute <= float(compute) * (1 + 1e-12)
        return LearningCurve(model, full.compute[keep], full.loss[keep])

    def full_compute(self, model: ModelSpec) -> float:
        return self.curves[model.id].max_compute

    def oracle(self, model: ModelSpec, horizon=None) -> float:
        """Lowest loss on the stored curve (up to ``horizon`` if given)."""
        c = self.curves[model.id] if horizon is None else self.curve(model, horizon)
        return c.min_loss() if len(c) else float("inf")
