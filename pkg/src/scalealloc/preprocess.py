"""Smoothing, normalization and subsampling of recorded learning curves."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .curves import CurveSet, LearningCurve


class ShortCurveWarning(UserWarning):
    """A curve was too short to smooth and was passed through unchanged."""


def savgol_smooth(curve: LearningCurve, window: int = 11, poly_order: int = 3) -> LearningCurve:
    """Savitzky-Golay smoothing of the loss values, indexed by point order.

    Boundary points are taken from the polynomial fitted to the first/last
    full window.
    """
    if window < 5 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 5")
    if not 0 <= poly_order < window:
        raise ValueError("poly_order must be in [0, window)")
    if len(curve) < window:
        warnings.warn(
            f"curve {curve.model.id} has {len(curve)} points (< window {window}); left unsmoothed",
            ShortCurveWarning,
            stacklevel=2,
        )
        return curve
    smooth = savgol_filter(curve.loss, window, poly_order, mode="interp")
    if np.any(smooth <= 0):
        raise ValueError(f"smoothing produced non-positive losses for {curve.model.id}")
    return LearningCurve(curve.model, curve.compute, smooth, curve.predicted)


def smooth_set(curves: CurveSet, window: int = 11, poly_order: int = 3) -> CurveSet:
    return CurveSet([savgol_smooth(c, window, poly_order) for c in curves])


@dataclass(frozen=True)
class NormalizationSpec:
    """Affine maps compute -> [0, 1] and loss -> [0, loss_scale_max].

    With ``log=True`` (default) both maps act on natural logs of compute
    and loss, the space the surrogates work in.
    """

    compute_lo: float
    compute_hi: float
    loss_lo: float
    loss_hi: float
    loss_scale_max: float = 10.0
    log: bool = True

    def __post_init__(self):
        if not self.compute_lo < self.compute_hi:
            raise ValueError("compute_lo must be < compute_hi")
        if not self.loss_lo < self.loss_hi:
            raise ValueError("loss_lo must be < loss_hi")
        if not self.loss_scale_max > 0:
            raise ValueError("loss_scale_max must be > 0")
        if self.log and (self.compute_lo <= 0 or self.loss_lo <= 0):
            raise ValueError("log normalization needs positive bounds")

    def _t(self, v):
        v = np.asarray(v, dtype=float)
        return np.log(v) if self.log else v

    def _inv(self, v):
        return np.exp(v) if self.log else v

    def x(self, compute):
        lo, hi = self._t(self.compute_lo), self._t(self.compute_hi)
        return (self._t(compute) - lo) / (hi - lo)

    def compute(self, x):
        lo, hi = self._t(self.compute_lo), self._t(self.compute_hi)
        return self._inv(lo + np.asarray(x, dtype=float) * (hi - lo))

    def y(self, loss):
        lo, hi = self._t(self.loss_lo), self._t(self.loss_hi)
        return (self._t(loss) - lo) / (hi - lo) * self.loss_scale_max

    def loss(self, y):
        lo, hi = self._t(self.loss_lo), self._t(self.loss_hi)
        return self._inv(lo + np.asarray(y, dtype=float) / self.loss_scale_max * (hi - lo))


@dataclass(frozen=True, eq=False)
class NormalizedCurve:
    """A learning curve expressed in normalized coordinates."""

    model: object
    x: np.ndarray
    y: np.ndarray
    predicted: np.ndarray
    spec: NormalizationSpec

    def denormalize(self) -> LearningCurve:
        return LearningCurve(self.model, self.spec.compute(self.x), self.spec.loss(self.y), self.predicted)


def normalize(curve: LearningCurve, spec: NormalizationSpec, rtol: float = 1e-12) -> NormalizedCurve:
    lo, hi = spec.compute_lo * (1 - rtol), spec.compute_hi * (1 + rtol)
    bad = np.flatnonzero((curve.compute < lo) | (curve.compute > hi))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"point {i} of curve {curve.model.id} (compute={curve.compute[i]:g}) "
            f"outside [{spec.compute_lo:g}, {spec.compute_hi:g}]"
        )
    return NormalizedCurve(curve.model, spec.x(curve.compute), spec.y(curve.loss), curve.predicted.copy(), spec)


def denormalize(curve: NormalizedCurve) -> LearningCurve:
    return curve.denormalize()


def subsample_indices(log_compute, k: int) -> np.ndarray:
    """Indices of ``k`` points spread evenly in log-compute.

    The first and last points are always included and the result is
    strictly increasing.
    """
    n = len(log_compute)
    if k >= n:
        return np.arange(n)
    targets = np.linspace(log_compute[0], log_compute[-1], k)
    picks = np.empty(k, dtype=int)
    prev = -1
    for j, t in enumerate(targets):
        lo = prev + 1
        hi = n - (k - j)  # leave room for the remaining picks
        window = log_compute[lo : hi + 1]
        prev = lo + int(np.argmin(np.abs(window - t)))
        picks[j] = prev
    return picks


def subsample(curve: LearningCurve, k: int = 20) -> LearningCurve:
    """Keep ``k`` trained points evenly spaced in log-compute."""
    if k < 2:
        raise ValueError("k must be >= 2")
    base = curve.trained
    if len(base) <= k:
        return base
    idx = subsample_indices(np.log(base.compute), k)
    return LearningCurve(base.model, base.compute[idx], base.loss[idx])
