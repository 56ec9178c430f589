"""Deep-ensemble surrogate: MLPs map model size to curve-family coefficients.

Each member is a two-hidden-layer tanh network taking standardized
log(n_params) and emitting positive coefficients (softplus) of a parametric
curve family. Members are trained full-batch with Adam on the squared error
between the family evaluated at each curve's inputs and the observed
normalized log-loss. The ensemble prediction is the plain member mean.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

N_MEMBERS = 5
HIDDEN = 64


class CurveFamily(str, enum.Enum):
    PL = "pl"
    EXP = "exp"
    MMF = "mmf"

    @property
    def n_coeffs(self) -> int:
        return 4 if self is CurveFamily.MMF else 3


class DivergenceWarning(RuntimeWarning):
    """An ensemble member diverged twice and was dropped."""


def family_eval(family: CurveFamily, coeffs, x):
    """Evaluate the family at ``x``; ``coeffs`` has shape (..., n_coeffs)."""
    family = CurveFamily(family)
    coeffs = np.asarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    a, b, c = coeffs[..., 0], coeffs[..., 1], coeffs[..., 2]
    if family is CurveFamily.PL:
        if np.any(x <= 0):
            raise ValueError("power-law family needs x > 0")
        return a * x ** (-b) + c
    if family is CurveFamily.EXP:
        return a * np.exp(-b * x) + c
    u = x ** coeffs[..., 3]
    return (a * b + c * u) / (b + u)


def _family_grad(family: CurveFamily, coeffs, x):
    """Value and d f / d coeffs for per-point coefficient rows."""
    a, b, c = coeffs[:, 0], coeffs[:, 1], coeffs[:, 2]
    g = np.empty_like(coeffs)
    if family is CurveFamily.PL:
        p = x ** (-b)
        f = a * p + c
        g[:, 0] = p
        g[:, 1] = -a * p * np.log(x)
        g[:, 2] = 1.0
    elif family is CurveFamily.EXP:
        e = np.exp(-b * x)
        f = a * e + c
        g[:, 0] = e
        g[:, 1] = -a * x * e
        g[:, 2] = 1.0
    else:
        d = coeffs[:, 3]
        u = x**d
        den = b + u
        f = (a * b + c * u) / den
        g[:, 0] = b / den
        g[:, 1] = u * (a - c) / den**2
        g[:, 2] = u / den
        logx = np.log(np.where(x > 0, x, 1.0))
        g[:, 3] = np.where(x > 0, b * (c - a) / den**2 * u * logx, 0.0)
    return f, g


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class _Member:
    params: list  # W1, b1, W2, b2, W3, b3

    def forward(self, u):
        W1, b1, W2, b2, W3, b3 = self.params
        h1 = np.tanh(u @ W1 + b1)
        h2 = np.tanh(h1 @ W2 + b2)
        z = h2 @ W3 + b3
        return _softplus(z), (u, h1, h2, z)

    def backward(self, cache, d_coeffs):
        u, h1, h2, z = cache
        W1, b1, W2, b2, W3, b3 = self.params
        dz = d_coeffs * _sigmoid(z)
        dW3 = h2.T @ dz
        db3 = dz.sum(0)
        dh2 = dz @ W3.T * (1 - h2**2)
        dW2 = h1.T @ dh2
        db2 = dh2.sum(0)
        dh1 = dh2 @ W2.T * (1 - h1**2)
        dW1 = u.T @ dh1
        db1 = dh1.sum(0)
        return [dW1, db1, dW2, db2, dW3, db3]


def initial_coeffs(family: CurveFamily, x, y) -> np.ndarray:
    """Coefficients of a family member spanning the pooled data's range.

    Used as the starting output of every network so that training begins
    near a curve of the right scale instead of at unit coefficients.
    """
    family = CurveFamily(family)
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    hi, lo = float(y.max()), float(y.min())
    span = max(hi - lo, 1e-3)
    floor = max(lo, 1e-2 * span)
    if family is CurveFamily.PL:
        return np.array([span * float(x.min()) ** 0.5, 0.5, floor])
    if family is CurveFamily.EXP:
        return np.array([span, 1.0, floor])
    return np.array([max(hi, floor + span), 1.0, floor, 1.0])


def _softplus_inv(y):
    return y + np.log(-np.expm1(-y))


def _init_member(rng, n_out: int, start=None) -> _Member:
    def glorot(n_in, n_out):
        return rng.normal(0.0, np.sqrt(2.0 / (n_in + n_out)), (n_in, n_out))

    # softplus(0.5413) = 1: without a data-derived start every coefficient begins near one
    bias = np.full(n_out, 0.5413) if start is None else _softplus_inv(np.asarray(start, dtype=float))
    return _Member(
        [
            glorot(1, HIDDEN),
            np.zeros(HIDDEN),
            glorot(HIDDEN, HIDDEN),
            np.zeros(HIDDEN),
            glorot(HIDDEN, n_out),
            bias,
        ]
    )


@dataclass(frozen=True, eq=False)
class EnsembleSurrogate:
    family: CurveFamily
    members: tuple
    log_n_mean: float
    log_n_std: float
    x_range: tuple = (0.0, 1.0)

    @property
    def trained(self) -> bool:
        return len(self.members) > 0

    def _scale(self, n_params):
        n = np.atleast_1d(np.asarray(n_params, dtype=float))
        return ((np.log(n) - self.log_n_mean) / self.log_n_std).reshape(-1, 1)

    def member_coeffs(self, n_params) -> np.ndarray:
        """Coefficients of every member, shape (members, sizes, n_coeffs)."""
        u = self._scale(n_params)
        return np.stack([m.forward(u)[0] for m in self.members])


def _train_member(member: _Member, family, u, idx, x, y, iterations, lr):
    n_pts = y.size
    moments = [(np.zeros_like(p), np.zeros_like(p)) for p in member.params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    loss = np.inf
    for t in range(1, iterations + 1):
        coeffs, cache = member.forward(u)
        f, g = _family_grad(family, coeffs[idx], x)
        resid = f - y
        loss = float(np.mean(resid**2))
        if not np.isfinite(loss):
            return False, loss
        d_point = (2.0 / n_pts) * resid[:, None] * g
        d_coeffs = np.zeros_like(coeffs)
        np.add.at(d_coeffs, idx, d_point)
        grads = member.backward(cache, d_coeffs)
        if not all(np.all(np.isfinite(gr)) for gr in grads):
            return False, np.inf
        for p, gr, (m, v) in zip(member.params, grads, moments):
            m *= b1
            m += (1 - b1) * gr
            v *= b2
            v += (1 - b2) * gr**2
            p -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    coeffs, _ = member.forward(u)
    final = float(np.mean((family_eval(family, coeffs[idx], x) - y) ** 2))
    return bool(np.isfinite(final)), final


def fit(
    curves,
    family,
    iterations: int = 1000,
    seed=0,
    members: int = N_MEMBERS,
    lr: float = 1e-2,
) -> EnsembleSurrogate:
    """Train an ensemble on ``(n_params, x, y)`` triples in normalized units."""
    family = CurveFamily(family)
    curves = [(float(n), np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for n, x, y in curves]
    sizes = sorted({n for n, _, _ in curves})
    if len(sizes) < 2:
        raise ValueError("need at least 2 distinct model sizes")
    for n, x, y in curves:
        if x.size != y.size:
            raise ValueError("inputs and outputs differ in length")
        if x.size < 3:
            raise ValueError("each curve needs at least 3 points")
    if iterations < 1 or members < 1:
        raise ValueError("iterations and members must be >= 1")
    log_n = np.log([n for n, _, _ in curves])
    mean, std = float(log_n.mean()), float(log_n.std()) or 1.0
    u = ((log_n - mean) / std).reshape(-1, 1)
    idx = np.concatenate([np.full(x.size, i) for i, (_, x, _) in enumerate(curves)])
    x = np.concatenate([c[1] for c in curves])
    y = np.concatenate([c[2] for c in curves])
    if family is CurveFamily.PL and np.any(x <= 0):
        raise ValueError("power-law family needs x > 0")

    rng = np.random.default_rng(seed)
    start = initial_coeffs(family, x, y)
    kept = []
    for i in range(members):
        for attempt in range(2):
            member = _init_member(rng, family.n_coeffs, start)
            ok, _ = _train_member(member, family, u, idx, x, y, iterations, lr)
            if ok:
                kept.append(member)
                break
        else:
            warnings.warn(f"ensemble member {i} diverged twice; excluded", DivergenceWarning, stacklevel=2)
    if not kept:
        raise RuntimeError("every ensemble member diverged")
    return EnsembleSurrogate(family, tuple(kept), mean, std, (float(x.min()), float(x.max())))


def predict(model: EnsembleSurrogate, n_params, x) -> np.ndarray:
    """Ensemble-mean prediction for one model size at inputs ``x``."""
    if not model.trained:
        raise RuntimeError("ensemble is not trained")
    coeffs = model.member_coeffs(n_params)[:, 0, :]
    x = np.asarray(x, dtype=float)
    vals = np.stack([family_eval(model.family, c, x) for c in coeffs])
    return vals.mean(axis=0)


def min_predicted_loss(
    model: EnsembleSurrogate, n_params, horizon: float, start: float | None = None, n_grid: int = 256, spec=None
) -> float:
    """Lowest ensemble-mean value on a grid from ``start`` to ``horizon``.

    ``start`` defaults to ``horizon`` (a single evaluation). Returned in
    normalized units unless a NormalizationSpec is given.
    """
    if not model.trained:
        raise RuntimeError("ensemble is not trained")
    start = horizon if start is None else start
    if horizon < start:
        raise ValueError("horizon precedes start")
    grid = np.array([horizon]) if horizon == start else np.linspace(start, horizon, n_grid)
    best = float(predict(model, n_params, grid).min())
    return float(spec.loss(best)) if spec is not None else best
