"""Multitask GP over learning curves with a coregionalized composite kernel.

Each learning curve is one task. The joint covariance is

    Sigma = B1 (x) K_expdec + B2 (x) K_white + B3 (x) K_bias,
    B_j   = w_j w_j^T + diag(kappa_j),

with rank-one ``w_j``, ``w3 = 0`` and a unit bias variance. Tasks may have
their own input vectors; the white kernel then couples two observations
only when their inputs coincide exactly, which reduces to the Kronecker form
on a shared grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from . import numopt

JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
LOG_2PI = np.log(2 * np.pi)
# Lower bound on the observation noise in the unconstrained parameterization.
# Noiseless curves otherwise drive noise_var to 0 and the likelihood never settles.
NOISE_FLOOR = 1e-6


class IllConditionedKernel(np.linalg.LinAlgError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def expdec_kernel(x, x2, alpha, beta, var):
    """var * beta**alpha / (x + x2 + beta)**alpha."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    return var * (beta / (x + x2 + beta)) ** alpha


@dataclass(frozen=True, eq=False)
class KernelHyperparams:
    expdec_alpha: float
    expdec_beta: float
    expdec_var: float
    white_var: float
    noise_var: float
    w1: np.ndarray
    kappa1: np.ndarray
    w2: np.ndarray
    kappa2: np.ndarray
    kappa3: np.ndarray

    SCALARS = ("expdec_alpha", "expdec_beta", "expdec_var", "white_var", "noise_var")
    VECTORS = ("w1", "kappa1", "w2", "kappa2", "kappa3")

    def __post_init__(self):
        for name in self.VECTORS:
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        q = self.w1.size
        if any(getattr(self, n).size != q for n in self.VECTORS):
            raise ValueError("all coregionalization vectors must have length Q")
        for name in self.SCALARS:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if np.any(self.w1 <= 0) or np.any(self.kappa1 <= 0) or np.any(self.kappa3 <= 0):
            raise ValueError("w1, kappa1 and kappa3 must be positive")
        if np.any(self.kappa2 < 0):
            raise ValueError("kappa2 must be non-negative")

    @property
    def n_tasks(self) -> int:
        return self.w1.size

    @property
    def B1(self):
        return np.outer(self.w1, self.w1) + np.diag(self.kappa1)

    @property
    def B2(self):
        return np.outer(self.w2, self.w2) + np.diag(self.kappa2)

    @property
    def B3(self):
        return np.diag(self.kappa3)

    # Unconstrained layout: 5 scalars, then w1, kappa1, w2, kappa2, kappa3.
    # noise_var maps to NOISE_FLOOR + softplus(raw), so values at or below the
    # floor do not round-trip.
    def to_raw(self) -> np.ndarray:
        vals = [getattr(self, n) for n in self.SCALARS]
        vals[4] = max(vals[4] - NOISE_FLOOR, 1e-300)
        scal = softplus_inv(vals)
        return np.concatenate(
            [
                scal,
                softplus_inv(self.w1),
                softplus_inv(self.kappa1),
                self.w2,
                softplus_inv(np.maximum(self.kappa2, 1e-300)),
                softplus_inv(self.kappa3),
            ]
        )

    @classmethod
    def from_raw(cls, raw, n_tasks: int) -> KernelHyperparams:
        raw = np.asarray(raw, dtype=float)
        q = n_tasks
        sp = softplus(raw)
        sp[4] += NOISE_FLOOR
        v = [raw[5 + i * q : 5 + (i + 1) * q] for i in range(5)]
        return cls(
            *(float(s) for s in sp[:5]),
            w1=softplus(v[0]),
            kappa1=softplus(v[1]),
            w2=v[2].copy(),
            kappa2=softplus(v[3]),
            kappa3=softplus(v[4]),
        )

    @staticmethod
    def n_raw(n_tasks: int) -> int:
        return 5 + 5 * n_tasks


class _Design:
    """Input geometry shared by every likelihood evaluation."""

    def __init__(self, inputs):
        inputs = [np.asarray(x, dtype=float).reshape(-1) for x in inputs]
        if not inputs:
            raise ValueError("need at least one task")
        self.sizes = np.array([x.size for x in inputs])
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.blocks = [slice(int(s), int(s + n)) for s, n in zip(self.starts, self.sizes)]
        self.x = np.concatenate(inputs)
        self.n = self.x.size
        self.task = np.repeat(np.arange(len(inputs)), self.sizes)
        self.n_tasks = len(inputs)
        self.sum = self.x[:, None] + self.x[None, :]
        # index pairs with coinciding inputs (the white kernel's support)
        self.pair_i, self.pair_j = np.nonzero(self.x[:, None] == self.x[None, :])
        self.pair_ti, self.pair_tj = self.task[self.pair_i], self.task[self.pair_j]

    def add_blocks(self, M, per_task):
        for b, v in zip(self.blocks, per_task):
            M[b, b] += v

    def block_sums(self, M):
        return np.array([M[b, b].sum() for b in self.blocks])

    def aggregate(self, M):
        """Sum the (task, task) blocks of an n x n matrix into a Q x Q one."""
        return np.add.reduceat(np.add.reduceat(M, self.starts, axis=0), self.starts, axis=1)


def _covariance(h: KernelHyperparams, design: _Design):
    log_sb = np.log(design.sum + h.expdec_beta)
    Kexp = np.exp(h.expdec_alpha * (np.log(h.expdec_beta) - log_sb))
    Kexp *= h.expdec_var
    w1e = h.w1[design.task]
    B1e = np.multiply.outer(w1e, w1e)
    design.add_blocks(B1e, h.kappa1)
    Sigma = B1e * Kexp
    white = h.white_var * h.B2[design.pair_ti, design.pair_tj]
    Sigma[design.pair_i, design.pair_j] += white
    design.add_blocks(Sigma, h.kappa3)
    return Sigma, Kexp, B1e, log_sb


def build_covariance(hyper: KernelHyperparams, inputs) -> np.ndarray:
    """Full noise-free covariance for the stacked per-task inputs."""
    design = _Design(inputs)
    if design.n_tasks != hyper.n_tasks:
        raise ValueError("number of input vectors must equal Q")
    return _covariance(hyper, design)[0]


def _cholesky(K):
    """Lower Cholesky factor, escalating relative diagonal jitter on failure."""
    scale = float(np.mean(np.diag(K)))
    diag = np.diag_indices(K.shape[0])
    for jitter in JITTER_LADDER:
        Kj = K
        if jitter:
            Kj = K.copy()
            Kj[diag] += jitter * scale
        L, info = lapack.dpotrf(Kj, lower=1, clean=1)
        if info == 0:
            return L, jitter
    raise IllConditionedKernel("ill-conditioned kernel")


def _nll_grad(raw, design: _Design, y):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        nll, grad = _nll_grad_unchecked(raw, design, y)
    if not (np.isfinite(nll) and np.all(np.isfinite(grad))):
        return np.inf, np.full(raw.shape, np.nan)
    return nll, grad


def _nll_grad_unchecked(raw, design: _Design, y):
    q = design.n_tasks
    try:
        h = KernelHyperparams.from_raw(raw, q)
    except ValueError:  # a softplus underflowed to zero
        return np.inf, np.full(raw.shape, np.nan)
    K, Kexp, B1e, log_sb = _covariance(h, design)
    n = y.size
    K[np.diag_indices(n)] += h.noise_var
    try:
        L, _ = _cholesky(K)
    except IllConditionedKernel:
        return np.inf, np.full(raw.shape, np.nan)
    a = lapack.dpotrs(L, y, lower=1)[0]
    nll = 0.5 * y @ a + np.log(np.diag(L)).sum() + 0.5 * n * LOG_2PI
    M = lapack.dpotri(L, lower=1)[0]  # lower triangle of K^-1, zeros above
    W = M + M.T
    W[np.diag_indices(n)] *= 0.5
    W -= np.multiply.outer(a, a)
    W *= 0.5  # W = dNLL/dK

    P1 = W * Kexp
    G1 = design.aggregate(P1)
    P1 *= B1e
    s_all = P1.sum()
    g_var = s_all / h.expdec_var
    g_alpha = s_all * np.log(h.expdec_beta) - np.vdot(P1, log_sb)
    g_beta = h.expdec_alpha * (s_all / h.expdec_beta - np.vdot(P1, 1.0 / (design.sum + h.expdec_beta)))
    Wp = W[design.pair_i, design.pair_j]
    g_white = np.sum(Wp * h.B2[design.pair_ti, design.pair_tj])
    G2 = np.zeros((q, q))
    np.add.at(G2, (design.pair_ti, design.pair_tj), Wp)
    G2 *= h.white_var
    g_noise = np.trace(W)
    G1 = 0.5 * (G1 + G1.T)
    G2 = 0.5 * (G2 + G2.T)

    grad_nat = np.concatenate(
        [
            [g_alpha, g_beta, g_var, g_white, g_noise],
            2.0 * G1 @ h.w1,
            np.diag(G1),
            2.0 * G2 @ h.w2,
            np.diag(G2),
            design.block_sums(W),
        ]
    )
    chain = sigmoid(raw)
    chain[5 + 2 * q : 5 + 3 * q] = 1.0  # w2 is unconstrained
    return float(nll), grad_nat * chain


def negative_log_marginal_likelihood(raw, inputs, outputs):
    """Negative log marginal likelihood and its gradient w.r.t. raw hyperparameters."""
    design = _Design(inputs)
    y = np.concatenate([np.asarray(o, dtype=float).reshape(-1) for o in outputs])
    return _nll_grad(np.asarray(raw, dtype=float), design, y)


def log_marginal_likelihood(hyper: KernelHyperparams, inputs, outputs) -> float:
    return -negative_log_marginal_likelihood(hyper.to_raw(), inputs, outputs)[0]


def sample_raw(rng: np.random.Generator, n_tasks: int) -> np.ndarray:
    """Random restart point in the unconstrained parameterization."""
    q = n_tasks

    def logu(size=None):
        return softplus_inv(10 ** rng.uniform(-3, 1, size))

    return np.concatenate(
        [
            logu(5),
            rng.normal(0.0, 1.0, q),
            logu(q),
            rng.normal(0.0, 1.0, q),
            logu(q),
            logu(q),
        ]
    )


@dataclass(frozen=True, eq=False)
class LmcSurrogate:
    hyper: KernelHyperparams
    train_inputs: list
    train_outputs: list
    chol: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    jitter: float = 0.0
    nll: float = float("nan")

    @property
    def n_tasks(self) -> int:
        return len(self.train_inputs)

    def _cross(self, task: int, xq):
        design = self._design
        h = self.hyper
        xq = np.asarray(xq, dtype=float).reshape(-1)
        t = design.task
        kexp = expdec_kernel(xq[:, None], design.x[None, :], h.expdec_alpha, h.expdec_beta, h.expdec_var)
        same = (xq[:, None] == design.x[None, :]).astype(float)
        return (
            h.B1[task, t][None, :] * kexp
            + h.white_var * h.B2[task, t][None, :] * same
            + (h.kappa3[task] * (t == task))[None, :]
        )

    def _prior_var(self, task: int, xq):
        h = self.hyper
        xq = np.asarray(xq, dtype=float).reshape(-1)
        kexp = expdec_kernel(xq, xq, h.expdec_alpha, h.expdec_beta, h.expdec_var)
        return h.B1[task, task] * kexp + h.white_var * h.B2[task, task] + h.kappa3[task]

    @property
    def _design(self) -> _Design:
        d = self.__dict__.get("_design_cache")
        if d is None:
            d = _Design(self.train_inputs)
            object.__setattr__(self, "_design_cache", d)
        return d


def _factorize(hyper: KernelHyperparams, inputs, outputs):
    design = _Design(inputs)
    y = np.concatenate([np.asarray(o, dtype=float).reshape(-1) for o in outputs])
    K = _covariance(hyper, design)[0]
    K[np.diag_indices(y.size)] += hyper.noise_var
    L, jitter = _cholesky(K)
    weights = lapack.dpotrs(L, y, lower=1)[0]
    nll = 0.5 * y @ weights + np.log(np.diag(L)).sum() + 0.5 * y.size * LOG_2PI
    return L, weights, jitter, float(nll)


def condition(hyper: KernelHyperparams, inputs, outputs) -> LmcSurrogate:
    """Build a surrogate for fixed hyperparameters (no optimization)."""
    inputs = [np.asarray(x, dtype=float).reshape(-1) for x in inputs]
    outputs = [np.asarray(o, dtype=float).reshape(-1) for o in outputs]
    if len(inputs) != hyper.n_tasks or len(outputs) != hyper.n_tasks:
        raise ValueError("need one input and output vector per task")
    L, weights, jitter, nll = _factorize(hyper, inputs, outputs)
    return LmcSurrogate(hyper, inputs, outputs, L, weights, jitter, nll)


def fit(
    data,
    restarts: int = 20,
    seed=0,
    max_iter: int = 500,
    tol: float = 1e-8,
    ftol: float = 1e-9,
    init: KernelHyperparams | None = None,
) -> LmcSurrogate:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    ``data`` is a sequence of ``(inputs, outputs)`` pairs, one per task, in
    normalized coordinates.
    """
    inputs = [np.asarray(x, dtype=float).reshape(-1) for x, _ in data]
    outputs = [np.asarray(y, dtype=float).reshape(-1) for _, y in data]
    if not inputs:
        raise ValueError("need at least one task")
    for x, y in zip(inputs, outputs):
        if x.size != y.size:
            raise ValueError("inputs and outputs differ in length")
        if x.size < 2:
            raise ValueError("each task needs at least 2 points")
    q = len(inputs)
    design = _Design(inputs)
    y = np.concatenate(outputs)

    def objective(raw):
        return _nll_grad(raw, design, y)

    res = numopt.minimize_with_restarts(
        objective,
        lambda rng: sample_raw(rng, q),
        restarts=restarts,
        seed=seed,
        inits=() if init is None else (init.to_raw(),),
        max_iter=max_iter,
        tol=tol,
        ftol=ftol,
    )
    hyper = KernelHyperparams.from_raw(res.params, q)
    return condition(hyper, inputs, outputs)


def predict(model: LmcSurrogate, task: int, query_inputs):
    """Posterior mean and marginal variance of task ``task`` at ``query_inputs``."""
    if not 0 <= task < model.n_tasks:
        raise IndexError(f"task {task} out of range")
    Ks = model._cross(task, query_inputs)
    mean = Ks @ model.weights
    v = solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    var = model._prior_var(task, query_inputs) - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def confidence_bounds(model: LmcSurrogate, task: int, query_inputs, z: float = 2.0):
    if not z >= 0:
        raise ValueError("z must be >= 0")
    mean, var = predict(model, task, query_inputs)
    sd = np.sqrt(var)
    return mean - z * sd, mean + z * sd


def min_predicted_loss(model: LmcSurrogate, task: int, horizon: float, n_grid: int = 256, spec=None):
    """Lowest posterior mean between the task's last input and ``horizon``.

    Returned in normalized units unless a NormalizationSpec is given.
    """
    last = float(model.train_inputs[task][-1])
    if horizon < last:
        raise ValueError("horizon precedes the last training input")
    grid = np.array([last]) if horizon == last else np.linspace(last, horizon, n_grid)
    mean, _ = predict(model, task, grid)
    best = float(mean.min())
    return float(spec.loss(best)) if spec is not None else best
