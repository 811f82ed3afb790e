"""Anisotropic total-variation regularised least squares.

Solves::

    min_X  (mu / 2) || Y - A X ||^2 + TV(X)

with an augmented-Lagrangian alternating-direction scheme: the discrete
gradient is split off into an auxiliary variable ``w`` (soft-threshold
update), the quadratic subproblem in ``X`` is solved approximately by a
few warm-started conjugate-gradient steps, and the multipliers of the
constraint ``D X = w`` are updated after each inner loop.

Internally the operator is divided by its row norm and the signal by
``alpha = max|A^T Y| / M`` (the scale of the initial estimate), so ``mu``
has the same meaning for any measurement scale or dimension.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Diverged, ShapeMismatch
from .random_filters import IdentityOperator

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    mu: float = 2.0**8
    beta: float | None = 2.0**5
    max_outer_iterations: int = 300
    relative_change_tolerance: float = 1e-5
    nonnegativity: bool = False
    max_inner_iterations: int = 8
    inner_tolerance: float = 1e-3
    cg_steps: int = 3
    verbose: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.relative_change_tolerance > 0:
            raise ValueError("relative_change_tolerance must be positive")
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1 or self.cg_steps < 1:
            raise ValueError("iteration counts must be positive")

    @property
    def penalty(self) -> float:
        # None ties the splitting penalty to the fidelity weight
        return self.mu if self.beta is None else self.beta


@dataclass
class ReconstructionResult:
    signal: np.ndarray
    final_residual: float
    final_tv: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)
    lagrangian_history: list = field(default_factory=list, repr=False)

    def image(self) -> np.ndarray:
        n = math.isqrt(self.signal.size)
        return self.signal.reshape(n, n)



def _grad(z: np.ndarray) -> np.ndarray:
    return np.concatenate(((z[:, 1:] - z[:, :-1]).ravel(), (z[1:, :] - z[:-1, :]).ravel()))


def _grad_adj(p: np.ndarray, shape) -> np.ndarray:
    n1, n2 = shape
    split = n1 * (n2 - 1)
    ph = p[:split].reshape(n1, n2 - 1)
    pv = p[split:].reshape(n1 - 1, n2)
    out = np.zeros(shape)
    out[:, :-1] -= ph
    out[:, 1:] += ph
    out[:-1, :] -= pv
    out[1:, :] += pv
    return out


def tv(signal, shape=None) -> float:
    """Anisotropic total variation: sum of ``|X_i - X_j|`` over horizontally
    and vertically adjacent pixels, without wrap-around."""
    x = np.asarray(signal, dtype=float)
    if shape is None:
        if x.ndim == 2:
            shape = x.shape
        else:
            n = math.isqrt(x.size)
            if n * n != x.size:
                raise ShapeMismatch("flat signal is not square; pass shape")
            shape = (n, n)
    if x.size != shape[0] * shape[1]:
        raise ShapeMismatch(f"signal of size {x.size} does not fit shape {shape}")
    return float(np.abs(_grad(x.reshape(shape))).sum())


def _shrink(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def tv_min(y, operator, config: SolverConfig = SolverConfig(), x0=None) -> ReconstructionResult:
    """Reconstruct a signal from measurements ``y = operator.forward(x)``.

    ``operator`` needs ``forward``, ``adjoint``, ``shape``, ``image_shape``
    and ``row_norm_sq`` (see :class:`~eprcs.random_filters.SensingOperator`).

    Raises
    ------
    Diverged
        If the objective becomes non-finite.
    """
    y = np.asarray(y, dtype=float)
    M, N = operator.shape
    shape = operator.image_shape
    if y.shape != (M,):
        raise ShapeMismatch(f"y has shape {y.shape}, operator expects ({M},)")
    if not np.all(np.isfinite(y)):
        raise ValueError("measurements must be finite")

    mu, beta = config.mu, config.penalty
    root = math.sqrt(operator.row_norm_sq)
    back = operator.adjoint(y) / M
    alpha = float(np.max(np.abs(back)))
    init = back if x0 is None else np.asarray(x0, dtype=float).ravel()
    if alpha == 0.0:
        zero = np.zeros(N)
        return ReconstructionResult(zero, float(np.linalg.norm(y)), 0.0, 0, True)

    b = y / (root * alpha)

    def fwd(z):
        return operator.forward(z.ravel()) / root

    def adj(r):
        return operator.adjoint(r).reshape(shape) / root

    def hess(v):
        return mu * adj(fwd(v)) + beta * _grad_adj(_grad(v), shape)

    def lagrangian(z, w, nu):
        dz = _grad(z) - w
        r = fwd(z) - b
        return float(np.abs(w).sum() - nu @ dz + beta / 2 * dz @ dz + mu / 2 * r @ r)

    z = init.reshape(shape) / alpha
    if config.nonnegativity:
        z = np.maximum(z, 0.0)
    nu = np.zeros(_grad(z).size)
    w = _shrink(_grad(z), 1.0 / beta)
    Atb = mu * adj(b)

    history: list = []
    al_history: list = []
    converged = False
    iterations = 0
    for outer in range(config.max_outer_iterations):
        iterations = outer + 1
        z_outer = z
        epoch = []
        for _ in range(config.max_inner_iterations):
            z_prev = z
            w = _shrink(_grad(z) - nu / beta, 1.0 / beta)
            rhs = Atb + _grad_adj(beta * w + nu, shape)
            # conjugate gradient, warm-started at the current iterate
            r = rhs - hess(z)
            p = r.copy()
            rr = float(np.sum(r * r))
            for _ in range(config.cg_steps):
                if rr == 0.0:
                    break
                Hp = hess(p)
                step = rr / float(np.sum(p * Hp))
                z = z + step * p
                r = r - step * Hp
                rr_new = float(np.sum(r * r))
                p = r + (rr_new / rr) * p
                rr = rr_new
            if config.nonnegativity:
                z = np.maximum(z, 0.0)
            value = lagrangian(z, w, nu)
            if not math.isfinite(value):
                raise Diverged(f"objective became non-finite at outer iteration {outer} ({config})")
            epoch.append(value)
            if np.linalg.norm(z - z_prev) <= config.inner_tolerance * max(np.linalg.norm(z), 1e-300):
                break
        al_history.append(epoch)
        nu = nu - beta * (_grad(z) - w)
        change = np.linalg.norm(z - z_outer) / max(np.linalg.norm(z), 1e-300)
        if config.verbose or log.isEnabledFor(logging.DEBUG):
            res = fwd(z) - b
            obj = mu / 2 * float(res @ res) + tv(z)
            entry = {
                "iteration": iterations,
                "objective": obj,
                "residual": float(np.linalg.norm(res)) * root * alpha,
                "tv": tv(z) * alpha,
                "relative_change": float(change),
            }
            history.append(entry)
            log.info(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in entry.items()))
        if change < config.relative_change_tolerance:
            converged = True
            break

    x = (z * alpha).ravel()
    residual = float(np.linalg.norm(y - operator.forward(x)))
    return ReconstructionResult(x, residual, tv(x, shape), iterations, converged, history, al_history)


def tv_denoise(signal, weight: float, config: SolverConfig = SolverConfig()) -> np.ndarray:
    """TV denoising: :func:`tv_min` with the identity operator and ``mu = weight``."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch("tv_denoise expects a 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal must be finite")
    cfg = replace(config, mu=float(weight), beta=config.beta)
    result = tv_min(x.ravel(), IdentityOperator(x.shape), cfg)
    return result.signal.reshape(x.shape)
