"""Information measures on joint distributions and the entropic steering witness.

All entropies are in bits. Joint arrays are indexed ``[particle1, particle2]``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AllZero, ShapeMismatch
from .spdc_model import POSITION, JointDistribution


def _values(joint) -> np.ndarray:
    p = np.asarray(getattr(joint, "values", joint), dtype=float)
    if p.ndim != 2:
        raise ShapeMismatch("joint distribution must be 2-D")
    return p


def shannon_entropy(p) -> float:
    """Entropy in bits of a probability array (any shape), with 0 log 0 = 0."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def threshold_normalize(signal, fraction: float, grid=None, domain: str = POSITION) -> JointDistribution:
    """Zero entries below ``fraction * max(signal)``, clamp negatives, renormalise.

    Raises
    ------
    AllZero
        If nothing survives the threshold.
    """
    x = np.array(getattr(signal, "values", signal), dtype=float)
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    peak = x.max()
    if not peak > 0:
        raise AllZero("signal has no positive entries")
    x[x < fraction * peak] = 0.0
    x[x < 0] = 0.0
    total = x.sum()
    if not total > 0:
        raise AllZero(f"threshold {fraction} removed every entry")
    if grid is None:
        grid = getattr(signal, "grid", None)
        domain = getattr(signal, "domain", domain)
    return JointDistribution(x / total, grid, domain)


def conditional_entropy(joint, conditioned_on: int = 1) -> float:
    """``H(A|B) = H(A,B) - H(B)`` where ``B`` is the particle along ``conditioned_on``.

    With the default ``conditioned_on=1`` this is ``H(X1|X2)``.
    """
    p = _values(joint)
    p = p / p.sum()
    return max(shannon_entropy(p) - shannon_entropy(p.sum(axis=1 - conditioned_on)), 0.0)


def marginal_entropies(joint) -> tuple[float, float]:
    p = _values(joint)
    p = p / p.sum()
    return shannon_entropy(p.sum(axis=1)), shannon_entropy(p.sum(axis=0))


def mutual_information(joint) -> float:
    """``I = H(A) + H(B) - H(A,B)`` in bits."""
    p = _values(joint)
    p = p / p.sum()
    h1, h2 = marginal_entropies(p)
    return max(h1 + h2 - shannon_entropy(p), 0.0)


def steering_bound(dx: float, dk: float, dims: int = 1) -> float:
    """Right-hand side ``dims * log2(pi e / (dx dk))`` of the entropic steering
    inequality. A non-positive bound cannot be violated and triggers a warning."""
    if not (dx > 0 and dk > 0):
        raise ValueError("pixel widths must be positive")
    bound = dims * math.log2(math.pi * math.e / (dx * dk))
    if bound <= 0:
        warnings.warn(
            f"steering bound {bound:.3g} bits is vacuous for dx*dk={dx * dk:.3g} >= pi*e",
            RuntimeWarning,
            stacklevel=2,
        )
    return bound


@dataclass(frozen=True)
class SteeringReport:
    h_x_cond: float
    h_k_cond: float
    bound: float
    violation: float
    entangled: bool
    dims: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self, **provenance) -> str:
        """JSON text holding every field plus provenance such as
        ``run_id``, ``M``, ``flux`` and ``threshold``."""
        return json.dumps({**self.to_dict(), "provenance": provenance}, sort_keys=True, default=float)


def steering_witness(pos, mom, dims: int = 1, dx: float | None = None, dk: float | None = None) -> SteeringReport:
    """Evaluate ``H(X1|X2) + H(K1|K2) < bound`` on a pair of joint distributions.

    Pixel widths are taken from the distributions' grids unless given.
    """
    if dx is None or dk is None:
        gx, gk = getattr(pos, "grid", None), getattr(mom, "grid", None)
        if gx is None or gk is None:
            raise ValueError("pixel widths are needed when distributions carry no grid")
        if gx != gk:
            raise ValueError("position and momentum distributions are on different grids")
        dx, dk = gx.dx, gk.dk
    hx = conditional_entropy(pos)
    hk = conditional_entropy(mom)
    bound = steering_bound(dx, dk, dims)
    violation = bound - (hx + hk)
    return SteeringReport(hx, hk, bound, violation, bool(violation > 0), int(dims))


def mse(a, b) -> float:
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes {a.shape} and {b.shape} differ")
    return float(np.mean((a - b) ** 2))
