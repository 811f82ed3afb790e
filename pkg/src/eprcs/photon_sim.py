"""Sequential random filtering of a biphoton in momentum and position.

A filter set holds four binary masks. Each mask splits its photon into a
transmitted (T) and a rejected (R) port, so every filter set has 16
coincidence outcomes. Outcome probabilities are stored in a 4x4 array
indexed ``[position_combo, momentum_combo]`` with combos ordered
``TT, TR, RT, RR`` (signal port first).

By default momentum is filtered first, as in the laboratory setup. The
opposite order (position first) is available through ``order``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spdc_model import BiphotonAmplitude, JointDistribution, POSITION, centered_dft, centered_idft

COMBOS = ("TT", "TR", "RT", "RR")
MOMENTUM_FIRST = "momentum_first"
POSITION_FIRST = "position_first"
ORDERS = (MOMENTUM_FIRST, POSITION_FIRST)


@dataclass(frozen=True)
class FilterSet:
    momentum_masks: tuple[np.ndarray, np.ndarray]
    position_masks: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        masks = [np.asarray(m) for m in (*self.momentum_masks, *self.position_masks)]
        n = masks[0].shape
        if any(m.shape != n or m.ndim != 1 for m in masks):
            raise ValueError("all four masks must be 1-D with equal length")
        if any(not np.all((m == 0) | (m == 1)) for m in masks):
            raise ValueError("masks must be binary")


@dataclass(frozen=True)
class PortProbabilities:
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (4, 4):
            raise ValueError("port probabilities must be 4x4")
        if np.any(p < -1e-15):
            raise ValueError("negative port probability")
        object.__setattr__(self, "p", np.clip(p, 0.0, None))


@dataclass(frozen=True)
class CoincidenceRecord:
    counts: np.ndarray
    mean_flux: float

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (4, 4) or np.any(c < 0) or not np.issubdtype(c.dtype, np.integer):
            raise ValueError("counts must be a 4x4 array of non-negative integers")


def _ports(masks: np.ndarray) -> np.ndarray:
    # (..., n) -> (..., 2, n): transmitted mask, then its complement
    masks = np.asarray(masks, dtype=float)
    return np.stack((masks, 1.0 - masks), axis=-2)


def port_probabilities_batch(state: BiphotonAmplitude, f, g, b1, b2, order: str = MOMENTUM_FIRST) -> np.ndarray:
    """Vectorised :func:`port_probabilities` over a leading batch axis.

    ``f, g`` are momentum masks and ``b1, b2`` position masks, each of
    shape ``(batch, n)``. Returns an array of shape ``(batch, 4, 4)``.
    """
    psi = state.discrete()
    F1, F2 = _ports(f), _ports(g)
    B1, B2 = _ports(b1), _ports(b2)
    batch, n = F1.shape[0], psi.shape[0]
    if order == MOMENTUM_FIRST:
        phi = centered_dft(psi)
        # (batch, s1, s2, n, n)
        filtered = phi * F1[:, :, None, :, None] * F2[:, None, :, None, :]
        intensity = np.abs(centered_idft(filtered)) ** 2
        intensity = intensity.reshape(batch, 4, n, n)
        return np.einsum("bcjl,btj,bul->btuc", intensity, B1, B2).reshape(batch, 4, 4)
    if order == POSITION_FIRST:
        filtered = psi * B1[:, :, None, :, None] * B2[:, None, :, None, :]
        intensity = np.abs(centered_dft(filtered)) ** 2
        intensity = intensity.reshape(batch, 4, n, n)
        return np.einsum("bcjl,btj,bul->bctu", intensity, F1, F2).reshape(batch, 4, 4)
    raise ValueError(f"unknown filtering order {order!r}")


def port_probabilities(state: BiphotonAmplitude, fs: FilterSet, order: str = MOMENTUM_FIRST) -> PortProbabilities:
    """Probabilities of the 16 coincidence outcomes for one filter set."""
    f, g = fs.momentum_masks
    b1, b2 = fs.position_masks
    p = port_probabilities_batch(state, np.atleast_2d(f), np.atleast_2d(g), np.atleast_2d(b1), np.atleast_2d(b2), order)
    return PortProbabilities(p[0])


def filtered_position_intensity(state: BiphotonAmplitude, f, g) -> np.ndarray:
    """Unnormalised ``|psi~(x1, x2)|**2`` after momentum masks ``f, g``.

    The total equals the probability of both photons being transmitted.
    """
    phi = centered_dft(state.discrete())
    mask = np.outer(np.asarray(f, dtype=float), np.asarray(g, dtype=float))
    return np.abs(centered_idft(phi * mask)) ** 2


def perturbed_position_distribution(state: BiphotonAmplitude, f, g) -> JointDistribution:
    I = filtered_position_intensity(state, f, g)
    total = I.sum()
    if total <= 0:
        raise ValueError("momentum masks reject the entire state")
    return JointDistribution(I / total, state.grid, POSITION)


def expected_filtered_intensity(state: BiphotonAmplitude) -> np.ndarray:
    """Ensemble mean of :func:`filtered_position_intensity` over masks whose
    pixels transmit independently with probability 1/2.

    Splitting each mask into its mean 1/2 and a zero-mean part, all cross
    terms average out and the result is::

        (|psi|^2 + (P1(x1) + P2(x2)) / n + 1 / n^2) / 16

    with ``P1, P2`` the single-particle position marginals. This is the
    discrete form of the ensemble-averaged disturbance expansion.
    """
    P = np.abs(state.discrete()) ** 2
    n = P.shape[0]
    p1 = P.sum(axis=1)
    p2 = P.sum(axis=0)
    return (P + (p1[:, None] + p2[None, :]) / n + P.sum() / n**2) / 16


def sample_counts(
    p: PortProbabilities,
    mean_flux: float,
    rng: np.random.Generator,
    efficiency: float = 1.0,
    dark_counts: float = 0.0,
) -> CoincidenceRecord:
    """Poisson coincidence counts with means ``mean_flux * efficiency * p + dark_counts``."""
    if mean_flux < 0:
        raise ValueError("mean_flux must be non-negative")
    probs = p.p if isinstance(p, PortProbabilities) else np.asarray(p, dtype=float)
    lam = mean_flux * efficiency * probs + dark_counts
    return CoincidenceRecord(rng.poisson(lam).astype(np.int64), float(mean_flux))


def random_masks(rng: np.random.Generator, shape) -> np.ndarray:
    """Binary masks whose pixels transmit independently with probability 1/2."""
    return rng.integers(0, 2, size=shape).astype(np.int8)


def ensemble_filtered_intensity(state: BiphotonAmplitude, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Mean of :func:`filtered_position_intensity` over ``trials`` random mask pairs.

    This is the position distribution of all photon pairs transmitted by
    both momentum masks, accumulated over the ensemble; it converges to
    :func:`expected_filtered_intensity`.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    n = state.grid.n
    total = np.zeros((n, n))
    for _ in range(trials):
        f, g = random_masks(rng, (2, n))
        total += filtered_position_intensity(state, f, g)
    return total / trials


def off_ridge_floor(intensity, ridge_std: float, dx: float, sigmas: float = 5.0) -> float:
    """Mean intensity of pixels with ``|x1 - x2| > sigmas * ridge_std``, relative to the peak.

    ``ridge_std`` is the standard deviation of ``x1 - x2`` (``sqrt(2) sigma_minus``
    for the double-Gaussian state).
    """
    p = np.asarray(intensity, dtype=float)
    i = np.arange(p.shape[0])
    far = np.abs(i[:, None] - i[None, :]) * dx > sigmas * ridge_std
    if not far.any():
        raise ValueError("no pixel lies that far from the ridge on this grid")
    return float(p[far].mean() / p.max())
