"""Turn 16-port coincidence records into position and momentum measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRecord
from .photon_sim import (
    MOMENTUM_FIRST,
    CoincidenceRecord,
    port_probabilities_batch,
)
from .random_filters import SensingPlan, mask_from_signs
from .spdc_model import MOMENTUM, POSITION, BiphotonAmplitude

# TT and RR add, TR and RT subtract
COMBO_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])


@dataclass(frozen=True)
class MeasurementVectors:
    """Decoupled measurements for one acquisition.

    Rows whose record held no counts are flagged in ``valid`` and carry
    NaN in both measurement vectors.
    """

    y_momentum: np.ndarray
    y_position: np.ndarray
    totals: np.ndarray
    valid: np.ndarray
    counts: np.ndarray | None = None

    @property
    def M(self) -> int:
        return len(self.y_momentum)

    def vector(self, domain: str) -> np.ndarray:
        if domain == MOMENTUM:
            return self.y_momentum
        if domain == POSITION:
            return self.y_position
        raise ValueError(f"unknown domain {domain!r}")


def _signed_ratio(sums: np.ndarray) -> np.ndarray:
    total = sums.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (sums @ COMBO_SIGNS) / total


def aggregate(record: CoincidenceRecord | np.ndarray) -> tuple[float, float, int]:
    """Combine one 4x4 record into ``(y_k, y_x, total)``.

    Column sums give the momentum port totals and row sums the position
    port totals; each measurement is the signed sum over ports divided by
    the total number of coincidences.

    Raises
    ------
    EmptyRecord
        If the record holds no counts.
    """
    counts = np.asarray(getattr(record, "counts", record))
    total = counts.sum()
    if total <= 0:
        raise EmptyRecord("record has zero total coincidences; flux too low for this filter set")
    y_k = float(_signed_ratio(counts.sum(axis=0)))
    y_x = float(_signed_ratio(counts.sum(axis=1)))
    return y_k, y_x, int(total) if np.issubdtype(counts.dtype, np.integer) else float(total)


def aggregate_batch(counts: np.ndarray) -> MeasurementVectors:
    """Vectorised :func:`aggregate` over records of shape ``(M, 4, 4)``.

    Empty records are flagged instead of raising.
    """
    counts = np.asarray(counts)
    totals = counts.sum(axis=(1, 2))
    valid = totals > 0
    y_k = _signed_ratio(counts.sum(axis=1))
    y_x = _signed_ratio(counts.sum(axis=2))
    y_k[~valid] = np.nan
    y_x[~valid] = np.nan
    return MeasurementVectors(y_k, y_x, totals, valid, counts)


def filter_masks(plan: SensingPlan, rows=None) -> tuple[np.ndarray, ...]:
    """Binary masks ``(f, g, b1, b2)`` for the requested plan rows."""
    idx = np.arange(plan.M) if rows is None else np.asarray(rows)
    a1, a2 = plan.signing_vectors(MOMENTUM, idx)
    c1, c2 = plan.signing_vectors(POSITION, idx)
    return mask_from_signs(a1), mask_from_signs(a2), mask_from_signs(c1), mask_from_signs(c2)


def exact_port_probabilities(
    state: BiphotonAmplitude, plan: SensingPlan, order: str = MOMENTUM_FIRST, chunk: int = 512
) -> np.ndarray:
    """Port probabilities for every plan row, shape ``(M, 4, 4)``."""
    if state.grid.n != plan.n:
        raise ValueError(f"plan has n={plan.n} but state grid has n={state.grid.n}")
    out = np.empty((plan.M, 4, 4))
    for start in range(0, plan.M, chunk):
        rows = np.arange(start, min(start + chunk, plan.M))
        f, g, b1, b2 = filter_masks(plan, rows)
        out[rows] = port_probabilities_batch(state, f, g, b1, b2, order)
    return np.clip(out, 0.0, None)


def row_generator(seed: int, i: int) -> np.random.Generator:
    """Independent random stream for measurement ``i`` of a run seeded with ``seed``."""
    return np.random.default_rng([int(seed), int(i)])


def run_acquisition(
    state: BiphotonAmplitude,
    plan: SensingPlan,
    mean_flux: float,
    seed: int = 0,
    order: str = MOMENTUM_FIRST,
    efficiency: float = 1.0,
    dark_counts: float = 0.0,
) -> MeasurementVectors:
    """Simulate, sample and aggregate every filter set of ``plan``.

    ``mean_flux`` is the expected number of coincidences per filter set,
    split over its 16 outcomes. ``math.inf`` skips sampling and aggregates
    the exact probabilities. Each row draws from its own stream
    (:func:`row_generator`), so results do not depend on evaluation order.
    """
    probs = exact_port_probabilities(state, plan, order)
    if math.isinf(mean_flux):
        if dark_counts:
            raise ValueError("dark counts are undefined in the infinite-flux limit")
        mv = aggregate_batch(probs)
        return MeasurementVectors(mv.y_momentum, mv.y_position, np.full(plan.M, np.inf), mv.valid, None)
    if mean_flux < 0:
        raise ValueError("mean_flux must be non-negative")
    counts = np.empty((plan.M, 4, 4), dtype=np.int64)
    for i in range(plan.M):
        lam = mean_flux * efficiency * probs[i] + dark_counts
        counts[i] = row_generator(seed, i).poisson(lam)
    return aggregate_batch(counts)
