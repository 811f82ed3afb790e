"""Permuted-Hadamard random filters and the Kronecker sensing operator.

Every measurement ``i`` uses four signing vectors over {+1, -1}, one per
particle per domain. Particle ``p`` in domain ``d`` uses row ``r`` of the
order-``n`` Sylvester Hadamard matrix with its columns permuted,
``a[j] = H[r, perm[j]]``, and the joint sensing row is ``a1 (x) a2``.
Inner products with joint rows therefore reduce to a scatter through the
two permutations followed by a 2-D fast Walsh-Hadamard transform.

When more than ``n**2`` measurements are requested with
``oversample=True`` the plan is built from several *epochs*, each with
fresh permutations and its own draw of row pairs without replacement.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BadOrder, ShapeMismatch, TooManyRows
from .spdc_model import DOMAINS, MOMENTUM, POSITION, is_power_of_two

_DOMAIN_ID = {MOMENTUM: 0, POSITION: 1}


def _check_order(n):
    if not is_power_of_two(n):
        raise BadOrder(f"Hadamard order must be a power of two, got {n!r}")


def _popcount_parity(a: np.ndarray) -> np.ndarray:
    a = a.astype(np.uint64)
    parity = np.zeros(a.shape, dtype=np.uint64)
    while np.any(a):
        parity ^= a & np.uint64(1)
        a >>= np.uint64(1)
    return parity


def hadamard_row(n: int, r: int) -> np.ndarray:
    """Row ``r`` of the Sylvester Hadamard matrix, ``H[r, c] = (-1)**popcount(r & c)``."""
    _check_order(n)
    if not 0 <= r < n:
        raise ValueError(f"row {r} out of range for order {n}")
    return 1 - 2 * _popcount_parity(np.uint64(r) & np.arange(n, dtype=np.uint64)).astype(np.int8)


def hadamard_matrix(n: int) -> np.ndarray:
    _check_order(n)
    idx = np.arange(n, dtype=np.uint64)
    return 1 - 2 * _popcount_parity(idx[:, None] & idx[None, :]).astype(np.int8)


def fwht(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unnormalised fast Walsh-Hadamard transform along ``axis`` (natural order).

    Equivalent to multiplying by the Sylvester matrix, ``H @ a``.
    """
    a = np.moveaxis(np.asarray(a), axis, -1)
    n = a.shape[-1]
    _check_order(n)
    shape = a.shape
    out = np.array(a, dtype=np.result_type(a.dtype, np.float64), copy=True)
    h = 1
    while h < n:
        out = out.reshape(shape[:-1] + (n // (2 * h), 2, h))
        x = out[..., 0, :]
        y = out[..., 1, :]
        out = np.stack((x + y, x - y), axis=-2)
        h *= 2
    return np.moveaxis(out.reshape(shape), -1, axis)


def fwht2(a: np.ndarray) -> np.ndarray:
    return fwht(fwht(a, axis=-2), axis=-1)


def mask_from_signs(s) -> np.ndarray:
    """Map a signing vector to a transmission mask: +1 -> 1, -1 -> 0."""
    s = np.asarray(s)
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("signing vector entries must be +1 or -1")
    return ((s + 1) // 2).astype(np.int8)


@dataclass(frozen=True, eq=False)
class SensingPlan:
    """Seeded description of ``M`` random filter sets.

    Attributes
    ----------
    perms : ndarray, shape (epochs, 2, 2, n)
        Column permutations indexed ``[epoch, domain, particle]`` with
        domain 0 = momentum and 1 = position.
    rows : ndarray, shape (2, M, 2)
        Hadamard row pair ``(r1, r2)`` for every measurement and domain.
    """

    n: int
    M: int
    seed: int
    perms: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        for name in ("perms", "rows"):
            a = np.array(getattr(self, name), dtype=np.int64, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def epochs(self) -> int:
        return self.perms.shape[0]

    def epoch_of(self, i):
        return np.asarray(i) // (self.n * self.n)

    def __eq__(self, other):
        if not isinstance(other, SensingPlan):
            return NotImplemented
        return (
            (self.n, self.M, self.seed) == (other.n, other.M, other.seed)
            and np.array_equal(self.perms, other.perms)
            and np.array_equal(self.rows, other.rows)
        )

    def signing_vectors(self, domain: str, i=None) -> tuple[np.ndarray, np.ndarray]:
        """Signing vectors ``(a1, a2)`` for measurement ``i`` (or all, shape (M, n))."""
        d = _DOMAIN_ID[domain]
        idx = np.arange(self.M) if i is None else np.atleast_1d(i)
        H = hadamard_matrix(self.n)
        ep = self.epoch_of(idx)
        r = self.rows[d, idx]
        a1 = np.take_along_axis(H[r[:, 0]], self.perms[ep, d, 0], axis=1)
        a2 = np.take_along_axis(H[r[:, 1]], self.perms[ep, d, 1], axis=1)
        if i is not None and np.ndim(i) == 0:
            return a1[0], a2[0]
        return a1, a2

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "M": int(self.M),
            "seed": int(self.seed),
            "perms": self.perms.tolist(),
            "rows": self.rows.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SensingPlan":
        return cls(int(d["n"]), int(d["M"]), int(d["seed"]), np.array(d["perms"]), np.array(d["rows"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def loads(cls, text: str) -> "SensingPlan":
        return cls.from_dict(json.loads(text))


def plan_sensing(n: int, M: int, seed: int, oversample: bool = False) -> SensingPlan:
    """Draw a reproducible sensing plan.

    Measurement 0 always uses the all-ones joint row ``(0, 0)`` in both
    domains. The remaining row pairs are sampled without replacement from
    ``{0..n-1}**2`` independently for each domain.

    Raises
    ------
    TooManyRows
        If ``M > n**2`` and ``oversample`` is false.
    """
    _check_order(n)
    N = n * n
    if M < 1:
        raise ValueError("empty plan: M must be at least 1")
    if M > N and not oversample:
        raise TooManyRows(f"M={M} exceeds the {N} distinct joint rows for n={n}")
    epochs = -(-M // N)
    perms = np.empty((epochs, 2, 2, n), dtype=np.int64)
    rows = np.empty((2, M, 2), dtype=np.int64)
    for e in range(epochs):
        count = min(N, M - e * N)
        for d in range(2):
            for p in range(2):
                perms[e, d, p] = np.random.default_rng([seed, e, d, p]).permutation(n)
            rng = np.random.default_rng([seed, e, d, 2])
            if e == 0:
                flat = np.concatenate(([0], 1 + rng.choice(N - 1, count - 1, replace=False)))
            else:
                flat = rng.choice(N, count, replace=False)
            rows[d, e * N : e * N + count, 0] = flat // n
            rows[d, e * N : e * N + count, 1] = flat % n
    return SensingPlan(n, M, int(seed), perms, rows)


def _as_square(plan: SensingPlan, signal) -> np.ndarray:
    x = np.asarray(signal, dtype=float)
    if x.size != plan.n * plan.n:
        raise ShapeMismatch(f"signal has {x.size} entries, expected {plan.n ** 2}")
    return x.reshape(plan.n, plan.n)


def apply_sensing(plan: SensingPlan, domain: str, signal) -> np.ndarray:
    """Measurements ``<A_i, signal>`` for all ``i`` via the fast transform."""
    X = _as_square(plan, signal)
    d = _DOMAIN_ID[domain]
    n, N = plan.n, plan.n * plan.n
    out = np.empty(plan.M)
    for e in range(plan.epochs):
        p1, p2 = plan.perms[e, d]
        Z = np.empty((n, n))
        Z[np.ix_(p1, p2)] = X
        W = fwht2(Z)
        sl = slice(e * N, min((e + 1) * N, plan.M))
        r = plan.rows[d, sl]
        out[sl] = W[r[:, 0], r[:, 1]]
    return out


def apply_adjoint(plan: SensingPlan, domain: str, y) -> np.ndarray:
    """``sum_i y_i A_i`` as a flat length-``n**2`` vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != (plan.M,):
        raise ShapeMismatch(f"y has shape {y.shape}, expected ({plan.M},)")
    d = _DOMAIN_ID[domain]
    n, N = plan.n, plan.n * plan.n
    X = np.zeros((n, n))
    for e in range(plan.epochs):
        p1, p2 = plan.perms[e, d]
        sl = slice(e * N, min((e + 1) * N, plan.M))
        r = plan.rows[d, sl]
        W = np.zeros((n, n))
        W[r[:, 0], r[:, 1]] = y[sl]
        X += fwht2(W)[np.ix_(p1, p2)]
    return X.ravel()


class SensingOperator:
    """Linear operator for one domain of a plan, optionally restricted to a
    subset of measurement rows (rows with missing data are dropped)."""

    def __init__(self, plan: SensingPlan, domain: str, rows=None):
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
        self.plan = plan
        self.domain = domain
        self.rows = None if rows is None else np.asarray(rows)
        if self.rows is not None and self.rows.dtype == bool:
            self.rows = np.flatnonzero(self.rows)

    @property
    def shape(self) -> tuple[int, int]:
        m = self.plan.M if self.rows is None else len(self.rows)
        return m, self.plan.n * self.plan.n

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.plan.n, self.plan.n

    @property
    def row_norm_sq(self) -> float:
        # every joint row has +-1 entries
        return float(self.plan.n**2)

    def forward(self, x) -> np.ndarray:
        out = apply_sensing(self.plan, self.domain, x)
        return out if self.rows is None else out[self.rows]

    def adjoint(self, y) -> np.ndarray:
        if self.rows is not None:
            full = np.zeros(self.plan.M)
            full[self.rows] = y
            y = full
        return apply_adjoint(self.plan, self.domain, y)


class IdentityOperator:
    def __init__(self, shape: tuple[int, int]):
        self.image_shape = tuple(shape)
        self.shape = (shape[0] * shape[1], shape[0] * shape[1])
        self.row_norm_sq = 1.0

    def forward(self, x):
        return np.asarray(x, dtype=float).ravel().copy()

    def adjoint(self, y):
        return np.asarray(y, dtype=float).ravel().copy()


# -- spectra of random masks ------------------------------------------------


def mask_spectrum_ratios(masks, oversample: int = 1) -> np.ndarray:
    """Mean off-peak to peak power ratio of each mask's spectrum.

    ``oversample=1`` evaluates the spectrum on the ``n`` DFT frequencies.
    Larger values zero-pad so the lattice sum is sampled across the
    continuous frequency band; the band average of ``|f(p)|**2`` then
    approaches the number of transmitting pixels (Parseval), which
    includes the side lobes of the zero-frequency peak.
    """
    masks = np.atleast_2d(np.asarray(masks, dtype=float))
    n = masks.shape[-1]
    F = np.fft.fft(masks, n=n * oversample, axis=-1)
    power = np.abs(F) ** 2
    peak = power[:, 0]
    return power[:, 1:].mean(axis=-1) / peak


def spectrum_model_check(n: int, trials: int, rng: np.random.Generator, oversample: int = 16):
    """Monte Carlo spectrum statistics of random binary masks.

    Each pixel transmits with probability 1/2. Returns
    ``(peak_ratio_mean, offpeak_ratio_mean)`` where the peak ratio is
    ``|f(0)|**2 / (n/2)**2`` and the off-peak ratio is the mean of
    ``|f(p != 0)|**2 / |f(0)|**2``; the model predicts ``1`` and
    ``2/n``. Masks that reject every pixel are redrawn.
    """
    _check_order(n)
    if trials < 100:
        raise ValueError("at least 100 trials are needed for stable averages")
    masks = rng.integers(0, 2, size=(trials, n))
    empty = ~masks.any(axis=1)
    while np.any(empty):
        masks[empty] = rng.integers(0, 2, size=(int(empty.sum()), n))
        empty = ~masks.any(axis=1)
    peak = masks.sum(axis=1).astype(float) ** 2
    ratios = mask_spectrum_ratios(masks, oversample)
    return float(np.mean(peak / (n / 2) ** 2)), float(np.mean(ratios))
