"""Double-Gaussian biphoton states on Fourier-compatible grids.

Positions are in mm and transverse wavenumbers in rad/mm. Each particle
has one transverse dimension, so a joint state is an ``n x n`` array
indexed ``[x1, x2]``.

Grids are symmetric about their centre: pixel ``j`` sits at
``offset + (j - (n - 1) / 2) * width``. With ``n * dx * dk = 2 pi`` the
centred discrete Fourier transform between the two grids is unitary and
maps ``k`` onto ``-k`` without wrap-around, which keeps the
anti-correlated momentum ridge intact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import InfeasibleGrid

POSITION = "position"
MOMENTUM = "momentum"
DOMAINS = (POSITION, MOMENTUM)


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpdcParams:
    """Source parameters.

    Parameters
    ----------
    crystal_length : float
        Nonlinear crystal length ``L_z`` in mm.
    pump_wavelength : float
        Pump wavelength in mm (400 nm is ``4e-4``).
    pump_sigma : float
        Transverse standard deviation of the pump in mm.
    """

    crystal_length: float
    pump_wavelength: float
    pump_sigma: float

    def __post_init__(self):
        for name in ("crystal_length", "pump_wavelength", "pump_sigma"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def sigma_minus(self) -> float:
        return sigma_minus(self.crystal_length, self.pump_wavelength)


#: Parameters used for the noisy simulations (1 mm crystal, 400 nm pump, 0.85 mm pump).
REFERENCE_PARAMS = SpdcParams(crystal_length=1.0, pump_wavelength=400e-6, pump_sigma=0.85)


def sigma_minus(crystal_length, pump_wavelength):
    """Correlation width ``sqrt(9 L_z lambda_p / (20 pi))`` in mm.

    Accepts scalars or arrays; a zero crystal length gives zero width.
    """
    L = np.asarray(crystal_length, dtype=float)
    lam = np.asarray(pump_wavelength, dtype=float)
    if np.any(L < 0) or np.any(lam < 0):
        raise ValueError("crystal length and wavelength must be non-negative")
    out = np.sqrt(9.0 * L * lam / (20.0 * np.pi))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GridSpec:
    """Pixel grid shared by both particles.

    ``n * dx * dk`` must equal ``2 pi``; use :meth:`fourier` to build one
    from ``n`` and ``dx``.
    """

    n: int
    dx: float
    dk: float
    x_offset: float = 0.0
    k_offset: float = 0.0

    def __post_init__(self):
        if not is_power_of_two(self.n):
            raise ValueError(f"n must be a power of two, got {self.n!r}")
        if not (self.dx > 0 and self.dk > 0):
            raise ValueError("dx and dk must be positive")
        product = self.n * self.dx * self.dk
        if abs(product - 2 * np.pi) > 1e-12 * 2 * np.pi:
            raise ValueError(f"n*dx*dk = {product!r}, expected 2*pi")

    @classmethod
    def fourier(cls, n: int, dx: float, x_offset: float = 0.0, k_offset: float = 0.0) -> "GridSpec":
        return cls(int(n), float(dx), 2 * np.pi / (n * dx), x_offset, k_offset)

    @property
    def x(self) -> np.ndarray:
        return self.x_offset + (np.arange(self.n) - (self.n - 1) / 2) * self.dx

    @property
    def k(self) -> np.ndarray:
        return self.k_offset + (np.arange(self.n) - (self.n - 1) / 2) * self.dk

    def width(self, domain: str) -> float:
        if domain == POSITION:
            return self.dx
        if domain == MOMENTUM:
            return self.dk
        raise ValueError(f"unknown domain {domain!r}")


@dataclass(frozen=True)
class BiphotonAmplitude:
    """Joint amplitude ``psi(x1, x2)`` sampled on ``grid``, normalised so
    that ``sum |psi|^2 dx^2 = 1``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"amplitude shape {v.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "values", _readonly(v))

    def discrete(self) -> np.ndarray:
        """Pixel amplitudes with unit total probability (``psi * dx``)."""
        return self.values * self.grid.dx

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx**2)


@dataclass(frozen=True)
class JointDistribution:
    values: np.ndarray
    grid: GridSpec
    domain: str = POSITION

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"joint distribution must be square, got shape {v.shape}")
        if self.grid is not None and v.shape[0] != self.grid.n:
            raise ValueError("joint distribution does not match grid")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if np.any(v < 0):
            raise ValueError("joint distribution has negative entries")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def width(self) -> float:
        return self.grid.width(self.domain)


# -- grid selection ---------------------------------------------------------


def marginal_stds(params: SpdcParams) -> tuple[float, float, float, float]:
    """Standard deviations of ``x1-x2``, ``x1+x2``, ``k1-k2``, ``k1+k2``
    under ``|psi|^2`` for the double-Gaussian state."""
    sm = params.sigma_minus
    sp = params.pump_sigma
    return math.sqrt(2) * sm, 2 * sp, 1 / (math.sqrt(2) * sm), 1 / (2 * sp)


def _coverage_bounds(params: SpdcParams, n: int, coverage_sigmas: float) -> tuple[float, float]:
    sx_diff, sx_sum, sk_diff, sk_sum = marginal_stds(params)
    span_x = max(sx_diff, sx_sum)
    span_k = max(sk_diff, sk_sum)
    # n*dx >= c*span_x and n*dk = 2pi/dx >= c*span_k
    return coverage_sigmas * span_x / n, 2 * np.pi / (coverage_sigmas * span_k)


def grid_coverage(params: SpdcParams, grid: GridSpec) -> tuple[float, float]:
    """Window widths ``(n dx, n dk)`` in units of the widest position and
    momentum standard deviations."""
    sx_diff, sx_sum, sk_diff, sk_sum = marginal_stds(params)
    return grid.n * grid.dx / max(sx_diff, sx_sum), grid.n * grid.dk / max(sk_diff, sk_sum)


def choose_grid(params: SpdcParams, n: int, coverage_sigmas: float = 3.0) -> GridSpec:
    """Fourier-compatible grid whose position and momentum windows both
    span at least ``coverage_sigmas`` standard deviations of the rotated
    marginals (``x1 +- x2`` and ``k1 +- k2``).

    Among feasible pixel widths the geometric mean of the two limits is
    returned, which gives equal coverage margin in both domains.

    Raises
    ------
    InfeasibleGrid
        If the two window requirements cannot both be met with ``n``
        pixels per particle.
    """
    if not is_power_of_two(n):
        raise ValueError(f"n must be a power of two, got {n!r}")
    if not coverage_sigmas > 0:
        raise ValueError("coverage_sigmas must be positive")
    lo, hi = _coverage_bounds(params, n, coverage_sigmas)
    if lo > hi * (1 + 1e-12):
        raise InfeasibleGrid(
            f"n={n} cannot cover {coverage_sigmas} sigma in both domains "
            f"(position needs dx >= {lo:.4g} mm, momentum needs dx <= {hi:.4g} mm); "
            f"increase n to at least {int(np.ceil(n * lo / hi))}"
        )
    return GridSpec.fourier(n, math.sqrt(lo * hi))


def balanced_grid(params: SpdcParams, n: int) -> GridSpec:
    """Fourier-compatible grid with equal coverage in both domains.

    Unlike :func:`choose_grid` this never fails; when ``n`` is too small
    the achieved coverage (see :func:`grid_coverage`) drops below the
    requested number of standard deviations. Both windows are then
    narrower than the state, and the joint distributions become sharp
    single-pixel ridges.
    """
    lo, hi = _coverage_bounds(params, n, 1.0)
    return GridSpec.fourier(n, math.sqrt(lo * hi))


# -- states and distributions -----------------------------------------------


def build_state(params: SpdcParams, grid: GridSpec) -> BiphotonAmplitude:
    x = grid.x
    x1, x2 = x[:, None], x[None, :]
    sm = params.sigma_minus
    sp = params.pump_sigma
    psi = np.exp(-((x1 - x2) ** 2) / (8 * sm**2) - (x1 + x2) ** 2 / (16 * sp**2))
    psi = psi / math.sqrt(np.sum(psi**2) * grid.dx**2)
    return BiphotonAmplitude(psi.astype(complex), grid)


def _phases(n: int) -> tuple[np.ndarray, complex]:
    c = (n - 1) / 2
    ramp = np.exp(2j * np.pi * c * np.arange(n) / n)
    return ramp, np.exp(-2j * np.pi * c * c / n)


def centered_dft(a: np.ndarray, axes=(-2, -1)) -> np.ndarray:
    """Unitary DFT between symmetric grids, ``F[m, j] = exp(-2 pi i (m-c)(j-c)/n) / sqrt(n)``
    with ``c = (n-1)/2``, applied along each of ``axes``."""
    a = np.asarray(a, dtype=complex)
    for ax in np.atleast_1d(axes):
        n = a.shape[ax]
        ramp, const = _phases(n)
        shape = [1] * a.ndim
        shape[ax] = n
        ramp = ramp.reshape(shape)
        a = np.fft.fft(a * ramp, axis=ax, norm="ortho") * (ramp * const)
    return a


def centered_idft(a: np.ndarray, axes=(-2, -1)) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    for ax in np.atleast_1d(axes):
        n = a.shape[ax]
        ramp, const = _phases(n)
        shape = [1] * a.ndim
        shape[ax] = n
        ramp = ramp.reshape(shape).conj()
        a = np.fft.ifft(a * (ramp * np.conj(const)), axis=ax, norm="ortho") * ramp
    return a


def momentum_amplitude(state: BiphotonAmplitude) -> np.ndarray:
    """Joint momentum amplitude normalised so ``sum |phi|^2 dk^2 = 1``."""
    g = state.grid
    return centered_dft(state.values) * (g.dx / g.dk)


def _normalized(p: np.ndarray) -> np.ndarray:
    return p / p.sum()


def position_joint(state: BiphotonAmplitude) -> JointDistribution:
    return JointDistribution(_normalized(np.abs(state.values) ** 2), state.grid, POSITION)


def momentum_joint(state: BiphotonAmplitude) -> JointDistribution:
    return JointDistribution(_normalized(np.abs(centered_dft(state.values)) ** 2), state.grid, MOMENTUM)


def correlation(joint: JointDistribution | np.ndarray) -> float:
    """Pearson correlation between the two particle indices under ``joint``."""
    p = np.asarray(getattr(joint, "values", joint), dtype=float)
    p = p / p.sum()
    i = np.arange(p.shape[0], dtype=float)
    p1, p2 = p.sum(axis=1), p.sum(axis=0)
    m1, m2 = p1 @ i, p2 @ i
    cov = np.sum(p * np.outer(i - m1, i - m2))
    v1 = p1 @ (i - m1) ** 2
    v2 = p2 @ (i - m2) ** 2
    return float(cov / np.sqrt(v1 * v2))


def entropic_uncertainty_sum(state: BiphotonAmplitude) -> float:
    """Estimate ``h(x1) + h(k1)`` in nats from the single-particle marginals,
    using ``H_discrete + log(width)`` for each differential entropy."""
    g = state.grid
    total = 0.0
    for joint, width in ((position_joint(state), g.dx), (momentum_joint(state), g.dk)):
        p = joint.values.sum(axis=1)
        p = p[p > 0]
        total += -np.sum(p * np.log(p)) + math.log(width)
    return float(total)


def difference_profile(joint: JointDistribution | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ridge profile: weight at pixel offset ``d = i1 - i2``, summed over the
    conditional slices of the central half of the columns.

    Returns ``(offsets, profile)`` for ``|d| <= n // 4``. Restricting to
    central columns means every slice is complete, so the window edges do
    not narrow the profile.
    """
    p = np.asarray(getattr(joint, "values", joint), dtype=float)
    n = p.shape[0]
    q = n // 4
    cols = np.arange(q, n - q)
    offsets = np.arange(-q, q + 1)
    profile = np.array([p[cols + d, cols].sum() for d in offsets])
    return offsets, profile


def _gauss_pedestal(u, amp, centre, std, pedestal):
    return amp * np.exp(-0.5 * ((u - centre) / std) ** 2) + pedestal


def fit_gaussian_std(coords, values) -> float:
    """Standard deviation of ``amp * exp(-(u - m)^2 / 2 s^2) + c`` fitted to ``values``.

    The constant ``c`` absorbs a pedestal under the peak, such as the noise
    floor left by random filtering.
    """
    u = np.asarray(coords, dtype=float)
    v = np.asarray(values, dtype=float)
    if u.size < 5:
        raise ValueError("need at least five points for a Gaussian-plus-pedestal fit")
    base = float(np.min(v))
    peak = int(np.argmax(v))
    above = u[v - base >= 0.5 * (v[peak] - base)]
    guess_std = (above.max() - above.min()) / 2.355
    span = u.max() - u.min()
    step = float(np.min(np.diff(u)))
    p0 = (v[peak] - base, u[peak], min(max(guess_std, step), span / 2), max(base, 0.0))
    lower = (0.0, u.min(), step / 4, 0.0)
    upper = (np.inf, u.max(), span / 2, max(v.max(), 1e-300))
    try:
        params, _ = curve_fit(_gauss_pedestal, u, v, p0=p0, bounds=(lower, upper), maxfev=10000)
    except RuntimeError as exc:
        raise ValueError(f"Gaussian fit did not converge: {exc}") from exc
    return float(abs(params[2]))


def conditional_width(joint: JointDistribution | np.ndarray, dx: float = 1.0) -> float:
    """Fitted ``1/e`` half-width of the joint intensity across the ``x1 = x2`` ridge.

    A Gaussian plus constant pedestal is fitted to :func:`difference_profile`;
    its standard deviation times ``sqrt(2)`` is the distance from the ridge
    at which the intensity has fallen by ``1/e``. For the double-Gaussian
    state with a wide pump this equals ``2 sigma_minus``.
    """
    offsets, profile = difference_profile(joint)
    return math.sqrt(2.0) * fit_gaussian_std(offsets * dx, profile)
