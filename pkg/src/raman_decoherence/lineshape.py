"""Spectral profile kernels on a frequency axis.

All frequencies are in GHz. Densities are normalized to unit area
(units 1/GHz); etalon transmissions are peak-normalized (dimensionless,
1 on resonance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DimensionError, InvalidParameterError

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

# Physical constants for the Doppler helper (SI).
_BOLTZMANN = 1.380649e-23
_ATOMIC_MASS = 1.66053906660e-27
_LIGHT_SPEED = 299792458.0
RB87_MASS_U = 86.909180527
RB87_D1_FREQUENCY_GHZ = 377107.463380


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform scan axis ``start + k * step`` for ``k = 0 .. count - 1``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise InvalidParameterError(f"grid step must be > 0, got {self.step}")
        if int(self.count) != self.count or self.count < 2:
            raise InvalidParameterError(f"grid count must be an integer >= 2, got {self.count}")

    @classmethod
    def centered(cls, center=0.0, width=5.0, step=0.01):
        """Grid spanning ``[center - width/2, center + width/2]`` inclusive."""
        count = int(round(width / step)) + 1
        return cls(center - 0.5 * (count - 1) * step, step, count)

    @property
    def points(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.stop)

    @property
    def span(self) -> float:
        return self.step * (self.count - 1)

    def offsets(self) -> np.ndarray:
        """Offsets from the central sample, used to sample convolution kernels."""
        mid = (self.count - 1) // 2
        return self.step * (np.arange(self.count) - mid)


DEFAULT_GRID = FrequencyGrid.centered(0.0, 5.0, 0.01)


@dataclass(frozen=True)
class ProfileParams:
    """Gaussian and Lorentzian FWHM (GHz) of a Voigt line."""

    gaussian_fwhm: float = 0.0
    lorentzian_fwhm: float = 0.0

    def __post_init__(self):
        if self.gaussian_fwhm < 0 or self.lorentzian_fwhm < 0:
            raise InvalidParameterError(
                f"widths must be >= 0, got G={self.gaussian_fwhm}, L={self.lorentzian_fwhm}"
            )
        if self.gaussian_fwhm == 0 and self.lorentzian_fwhm == 0:
            raise InvalidParameterError("at least one of gaussian_fwhm, lorentzian_fwhm must be > 0")

    @property
    def sigma(self) -> float:
        return self.gaussian_fwhm * FWHM_TO_SIGMA

    @property
    def hwhm(self) -> float:
        return 0.5 * self.lorentzian_fwhm


@dataclass(frozen=True)
class EtalonConfig:
    """Scanning Fabry-Perot filter: free spectral range and linewidth (GHz)."""

    fsr: float = 5.0
    fwhm: float = 0.48

    def __post_init__(self):
        if not self.fsr > 0:
            raise InvalidParameterError(f"fsr must be > 0, got {self.fsr}")
        if not 0 < self.fwhm < self.fsr:
            raise InvalidParameterError(f"fwhm must satisfy 0 < fwhm < fsr, got {self.fwhm}")

    @property
    def finesse(self) -> float:
        return self.fsr / self.fwhm

    @property
    def coefficient_of_finesse(self) -> float:
        """Airy parameter F chosen so the transmission is 1/2 at +-fwhm/2."""
        return 1.0 / math.sin(math.pi * self.fwhm / (2.0 * self.fsr)) ** 2

    @property
    def airy_finesse(self) -> float:
        """Finesse from the Airy parameter, ``pi * sqrt(F) / 2``."""
        return 0.5 * math.pi * math.sqrt(self.coefficient_of_finesse)

    @property
    def reflectivity(self) -> float:
        """Mirror reflectivity R with ``F = 4R / (1 - R)^2``."""
        f = self.coefficient_of_finesse
        return (f + 2.0 - 2.0 * math.sqrt(f + 1.0)) / f


def gaussian_density(delta_nu, fwhm):
    sigma = fwhm * FWHM_TO_SIGMA
    x = np.asarray(delta_nu, dtype=float) / sigma
    return np.exp(-0.5 * x * x) / (sigma * math.sqrt(2.0 * math.pi))


def lorentzian_density(delta_nu, fwhm):
    hw = 0.5 * fwhm
    x = np.asarray(delta_nu, dtype=float)
    return hw / (math.pi * (x * x + hw * hw))


def voigt_density(delta_nu, params: ProfileParams):
    """Unit-area Voigt profile at ``delta_nu`` (1/GHz).

    The pure limits are evaluated in closed form; otherwise the profile is
    ``Re w(z) / (sigma sqrt(2 pi))`` with the Faddeeva function ``w``.
    """
    if params.lorentzian_fwhm == 0:
        return gaussian_density(delta_nu, params.gaussian_fwhm)
    if params.gaussian_fwhm == 0:
        return lorentzian_density(delta_nu, params.lorentzian_fwhm)
    return special.voigt_profile(np.asarray(delta_nu, dtype=float), params.sigma, params.hwhm)


def voigt_fwhm(params: ProfileParams) -> float:
    """Approximate Voigt FWHM (Olivero & Longbothum, ~2e-4 relative)."""
    fl, fg = params.lorentzian_fwhm, params.gaussian_fwhm
    return 0.5346 * fl + math.sqrt(0.2166 * fl * fl + fg * fg)


def airy_transmission(delta_nu, etalon: EtalonConfig):
    """Peak-normalized Airy transmission, periodic in ``etalon.fsr``."""
    s = np.sin(np.pi * np.asarray(delta_nu, dtype=float) / etalon.fsr)
    return 1.0 / (1.0 + etalon.coefficient_of_finesse * s * s)


def lorentzian_transmission(delta_nu, etalon: EtalonConfig):
    """Single-Lorentzian approximation of one etalon order (peak 1)."""
    x = 2.0 * np.asarray(delta_nu, dtype=float) / etalon.fwhm
    return 1.0 / (1.0 + x * x)


def airy_filtered_line(delta_nu, etalon: EtalonConfig, params: ProfileParams | None = None, tol=1e-16):
    """Scan signal of a unit-area line seen through an Airy etalon.

    Returns ``integral p(x) T(delta_nu - x) dx`` for the Voigt density ``p``
    (a delta line when ``params`` is None). The Airy function is the Fourier
    series ``(1-R)/(1+R) * (1 + 2 sum R^n cos(n k x))``; convolution damps
    harmonic ``n`` by the Voigt characteristic function. A Lorentzian part
    only rescales ``R`` (closed form); a Gaussian part is summed until the
    harmonic weights drop below ``tol``.
    """
    x = np.asarray(delta_nu, dtype=float)
    r = etalon.reflectivity
    k = 2.0 * math.pi / etalon.fsr
    sigma = params.sigma if params else 0.0
    hw = params.hwhm if params else 0.0
    prefactor = (1.0 - r) / (1.0 + r)
    r_eff = r * math.exp(-hw * k)
    if sigma == 0:
        return prefactor * (1.0 - r_eff**2) / (1.0 + r_eff**2 - 2.0 * r_eff * np.cos(k * x))
    n_max = 1
    while r_eff**n_max * math.exp(-0.5 * (sigma * n_max * k) ** 2) >= tol:
        n_max += 1
    n = np.arange(1, n_max)
    weights = r_eff**n * np.exp(-0.5 * (sigma * n * k) ** 2)
    harmonics = np.cos(np.multiply.outer(x, n * k))
    return prefactor * (1.0 + 2.0 * harmonics @ weights)


def lorentzian_filtered_line(delta_nu, etalon: EtalonConfig, params: ProfileParams | None = None):
    """Scan signal of a unit-area line through the Lorentzian etalon model.

    A Lorentzian transmission of FWHM ``w`` equals ``pi*w/2`` times a unit
    Lorentzian density, so the filtered line is a Voigt profile whose
    Lorentzian width is the intrinsic width plus ``w``.
    """
    g = params.gaussian_fwhm if params else 0.0
    lw = (params.lorentzian_fwhm if params else 0.0) + etalon.fwhm
    return 0.5 * math.pi * etalon.fwhm * voigt_density(delta_nu, ProfileParams(g, lw))


def filtered_line(delta_nu, etalon: EtalonConfig, params: ProfileParams | None = None, mode="airy"):
    if mode == "airy":
        return airy_filtered_line(delta_nu, etalon, params)
    if mode == "lorentzian":
        return lorentzian_filtered_line(delta_nu, etalon, params)
    raise InvalidParameterError(f"etalon mode must be 'airy' or 'lorentzian', got {mode!r}")


def convolve_on_grid(values, kernel, grid: FrequencyGrid | None = None, step=None):
    """Discrete convolution of a sampled density with a unit-area kernel.

    ``kernel`` is sampled at ``grid.offsets()`` (zero offset at the central
    sample). Outside the grid both inputs are taken as zero, so area that
    spills past the window edges is lost.
    """
    values = np.asarray(values, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if values.shape != kernel.shape or values.ndim != 1:
        raise DimensionError(f"values {values.shape} and kernel {kernel.shape} must be matching 1-d grids")
    if grid is not None:
        if grid.count != values.size:
            raise DimensionError(f"grid has {grid.count} points, arrays have {values.size}")
        step = grid.step
    if step is None:
        raise DimensionError("either grid or step is required")
    area = kernel.sum() * step
    if abs(area - 1.0) > 1e-3:
        raise InvalidParameterError(f"kernel area must be within 1e-3 of 1, got {area:.6g}")
    mid = (values.size - 1) // 2
    full = np.convolve(values, kernel) * step
    return full[mid : mid + values.size]


def doppler_fwhm(temperature_k, mass_u=RB87_MASS_U, frequency_ghz=RB87_D1_FREQUENCY_GHZ):
    """Doppler FWHM (GHz) of a transition at ``frequency_ghz``.

    Informational only; model widths are always taken from configuration.
    """
    if temperature_k <= 0 or mass_u <= 0:
        raise InvalidParameterError("temperature and mass must be > 0")
    m = mass_u * _ATOMIC_MASS
    return frequency_ghz * math.sqrt(8.0 * _BOLTZMANN * temperature_k * math.log(2.0) / (m * _LIGHT_SPEED**2))
