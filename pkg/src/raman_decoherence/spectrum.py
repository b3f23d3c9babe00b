"""Composite Stokes-channel spectrum seen through a scanning etalon.

Frequencies are in GHz relative to the coherent Stokes line. A component's
``amplitude`` is the mean photon number per pulse it would give if all of
its light were transmitted at the etalon peak, so a delta line of amplitude
``a`` produces a scan peak of height ``a``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError, UnresolvableScanWarning
from .lineshape import EtalonConfig, FrequencyGrid, ProfileParams, filtered_line

COHERENT = "coherent_stokes"
FLUORESCENCE_UPPER = "fluorescence_upper"
FLUORESCENCE_LOWER = "fluorescence_lower"
LEAKAGE = "laser_leakage"
KINDS = (COHERENT, FLUORESCENCE_UPPER, FLUORESCENCE_LOWER, LEAKAGE)

HYPERFINE_GROUND_SPLIT = 6.834
EXCITED_SPLIT = 0.812
DOPPLER_FWHM = 0.48


@dataclass(frozen=True)
class LineComponent:
    """One spectral line. ``profile=None`` means an etalon-limited delta line."""

    kind: str
    center: float
    amplitude: float
    profile: ProfileParams | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown component kind {self.kind!r}")
        if not self.amplitude >= 0:
            raise InvalidParameterError(f"{self.kind} amplitude must be >= 0, got {self.amplitude}")
        if self.kind == COHERENT and self.profile is not None and self.profile.gaussian_fwhm != 0:
            raise InvalidParameterError("the coherent Stokes line carries no Gaussian width")
        if self.kind.startswith("fluorescence") and (self.profile is None or self.profile.gaussian_fwhm <= 0):
            raise InvalidParameterError(f"{self.kind} needs a Gaussian (Doppler) width > 0")


@dataclass(frozen=True)
class ChannelModel:
    components: tuple[LineComponent, ...]
    background: float = 0.0
    write_detuning: float = 0.8
    hyperfine_ground_split: float = HYPERFINE_GROUND_SPLIT
    excited_split: float = EXCITED_SPLIT
    etalon: EtalonConfig = field(default_factory=EtalonConfig)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.background >= 0:
            raise InvalidParameterError(f"background must be >= 0, got {self.background}")
        if not self.hyperfine_ground_split > 0 or not self.excited_split > 0:
            raise InvalidParameterError("splittings must be > 0")

    def component(self, kind):
        for comp in self.components:
            if comp.kind == kind:
                return comp
        return None

    def with_amplitudes(self, **amplitudes):
        """Copy with amplitudes replaced, keyed by component kind."""
        comps = tuple(
            replace(c, amplitude=amplitudes[c.kind]) if c.kind in amplitudes else c for c in self.components
        )
        return replace(self, components=comps)

    def shifted(self, offset):
        """Copy with every component center moved by ``offset``."""
        comps = tuple(replace(c, center=c.center + offset) for c in self.components)
        return replace(self, components=comps)


def default_paper_model(
    write_detuning,
    coherent_amplitude=0.05,
    fluorescence_amplitude=None,
    fluorescence_lower_amplitude=0.0,
    leakage_amplitude=0.02,
    background=0.002,
    doppler_fwhm=DOPPLER_FWHM,
    hyperfine_ground_split=HYPERFINE_GROUND_SPLIT,
    excited_split=EXCITED_SPLIT,
    etalon=None,
) -> ChannelModel:
    """Stokes-channel model for a write laser blue detuned by ``write_detuning``.

    The fluorescence doublet sits red of the coherent line by the write
    detuning (upper excited level) and by a further ``excited_split`` (lower
    level, off by default). Fluorescence defaults to the coherent amplitude.
    """
    if not write_detuning > 0:
        raise InvalidParameterError(f"write_detuning must be > 0, got {write_detuning}")
    if fluorescence_amplitude is None:
        fluorescence_amplitude = coherent_amplitude
    doppler = ProfileParams(doppler_fwhm, 0.0)
    comps = (
        LineComponent(COHERENT, 0.0, coherent_amplitude),
        LineComponent(FLUORESCENCE_UPPER, -write_detuning, fluorescence_amplitude, doppler),
        LineComponent(FLUORESCENCE_LOWER, -write_detuning - excited_split, fluorescence_lower_amplitude, doppler),
        LineComponent(LEAKAGE, hyperfine_ground_split, leakage_amplitude),
    )
    return ChannelModel(
        comps,
        background=background,
        write_detuning=write_detuning,
        hyperfine_ground_split=hyperfine_ground_split,
        excited_split=excited_split,
        etalon=etalon or EtalonConfig(),
    )


def fold_into_window(nu, etalon: EtalonConfig, window_center=0.0):
    """Shift ``nu`` by a multiple of the FSR into ``[c - fsr/2, c + fsr/2)``."""
    nu = np.asarray(nu, dtype=float)
    n = np.floor((nu - (window_center - 0.5 * etalon.fsr)) / etalon.fsr)
    out = nu - n * etalon.fsr
    return float(out) if np.ndim(out) == 0 else out


def _frequencies(grid):
    if isinstance(grid, FrequencyGrid):
        return grid.points, grid.center
    nu = np.asarray(grid, dtype=float)
    return nu, 0.5 * (nu.min() + nu.max())


def component_trace(component: LineComponent, grid, etalon: EtalonConfig, mode="airy", window_center=None):
    """Scan trace of one component at unit amplitude."""
    nu, mid = _frequencies(grid)
    if window_center is None:
        window_center = mid
    center = fold_into_window(component.center, etalon, window_center)
    return filtered_line(nu - center, etalon, component.profile, mode)


def component_traces(model: ChannelModel, grid, mode="airy", window_center=None):
    """Per-component contributions (amplitude included), keyed by kind."""
    nu, mid = _frequencies(grid)
    if nu.size >= 2 and nu.max() - nu.min() < model.etalon.fwhm:
        warnings.warn(
            f"scan span {nu.max() - nu.min():.4g} GHz is narrower than the etalon FWHM "
            f"{model.etalon.fwhm:.4g} GHz",
            UnresolvableScanWarning,
            stacklevel=3,
        )
    out = {}
    for comp in model.components:
        trace = comp.amplitude * component_trace(comp, nu, model.etalon, mode, mid if window_center is None else window_center)
        out[comp.kind] = out.get(comp.kind, 0.0) + trace
    return out


def predict_mean_counts(model: ChannelModel, grid, mode="airy", window_center=None) -> np.ndarray:
    """Mean photons per pulse at each etalon setting of ``grid``.

    ``grid`` is a :class:`FrequencyGrid` or an array of frequencies. Every
    component center is folded into the FSR window around ``window_center``
    (default: middle of the scan) before filtering.
    """
    nu, _ = _frequencies(grid)
    counts = np.full(nu.shape, float(model.background))
    for trace in component_traces(model, grid, mode, window_center).values():
        counts = counts + trace
    return counts


def split_signal_noise(model: ChannelModel, grid, mode="airy", window_center=None):
    """Coherent counts and everything else (incoherent + leakage + background)."""
    nu, _ = _frequencies(grid)
    traces = component_traces(model, grid, mode, window_center)
    signal = traces.pop(COHERENT, np.zeros(nu.shape))
    noise = np.full(nu.shape, float(model.background))
    for trace in traces.values():
        noise = noise + trace
    return np.asarray(signal, dtype=float), noise


def snr_profile(model: ChannelModel, grid, mode="airy", window_center=None) -> np.ndarray:
    """Signal-to-noise ratio chi_1 along the scan.

    ``inf`` where the noise vanishes and the signal does not, ``nan`` where
    both vanish.
    """
    signal, noise = split_signal_noise(model, grid, mode, window_center)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = signal / noise
    chi = np.where(noise == 0, np.where(signal > 0, math.inf, math.nan), chi)
    return chi


def component_power(model: ChannelModel, kinds) -> float:
    """Total amplitude (line power) of the given component kinds."""
    return float(sum(c.amplitude for c in model.components if c.kind in kinds))
