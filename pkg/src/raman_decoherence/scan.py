"""Synthetic etalon scans of the Stokes channel and their analysis.

A scan steps the Stokes-channel etalon across the grid while the
Anti-Stokes etalon stays on resonance. At each point the channel model is
split into coherent signal and everything else; the signal sets the Stokes
detection efficiency of the pair source and the rest becomes Poisson noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .collisions import D1_DECAY_RATE, collision_rate_from_pressure
from .counting import CountLink, estimate_g2, sample_joint_counts
from .errors import InvalidParameterError, UndefinedEstimateError
from .fitting import (
    DEFAULT_FREE,
    FitResult,
    fit,
    g2_problem,
    intensity_components,
    intensity_problem,
    peak_separation,
)
from .lineshape import DEFAULT_GRID, FrequencyGrid
from .spectrum import (
    COHERENT,
    FLUORESCENCE_LOWER,
    FLUORESCENCE_UPPER,
    ChannelModel,
    split_signal_noise,
)

COLUMNS = ("frequency_ghz", "mean_counts", "g2", "g2_sigma")


@dataclass(frozen=True)
class ScanConfig:
    channel_model: ChannelModel
    grid: FrequencyGrid = DEFAULT_GRID
    n_cycles_per_point: int = 4000
    repetition_rate: float = 1e4
    link: CountLink = field(default_factory=CountLink)
    seed: int = 0
    etalon_mode: str = "airy"
    saturating: bool = False

    def __post_init__(self):
        if self.n_cycles_per_point < 100:
            raise InvalidParameterError(f"n_cycles_per_point must be >= 100, got {self.n_cycles_per_point}")
        if not self.repetition_rate > 0:
            raise InvalidParameterError(f"repetition_rate must be > 0, got {self.repetition_rate}")
        if self.etalon_mode not in ("airy", "lorentzian"):
            raise InvalidParameterError(f"etalon_mode must be 'airy' or 'lorentzian', got {self.etalon_mode!r}")

    @property
    def antistokes_mean(self):
        return self.link.antistokes_mean

    def with_seed(self, seed):
        return replace(self, seed=seed)


@dataclass
class ScanTrace:
    frequency: np.ndarray
    mean_counts: np.ndarray
    g2: np.ndarray
    g2_sigma: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frequency = np.asarray(self.frequency, dtype=float)
        self.mean_counts = np.asarray(self.mean_counts, dtype=float)
        self.g2 = np.asarray(self.g2, dtype=float)
        self.g2_sigma = np.asarray(self.g2_sigma, dtype=float)
        n = self.frequency.size
        if not all(a.shape == (n,) for a in (self.mean_counts, self.g2, self.g2_sigma)):
            raise InvalidParameterError("all trace columns must have the same length")
        if n < 2 or not np.all(np.diff(self.frequency) > 0):
            raise InvalidParameterError("frequencies must be strictly increasing with at least two points")
        if np.any(self.mean_counts < 0):
            raise InvalidParameterError("mean_counts must be >= 0")
        if np.any(self.g2_sigma < 0):
            raise InvalidParameterError("g2_sigma must be >= 0")

    @property
    def n_cycles(self):
        value = self.provenance.get("n_cycles_per_point")
        return int(value) if value is not None else None

    def __len__(self):
        return self.frequency.size


def run_synthetic_scan(cfg: ScanConfig) -> ScanTrace:
    """Sample every grid point of the scan; point ``i`` uses substream ``(seed, i)``."""
    signal, noise = split_signal_noise(cfg.channel_model, cfg.grid, cfg.etalon_mode)
    n = cfg.n_cycles_per_point
    counts = np.empty(signal.size)
    g2 = np.full(signal.size, math.nan)
    g2_sigma = np.full(signal.size, math.nan)
    for i, (s, b) in enumerate(zip(signal, noise)):
        model = cfg.link.joint_model(s, b)
        outcomes = sample_joint_counts(model, n, np.random.SeedSequence([cfg.seed, i]), cfg.saturating)
        counts[i] = outcomes.n_stokes.mean()
        try:
            est = estimate_g2(outcomes)
        except UndefinedEstimateError:
            continue
        g2[i], g2_sigma[i] = est.value, est.sigma
    return ScanTrace(cfg.grid.points, counts, g2, g2_sigma, scan_provenance(cfg))


def scan_provenance(cfg: ScanConfig) -> dict:
    return {
        "source": "synthetic",
        "seed": cfg.seed,
        "n_cycles_per_point": cfg.n_cycles_per_point,
        "repetition_rate": cfg.repetition_rate,
        "etalon_mode": cfg.etalon_mode,
        "amplitude_A": cfg.link.amplitude_A,
        "antistokes_mean": cfg.link.antistokes_mean,
        "pair_mean": cfg.link.pair_mean,
    }


def average_traces(traces) -> ScanTrace:
    """Point-wise mean of traces on a common axis (errors combined in quadrature)."""
    traces = list(traces)
    k = len(traces)
    freq = traces[0].frequency
    for t in traces[1:]:
        if not np.array_equal(t.frequency, freq):
            raise InvalidParameterError("traces must share the same frequency axis")
    counts = np.mean([t.mean_counts for t in traces], axis=0)
    g2 = np.mean([t.g2 for t in traces], axis=0)
    sigma = np.sqrt(np.sum([t.g2_sigma**2 for t in traces], axis=0)) / k
    prov = dict(traces[0].provenance)
    prov["averaged_traces"] = k
    if traces[0].n_cycles is not None:
        prov["n_cycles_per_point"] = traces[0].n_cycles * k
    return ScanTrace(freq, counts, g2, sigma, prov)


# --- analysis --------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisTemplate:
    """How to fit a trace: starting model, free parameters and etalon model."""

    start: ChannelModel
    free: tuple = DEFAULT_FREE
    etalon_mode: str = "lorentzian"
    initial: Mapping | None = None
    reweight_passes: int = 2


@dataclass
class AnalysisReport:
    intensity: FitResult
    g2: FitResult | None
    amplitude_A: float
    amplitude_A_sigma: float
    separation: float
    separation_sigma: float
    signal_fraction: np.ndarray

    @property
    def converged(self):
        return self.intensity.converged and (self.g2 is None or self.g2.converged)

    def to_record(self):
        return {
            "intensity_fit": self.intensity.to_record(),
            "g2_fit": self.g2.to_record() if self.g2 else None,
            "amplitude_A": self.amplitude_A,
            "amplitude_A_sigma": self.amplitude_A_sigma,
            "peak_separation_ghz": self.separation,
            "peak_separation_sigma_ghz": self.separation_sigma,
            "intensity_reduced_chi_square": self.intensity.reduced_chi_square,
            "g2_reduced_chi_square": self.g2.reduced_chi_square if self.g2 else None,
            "converged": self.converged,
        }


def _split_fitted(params, frequency, mode, window_center):
    traces = intensity_components(params, frequency, mode, window_center)
    signal = traces.pop(COHERENT)
    noise = params["background"] + sum(traces.values())
    return signal, noise


def analyze_scan(trace: ScanTrace, template: AnalysisTemplate) -> AnalysisReport:
    """Fit the intensity trace, derive chi_1 from it and fit A on the g2 trace.

    With a known number of cycles per point, the intensity weights come from
    the count model (Var n1 = s + s^2 + b for thinned thermal signal ``s``
    and Poisson noise ``b``), re-evaluated at the fitted model. The g2 trace
    is weighted by the generative-model error when the trace carries the
    pair-source parameters, otherwise by its recorded ``g2_sigma``.
    """
    nu = trace.frequency
    window_center = 0.5 * (nu.min() + nu.max())
    n = trace.n_cycles
    unit = n is None
    if unit:
        sigma = np.ones_like(nu)
    else:
        floor = 1.0 / n
        sigma = np.sqrt(np.maximum(trace.mean_counts, floor) / n)

    result = None
    initial = dict(template.initial or {})
    for _ in range(max(1, template.reweight_passes)):
        problem = intensity_problem(
            nu,
            trace.mean_counts,
            sigma,
            template.start,
            template.free,
            template.etalon_mode,
            window_center,
            initial,
            unit_weights=unit,
        )
        result = fit(problem)
        if unit:
            break
        initial = {k: result.parameters[k] for k in template.free}
        s, b = _split_fitted(result.parameters, nu, template.etalon_mode, window_center)
        sigma = np.sqrt(np.maximum(s + s * s + b, 1.0 / n) / n)

    s, b = _split_fitted(result.parameters, nu, template.etalon_mode, window_center)
    with np.errstate(divide="ignore", invalid="ignore"):
        fraction = np.where(s + b > 0, s / (s + b), 0.0)

    g2_fit = None
    amp, amp_sigma = math.nan, math.nan
    ok = np.isfinite(trace.g2) & np.isfinite(trace.g2_sigma) & (trace.g2_sigma > 0)
    link = _link_from_provenance(trace.provenance)
    if link is not None and n is not None:
        ok = np.isfinite(trace.g2)
    if ok.sum() >= 2:
        g2_sigma = trace.g2_sigma
        amp0 = 0.3
        passes = 2 if link is not None and n is not None else 1
        for _ in range(passes):
            if link is not None and n is not None:
                g2_sigma = _model_g2_sigma(s, b, link, max(amp0, 0.0), n)
                ok = np.isfinite(trace.g2) & np.isfinite(g2_sigma) & (g2_sigma > 0)
            problem = g2_problem(nu[ok], trace.g2[ok], g2_sigma[ok], fraction[ok], amp0, unit_weights=False)
            g2_fit = fit(problem)
            amp0 = g2_fit.parameters["amplitude_A"]
        amp, amp_sigma = amp0, g2_fit.sigma("amplitude_A")

    sep, sep_sigma = peak_separation(result)
    return AnalysisReport(result, g2_fit, amp, amp_sigma, sep, sep_sigma, fraction)


def _link_from_provenance(prov):
    try:
        return CountLink(
            float(prov.get("amplitude_A", 0.35)),
            float(prov["antistokes_mean"]),
            float(prov["pair_mean"]),
        )
    except (KeyError, TypeError, ValueError, InvalidParameterError):
        return None


def _model_g2_sigma(signal, noise, link: CountLink, amplitude_A, n_cycles):
    # Only the Anti-Stokes split depends on A; keep the recorded mean and pair source.
    amax = 1.0 + 1.0 / link.pair_mean
    trial = CountLink(min(amplitude_A, amax), link.antistokes_mean, link.pair_mean)
    s = np.clip(signal, 0.0, link.pair_mean)
    sigma = trial.g2_sigma_profile(s, noise, n_cycles)
    return np.where(s + noise > 0, sigma, np.nan)


# --- presets ---------------------------------------------------------------


def fluorescence_ratio(pressure, coefficient=7.0, gamma=D1_DECAY_RATE):
    """Fluorescence:coherent power ratio ``gamma_c : gamma`` at a buffer-gas pressure."""
    return collision_rate_from_pressure(coefficient, pressure) / gamma


def low_pressure_scenario(
    cfg: ScanConfig,
    pressure=0.2,
    coefficient=7.0,
    gamma=D1_DECAY_RATE,
    retrieval_factor=0.25,
    n_average=4,
) -> ScanTrace:
    """Scan preset for a given buffer-gas pressure, averaged over ``n_average`` seeds.

    Fluorescence power is set to the coherent power times ``gamma_c/gamma``
    (the lower doublet line keeps its share relative to the upper one), and
    the Anti-Stokes signal is scaled by ``retrieval_factor`` at fixed noise,
    which lowers A.
    """
    model = low_pressure_model(cfg.channel_model, pressure, coefficient, gamma)
    link = cfg.link.with_retrieval(retrieval_factor)
    base = replace(cfg, channel_model=model, link=link)
    traces = [run_synthetic_scan(base.with_seed(cfg.seed + k)) for k in range(n_average)]
    out = average_traces(traces)
    out.provenance.update({"pressure_torr": pressure, "retrieval_factor": retrieval_factor})
    return out


def low_pressure_model(model: ChannelModel, pressure, coefficient=7.0, gamma=D1_DECAY_RATE) -> ChannelModel:
    ratio = fluorescence_ratio(pressure, coefficient, gamma)
    coh = model.component(COHERENT)
    upper = model.component(FLUORESCENCE_UPPER)
    lower = model.component(FLUORESCENCE_LOWER)
    coherent_power = coh.amplitude if coh else 0.0
    up = upper.amplitude if upper else 0.0
    lo = lower.amplitude if lower else 0.0
    share_lower = lo / (up + lo) if up + lo > 0 else 0.0
    total = ratio * coherent_power
    return model.with_amplitudes(
        **{FLUORESCENCE_UPPER: total * (1 - share_lower), FLUORESCENCE_LOWER: total * share_lower}
    )

