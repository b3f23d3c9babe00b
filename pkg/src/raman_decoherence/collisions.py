"""Monte Carlo of a weakly driven emitter with a fluctuating excited state.

The excited-state amplitude ``c`` (laser rotating frame) obeys

    dc/dt = (i Delta - gamma/2) c - i drive/2 + (perturbations)

where ``Delta`` is the laser detuning from the atomic resonance. Two
perturbation channels can be switched on independently:

* white-noise detuning with ``<delta(t) delta(t')> = noise_amplitude * delta(t - t')``;
* instantaneous collisions that multiply ``c`` by a random phase factor.

Both rates follow the same linewidth convention as ``gamma``: each adds its
value to the full width of the incoherent line, so the mean dipole decays at
``(gamma + noise_amplitude + gamma_c) / 2``. With complete phase
randomization this means collisions fire at ``gamma_c / 2``. In the weak
drive limit the incoherent:coherent power ratio is then
``(noise_amplitude + gamma_c) : gamma``.

Rates are in s^-1 and angular frequencies in rad/s. Spectra are returned
against the angular offset from the laser; the atomic resonance sits at
``-Delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, InvalidWindowError, StabilityError, StatisticalQualityError

D1_DECAY_RATE = 3.6e7


def collision_rate_from_pressure(coefficient, pressure):
    """Collision rate (s^-1) from a broadening coefficient (MHz/torr) and pressure (torr)."""
    if coefficient < 0 or pressure < 0:
        raise InvalidParameterError(
            f"coefficient and pressure must be >= 0, got {coefficient} MHz/torr, {pressure} torr"
        )
    return coefficient * pressure * 1e6


@dataclass(frozen=True)
class CollisionParams:
    gamma: float = D1_DECAY_RATE
    gamma_c: float = 0.0
    noise_amplitude: float = 0.0
    detuning: float = 10 * D1_DECAY_RATE
    drive: float = 0.01 * 10 * D1_DECAY_RATE
    phase_spread: float = 2 * math.pi

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameterError(f"gamma must be > 0, got {self.gamma}")
        if not self.gamma_c >= 0:
            raise InvalidParameterError(f"gamma_c must be >= 0, got {self.gamma_c}")
        if not self.noise_amplitude >= 0:
            raise InvalidParameterError(f"noise_amplitude must be >= 0, got {self.noise_amplitude}")
        if not 0 <= self.drive <= 0.1 * abs(self.detuning):
            raise InvalidParameterError(
                f"drive must satisfy 0 <= drive <= 0.1*|detuning| = {0.1 * abs(self.detuning):.6g}, got {self.drive}"
            )
        if not 0 < self.phase_spread <= 2 * math.pi:
            raise InvalidParameterError(f"phase_spread must lie in (0, 2 pi], got {self.phase_spread}")

    @property
    def collision_event_rate(self):
        return 0.5 * self.gamma_c

    @property
    def dephasing_rate(self):
        """Extra decay rate of the mean dipole from both perturbation channels."""
        half = 0.5 * self.phase_spread
        kick_mean = math.sin(half) / half
        return 0.5 * self.noise_amplitude + self.collision_event_rate * (1.0 - kick_mean)

    def stationary_mean(self):
        """Ensemble-mean amplitude in steady state."""
        return 1j * self.drive / (2 * (1j * self.detuning - 0.5 * self.gamma - self.dephasing_rate))

    def steady_population(self):
        """Unperturbed steady-state ``|c|^2 = (drive/2)^2 / (Delta^2 + gamma^2/4)``."""
        return (0.5 * self.drive) ** 2 / (self.detuning**2 + 0.25 * self.gamma**2)

    def coherent_fraction(self):
        """Weak-drive coherent share of the emitted power."""
        return 0.5 * self.gamma / (0.5 * self.gamma + self.dephasing_rate)


@dataclass(frozen=True)
class TrajectoryConfig:
    duration: float
    dt: float
    n_trajectories: int = 1000
    seed: int = 0
    burn_in: float = 0.0

    def __post_init__(self):
        if not self.dt > 0 or not self.duration > 0:
            raise InvalidParameterError("dt and duration must be > 0")
        if self.n_trajectories < 1:
            raise InvalidParameterError(f"n_trajectories must be >= 1, got {self.n_trajectories}")
        if self.burn_in < 0:
            raise InvalidParameterError(f"burn_in must be >= 0, got {self.burn_in}")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def n_burn(self):
        return int(round(self.burn_in / self.dt))

    def check(self, params: CollisionParams):
        """Raise :class:`StabilityError` if the step or duration is unusable."""
        bound = 0.1 / max(params.gamma, params.gamma_c, abs(params.detuning))
        if not self.dt < bound:
            raise StabilityError(f"dt={self.dt:.6g} s violates the stability bound dt < {bound:.6g} s")
        if self.duration < 50.0 / params.gamma * (1 - 1e-9):
            raise StabilityError(
                f"duration={self.duration:.6g} s is shorter than 50/gamma = {50.0 / params.gamma:.6g} s"
            )


@dataclass(frozen=True)
class DipoleSeries:
    """Recorded amplitudes, shape ``(n_trajectories, n_steps)``."""

    amplitudes: np.ndarray
    dt: float
    detuning: float

    @property
    def times(self):
        return self.dt * np.arange(self.amplitudes.shape[1])


def _trajectory_block(params: CollisionParams, cfg: TrajectoryConfig, children):
    n_rec, n_burn = cfg.n_steps, cfg.n_burn
    total = n_rec + n_burn
    m = len(children)
    dt = cfg.dt
    lam = 1j * params.detuning - 0.5 * params.gamma
    prop = np.exp(lam * dt)
    fixed = 1j * params.drive / (2 * lam)
    p_event = -math.expm1(-params.collision_event_rate * dt)
    noise_scale = math.sqrt(params.noise_amplitude * dt)

    kicks = np.empty((total, m), dtype=complex)
    for j, child in enumerate(children):
        rng = np.random.default_rng(child)
        xi = rng.standard_normal(total)
        hit = rng.random(total) < p_event
        angle = params.phase_spread * (rng.random(total) - 0.5)
        kicks[:, j] = np.exp(1j * (noise_scale * xi + np.where(hit, angle, 0.0)))

    out = np.empty((n_rec, m), dtype=complex)
    c = np.full(m, params.stationary_mean(), dtype=complex)
    # Exact step of the deterministic part, then the multiplicative kicks.
    for n in range(total):
        c = (fixed + (c - fixed) * prop) * kicks[n]
        if n >= n_burn:
            out[n - n_burn] = c
    return out.T


def _children(cfg: TrajectoryConfig):
    return np.random.SeedSequence(cfg.seed).spawn(cfg.n_trajectories)


def simulate_dipole(params: CollisionParams, cfg: TrajectoryConfig) -> DipoleSeries:
    """Integrate all trajectories; trajectory ``k`` uses substream ``k`` of ``cfg.seed``."""
    cfg.check(params)
    amps = _trajectory_block(params, cfg, _children(cfg))
    return DipoleSeries(amps, cfg.dt, params.detuning)


@dataclass(frozen=True)
class EmissionSpectrum:
    """Trajectory-averaged periodogram normalized to unit area.

    ``group_power`` holds unnormalized periodogram sums for disjoint groups
    of trajectories (same frequency order) and is used for error estimates.
    """

    offsets: np.ndarray
    density: np.ndarray
    detuning: float
    n_trajectories: int
    group_power: np.ndarray

    @property
    def bin_width(self):
        return self.offsets[1] - self.offsets[0]

    def table(self):
        return np.column_stack([self.offsets, self.density])


def _periodogram(amps):
    return np.abs(np.fft.fft(amps, axis=1)) ** 2


def _spectrum_from_groups(groups, n_steps, dt, detuning, n_traj):
    freqs = -2 * np.pi * np.fft.fftshift(np.fft.fftfreq(n_steps, dt))
    offsets = freqs[::-1]
    group_power = np.array([np.fft.fftshift(g)[::-1] for g in groups])
    total = group_power.sum(axis=0)
    dw = offsets[1] - offsets[0]
    density = total / (total.sum() * dw)
    return EmissionSpectrum(offsets, density, detuning, n_traj, group_power)


def _group_slices(n, n_groups):
    edges = np.linspace(0, n, min(n_groups, n) + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def emission_spectrum(series: DipoleSeries, n_groups=20) -> EmissionSpectrum:
    """Average periodogram of the emitted field (taken proportional to ``c``)."""
    amps = series.amplitudes
    n_traj, n_steps = amps.shape
    if n_traj < 10:
        raise StatisticalQualityError(f"at least 10 trajectories are required, got {n_traj}")
    groups = [_periodogram(amps[s]).sum(axis=0) for s in _group_slices(n_traj, n_groups)]
    return _spectrum_from_groups(groups, n_steps, series.dt, series.detuning, n_traj)


def simulate_spectrum(params: CollisionParams, cfg: TrajectoryConfig, n_groups=20, block=250) -> EmissionSpectrum:
    """Same result as ``emission_spectrum(simulate_dipole(...))`` in bounded memory."""
    cfg.check(params)
    if cfg.n_trajectories < 10:
        raise StatisticalQualityError(f"at least 10 trajectories are required, got {cfg.n_trajectories}")
    children = _children(cfg)
    groups = []
    for s in _group_slices(cfg.n_trajectories, n_groups):
        acc = 0.0
        for start in range(s.start, s.stop, block):
            stop = min(start + block, s.stop)
            acc = acc + _periodogram(_trajectory_block(params, cfg, children[start:stop])).sum(axis=0)
        groups.append(acc)
    return _spectrum_from_groups(groups, cfg.n_steps, cfg.dt, params.detuning, cfg.n_trajectories)


def _check_window(spectrum: EmissionSpectrum, window):
    if not window >= spectrum.bin_width:
        raise InvalidWindowError(f"window {window:.6g} does not resolve one spectral bin ({spectrum.bin_width:.6g})")
    if not window < 0.5 * abs(spectrum.detuning):
        raise InvalidWindowError(
            f"window {window:.6g} rad/s reaches the incoherent component; need < |detuning|/2 = "
            f"{0.5 * abs(spectrum.detuning):.6g}"
        )


def coherent_fraction(spectrum: EmissionSpectrum, window) -> float:
    """Share of the total power within ``+-window`` (rad/s) of the laser frequency."""
    _check_window(spectrum, window)
    inside = np.abs(spectrum.offsets) <= window
    return float(spectrum.density[inside].sum() / spectrum.density.sum())


def weight_ratio(spectrum: EmissionSpectrum, window):
    """Incoherent:coherent power ratio with a jackknife standard error over groups."""
    _check_window(spectrum, window)
    inside = np.abs(spectrum.offsets) <= window
    g = spectrum.group_power

    def ratio(power):
        coh = power[inside].sum()
        return (power.sum() - coh) / coh

    full = ratio(g.sum(axis=0))
    k = g.shape[0]
    if k < 2:
        return full, math.nan
    total = g.sum(axis=0)
    loo = np.array([ratio(total - g[i]) for i in range(k)])
    err = math.sqrt((k - 1) / k * np.sum((loo - loo.mean()) ** 2))
    return full, err


def incoherent_center(spectrum: EmissionSpectrum, window, iterations=20) -> float:
    """Centre of the incoherent component by an iterated symmetric centroid.

    The coherent line (``+-window`` around 0) is excluded. The first guess is
    the peak of the remaining spectrum after smoothing over a few bins.
    """
    _check_window(spectrum, window)
    w, d = spectrum.offsets, spectrum.density.copy()
    d[np.abs(w) <= window] = 0.0
    kernel = np.ones(9) / 9
    center = w[np.argmax(np.convolve(d, kernel, mode="same"))]
    half = 0.5 * abs(center)
    for _ in range(iterations):
        sel = np.abs(w - center) <= half
        sel &= np.abs(w) > window
        new = float((w[sel] * d[sel]).sum() / d[sel].sum())
        if abs(new - center) < 1e-3 * spectrum.bin_width:
            center = new
            break
        center = new
    return center
