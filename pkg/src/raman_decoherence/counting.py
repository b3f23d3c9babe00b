"""Per-pulse photon counts for the Stokes/Anti-Stokes pair and g2 statistics.

Pairs are drawn from a thermal (Bose-Einstein) number distribution with
identical photon numbers in both arms, thinned binomially by the detection
efficiencies, with independent Poisson noise added to each channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UndefinedEstimateError
from .spectrum import ChannelModel, snr_profile, split_signal_noise


@dataclass(frozen=True)
class JointCountModel:
    nbar_pair: float
    eta_stokes: float = 1.0
    eta_antistokes: float = 1.0
    noise_stokes: float = 0.0
    noise_antistokes: float = 0.0

    def __post_init__(self):
        if not self.nbar_pair >= 0:
            raise InvalidParameterError(f"nbar_pair must be >= 0, got {self.nbar_pair}")
        for name in ("eta_stokes", "eta_antistokes"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {value}")
        for name in ("noise_stokes", "noise_antistokes"):
            value = getattr(self, name)
            if not value >= 0:
                raise InvalidParameterError(f"{name} must be >= 0, got {value}")

    @property
    def mean_stokes(self):
        return self.eta_stokes * self.nbar_pair + self.noise_stokes

    @property
    def mean_antistokes(self):
        return self.eta_antistokes * self.nbar_pair + self.noise_antistokes

    @property
    def chi_stokes(self):
        return _ratio(self.eta_stokes * self.nbar_pair, self.noise_stokes)

    @property
    def chi_antistokes(self):
        return _ratio(self.eta_antistokes * self.nbar_pair, self.noise_antistokes)


def _ratio(signal, noise):
    if noise == 0:
        return math.inf if signal > 0 else math.nan
    return signal / noise


@dataclass(frozen=True)
class PulseOutcomes:
    """Counts of many pulses, stored column-wise."""

    n_stokes: np.ndarray
    n_antistokes: np.ndarray

    def __len__(self):
        return len(self.n_stokes)

    def __getitem__(self, i):
        return int(self.n_stokes[i]), int(self.n_antistokes[i])


@dataclass(frozen=True)
class G2Estimate:
    value: float
    sigma: float
    n_cycles: int
    bootstrap_sigma: float | None = None


def sample_joint_counts(model: JointCountModel, n_cycles: int, seed, saturating=False) -> PulseOutcomes:
    """Draw ``n_cycles`` pulses. ``saturating`` clips each detector at one click."""
    if n_cycles < 1:
        raise InvalidParameterError(f"n_cycles must be >= 1, got {n_cycles}")
    rng = np.random.default_rng(seed)
    if model.nbar_pair > 0:
        # numpy's geometric counts trials to the first success, starting at 1
        pairs = rng.geometric(1.0 / (1.0 + model.nbar_pair), size=n_cycles) - 1
    else:
        pairs = np.zeros(n_cycles, dtype=np.int64)
    n1 = rng.binomial(pairs, model.eta_stokes) + rng.poisson(model.noise_stokes, n_cycles)
    n2 = rng.binomial(pairs, model.eta_antistokes) + rng.poisson(model.noise_antistokes, n_cycles)
    if saturating:
        n1 = np.minimum(n1, 1)
        n2 = np.minimum(n2, 1)
    return PulseOutcomes(n1.astype(np.int64), n2.astype(np.int64))


def estimate_g2(outcomes: PulseOutcomes, bootstrap=0, seed=None) -> G2Estimate:
    """Plug-in estimate of ``<n1 n2> / (<n1><n2>)`` with a delta-method error.

    With ``bootstrap > 0`` the cycles are also resampled that many times and
    the spread of the resampled estimates is reported as ``bootstrap_sigma``.
    """
    n1 = np.asarray(outcomes.n_stokes, dtype=float)
    n2 = np.asarray(outcomes.n_antistokes, dtype=float)
    n = n1.size
    if n < 2:
        raise UndefinedEstimateError("at least two cycles are required")
    prod = n1 * n2
    m1, m2, m12 = n1.mean(), n2.mean(), prod.mean()
    if m1 == 0 or m2 == 0:
        raise UndefinedEstimateError("g2 is undefined when a channel recorded no counts")
    g = m12 / (m1 * m2)
    grad = np.array([1.0 / (m1 * m2), -g / m1, -g / m2])
    stack = np.vstack([prod - m12, n1 - m1, n2 - m2])
    cov = stack @ stack.T / ((n - 1) * n)
    sigma = math.sqrt(max(grad @ cov @ grad, 0.0))
    boot = None
    if bootstrap:
        rng = np.random.default_rng(seed)
        values = np.empty(bootstrap)
        for b in range(bootstrap):
            idx = rng.integers(0, n, n)
            s1, s2 = n1[idx].mean(), n2[idx].mean()
            values[b] = prod[idx].mean() / (s1 * s2) if s1 > 0 and s2 > 0 else np.nan
        boot = float(np.nanstd(values, ddof=1))
    return G2Estimate(float(g), sigma, n, boot)


def _moment_table(nbar, eta1, eta2, mu1, mu2):
    """``E[n1^a n2^b]`` for ``a, b`` in ``0..2``; inputs broadcast, shape ``(3, 3, ...)``.

    Thermal raw moments follow from the factorial moments ``j! nbar^j``;
    ``E[B^2 | m] = eta (1 - eta) m + eta^2 m^2`` for binomial thinning.
    """
    nbar, eta1, eta2, mu1, mu2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (nbar, eta1, eta2, mu1, mu2)))
    m1 = nbar
    m2 = 2 * nbar**2 + nbar
    m3 = 6 * nbar**3 + 6 * nbar**2 + nbar
    m4 = 24 * nbar**4 + 36 * nbar**3 + 14 * nbar**2 + nbar
    a1, b1 = eta1 - eta1**2, eta1**2
    a2, b2 = eta2 - eta2**2, eta2**2
    one = np.ones_like(nbar)
    pair = np.array(
        [
            [one, eta2 * m1, a2 * m1 + b2 * m2],
            [eta1 * m1, eta1 * eta2 * m2, eta1 * (a2 * m2 + b2 * m3)],
            [a1 * m1 + b1 * m2, eta2 * (a1 * m2 + b1 * m3), a1 * a2 * m2 + (a1 * b2 + b1 * a2) * m3 + b1 * b2 * m4],
        ]
    )
    q1 = (one, mu1, mu1 + mu1**2)
    q2 = (one, mu2, mu2 + mu2**2)
    out = np.zeros_like(pair)
    for a in range(3):
        for b in range(3):
            for i in range(a + 1):
                for j in range(b + 1):
                    out[a, b] += math.comb(a, i) * math.comb(b, j) * pair[i, j] * q1[a - i] * q2[b - j]
    return out


def joint_moments(model: JointCountModel) -> np.ndarray:
    """Exact ``E[n1^a n2^b]`` for ``a, b`` in ``0..2`` as a 3x3 array."""
    return _moment_table(
        model.nbar_pair, model.eta_stokes, model.eta_antistokes, model.noise_stokes, model.noise_antistokes
    )


def exact_g2(model: JointCountModel) -> float:
    """Population cross-correlation of the generative model."""
    m = joint_moments(model)
    if m[1, 0] == 0 or m[0, 1] == 0:
        return math.nan
    return float(m[1, 1] / (m[1, 0] * m[0, 1]))


def _delta_method_sigma(m, n_cycles):
    m1, m2, m12 = m[1, 0], m[0, 1], m[1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        g = m12 / (m1 * m2)
        grad = (1.0 / (m1 * m2), -g / m1, -g / m2)
        cov = (
            (m[2, 2] - m12**2, m[2, 1] - m12 * m1, m[1, 2] - m12 * m2),
            (m[2, 1] - m12 * m1, m[2, 0] - m1**2, m12 - m1 * m2),
            (m[1, 2] - m12 * m2, m12 - m1 * m2, m[0, 2] - m2**2),
        )
        var = sum(grad[i] * cov[i][j] * grad[j] for i in range(3) for j in range(3))
        out = np.sqrt(np.maximum(var, 0.0) / n_cycles)
    return np.where((m1 > 0) & (m2 > 0), out, np.nan)


def predicted_g2_sigma(model: JointCountModel, n_cycles: int) -> float:
    """Delta-method standard error of the estimator for ``n_cycles`` pulses."""
    return float(_delta_method_sigma(joint_moments(model), n_cycles))


def snr_factor(chi):
    """``(1 + 1/chi)^-1`` with the limits chi -> inf (1) and chi = 0 (0)."""
    chi = np.asarray(chi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.isinf(chi), 1.0, chi / (1.0 + chi))
    return float(out) if out.ndim == 0 else out


def degrade_g2(g2_signal, chi1, chi2):
    """Cross-correlation after adding uncorrelated noise to both channels.

    ``g - 1 = (g2_signal - 1) (1 + 1/chi1)^-1 (1 + 1/chi2)^-1``.
    """
    if np.any(np.asarray(g2_signal) < 0):
        raise InvalidParameterError(f"g2_signal must be >= 0, got {g2_signal}")
    if np.any(np.asarray(chi1) < 0) or np.any(np.asarray(chi2) < 0):
        raise InvalidParameterError("signal-to-noise ratios must be >= 0")
    g = np.asarray(g2_signal, dtype=float)
    factor = np.asarray(snr_factor(chi1)) * np.asarray(snr_factor(chi2))
    # the noise-free limit returns g2_signal itself, not 1 + (g - 1)
    out = np.where(factor == 1.0, g, 1.0 + (g - 1.0) * factor)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CountLink:
    """Ties a channel model to a generative pair model.

    The pair source has mean ``pair_mean``; the Anti-Stokes channel (its
    etalon parked on resonance) records ``antistokes_mean`` counts per pulse
    and is split into signal and noise so that the single correlation
    parameter ``amplitude_A = (g2_SAS - 1)(1 + 1/chi_2)^-1`` is reproduced.
    For thermal pairs ``g2_SAS = 2 + 1/pair_mean``.
    """

    amplitude_A: float = 0.35
    antistokes_mean: float = 0.8
    pair_mean: float = 1.0

    def __post_init__(self):
        if not self.pair_mean > 0:
            raise InvalidParameterError(f"pair_mean must be > 0, got {self.pair_mean}")
        if not self.antistokes_mean > 0:
            raise InvalidParameterError(f"antistokes_mean must be > 0, got {self.antistokes_mean}")
        if not self.amplitude_A >= 0:
            raise InvalidParameterError(f"amplitude_A must be >= 0, got {self.amplitude_A}")
        amax = 1.0 + 1.0 / self.pair_mean
        if self.amplitude_A > amax:
            raise InvalidParameterError(
                f"amplitude_A={self.amplitude_A} exceeds the noise-free limit {amax:.4g} for pair_mean={self.pair_mean}"
            )
        if self.eta_antistokes > 1:
            raise InvalidParameterError("antistokes_mean too large for pair_mean (efficiency > 1)")

    @property
    def g2_signal(self):
        return 2.0 + 1.0 / self.pair_mean

    @property
    def antistokes_signal(self):
        return self.amplitude_A / (self.g2_signal - 1.0) * self.antistokes_mean

    @property
    def eta_antistokes(self):
        return self.antistokes_signal / self.pair_mean

    @property
    def noise_antistokes(self):
        return self.antistokes_mean - self.antistokes_signal

    def with_retrieval(self, factor):
        """Scale the Anti-Stokes signal by ``factor`` at fixed noise."""
        if not 0 <= factor <= 1:
            raise InvalidParameterError(f"retrieval factor must lie in [0, 1], got {factor}")
        signal = self.antistokes_signal * factor
        total = signal + self.noise_antistokes
        amp = (self.g2_signal - 1.0) * signal / total
        return CountLink(amp, total, self.pair_mean)

    def g2_sigma_profile(self, signal, noise, n_cycles):
        """Predicted g2 standard error for arrays of Stokes signal and noise means."""
        signal = np.asarray(signal, dtype=float)
        if np.any(signal > self.pair_mean):
            raise InvalidParameterError(f"Stokes signal exceeds pair_mean {self.pair_mean:.4g}")
        m = _moment_table(
            self.pair_mean,
            np.maximum(signal, 0.0) / self.pair_mean,
            self.eta_antistokes,
            np.maximum(noise, 0.0),
            self.noise_antistokes,
        )
        return _delta_method_sigma(m, n_cycles)

    def joint_model(self, signal_mean, noise_mean) -> JointCountModel:
        """Count model at one scan point with the given Stokes signal and noise."""
        if signal_mean > self.pair_mean:
            raise InvalidParameterError(
                f"Stokes signal {signal_mean:.4g} exceeds pair_mean {self.pair_mean:.4g}"
            )
        return JointCountModel(
            nbar_pair=self.pair_mean,
            eta_stokes=max(float(signal_mean), 0.0) / self.pair_mean,
            eta_antistokes=self.eta_antistokes,
            noise_stokes=max(float(noise_mean), 0.0),
            noise_antistokes=self.noise_antistokes,
        )


def predict_g2_trace(model: ChannelModel, amplitude_A, grid, mode="airy", window_center=None):
    """Expected ``g2(nu) = 1 + A (1 + 1/chi_1(nu))^-1`` along the scan."""
    if not amplitude_A >= 0:
        raise InvalidParameterError(f"amplitude_A must be >= 0, got {amplitude_A}")
    return 1.0 + amplitude_A * snr_factor(snr_profile(model, grid, mode, window_center))


@dataclass(frozen=True)
class ConfidenceBand:
    lower: np.ndarray
    upper: np.ndarray
    sigma: np.ndarray


def confidence_band(trace, n_cycles, model: ChannelModel, grid, link: CountLink, mode="airy", window_center=None):
    """Per-point 1-sigma band around a g2 trace for ``n_cycles`` pulses.

    Uses the exact moments of the generative count model at each point.
    Points where the Stokes channel is empty get ``nan``.
    """
    if n_cycles < 100:
        raise InvalidParameterError(f"n_cycles must be >= 100, got {n_cycles}")
    signal, noise = split_signal_noise(model, grid, mode, window_center)
    sigma = link.g2_sigma_profile(signal, noise, n_cycles)
    trace = np.asarray(trace, dtype=float)
    return ConfidenceBand(trace - sigma, trace + sigma, sigma)
