"""Damped least-squares fitting of scan models.

The engine minimizes ``sum(((model - data) / sigma)^2)`` over the free
parameters with a Marquardt-damped Gauss-Newton iteration and a central
difference Jacobian. Positive quantities are fitted in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DegenerateFitError, InvalidParameterError, InvalidQueryError, ModelEvaluationError
from .lineshape import EtalonConfig, ProfileParams, filtered_line
from .spectrum import ChannelModel, fold_into_window, COHERENT, FLUORESCENCE_LOWER, FLUORESCENCE_UPPER, LEAKAGE

TRANSFORMS = ("identity", "log")

MAX_ITERATIONS = 500
CHI2_RTOL = 1e-10
STEP_RTOL = 1e-8
INITIAL_DAMPING = 1e-3
DAMPING_UP = 3.0
DAMPING_DOWN = 2.0
_FD_STEP = np.finfo(float).eps ** (1 / 3)


@dataclass(frozen=True)
class FreeParameter:
    """A fitted parameter.

    The model sees ``scale * x`` where ``x`` starts at ``initial`` (identity
    transform) or is ``exp`` of the internal variable (log transform).
    """

    name: str
    initial: float
    transform: str = "identity"
    scale: float = 1.0

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise InvalidParameterError(f"{self.name}: transform must be one of {TRANSFORMS}")
        if self.transform == "log" and not self.initial > 0:
            raise InvalidParameterError(f"{self.name}: log-transformed parameter needs initial > 0")
        if self.scale == 0:
            raise InvalidParameterError(f"{self.name}: scale must be nonzero")

    def to_internal(self, value):
        x = value / self.scale
        return math.log(x) if self.transform == "log" else x

    def to_natural(self, u):
        return self.scale * (math.exp(u) if self.transform == "log" else u)

    def derivative(self, u):
        """d(natural)/d(internal)."""
        return self.scale * (math.exp(u) if self.transform == "log" else 1.0)


@dataclass
class FitProblem:
    frequency: np.ndarray
    value: np.ndarray
    sigma: np.ndarray
    model: Callable[[Mapping[str, float]], np.ndarray]
    free: tuple[FreeParameter, ...]
    fixed: dict = field(default_factory=dict)
    model_kind: str = "custom"
    unit_weights: bool = False

    def __post_init__(self):
        self.frequency = np.asarray(self.frequency, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.free = tuple(self.free)
        if not self.free:
            raise InvalidParameterError("at least one free parameter is required")
        names = [p.name for p in self.free]
        if len(set(names)) != len(names):
            raise InvalidParameterError(f"duplicate free parameters in {names}")
        if overlap := set(names) & set(self.fixed):
            raise InvalidParameterError(f"parameters both free and fixed: {sorted(overlap)}")
        if not (self.frequency.shape == self.value.shape == self.sigma.shape):
            raise InvalidParameterError("frequency, value and sigma must have equal shapes")
        if self.value.size < 2 * len(self.free):
            raise InvalidParameterError(
                f"{self.value.size} points cannot constrain {len(self.free)} free parameters (need >= 2x)"
            )
        if not np.all(self.sigma > 0):
            raise InvalidParameterError("all sigmas must be > 0")

    @property
    def names(self):
        return [p.name for p in self.free]

    def initial(self):
        return np.array([p.initial for p in self.free], dtype=float)

    def params(self, theta):
        out = dict(self.fixed)
        out.update(zip(self.names, (float(t) for t in theta)))
        return out

    def evaluate(self, theta):
        return np.asarray(self.model(self.params(theta)), dtype=float)


@dataclass
class FitResult:
    parameters: dict
    free_names: list
    covariance: np.ndarray
    chi_square: float
    reduced_chi_square: float
    residuals: np.ndarray
    converged: bool
    iterations: int
    model_values: np.ndarray
    unit_weights: bool = False
    chi2_history: list = field(default_factory=list)
    message: str = ""

    def sigma(self, name):
        if name in self.free_names:
            i = self.free_names.index(name)
            return math.sqrt(max(self.covariance[i, i], 0.0))
        if name in self.parameters:
            return 0.0
        raise InvalidQueryError(f"no parameter named {name!r}")

    def correlation(self, a, b):
        """Covariance entry between two parameters (0 if either is fixed)."""
        if a in self.free_names and b in self.free_names:
            return float(self.covariance[self.free_names.index(a), self.free_names.index(b)])
        return 0.0

    def to_record(self):
        return {
            "parameters": [
                {"name": k, "value": v, "sigma": self.sigma(k), "free": k in self.free_names}
                for k, v in self.parameters.items()
            ],
            "chi_square": self.chi_square,
            "reduced_chi_square": self.reduced_chi_square,
            "converged": self.converged,
            "iterations": self.iterations,
            "unit_weights": self.unit_weights,
            "message": self.message,
        }


def _evaluate(problem: FitProblem, theta, context=""):
    try:
        out = problem.evaluate(theta)
    except Exception as exc:  # noqa: BLE001 - re-raised with parameter context
        values = ", ".join(f"{n}={t:.10g}" for n, t in zip(problem.names, theta))
        raise ModelEvaluationError(f"model evaluation failed{context} at {values}: {exc}") from exc
    if not np.all(np.isfinite(out)):
        values = ", ".join(f"{n}={t:.10g}" for n, t in zip(problem.names, theta))
        raise ModelEvaluationError(f"model returned non-finite values{context} at {values}")
    return out


def _as_theta(problem: FitProblem, at):
    if isinstance(at, Mapping):
        return np.array([at[n] for n in problem.names], dtype=float)
    return np.asarray(at, dtype=float)


def _steps(problem: FitProblem, theta, base=_FD_STEP):
    typical = np.array([abs(p.scale) for p in problem.free])
    return base * np.maximum(np.abs(theta), typical * 1e-3)


def _central_column(problem, theta, i, h):
    tp, tm = theta.copy(), theta.copy()
    tp[i] += h
    tm[i] -= h
    name = problem.names[i]
    fp = _evaluate(problem, tp, f" (stencil {name}+{h:.3g})")
    fm = _evaluate(problem, tm, f" (stencil {name}-{h:.3g})")
    return (fp - fm) / (2.0 * h)


def jacobian(problem: FitProblem, at) -> np.ndarray:
    """Model derivatives w.r.t. the natural free parameters, shape ``(n_points, n_free)``.

    Central differences with a step scaled to each parameter's magnitude.
    """
    theta = _as_theta(problem, at)
    h = _steps(problem, theta)
    return np.column_stack([_central_column(problem, theta, i, h[i]) for i in range(theta.size)])


def richardson_jacobian(problem: FitProblem, at, levels=4, base=1e-3) -> np.ndarray:
    """Richardson-extrapolated central differences over ``levels`` halvings."""
    theta = _as_theta(problem, at)
    h0 = _steps(problem, theta, base)
    cols = []
    for i in range(theta.size):
        table = [_central_column(problem, theta, i, h0[i] / 2**k) for k in range(levels)]
        for order in range(1, levels):
            factor = 4.0**order
            table = [(factor * table[k + 1] - table[k]) / (factor - 1.0) for k in range(len(table) - 1)]
        cols.append(table[0])
    return np.column_stack(cols)


def _check_degenerate(problem: FitProblem, normal):
    names = problem.names
    diag = np.diag(normal)
    dead = [n for n, d in zip(names, diag) if not d > 0]
    if dead:
        raise DegenerateFitError(
            f"data carry no information on {', '.join(dead)}", {n: 1.0 for n in dead}
        )
    scale = 1.0 / np.sqrt(diag)
    corr = normal * np.outer(scale, scale)
    evals, evecs = np.linalg.eigh(corr)
    if evals[0] < 1e-12 * evals[-1]:
        vec = evecs[:, 0]
        combo = {n: float(v) for n, v in zip(names, vec) if abs(v) > 0.1}
        desc = " + ".join(f"{v:+.3f}*{n}" for n, v in combo.items())
        raise DegenerateFitError(f"normal matrix is singular; unconstrained combination: {desc}", combo)


def fit(problem: FitProblem, max_iterations=MAX_ITERATIONS) -> FitResult:
    """Minimize weighted chi-square from the problem's initial values."""
    free = problem.free
    u = np.array([p.to_internal(p.initial) for p in free])

    def natural(u):
        return np.array([p.to_natural(x) for p, x in zip(free, u)])

    def weighted(theta):
        return (_evaluate(problem, theta) - problem.value) / problem.sigma

    def internal_jacobian(u):
        theta = natural(u)
        dtheta = np.array([p.derivative(x) for p, x in zip(free, u)])
        return jacobian(problem, theta) / problem.sigma[:, None] * dtheta[None, :]

    theta = natural(u)
    ref = np.maximum(np.abs(theta), 1e-8 * np.array([abs(p.scale) for p in free]))
    e = weighted(theta)
    chi2 = float(e @ e)
    history = [chi2]
    damping = INITIAL_DAMPING
    iterations = 0
    converged = False
    message = "iteration limit reached"

    J = internal_jacobian(u)
    normal = J.T @ J
    _check_degenerate(problem, normal)
    while iterations < max_iterations:
        iterations += 1
        grad = J.T @ e
        lhs = normal + damping * np.diag(np.diag(normal))
        try:
            delta = np.linalg.solve(lhs, -grad)
        except np.linalg.LinAlgError:
            damping *= DAMPING_UP
            continue
        u_new = u + delta
        theta_new = natural(u_new)
        rel_step = float(np.max(np.abs(theta_new - theta) / ref))
        try:
            e_new = weighted(theta_new)
            chi2_new = float(e_new @ e_new)
        except ModelEvaluationError:
            chi2_new = math.inf
        if chi2_new < chi2:
            drop = chi2 - chi2_new
            u, theta, e = u_new, theta_new, e_new
            ref = np.maximum(ref, np.abs(theta))
            chi2_old, chi2 = chi2, chi2_new
            history.append(chi2)
            damping /= DAMPING_DOWN
            if drop <= CHI2_RTOL * chi2_old:
                converged, message = True, "relative chi-square change below tolerance"
                break
            if rel_step < STEP_RTOL:
                converged, message = True, "relative parameter step below tolerance"
                break
            J = internal_jacobian(u)
            normal = J.T @ J
        else:
            if rel_step < STEP_RTOL:
                converged, message = True, "relative parameter step below tolerance"
                break
            damping *= DAMPING_UP

    J = internal_jacobian(u)
    normal = J.T @ J
    _check_degenerate(problem, normal)
    n, k = problem.value.size, len(free)
    cov_u = np.linalg.inv(normal)
    reduced = chi2 / (n - k) if n > k else math.nan
    if problem.unit_weights:
        cov_u = cov_u * reduced
    dtheta = np.array([p.derivative(x) for p, x in zip(free, u)])
    cov = cov_u * np.outer(dtheta, dtheta)
    cov = 0.5 * (cov + cov.T)
    model_values = _evaluate(problem, theta)
    return FitResult(
        parameters=problem.params(theta),
        free_names=problem.names,
        covariance=cov,
        chi_square=chi2,
        reduced_chi_square=reduced,
        residuals=problem.value - model_values,
        converged=converged,
        iterations=iterations,
        model_values=model_values,
        unit_weights=problem.unit_weights,
        chi2_history=history,
        message=message,
    )


def peak_separation(result: FitResult, first="coherent_center", second="fluorescence_upper_center"):
    """``|first - second|`` and its propagated standard error."""
    for name in (first, second):
        if name not in result.parameters:
            raise InvalidQueryError(f"fit result has no parameter {name!r}")
    a, b = result.parameters[first], result.parameters[second]
    var = result.sigma(first) ** 2 + result.sigma(second) ** 2 - 2.0 * result.correlation(first, second)
    return abs(a - b), math.sqrt(max(var, 0.0))


# --- scan models -----------------------------------------------------------

INTENSITY_PARAMETERS = (
    "coherent_amplitude",
    "coherent_center",
    "fluorescence_upper_amplitude",
    "fluorescence_upper_center",
    "fluorescence_lower_amplitude",
    "leakage_amplitude",
    "background",
    "doppler_fwhm",
    "excited_split",
    "hyperfine_ground_split",
    "etalon_fwhm",
    "etalon_fsr",
)

DEFAULT_FREE = (
    "coherent_amplitude",
    "coherent_center",
    "fluorescence_upper_amplitude",
    "fluorescence_upper_center",
    "leakage_amplitude",
    "background",
)

_LOG_PARAMETERS = {
    "coherent_amplitude",
    "fluorescence_upper_amplitude",
    "fluorescence_lower_amplitude",
    "leakage_amplitude",
    "background",
    "doppler_fwhm",
    "etalon_fwhm",
}


def intensity_parameters(model: ChannelModel) -> dict:
    """Flat parameter values of a channel model, as used by the intensity fit."""
    coh = model.component(COHERENT)
    upper = model.component(FLUORESCENCE_UPPER)
    lower = model.component(FLUORESCENCE_LOWER)
    leak = model.component(LEAKAGE)
    coh_center = coh.center if coh else 0.0
    return {
        "coherent_amplitude": coh.amplitude if coh else 0.0,
        "coherent_center": coh_center,
        "fluorescence_upper_amplitude": upper.amplitude if upper else 0.0,
        "fluorescence_upper_center": upper.center if upper else coh_center - model.write_detuning,
        "fluorescence_lower_amplitude": lower.amplitude if lower else 0.0,
        "leakage_amplitude": leak.amplitude if leak else 0.0,
        "background": model.background,
        "doppler_fwhm": upper.profile.gaussian_fwhm if upper else 0.48,
        "excited_split": model.excited_split,
        "hyperfine_ground_split": model.hyperfine_ground_split,
        "etalon_fwhm": model.etalon.fwhm,
        "etalon_fsr": model.etalon.fsr,
    }


def intensity_components(params: Mapping[str, float], frequency, mode="lorentzian", window_center=0.0):
    """Per-component scan traces for flat intensity parameters (amplitudes included)."""
    nu = np.asarray(frequency, dtype=float)
    etalon = EtalonConfig(params["etalon_fsr"], params["etalon_fwhm"])
    doppler = ProfileParams(params["doppler_fwhm"], 0.0)
    c0 = params["coherent_center"]
    cu = params["fluorescence_upper_center"]
    lines = (
        (COHERENT, params["coherent_amplitude"], c0, None),
        (FLUORESCENCE_UPPER, params["fluorescence_upper_amplitude"], cu, doppler),
        (FLUORESCENCE_LOWER, params["fluorescence_lower_amplitude"], cu - params["excited_split"], doppler),
        (LEAKAGE, params["leakage_amplitude"], c0 + params["hyperfine_ground_split"], None),
    )
    out = {}
    for kind, amp, center, profile in lines:
        if amp == 0:
            out[kind] = np.zeros_like(nu)
            continue
        center = fold_into_window(center, etalon, window_center)
        out[kind] = amp * filtered_line(nu - center, etalon, profile, mode)
    return out


def intensity_model(frequency, mode="lorentzian", window_center=None):
    """Callable mapping flat parameters to mean counts at ``frequency``."""
    nu = np.asarray(frequency, dtype=float)
    wc = 0.5 * (nu.min() + nu.max()) if window_center is None else window_center

    def model(params):
        traces = intensity_components(params, nu, mode, wc)
        return params["background"] + sum(traces.values())

    return model


def intensity_problem(
    frequency,
    counts,
    sigma,
    start: ChannelModel,
    free=DEFAULT_FREE,
    mode="lorentzian",
    window_center=None,
    initial=None,
    unit_weights=False,
    fixed=None,
) -> FitProblem:
    """Fit problem for a Stokes intensity scan, seeded from ``start``.

    ``initial`` overrides starting values; ``fixed`` overrides held values.
    """
    values = intensity_parameters(start)
    values.update(initial or {})
    unknown = (set(free) | set(fixed or {})) - set(INTENSITY_PARAMETERS)
    if unknown:
        raise InvalidParameterError(f"unknown intensity parameters: {sorted(unknown)}")
    params = [
        FreeParameter(n, values[n], "log" if n in _LOG_PARAMETERS else "identity") for n in free
    ]
    held = {n: v for n, v in values.items() if n not in free}
    held.update({k: v for k, v in (fixed or {}).items() if k not in free})
    return FitProblem(
        frequency,
        counts,
        sigma,
        intensity_model(frequency, mode, window_center),
        params,
        held,
        model_kind="intensity_scan",
        unit_weights=unit_weights,
    )


def g2_problem(frequency, g2, sigma, snr_fraction, initial_A=0.3, unit_weights=False) -> FitProblem:
    """Single-parameter fit of ``g2 = 1 + A * snr_fraction`` (A unbounded)."""
    fraction = np.asarray(snr_fraction, dtype=float)

    def model(params):
        return 1.0 + params["amplitude_A"] * fraction

    return FitProblem(
        frequency,
        g2,
        sigma,
        model,
        (FreeParameter("amplitude_A", initial_A),),
        model_kind="g2_scan",
        unit_weights=unit_weights,
    )
