"""Reference computations that share no code with the package.

Each oracle takes plain floats and rebuilds its quantity from first
principles (direct quadrature, explicit enumeration, a plain stochastic
Euler integrator), so agreement with the package is a real cross-check.
"""

import math

import numpy as np
from scipy import integrate, special

SQRT_8LN2 = math.sqrt(8.0 * math.log(2.0))


def gauss(x, fwhm):
    s = fwhm / SQRT_8LN2
    return math.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2.0 * math.pi))


def lorentz(x, fwhm):
    h = 0.5 * fwhm
    return h / (math.pi * (x * x + h * h))


def voigt_quad(x, g_fwhm, l_fwhm):
    """Gaussian (x) Lorentzian by adaptive quadrature over the Gaussian argument."""
    s = g_fwhm / SQRT_8LN2
    lim = 12.0 * s
    f = lambda t: gauss(t, g_fwhm) * lorentz(x - t, l_fwhm)  # noqa: E731
    # split at the Lorentzian peak so quad sees both narrow features
    pts = sorted({-lim, min(max(x, -lim), lim), lim})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            val, _ = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=400)
            total += val
    return total


def airy(x, fsr, fwhm):
    f = 1.0 / math.sin(math.pi * fwhm / (2.0 * fsr)) ** 2
    return 1.0 / (1.0 + f * math.sin(math.pi * x / fsr) ** 2)


def airy_gauss_quad(x, fsr, fwhm, g_fwhm):
    """Gaussian line seen through the Airy filter, by direct quadrature."""
    s = g_fwhm / SQRT_8LN2
    lim = 12.0 * s
    f = lambda t: gauss(t, g_fwhm) * airy(x - t, fsr, fwhm)  # noqa: E731
    pts = np.linspace(-lim, lim, 25)
    return sum(integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))


def airy_voigt_periodized(x, fsr, fwhm, g_fwhm, l_fwhm, n_images=4000):
    """Voigt line through the Airy filter via the periodized line density.

    ``int p(t) T(x - t) dt = int_0^fsr T(x - t) sum_n p(t + n fsr) dt``; images
    beyond ``n_images`` are added through their Lorentzian tail sum.
    """
    sigma, hw = g_fwhm / SQRT_8LN2, 0.5 * l_fwhm
    n = np.arange(-n_images, n_images + 1) * fsr
    tail = 2.0 * hw / (math.pi * fsr**2 * (n_images + 0.5))

    def periodized(t):
        return float(special.voigt_profile(t + n, sigma, hw).sum()) + tail

    f = lambda t: airy(x - t, fsr, fwhm) * periodized(t)  # noqa: E731
    pts = np.linspace(-0.5 * fsr, 0.5 * fsr, 41)
    return sum(integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-11, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))


# --- photon counting -----------------------------------------------------------


def _binom_pmf(k, n, p):
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


def _poisson_pmf(k, mu):
    return math.exp(-mu) * mu**k / math.factorial(k) if mu > 0 else float(k == 0)


def g2_enumeration(nbar, eta1, eta2, mu1=0.0, mu2=0.0, tol=1e-12):
    """Exact g2 by summing the joint distribution of (n1, n2).

    The thermal pair number ``m`` is enumerated until the remaining
    probability mass and the second-moment increment are below ``tol``; given ``m`` the binomially thinned
    copies are enumerated explicitly. Poisson noise means are summed
    directly. Returns ``(g2, truncated_mass)``.
    """
    q = nbar / (1.0 + nbar)
    s1 = s2 = s12 = 0.0
    mass = 0.0
    m = 0
    while True:
        pm = (1.0 - q) * q**m
        mass += pm
        # conditional moments of the thinned copies by explicit enumeration
        e1 = sum(k * _binom_pmf(k, m, eta1) for k in range(m + 1))
        e2 = sum(k * _binom_pmf(k, m, eta2) for k in range(m + 1))
        # given m, the two thinned copies are independent
        s1 += pm * e1
        s2 += pm * e2
        s12 += pm * e1 * e2
        m += 1
        # stop once both the mass and the second-moment tail are negligible
        if 1.0 - mass < tol and pm * m * m < tol * max(s12, 1e-300) and m > 5:
            break
    # noise: enumerate Poisson means as sums too
    n1 = sum(k * _poisson_pmf(k, mu1) for k in range(60))
    n2 = sum(k * _poisson_pmf(k, mu2) for k in range(60))
    mean1, mean2 = s1 + n1, s2 + n2
    cross = s12 + s1 * n2 + n1 * s2 + n1 * n2
    return cross / (mean1 * mean2), 1.0 - mass


# --- stochastic emitter --------------------------------------------------------


def euler_reference_variance(gamma, noise, detuning, drive, dt, n_steps, n_traj, seed):
    """Steady-state variance of the dipole amplitude from a plain Ito-Euler integrator.

    Integrates ``b = c * exp(-i detuning t)`` (explicit Euler is unstable for
    the fast rotation in the lab frame at practical steps):

        db = [-(gamma + noise)/2 b - i drive/2 exp(-i detuning t)] dt + i sqrt(noise) b dW

    Returns ``(var, stderr)`` for ``var = E|c - E c|^2`` averaged over the
    second half of the run.
    """
    rng = np.random.default_rng(seed)
    b = np.zeros(n_traj, dtype=complex)
    acc = []
    decay = 0.5 * (gamma + noise)
    for k in range(n_steps):
        dw = rng.standard_normal(n_traj) * math.sqrt(dt)
        force = -0.5j * drive * np.exp(-1j * detuning * k * dt)
        b = b + (-decay * b + force) * dt + 1j * math.sqrt(noise) * b * dw
        if k >= n_steps // 2 and k % 50 == 0:
            acc.append(np.mean(np.abs(b - b.mean()) ** 2))
    acc = np.array(acc)
    return float(acc.mean()), float(acc.std(ddof=1) / math.sqrt(acc.size))
