"""Model library: Lorentzian, stretched exponential and mirror-loss (finesse) laws."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import uniform_filter1d

from .engine import FitConfig, ParametricModel, least_squares_fit

DAY = 86400.0


# --------------------------------------------------------------------- Lorentzian


def lorentzian(x, amplitude, center, half_width, offset=0.0):
    return amplitude * half_width ** 2 / ((x - center) ** 2 + half_width ** 2) + offset


def peak_guess(x, y, smooth=5):
    """(amplitude, center, half-width) from the FWHM of a boxcar-smoothed peak."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x)
    x, y = x[order], y[order]
    ys = uniform_filter1d(y, size=max(1, min(smooth, len(y) // 4 or 1)), mode="nearest")
    base = min(ys[0], ys[-1], ys.min())
    i = int(np.argmax(ys))
    amp = ys[i] - base
    half = base + 0.5 * amp
    above = np.flatnonzero(ys >= half)
    left, right = above.min(), above.max()
    fwhm = x[right] - x[left]
    if fwhm <= 0:
        fwhm = 2 * np.median(np.diff(x))
    return amp, x[i], 0.5 * fwhm, base


def lorentzian_model(with_offset=False):
    def func(p, x):
        return lorentzian(x, *p) if with_offset else lorentzian(x, p[0], p[1], p[2])

    def guess(x, y):
        a, c, hw, base = peak_guess(x, y)
        return [a, c, hw, base] if with_offset else [a + base, c, hw]

    names = ["amplitude", "center", "half_width"] + (["offset"] if with_offset else [])
    n = len(names)
    lower = [-np.inf, -np.inf, 0.0] + ([-np.inf] if with_offset else [])
    return ParametricModel("lorentzian", func, names, p0=[1.0, 0.0, 1.0] + [0.0] * (n - 3),
                           lower=lower, guess=guess)


def fit_lorentzian(x, y, sigma=None, with_offset=False, config=None):
    return least_squares_fit(lorentzian_model(with_offset), x, y, sigma, config)


# ------------------------------------------------------------ stretched exponential


def stretched_exponential(t, amplitude, tau, beta):
    """A exp[-(t/tau)^beta], decaying; defined for t >= 0, tau > 0, 0 < beta <= 2."""
    t = np.asarray(t, dtype=float)
    if tau <= 0 or not 0 < beta <= 2:
        raise ValueError("need tau > 0 and 0 < beta <= 2")
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return amplitude * np.exp(-np.power(t / tau, beta))


def stretched_exponential_model():
    def func(p, t):
        return p[0] * np.exp(-np.power(np.asarray(t, dtype=float) / p[1], p[2]))

    def guess(t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        a = y[np.argmin(t)] if y[np.argmin(t)] > 0 else np.abs(y).max()
        # time at which the signal falls to 1/e of its start
        below = np.flatnonzero(y <= a / math.e)
        tau = t[below[0]] if below.size else t.max()
        return [a, max(tau, np.ptp(t) * 1e-3), 1.0]

    return ParametricModel("stretched_exponential", func, ["amplitude", "tau", "beta"],
                           p0=[1.0, 1.0, 1.0], lower=[0.0, 1e-300, 1e-3], upper=[np.inf, np.inf, 2.0],
                           guess=guess)


def fit_stretched_exponential(t, y, sigma=None, config=None):
    """The fitted amplitude is the rate estimate before the decay sets in."""
    return least_squares_fit(stretched_exponential_model(), t, y, sigma, config)


# ------------------------------------------------------------------ mirror losses


def loss_exponential_growth(t, l0, delta_l, tau1):
    """L(t) = L0 + dL exp(t / tau1)."""
    return l0 + delta_l * np.exp(np.asarray(t, dtype=float) / tau1)


def loss_depletion(t, l0, delta_l, tau2):
    """L(t) = L0 + dL (1 - exp(-t / tau2)); L0 at t=0, L0 + dL for t -> inf."""
    return l0 + delta_l * -np.expm1(-np.asarray(t, dtype=float) / tau2)


def finesse_from_losses(losses, transmission_total):
    return 2 * np.pi / (transmission_total + np.asarray(losses, dtype=float))


def kappa_from_losses(losses, transmission_total, free_spectral_range):
    """Field decay rate (rad/s) for a cavity with FSR in Hz."""
    return np.pi * free_spectral_range / finesse_from_losses(losses, transmission_total)


LOSS_LAWS = {"exponential": loss_exponential_growth, "depletion": loss_depletion}


def finesse_decay_model(law, transmission_total):
    """Finesse versus time for a loss law; parameters (L0, dL, tau) in the units of the data."""
    loss = LOSS_LAWS[law]

    def func(p, t):
        return finesse_from_losses(loss(t, *p), transmission_total)

    def guess(t, f):
        t = np.asarray(t, dtype=float)
        f = np.asarray(f, dtype=float)
        l_obs = 2 * np.pi / f - transmission_total
        i0, i1 = np.argmin(t), np.argmax(t)
        span = np.ptp(t)
        if law == "depletion":
            return [max(l_obs[i0], 0.0), l_obs[i1] - l_obs[i0], span]
        return [max(l_obs[i0] * 0.5, 0.0), max(l_obs[i0] * 0.5, 1e-12), span / 2]

    tau_name = "tau1" if law == "exponential" else "tau2"
    return ParametricModel(f"finesse_{law}", func, ["l0", "delta_l", tau_name], p0=[1e-4, 1e-4, 1.0],
                           lower=[0.0, -np.inf, 1e-300], guess=guess)


def fit_finesse_decay(t, finesse, law, transmission_total, sigma=None, config=None, p0=None):
    return least_squares_fit(finesse_decay_model(law, transmission_total), t, finesse, sigma,
                             config or FitConfig(), p0=p0)
