"""Effective two-level parameters of the multilevel atom under a lin-perp-lin probe.

The multilevel master equation is solved on a cavity-detuning sweep, averaged
over standing-wave phases, and the cavity-channel line is fitted with the
two-level closed form with free amplitude, g and kappa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .. import steady_state as ss
from .levels import SIGMA_PLUS, rb87_d2_scheme
from .solver import rates, solve
from .system import CavityModeSpec, DriveField, build_system


@dataclass
class EffectiveCoupling:
    g: float
    kappa: float
    amplitude: float
    g_max: float
    kappa_bare: float

    @property
    def g_change(self):
        return self.g / self.g_max - 1.0

    @property
    def kappa_change(self):
        return self.kappa / self.kappa_bare - 1.0


def phase_averaged_rates(g_max, kappa, gamma, delta_a, delta_c, omega, phases, n_max=2,
                         scheme=None):
    """(R_fs, R_c) arrays over ``delta_c`` for the Rb scheme, averaged over drive phases."""
    scheme = scheme or rb87_d2_scheme()
    delta_c = np.atleast_1d(np.asarray(delta_c, dtype=float))
    out = np.zeros((2, delta_c.size))
    for phi in phases:
        drive = DriveField.lin_perp_lin(omega, delta_a, phi)
        for i, dc in enumerate(delta_c):
            sys = build_system(scheme, drive, CavityModeSpec(n_max, SIGMA_PLUS, g_max),
                               gamma=gamma, kappa=kappa, delta_c=dc)
            out[:, i] += rates(solve(sys, sparse=True), sys)
    return out / len(phases)


def fit_effective_coupling(g_max, kappa, gamma, delta_a, delta_c, omega, n_phases=4):
    phases = np.linspace(0.0, np.pi, n_phases, endpoint=False)
    _, r_c = phase_averaged_rates(g_max, kappa, gamma, delta_a, delta_c, omega, phases)
    scale = r_c.max()

    def resid(x):
        amp, g, k = x
        return (amp * ss.rate_cavity_arrays(g, k, gamma, delta_a, delta_c, omega) - r_c) / scale

    res = least_squares(resid, [0.5, 0.9 * g_max, kappa], x_scale=[1.0, g_max, kappa])
    amp, g, k = res.x
    return EffectiveCoupling(g=abs(g), kappa=k, amplitude=amp, g_max=g_max, kappa_bare=kappa)
