import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from cqed import steady_state as ss
from cqed.ensemble import (CouplingDistribution, average_over_coupling, backaction_reference,
                           collective_coupling, convolved_lineshape, convolved_rates,
                           coupling_for_cooperativity, effective_half_width,
                           poisson_mean_from_zero_fraction)
from cqed.params import SystemParams, cooperativity, mhz

MHZ = mhz(1.0)
GAMMA = 3.03 * MHZ


def test_collective_coupling():
    assert collective_coupling(1, 1.0) == pytest.approx(math.sqrt(0.12))
    assert collective_coupling(1, 1.0) == pytest.approx(0.346, abs=5e-4)
    assert collective_coupling(1 / 0.12, 7.0) == pytest.approx(7.0)
    assert collective_coupling(0, 7.0) == 0.0
    assert np.allclose(collective_coupling(np.array([0, 4]), 2.0, alpha=0.25), [0, 2])
    with pytest.raises(ValueError):
        collective_coupling(-1, 1.0)


def test_poisson_mean():
    assert poisson_mean_from_zero_fraction(0.23) == pytest.approx(1.4697, abs=1e-4)
    assert round(poisson_mean_from_zero_fraction(0.23), 1) == 1.5
    assert poisson_mean_from_zero_fraction(1.0) == 0.0
    assert poisson_mean_from_zero_fraction(math.exp(-2)) == pytest.approx(2.0)
    for bad in (0.0, -0.1, 1.2):
        with pytest.raises(ValueError):
            poisson_mean_from_zero_fraction(bad)


@settings(max_examples=40, deadline=None)
@given(mean=st.floats(-50, 200), sigma=st.floats(0, 60), n=st.integers(1, 81))
def test_weights_normalized_and_truncated(mean, sigma, n):
    d = CouplingDistribution(mean * MHZ, sigma * MHZ, n)
    try:
        g, w = d.nodes()
    except ValueError:
        # every node below zero
        return
    assert np.all(g >= 0)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(w >= 0)


def test_distribution_validation_and_json():
    with pytest.raises(ValueError):
        CouplingDistribution(1.0, -1.0)
    with pytest.raises(ValueError):
        CouplingDistribution(1.0, 1.0, 0)
    d = CouplingDistribution(49.94 * MHZ, 18.2 * MHZ)
    assert CouplingDistribution.from_json(d.to_json()) == d


def test_quadrature_matches_direct_integral():
    # oracle: adaptive integration over the truncated normal density
    d = CouplingDistribution(30 * MHZ, 18.2 * MHZ)
    f = lambda g: g ** 2 / (1 + (g / (40 * MHZ)) ** 2)
    num = integrate.quad(lambda u: f(u * MHZ) * stats.norm.pdf(u, 30, 18.2), 0, 200)[0]
    den = stats.norm.sf(0, 30, 18.2)
    # a third of a sigma-unit tail is cut: the Hermite rule is only percent-accurate
    assert average_over_coupling(d, f) == pytest.approx(num / den, rel=2e-2)
    leg = CouplingDistribution(30 * MHZ, 18.2 * MHZ, rule="legendre")
    assert average_over_coupling(leg, f) == pytest.approx(num / den, rel=1e-6)


def test_rules_agree_when_truncation_negligible():
    f = lambda g: 1 / (1 + (g / (40 * MHZ)) ** 2)
    a = average_over_coupling(CouplingDistribution(60 * MHZ, 15 * MHZ), f)
    b = average_over_coupling(CouplingDistribution(60 * MHZ, 15 * MHZ, rule="legendre"), f)
    assert a == pytest.approx(b, rel=1e-4)


def test_quadrature_convergence_default_settings():
    d, p = backaction_reference()
    dc = np.linspace(-200, 100, 301) * MHZ
    a = np.array(convolved_rates(d, p, p.delta_a, dc))
    b = np.array(convolved_rates(d.with_nodes(2 * d.n_nodes), p, p.delta_a, dc))
    assert np.max(np.abs(b - a)) / np.max(np.abs(a)) < 1e-3
    det = np.linspace(-150, 150, 301) * MHZ
    pp = SystemParams(49.94 * MHZ, 58 * MHZ, GAMMA, omega_drive=0.1 * MHZ)
    d2 = CouplingDistribution(49.94 * MHZ, 18.2 * MHZ)
    la = convolved_lineshape(d2, pp, det)
    lb = convolved_lineshape(d2.with_nodes(82), pp, det)
    assert np.max(np.abs(lb - la)) / la.max() < 1e-3


def test_delta_distribution_reduces_to_single_line():
    p = SystemParams(10 * MHZ, 100 * MHZ, GAMMA, omega_drive=0.01 * MHZ)
    det = np.linspace(-40, 40, 801) * MHZ
    y = convolved_lineshape(CouplingDistribution(p.g, 0.0), p, det)
    direct = ss.rate_cavity_arrays(p.g, p.kappa, p.gamma, det, det, p.omega_drive)
    assert np.allclose(y, direct, rtol=1e-13)
    hw, _ = effective_half_width(det, y)
    # fast-cavity width (1 + 2C) gamma, up to the g^2/kappa^2 correction
    assert hw / p.gamma == pytest.approx(1 + 2 * cooperativity(p), rel=2e-2)


def test_zero_mean_zero_width_is_flat_zero():
    p = SystemParams(0.0, 58 * MHZ, GAMMA, omega_drive=0.1 * MHZ)
    det = np.linspace(-50, 50, 11) * MHZ
    assert not np.any(convolved_lineshape(CouplingDistribution(0.0, 0.0), p, det))


def test_light_shift_moves_line():
    p = SystemParams(20 * MHZ, 100 * MHZ, GAMMA, omega_drive=0.01 * MHZ)
    det = np.linspace(-60, 60, 1201) * MHZ
    d = CouplingDistribution(p.g, 0.0)
    y0 = convolved_lineshape(d, p, det)
    y1 = convolved_lineshape(d, p, det, light_shift=10 * MHZ)
    assert det[np.argmax(y1)] - det[np.argmax(y0)] == pytest.approx(10 * MHZ, abs=1 * MHZ)


def test_non_monotonic_grid_rejected():
    p = SystemParams(20 * MHZ, 100 * MHZ, GAMMA, omega_drive=0.01 * MHZ)
    with pytest.raises(ValueError):
        convolved_lineshape(CouplingDistribution(p.g, 0.0), p, np.array([0.0, 2.0, 1.0]))


def test_half_width_monotone_in_mean_coupling():
    p = SystemParams(1.0, 58 * MHZ, GAMMA, omega_drive=0.01 * MHZ)
    det = np.linspace(-150, 150, 601) * MHZ
    widths = []
    for gm in [5, 10, 20, 30, 40, 50]:
        y = convolved_lineshape(CouplingDistribution(gm * MHZ, 18.2 * MHZ), p, det)
        widths.append(effective_half_width(det, y)[0])
    assert np.all(np.diff(widths) >= 0)


def test_unweighted_switch_changes_weighting_only():
    p = SystemParams(1.0, 58 * MHZ, GAMMA, omega_drive=0.01 * MHZ)
    det = np.linspace(-150, 150, 601) * MHZ
    d = CouplingDistribution(30 * MHZ, 18.2 * MHZ)
    w = convolved_lineshape(d, p, det, weighted=True)
    u = convolved_lineshape(d, p, det, weighted=False)
    assert u.max() == pytest.approx(1.0, rel=0.05)
    # without amplitude weighting weakly coupled (narrow) lines count as much as strong ones
    assert effective_half_width(det, u)[0] != pytest.approx(effective_half_width(det, w)[0], rel=1e-3)


def test_ensemble_broadening_near_observed_value():
    # single-atom C = 2.45 (width ratio 5.9); 1.5 atoms scale g^2 by 1.5
    kappa = 58 * MHZ
    g1 = coupling_for_cooperativity(2.45, kappa, GAMMA)
    g_bar = collective_coupling(1.5, g1, alpha=1.0)
    p = SystemParams(g_bar, kappa, GAMMA, omega_drive=0.01 * MHZ)
    det = np.linspace(-150, 150, 601) * MHZ
    y = convolved_lineshape(CouplingDistribution(g_bar, 18.2 * MHZ), p, det)
    ratio = effective_half_width(det, y)[0] / GAMMA
    assert ratio == pytest.approx(8.4, rel=0.05)


def test_backaction_reference_peak():
    d, p = backaction_reference()
    assert cooperativity(p) == pytest.approx(11.3)
    dc = np.linspace(-200, 100, 3001) * MHZ
    _, rc = convolved_rates(d, p, p.delta_a, dc)
    r0 = ss.bare_rate(p)
    i = np.argmax(rc)
    assert rc[i] / r0 == pytest.approx(16.7, abs=0.05)
    assert dc[i] / MHZ == pytest.approx(-69.7, abs=0.5)
