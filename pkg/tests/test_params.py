import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqed.params import (
    GAMMA_RB87_D2, CavityGeometry, DetectionChain, SystemParams, UnitError,
    collection_efficiency, cooperativity, eta_ht_from_mirrors, finesse,
    finesse_from_kappa, kappa_from_geometry, mhz, params_from_dict, params_to_dict,
    purcell_factor, to_mhz,
)

rate = st.floats(1e5, 1e10)


def test_gamma_constant_from_lifetime():
    assert to_mhz(GAMMA_RB87_D2) == pytest.approx(3.0330, abs=5e-4)
    assert 1 / (2 * GAMMA_RB87_D2) == pytest.approx(26.24e-9)


@pytest.mark.parametrize("g, expected", [
    (49.94, 7.0957198),
    (49.94 - 18.2, 2.8662445),
    (49.94 + 18.2, 13.2100250),
])
def test_cooperativity_reference_values(g, expected):
    p = SystemParams.from_mhz(g=g, kappa=58.0, gamma=3.03)
    assert cooperativity(p) == pytest.approx(expected, rel=1e-7)


def test_cooperativity_zero_coupling():
    assert cooperativity(SystemParams.from_mhz(0.0, 58.0)) == 0.0


def test_purcell_and_collection():
    # f_P = 1
    p = SystemParams(g=math.sqrt(2.0), kappa=1.0, gamma=2.0)
    assert purcell_factor(p) == pytest.approx(1.0)
    assert collection_efficiency(p) == pytest.approx(0.5)
    assert collection_efficiency(p.with_(g=0.0)) == 0.0
    c = 11.3
    p = SystemParams(g=math.sqrt(2 * c), kappa=1.0, gamma=1.0)
    assert collection_efficiency(p) == pytest.approx(22.6 / 23.6)


@pytest.mark.parametrize("kwargs", [
    dict(g=-1.0, kappa=1.0, gamma=1.0),
    dict(g=1.0, kappa=0.0, gamma=1.0),
    dict(g=1.0, kappa=1.0, gamma=-1.0),
    dict(g=float("nan"), kappa=1.0, gamma=1.0),
    dict(g=1.0, kappa=1.0, gamma=1.0, delta_a=float("inf")),
])
def test_system_params_invariants(kwargs):
    with pytest.raises(ValueError):
        SystemParams(**kwargs)


@settings(max_examples=200)
@given(g=rate, kappa=rate, gamma=rate, scale=st.floats(1e-3, 1e3))
def test_cooperativity_scaling_invariance(g, kappa, gamma, scale):
    p = SystemParams(g=g, kappa=kappa, gamma=gamma)
    # C is dimensionless: a common rescaling of every rate leaves it unchanged
    q = SystemParams(g=g * scale, kappa=kappa * scale, gamma=gamma * scale)
    assert cooperativity(q) == pytest.approx(cooperativity(p), rel=1e-12)
    # g -> sqrt(c) g compensates a rescaling of a single decay rate
    q = SystemParams(g=g * math.sqrt(scale), kappa=kappa * scale, gamma=gamma)
    assert cooperativity(q) == pytest.approx(cooperativity(p), rel=1e-12)
    q = SystemParams(g=g * math.sqrt(scale), kappa=kappa, gamma=gamma * scale)
    assert cooperativity(q) == pytest.approx(cooperativity(p), rel=1e-12)


@settings(max_examples=200)
@given(g=rate, kappa=rate, gamma=rate, f=st.floats(1.001, 10.0))
def test_collection_efficiency_monotone(g, kappa, gamma, f):
    base = collection_efficiency(SystemParams(g=g, kappa=kappa, gamma=gamma))
    assert collection_efficiency(SystemParams(g=g * f, kappa=kappa, gamma=gamma)) >= base
    assert collection_efficiency(SystemParams(g=g, kappa=kappa * f, gamma=gamma)) <= base
    assert collection_efficiency(SystemParams(g=g, kappa=kappa, gamma=gamma * f)) <= base


def test_geometry_proportionality():
    c = CavityGeometry(free_spectral_range=3e12, t_ht=60e-6, t_lt=10e-6, losses=20e-6)
    c2 = CavityGeometry(free_spectral_range=3e12, t_ht=120e-6, t_lt=20e-6, losses=40e-6)
    assert finesse(c2) == pytest.approx(finesse(c) / 2)
    assert kappa_from_geometry(c2) == pytest.approx(2 * kappa_from_geometry(c))
    assert eta_ht_from_mirrors(CavityGeometry(1e12, 1e-4, 0.0, 0.0)) == 1.0


def test_geometry_inversion_for_eta_target():
    # pick T_lt and L, solve T_ht so that eta_ht = 0.67, then check kappa <-> F consistency
    t_lt, losses, fsr = 8e-6, 25e-6, 2.5e12
    t_ht = 0.67 * (t_lt + losses) / (1 - 0.67)
    c = CavityGeometry(fsr, t_ht, t_lt, losses)
    assert eta_ht_from_mirrors(c) == pytest.approx(0.67, rel=1e-12)
    kappa = kappa_from_geometry(c)
    assert finesse_from_kappa(kappa, fsr) == pytest.approx(finesse(c), rel=1e-12)
    # FWHM (Hz) = FSR / F
    assert 2 * kappa / (2 * math.pi) == pytest.approx(fsr / finesse(c), rel=1e-12)


@settings(max_examples=100)
@given(t_ht=st.floats(1e-7, 0.3), t_lt=st.floats(0, 0.3), losses=st.floats(0, 0.3),
       fsr=st.floats(1e9, 1e14))
def test_geometry_relations_consistent(t_ht, t_lt, losses, fsr):
    c = CavityGeometry(fsr, t_ht, t_lt, losses)
    f, kappa, eta = finesse(c), kappa_from_geometry(c), eta_ht_from_mirrors(c)
    assert finesse_from_kappa(kappa, fsr) == pytest.approx(f, rel=1e-12)
    assert math.pi * fsr / f == pytest.approx(kappa, rel=1e-12)
    assert eta * (2 * math.pi / f) == pytest.approx(t_ht, rel=1e-12)


def test_detection_chain_invariants():
    DetectionChain()
    with pytest.raises(ValueError):
        DetectionChain(eta_c=1.5)
    with pytest.raises(ValueError):
        DetectionChain(tick=0.0)


def test_json_round_trip():
    p = SystemParams.from_mhz(49.94, 58.0, 3.03, delta_a=-10.0, omega_drive=0.2)
    doc = params_to_dict(system=p, detection=DetectionChain())
    text = json.dumps(doc)
    back = params_from_dict(json.loads(text))
    assert back["system"].g == pytest.approx(p.g, rel=1e-15)
    assert back["system"].delta_a == pytest.approx(p.delta_a, rel=1e-15)
    assert back["detection"].jitter_sigma == pytest.approx(1.35e-9)
    assert doc["system"]["g"] == {"value": pytest.approx(49.94), "unit": "MHz_over_2pi"}


@pytest.mark.parametrize("doc", [
    {"system": {"g": 49.94, "kappa": {"value": 58, "unit": "MHz_over_2pi"},
                "gamma": {"value": 3.03, "unit": "MHz_over_2pi"}}},
    {"system": {"g": {"value": 49.94, "unit": "GHz"}}},
    {"system": {"g": {"value": 49.94}}},
    {"system": {"q": {"value": 1, "unit": "MHz_over_2pi"}}},
    {"mirrors": {}},
])
def test_json_rejects_unitless_or_unknown(doc):
    with pytest.raises(UnitError):
        params_from_dict(doc)


def test_mhz_round_trip():
    x = np.array([1.0, 49.94])
    assert np.allclose(to_mhz(mhz(x)), x)
