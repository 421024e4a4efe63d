import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqed.fitters import (DAY, BackactionConfig, FitError, FitResult, ParametricModel,
                          backaction_surface_fit, bootstrap_errors, finesse_decay_model,
                          finesse_from_losses, fit_finesse_decay, fit_lorentzian,
                          fit_stretched_exponential, kappa_from_losses, least_squares_fit,
                          loss_depletion, loss_exponential_growth, lorentzian, lorentzian_model,
                          monte_carlo_propagate, normalized_rates, stretched_exponential,
                          stretched_exponential_model, synthetic_backaction)
from cqed.fitters.backaction import BackactionProblem
from cqed.params import mhz

MHZ = mhz(1.0)
GAMMA = 3.03 * MHZ


def line_model():
    return ParametricModel("line", lambda p, x: p[0] + p[1] * x, ["a", "b"], p0=[0.0, 1.0])


# ------------------------------------------------------------------ engine


@pytest.mark.parametrize("case", ["lorentzian", "lorentzian_offset", "stretched", "exp_growth", "depletion"])
def test_noiseless_round_trip_chi2_tiny(case):
    if case.startswith("lorentzian"):
        off = case.endswith("offset")
        x = np.linspace(-30, 30, 121)
        truth = [2.0, 1.5, 5.0] + ([0.3] if off else [])
        model = lorentzian_model(off)
        y = model(truth, x)
        res = least_squares_fit(model, x, y)
    elif case == "stretched":
        x = np.linspace(0, 5, 80)
        truth = [3.0, 1.2, 0.7]
        model = stretched_exponential_model()
        y = model(truth, x)
        res = least_squares_fit(model, x, y)
    else:
        law = "exponential" if case == "exp_growth" else "depletion"
        x = np.linspace(0, 40, 81) if law == "exponential" else np.linspace(0, 3000, 121)
        truth = [40e-6, 10e-6, 14.5] if law == "exponential" else [100e-6, 150e-6, 1670.0]
        model = finesse_decay_model(law, 60e-6)
        y = model(truth, x)
        res = least_squares_fit(model, x, y)
    assert res.converged
    assert res.chi2 < 1e-10
    assert np.allclose(res.values, truth, rtol=1e-6)


def test_objective_never_increases():
    rng = np.random.default_rng(3)
    x = np.linspace(-30, 30, 101)
    y = lorentzian(x, 1.0, 2.0, 4.0) + 0.01 * rng.normal(size=x.size)
    res = least_squares_fit(lorentzian_model(), x, y, 0.01, p0=[0.5, -5.0, 15.0])
    assert len(res.trace) > 2
    assert np.all(np.diff(res.trace) <= 0)


def test_purcell_broadened_half_width_recovered():
    # free-space half-width 1.65 gamma, 2% noise
    rng = np.random.default_rng(7)
    x = np.linspace(-20, 20, 161) * GAMMA
    hw = 1.65 * GAMMA
    clean = lorentzian(x, 1.0, 0.0, hw)
    sig = 0.02 * np.ones_like(x)
    res = fit_lorentzian(x, clean + sig * rng.normal(size=x.size), sig)
    assert abs(res["half_width"] - hw) < 3 * res.error("half_width")
    assert res.error("half_width") / hw < 0.02


def test_misspecified_model_flagged():
    x = np.linspace(-10, 10, 201)
    y = np.exp(-x ** 2 / 8)  # Gaussian, fitted as Lorentzian
    res = fit_lorentzian(x, y, 1e-3)
    assert res.chi2_red > 10
    assert res.misspecified()
    good = fit_lorentzian(x, lorentzian(x, 1, 0, 2) + 1e-3 * np.random.default_rng(0).normal(size=x.size), 1e-3)
    assert not good.misspecified()


def test_under_determined_and_bad_sigma():
    with pytest.raises(FitError):
        least_squares_fit(line_model(), [0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        least_squares_fit(line_model(), [0.0, 1.0, 2.0], [1.0, 2.0, 3.0], sigma=[1.0, 0.0, 1.0])


def test_fixed_parameters_and_degenerate_detection():
    x = np.linspace(0, 1, 20)
    res = least_squares_fit(line_model(), x, 1 + 2 * x, fixed={"a": 1.0})
    assert res["a"] == 1.0 and res["b"] == pytest.approx(2.0)
    assert res.errors[0] == 0.0
    # p[0] and p[1] enter only as a sum
    m = ParametricModel("sum", lambda p, x: (p[0] + p[1]) * x, ["u", "v"], p0=[1.0, 1.0])
    res = least_squares_fit(m, x, 3 * x + 1e-3 * np.sin(7 * x))
    assert set(res.degenerate) == {"u", "v"}


def test_deterministic_given_config():
    rng = np.random.default_rng(1)
    x = np.linspace(-5, 5, 50)
    y = lorentzian(x, 1, 0.3, 1.2) + 0.02 * rng.normal(size=x.size)
    a = fit_lorentzian(x, y, 0.02)
    b = fit_lorentzian(x, y, 0.02)
    assert np.array_equal(a.values, b.values) and a.trace == b.trace


def test_fit_result_json_round_trip():
    x = np.linspace(-5, 5, 50)
    res = fit_lorentzian(x, lorentzian(x, 1, 0.3, 1.2) + 0.01 * np.cos(3 * x))
    back = FitResult.from_json(res.to_json())
    assert back.param_names == res.param_names
    assert np.array_equal(back.values, res.values)
    assert np.array_equal(back.covariance, res.covariance)
    assert back.config == json.loads(json.dumps(res.config))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.5, 5), c=st.floats(-3, 3), hw=st.floats(0.3, 4))
def test_intervals_nonnegative_and_flag_consistent(a, c, hw):
    x = np.linspace(-15, 15, 61)
    y = lorentzian(x, a, c, hw) + 0.01 * np.sin(5 * x)
    res = fit_lorentzian(x, y, 0.01)
    assert np.all(res.errors >= 0)
    lo, hi = res.interval("half_width")
    assert lo <= res["half_width"] <= hi
    if res.converged:
        assert res.message != "maximum iterations reached"


# ---------------------------------------------------------------- bootstrap


def test_bootstrap_matches_analytic_linear_errors():
    # oracle: ordinary least squares standard errors
    rng = np.random.default_rng(11)
    x = np.linspace(0, 1, 60)
    y = 1.0 + 2.0 * x + 0.1 * rng.normal(size=x.size)
    res = least_squares_fit(line_model(), x, y, 0.1)
    design = np.column_stack([np.ones_like(x), x])
    analytic = 0.1 * np.sqrt(np.diag(np.linalg.inv(design.T @ design)))
    assert np.allclose(res.errors, analytic, rtol=1e-6)
    boot = bootstrap_errors(line_model(), x, y, 0.1, n_resamples=1000, seed=5, fit=res)
    assert np.allclose(boot.std, analytic, rtol=0.15)


def test_bootstrap_duplicate_data_zero_width():
    x = np.full(30, 2.0)
    y = np.full(30, 5.0)
    m = ParametricModel("const", lambda p, x: p[0] + 0 * x, ["c"], p0=[1.0])
    boot = bootstrap_errors(m, x, y, n_resamples=100, seed=1)
    assert boot.upper[0] - boot.lower[0] == pytest.approx(0.0, abs=1e-9)


def test_bootstrap_seed_reproducible_and_worker_independent():
    rng = np.random.default_rng(2)
    x = np.linspace(0, 1, 40)
    y = 1 + 2 * x + 0.1 * rng.normal(size=40)
    a = bootstrap_errors(line_model(), x, y, 0.1, 120, seed=9, attach=False)
    b = bootstrap_errors(line_model(), x, y, 0.1, 120, seed=9, workers=3, attach=False)
    c = bootstrap_errors(line_model(), x, y, 0.1, 120, seed=10, attach=False)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)
    with pytest.raises(ValueError):
        bootstrap_errors(line_model(), x, y, 0.1, 50, seed=9)


def test_bootstrap_coverage_near_one_sigma():
    # 200 synthetic replications; each 68% percentile interval should hold the truth ~68% of the time
    hits = []
    for rep in range(200):
        rng = np.random.default_rng(1000 + rep)
        x = np.linspace(0, 1, 40)
        y = 1.0 + 2.0 * x + 0.1 * rng.normal(size=x.size)
        boot = bootstrap_errors(line_model(), x, y, 0.1, 100, seed=rep, attach=False)
        hits.append(boot.lower[1] <= 2.0 <= boot.upper[1])
    assert abs(np.mean(hits) - 0.68) <= 0.10


def test_monte_carlo_propagation_linear_oracle():
    mean = np.array([1.0, 2.0])
    cov = np.array([[0.04, 0.01], [0.01, 0.09]])
    med, lo, hi = monte_carlo_propagate(lambda p: p[0] + 3 * p[1], mean, cov, 20000, seed=4)
    want = math.sqrt(cov[0, 0] + 9 * cov[1, 1] + 6 * cov[0, 1])
    assert med == pytest.approx(7.0, abs=0.02)
    assert (hi - lo) / 2 == pytest.approx(want, rel=0.03)


# --------------------------------------------------------- model library


def test_stretched_exponential_special_cases():
    t = np.linspace(0, 5, 11)
    assert np.allclose(stretched_exponential(t, 2.0, 1.3, 1.0), 2.0 * np.exp(-t / 1.3))
    for beta in (0.3, 0.7, 1.0, 1.8):
        assert stretched_exponential(1.7, 2.5, 1.7, beta) == pytest.approx(2.5 / math.e)
    for bad in [dict(tau=0.0, beta=1.0), dict(tau=1.0, beta=0.0), dict(tau=1.0, beta=2.5)]:
        with pytest.raises(ValueError):
            stretched_exponential(t, 1.0, **bad)
    with pytest.raises(ValueError):
        stretched_exponential(-1.0, 1.0, 1.0, 1.0)


def test_stretched_fit_of_exponential_mixture_gives_beta_below_one():
    t = np.linspace(0, 10, 200)
    y = 0.5 * np.exp(-t / 0.5) + 0.5 * np.exp(-t / 4.0)
    res = fit_stretched_exponential(t, y)
    assert res["beta"] < 0.9


@pytest.mark.parametrize("beta", [0.5, 0.75, 1.0])
def test_stretched_round_trip_low_noise(beta):
    rng = np.random.default_rng(int(beta * 100))
    t = np.linspace(0, 6, 120)
    y = stretched_exponential(t, 4.0, 1.5, beta)
    sig = 0.005 * 4.0
    res = fit_stretched_exponential(t, y + sig * rng.normal(size=t.size), sig)
    assert np.allclose(res.values, [4.0, 1.5, beta], rtol=0.05)


def test_loss_laws_limits_and_finesse_link():
    assert loss_depletion(0.0, 1e-4, 2e-4, 100.0) == pytest.approx(1e-4)
    assert loss_depletion(1e9, 1e-4, 2e-4, 100.0) == pytest.approx(3e-4)
    assert loss_exponential_growth(0.0, 1e-4, 2e-5, 14.5) == pytest.approx(1.2e-4)
    f = finesse_from_losses(40e-6, 60e-6)
    assert f == pytest.approx(2 * math.pi / 100e-6)
    # kappa = pi FSR / F
    assert kappa_from_losses(40e-6, 60e-6, 5e9) == pytest.approx(math.pi * 5e9 / f)


@pytest.mark.parametrize("law,tau", [("exponential", 14.5), ("depletion", 1670.0)])
def test_finesse_round_trip_with_noise(law, tau):
    rng = np.random.default_rng(5)
    t = np.linspace(0, 40, 81) if law == "exponential" else np.linspace(0, 3000, 121)
    truth = [40e-6, 10e-6, tau] if law == "exponential" else [100e-6, 150e-6, tau]
    f = finesse_decay_model(law, 60e-6)(truth, t)
    sig = 2e-3 * f
    res = fit_finesse_decay(t, f + sig * rng.normal(size=t.size), law, 60e-6, sig)
    assert np.allclose(res.values, truth, rtol=0.05)
    assert tau * DAY > 0


# ---------------------------------------------------------------- backaction


def _four_power_data(noise=0.0, seed=0, config=None):
    g = np.array([62.0, 58.0, 54.0, 50.0]) * MHZ
    dc = np.linspace(-250, 150, 41) * MHZ
    data = synthetic_backaction(g, 50 * MHZ, -63 * MHZ, dc, eta_fs=0.033, cavity_offset=70 * MHZ,
                                config=config, noise=noise, seed=seed)
    truth = np.concatenate([[0.033, 50 * MHZ, 70 * MHZ], g])
    return data, truth


def _start(n):
    return [0.022, 40 * MHZ, 0.0] + [45 * MHZ] * n


def test_backaction_seven_parameters_eight_curves_noiseless():
    data, truth = _four_power_data()
    res, prob = backaction_surface_fit(data, p0=_start(4))
    assert prob.n_params == 7
    assert 2 * len(data) == 8
    assert res.chi2 < 1e-10
    assert np.allclose(res.values, truth, rtol=1e-6)


def test_backaction_single_power_converges_with_wider_errors():
    data, truth = _four_power_data(noise=0.01, seed=3)
    full, _ = backaction_surface_fit(data, p0=_start(4))
    one, prob = backaction_surface_fit(data[:1], p0=_start(1))
    assert prob.n_params == 4
    assert one.converged
    assert one.error("kappa") > full.error("kappa")
    assert np.allclose(one.values, truth[:4], rtol=0.05)


def test_backaction_under_determined():
    data, _ = _four_power_data()
    tiny = [type(data[0])(data[0].delta_c[:1], data[0].free_space[:1], data[0].cavity[:1],
                          data[0].delta_a)]
    with pytest.raises(FitError):
        BackactionProblem(tiny)
    with pytest.raises(FitError):
        BackactionProblem([])


def test_backaction_channel_cooperativities_differ():
    # channel-specific coupling reductions (5% cavity, 11% free space) must show up as distinct C
    data, _ = _four_power_data()
    res, prob = backaction_surface_fit(data, p0=_start(4))
    coop = prob.cooperativities(res)
    ratio = np.array(coop["cavity"]) / np.array(coop["free_space"])
    assert np.allclose(ratio, (0.95 / 0.89) ** 2, rtol=1e-6)
    # without reductions both channels share one C
    cfg = BackactionConfig(g_reduction={"cavity": 0.0, "free_space": 0.0})
    data0, _ = _four_power_data(config=cfg)
    res0, prob0 = backaction_surface_fit(data0, config=cfg, p0=_start(4))
    c0 = prob0.cooperativities(res0)
    assert np.allclose(c0["cavity"], c0["free_space"])


def test_backaction_uniform_weight_flag():
    data, truth = _four_power_data(noise=0.005, seed=1)
    res, prob = backaction_surface_fit(data, config=BackactionConfig(weighted=False), p0=_start(4))
    assert prob.sigma is None
    assert not res.config["weighted"]
    assert np.allclose(res.values, truth, rtol=0.05)


def test_normalized_rates_without_spread_equal_single_atom():
    from cqed import steady_state as ss

    dc = np.linspace(-100, 100, 21) * MHZ
    fs, c = normalized_rates(40 * MHZ, 50 * MHZ, GAMMA, -20 * MHZ, dc, 0.0)
    r0 = ss.bare_rate_arrays(GAMMA, -20 * MHZ, 1.0)
    assert np.allclose(c, ss.rate_cavity_arrays(40 * MHZ, 50 * MHZ, GAMMA, -20 * MHZ, dc, 1.0) / r0)
    assert np.allclose(fs, ss.rate_free_space_arrays(40 * MHZ, 50 * MHZ, GAMMA, -20 * MHZ, dc, 1.0) / r0)
