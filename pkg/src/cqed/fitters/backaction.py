"""Joint fit of normalized free-space and cavity emission versus cavity detuning.

Each dataset is one drive power: a pair of curves R_fs/R_0 and R_c/R_0 over
delta_c at fixed delta_a.  Shared parameters are the free-space detection
efficiency (relative to its nominal value), kappa and a cavity-frequency
offset; each power has its own mean coupling.  Rates are averaged over a
Gaussian coupling distribution of fixed width.

Optical pumping makes the multilevel atom behave as if g were reduced by a
channel-dependent factor, which is applied to the mean coupling before
averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import steady_state as ss
from ..ensemble import CouplingDistribution
from ..params import SystemParams, mhz
from .bootstrap import bootstrap_errors
from .engine import FitConfig, FitError, FitResult, ParametricModel, least_squares_fit

ETA_FS_NOMINAL = 0.022
G_REDUCTION = {"cavity": 0.05, "free_space": 0.11}


@dataclass
class BackactionDataset:
    """One drive power: normalized emission into free space and the cavity."""

    delta_c: np.ndarray  # rad/s, nominal cavity detuning
    free_space: np.ndarray  # detected R_fs / R_0 assuming the nominal efficiency
    cavity: np.ndarray  # R_c / R_0
    delta_a: float  # rad/s
    sigma_free_space: Optional[np.ndarray] = None
    sigma_cavity: Optional[np.ndarray] = None
    label: str = ""

    def __post_init__(self):
        self.delta_c = np.asarray(self.delta_c, dtype=float)
        self.free_space = np.asarray(self.free_space, dtype=float)
        self.cavity = np.asarray(self.cavity, dtype=float)
        if not (self.delta_c.shape == self.free_space.shape == self.cavity.shape):
            raise ValueError("delta_c, free_space and cavity must have the same shape")


@dataclass
class BackactionConfig:
    gamma: float = mhz(3.03)
    sigma_g: float = mhz(18.2)
    n_nodes: int = 41
    eta_fs_nominal: float = ETA_FS_NOMINAL
    g_reduction: dict = field(default_factory=lambda: dict(G_REDUCTION))
    weighted: bool = True  # per-point errors; False: uniform weights


def normalized_rates(g_mean, kappa, gamma, delta_a, delta_c, sigma_g, n_nodes=41, reduction=(0.0, 0.0)):
    """Distribution-averaged (R_fs/R_0, R_c/R_0); ``reduction`` = (free-space, cavity) g factors."""
    out = []
    for k, red in enumerate(reduction):
        g, w = CouplingDistribution(g_mean * (1 - red), sigma_g * (1 - red), n_nodes).nodes()
        gg = g[:, None]
        if k == 0:
            r = ss.rate_free_space_arrays(gg, kappa, gamma, delta_a, delta_c, 1.0)
        else:
            r = ss.rate_cavity_arrays(gg, kappa, gamma, delta_a, delta_c, 1.0)
        out.append(w @ r / ss.bare_rate_arrays(gamma, delta_a, 1.0))
    return out[0], out[1]


class BackactionProblem:
    """Flattened rows (dataset, channel, delta_c) plus the 3 + n parameter model."""

    def __init__(self, datasets: Sequence[BackactionDataset], config: BackactionConfig | None = None):
        if not datasets:
            raise FitError("need at least one dataset pair")
        self.datasets = list(datasets)
        self.cfg = config or BackactionConfig()
        rows, y, s = [], [], []
        for i, d in enumerate(self.datasets):
            for ch, vals, sig in ((0, d.free_space, d.sigma_free_space), (1, d.cavity, d.sigma_cavity)):
                for j in range(vals.size):
                    rows.append((i, ch, j))
                y.append(vals)
                s.append(np.full(vals.size, np.nan) if sig is None else np.broadcast_to(sig, vals.shape))
        self.rows = np.array(rows, dtype=int)
        self.y = np.concatenate(y)
        sig = np.concatenate(s)
        self.sigma = sig if (self.cfg.weighted and np.all(np.isfinite(sig))) else None
        n = len(self.datasets)
        self.param_names = ["eta_fs", "kappa", "cavity_offset"] + [f"g_{i}" for i in range(n)]
        if self.y.size <= len(self.param_names):
            raise FitError(f"under-determined: {self.y.size} points for {len(self.param_names)} parameters")

    @property
    def n_params(self):
        return len(self.param_names)

    def evaluate(self, p, rows):
        cfg = self.cfg
        eta, kappa, offset = p[:3]
        out = np.empty(len(rows))
        red = (cfg.g_reduction.get("free_space", 0.0), cfg.g_reduction.get("cavity", 0.0))
        for i, d in enumerate(self.datasets):
            sel = rows[:, 0] == i
            if not sel.any():
                continue
            dc = d.delta_c[rows[sel, 2]] + offset
            fs, c = normalized_rates(p[3 + i], kappa, cfg.gamma, d.delta_a, dc, cfg.sigma_g,
                                     cfg.n_nodes, red)
            out[sel] = np.where(rows[sel, 1] == 0, fs * eta / cfg.eta_fs_nominal, c)
        return out

    def model(self, p0) -> ParametricModel:
        p0 = np.asarray(p0, dtype=float)
        scale = np.abs(p0).copy()
        scale[2] = max(abs(p0[2]), mhz(10.0))
        lower = [1e-6, 1e-3 * p0[1]] + [-np.inf] + [0.0] * len(self.datasets)
        return ParametricModel("backaction", lambda p, rows: self.evaluate(p, rows), self.param_names,
                               p0=p0, lower=lower, scale=scale)

    def default_start(self, kappa0=mhz(50.0), g0=None):
        g0 = g0 if g0 is not None else mhz(50.0)
        return [self.cfg.eta_fs_nominal, kappa0, 0.0] + [g0] * len(self.datasets)

    def cooperativities(self, fit: FitResult):
        """Effective mean cooperativity per channel and dataset."""
        kappa = fit["kappa"]
        out = {}
        for ch, red in self.cfg.g_reduction.items():
            out[ch] = [((fit[f"g_{i}"] * (1 - red)) ** 2) / (2 * kappa * self.cfg.gamma)
                       for i in range(len(self.datasets))]
        return out


def backaction_surface_fit(datasets, config: BackactionConfig | None = None, p0=None,
                           fit_config: FitConfig | None = None, n_bootstrap=0, seed=0, workers=1):
    """Joint fit; returns (FitResult, BackactionProblem)."""
    prob = BackactionProblem(datasets, config)
    start = np.asarray(p0 if p0 is not None else prob.default_start(), dtype=float)
    model = prob.model(start)
    rows = prob.rows
    res = least_squares_fit(model, rows, prob.y, prob.sigma, fit_config, p0=start)
    res.config["backaction"] = {"gamma": prob.cfg.gamma, "sigma_g": prob.cfg.sigma_g,
                                "n_nodes": prob.cfg.n_nodes, "eta_fs_nominal": prob.cfg.eta_fs_nominal,
                                "g_reduction": prob.cfg.g_reduction, "weighted": prob.cfg.weighted}
    if n_bootstrap:
        bootstrap_errors(model, rows, prob.y, prob.sigma, n_bootstrap, seed, fit=res,
                         config=fit_config, workers=workers)
    return res, prob


def synthetic_backaction(g_means, kappa, delta_a, delta_c, eta_fs, cavity_offset=0.0,
                         config: BackactionConfig | None = None, noise=0.0, seed=0):
    """Datasets generated by the fit model itself (optionally with relative Gaussian noise)."""
    cfg = config or BackactionConfig()
    rng = np.random.default_rng(seed)
    red = (cfg.g_reduction.get("free_space", 0.0), cfg.g_reduction.get("cavity", 0.0))
    out = []
    for i, g in enumerate(g_means):
        fs, c = normalized_rates(g, kappa, cfg.gamma, delta_a, np.asarray(delta_c) + cavity_offset,
                                 cfg.sigma_g, cfg.n_nodes, red)
        fs = fs * eta_fs / cfg.eta_fs_nominal
        sfs, sc = noise * np.abs(fs) + 1e-300, noise * np.abs(c) + 1e-300
        if noise > 0:
            fs = fs + sfs * rng.normal(size=fs.shape)
            c = c + sc * rng.normal(size=c.shape)
        out.append(BackactionDataset(np.asarray(delta_c, dtype=float), fs, c, delta_a,
                                     sfs if noise > 0 else None, sc if noise > 0 else None,
                                     label=f"power_{i}"))
    return out


def model_params_for(dataset: BackactionDataset, fit: FitResult, index: int, gamma=mhz(3.03)):
    """SystemParams of the mean atom of one dataset (weak drive placeholder)."""
    return SystemParams(g=fit[f"g_{index}"], kappa=fit["kappa"], gamma=gamma,
                        delta_a=dataset.delta_a, delta_c=0.0, omega_drive=0.0)
