"""Damped Gauss-Newton (Levenberg-Marquardt) least squares with numeric Jacobians.

Bounds are handled by projection.  When the Jacobian is numerically rank
deficient the engine falls back to a Nelder-Mead search on chi^2.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class FitError(RuntimeError):
    pass


@dataclass
class ParametricModel:
    """``func(params, x) -> y`` with named, bounded parameters.

    ``guess(x, y)`` may supply data-driven starting values; otherwise ``p0`` is
    used.  ``scale`` gives a typical magnitude per parameter for step sizes.
    """

    name: str
    func: Callable
    param_names: Sequence[str]
    p0: Sequence[float]
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    guess: Optional[Callable] = None
    scale: Optional[Sequence[float]] = None

    def __post_init__(self):
        n = len(self.param_names)
        self.p0 = np.asarray(self.p0, dtype=float)
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if not (len(self.p0) == len(self.lower) == len(self.upper) == n):
            raise ValueError("parameter arrays must match param_names")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")

    @property
    def n_params(self):
        return len(self.param_names)

    def __call__(self, params, x):
        return self.func(np.asarray(params, dtype=float), x)

    def start(self, x, y):
        p = self.guess(x, y) if self.guess is not None else self.p0
        return np.clip(np.asarray(p, dtype=float), self.lower, self.upper)

    def typical_scale(self, p):
        s = np.abs(p) if self.scale is None else np.asarray(self.scale, dtype=float)
        return np.where(s > 0, s, 1.0)


@dataclass
class FitConfig:
    max_iter: int = 300
    ftol: float = 1e-12  # relative chi^2 decrease
    xtol: float = 1e-12  # relative step
    gtol: float = 1e-10  # cosine between residual and Jacobian columns
    lambda0: float = 1e-3
    lambda_max: float = 1e16
    rel_step: float = _EPS ** (1 / 3)  # central-difference step relative to the parameter scale
    cond_limit: float = 1e13
    fallback: bool = True
    fallback_max_iter: int = 2000  # simplex iterations
    absolute_sigma: bool = True  # False: scale covariance by chi^2/dof


@dataclass
class BootstrapSummary:
    samples: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    std: np.ndarray
    level: float
    seed: int

    def to_dict(self):
        return {"median": self.median.tolist(), "lower": self.lower.tolist(),
                "upper": self.upper.tolist(), "std": self.std.tolist(), "level": self.level,
                "seed": self.seed, "n_resamples": int(len(self.samples))}


@dataclass
class FitResult:
    model: str
    param_names: list
    values: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    chi2: float
    dof: int
    converged: bool
    n_iter: int
    method: str
    trace: list = field(default_factory=list)  # chi^2 after each accepted iteration
    message: str = ""
    degenerate: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    bootstrap: Optional[BootstrapSummary] = None

    @property
    def errors(self):
        d = np.diag(self.covariance)
        return np.sqrt(np.where(d >= 0, d, np.inf))

    @property
    def chi2_red(self):
        return self.chi2 / self.dof if self.dof > 0 else np.inf

    @property
    def params(self):
        return dict(zip(self.param_names, self.values.tolist()))

    def __getitem__(self, name):
        return self.values[self.param_names.index(name)]

    def error(self, name):
        return self.errors[self.param_names.index(name)]

    def interval(self, name, nsigma=1.0):
        """One-sigma interval; bootstrap percentiles when available."""
        i = self.param_names.index(name)
        if self.bootstrap is not None and nsigma == 1.0:
            return float(self.bootstrap.lower[i]), float(self.bootstrap.upper[i])
        v, e = self.values[i], self.errors[i]
        return float(v - nsigma * e), float(v + nsigma * e)

    def misspecified(self, threshold=3.0):
        return bool(self.chi2_red > threshold)

    def to_dict(self):
        return {"model": self.model, "params": self.params,
                "errors": dict(zip(self.param_names, self.errors.tolist())),
                "covariance": self.covariance.tolist(), "chi2": self.chi2, "dof": self.dof,
                "chi2_red": self.chi2_red, "converged": self.converged, "n_iter": self.n_iter,
                "method": self.method, "trace": list(self.trace), "message": self.message,
                "degenerate": list(self.degenerate), "residuals": self.residuals.tolist(),
                "config": self.config,
                "bootstrap": None if self.bootstrap is None else self.bootstrap.to_dict()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), default=_json_default, **kw)

    @classmethod
    def from_dict(cls, d):
        names = list(d["params"])
        boot = None
        if d.get("bootstrap"):
            b = d["bootstrap"]
            boot = BootstrapSummary(np.empty((b["n_resamples"], len(names))), np.array(b["median"]),
                                    np.array(b["lower"]), np.array(b["upper"]), np.array(b["std"]),
                                    b["level"], b["seed"])
        return cls(model=d["model"], param_names=names, values=np.array([d["params"][n] for n in names]),
                   covariance=np.array(d["covariance"], dtype=float),
                   residuals=np.array(d["residuals"], dtype=float), chi2=d["chi2"], dof=d["dof"],
                   converged=d["converged"], n_iter=d["n_iter"], method=d["method"],
                   trace=list(d["trace"]), message=d["message"], degenerate=list(d["degenerate"]),
                   config=d["config"], bootstrap=boot)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def numeric_jacobian(fun, p, lower, upper, scale, rel_step):
    """Central differences; one-sided next to a bound."""
    f0 = fun(p)
    jac = np.empty((f0.size, p.size))
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), scale[i])
        up, dn = p.copy(), p.copy()
        up[i] = p[i] + h
        dn[i] = p[i] - h
        if up[i] > upper[i]:
            jac[:, i] = (f0 - fun(dn)) / h
        elif dn[i] < lower[i]:
            jac[:, i] = (fun(up) - f0) / h
        else:
            jac[:, i] = (fun(up) - fun(dn)) / (2 * h)
    return jac, f0


def _covariance(jac):
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
        if not np.all(np.isfinite(cov)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    return cov


def least_squares_fit(model: ParametricModel, x, y, sigma=None, config: FitConfig | None = None,
                      p0=None, fixed=None) -> FitResult:
    """Minimize sum(((model(p, x) - y) / sigma)^2) over the model's bounded box.

    ``fixed`` maps parameter names to values held constant.  Without
    ``sigma`` the data are unweighted and the covariance is scaled by the
    reduced chi^2.
    """
    cfg = config or FitConfig()
    y = np.asarray(y, dtype=float)
    weighted = sigma is not None
    if weighted:
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if not (np.all(np.isfinite(sig)) and np.all(sig > 0)):
            raise ValueError("sigma must be positive and finite")
        w = 1.0 / sig
    else:
        w = np.ones_like(y)
    start = model.start(x, y) if p0 is None else np.clip(np.asarray(p0, dtype=float), model.lower, model.upper)
    fixed = dict(fixed or {})
    free = np.array([n not in fixed for n in model.param_names])
    for name, val in fixed.items():
        start[list(model.param_names).index(name)] = val
    n_free = int(free.sum())
    if y.size <= n_free:
        raise FitError(f"{y.size} data points for {n_free} free parameters")

    lo, hi = model.lower[free], model.upper[free]
    scale = model.typical_scale(start)[free]

    def full(q):
        p = start.copy()
        p[free] = q
        return p

    def resid(q):
        r = (model(full(q), x) - y) * w
        return np.asarray(r, dtype=float).ravel()

    q = start[free].copy()
    r = resid(q)
    if not np.all(np.isfinite(r)):
        raise FitError("model is not finite at the starting point")
    chi2 = float(r @ r)
    trace = [chi2]
    lam = cfg.lambda0
    converged = False
    method = "lm"
    message = "maximum iterations reached"
    it = 0
    jac = None
    need_jac = True
    while it < cfg.max_iter:
        it += 1
        if need_jac:
            jac, _ = numeric_jacobian(resid, q, lo, hi, scale, cfg.rel_step)
            grad = jac.T @ r
            jtj = jac.T @ jac
            d = np.diag(jtj).copy()
            # cosine test: residual orthogonal to every Jacobian column
            col = np.sqrt(d)
            if chi2 == 0.0 or np.all(np.abs(grad) <= cfg.gtol * np.where(col > 0, col, 1.0) * np.sqrt(chi2)):
                converged, message = True, "gradient tolerance"
                break
            if cfg.fallback and (np.any(d == 0) or np.linalg.cond(jtj / np.outer(col, col).clip(1e-300)) > cfg.cond_limit):
                method = "nelder-mead"
                break
            need_jac = False
        a = jtj + lam * np.diag(np.where(d > 0, d, 1.0))
        try:
            step = np.linalg.solve(a, -grad)
        except np.linalg.LinAlgError:
            lam *= 10
            continue
        q_new = np.clip(q + step, lo, hi)
        r_new = resid(q_new)
        chi2_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
        if chi2_new < chi2:
            rel_drop = (chi2 - chi2_new) / chi2
            small_step = np.all(np.abs(q_new - q) <= cfg.xtol * (np.abs(q) + cfg.xtol * scale))
            q, r, chi2 = q_new, r_new, chi2_new
            trace.append(chi2)
            lam = max(lam / 10, 1e-12)
            need_jac = True
            if rel_drop <= cfg.ftol or small_step:
                converged, message = True, "chi2/step tolerance"
                break
        else:
            # the local quadratic model promises nothing worth another try
            pred = -(2.0 * step @ grad + step @ jtj @ step)
            if pred <= cfg.ftol * chi2 and lam <= cfg.lambda0:
                converged, message = True, "predicted reduction below tolerance"
                break
            lam *= 10
            if lam > cfg.lambda_max:
                # no descent direction left at working precision
                col = np.sqrt(np.where(d > 0, d, 1.0))
                converged = bool(np.all(np.abs(grad) <= 1e-6 * col * np.sqrt(chi2)))
                message = "damping limit" + ("" if converged else " (gradient not small)")
                break

    if method == "nelder-mead":
        log.info("%s: ill-conditioned Jacobian, falling back to Nelder-Mead", model.name)

        # simplex in units of the typical parameter scale so tolerances mean the same for all
        def obj(z):
            rr = resid(np.clip(z * scale, lo, hi))
            return float(rr @ rr) if np.all(np.isfinite(rr)) else np.inf

        zb = [(None if not np.isfinite(a) else a / s_, None if not np.isfinite(b) else b / s_)
              for a, b, s_ in zip(lo, hi, scale)]
        res = minimize(obj, q / scale, method="Nelder-Mead", bounds=zb,
                       options={"maxiter": cfg.fallback_max_iter, "xatol": 1e-10, "fatol": 1e-14 * max(chi2, 1e-300),
                                "adaptive": n_free > 2})
        if res.fun < chi2:
            q = np.clip(res.x * scale, lo, hi)
            r = resid(q)
            chi2 = float(r @ r)
            trace.append(chi2)
        converged = bool(res.success)
        message = "nelder-mead: " + str(res.message)
        it += int(res.nit)
        jac, _ = numeric_jacobian(resid, q, lo, hi, scale, cfg.rel_step)

    if jac is None or need_jac:
        jac, _ = numeric_jacobian(resid, q, lo, hi, scale, cfg.rel_step)
    dof = y.size - n_free
    cov_free = _covariance(jac)
    if not (cfg.absolute_sigma and weighted):
        cov_free = cov_free * (chi2 / dof if dof > 0 else np.inf)
    cov = np.zeros((model.n_params, model.n_params))
    cov[np.ix_(free, free)] = cov_free
    names = list(model.param_names)
    # a column with no leverage on the residuals marks an undetermined parameter
    col_norm = np.linalg.norm(jac, axis=0)
    # columns normalized so the test does not depend on parameter units
    jn = jac / np.where(col_norm > 0, col_norm, 1.0)
    sv = np.linalg.svd(jn, compute_uv=False)
    degenerate = []
    if sv.size and sv[-1] <= 1e-8 * sv[0]:
        vt = np.linalg.svd(jn)[2]
        weak = np.abs(vt[-1]) > 0.5
        degenerate = [n for n, f in zip([n for n, fr in zip(names, free) if fr], weak) if f]
    degenerate += [n for n, c in zip([n for n, fr in zip(names, free) if fr], col_norm) if c == 0 and n not in degenerate]
    return FitResult(model=model.name, param_names=names, values=full(q), covariance=cov,
                     residuals=r, chi2=chi2, dof=dof, converged=converged, n_iter=it, method=method,
                     trace=trace, message=message, degenerate=degenerate,
                     config={**asdict(cfg), "weighted": weighted, "fixed": fixed,
                             "start": start.tolist()})
