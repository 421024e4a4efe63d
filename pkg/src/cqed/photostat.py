"""Second-order correlations from time-tagged clicks.

Timestamps are integer ticks of the tagging unit (81 ps by default).  The
cross-correlation histogram uses bins centred on tau = 0 and symmetric in
sign, so swapping the two detectors mirrors the histogram exactly.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.special import erfc, erfcx

from .fitters.engine import FitConfig, FitError, FitResult, ParametricModel, least_squares_fit
from .params import DETECTOR_JITTER_SIGMA, TIME_TAG_RESOLUTION

log = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)


@dataclass
class ClickStream:
    """Sorted click ticks of one detector over an acquisition window.

    ``start`` and ``stop`` (ticks) delimit the window; by default they span
    the clicks themselves.
    """

    ticks: np.ndarray
    tick: float = TIME_TAG_RESOLUTION
    detector: int = 0
    start: Optional[int] = None
    stop: Optional[int] = None

    def __post_init__(self):
        self.ticks = np.asarray(self.ticks, dtype=np.uint64)
        if self.tick <= 0:
            raise ValueError("tick must be positive")
        if self.ticks.size > 1 and np.any(self.ticks[1:] < self.ticks[:-1]):
            raise ValueError("click ticks must be nondecreasing")
        if self.start is None:
            self.start = int(self.ticks[0]) if self.ticks.size else 0
        if self.stop is None:
            self.stop = int(self.ticks[-1]) + 1 if self.ticks.size else self.start
        if self.stop < self.start:
            raise ValueError("stop before start")

    def __len__(self):
        return int(self.ticks.size)

    @property
    def duration(self):
        """Window length in seconds."""
        return (self.stop - self.start) * self.tick

    @property
    def rate(self):
        return len(self) / self.duration if self.duration > 0 else 0.0

    @property
    def times(self):
        return self.ticks.astype(float) * self.tick


@dataclass
class G2Histogram:
    """Normalized coincidence histogram; ``values = raw / norm``, ``errors = sqrt(raw) / norm``."""

    centers: np.ndarray  # s
    bin_width: float  # s
    raw: np.ndarray
    norm: np.ndarray
    duration: float = 0.0  # s, overlap of the two windows
    rates: tuple = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    @property
    def edges(self):
        return np.append(self.centers - 0.5 * self.bin_width, self.centers[-1] + 0.5 * self.bin_width)

    @property
    def values(self):
        return self.raw / self.norm

    @property
    def errors(self):
        return np.sqrt(self.raw) / self.norm

    def at_zero(self):
        i = int(np.argmin(np.abs(self.centers)))
        return float(self.values[i]), float(self.errors[i])

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["tau_s", "bin_width_s", "raw", "norm", "g2", "g2_err"])
        for c, r, n, v, e in zip(self.centers, self.raw, self.norm, self.values, self.errors):
            w.writerow([repr(float(c)), repr(float(self.bin_width)), int(r), repr(float(n)),
                        repr(float(v)), repr(float(e))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path):
        text = text_or_path
        if "\n" not in text_or_path:
            with open(text_or_path) as fh:
                text = fh.read()
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(centers=np.array([float(r["tau_s"]) for r in rows]),
                   bin_width=float(rows[0]["bin_width_s"]),
                   raw=np.array([int(r["raw"]) for r in rows]),
                   norm=np.array([float(r["norm"]) for r in rows]))


def _pair_differences(t1, t2, reach, chunk=1 << 16):
    """All t2[j] - t1[i] with |difference| <= reach, as int64 ticks, chunked over t1."""
    t1 = t1.astype(np.int64)
    t2 = t2.astype(np.int64)
    for s in range(0, t1.size, chunk):
        a = t1[s:s + chunk]
        lo = np.searchsorted(t2, a - reach, side="left")
        hi = np.searchsorted(t2, a + reach, side="right")
        n = hi - lo
        total = int(n.sum())
        if total == 0:
            continue
        rep = np.repeat(np.arange(a.size), n)
        # position of each pair inside its run, then the t2 index
        offs = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        yield t2[lo[rep] + offs] - a[rep]


def g2_histogram(s1: ClickStream, s2: ClickStream, bin_width, tau_max, workers=1,
                 edge="lag") -> G2Histogram:
    """Cross-correlation of detector 2 relative to detector 1 (tau = t2 - t1).

    Bins have an integer number of ticks ``w`` and bin ``k`` collects
    |tau| in [(k - 1/2) w, (k + 1/2) w) with the sign of tau, for
    |k| <= floor(tau_max / (w tick)).  Bin ``k`` is normalized by
    r1 r2 (T - |tau_k|) w, with T the overlap of the two windows and r the
    mean rates over that window.  ``edge="tau_max"`` uses T - tau_max for every
    bin instead, a cruder edge correction biased by up to tau_max / T.
    """
    if edge not in ("lag", "tau_max"):
        raise ValueError("edge must be 'lag' or 'tau_max'")
    if len(s1) == 0 or len(s2) == 0:
        raise ValueError("empty click stream")
    if abs(s1.tick - s2.tick) > 1e-18:
        raise ValueError("streams have different tick durations")
    tick = s1.tick
    if bin_width < tick * (1 - 1e-9):
        raise ValueError("bin width below the tick duration")
    w = int(round(bin_width / tick))
    k_max = int(math.floor(tau_max / (w * tick) + 1e-9))
    start = max(s1.start, s2.start)
    stop = min(s1.stop, s2.stop)
    if stop <= start:
        raise ValueError("acquisition windows do not overlap")
    a = s1.ticks[(s1.ticks >= start) & (s1.ticks < stop)]
    b = s2.ticks[(s2.ticks >= start) & (s2.ticks < stop)]
    if a.size == 0 or b.size == 0:
        raise ValueError("empty click stream inside the common window")
    reach = (2 * k_max + 1) * w // 2  # outermost bin edge; the edge itself is dropped below
    counts = np.zeros(2 * k_max + 1, dtype=np.int64)

    def accumulate(part_a):
        local = np.zeros_like(counts)
        for d in _pair_differences(part_a, b, reach):
            mag = np.abs(d)
            k = (2 * mag + w) // (2 * w)
            keep = k <= k_max
            idx = np.sign(d[keep]) * k[keep]
            local += np.bincount(idx + k_max, minlength=counts.size)
        return local

    if workers > 1 and a.size > 1:
        from concurrent.futures import ThreadPoolExecutor

        parts = np.array_split(a, workers)
        with ThreadPoolExecutor(workers) as pool:
            for local in pool.map(accumulate, parts):
                counts += local
    else:
        counts += accumulate(a)

    t_win = (stop - start) * tick
    r1, r2 = a.size / t_win, b.size / t_win
    centers = np.arange(-k_max, k_max + 1) * w * tick
    span = np.abs(centers) if edge == "lag" else np.full(centers.shape, k_max * w * tick)
    norm = r1 * r2 * (t_win - span) * (w * tick)
    return G2Histogram(centers=centers, bin_width=w * tick, raw=counts, norm=norm, duration=t_win,
                       rates=(r1, r2), meta={"bin_ticks": w, "tick": tick, "n1": int(a.size),
                                             "n2": int(b.size)})


# ------------------------------------------------------------------------- model


@dataclass(frozen=True)
class G2ModelParams:
    b: float  # bunching amplitude
    tau_b: float  # bunching decay time, s
    gamma_c_prime: float  # rad/s; the dip recovers as exp(-2 gamma' |tau|)
    jitter_sigma: float = DETECTOR_JITTER_SIGMA  # s

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("b must be >= 0")
        if self.tau_b <= 0 or self.gamma_c_prime <= 0:
            raise ValueError("tau_b and gamma_c_prime must be positive")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    @property
    def recovery_time(self):
        """(2 gamma')^-1 in seconds."""
        return 1.0 / (2.0 * self.gamma_c_prime)


def g2_model(tau, params: G2ModelParams):
    """Jitter-free model 1 - (1 + b) exp(-2 gamma' |tau|) + b exp(-|tau| / tau_b)."""
    t = np.abs(np.asarray(tau, dtype=float))
    dip = np.exp(-2.0 * params.gamma_c_prime * t)
    # grouped so that tau = 0 gives exactly 0 in floating point
    return -np.expm1(-2.0 * params.gamma_c_prime * t) - params.b * (dip - np.exp(-t / params.tau_b))


def smoothed_two_sided_exp(tau, rate, sigma):
    """exp(-rate |tau|) convolved with a normalized Gaussian of width ``sigma``.

    Closed form with complementary error functions; written with erfcx where
    the plain form would overflow.
    """
    tau = np.asarray(tau, dtype=float)
    if sigma == 0:
        return np.exp(-rate * np.abs(tau))
    s2 = sigma * _SQRT2

    def side(t):
        # 1/2 exp(a^2 s^2 / 2 - a t) erfc((a s^2 - t) / (s sqrt 2))
        u = (rate * sigma ** 2 - t) / s2
        with np.errstate(over="ignore", invalid="ignore"):
            direct = 0.5 * np.exp(0.5 * (rate * sigma) ** 2 - rate * t) * erfc(u)
            scaled = 0.5 * np.exp(-0.5 * (t / sigma) ** 2) * erfcx(np.maximum(u, 0.0))
        return np.where(u > 0, scaled, direct)

    return side(tau) + side(-tau)


def convolve_jitter(params: G2ModelParams, sigma=None):
    """The model smeared by Gaussian timing jitter; returns a function of tau."""
    sig = params.jitter_sigma if sigma is None else sigma
    if sig < 0:
        raise ValueError("sigma must be >= 0")

    def curve(tau):
        if sig == 0:
            return g2_model(tau, params)
        return (1.0 - (1.0 + params.b) * smoothed_two_sided_exp(tau, 2.0 * params.gamma_c_prime, sig)
                + params.b * smoothed_two_sided_exp(tau, 1.0 / params.tau_b, sig))

    return curve


def bin_average(fn, centers, width, n_sub=16):
    """Mean of ``fn`` over each bin [c - w/2, c + w/2] by Gauss-Legendre sub-sampling."""
    x, wts = np.polynomial.legendre.leggauss(n_sub)
    pts = np.asarray(centers, dtype=float)[:, None] + 0.5 * width * x[None, :]
    return (fn(pts) * wts).sum(axis=1) / 2.0


# --------------------------------------------------------------------- fitting


def _g2_guess(tau, y):
    """Start values that work for any bin width.

    The bunching amplitude and time come from the wings; the dip rate from the
    area missing below that baseline, since the dip integrates to (1 + b) / gamma'.
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(tau)
    tau, y = tau[order], y[order]
    w = float(np.median(np.diff(tau))) if tau.size > 1 else 1e-9
    pos = tau >= 0
    t, v = tau[pos], y[pos]
    v = uniform_filter1d(v, size=max(1, min(9, v.size // 8)), mode="nearest")
    k = int(np.argmax(v))
    excess = max(float(v[k]) - 1.0, 0.01)
    after = np.flatnonzero((t > t[k]) & (v - 1.0 < excess / math.e))
    tau_b = max((t[after[0]] - t[k]) if after.size else t.max() / 3, 2 * w, t[k])
    b = excess * math.exp(t[k] / tau_b)
    base = 1.0 + b * np.exp(-np.abs(tau) / tau_b)
    core = np.abs(tau) <= max(t[k], w)
    area = float(np.sum(np.clip(base[core] - y[core], 0.0, None)) * w)
    gp = (1.0 + b) / area if area > 0 else 1.0 / w
    return [b, tau_b, gp]


def g2_fit_model(bin_width, jitter_sigma, bin_integrated=True):
    def func(p, tau):
        prm = G2ModelParams(max(p[0], 0.0), max(p[1], 1e-300), max(p[2], 1e-300), jitter_sigma)
        curve = convolve_jitter(prm)
        return bin_average(curve, tau, bin_width) if bin_integrated else curve(tau)

    return ParametricModel("g2", func, ["b", "tau_b", "gamma_c_prime"], p0=[0.3, 1e-7, 1e8],
                           lower=[0.0, 1e-12, 1.0], guess=_g2_guess)


def fit_g2(hist: G2Histogram, jitter_sigma=DETECTOR_JITTER_SIGMA, *, bin_integrated=True,
           config: FitConfig | None = None, p0=None, fixed=None) -> FitResult:
    """Weighted least squares of the jitter-convolved model on the histogram.

    Empty bins get the error of a single count so they keep a finite weight.
    A dip that the data cannot resolve marks gamma_c_prime as degenerate.
    """
    n_free = 3 - len(fixed or {})
    if hist.centers.size < 4 * n_free:
        raise FitError("need at least four bins per free parameter")
    sigma = np.sqrt(np.maximum(hist.raw, 1)) / hist.norm
    model = g2_fit_model(hist.bin_width, jitter_sigma, bin_integrated)
    res = least_squares_fit(model, hist.centers, hist.values, sigma, config, p0=p0, fixed=fixed)
    if not dip_resolved(res):
        if "gamma_c_prime" not in res.degenerate:
            res.degenerate.append("gamma_c_prime")
    res.config["jitter_sigma"] = jitter_sigma
    res.config["bin_integrated"] = bin_integrated
    return res


def dip_resolved(res: FitResult, nsigma=3.0):
    """True when the dip area (1 + b) / (2 gamma') differs from zero by ``nsigma`` errors."""
    b, gp = res["b"], res["gamma_c_prime"]
    i, k = res.param_names.index("b"), res.param_names.index("gamma_c_prime")
    area = (1 + b) / (2 * gp)
    grad = np.array([1 / (2 * gp), -(1 + b) / (2 * gp ** 2)])
    cov = res.covariance[np.ix_([i, k], [i, k])]
    err = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    return bool(np.isfinite(err) and err > 0 and area > nsigma * err)


def fit_params(res: FitResult, jitter_sigma=None) -> G2ModelParams:
    js = res.config.get("jitter_sigma", DETECTOR_JITTER_SIGMA) if jitter_sigma is None else jitter_sigma
    return G2ModelParams(res["b"], res["tau_b"], res["gamma_c_prime"], js)


def confidence_band(res: FitResult, tau, jitter_sigma=None, nsigma=1.0):
    """(curve, lower, upper) of the fitted (unbinned, jitter-convolved) model, linear propagation."""
    prm = fit_params(res, jitter_sigma)
    tau = np.asarray(tau, dtype=float)
    y0 = convolve_jitter(prm)(tau)
    jac = np.empty((tau.size, 3))
    vals = np.array([prm.b, prm.tau_b, prm.gamma_c_prime])
    for i in range(3):
        h = 1e-6 * max(abs(vals[i]), 1e-12)
        up, dn = vals.copy(), vals.copy()
        up[i] += h
        dn[i] = max(dn[i] - h, 0.0) if i == 0 else dn[i] - h
        fu = convolve_jitter(G2ModelParams(*up, prm.jitter_sigma))(tau)
        fd = convolve_jitter(G2ModelParams(*dn, prm.jitter_sigma))(tau)
        jac[:, i] = (fu - fd) / (up[i] - dn[i])
    var = np.einsum("ij,jk,ik->i", jac, res.covariance, jac)
    err = nsigma * np.sqrt(np.maximum(var, 0.0))
    return y0, y0 - err, y0 + err


# ------------------------------------------------------------------ simulation


def simulate_hbt_split(stream: ClickStream, seed, ratio=0.5, jitter_sigma=0.0, dead_time=0.0):
    """Route each click to detector 1 with probability ``ratio``, else detector 2.

    ``jitter_sigma`` is the timing jitter of each detector (s); the
    cross-correlation is then smeared by sqrt(2) times that width.
    ``dead_time`` (s) drops clicks closer than that to the previous kept one.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    to_one = rng.random(len(stream)) < ratio
    out = []
    for det, mask in ((1, to_one), (2, ~to_one)):
        t = stream.ticks[mask].astype(np.int64)
        if jitter_sigma > 0:
            t = t + np.rint(rng.normal(0.0, jitter_sigma / stream.tick, t.size)).astype(np.int64)
            t = np.sort(np.clip(t, 0, None))
        if dead_time > 0 and t.size:
            t = _apply_dead_time(t, int(round(dead_time / stream.tick)))
        out.append(ClickStream(t.astype(np.uint64), stream.tick, det, stream.start, stream.stop))
    return out[0], out[1]


def _apply_dead_time(t, dead):
    keep = np.ones(t.size, dtype=bool)
    last = None
    for i, v in enumerate(t):
        if last is not None and v - last < dead:
            keep[i] = False
        else:
            last = v
    return t[keep]


def synthetic_emitter_stream(rate_excite, rate_emit, duration, seed, *, k_off=0.0, k_on=1.0,
                             tick=TIME_TAG_RESOLUTION):
    """Clicks of a two-step renewal emitter gated by an independent bright/dark process.

    Without gating the intervals are Exp(rate_excite) + Exp(rate_emit) and
    g2(tau) = 1 - exp(-(rate_excite + rate_emit) |tau|).  Removing the clicks
    that fall in dark periods (switching rates ``k_off`` bright->dark, ``k_on``
    dark->bright) multiplies this by 1 + (k_off / k_on) exp(-(k_on + k_off) |tau|).
    """
    rng = np.random.default_rng(seed)
    mean_cycle = 1 / rate_excite + 1 / rate_emit
    n = int(duration / mean_cycle * 1.1 + 10 * math.sqrt(duration / mean_cycle) + 10)
    t = np.cumsum(rng.exponential(1 / rate_excite, n) + rng.exponential(1 / rate_emit, n))
    while t[-1] < duration:
        more = np.cumsum(rng.exponential(1 / rate_excite, n) + rng.exponential(1 / rate_emit, n))
        t = np.concatenate([t, t[-1] + more])
    t = t[t < duration]
    if k_off > 0:
        # telegraph process started in its stationary state
        bright = rng.random() < k_on / (k_on + k_off)
        first = bright
        edges, s = [], 0.0
        while s < duration:
            s += rng.exponential(1 / (k_off if bright else k_on))
            edges.append(s)
            bright = not bright
        nsw = np.searchsorted(np.array(edges), t, side="right")
        t = t[(nsw % 2 == 0) == first]
    ticks = np.floor(t / tick).astype(np.uint64)
    return ClickStream(ticks, tick, 0, 0, int(duration / tick))


def emitter_g2(tau, rate_excite, rate_emit, k_off=0.0, k_on=1.0):
    """Exact g2 of :func:`synthetic_emitter_stream`."""
    t = np.abs(np.asarray(tau, dtype=float))
    out = 1.0 - np.exp(-(rate_excite + rate_emit) * t)
    if k_off > 0:
        out = out * (1.0 + (k_off / k_on) * np.exp(-(k_on + k_off) * t))
    return out
