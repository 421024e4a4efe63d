"""Weak-drive two-level steady state of the driven atom-cavity system.

All functions accept a :class:`~cqed.params.SystemParams`.  The ``*_arrays``
variants broadcast over numpy arrays of couplings and detunings and are what
the scans, ensemble averages and fit models use.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .params import CavityGeometry, SystemParams, cooperativity, eta_ht_from_mirrors, to_mhz


def complex_cooperativity_arrays(g, kappa, gamma, delta_a, delta_c):
    return g ** 2 / (2.0 * (kappa - 1j * delta_c) * (gamma - 1j * delta_a))


def rate_free_space_arrays(g, kappa, gamma, delta_a, delta_c, omega):
    ct = complex_cooperativity_arrays(g, kappa, gamma, delta_a, delta_c)
    r0 = (omega ** 2 / (2.0 * gamma)) / (1.0 + (delta_a / gamma) ** 2)
    return r0 / np.abs(1.0 + 2.0 * ct) ** 2


def rate_cavity_arrays(g, kappa, gamma, delta_a, delta_c, omega):
    # |C~|^2 / C = C / ((1+x^2)(1+y^2)), which stays finite as g -> 0.
    x = delta_a / gamma
    y = delta_c / kappa
    c = g ** 2 / (2.0 * kappa * gamma)
    ct = complex_cooperativity_arrays(g, kappa, gamma, delta_a, delta_c)
    return (omega ** 2 / gamma) * c / ((1 + x ** 2) * (1 + y ** 2)) / np.abs(1.0 + 2.0 * ct) ** 2


def bare_rate_arrays(gamma, delta_a, omega):
    """R0: free-space rate of an uncoupled atom."""
    return (omega ** 2 / (2.0 * gamma)) / (1.0 + (delta_a / gamma) ** 2)


def complex_cooperativity(p: SystemParams) -> complex:
    return complex(complex_cooperativity_arrays(p.g, p.kappa, p.gamma, p.delta_a, p.delta_c))


def rate_free_space(p: SystemParams) -> float:
    """Photons per second scattered into free space."""
    return float(rate_free_space_arrays(p.g, p.kappa, p.gamma, p.delta_a, p.delta_c,
                                        p.omega_drive))


def rate_cavity(p: SystemParams) -> float:
    """Photons per second leaving the cavity (before any detection efficiency)."""
    return float(rate_cavity_arrays(p.g, p.kappa, p.gamma, p.delta_a, p.delta_c,
                                    p.omega_drive))


def bare_rate(p: SystemParams) -> float:
    return float(bare_rate_arrays(p.gamma, p.delta_a, p.omega_drive))


def rate_ratio(p: SystemParams) -> float:
    """R_c / R_fs = 2C / (1 + delta_c^2/kappa^2); independent of delta_a."""
    return 2.0 * cooperativity(p) / (1.0 + (p.delta_c / p.kappa) ** 2)


def purcell_linewidth(p: SystemParams) -> float:
    """Purcell-broadened half-width (1 + 2C) gamma, rad/s."""
    return (1.0 + 2.0 * cooperativity(p)) * p.gamma


def saturation_proxy(p: SystemParams) -> float:
    """Weak-drive validity indicator; keep below ~0.1 for the analytic rates to hold."""
    return 2.0 * p.omega_drive ** 2 / (p.gamma ** 2 * (1.0 + 2.0 * cooperativity(p)) ** 2)


def dressed_energies(p: SystemParams, omega_c, omega_a=0.0):
    """Complex eigenvalues of the single-excitation non-Hermitian block.

    Returns an array of shape ``(len(omega_c), 2)`` with the lower and upper
    branch (sorted by real part).  Real parts are band positions, minus the
    imaginary parts are half-widths.
    """
    wc = np.atleast_1d(np.asarray(omega_c, dtype=float))
    a = omega_a - 1j * p.gamma
    c = wc - 1j * p.kappa
    mean = 0.5 * (a + c)
    root = np.sqrt((0.5 * (a - c)) ** 2 + p.g ** 2)
    lam = np.stack([mean - root, mean + root], axis=-1)
    order = np.argsort(lam.real, axis=-1, kind="stable")
    return np.take_along_axis(lam, order, axis=-1)


def _eta_ht(coupling):
    if isinstance(coupling, CavityGeometry):
        return eta_ht_from_mirrors(coupling)
    eta = float(coupling)
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta_ht must lie in [0, 1]")
    return eta


def reflection_arrays(g, kappa, gamma, delta_a, delta_c, eta_ht):
    kappa_ht = eta_ht * kappa
    r = 1.0 - 2.0 * kappa_ht / (kappa - 1j * delta_c + g ** 2 / (gamma - 1j * delta_a))
    return np.abs(r) ** 2


def reflection_spectrum(p: SystemParams, coupling) -> float:
    """Cavity-probe power reflectivity of the one-sided resonator.

    ``coupling`` is either a :class:`CavityGeometry` or the HT out-coupling
    fraction ``eta_ht`` directly.
    """
    return float(reflection_arrays(p.g, p.kappa, p.gamma, p.delta_a, p.delta_c, _eta_ht(coupling)))


def _hyperbola(p, delta_a, level):
    da = np.asarray(delta_a, dtype=float)
    with np.errstate(divide="ignore"):
        dc = level * p.gamma * p.kappa / da
    return np.column_stack([da, dc])


def backaction_boundary(p: SystemParams, delta_a):
    """Points (delta_a, delta_c) on delta_a*delta_c = (1+C) gamma kappa, where R_fs = R0."""
    return _hyperbola(p, delta_a, 1.0 + cooperativity(p))


def dressed_band_curve(p: SystemParams, delta_a):
    """Points on delta_a*delta_c = 2C gamma kappa (dressed eigenbands)."""
    return _hyperbola(p, delta_a, 2.0 * cooperativity(p))


# -- 2D scans -----------------------------------------------------------------

OBSERVABLES = ("rate_cavity", "rate_free_space", "rate_ratio", "reflection",
               "reflection_dip", "rate_cavity_over_r0", "rate_free_space_over_r0")


@dataclass
class SpectrumScan:
    """A 2D map over probe-atom detuning (rows) and a cavity axis (columns)."""

    delta_a: np.ndarray
    cavity_axis: np.ndarray
    values: np.ndarray
    observable: str
    cavity_axis_kind: str = "delta_c"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("delta_a", "cavity_axis"):
            grid = getattr(self, name)
            if grid.ndim != 1 or grid.size == 0:
                raise ValueError(f"{name} must be a non-empty 1D grid")
            if grid.size > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
                raise ValueError(f"{name} must be strictly monotonic")
        if self.values.shape != (self.delta_a.size, self.cavity_axis.size):
            raise ValueError("values shape does not match the grids")

    def delta_c_grid(self):
        """delta_c for every map point (same shape as ``values``)."""
        da = self.delta_a[:, None]
        if self.cavity_axis_kind == "delta_c":
            return np.broadcast_to(self.cavity_axis[None, :], self.values.shape)
        # cavity_axis holds omega_c - omega_a, so delta_c = delta_a - (omega_c - omega_a)
        return da - self.cavity_axis[None, :]

    def argmax(self):
        i, j = np.unravel_index(np.nanargmax(self.values), self.values.shape)
        return self.delta_a[i], self.cavity_axis[j], self.values[i, j]

    def to_csv(self):
        """Long-format CSV; axes in MHz/2pi."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta_a_MHz", f"{self.cavity_axis_kind}_MHz", self.observable])
        for i, da in enumerate(self.delta_a):
            for j, dc in enumerate(self.cavity_axis):
                w.writerow([repr(to_mhz(da)), repr(to_mhz(dc)), repr(float(self.values[i, j]))])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({
            "metadata": {"observable": self.observable,
                         "cavity_axis_kind": self.cavity_axis_kind,
                         "units": {"axes": "MHz_over_2pi"}, **self.metadata},
            "delta_a": (to_mhz(self.delta_a)).tolist(),
            "cavity_axis": (to_mhz(self.cavity_axis)).tolist(),
            "values": self.values.tolist(),
        }, indent=1)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        meta = dict(doc["metadata"])
        observable = meta.pop("observable")
        kind = meta.pop("cavity_axis_kind")
        meta.pop("units", None)
        from .params import mhz
        return cls(delta_a=mhz(np.asarray(doc["delta_a"], float)),
                   cavity_axis=mhz(np.asarray(doc["cavity_axis"], float)),
                   values=np.asarray(doc["values"], float), observable=observable,
                   cavity_axis_kind=kind, metadata=meta)


def _evaluate(p, da, dc, observable, eta_ht):
    args = (p.g, p.kappa, p.gamma, da, dc)
    om = p.omega_drive
    if observable == "rate_cavity":
        return rate_cavity_arrays(*args, om)
    if observable == "rate_free_space":
        return rate_free_space_arrays(*args, om)
    if observable == "rate_ratio":
        return 2.0 * cooperativity(p) / (1.0 + (dc / p.kappa) ** 2) + 0.0 * da
    if observable == "rate_cavity_over_r0":
        return rate_cavity_arrays(*args, 1.0) / bare_rate_arrays(p.gamma, da, 1.0)
    if observable == "rate_free_space_over_r0":
        return rate_free_space_arrays(*args, 1.0) / bare_rate_arrays(p.gamma, da, 1.0)
    if observable in ("reflection", "reflection_dip"):
        if eta_ht is None:
            raise ValueError(f"{observable} needs eta_ht or a CavityGeometry")
        r = reflection_arrays(*args, _eta_ht(eta_ht))
        return r if observable == "reflection" else 1.0 - r
    raise ValueError(f"unknown observable {observable!r}; choose from {OBSERVABLES}")


def scan_2d(p: SystemParams, delta_a, cavity_axis, observable="rate_cavity", *,
            cavity_axis_kind="delta_c", normalize=False, eta_ht=None, workers=1) -> SpectrumScan:
    """Fill a map of ``observable`` over probe detuning x cavity axis.

    ``cavity_axis_kind`` is ``"delta_c"`` (probe-cavity detuning) or
    ``"cavity_offset"`` (omega_c - omega_a, the horizontal axis of an
    avoided-crossing plot).  Rows are evaluated independently, optionally on
    ``workers`` threads; the result does not depend on the worker count.
    """
    da = np.asarray(delta_a, dtype=float)
    ax = np.asarray(cavity_axis, dtype=float)
    if da.size == 0 or ax.size == 0:
        raise ValueError("empty grid")
    if cavity_axis_kind not in ("delta_c", "cavity_offset"):
        raise ValueError("cavity_axis_kind must be 'delta_c' or 'cavity_offset'")

    def row(i):
        dc = ax if cavity_axis_kind == "delta_c" else da[i] - ax
        return _evaluate(p, da[i], dc, observable, eta_ht)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, range(da.size)))
    else:
        rows = [row(i) for i in range(da.size)]
    values = np.vstack(rows).astype(float)
    if normalize:
        values = values / np.nanmax(values)
    meta = {"params_MHz": p.as_mhz(), "normalized": bool(normalize)}
    return SpectrumScan(da, ax, values, observable, cavity_axis_kind, meta)
