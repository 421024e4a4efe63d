"""Parameter containers, unit conventions and scalar CQED quantities.

Internally every frequency is an angular frequency in rad/s and every time is
in seconds.  User-facing values are quoted as ``value/2pi`` in MHz, the usual
"2pi x 49.94 MHz" notation, and converted with :func:`mhz` / :func:`to_mhz`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # rad/s per (MHz/2pi)

# Rb87 D2 excited-state lifetime (2 gamma)^-1 = 26.24 ns, gamma is the dipole decay rate.
RB87_D2_LIFETIME = 26.24e-9
GAMMA_RB87_D2 = 1.0 / (2.0 * RB87_D2_LIFETIME)

# Reference values quoted for the fiber-cavity experiment, in MHz/2pi.
REFERENCE_G_MEAN_MHZ = 49.94
REFERENCE_G_SIGMA_MHZ = 18.2
REFERENCE_KAPPA_MHZ = 58.0
REFERENCE_GAMMA_MHZ = 3.03
REFERENCE_G_MAX_MHZ = 120.0
TIME_TAG_RESOLUTION = 81e-12
DETECTOR_JITTER_SIGMA = 1.35e-9


def mhz(value):
    """Convert ``value`` given in MHz/2pi to rad/s."""
    return value * MHZ


def to_mhz(omega):
    """Convert an angular frequency in rad/s to MHz/2pi."""
    return omega / MHZ


def _check_finite(name, value):
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Atom-cavity rates (rad/s).

    ``delta_a`` and ``delta_c`` are the probe detunings from the atom and from
    the cavity, ``omega_p - omega_a`` and ``omega_p - omega_c``.
    """

    g: float
    kappa: float
    gamma: float
    delta_a: float = 0.0
    delta_c: float = 0.0
    omega_drive: float = 0.0

    def __post_init__(self):
        for name in ("g", "kappa", "gamma", "delta_a", "delta_c", "omega_drive"):
            _check_finite(name, getattr(self, name))
        if self.g < 0:
            raise ValueError("g must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")

    @classmethod
    def from_mhz(cls, g, kappa, gamma=REFERENCE_GAMMA_MHZ, delta_a=0.0, delta_c=0.0,
                 omega_drive=0.0):
        """Build from values quoted in MHz/2pi."""
        return cls(g=mhz(g), kappa=mhz(kappa), gamma=mhz(gamma),
                   delta_a=mhz(delta_a), delta_c=mhz(delta_c),
                   omega_drive=mhz(omega_drive))

    def with_(self, **changes):
        return replace(self, **changes)

    def as_mhz(self):
        return {k: to_mhz(v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class CavityGeometry:
    """Fabry-Perot loss budget.  Transmissions and losses are per round trip."""

    free_spectral_range: float  # Hz
    t_ht: float
    t_lt: float
    losses: float

    def __post_init__(self):
        if not (self.free_spectral_range > 0 and math.isfinite(self.free_spectral_range)):
            raise ValueError("free_spectral_range must be > 0")
        for name in ("t_ht", "t_lt", "losses"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v!r}")
        if self.total_loss <= 0:
            raise ValueError("t_ht + t_lt + losses must be > 0")

    @property
    def total_loss(self):
        return self.t_ht + self.t_lt + self.losses


@dataclass(frozen=True)
class DetectionChain:
    """Detection efficiencies and timing resolution.

    ``eta_c`` is end-to-end: it already contains the HT-mirror out-coupling
    ``eta_ht``, which is kept for bookkeeping only.
    """

    eta_ht: float = 0.67
    eta_c: float = 0.021
    eta_fs: float = 0.022
    jitter_sigma: float = DETECTOR_JITTER_SIGMA
    tick: float = TIME_TAG_RESOLUTION

    def __post_init__(self):
        for name in ("eta_ht", "eta_c", "eta_fs"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if not self.tick > 0:
            raise ValueError("tick must be > 0")


def cooperativity(p: SystemParams) -> float:
    """Single-atom cooperativity C = g^2 / (2 kappa gamma)."""
    return p.g ** 2 / (2.0 * p.kappa * p.gamma)


def purcell_factor(p: SystemParams) -> float:
    return 2.0 * cooperativity(p)


def collection_efficiency(p: SystemParams) -> float:
    """Fraction of the emission collected by the resonant cavity, f_P/(f_P+1)."""
    fp = purcell_factor(p)
    return fp / (fp + 1.0)


def finesse(c: CavityGeometry) -> float:
    return TWO_PI / c.total_loss


def kappa_from_geometry(c: CavityGeometry) -> float:
    """Cavity field decay rate (rad/s); the FWHM in Hz is 2 kappa / 2pi."""
    return math.pi * c.free_spectral_range / finesse(c)


def eta_ht_from_mirrors(c: CavityGeometry) -> float:
    return c.t_ht / c.total_loss


def total_loss_from_finesse(f):
    return TWO_PI / f


def finesse_from_kappa(kappa, free_spectral_range):
    return math.pi * free_spectral_range / kappa


# -- unit-checked JSON --------------------------------------------------------

_UNIT_SCALE = {
    "MHz_over_2pi": MHZ,
    "rad_per_s": 1.0,
    "Hz": 1.0,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
    "days": 86400.0,
    "dimensionless": 1.0,
}

# Accepted units per field; anything else is rejected.
_FIELD_UNITS = {
    "system": {
        "g": ("MHz_over_2pi", "rad_per_s"),
        "kappa": ("MHz_over_2pi", "rad_per_s"),
        "gamma": ("MHz_over_2pi", "rad_per_s"),
        "delta_a": ("MHz_over_2pi", "rad_per_s"),
        "delta_c": ("MHz_over_2pi", "rad_per_s"),
        "omega_drive": ("MHz_over_2pi", "rad_per_s"),
    },
    "geometry": {
        "free_spectral_range": ("Hz",),
        "t_ht": ("dimensionless",),
        "t_lt": ("dimensionless",),
        "losses": ("dimensionless",),
    },
    "detection": {
        "eta_ht": ("dimensionless",),
        "eta_c": ("dimensionless",),
        "eta_fs": ("dimensionless",),
        "jitter_sigma": ("ns", "ps", "s"),
        "tick": ("ps", "ns", "s"),
    },
}

_SECTION_TYPES = {"system": SystemParams, "geometry": CavityGeometry,
                  "detection": DetectionChain}


class UnitError(ValueError):
    pass


def parse_quantity(entry, allowed, where="value"):
    """Return the SI value of ``{"value": x, "unit": u}``; bare numbers are rejected."""
    if not isinstance(entry, dict) or set(entry) != {"value", "unit"}:
        raise UnitError(f"{where}: expected {{'value': ..., 'unit': ...}}, got {entry!r}")
    unit = entry["unit"]
    if unit not in allowed:
        raise UnitError(f"{where}: unit {unit!r} not allowed (use one of {allowed})")
    value = entry["value"]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise UnitError(f"{where}: value must be a number")
    return float(value) * _UNIT_SCALE[unit]


def quantity(value, unit):
    return {"value": value / _UNIT_SCALE[unit], "unit": unit}


def params_from_dict(doc):
    """Parse a parameter document into ``{"system": SystemParams, ...}``.

    Only the sections present in ``doc`` are returned.  Unknown sections or
    fields raise :class:`UnitError`.
    """
    out = {}
    for section, fields in doc.items():
        if section not in _FIELD_UNITS:
            raise UnitError(f"unknown section {section!r}")
        spec = _FIELD_UNITS[section]
        kwargs = {}
        for name, entry in fields.items():
            if name not in spec:
                raise UnitError(f"unknown field {section}.{name}")
            kwargs[name] = parse_quantity(entry, spec[name], f"{section}.{name}")
        out[section] = _SECTION_TYPES[section](**kwargs)
    return out


def params_to_dict(**objs):
    """Inverse of :func:`params_from_dict`, using the first allowed unit of each field."""
    doc = {}
    for section, obj in objs.items():
        spec = _FIELD_UNITS[section]
        doc[section] = {name: quantity(getattr(obj, name), units[0])
                        for name, units in spec.items()}
    return doc
