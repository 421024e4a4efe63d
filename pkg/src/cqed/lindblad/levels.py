"""Atomic level schemes with Clebsch-Gordan dipole amplitudes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import factorial, sqrt

SIGMA_MINUS, PI, SIGMA_PLUS = -1, 0, 1
POLARIZATIONS = (SIGMA_MINUS, PI, SIGMA_PLUS)


def clebsch_gordan(j1, m1, j2, m2, j, m):
    """<j1 m1; j2 m2 | j m> in the Condon-Shortley convention (Racah formula).

    Arguments may be integers, half-integers as floats, or Fractions.
    """
    j1, m1, j2, m2, j, m = (Fraction(x).limit_denominator(2) for x in (j1, m1, j2, m2, j, m))
    if m1 + m2 != m:
        return 0.0
    if not (abs(j1 - j2) <= j <= j1 + j2) or any(abs(mm) > jj for mm, jj in
                                                 ((m1, j1), (m2, j2), (m, j))):
        return 0.0
    if (j1 + j2 + j).denominator != 1:
        return 0.0

    def f(x):
        if x.denominator != 1 or x < 0:
            raise ValueError("non-integer factorial argument")
        return factorial(int(x))

    pref = Fraction((2 * j + 1) * f(j + j1 - j2) * f(j - j1 + j2) * f(j1 + j2 - j),
                    f(j1 + j2 + j + 1))
    pref *= Fraction(f(j + m) * f(j - m) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2))
    kmin = max(0, j2 - j - m1, j1 - j + m2)
    kmax = min(j1 + j2 - j, j1 - m1, j2 + m2)
    total = Fraction(0)
    for k in range(int(kmin), int(kmax) + 1):
        denom = (f(Fraction(k)) * f(j1 + j2 - j - k) * f(j1 - m1 - k) * f(j2 + m2 - k)
                 * f(j - j2 + m1 + k) * f(j - j1 - m2 + k))
        total += Fraction((-1) ** k, denom)
    sign = 1.0 if total >= 0 else -1.0
    return sign * sqrt(float(pref * total * total))


@dataclass(frozen=True)
class Level:
    label: str
    m: float
    energy: float = 0.0  # rad/s, relative to the manifold reference
    stark_shift: float = 0.0  # rad/s, excited states only


@dataclass(frozen=True)
class DipoleCoupling:
    ground: int
    excited: int
    q: int  # polarization: excited.m - ground.m
    amplitude: float


@dataclass(frozen=True)
class LevelScheme:
    """Ground and excited manifolds joined by dipole couplings.

    Amplitudes are normalized so that the strongest (cycling) coupling has
    magnitude 1 and the squared amplitudes leaving each excited level sum to 1.
    """

    ground: tuple
    excited: tuple
    couplings: tuple
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ng, ne = len(self.ground), len(self.excited)
        for c in self.couplings:
            if not (0 <= c.ground < ng and 0 <= c.excited < ne):
                raise ValueError(f"coupling {c} refers to a missing level")
            if c.q not in POLARIZATIONS:
                raise ValueError(f"bad polarization {c.q}")
        if self.couplings:
            top = max(abs(c.amplitude) for c in self.couplings)
            if abs(top - 1.0) > 1e-12:
                raise ValueError("strongest coupling must have amplitude 1")
        for e, total in enumerate(self.branching_sums()):
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"branching from excited level {e} sums to {total}")

    @property
    def n_ground(self):
        return len(self.ground)

    @property
    def n_excited(self):
        return len(self.excited)

    @property
    def dim(self):
        return self.n_ground + self.n_excited

    def excited_index(self, e):
        """Index of excited level ``e`` in the atomic basis (ground levels first)."""
        return self.n_ground + e

    def branching_sums(self):
        sums = [0.0] * self.n_excited
        for c in self.couplings:
            sums[c.excited] += c.amplitude ** 2
        return sums

    def couplings_with(self, q):
        return [c for c in self.couplings if c.q == q]

    def to_json(self):
        return json.dumps({"name": self.name,
                           "ground": [asdict(x) for x in self.ground],
                           "excited": [asdict(x) for x in self.excited],
                           "couplings": [asdict(c) for c in self.couplings]}, indent=1)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        return cls(ground=tuple(Level(**x) for x in doc["ground"]),
                   excited=tuple(Level(**x) for x in doc["excited"]),
                   couplings=tuple(DipoleCoupling(**c) for c in doc["couplings"]),
                   name=doc.get("name", ""))


def closed_hyperfine_scheme(f_ground, name=""):
    """F -> F' = F + 1 manifold, the only decay of F' being back to F."""
    f_exc = f_ground + 1
    ground = tuple(Level(f"F={f_ground},m={m}", m) for m in _mrange(f_ground))
    excited = tuple(Level(f"F'={f_exc},m={m}", m) for m in _mrange(f_exc))
    couplings = []
    for gi, gl in enumerate(ground):
        for q in POLARIZATIONS:
            me = gl.m + q
            for ei, el in enumerate(excited):
                if el.m == me:
                    amp = clebsch_gordan(f_ground, gl.m, 1, q, f_exc, me)
                    if amp != 0.0:
                        couplings.append(DipoleCoupling(gi, ei, q, amp))
    return LevelScheme(ground, excited, tuple(couplings),
                       name=name or f"F={f_ground}->F'={f_exc}")


def _mrange(f):
    return [m - f for m in range(int(2 * f) + 1)]


def rb87_d2_scheme():
    """Rb87 D2 line |F=2> -> |F'=3> (5 + 7 Zeeman sublevels)."""
    return closed_hyperfine_scheme(2, name="Rb87 D2 F=2->F'=3")


def two_level_scheme():
    """The |2,2> <-> |3',3'> cycling transition alone (sigma+)."""
    return LevelScheme(ground=(Level("g", 2),), excited=(Level("e", 3),),
                       couplings=(DipoleCoupling(0, 0, SIGMA_PLUS, 1.0),), name="two-level")


def cycling_coupling(scheme):
    """The coupling of unit amplitude (|2,2> <-> |3',3'> for Rb87)."""
    return max(scheme.couplings, key=lambda c: (abs(c.amplitude), c.q, c.ground))
