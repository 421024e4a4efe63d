"""Hamiltonian and jump operators for a multilevel atom in a single cavity mode.

Basis ordering is ``atom (ground levels, then excited) x Fock(0..n_max)``;
everything is written in the frame rotating at the probe frequency, with
angular frequencies in rad/s.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from ..params import SystemParams
from .levels import POLARIZATIONS, SIGMA_PLUS, LevelScheme, two_level_scheme


@dataclass(frozen=True)
class DriveField:
    """Classical probe of Rabi frequency ``omega`` on a unit-amplitude transition.

    ``polarization`` maps q in {-1, 0, +1} to the complex spherical component
    of the local field; components must have unit total power.
    """

    omega: float
    detuning: float = 0.0  # probe - atom, rad/s
    polarization: dict = field(default_factory=lambda: {SIGMA_PLUS: 1.0})

    def __post_init__(self):
        if set(self.polarization) - set(POLARIZATIONS):
            raise ValueError("polarization keys must be -1, 0 or +1")
        power = sum(abs(w) ** 2 for w in self.polarization.values())
        if abs(power - 1.0) > 1e-9:
            raise ValueError(f"polarization weights must have unit power, got {power}")

    @classmethod
    def lin_perp_lin(cls, omega, detuning, phi):
        """Local polarization of a lin-perp-lin standing wave at phase ``phi``.

        The field is (z + e^{i phi} y)/sqrt(2) with z the quantization (cavity)
        axis, so it drives pi and both sigma components.
        """
        side = 0.5j * cmath.exp(1j * phi)
        return cls(omega, detuning, {-1: side, 0: 1 / math.sqrt(2), 1: side})


@dataclass(frozen=True)
class CavityModeSpec:
    n_max: int = 2
    polarization: int = SIGMA_PLUS
    g_max: float = 0.0  # rad/s, coupling on the unit-amplitude transition

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.g_max < 0:
            raise ValueError("g_max must be >= 0")
        if self.polarization not in POLARIZATIONS:
            raise ValueError("polarization must be -1, 0 or +1")


@dataclass
class OpenSystem:
    """Everything needed by the steady-state solver and the trajectory sampler."""

    hamiltonian: np.ndarray
    drive_hamiltonian: np.ndarray
    collapse_ops: list
    channels: list  # "cavity" or "free_space", one per collapse operator
    excited_projector: np.ndarray
    photon_number: np.ndarray
    lowering: np.ndarray  # atomic lowering on the cavity polarization (sigma for two levels)
    gamma: float
    kappa: float
    n_atom: int
    n_fock: int
    scheme: LevelScheme | None = None

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    def ground_state(self, level=None):
        """Pure state with the atom in ground ``level`` (default: last, i.e. highest m) and no photons."""
        if level is None:
            level = (self.scheme.n_ground - 1) if self.scheme is not None else 0
        psi = np.zeros(self.dim, dtype=complex)
        psi[level * self.n_fock] = 1.0
        return psi


def _atom_ops(scheme: LevelScheme, q):
    """sum_c amplitude |g><e| for couplings of polarization q (atomic lowering)."""
    op = np.zeros((scheme.dim, scheme.dim))
    for c in scheme.couplings_with(q):
        op[c.ground, scheme.excited_index(c.excited)] += c.amplitude
    return op


def _fock(n_max):
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    return a, np.eye(n_max + 1)


def build_hamiltonian(scheme: LevelScheme, drives, cavity: CavityModeSpec, delta_c,
                      delta_a=None):
    """Hermitian Hamiltonian (rad/s) in the probe frame.

    ``drives`` is a :class:`DriveField` or a sequence of them sharing one
    detuning (all drives are at the probe frequency).  ``delta_a`` overrides
    the drives' detuning, which is required when there is no drive.
    Returns ``(H, H_drive)``.
    """
    if isinstance(drives, DriveField):
        drives = [drives]
    drives = list(drives)
    if delta_a is None:
        if not drives:
            raise ValueError("delta_a is required without a drive")
        detunings = {d.detuning for d in drives}
        if len(detunings) != 1:
            raise ValueError("all drives must share the probe frequency")
        delta_a = detunings.pop()

    if cavity.g_max > 0 and not scheme.couplings_with(cavity.polarization):
        raise ValueError(f"cavity polarization q={cavity.polarization} couples no transition")

    a, id_f = _fock(cavity.n_max)
    id_a = np.eye(scheme.dim)
    h_atom = np.zeros((scheme.dim, scheme.dim))
    for i, lvl in enumerate(scheme.ground):
        h_atom[i, i] = lvl.energy
    for e, lvl in enumerate(scheme.excited):
        k = scheme.excited_index(e)
        h_atom[k, k] = lvl.energy + lvl.stark_shift - delta_a

    lower_c = _atom_ops(scheme, cavity.polarization)
    h = np.kron(h_atom, id_f) - delta_c * np.kron(id_a, a.T @ a)
    h = h + cavity.g_max * (np.kron(lower_c.T, a) + np.kron(lower_c, a.T))

    h_drive = np.zeros((scheme.dim, scheme.dim), dtype=complex)
    for d in drives:
        for q, w in d.polarization.items():
            raise_q = _atom_ops(scheme, q).T
            h_drive += 0.5 * d.omega * w * raise_q
    h_drive = h_drive + h_drive.conj().T
    h_drive = np.kron(h_drive, id_f)
    return h + h_drive, h_drive


def build_system(scheme: LevelScheme, drives, cavity: CavityModeSpec, *, gamma, kappa,
                 delta_c, delta_a=None) -> OpenSystem:
    """Hamiltonian plus the cavity out-coupling and per-polarization atomic decay channels."""
    h, h_drive = build_hamiltonian(scheme, drives, cavity, delta_c, delta_a)
    a, id_f = _fock(cavity.n_max)
    id_a = np.eye(scheme.dim)
    collapse = [math.sqrt(2 * kappa) * np.kron(id_a, a)]
    channels = ["cavity"]
    for q in POLARIZATIONS:
        lower_q = _atom_ops(scheme, q)
        if np.any(lower_q):
            collapse.append(math.sqrt(2 * gamma) * np.kron(lower_q, id_f))
            channels.append("free_space")
    proj_e = np.zeros((scheme.dim, scheme.dim))
    for e in range(scheme.n_excited):
        proj_e[scheme.excited_index(e), scheme.excited_index(e)] = 1.0
    return OpenSystem(
        hamiltonian=h.astype(complex), drive_hamiltonian=h_drive, collapse_ops=collapse,
        channels=channels, excited_projector=np.kron(proj_e, id_f),
        photon_number=np.kron(id_a, a.T @ a),
        lowering=np.kron(_atom_ops(scheme, cavity.polarization), id_f),
        gamma=gamma, kappa=kappa, n_atom=scheme.dim, n_fock=cavity.n_max + 1, scheme=scheme)


def two_level_system(p: SystemParams, n_max=2) -> OpenSystem:
    """The analytic model's two-level atom, for direct comparison with it."""
    scheme = two_level_scheme()
    drive = DriveField(p.omega_drive, p.delta_a)
    cavity = CavityModeSpec(n_max=n_max, polarization=SIGMA_PLUS, g_max=p.g)
    return build_system(scheme, drive, cavity, gamma=p.gamma, kappa=p.kappa,
                        delta_c=p.delta_c, delta_a=p.delta_a)
