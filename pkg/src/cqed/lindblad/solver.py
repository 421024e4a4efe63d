"""Liouvillian construction, steady state and rate observables.

Superoperators act on column-stacked density matrices,
``vec(A rho B) = (B^T kron A) vec(rho)``.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .system import OpenSystem

log = logging.getLogger(__name__)

DENSE_LIMIT = 200  # Hilbert-space dimension up to which the dense LU path is used


class SteadyStateError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, d):
    return np.asarray(v).reshape(d, d, order="F")


def build_liouvillian(h, collapse_ops=(), *, sparse=None, herm_tol=1e-9):
    """Lindblad generator as a (d^2 x d^2) matrix.

    Dense ndarray for small systems, CSR matrix when ``sparse`` is true (the
    default above :data:`DENSE_LIMIT`).
    """
    h = np.asarray(h)
    d = h.shape[0]
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - h.conj().T).max() > herm_tol * scale:
        raise ValueError("Hamiltonian is not Hermitian")
    if sparse is None:
        sparse = d > DENSE_LIMIT
    eye = sp.identity(d, dtype=complex, format="csr")
    hs = sp.csr_matrix(h)
    liou = -1j * (sp.kron(eye, hs) - sp.kron(hs.T, eye))
    for c in collapse_ops:
        cs = sp.csr_matrix(c)
        cdc = (cs.conj().T @ cs)
        liou = liou + sp.kron(cs.conj(), cs) - 0.5 * sp.kron(eye, cdc) - 0.5 * sp.kron(cdc.T, eye)
    liou = liou.tocsr()
    return liou if sparse else liou.toarray()


def system_liouvillian(system: OpenSystem, sparse=None):
    return build_liouvillian(system.hamiltonian, system.collapse_ops, sparse=sparse)


def trace_residual(liou):
    """max |Tr(L(X))| over basis matrices X; zero for a trace-preserving generator."""
    n = liou.shape[0]
    d = int(round(np.sqrt(n)))
    tr = vec(np.eye(d))
    row = tr @ liou
    return float(np.abs(row).max())


def steady_state(liou, *, tol=1e-10, check=True):
    """Fixed point of ``liou`` with unit trace.

    The trace functional replaces one row of the generator and the linear
    system is solved directly (dense LU, or sparse LU for large systems).
    Raises :class:`SteadyStateError` when the fixed point is not unique or the
    residual exceeds ``tol * ||L||``.
    """
    n = liou.shape[0]
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise ValueError("Liouvillian must be d^2 x d^2")
    diag_idx = np.arange(d) * (d + 1)
    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    if sp.issparse(liou):
        m = liou.tolil(copy=True)
        m[0, :] = 0
        m[0, diag_idx] = 1.0
        m = m.tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                x = spla.spsolve(m, rhs)
            except spla.MatrixRankWarning as exc:
                raise SteadyStateError("degenerate steady state (singular system)") from exc
        norm_l = spla.norm(liou, 1)
    else:
        m = np.array(liou, dtype=complex, copy=True)
        m[0, :] = 0.0
        m[0, diag_idx] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            try:
                x = scipy.linalg.solve(m, rhs)
            except (scipy.linalg.LinAlgWarning, np.linalg.LinAlgError) as exc:
                raise SteadyStateError("degenerate steady state (singular system)") from exc
        norm_l = np.abs(liou).sum(axis=0).max()
    if not np.all(np.isfinite(x)):
        raise SteadyStateError("steady-state solve produced non-finite values")
    rho = unvec(x, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    residual = float(np.linalg.norm(liou @ vec(rho)))
    if residual > tol * norm_l * max(np.linalg.norm(vec(rho)), 1.0):
        raise SteadyStateError(f"steady-state residual {residual:.3e} too large", residual)
    if check:
        check_density_matrix(rho)
    log.debug("steady state: d=%d residual=%.3e", d, residual)
    return rho


def check_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-10, pos_tol=1e-8):
    """Raise :class:`SteadyStateError` unless ``rho`` is Hermitian, unit-trace and PSD."""
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise SteadyStateError(f"density matrix not Hermitian ({herm:.2e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise SteadyStateError(f"density matrix trace {tr}")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < -pos_tol:
        raise SteadyStateError(f"density matrix has negative eigenvalue {lo:.2e}")
    return True


def solve(system: OpenSystem, sparse=None, **kwargs):
    return steady_state(system_liouvillian(system, sparse=sparse), **kwargs)


def expect(rho, op):
    return np.trace(rho @ op)


def rates(rho, system: OpenSystem):
    """(R_fs, R_c): 2 gamma x excited population and 2 kappa <a^dag a>, photons/s."""
    r_fs = 2.0 * system.gamma * expect(rho, system.excited_projector).real
    r_c = 2.0 * system.kappa * expect(rho, system.photon_number).real
    return float(r_fs), float(r_c)


def drive_input_rate(rho, system: OpenSystem):
    """Rate at which the drive injects excitations, <i[H_drive, N]>.

    In steady state this balances R_fs + R_c.  For a two-level atom it equals
    -Omega Im<sigma>.
    """
    n_exc = system.excited_projector + system.photon_number
    h = system.drive_hamiltonian
    return float(np.trace(rho @ (1j * (h @ n_exc - n_exc @ h))).real)


def converged_rates(build, n_start=2, rtol=1e-3, n_limit=10):
    """Raise the Fock cutoff until both rates move by less than ``rtol``.

    ``build(n_max)`` must return an :class:`OpenSystem`.  Returns
    ``(rates, n_max, rho)``.
    """
    prev = None
    for n_max in range(n_start, n_limit + 1):
        system = build(n_max)
        rho = solve(system)
        now = rates(rho, system)
        if prev is not None:
            change = max(abs(a - b) / max(abs(b), 1e-300) for a, b in zip(now, prev))
            if change < rtol:
                return now, n_max, rho
        prev = now
    raise SteadyStateError(f"Fock truncation not converged up to n_max={n_limit}")


def intensity_correlation(system: OpenSystem, taus, channel="cavity", rho=None):
    """Normalized g2(tau) of one emission channel by the quantum regression theorem.

    g2(tau) = Tr[c^dag c e^{L tau}(c rho c^dag)] / Tr[c^dag c rho]^2 with c the
    channel's collapse operator and rho the steady state.  ``taus`` must be >= 0.
    """
    taus = np.asarray(taus, dtype=float)
    if np.any(taus < 0):
        raise ValueError("taus must be nonnegative")
    ops = [c for c, ch in zip(system.collapse_ops, system.channels) if ch == channel]
    if not ops:
        raise ValueError(f"no collapse operator for channel {channel!r}")
    liou = system_liouvillian(system, sparse=False)
    if rho is None:
        rho = steady_state(liou)
    d = system.dim
    n_op = sum(c.conj().T @ c for c in ops)
    mean = expect(rho, n_op).real
    num = np.zeros(taus.shape)
    for c in ops:
        start = vec(c @ rho @ c.conj().T)
        for i, t in np.ndenumerate(taus):
            num[i] += expect(unvec(scipy.linalg.expm(liou * t) @ start, d), n_op).real
    if mean <= 0:
        raise ValueError("channel carries no photons in the steady state")
    return num / mean ** 2
