"""Quantum-jump (Monte Carlo wave function) sampling of photon clicks.

Time is discretized on the detector tick grid.  Between jumps the state evolves
under the non-Hermitian ``H_eff = H - i/2 sum L^dag L``; the jump happens at the
first tick where the squared norm falls below a uniform random threshold.  The
search uses precomputed propagators for 2^k ticks: a galloping ascent with
doubling steps, then a binary descent, so jump times are exact to one tick
without any step-size tuning.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..params import TIME_TAG_RESOLUTION
from .system import OpenSystem

CHANNEL_CODES = {"cavity": 0, "free_space": 1}
CHANNEL_NAMES = {v: k for k, v in CHANNEL_CODES.items()}


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClickRecord:
    time: float  # s
    channel: str
    traj_id: int
    seed: int


@dataclass
class Trajectory:
    """Clicks of one trajectory as integer ticks plus channel codes."""

    ticks: np.ndarray  # uint64, nondecreasing
    channels: np.ndarray  # uint8, see CHANNEL_CODES
    traj_id: int
    seed: int
    tick: float = TIME_TAG_RESOLUTION
    duration: float = 0.0

    @property
    def times(self):
        return self.ticks.astype(float) * self.tick

    def stream(self, channel):
        return self.ticks[self.channels == CHANNEL_CODES[channel]]

    def count(self, channel):
        return int(np.count_nonzero(self.channels == CHANNEL_CODES[channel]))

    def records(self):
        for t, c in zip(self.ticks, self.channels):
            yield ClickRecord(float(t) * self.tick, CHANNEL_NAMES[int(c)], self.traj_id, self.seed)


def trajectory_rng(seed, traj_id):
    """Independent generator for trajectory ``traj_id`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(traj_id,)))


class JumpSampler:
    """Propagators and jump operators for one :class:`OpenSystem` on a tick grid."""

    def __init__(self, system: OpenSystem, tick=TIME_TAG_RESOLUTION, max_level=32):
        self.system = system
        self.tick = tick
        self.jumps = [np.asarray(c, dtype=complex) for c in system.collapse_ops]
        self.codes = np.array([CHANNEL_CODES[c] for c in system.channels], dtype=np.uint8)
        decay = sum(c.conj().T @ c for c in self.jumps)
        h_eff = system.hamiltonian - 0.5j * decay
        self.max_level = max_level
        self.props = [scipy.linalg.expm(-1j * h_eff * tick * 2 ** k) for k in range(max_level + 1)]

    def run(self, psi0, n_ticks, seed, traj_ids):
        """Evolve a batch of trajectories for ``n_ticks`` ticks; returns a list of Trajectory."""
        traj_ids = list(traj_ids)
        b = len(traj_ids)
        rngs = [trajectory_rng(seed, i) for i in traj_ids]
        psi = np.repeat(np.asarray(psi0, dtype=complex)[:, None], b, axis=1)
        psi /= np.linalg.norm(psi, axis=0)
        t = np.zeros(b, dtype=np.int64)
        level = np.zeros(b, dtype=np.int64)
        ascending = np.ones(b, dtype=bool)
        thresh = np.array([g.random() for g in rngs])
        live = np.ones(b, dtype=bool)
        out_t = [[] for _ in range(b)]
        out_c = [[] for _ in range(b)]
        top = self.max_level

        while live.any():
            jumping = np.zeros(b, dtype=bool)
            for k in np.unique(level[live]):
                idx = np.flatnonzero(live & (level == k))
                cand = self.props[k] @ psi[:, idx]
                ok = np.einsum("ij,ij->j", cand.conj(), cand).real >= thresh[idx]
                acc = idx[ok]
                psi[:, acc] = cand[:, ok]
                t[acc] += 1 << int(k)
                asc = ascending[idx]
                # ascending and accepted: double the step; otherwise descend
                grow = idx[asc & ok]
                level[grow] = np.minimum(level[grow] + 1, top)
                drop = idx[~(asc & ok)]
                ascending[drop] = False
                level[drop] -= 1
            # level < 0: the next tick crosses the threshold
            jumping = live & (level < 0)
            overrun = live & (t >= n_ticks)
            live &= ~overrun
            jumping &= ~overrun
            for j in np.flatnonzero(jumping):
                t[j] += 1
                if t[j] > n_ticks:
                    live[j] = False
                    continue
                v = self.props[0] @ psi[:, j]
                weights = np.array([np.vdot(L @ v, L @ v).real for L in self.jumps])
                total = weights.sum()
                if not total > 0 or not np.isfinite(total):
                    raise TrajectoryError(
                        f"step-size underflow: no jump weight at tick {t[j]} (trajectory {traj_ids[j]})")
                g = rngs[j]
                ch = int(np.searchsorted(np.cumsum(weights), g.random() * total, side="right"))
                ch = min(ch, len(self.jumps) - 1)
                v = self.jumps[ch] @ v
                nv = np.linalg.norm(v)
                if nv < 1e-150:
                    raise TrajectoryError("step-size underflow: state norm vanished after jump")
                psi[:, j] = v / nv
                out_t[j].append(t[j])
                out_c[j].append(self.codes[ch])
                thresh[j] = g.random()
                level[j] = 0
                ascending[j] = True
        return [Trajectory(np.asarray(out_t[j], dtype=np.uint64), np.asarray(out_c[j], dtype=np.uint8),
                           traj_ids[j], seed, self.tick, n_ticks * self.tick) for j in range(b)]


def mcwf_trajectories(system: OpenSystem, duration, n_traj, seed, *, psi0=None,
                      tick=TIME_TAG_RESOLUTION, batch=256, workers=1, first_id=0):
    """Sample ``n_traj`` independent click records of length ``duration`` seconds.

    Each trajectory draws from its own generator derived from ``(seed, traj_id)``,
    so the output does not depend on ``batch`` or ``workers``.
    """
    if duration <= 0 or n_traj < 0:
        raise ValueError("duration must be positive and n_traj nonnegative")
    sampler = JumpSampler(system, tick)
    if psi0 is None:
        psi0 = system.ground_state()
    n_ticks = int(round(duration / tick))
    ids = list(range(first_id, first_id + n_traj))
    chunks = [ids[i:i + batch] for i in range(0, len(ids), batch)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: sampler.run(psi0, n_ticks, seed, c), chunks))
    else:
        parts = [sampler.run(psi0, n_ticks, seed, c) for c in chunks]
    return [tr for part in parts for tr in part]


def click_rates(trajectories, skip=0.0):
    """Mean click rates (1/s) per channel, ignoring the first ``skip`` seconds of each trajectory."""
    counts = {name: 0 for name in CHANNEL_CODES}
    span = 0.0
    for tr in trajectories:
        keep = tr.times >= skip
        for name, code in CHANNEL_CODES.items():
            counts[name] += int(np.count_nonzero(keep & (tr.channels == code)))
        span += tr.duration - skip
    return {name: c / span for name, c in counts.items()}, counts
