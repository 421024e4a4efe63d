"""Binary time tags (CQTT), table writers, run manifests and detection-chain scaling.

CQTT layout, little-endian: header ``<4sHdHq`` = magic b"CQTT", version,
tick in ps, channel count, start epoch (ns); then one 9-byte record per click,
an unsigned 64-bit tick followed by an 8-bit channel.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import struct
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .params import DetectionChain
from .photostat import ClickStream

MAGIC = b"CQTT"
VERSION = 1
HEADER = struct.Struct("<4sHdHq")
RECORD = np.dtype([("tick", "<u8"), ("channel", "u1")])  # packed, 9 bytes


class TimeTagError(ValueError):
    pass


@dataclass
class TimeTagFile:
    ticks: np.ndarray  # uint64
    channels: np.ndarray  # uint8
    tick_ps: float = 81.0
    n_channels: int = 0
    start_epoch: int = 0
    version: int = VERSION

    def __post_init__(self):
        self.ticks = np.asarray(self.ticks, dtype=np.uint64)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if self.ticks.shape != self.channels.shape or self.ticks.ndim != 1:
            raise TimeTagError("ticks and channels must be 1-d arrays of equal length")
        if not self.tick_ps > 0:
            raise TimeTagError("tick_ps must be > 0")
        if not self.n_channels:
            self.n_channels = int(self.channels.max()) + 1 if self.channels.size else 0
        for ch in np.unique(self.channels):
            t = self.ticks[self.channels == ch]
            if np.any(t[1:] < t[:-1]):
                raise TimeTagError(f"ticks of channel {int(ch)} are not nondecreasing")

    @property
    def tick(self):
        return self.tick_ps * 1e-12

    def stream(self, channel, start=None, stop=None) -> ClickStream:
        return ClickStream(self.ticks[self.channels == channel], self.tick, int(channel),
                           0 if start is None else start,
                           (int(self.ticks.max()) + 1 if self.ticks.size else 0) if stop is None else stop)

    @classmethod
    def from_streams(cls, streams, start_epoch=0):
        """Merge click streams (channel = detector id) into time order."""
        if not streams:
            raise TimeTagError("no streams")
        tick = streams[0].tick
        if any(abs(s.tick - tick) > 1e-18 for s in streams):
            raise TimeTagError("streams have different ticks")
        ticks = np.concatenate([s.ticks for s in streams])
        chans = np.concatenate([np.full(len(s), s.detector, dtype=np.uint8) for s in streams])
        order = np.lexsort((chans, ticks))
        return cls(ticks[order], chans[order], tick * 1e12, start_epoch=start_epoch)

    def to_bytes(self):
        rec = np.empty(self.ticks.size, dtype=RECORD)
        rec["tick"] = self.ticks
        rec["channel"] = self.channels
        head = HEADER.pack(MAGIC, self.version, float(self.tick_ps), int(self.n_channels),
                           int(self.start_epoch))
        return head + rec.tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < HEADER.size:
            raise TimeTagError("file shorter than the header")
        magic, version, tick_ps, n_ch, epoch = HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise TimeTagError(f"bad magic {magic!r}")
        if version != VERSION:
            raise TimeTagError(f"unsupported version {version}")
        body = memoryview(blob)[HEADER.size:]
        if len(body) % RECORD.itemsize:
            raise TimeTagError("truncated record")
        rec = np.frombuffer(body, dtype=RECORD)
        return cls(rec["tick"].copy(), rec["channel"].copy(), tick_ps, n_ch, epoch, version)


def write_timetags(path, tags: TimeTagFile):
    Path(path).write_bytes(tags.to_bytes())


def read_timetags(path) -> TimeTagFile:
    return TimeTagFile.from_bytes(Path(path).read_bytes())


def apply_detection_chain(x, chain: DetectionChain, seed=None, channel="cavity"):
    """Detected version of a rate (scaled) or a click stream (thinned, then jittered).

    ``channel`` picks the efficiency: ``eta_c`` for the cavity, ``eta_fs`` for
    free space.  Streams need a seed; jitter is a Gaussian perturbation of each
    timestamp followed by re-sorting.
    """
    eta = {"cavity": chain.eta_c, "free_space": chain.eta_fs}[channel]
    if not isinstance(x, ClickStream):
        return np.asarray(x, dtype=float) * eta if np.ndim(x) else float(x) * eta
    if seed is None:
        raise ValueError("thinning a stream needs a seed")
    rng = np.random.default_rng(seed)
    t = x.ticks[rng.random(len(x)) < eta].astype(np.int64)
    if chain.jitter_sigma > 0 and t.size:
        t = t + np.rint(rng.normal(0.0, chain.jitter_sigma / x.tick, t.size)).astype(np.int64)
        t = np.sort(np.clip(t, 0, None))
    return ClickStream(t.astype(np.uint64), x.tick, x.detector, x.start, x.stop)


# ----------------------------------------------------------------- table output


def write_csv(path, columns: dict, header_comment=None):
    """Columns of equal length to CSV; floats written with repr for exact round trips."""
    names = list(columns)
    cols = [np.asarray(columns[n]).ravel() for n in names]
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return {name: np.array([float(r[i]) for r in rows[1:]]) for i, name in enumerate(rows[0])}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command, args: dict, inputs=(), seed=None, wall_time=None, outputs=None):
    """manifest.json: command, arguments, input digests, seed, versions, wall time, output digests."""
    import scipy

    from . import __version__

    out_dir = Path(out_dir)
    if outputs is None:
        outputs = sorted(p.name for p in out_dir.iterdir() if p.is_file() and p.name != "manifest.json")
    doc = {
        "command": command,
        "args": args,
        "seed": seed,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {name: file_digest(out_dir / name) for name in outputs},
        "versions": {"cqed": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": sys.version.split()[0], "platform": platform.platform()},
        "wall_time_s": wall_time,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "pid": os.getpid(),
    }
    write_json(out_dir / "manifest.json", doc)
    return doc
