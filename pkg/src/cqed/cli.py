"""Command-line entry point: ``cqed <subcommand> [options]``.

Every subcommand writes its tables (CSV) and results (JSON) into ``--out``
together with ``manifest.json``.  Failures print one JSON object to stderr
and exit nonzero.  Grids are given as ``start:stop:count`` in MHz/2pi.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .params import (DetectionChain, SystemParams, UnitError, mhz, params_from_dict, parse_quantity,
                     to_mhz, _FIELD_UNITS)

log = logging.getLogger("cqed")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_OTHER = 1

DEFAULT_SYSTEM = SystemParams.from_mhz(g=49.94, kappa=58.0, gamma=3.03, omega_drive=0.1)


@dataclass
class RunConfig:
    command: str
    out: str
    params: str | None = None
    inputs: list = field(default_factory=list)
    seed: int | None = None
    threads: int = 1
    overrides: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)


def bundled(name):
    """Path of a file shipped in ``cqed/data``."""
    return Path(str(resources.files("cqed") / "data" / name))


def parse_grid(text, unit_scale=1.0):
    """``start:stop:count`` or a single value -> array (times ``unit_scale``)."""
    parts = str(text).split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])]) * unit_scale
        if len(parts) == 3:
            return np.linspace(float(parts[0]), float(parts[1]), int(parts[2])) * unit_scale
    except ValueError:
        pass
    raise UnitError(f"bad grid {text!r}; expected start:stop:count")


def parse_override(text):
    """``section.field=value:unit`` -> (section, field, SI value)."""
    try:
        key, rhs = text.split("=", 1)
        section, name = key.split(".", 1)
        value, unit = rhs.rsplit(":", 1)
        value = float(value)
    except ValueError:
        raise UnitError(f"bad override {text!r}; expected section.field=value:unit") from None
    allowed = _FIELD_UNITS.get(section, {}).get(name)
    if allowed is None:
        raise UnitError(f"unknown override key {key!r}")
    return section, name, parse_quantity({"value": value, "unit": unit}, allowed, key)


def load_params(cfg: RunConfig):
    """(SystemParams, DetectionChain) from defaults, the params file and overrides."""
    doc = {}
    if cfg.params:
        with open(cfg.params) as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise UnitError("params file must hold a JSON object")
    parsed = params_from_dict(doc)
    system = parsed.get("system", DEFAULT_SYSTEM)
    chain = parsed.get("detection", DetectionChain())
    sys_over = {n: v for (s, n), v in cfg.overrides.items() if s == "system"}
    det_over = {n: v for (s, n), v in cfg.overrides.items() if s == "detection"}
    if sys_over:
        system = system.with_(**sys_over)
    if det_over:
        chain = DetectionChain(**{**asdict(chain), **det_over})
    return system, chain


def ensure_seed(cfg: RunConfig):
    if cfg.seed is None:
        cfg.seed = int(np.random.SeedSequence().entropy % (1 << 63))
        log.info("no --seed given, using %d", cfg.seed)
    return cfg.seed


# ------------------------------------------------------------------ subcommands


def cmd_spectrum(cfg: RunConfig, out: Path):
    from . import steady_state as ss

    p, _ = load_params(cfg)
    o = cfg.options
    da = parse_grid(o["delta_a"] or "-150:150:121", mhz(1.0))
    offsets = parse_grid(o["delta_c"] or "-150:150:121", mhz(1.0))
    scan = ss.scan_2d(p, da, offsets, o["observable"], cavity_axis_kind="cavity_offset",
                      workers=cfg.threads)
    (out / "spectrum.csv").write_text(scan.to_csv())
    lam = ss.dressed_energies(p, offsets)
    from .io import write_csv, write_json

    # probe detuning from the atom of each dressed band
    write_csv(out / "dressed.csv", {"cavity_offset_MHz": to_mhz(offsets),
                                    "lower_MHz": to_mhz(lam[:, 0].real),
                                    "upper_MHz": to_mhz(lam[:, 1].real)})
    peaks = da[np.nanargmax(scan.values, axis=0)]
    write_csv(out / "peaks.csv", {"cavity_offset_MHz": to_mhz(offsets), "peak_delta_a_MHz": to_mhz(peaks)})
    a, c, v = scan.argmax()
    summary = {"observable": scan.observable, "max": v, "max_at_MHz": [to_mhz(a), to_mhz(c)],
               "params_MHz": p.as_mhz()}
    write_json(out / "summary.json", summary)
    return summary


def cmd_backaction(cfg: RunConfig, out: Path):
    from . import steady_state as ss
    from .ensemble import CouplingDistribution, backaction_reference, convolved_rates, coupling_for_cooperativity
    from .io import write_csv, write_json

    o = cfg.options
    dist, p = backaction_reference()
    if cfg.params or cfg.overrides:
        p, _ = load_params(cfg)
        dist = CouplingDistribution(p.g, dist.sigma, dist.n_nodes)
    if o["cooperativity"] is not None:
        g = coupling_for_cooperativity(o["cooperativity"], p.kappa, p.gamma)
        p = p.with_(g=g)
        dist = CouplingDistribution(g, dist.sigma, dist.n_nodes)
    if o["sigma_g"] is not None:
        dist = CouplingDistribution(dist.mean, mhz(o["sigma_g"]), dist.n_nodes)
    if o["delta_a"] is not None:
        p = p.with_(delta_a=float(parse_grid(o["delta_a"], mhz(1.0))[0]))
    dc = parse_grid(o["delta_c"] or "-200:100:601", mhz(1.0))
    r_fs, r_c = convolved_rates(dist, p, p.delta_a, dc)
    r0 = ss.bare_rate(p)
    write_csv(out / "backaction.csv", {"delta_c_MHz": to_mhz(dc), "r_fs_over_r0": r_fs / r0,
                                       "r_c_over_r0": r_c / r0})
    i = int(np.argmax(r_c))
    summary = {"peak_r_c_over_r0": float(r_c[i] / r0), "peak_delta_c_MHz": float(to_mhz(dc[i])),
               "delta_a_MHz": to_mhz(p.delta_a), "g_mean_MHz": to_mhz(dist.mean),
               "sigma_g_MHz": to_mhz(dist.sigma), "n_nodes": dist.n_nodes, "params_MHz": p.as_mhz()}
    write_json(out / "summary.json", summary)
    return summary


def cmd_me_solve(cfg: RunConfig, out: Path):
    from . import steady_state as ss
    from .io import write_csv, write_json
    from .lindblad import rates, solve, two_level_system

    p, _ = load_params(cfg)
    o = cfg.options
    da = parse_grid(o["delta_a"] or "0", mhz(1.0))
    dc = parse_grid(o["delta_c"] or "-150:150:61", mhz(1.0))
    rows = {k: [] for k in ("delta_a_MHz", "delta_c_MHz", "r_fs", "r_c", "r_fs_analytic", "r_c_analytic")}
    for a in da:
        for c in dc:
            q = p.with_(delta_a=float(a), delta_c=float(c))
            system = two_level_system(q, n_max=o["n_max"])
            r_fs, r_c = rates(solve(system), system)
            rows["delta_a_MHz"].append(to_mhz(a))
            rows["delta_c_MHz"].append(to_mhz(c))
            rows["r_fs"].append(r_fs)
            rows["r_c"].append(r_c)
            rows["r_fs_analytic"].append(ss.rate_free_space(q))
            rows["r_c_analytic"].append(ss.rate_cavity(q))
    write_csv(out / "me_rates.csv", rows)
    num = np.array(rows["r_c"]) + np.array(rows["r_fs"])
    ana = np.array(rows["r_c_analytic"]) + np.array(rows["r_fs_analytic"])
    summary = {"points": len(num), "max_rel_dev_total_rate": float(np.max(np.abs(num - ana) / ana)),
               "n_max": o["n_max"], "params_MHz": p.as_mhz()}
    write_json(out / "summary.json", summary)
    return summary


def cmd_traj(cfg: RunConfig, out: Path):
    from .io import TimeTagFile, apply_detection_chain, write_json, write_timetags
    from .lindblad import CHANNEL_CODES, click_rates, mcwf_trajectories, two_level_system
    from .photostat import ClickStream

    p, chain = load_params(cfg)
    seed = ensure_seed(cfg)
    o = cfg.options
    system = two_level_system(p, n_max=o["n_max"])
    duration = o["duration"] * 1e-6
    trs = mcwf_trajectories(system, duration, o["n_traj"], seed, tick=chain.tick, workers=cfg.threads)
    r, counts = click_rates(trs)
    span = int(round(duration / chain.tick))
    # trajectories laid end to end on one time axis
    streams = []
    for name, code in CHANNEL_CODES.items():
        t = np.concatenate([tr.stream(name).astype(np.int64) + i * span for i, tr in enumerate(trs)])
        s = ClickStream(np.sort(t).astype(np.uint64), chain.tick, code, 0, span * len(trs))
        if o["detect"]:
            s = apply_detection_chain(s, chain, seed=[seed, code, 1], channel=name)
        streams.append(s)
    tags = TimeTagFile.from_streams(streams)
    tags.n_channels = len(CHANNEL_CODES)
    write_timetags(out / "clicks.cqtt", tags)
    summary = {"rates_per_s": r, "counts": counts, "n_traj": o["n_traj"], "duration_us": o["duration"],
               "detected": bool(o["detect"]), "written": {n: int(np.count_nonzero(tags.channels == c))
                                                         for n, c in CHANNEL_CODES.items()},
               "channels": CHANNEL_CODES, "params_MHz": p.as_mhz()}
    write_json(out / "summary.json", summary)
    return summary


def cmd_g2(cfg: RunConfig, out: Path):
    from .io import read_timetags, write_csv, write_json
    from .photostat import confidence_band, fit_g2, fit_params, g2_histogram, simulate_hbt_split

    o = cfg.options
    path = cfg.inputs[0] if cfg.inputs else bundled("g2_tags.cqtt")
    tags = read_timetags(path)
    chans = [int(c) for c in o["channels"].split(",")]
    stop = int(tags.ticks.max()) + 1
    if len(chans) == 1:
        seed = ensure_seed(cfg)
        s1, s2 = simulate_hbt_split(tags.stream(chans[0], 0, stop), seed)
    else:
        s1, s2 = (tags.stream(c, 0, stop) for c in chans[:2])
    hist = g2_histogram(s1, s2, o["bins"] * 1e-9, o["tau_max"] * 1e-9, workers=cfg.threads)
    hist.to_csv(out / "g2_histogram.csv")
    jitter = o["jitter"] * 1e-9
    res = fit_g2(hist, jitter)
    (out / "g2_fit.json").write_text(res.to_json())
    tau = np.linspace(-o["tau_max"], o["tau_max"], 801) * 1e-9
    y, lo, hi = confidence_band(res, tau)
    write_csv(out / "g2_band.csv", {"tau_s": tau, "g2": y, "lower": lo, "upper": hi})
    prm = fit_params(res)
    summary = {"clicks": [len(s1), len(s2)], "g2_zero_histogram": hist.at_zero(),
               "g2_zero_fit": float(y[np.argmin(np.abs(tau))]), "recovery_time_ns": prm.recovery_time * 1e9,
               "b": prm.b, "tau_b_ns": prm.tau_b * 1e9, "chi2_red": res.chi2_red,
               "degenerate": res.degenerate, "input": str(path)}
    write_json(out / "summary.json", summary)
    return summary


def cmd_fit(cfg: RunConfig, out: Path):
    from .fitters import bootstrap_errors, fit_lorentzian, fit_stretched_exponential
    from .fitters import lorentzian_model, stretched_exponential_model
    from .io import read_csv, write_json

    o = cfg.options
    if not cfg.inputs:
        raise UnitError("fit needs --input <csv with x,y[,sigma] columns>")
    data = read_csv(cfg.inputs[0])
    for col in ("x", "y"):
        if col not in data:
            raise UnitError(f"input lacks column {col!r}")
    x, y, s = data["x"], data["y"], data.get("sigma")
    if o["model"] == "lorentzian":
        res = fit_lorentzian(x, y, s, with_offset=o["offset"])
        model = lorentzian_model(o["offset"])
    else:
        res = fit_stretched_exponential(x, y, s)
        model = stretched_exponential_model()
    if o["bootstrap"]:
        seed = ensure_seed(cfg)
        bootstrap_errors(model, x, y, s, o["bootstrap"], seed, fit=res, workers=cfg.threads)
    (out / "fit.json").write_text(res.to_json())
    summary = {"model": o["model"], "params": res.params, "errors": dict(zip(res.param_names, res.errors.tolist())),
               "chi2_red": res.chi2_red, "converged": res.converged}
    write_json(out / "summary.json", summary)
    return summary


def cmd_finesse(cfg: RunConfig, out: Path):
    from .fitters import DAY, fit_finesse_decay
    from .io import read_csv, write_json

    o = cfg.options
    law = o["law"]
    path = cfg.inputs[0] if cfg.inputs else bundled(f"finesse_{law}.csv")
    data = read_csv(path)
    t_tot = o["t_total"] * 1e-6
    res = fit_finesse_decay(data["t_days"], data["finesse"], law, t_tot, data.get("sigma"))
    (out / "finesse_fit.json").write_text(res.to_json())
    tau_name = "tau1" if law == "exponential" else "tau2"
    summary = {"law": law, tau_name + "_days": res[tau_name], tau_name + "_err_days": res.error(tau_name),
               "l0": res["l0"], "delta_l": res["delta_l"], "chi2_red": res.chi2_red,
               "t_total": t_tot, "input": str(path), "tau_s": res[tau_name] * DAY}
    write_json(out / "summary.json", summary)
    print(f"{tau_name} = {res[tau_name]:.2f} d (+- {res.error(tau_name):.2f})")
    return summary


COMMANDS = {"spectrum": cmd_spectrum, "backaction": cmd_backaction, "me-solve": cmd_me_solve,
            "traj": cmd_traj, "g2": cmd_g2, "fit": cmd_fit, "finesse": cmd_finesse}


def build_parser():
    ap = argparse.ArgumentParser(prog="cqed", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--params", help="JSON parameter file (unit-tagged values)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="RNG seed (u64); generated and recorded if absent")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--input", action="append", default=[], dest="inputs")
        sp.add_argument("--set", action="append", default=[], dest="overrides",
                        help="override section.field=value:unit, e.g. system.g=30:MHz_over_2pi")
        return sp

    sp = common(sub.add_parser("spectrum", help="cavity output versus probe and cavity detuning"))
    sp.add_argument("--delta-a", help="probe-atom detuning grid, MHz/2pi")
    sp.add_argument("--delta-c", help="cavity-atom offset grid, MHz/2pi")
    sp.add_argument("--observable", default="rate_cavity")

    sp = common(sub.add_parser("backaction", help="coupling-averaged emission versus cavity detuning"))
    sp.add_argument("--delta-a", help="probe-atom detuning, MHz/2pi")
    sp.add_argument("--delta-c", help="probe-cavity detuning grid, MHz/2pi")
    sp.add_argument("--cooperativity", type=float)
    sp.add_argument("--sigma-g", type=float, help="coupling spread, MHz/2pi")

    sp = common(sub.add_parser("me-solve", help="two-level master-equation steady state"))
    sp.add_argument("--delta-a")
    sp.add_argument("--delta-c")
    sp.add_argument("--n-max", type=int, default=2)

    sp = common(sub.add_parser("traj", help="quantum-jump click records"))
    sp.add_argument("--duration", type=float, default=20.0, help="per trajectory, us")
    sp.add_argument("--n-traj", type=int, default=16)
    sp.add_argument("--n-max", type=int, default=2)
    sp.add_argument("--detect", action="store_true", help="apply detection efficiencies and jitter")

    sp = common(sub.add_parser("g2", help="cross-correlation histogram and model fit"))
    sp.add_argument("--bins", type=float, default=40.0, help="bin width, ns")
    sp.add_argument("--tau-max", type=float, default=400.0, help="ns")
    sp.add_argument("--jitter", type=float, default=1.35, help="jitter width held fixed in the fit, ns")
    sp.add_argument("--channels", default="0,1", help="two channels, or one to split 50/50")

    sp = common(sub.add_parser("fit", help="Lorentzian or stretched-exponential fit of x,y[,sigma] CSV"))
    sp.add_argument("--model", choices=["lorentzian", "stretched_exponential"], default="lorentzian")
    sp.add_argument("--offset", action="store_true")
    sp.add_argument("--bootstrap", type=int, default=0)

    sp = common(sub.add_parser("finesse", help="finesse-decay law fit of t_days,finesse CSV"))
    sp.add_argument("--law", choices=["exponential", "depletion"], default="exponential")
    sp.add_argument("--t-total", type=float, default=60.0, help="total mirror transmission, ppm")
    return ap


def config_from_args(ns) -> RunConfig:
    base = {"command", "params", "out", "seed", "threads", "inputs", "overrides"}
    opts = {k: v for k, v in vars(ns).items() if k not in base}
    over = {}
    for text in ns.overrides:
        s, n, v = parse_override(text)
        over[(s, n)] = v
    if ns.threads < 1:
        raise UnitError("--threads must be >= 1")
    if ns.seed is not None and not 0 <= ns.seed < 1 << 64:
        raise UnitError("--seed must be an unsigned 64-bit integer")
    return RunConfig(ns.command, ns.out, ns.params, list(ns.inputs), ns.seed, ns.threads, over, opts)


def _error_kind(exc):
    from .fitters import FitError
    from .lindblad import SteadyStateError, TrajectoryError

    if isinstance(exc, (FitError, SteadyStateError, TrajectoryError)):
        return EXIT_NUMERIC
    if isinstance(exc, (UnitError, FileNotFoundError, ValueError, KeyError, json.JSONDecodeError)):
        return EXIT_CONFIG
    return EXIT_OTHER


def main(argv=None):
    logging.basicConfig(level=os.environ.get("CQED_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_parser()
    ns = ap.parse_args(argv)
    out = None
    try:
        cfg = config_from_args(ns)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        summary = COMMANDS[cfg.command](cfg, out)
        from .io import write_manifest

        args = {k: v for k, v in asdict(cfg).items() if k != "overrides"}
        args["overrides"] = {f"{s}.{n}": v for (s, n), v in cfg.overrides.items()}
        inputs = list(cfg.inputs) + ([cfg.params] if cfg.params else [])
        write_manifest(out, cfg.command, args, inputs, cfg.seed, time.perf_counter() - t0)
        log.info("%s done: %s", cfg.command, summary)
        return 0
    except Exception as exc:  # surfaced as machine-readable JSON
        code = _error_kind(exc)
        err = {"error": type(exc).__name__, "message": str(exc), "command": ns.command, "exit_code": code}
        print(json.dumps(err), file=sys.stderr)
        if out is not None and out.is_dir():
            (out / "error.json").write_text(json.dumps(err, indent=2) + "\n")
        log.debug("failure", exc_info=True)
        return code


if __name__ == "__main__":
    sys.exit(main())
