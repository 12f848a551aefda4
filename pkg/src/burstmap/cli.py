"""Command-line entry point.

Each subcommand runs one experiment, writes its tables and plots into
the output directory, and finishes with a ``manifest.json`` recording
the fully resolved configuration, the master seed, the package version,
and the cycle geometry.  Feeding a saved manifest back through
``--config`` reruns the experiment with identical settings and seed, so
the data files come out byte-for-byte the same.  Failures still produce
a manifest (with the error message) and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .compose import dbs_demo
from .dynamics import (ShiftedMap, lemma1_certificate, lyapunov,
                       orbit_diagram, ulam_measure)
from .extract import extract_map
from .integrate import period_stats, rng_stream, simulate
from .io import (Layer, emit_svg, ensure_dir, load_config, map_layers,
                 svg_stack, validate_bursting, write_csv, write_manifest,
                 write_svg)
from .kickmap import build_kick_map, map_phase, map_slope
from .model import BursterParams, PRESETS, make_geometry, preset
from .passage import buffer_point, build_noisy_kick_map

_DEFAULTS = {
    "simulate": {"duration_cycles": 5.0, "eta": 0.0},
    "kickmap": {"amplitude": 0.5, "grid": 400},
    "orbit-diagram": {"amplitude": 0.5, "tau_min": 0.02, "tau_max": 0.98,
                      "tau_steps": 49, "cells": 100, "iters": 150},
    "lyapunov": {"amplitude": 0.5, "tau": 0.1, "theta0": 0.1234,
                 "iters": 2000, "cert_samples": 4096},
    "ulam": {"amplitude": 0.5, "tau": 0.1, "bins": 200, "samples": 100},
    "buffer": {"amplitude": 0.5, "eta": 1e-3, "grid": 400},
    "dbs-demo": {"cells": 20, "amp_strong": 1.5, "tau_cycle": 0.4,
                 "amp_weak": 0.5, "tau_gap": 0.375, "w_on": 0.9,
                 "n_post": 20},
    "noisy-map": {"amplitude": 0.5, "eta": 1e-3, "cycles": 50,
                  "cv_max": 2e-2, "empirical": 0, "grid": 400},
}

_OPTION_HELP = {
    "duration_cycles": "run length in mean periods",
    "eta": "noise strength",
    "amplitude": "kick amplitude",
    "grid": "number of sample points",
    "tau_min": "smallest drive delay",
    "tau_max": "largest drive delay",
    "tau_steps": "number of delay values",
    "cells": "population size",
    "iters": "map iterations",
    "tau": "drive delay in period units",
    "theta0": "initial phase of the tracked orbit",
    "cert_samples": "subdivision count for the certificate slope scan",
    "bins": "partition cells for the transfer-operator estimate",
    "samples": "sample points per partition cell",
    "amp_strong": "synchronizing pulse amplitude",
    "tau_cycle": "extra delay of the pulse train, in period units",
    "amp_weak": "added pulse amplitude",
    "tau_gap": "gap from each strong pulse to the added one",
    "w_on": "synchrony score that triggers the added pulse",
    "n_post": "pulse cycles to run after the switch",
    "cycles": "burst cycles used to measure the noisy period",
    "cv_max": "largest period variation the phase reduction accepts",
    "empirical": "realizations per point for a measured overlay (0 = off)",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="burstmap",
        description="Phase maps and synchrony tools for the elliptic "
                    "burster.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in _DEFAULTS.items():
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", default=None,
                       help="JSON config or saved manifest")
        p.add_argument("--seed", type=int, default=None, metavar="U64",
                       help="master seed for all random substreams")
        p.add_argument("--out", metavar="DIR", default=None,
                       help="output directory (default ./out)")
        p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                       help="named parameter set")
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help="worker thread cap (BURSTMAP_THREADS wins)")
        for key, val in defaults.items():
            typ = int if isinstance(val, int) else float
            p.add_argument("--" + key.replace("_", "-"), dest=key,
                           type=typ, default=None,
                           help=f"{_OPTION_HELP[key]} (default {val})")
    return parser


def _resolve_threads(cli_value: int | None) -> int:
    env = os.environ.get("BURSTMAP_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(
                f"BURSTMAP_THREADS must be an integer, got {env!r}"
            ) from exc
    elif cli_value is not None:
        n = cli_value
    else:
        n = 1
    if n < 1:
        raise ValueError("thread count must be >= 1")
    return n


def _resolve_settings(args, config: dict) -> dict:
    """Merge CLI flags over config values over built-in defaults."""
    cfg = {"command": args.command}
    if args.preset is not None:
        cfg["preset"] = args.preset
    elif "params" in config:
        cfg["params"] = {k: float(v) for k, v in config["params"].items()}
    else:
        cfg["preset"] = config.get("preset", "b0")
    seed = args.seed if args.seed is not None else config.get("seed")
    cfg["seed"] = int(seed) if seed is not None else 0
    cfg["threads"] = _resolve_threads(
        args.threads if args.threads is not None else config.get("threads"))
    for key, default in _DEFAULTS[args.command].items():
        cli = getattr(args, key)
        val = cli if cli is not None else config.get(key, default)
        cfg[key] = type(default)(val)
    return cfg


def _resolve_geometry(cfg: dict):
    if "params" in cfg:
        params = BursterParams(**cfg["params"])
        validate_bursting(params)
        return make_geometry(params)
    return preset(cfg["preset"])


def _branch_rows(km, n: int):
    rows = []
    for br in km.branches:
        m = max(3, int(round(n * (br.hi - br.lo))) + 2)
        ths = np.linspace(br.lo, br.hi, m, endpoint=False)
        for th in ths:
            rows.append((th, float(map_phase(km, th)),
                         float(map_slope(km, th)), br.kind))
    return rows


def _diagonal(color: str = "#999999") -> Layer:
    return Layer(kind="line", color=color, width=0.8,
                 segments=[np.array([[0.0, 0.0], [1.0, 1.0]])])


def _cmd_simulate(out, geom, cfg):
    params = geom.params
    rng = (rng_stream(cfg["seed"], "simulate")
           if cfg["eta"] > 0.0 else None)
    sim = simulate(params, cfg["duration_cycles"] * geom.period,
                   eta=cfg["eta"], rng=rng)
    n = len(sim.event_times)
    rows = []
    for i in range(n):
        T = sim.event_times[i] - sim.event_times[i - 1] if i else float("nan")
        rows.append((i, sim.event_times[i], sim.event_y[i],
                     sim.event_phi[i], T))
    write_csv(os.path.join(out, "simulate.csv"),
              ["cycle", "event_time", "event_y", "event_angle", "period"],
              rows)
    if n >= 2:
        pts = np.column_stack([np.arange(1, n), sim.periods])
        svg = emit_svg([Layer(kind="line", segments=[pts])],
                       xlabel="cycle", ylabel="period",
                       title="burst period by cycle")
        write_svg(os.path.join(out, "simulate.svg"), svg)
    return geom


def _cmd_kickmap(out, geom, cfg):
    km = build_kick_map(geom, cfg["amplitude"])
    write_csv(os.path.join(out, "kickmap.csv"),
              ["theta", "phase", "slope", "branch"],
              _branch_rows(km, cfg["grid"]))
    svg = emit_svg(map_layers(km) + [_diagonal()],
                   xlim=(0.0, 1.0), ylim=(0.0, 1.0),
                   xlabel="phase before kick", ylabel="phase after kick",
                   title=f"kick map, A = {cfg['amplitude']:g}")
    write_svg(os.path.join(out, "kickmap.svg"), svg)
    return geom


def _cmd_orbit_diagram(out, geom, cfg):
    km = build_kick_map(geom, cfg["amplitude"])
    taus = np.linspace(cfg["tau_min"], cfg["tau_max"], cfg["tau_steps"])
    rows = orbit_diagram(km, taus, n_cells=cfg["cells"],
                         n_iter=cfg["iters"])
    write_csv(os.path.join(out, "orbit_summary.csv"),
              ["tau", "w_bar", "lyapunov"],
              [(r.tau, r.w_bar, r.lam_mean) for r in rows])
    write_csv(os.path.join(out, "orbit_points.csv"), ["tau", "phase"],
              [(r.tau, ph) for r in rows for ph in np.sort(r.phases)])
    measures = [ulam_measure(km, t, n_bins=80, samples_per_bin=50)
                for t in taus]
    write_csv(os.path.join(out, "orbit_measure.csv"),
              ["tau", "bin_lo", "bin_hi", "density"],
              [(t, m.edges[i], m.edges[i + 1], m.density[i])
               for t, m in zip(taus, measures)
               for i in range(len(m.density))])
    xlim = (float(taus[0]), float(taus[-1]))
    scatter = np.array([[r.tau, ph] for r in rows for ph in r.phases])
    top = emit_svg([Layer(kind="points", segments=[scatter], radius=1.0,
                          color="#333333")],
                   xlim=xlim, ylim=(0.0, 1.0),
                   xlabel="drive delay", ylabel="settled phases",
                   title=f"orbit diagram, A = {cfg['amplitude']:g}")
    wline = np.array([[r.tau, r.w_bar] for r in rows])
    lline = np.array([[r.tau, r.lam_mean] for r in rows])
    mid = emit_svg([Layer(kind="line", segments=[wline],
                          color="#1a7a2a"),
                    Layer(kind="line", segments=[lline],
                          color="#b22222")],
                   xlim=xlim, xlabel="drive delay",
                   ylabel="synchrony / stretch rate",
                   title="synchrony (green) and stretch rate (red)")
    support = []
    for t, m in zip(taus, measures):
        floor = 0.05 * m.density.max()
        mids = 0.5 * (m.edges[:-1] + m.edges[1:])
        for c, d in zip(mids, m.density):
            if d > floor:
                support.append([t, c])
    bot = emit_svg([Layer(kind="points", segments=[np.array(support)],
                          radius=1.0, color="#1f4e9c")],
                   xlim=xlim, ylim=(0.0, 1.0), xlabel="drive delay",
                   ylabel="measure support",
                   title="invariant-measure support")
    write_svg(os.path.join(out, "orbit_diagram.svg"),
              svg_stack([top, mid, bot]))
    return geom


def _cmd_lyapunov(out, geom, cfg):
    km = build_kick_map(geom, cfg["amplitude"])
    est = lyapunov(km, cfg["tau"], cfg["theta0"], n_iter=cfg["iters"])
    cert = lemma1_certificate(km, cfg["tau"], n_sub=cfg["cert_samples"])
    write_csv(os.path.join(out, "lyapunov.csv"),
              ["amplitude", "tau", "theta0", "iters", "lyapunov",
               "terms", "excluded", "cert_holds", "cert_bound",
               "slope_lo_expand", "slope_lo_middle", "escape_steps",
               "failed_clause"],
              [(cfg["amplitude"], cfg["tau"], cfg["theta0"], cfg["iters"],
                est.lam, est.n_terms, est.excluded, cert.holds,
                cert.lower_bound, cert.slope_lo_expand,
                cert.slope_lo_middle, cert.escape_steps,
                cert.failed_clause or "")])
    sm = ShiftedMap(km, cfg["tau"])
    th = cfg["theta0"] % 1.0
    cob, seg = [], [[th, th]]
    for _ in range(60):
        nxt = sm.phase(th)
        for pt in ([th, nxt], [nxt, nxt]):
            if abs(pt[1] - seg[-1][1]) > 0.5 or abs(pt[0] - seg[-1][0]) > 0.5:
                cob.append(np.array(seg))
                seg = [pt]
            else:
                seg.append(pt)
        th = nxt
    cob.append(np.array(seg))
    svg = emit_svg(map_layers(sm) + [_diagonal(),
                   Layer(kind="line", segments=cob, color="#1a7a2a",
                         width=0.8)],
                   xlim=(0.0, 1.0), ylim=(0.0, 1.0),
                   xlabel="phase", ylabel="next phase",
                   title=f"orbit trace, A = {cfg['amplitude']:g}, "
                         f"tau = {cfg['tau']:g}")
    write_svg(os.path.join(out, "lyapunov.svg"), svg)
    return geom


def _cmd_ulam(out, geom, cfg):
    km = build_kick_map(geom, cfg["amplitude"])
    meas = ulam_measure(km, cfg["tau"], n_bins=cfg["bins"],
                        samples_per_bin=cfg["samples"])
    write_csv(os.path.join(out, "ulam.csv"),
              ["bin_lo", "bin_hi", "density"],
              [(meas.edges[i], meas.edges[i + 1], meas.density[i])
               for i in range(len(meas.density))])
    write_csv(os.path.join(out, "ulam_summary.csv"),
              ["amplitude", "tau", "bins", "residual",
               "support_fraction"],
              [(cfg["amplitude"], cfg["tau"], cfg["bins"], meas.residual,
                meas.support_fraction())])
    steps = []
    for i, d in enumerate(meas.density):
        steps.append([meas.edges[i], d])
        steps.append([meas.edges[i + 1], d])
    svg = emit_svg([Layer(kind="line", segments=[np.array(steps)])],
                   xlim=(0.0, 1.0), xlabel="phase",
                   ylabel="invariant density",
                   title=f"invariant measure, A = {cfg['amplitude']:g}, "
                         f"tau = {cfg['tau']:g}")
    write_svg(os.path.join(out, "ulam.svg"), svg)
    return geom


def _cmd_buffer(out, geom, cfg):
    buf = buffer_point(geom.params, cfg["eta"], cfg["amplitude"],
                       n_grid=cfg["grid"], master_seed=cfg["seed"])
    write_csv(os.path.join(out, "buffer_curve.csv"), ["y", "divergence"],
              [(y, d) for y, d in buf.d_curve])
    write_csv(os.path.join(out, "buffer.csv"),
              ["eta", "amplitude", "y_buffer", "theta_buffer", "period",
               "crossed"],
              [(cfg["eta"], cfg["amplitude"], buf.y_buffer,
                buf.theta_buffer, buf.period, buf.crossed)])
    curve = np.column_stack([buf.d_curve[:, 0],
                             np.log10(np.maximum(buf.d_curve[:, 1],
                                                 1e-300))])
    thr = np.array([[curve[0, 0], 1.0], [curve[-1, 0], 1.0]])
    layers = [Layer(kind="line", segments=[curve]),
              Layer(kind="line", segments=[thr], color="#999999",
                    width=0.8)]
    if buf.crossed:
        lo, hi = curve[:, 1].min(), curve[:, 1].max()
        mark = np.array([[buf.y_buffer, lo], [buf.y_buffer, hi]])
        layers.append(Layer(kind="line", segments=[mark],
                            color="#1a7a2a", width=0.8))
    svg = emit_svg(layers, xlabel="slow value at kick",
                   ylabel="log10 divergence",
                   title=f"kick-noise divergence, eta = {cfg['eta']:g}")
    write_svg(os.path.join(out, "buffer.svg"), svg)
    return geom


def _cmd_dbs_demo(out, geom, cfg):
    res = dbs_demo(geom.params, n_cells=cfg["cells"],
                   amp_strong=cfg["amp_strong"],
                   tau_cycle=cfg["tau_cycle"], amp_weak=cfg["amp_weak"],
                   tau_gap=cfg["tau_gap"], w_on=cfg["w_on"],
                   n_post=cfg["n_post"])
    write_csv(os.path.join(out, "dbs_w.csv"),
              ["kick", "time", "w", "weak_pulse_on"],
              [(j, res.kick_times[j], res.w_trace[j],
                int(j >= res.switch_index))
               for j in range(len(res.kick_times))])
    write_csv(os.path.join(out, "dbs_raster.csv"), ["cell", "event_time"],
              [(i, t) for i, ev in enumerate(res.rasters) for t in ev])
    wline = np.column_stack([res.kick_times, res.w_trace])
    t_sw = res.kick_times[res.switch_index]
    mark = np.array([[t_sw, 0.0], [t_sw, 1.0]])
    svg = emit_svg([Layer(kind="line", segments=[wline],
                          color="#1a7a2a"),
                    Layer(kind="line", segments=[mark], color="#b22222",
                          width=0.8)],
                   ylim=(0.0, 1.05), xlabel="time",
                   ylabel="synchrony score",
                   title="added pulse switches on at the red line")
    write_svg(os.path.join(out, "dbs_w.svg"), svg)
    dots = np.array([[t, float(i)] for i, ev in enumerate(res.rasters)
                     for t in ev])
    svg = emit_svg([Layer(kind="points", segments=[dots], radius=1.2,
                          color="#333333"),
                    Layer(kind="line", segments=[np.array(
                        [[t_sw, -0.5], [t_sw, cfg["cells"] - 0.5]])],
                          color="#b22222", width=0.8)],
                   xlabel="time", ylabel="cell",
                   title="burst raster")
    write_svg(os.path.join(out, "dbs_raster.svg"), svg)
    return geom


def _cmd_noisy_map(out, geom, cfg):
    params = geom.params
    km = build_noisy_kick_map(params, cfg["eta"], cfg["amplitude"],
                              master_seed=cfg["seed"],
                              n_cycles=cfg["cycles"],
                              cv_max=cfg["cv_max"])
    write_csv(os.path.join(out, "noisy_map.csv"),
              ["theta", "phase", "slope", "branch"],
              _branch_rows(km, cfg["grid"]))
    write_csv(os.path.join(out, "noisy_map_summary.csv"),
              ["eta", "amplitude", "period", "jump_y", "head_phase"],
              [(cfg["eta"], cfg["amplitude"], km.geom.period,
                km.geom.y_jump, km.head_phase)])
    layers = map_layers(km) + [_diagonal()]
    if cfg["empirical"] > 0:
        grid = (np.arange(61) + 0.5) / 61
        samples = extract_map(params, cfg["amplitude"], grid,
                              eta=cfg["eta"],
                              n_realizations=cfg["empirical"],
                              period=km.geom.period,
                              master_seed=cfg["seed"])
        write_csv(os.path.join(out, "noisy_samples.csv"),
                  ["theta_in", "theta_out", "n", "dispersion", "valid"],
                  [(s.theta_in, s.theta_out, s.n_realizations,
                    s.dispersion, s.valid) for s in samples])
        pts = np.array([[s.theta_in, s.theta_out]
                        for s in samples if s.valid])
        if len(pts):
            layers.append(Layer(kind="points", segments=[pts],
                                color="#1a7a2a", radius=2.0))
    svg = emit_svg(layers, xlim=(0.0, 1.0), ylim=(0.0, 1.0),
                   xlabel="phase before kick", ylabel="phase after kick",
                   title=f"noisy kick map, A = {cfg['amplitude']:g}, "
                         f"eta = {cfg['eta']:g}")
    write_svg(os.path.join(out, "noisy_map.svg"), svg)
    return km.geom


_HANDLERS = {
    "simulate": _cmd_simulate,
    "kickmap": _cmd_kickmap,
    "orbit-diagram": _cmd_orbit_diagram,
    "lyapunov": _cmd_lyapunov,
    "ulam": _cmd_ulam,
    "buffer": _cmd_buffer,
    "dbs-demo": _cmd_dbs_demo,
    "noisy-map": _cmd_noisy_map,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    out = args.out if args.out is not None else "out"
    ensure_dir(out)
    manifest = os.path.join(out, "manifest.json")
    cfg = {"command": args.command}
    geom = None
    try:
        config = load_config(args.config) if args.config else {}
        cfg = _resolve_settings(args, config)
        geom = _resolve_geometry(cfg)
        geom = _HANDLERS[args.command](out, geom, cfg)
    except Exception as exc:
        write_manifest(manifest, cfg, cfg.get("seed", 0), geom,
                       error=f"{type(exc).__name__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_manifest(manifest, cfg, cfg["seed"], geom)
    return 0


if __name__ == "__main__":
    sys.exit(main())
