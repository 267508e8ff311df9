"""Command-line front end for rate curves, sweeps, simulation, and ingest.

One subcommand per derived artifact:

    skr-curve     rate versus channel loss for one protocol
    gamma-map     relative-gain map over the (p1, p2) simplex
    optimal-t     heralding beam-splitter transmission versus p2
    gamma-vs-eta  relative gain along an efficiency sweep
    simulate      pulse-level Monte Carlo, report as JSON
    ingest        tomography CSVs to observed rates and key-rate points

Sources, channels, and budgets are JSON files: pass a path, or a bare
name resolved against the bundled fixtures (override the root with the
QKD_FIXTURES_DIR environment variable).  Outputs are deterministic for
a given argument list and seed; every CSV starts with `# spsqkd
<version>` and `# config <hash>` comment lines, JSON reports carry the
same as fields, and scalar results (maximal channel loss, contour fits)
append as trailing comment lines.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .analysis import (dtb_rate_fn, gamma_map_dtb, gamma_vs_efficiency,
                       hp_rate_fn, mcl, optimal_bs_transmission, skr_curve,
                       wcs_mcl, wcs_rate_fn)
from .channel_model import ChannelParams
from .errors import ConfigError, FitError, NoKeyError, QkdError
from .ingest import (AliceBudget, gains_and_errors, read_tomography_csv,
                     skr_from_experiment)
from .montecarlo import SimConfig, run
from .photon_source import PhotonDistribution

PROTOCOLS = ("dtb", "hp", "wcs", "perfect-sps")


def fixtures_root() -> Path:
    """Fixture directory: QKD_FIXTURES_DIR if set, else the bundled one."""
    env = os.environ.get("QKD_FIXTURES_DIR")
    if env:
        return Path(env)
    return Path(str(resources.files("spsqkd").joinpath("fixtures")))


def _resolve(arg: str, kind: str) -> Path:
    p = Path(arg)
    if p.suffix == ".json" or os.sep in arg:
        if p.is_file():
            return p
        raise ConfigError(f"{kind} file not found: {arg}")
    named = fixtures_root() / f"{arg}.json"
    if named.is_file():
        return named
    raise ConfigError(f"unknown {kind} fixture {arg!r} (no file {named})")


def _load_json(arg: str, kind: str) -> dict:
    path = _resolve(arg, kind)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{kind} file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{kind} file {path} must hold a JSON object")
    return data


def _distribution(data: dict, where: str) -> PhotonDistribution:
    try:
        return PhotonDistribution(p0=float(data.get("p0", 0.0)),
                                  p1=float(data.get("p1", 0.0)),
                                  p2=float(data.get("p2", 0.0)),
                                  p3=float(data.get("p3", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_source(arg: str) -> PhotonDistribution:
    return _distribution(_load_json(arg, "source"), f"source {arg!r}")


def load_channel(arg: str) -> ChannelParams:
    data = _load_json(arg, "channel")
    try:
        return ChannelParams(loss_db=float(data.get("loss_db", 0.0)),
                             eta_bob=float(data["eta_bob"]),
                             p_dc=float(data["p_dc"]),
                             e_d=float(data["e_d"]))
    except KeyError as exc:
        raise ConfigError(f"channel {arg!r} lacks required field {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"channel {arg!r}: {exc}") from exc


def load_budget(arg: str) -> AliceBudget:
    data = _load_json(arg, "budget")
    try:
        return AliceBudget(rep_rate_n=float(data["rep_rate_n"]),
                           eta_a=float(data["eta_a"]),
                           eta_c_na=float(data["eta_c_na"]))
    except KeyError as exc:
        raise ConfigError(f"budget {arg!r} lacks required field {exc}") from exc


def load_stats(arg: str) -> dict[str, PhotonDistribution]:
    data = _load_json(arg, "stats")
    out = {}
    for label, entry in data.items():
        if not isinstance(entry, dict):
            continue  # skip annotation fields
        out[label] = _distribution(entry, f"stats {arg!r} entry {label!r}")
    if not out:
        raise ConfigError(f"stats {arg!r} defines no intensities")
    return out


def _config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _fmt(value) -> str:
    if isinstance(value, float):
        value = float(value)  # numpy scalars repr as np.float64(...)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def write_csv(out: str, config: dict, header: tuple[str, ...],
              rows, footer: dict | None = None) -> None:
    lines = [f"# spsqkd {__version__}", f"# config {_config_hash(config)}",
             ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    for key, value in (footer or {}).items():
        lines.append(f"# {key} = {_fmt(value)}")
    _emit("\n".join(lines) + "\n", out)


def write_json(out: str, config: dict, payload: dict) -> None:
    doc = {"tool_version": __version__, "config_hash": _config_hash(config)}
    doc.update(payload)
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", out)


def _loss_grid(args) -> list[float]:
    if args.loss_step <= 0:
        raise ConfigError("--loss-step must be positive")
    if args.loss_max < args.loss_min:
        raise ConfigError("--loss-max must be at least --loss-min")
    n = int(round((args.loss_max - args.loss_min) / args.loss_step))
    return [args.loss_min + i * args.loss_step for i in range(n + 1)]


def _rate_fn(args, source: PhotonDistribution | None, channel: ChannelParams):
    if args.protocol == "dtb":
        return dtb_rate_fn(source, channel, q_sift=args.q_sift)
    if args.protocol == "hp":
        return hp_rate_fn(source, channel, t=args.t, eta_d=args.eta_d,
                          p_dc_alice=args.p_dc_alice, q_sift=args.q_sift)
    if args.protocol == "wcs":
        return wcs_rate_fn(channel, q_sift=args.q_sift)
    # the same entropy bound with ideal statistics: every pulse one photon
    return dtb_rate_fn(PhotonDistribution(p0=0.0, p1=1.0, p2=0.0), channel,
                       q_sift=args.q_sift)


def cmd_skr_curve(args) -> int:
    channel = load_channel(args.channel)
    source = None
    if args.protocol in ("dtb", "hp"):
        if args.source is None:
            raise ConfigError(f"protocol {args.protocol!r} requires --source")
        source = load_source(args.source)
    fn = _rate_fn(args, source, channel)
    config = {"cmd": "skr-curve", "protocol": args.protocol,
              "source": args.source, "channel": args.channel,
              "loss": [args.loss_min, args.loss_max, args.loss_step],
              "q_sift": args.q_sift, "t": args.t, "eta_d": args.eta_d,
              "p_dc_alice": args.p_dc_alice}
    try:
        curve = skr_curve(fn, _loss_grid(args))
        footer = {"mcl_db": curve.mcl_db}
        rows = curve.points
    except NoKeyError:
        rows = [(loss, fn(loss)) for loss in _loss_grid(args)]
        footer = {"mcl_db": math.nan}
    write_csv(args.out, config, ("loss_db", "skr"), rows, footer)
    return 0


def cmd_gamma_map(args) -> int:
    channel = load_channel(args.channel)
    config = {"cmd": "gamma-map", "channel": args.channel, "grid": args.grid,
              "eta_c": args.eta_c, "q_sift": args.q_sift}
    gmap = gamma_map_dtb(channel, eta_c=args.eta_c, n=args.grid,
                         q_sift=args.q_sift)
    rows = ((gmap.p1[i], gmap.p2[j], gmap.gamma_db[i, j])
            for i in range(gmap.p1.size) for j in range(gmap.p2.size))
    footer = {"wcs_mcl_db": gmap.wcs_mcl_db}
    try:
        slope, intercept = gmap.fit_zero_contour()
        footer["fit_slope"] = slope
        footer["fit_intercept"] = intercept
    except FitError:
        footer["fit_slope"] = math.nan
        footer["fit_intercept"] = math.nan
    write_csv(args.out, config, ("p1", "p2", "gamma_db"), rows, footer)
    return 0


def cmd_optimal_t(args) -> int:
    channel = load_channel(args.channel)
    if args.p2_step <= 0:
        raise ConfigError("--p2-step must be positive")
    config = {"cmd": "optimal-t", "channel": args.channel,
              "p2": [args.p2_min, args.p2_max, args.p2_step],
              "p_dc": args.p_dc, "eta_d": args.eta_d, "p1": args.p1}
    n = int(round((args.p2_max - args.p2_min) / args.p2_step))
    rows = []
    for i in range(n + 1):
        p2 = args.p2_min + i * args.p2_step
        rows.append((p2, optimal_bs_transmission(
            p2, p_dc=args.p_dc, eta_d=args.eta_d, channel=channel,
            p1=args.p1)))
    write_csv(args.out, config, ("p2", "t_opt"), rows)
    return 0


def cmd_gamma_vs_eta(args) -> int:
    channel = load_channel(args.channel)
    source = load_source(args.source)
    if args.eta_step <= 0:
        raise ConfigError("--eta-step must be positive")
    config = {"cmd": "gamma-vs-eta", "protocol": args.protocol,
              "axis": args.axis, "source": args.source,
              "channel": args.channel,
              "eta": [args.eta_min, args.eta_max, args.eta_step],
              "eta_c": args.eta_c, "eta_d": args.eta_d, "t": args.t,
              "p_dc_alice": args.p_dc_alice, "q_sift": args.q_sift}
    n = int(round((args.eta_max - args.eta_min) / args.eta_step))
    values = [args.eta_min + i * args.eta_step for i in range(n + 1)]
    axis = args.axis.replace("-", "_")
    rows = gamma_vs_efficiency(args.protocol, axis, values, source, channel,
                               eta_c=args.eta_c, eta_d=args.eta_d, t=args.t,
                               p_dc_alice=args.p_dc_alice, q_sift=args.q_sift)
    write_csv(args.out, config, ("eta", "gamma_db"), rows)
    return 0


def cmd_simulate(args) -> int:
    channel = load_channel(args.channel).with_loss(args.loss)
    source = load_source(args.source)
    if args.protocol == "dtb":
        decoy = load_source(args.decoy)
        sim = SimConfig(protocol="dtb", n_pulses=args.n_pulses,
                        seed=args.seed, channel=channel, eta_c=args.eta_c,
                        intensities={"s1": decoy, "s2": source},
                        intensity_weights={"s1": 0.5, "s2": 0.5})
    else:
        sim = SimConfig(protocol="hp", n_pulses=args.n_pulses,
                        seed=args.seed, channel=channel, eta_c=args.eta_c,
                        source=source, t=args.t, eta_d=args.eta_d,
                        p_dc_alice=args.p_dc_alice)
    report = run(sim)
    config = {"cmd": "simulate", "sim": sim.to_dict(),
              "source": args.source, "decoy": args.decoy,
              "channel": args.channel}
    write_json(args.out, config, report.to_dict())
    return 0


def cmd_ingest(args) -> int:
    budget = load_budget(args.budget)
    stats = load_stats(args.stats)
    maps = [read_tomography_csv(path) for path in args.maps]
    rates = []
    for tmap in maps:
        r = gains_and_errors(tmap, budget)
        rates.append({"intensity": tmap.intensity_label,
                      "loss_db": tmap.nd_filter_db,
                      "q": r.q, "q_sigma": r.q_sigma,
                      "e": r.e, "e_sigma": r.e_sigma})
    points = skr_from_experiment(maps, stats, budget, q_sift=args.q_sift)
    config = {"cmd": "ingest", "maps": [str(p) for p in args.maps],
              "budget": args.budget, "stats": args.stats,
              "q_sift": args.q_sift}
    write_json(args.out, config, {
        "rates": rates,
        "skr_points": [{"protocol": pt.protocol, "loss_db": pt.loss_db,
                        "skr": pt.skr, "skr_sigma": pt.skr_sigma}
                       for pt in points]})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spsqkd",
        description="Key-rate analysis for single-photon-source BB84.")
    parser.add_argument("--version", action="version",
                        version=f"spsqkd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default="-",
                       help="output path, or - for stdout (default)")
        p.add_argument("--channel", default="channel",
                       help="channel fixture name or JSON path")

    p = sub.add_parser("skr-curve", help="rate versus loss for one protocol")
    common(p)
    p.add_argument("--protocol", choices=PROTOCOLS, required=True)
    p.add_argument("--source", help="source fixture name or JSON path")
    p.add_argument("--loss-min", type=float, default=0.0)
    p.add_argument("--loss-max", type=float, default=40.0)
    p.add_argument("--loss-step", type=float, default=0.5)
    p.add_argument("--q-sift", type=float, default=0.5)
    p.add_argument("--t", type=float, default=0.5,
                   help="heralding beam-splitter transmission (hp)")
    p.add_argument("--eta-d", type=float, default=0.9,
                   help="herald detector efficiency (hp)")
    p.add_argument("--p-dc-alice", type=float, default=None,
                   help="herald detector dark rate (hp; default: channel p_dc)")
    p.set_defaults(fn=cmd_skr_curve)

    p = sub.add_parser("gamma-map", help="relative gain over (p1, p2)")
    common(p)
    p.add_argument("--grid", type=int, default=200,
                   help="grid points per axis (default 200)")
    p.add_argument("--eta-c", type=float, default=1.0)
    p.add_argument("--q-sift", type=float, default=0.5)
    p.set_defaults(fn=cmd_gamma_map)

    p = sub.add_parser("optimal-t",
                       help="heralding transmission maximizing loss tolerance")
    common(p)
    p.add_argument("--p2-min", type=float, default=0.05)
    p.add_argument("--p2-max", type=float, default=0.5)
    p.add_argument("--p2-step", type=float, default=0.05)
    p.add_argument("--p-dc", type=float, default=2e-7,
                   help="herald detector dark rate")
    p.add_argument("--eta-d", type=float, default=0.9)
    p.add_argument("--p1", type=float, default=0.0,
                   help="one-photon weight of the swept source")
    p.set_defaults(fn=cmd_optimal_t)

    p = sub.add_parser("gamma-vs-eta", help="relative gain vs efficiency")
    common(p)
    p.add_argument("--protocol", choices=("dtb", "hp"), required=True)
    p.add_argument("--axis", choices=("eta-c", "eta-d"), required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--eta-min", type=float, default=0.05)
    p.add_argument("--eta-max", type=float, default=1.0)
    p.add_argument("--eta-step", type=float, default=0.01)
    p.add_argument("--eta-c", type=float, default=1.0,
                   help="fixed collection efficiency for the eta-d sweep")
    p.add_argument("--eta-d", type=float, default=0.9,
                   help="fixed herald efficiency for the eta-c sweep (hp)")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--p-dc-alice", type=float, default=None)
    p.add_argument("--q-sift", type=float, default=0.5)
    p.set_defaults(fn=cmd_gamma_vs_eta)

    p = sub.add_parser("simulate", help="pulse-level Monte Carlo")
    common(p)
    p.add_argument("--protocol", choices=("dtb", "hp"), required=True)
    p.add_argument("--source", required=True,
                   help="signal source fixture name or JSON path")
    p.add_argument("--decoy", default="bare-s1",
                   help="decoy source for dtb (default bare-s1)")
    p.add_argument("--loss", type=float, default=10.0)
    p.add_argument("--n-pulses", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta-c", type=float, default=1.0)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--eta-d", type=float, default=0.9)
    p.add_argument("--p-dc-alice", type=float, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("ingest", help="tomography CSVs to rates and key points")
    p.add_argument("maps", nargs="+",
                   help="tomography CSV paths (JSON sidecars alongside)")
    p.add_argument("--out", default="-")
    p.add_argument("--budget", default="budget",
                   help="budget fixture name or JSON path")
    p.add_argument("--stats", default="stats-bare",
                   help="per-intensity statistics fixture name or JSON path")
    p.add_argument("--q-sift", type=float, default=0.5)
    p.set_defaults(fn=cmd_ingest)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (QkdError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
