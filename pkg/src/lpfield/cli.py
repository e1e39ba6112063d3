"""Command-line front end: ``lpfield {synth,analyze,resample,denoise,metrics}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import snapshot
from .analysis import analyze
from .config import AnalysisConfig, DenoiseConfig
from .denoise import denoise_run
from .geom import estimate_tau_p
from .io import DataError, atomic_write, read_points, write_points
from .metrics import energy_csv, energy_report, nn_histogram, rmse
from .resample import consolidation_radius, resample_state
from .synth import KINDS, synth_shape

log = logging.getLogger("lpfield")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# CLI flag -> AnalysisConfig field
_ANALYSIS_FLAGS = {
    "radius": "r", "grid_n": "grid_n", "pattern": "pattern", "m": "m", "atoms": "d", "lam": "lam",
    "tau_p": "tau_p", "iters": "outer_iters", "dict_iters": "dict_iters", "pose_iters": "pose_iters",
    "pose_starts": "pose_starts", "lpf_stride": "lpf_stride", "seed": "seed", "threads": "threads",
    "consolidation_factor": "consolidation_factor",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _analysis_args(p, stride=False):
    g = p.add_argument_group("analysis")
    g.add_argument("--radius", type=float, help="pattern scale r")
    g.add_argument("--grid-n", type=int, help="grid pattern resolution")
    g.add_argument("--pattern", choices=("grid", "random"))
    g.add_argument("--m", type=int, help="point count of a random pattern")
    g.add_argument("--atoms", type=int, help="dictionary size d")
    g.add_argument("--lambda", dest="lam", type=float, help="sparsity weight (default: derived from d)")
    g.add_argument("--tau-p", type=float, help="probing scale (default: median NN distance)")
    g.add_argument("--iters", type=int, help="outer analysis iterations")
    g.add_argument("--dict-iters", type=int)
    g.add_argument("--pose-iters", type=int)
    g.add_argument("--pose-starts", type=int)
    g.add_argument("--consolidation-factor", type=float)
    if stride:
        g.add_argument("--lpf-stride", type=int, help="one LPF per k-th point")
    g.add_argument("--config", help="JSON file with config values (CLI flags take precedence)")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lpfield", description="Local probing field shape analysis.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="sample a synthetic shape")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--out", required=True)
    s.add_argument("--clean-out", help="also write the noise-free points")

    a = sub.add_parser("analyze", help="run the joint analysis and write a snapshot")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--out", required=True, help="snapshot file")
    a.add_argument("--energy-csv", help="write the per-iteration energies")
    _analysis_args(a, stride=True)

    r = sub.add_parser("resample", help="resample a shape from its LPF representation")
    r.add_argument("--in", dest="inp", help="input cloud (omit with --state)")
    r.add_argument("--state", help="precomputed analysis snapshot")
    r.add_argument("--out", required=True)
    _analysis_args(r, stride=True)

    d = sub.add_parser("denoise", help="denoise a point cloud")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--gamma", type=float)
    d.add_argument("--rounds", type=int)
    d.add_argument("--stop-tol", type=float)
    d.add_argument("--proposal", choices=("full", "height", "sample"))
    d.add_argument("--reference", help="ground truth for per-round RMSE")
    d.add_argument("--log-json", help="write per-round statistics as JSON")
    _analysis_args(d, stride=True)

    m = sub.add_parser("metrics", help="evaluation measures")
    msub = m.add_subparsers(dest="metric", parser_class=_Parser)
    msub.required = True
    mr = msub.add_parser("rmse")
    mr.add_argument("--test", required=True)
    mr.add_argument("--reference", required=True)
    mr.add_argument("--symmetric", action="store_true")
    mh = msub.add_parser("hist")
    mh.add_argument("--in", dest="inp", required=True)
    mh.add_argument("--bins", type=int, default=64)
    mh.add_argument("--out", help="CSV file (default: stdout)")
    me = msub.add_parser("energy")
    me.add_argument("--state", required=True)
    me.add_argument("--per-atom", action="store_true")
    me.add_argument("--out", help="CSV file (default: stdout)")
    return p


def _load_config_file(path) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise DataError(f"config {path} must hold a JSON object")
    return data


def resolve_analysis(args, file_cfg: dict) -> AnalysisConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    vals = dict(file_cfg.get("analysis", file_cfg))
    vals = {k: v for k, v in vals.items() if k in {f.name for f in dataclasses.fields(AnalysisConfig)}}
    for flag, key in _ANALYSIS_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            vals[key] = val
    return AnalysisConfig.from_dict(vals)


def _resolved_log(cfg, **derived):
    payload = {"config": cfg.to_dict(), "derived": derived}
    log.info("resolved config: %s", json.dumps(payload, sort_keys=True))


def _write_text(path, text):
    if path:
        atomic_write(path, text.encode())
    else:
        sys.stdout.write(text)


def _cmd_synth(args):
    if args.n <= 0:
        raise _UsageError("--n must be positive")
    noisy, clean = synth_shape(args.kind, args.n, args.noise, np.random.default_rng(args.seed))
    write_points(args.out, noisy)
    if args.clean_out:
        write_points(args.clean_out, clean)
    log.info("wrote %d %s points to %s", len(noisy), args.kind, args.out)


def _analyse_input(args):
    cfg = resolve_analysis(args, _load_config_file(args.config))
    cloud = read_points(args.inp)
    state = analyze(cloud, cfg)
    _resolved_log(cfg, lam=state.lam, tau_p=state.tau_p, M=state.pattern.m, tau_s=state.pattern.tau_s,
                  n_lpf=state.n_lpf)
    return state


def _cmd_analyze(args):
    state = _analyse_input(args)
    snapshot.save(args.out, state)
    if args.energy_csv:
        atomic_write(args.energy_csv, energy_csv(energy_report(state)).encode())


def _cmd_resample(args):
    if bool(args.inp) == bool(args.state):
        raise _UsageError("resample needs exactly one of --in or --state")
    state = snapshot.load(args.state) if args.state else _analyse_input(args)
    out = resample_state(state)
    log.info("consolidation radius %g", consolidation_radius(state))
    write_points(args.out, out)


def _cmd_denoise(args):
    file_cfg = _load_config_file(args.config)
    acfg = resolve_analysis(args, file_cfg)
    dvals = {k: v for k, v in file_cfg.items() if k in ("gamma", "outer_rounds", "stop_tol", "proposal")}
    for flag, key in (("gamma", "gamma"), ("rounds", "outer_rounds"), ("stop_tol", "stop_tol"),
                      ("proposal", "proposal")):
        if getattr(args, flag) is not None:
            dvals[key] = getattr(args, flag)
    cfg = DenoiseConfig(analysis=acfg, **dvals)
    cloud = read_points(args.inp)
    ref = read_points(args.reference) if args.reference else None
    tau_p = acfg.tau_p if acfg.tau_p is not None else estimate_tau_p(cloud)
    _resolved_log(cfg, lam=acfg.resolved_lambda, tau_p=tau_p)
    res = denoise_run(cloud, cfg, ref)
    for rec in res.rounds:
        log.info("round %s", json.dumps(rec, sort_keys=True))
    write_points(args.out, res.cloud)
    if args.log_json:
        atomic_write(args.log_json, json.dumps(res.rounds, indent=1, sort_keys=True).encode())


def _cmd_metrics(args):
    if args.metric == "rmse":
        val = rmse(read_points(args.test), read_points(args.reference), symmetric=args.symmetric)
        sys.stdout.write(f"rmse\n{val:.12g}\n")
    elif args.metric == "hist":
        rep = nn_histogram(read_points(args.inp), args.bins)
        log.info("NN distance mean %.6g, median %.6g", rep.mean, rep.median)
        _write_text(args.out, rep.to_csv())
    else:
        _write_text(args.out, energy_csv(energy_report(snapshot.load(args.state), args.per_atom)))


_COMMANDS = {"synth": _cmd_synth, "analyze": _cmd_analyze, "resample": _cmd_resample,
             "denoise": _cmd_denoise, "metrics": _cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help exits 0 through argparse
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _COMMANDS[args.command](args)
    except _UsageError as exc:
        sys.stderr.write(f"lpfield: error: {exc}\n")
        return EXIT_USAGE
    except (DataError, ValueError) as exc:
        sys.stderr.write(f"lpfield: data error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
