"""Command-line front end: experiment configuration, sweeps, output files.

Exit codes: 0 success, 2 malformed config file, 3 invalid configuration
combination, 4 unwritable output path.  All numeric output is serialized
with 12 significant digits and "\\n" line endings; records are sorted
canonically before writing, so output files are byte-identical for
identical (config, overrides) regardless of --jobs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from .algorithms import AlgorithmKind, ConvergenceCriteria
from .montecarlo import (ExperimentConfig, TrialRecord, aggregate,
                         gen_channels, init_transceivers, run_sweep,
                         snr_to_budget, _run_trial)
from .network import NetworkDims
from .solvers import SolverTolerances

TRIAL_HEADER = ("snr_db,algorithm,mode,streams,trial,seed,sum_rate_bits,"
                "tstinr,iterations,converged,max_sigma_ratio,wall_ms")
SUMMARY_HEADER = ("snr_db,algorithm,mode,streams,trials_ok,mean_sum_rate,"
                  "std_sum_rate,mean_iters,fail_frac,mean_wall_ms")

_KNOWN_KEYS = {"dims", "algorithms", "snr_db", "trials", "seed", "mode",
               "tolerances", "streams", "timing", "criteria"}
_DIM_KEYS = {"K", "R", "M", "N", "L", "d"}

_ALGO_BY_NAME = {kind.value: kind for kind in AlgorithmKind}


class ConfigError(Exception):
    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def _num(x):
    return format(float(x), ".12g")


def _as_list(value, K, name):
    if isinstance(value, (int, float)):
        return [int(value)] * K
    if isinstance(value, list) and len(value) == K:
        return [int(v) for v in value]
    raise ConfigError(f"key dims.{name} must be a scalar or a length-K list", 2)


def _parse_kinds(names):
    kinds = []
    for name in names:
        if name not in _ALGO_BY_NAME:
            raise ConfigError(
                f"unknown algorithm {name!r}; choose from "
                f"{sorted(_ALGO_BY_NAME)}", 3)
        kinds.append(_ALGO_BY_NAME[name])
    return tuple(kinds)


def parse_config(path, overrides=None) -> ExperimentConfig:
    """Load a JSON config file and apply inline overrides (which win)."""
    overrides = overrides or {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", 2)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed config file at line {exc.lineno}: {exc.msg}", 2)
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object", 2)
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}", 2)
    if "dims" not in raw:
        raise ConfigError("config must contain a dims object", 2)
    dims_raw = raw["dims"]
    unknown = set(dims_raw) - _DIM_KEYS
    if unknown:
        raise ConfigError(f"unknown dims keys: {sorted(unknown)}", 2)
    try:
        K = int(dims_raw["K"])
        R = int(dims_raw["R"])
    except KeyError as exc:
        raise ConfigError(f"dims is missing key {exc.args[0]}", 2)
    try:
        dims = NetworkDims(
            K, R,
            tuple(_as_list(dims_raw.get("M", 1), K, "M")),
            tuple(_as_list(dims_raw.get("N", 1), K, "N")),
            tuple(_as_list(dims_raw.get("L", 1), R, "L")),
            tuple(_as_list(dims_raw.get("d", 1), K, "d")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), 3)

    algo_names = overrides.get("algo") or raw.get("algorithms", ["tstinr-total"])
    kinds = _parse_kinds(algo_names)
    snr_db = overrides.get("snr") or raw.get(
        "snr_db", [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0])
    trials = overrides.get("trials") or raw.get("trials", 100)
    seed = overrides.get("seed")
    if seed is None:
        seed = raw.get("seed", 1)
    mode = overrides.get("mode") or raw.get("mode", "total")
    if mode not in ("total", "individual"):
        raise ConfigError(f"mode must be total or individual, got {mode!r}", 3)
    schemes = overrides.get("streams") or raw.get("streams")
    tol_raw = raw.get("tolerances", {})
    try:
        tolerances = SolverTolerances(**tol_raw)
    except TypeError as exc:
        raise ConfigError(f"bad tolerances: {exc}", 2)
    crit_raw = raw.get("criteria", {})
    try:
        criteria = ConvergenceCriteria(**crit_raw)
    except TypeError as exc:
        raise ConfigError(f"bad criteria: {exc}", 2)
    timing = overrides.get("timing")
    if timing is None:
        timing = bool(raw.get("timing", False))

    for kind in kinds:
        if kind.constraint_mode != mode and len(kinds) >= 1:
            # Algorithm kinds carry their own constraint mode; the config
            # mode must agree with every requested kind.
            raise ConfigError(
                f"algorithm {kind.value} uses {kind.constraint_mode} relay "
                f"constraints but the config requests mode={mode}", 3)
        if kind.constraint_mode == "individual" and not kind.is_wmmse:
            for scheme in (schemes or [dims.d]):
                for k, dk in enumerate(scheme):
                    if 2 * dims.M[k] * dk < dims.R + 1:
                        raise ConfigError(
                            f"individual mode infeasible for user {k}: the "
                            f"requirement 2*M_k*d_k >= R+1 fails "
                            f"(2*{dims.M[k]}*{dk} < {dims.R + 1})", 3)
    try:
        return ExperimentConfig(
            dims=dims, kinds=kinds, snr_db=tuple(snr_db), trials=int(trials),
            master_seed=int(seed), criteria=criteria, tolerances=tolerances,
            schemes=tuple(tuple(s) for s in schemes) if schemes else None,
            mode=mode, timing=bool(timing),
            collect_traces=bool(overrides.get("trace", False)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), 3)


def _trial_row(rec: TrialRecord, mode):
    return [
        _num(rec.snr_db), rec.kind.value, mode,
        ",".join(str(d) for d in rec.scheme), str(rec.trial), str(rec.seed),
        _num(rec.sum_rate), _num(rec.tstinr), str(rec.iterations),
        "1" if rec.converged else "0", _num(rec.max_sigma_ratio),
        _num(rec.wall_ms),
    ]


def _summary_row(row, mode):
    return [
        _num(row.snr_db), row.kind.value, mode,
        ",".join(str(d) for d in row.scheme), str(row.trials_ok),
        _num(row.mean_sum_rate), _num(row.std_sum_rate),
        _num(row.mean_iterations), _num(row.fail_frac), _num(row.mean_wall_ms),
    ]


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header.split(","))
    for row in rows:
        writer.writerow(row)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}", 4)


def emit_output(records, summaries, mode, out_dir, fmt="csv",
                write_traces=False):
    """Write trials.csv, summary.csv (or .json) and optional trace files."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}", 4)
    trial_path = os.path.join(out_dir, "trials.csv")
    _write_csv(trial_path, TRIAL_HEADER,
               [_trial_row(r, mode) for r in records])
    paths = [trial_path]
    if fmt == "json":
        summary_path = os.path.join(out_dir, "summary.json")
        payload = [dict(zip(SUMMARY_HEADER.split(","), _summary_row(s, mode)))
                   for s in summaries]
        try:
            with open(summary_path, "w", encoding="utf-8", newline="") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise ConfigError(f"cannot write {summary_path}: {exc}", 4)
    else:
        summary_path = os.path.join(out_dir, "summary.csv")
        _write_csv(summary_path, SUMMARY_HEADER,
                   [_summary_row(s, mode) for s in summaries])
    paths.append(summary_path)
    if write_traces:
        for rec in records:
            if rec.trace is None:
                continue
            name = (f"trace_snr{format(rec.snr_db, 'g')}_{rec.kind.value}"
                    f"_d{'-'.join(str(d) for d in rec.scheme)}"
                    f"_t{rec.trial}.csv")
            path = os.path.join(out_dir, name)
            rows = [[str(i), _num(f), _num(c), _num(ts), _num(sr)]
                    for i, f, c, ts, sr in rec.trace]
            _write_csv(path, "iteration,f,C,tstinr,sum_rate", rows)
            paths.append(path)
    return paths


def _overrides_from_args(args):
    ov = {}
    if args.snr is not None:
        ov["snr"] = [float(s) for s in args.snr.split(",")]
    if args.trials is not None:
        ov["trials"] = args.trials
    if args.seed is not None:
        ov["seed"] = args.seed
    if args.algo is not None:
        ov["algo"] = args.algo.split(",")
    if args.streams is not None:
        ov["streams"] = [[int(d) for d in grp.split(",")]
                         for grp in args.streams.split(";")]
    if args.mode is not None:
        ov["mode"] = args.mode
    if getattr(args, "trace", False):
        ov["trace"] = True
    if getattr(args, "timing", None) is not None:
        ov["timing"] = args.timing
    return ov


def cmd_sweep(args):
    config = parse_config(args.config, _overrides_from_args(args))
    jobs = args.jobs if args.jobs is not None \
        else int(os.environ.get("RELAYOPT_JOBS", "1"))
    records = run_sweep(config, jobs=jobs)
    summaries = aggregate(records)
    paths = emit_output(records, summaries, config.mode, args.out,
                        fmt=args.format, write_traces=config.collect_traces)
    for path in paths:
        print(path)
    return 0


def cmd_single(args):
    ov = _overrides_from_args(args)
    ov.setdefault("trials", 1)
    config = parse_config(args.config, ov)
    records = _run_trial(config, args.snr_index, args.trial)
    for rec in records:
        status = "ok" if rec.ok else f"FAILED ({rec.error})"
        print(f"{rec.kind.value} d={','.join(map(str, rec.scheme))} "
              f"snr={format(rec.snr_db, 'g')} dB: sum_rate="
              f"{_num(rec.sum_rate)} tstinr={_num(rec.tstinr)} "
              f"iters={rec.iterations} {status}")
    if args.out:
        summaries = aggregate(records)
        emit_output(records, summaries, config.mode, args.out,
                    fmt=args.format, write_traces=config.collect_traces)
    return 0 if all(r.ok for r in records) else 1


def cmd_selftest(args):
    """Scalar analytic optimum plus bound/monotonicity spot checks."""
    from .algorithms import run as run_algo
    failures = []

    dims = NetworkDims.uniform(1, 1, 1, 1, 1, 1)
    budget = snr_to_budget(10.0, dims)  # p0 = 10, p_max = 10
    ones = np.ones((1, 1), dtype=complex)
    channels_unit = gen_channels(dims, 0)
    from .network import ChannelSet
    channels_unit = ChannelSet(((ones,),), ((ones,),))
    init = init_transceivers(dims, budget, channels_unit, 3)
    _, trace = run_algo(AlgorithmKind.TSTINR_SINGLE_TOTAL, channels_unit,
                        dims, budget, ConvergenceCriteria(), init)
    target = 100.0 / 21.0
    if abs(trace.tstinr[-1] - target) > 1e-6 * target:
        failures.append(
            f"scalar optimum: got {trace.tstinr[-1]:.9f}, want {target:.9f}")

    from .network import (build_effective, link_powers, sum_rate as rate_of,
                          tstinr as tstinr_of)
    rng = np.random.default_rng(2024)
    for i in range(300):
        K = int(rng.integers(1, 4))
        R = int(rng.integers(1, 4))
        d_dims = NetworkDims.uniform(K, R,
                                     int(rng.integers(1, 5)),
                                     int(rng.integers(1, 5)),
                                     int(rng.integers(1, 5)), 1)
        bud = snr_to_budget(float(rng.uniform(0, 20)), d_dims)
        chan = gen_channels(d_dims, int(rng.integers(0, 2 ** 31)))
        tx = init_transceivers(d_dims, bud, chan, int(rng.integers(0, 2 ** 31)))
        V = []
        for k in range(K):
            A = rng.standard_normal((d_dims.N[k], 1)) \
                + 1j * rng.standard_normal((d_dims.N[k], 1))
            V.append(np.linalg.qr(A)[0])
        tx = tx.replace(V=tuple(V))
        eff = build_effective(chan, tx, d_dims, bud)
        lhs = np.log2(1.0 + tstinr_of(link_powers(eff, tx, bud)))
        rhs = 2.0 * rate_of(eff, bud)
        if lhs > rhs + 1e-9:
            failures.append(f"throughput bound violated on draw {i}")
            break

    for seed in range(4):
        d_dims = NetworkDims.uniform(2, 2, 2, 2, 2, 1)
        bud = snr_to_budget(10.0, d_dims)
        chan = gen_channels(d_dims, 900 + seed)
        init = init_transceivers(d_dims, bud, chan, 1900 + seed)
        _, tr = run_algo(AlgorithmKind.TSTINR_SINGLE_TOTAL, chan, d_dims,
                         bud, ConvergenceCriteria(max_outer_iter=60), init)
        arr = np.array(tr.tstinr)
        if np.any(np.diff(arr) < -1e-8):
            failures.append(f"TSTINR trace not monotone for seed {900 + seed}")

    if failures:
        for msg in failures:
            print(f"FAIL: {msg}", file=sys.stderr)
        return 1
    print("selftest passed: scalar optimum, throughput bound, monotonicity")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="relayopt",
        description="Sum-rate transceiver optimization for two-hop MIMO AF "
                    "relay networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--snr", help="comma-separated SNR list in dB")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--algo", help="comma-separated algorithm names")
        p.add_argument("--streams",
                       help="semicolon-separated stream schemes, e.g. 1,1;2,2")
        p.add_argument("--mode", choices=["total", "individual"])
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--trace", action="store_true",
                       help="write per-run iteration traces")
        p.add_argument("--timing", action=argparse.BooleanOptionalAction,
                       default=None,
                       help="record wall-clock times (non-deterministic "
                            "output files)")

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo SNR sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="parallel workers (default $RELAYOPT_JOBS or 1)")
    p_sweep.set_defaults(func=cmd_sweep)
    p_sweep.set_defaults(out_required=True)

    p_single = sub.add_parser("single", help="run one trial and print results")
    add_common(p_single)
    p_single.add_argument("--snr-index", type=int, default=0)
    p_single.add_argument("--trial", type=int, default=0)
    p_single.set_defaults(func=cmd_single)

    p_self = sub.add_parser("selftest",
                            help="run built-in analytic and invariant checks")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "sweep" and not args.out:
        parser.error("sweep requires --out")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
