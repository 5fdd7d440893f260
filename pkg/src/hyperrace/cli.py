"""Command line harness.

Subcommands: ``bench-offline`` (predefined-path convexification benchmark),
``bench-scaling`` (obstacle-count sweep), ``race`` (closed-loop episodes or
experiment matrices), ``plot`` (static figures).  Exit codes: 0 success,
2 configuration/parse error, 3 scenario validation error.
"""

import argparse
import csv
import math
import sys

from . import bench
from .convexify import OBJECTIVES
from .errors import ConfigError, ParseError, ValidationError
from .sensing import LidarConfig
from .sim import SimConfig, TraceWriter, run_episode
from .world import BUNDLED_TRACKS, get_track, load_scenario


def _add_sim_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("pipeline parameters")
    g.add_argument("--lidar-beams", type=int, default=1080)
    g.add_argument("--rdp-epsilon", type=float, default=0.05)
    g.add_argument("--observable-d", type=float, default=5.0)
    g.add_argument("--reach-horizon", type=float, default=0.5)
    g.add_argument("--reach-dt", type=float, default=0.05)
    g.add_argument("--n-planes", type=int, default=2)
    g.add_argument("--margin", type=float, default=0.05)
    g.add_argument("--mpc-horizon", type=int, default=20)
    g.add_argument("--mpc-dt", type=float, default=0.05)
    g.add_argument("--w-pos", type=float, default=1.0)
    g.add_argument("--w-speed", type=float, default=0.4)
    g.add_argument("--w-input", type=float, default=0.05)
    g.add_argument("--w-input-rate", type=float, default=0.5)
    g.add_argument("--w-terminal", type=float, default=8.0)
    g.add_argument("--v-max", type=float, default=8.0)
    g.add_argument("--a-max", type=float, default=6.0)
    g.add_argument("--steer-max", type=float, default=0.4)


def _sim_config(args) -> SimConfig:
    reach_steps = max(1, int(round(args.reach_horizon / args.reach_dt)))
    return SimConfig(
        lidar=LidarConfig(beams=args.lidar_beams),
        rdp_epsilon=args.rdp_epsilon,
        observable_d=args.observable_d,
        reach_horizon=args.reach_horizon,
        reach_steps=reach_steps,
        margin=args.margin,
        n_planes=args.n_planes,
        mpc_horizon=args.mpc_horizon,
        mpc_dt=args.mpc_dt,
        w_pos=args.w_pos,
        w_speed=args.w_speed,
        w_input=args.w_input,
        w_input_rate=args.w_input_rate,
        w_terminal=args.w_terminal,
        v_max=args.v_max,
        a_max=args.a_max,
        steer_max=args.steer_max,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperrace",
        description="2D racing simulator and safe-region benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench-offline", help="predefined-path benchmark")
    p.add_argument("--track", default="porto-like", choices=sorted(BUNDLED_TRACKS))
    p.add_argument("--s-start", type=float, default=0.0)
    p.add_argument("--s-end", type=float, default=None,
                   help="default: full lap")
    p.add_argument("--path-step", type=float, default=0.5)
    p.add_argument("--opponents", type=int, default=0,
                   help="number of parked opponents ahead on the path")
    p.add_argument("--method", dest="methods", action="append",
                   choices=bench.METHODS, default=None,
                   help="repeatable; default: all three")
    p.add_argument("--objective", dest="objectives", action="append",
                   choices=OBJECTIVES, default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True)
    p.add_argument("--bench-serial", action="store_true", default=True,
                   help="timing benchmarks always run single-worker")
    _add_sim_args(p)

    p = sub.add_parser("bench-scaling", help="obstacle-count scaling sweep")
    p.add_argument("--counts", type=int, nargs="+",
                   default=list(bench.SCALING_COUNTS))
    p.add_argument("--method", dest="methods", action="append",
                   choices=("constrained", "bilevel"), default=None)
    p.add_argument("--objective", dest="objectives", action="append",
                   choices=OBJECTIVES, default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--timeout", type=float, default=bench.SCALING_TIMEOUT_S)
    p.add_argument("--observable-d", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.add_argument("--bench-serial", action="store_true", default=True)

    p = sub.add_parser("race", help="closed-loop episodes")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario YAML file")
    src.add_argument("--matrix", help="experiment matrix YAML file")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--trace", help="episode trace output (single scenario runs)")
    p.add_argument("--workers", type=int, default=1)
    _add_sim_args(p)

    p = sub.add_parser("plot", help="render figures from CSVs or traces")
    p.add_argument("--kind", required=True, choices=("scaling", "trace"))
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scenario", help="scenario file (track outline for traces)")
    p.add_argument("--timestamp", type=float, default=None)
    return parser


def _cmd_bench_offline(args) -> int:
    track = get_track(args.track)
    s_end = args.s_end if args.s_end is not None else track.total_length
    opponents = [
        bench.OpponentSpec(s_offset=args.s_start + (i + 1) * 3.0, lateral=0.35)
        for i in range(args.opponents)
    ]
    records = bench.bench_offline(
        track,
        (args.s_start, s_end, args.path_step),
        opponents,
        methods=tuple(args.methods or bench.METHODS),
        objectives=tuple(args.objectives or ("sat",)),
        seeds=tuple(args.seeds),
        config=_sim_config(args),
    )
    bench.write_offline_csv(records, args.out)
    for r in records:
        print(
            f"{r.scenario:<14} {r.method:<12} {r.objective:<10} "
            f"time={r.mean_time:.6f}s H={r.mean_planes:.2f} R={r.mean_radius:.3f} "
            f"infeasible={r.n_infeasible}/{r.n_poses}"
        )
    return 0


def _cmd_bench_scaling(args) -> int:
    rows = bench.bench_scaling(
        point_counts=tuple(args.counts),
        methods=tuple(args.methods or ("constrained", "bilevel")),
        objectives=tuple(args.objectives or OBJECTIVES),
        seeds=tuple(args.seeds),
        d=args.observable_d,
        timeout_s=args.timeout,
    )
    bench.write_scaling_csv(rows, args.out)
    print(f"wrote {len(rows)} scaling rows to {args.out}")
    return 0


def _cmd_race(args) -> int:
    config = _sim_config(args)
    if args.matrix:
        summary = bench.run_matrix(
            args.matrix, out_csv=args.out, workers=args.workers, config=config
        )
        print(bench.format_matrix_table(summary))
        return 0

    scenario = load_scenario(args.scenario)
    results = []
    for r in range(args.runs):
        seed = args.seed + r
        trace = None
        fh = None
        if args.trace and r == 0:
            fh = open(args.trace, "w", encoding="utf-8")
            trace = TraceWriter(fh)
        try:
            results.append(run_episode(scenario, seed=seed, config=config, trace=trace))
        finally:
            if fh is not None:
                fh.close()
    if args.out:
        _write_race_csv(results, scenario, args.out)
    for res in results:
        coll = "-" if res.collision is None else (
            f"t={res.collision[0]:.2f} pair={res.collision[1]}"
        )
        effs = " ".join(f"{e:.2f}" for e in res.efficiency)
        print(
            f"seed={res.seed} race_duration={res.race_duration:.2f}s "
            f"efficiency=[{effs}] collision={coll}"
        )
    return 0


def _write_race_csv(results, scenario, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["seed", "agent", "controller", "distance_m", "elapsed_s",
             "efficiency_mps", "race_duration_s", "collided",
             "collision_time_s", "collision_pair", "format_version"]
        )
        for res in results:
            for i, spec in enumerate(scenario.agents):
                ct = "" if res.collision is None else repr(res.collision[0])
                cp = "" if res.collision is None else (
                    f"{res.collision[1][0]}|{res.collision[1][1]}"
                )
                w.writerow(
                    [res.seed, i, spec.controller, repr(float(res.distances[i])),
                     repr(float(res.elapsed[i])), repr(float(res.efficiency[i])),
                     repr(res.race_duration), int(res.collided), ct, cp,
                     bench.FORMAT_VERSION]
                )


def _cmd_plot(args) -> int:
    from . import plotting

    scenario = load_scenario(args.scenario) if args.scenario else None
    plotting.plot(
        args.input, args.kind, args.out,
        scenario=scenario, timestamp=args.timestamp,
    )
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "bench-offline": _cmd_bench_offline,
    "bench-scaling": _cmd_bench_scaling,
    "race": _cmd_race,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ParseError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
