"""Experiment harness: offline convexification benchmarks, obstacle-count
scaling sweeps and closed-loop experiment matrices, all emitting seeded,
reproducible CSV files.

Wall-clock timing wraps only the convexification call itself (sensing and
problem construction are excluded).  Everything except measured times is
deterministic per (config, seed), so matrix CSVs are byte-identical across
reruns; bench CSVs necessarily differ in their time columns.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import csv
import math
import time

import numpy as np
import yaml

from .control import footprint_corners
from .convexify import (
    OBJECTIVES,
    SATISFIABILITY,
    SeparationProblem,
    inscribed_radius_quality,
    mpcc_corridor,
    separate_bilevel,
    separate_constrained,
)
from .errors import ConfigError, Infeasible, ParseError
from .geom import Box2, Point2
from .reach import KinematicObstacle, compute_reachtube
from .sensing import (
    LidarConfig,
    ObservableSet,
    augment_with_reach,
    observable_static,
    rdp_simplify,
    scan,
    scan_to_points,
)
from .sim import SimConfig, aggregate_safety, run_episode
from .world import AgentSpec, Scenario, Track, get_track
from .control import VehicleState

FORMAT_VERSION = 1

METHODS = ("mpcc", "constrained", "bilevel")

SCALING_COUNTS = (10, 50, 100, 500, 1000, 2000)
SCALING_TIMEOUT_S = 10.0


@dataclass
class BenchRecord:
    """Aggregated offline-benchmark row for one (scenario, method, objective)."""

    scenario: str
    method: str
    objective: str
    n_obstacles: float
    mean_time: float
    mean_planes: float
    mean_radius: float
    n_poses: int
    n_infeasible: int
    seed: int


@dataclass
class OpponentSpec:
    """Opponent placement for the offline overtaking benchmark."""

    s_offset: float  # station along the centerline
    lateral: float = 0.0
    speed: float = 0.0


def _fmt(x) -> str:
    if isinstance(x, float):  # incl. numpy scalars, which repr verbosely
        return repr(float(x))
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _solve_timed(method, objective, problem, track, ego_xy):
    """(region | None, elapsed seconds); times only the convexification."""
    if method == "mpcc":
        t0 = time.perf_counter()
        region = mpcc_corridor(track, ego_xy)
        return region, time.perf_counter() - t0
    if method == "constrained":
        t0 = time.perf_counter()
        try:
            region = separate_constrained(problem, objective)
        except Infeasible:
            return None, time.perf_counter() - t0
        return region, time.perf_counter() - t0
    if method == "bilevel":
        t0 = time.perf_counter()
        try:
            region = separate_bilevel(problem)
        except Infeasible:
            return None, time.perf_counter() - t0
        return region, time.perf_counter() - t0
    raise ConfigError(f"unknown method {method!r}; have {METHODS}")


# ---------------------------------------------------------------------------
# Offline benchmark (predefined path, optional opponents)
# ---------------------------------------------------------------------------


def bench_offline(
    track: Track,
    path_spec: tuple,
    opponents: list,
    methods: tuple = METHODS,
    objectives: tuple = (SATISFIABILITY,),
    seeds: tuple = (0,),
    label: str | None = None,
    config: SimConfig | None = None,
) -> list:
    """Replay ego poses along the centerline and benchmark each method.

    ``path_spec`` is (s_start, s_end, step); ``opponents`` a list of
    OpponentSpec placed relative to the track (their reach tubes enter the
    observable set).  Infeasible solves are counted, not fatal.
    """
    config = config or SimConfig()
    s_start, s_end, step = path_spec
    label = label or (track.name or "track")
    bare = Scenario(track=track, static_obstacles=[], agents=[])
    stations = np.arange(s_start, s_end, step)

    cells = {}
    for method in methods:
        for objective in objectives if method == "constrained" else ("-",):
            cells[(method, objective)] = {
                "times": [], "planes": [], "radii": [], "infeasible": 0,
            }

    n_obs_total = 0
    n_poses = 0
    for seed in seeds:
        rng = np.random.default_rng([seed, 17])
        tubes = []
        for opp in opponents:
            s_opp = opp.s_offset + rng.uniform(-0.25, 0.25)
            lat = opp.lateral + rng.uniform(-0.1, 0.1)
            pos = track.point_at(s_opp) + lat * track.left_normal_at(s_opp)
            heading = track.heading_at(s_opp)
            vx = opp.speed * math.cos(heading)
            vy = opp.speed * math.sin(heading)
            obstacle = KinematicObstacle(
                Box2(Point2(*pos), Point2(*pos)),
                Box2(
                    Point2(vx - config.velocity_slack, vy - config.velocity_slack),
                    Point2(vx + config.velocity_slack, vy + config.velocity_slack),
                ),
                footprint=(0.5, 0.3),
            )
            tubes.append(
                compute_reachtube(obstacle, config.reach_horizon,
                                  steps=config.reach_steps)
            )

        for s in stations:
            ego_xy = track.point_at(s)
            heading = track.heading_at(s)
            pose = ((float(ego_xy[0]), float(ego_xy[1])), heading)
            lidar = scan(pose, bare, config.lidar)
            pts = scan_to_points(lidar)
            if pts.shape[0] >= 2:
                pts = rdp_simplify(pts, config.rdp_epsilon)
            observable = observable_static(pts, ego_xy, config.observable_d)
            observable = augment_with_reach(
                observable, tubes, ego_xy, config.observable_d
            )
            target_xy = track.point_at(s + config.mpc_lookahead)
            ego_corners = footprint_corners(
                ego_xy[0], ego_xy[1], heading, 0.5, 0.3
            )
            problem = SeparationProblem(
                obstacles=observable,
                ego_corners=ego_corners,
                target=Point2(*target_xy),
                n_planes=config.n_planes,
                margin=config.margin,
            )
            ego_center = problem.ego_center
            n_obs_total += observable.points.shape[0]
            n_poses += 1
            for (method, objective), cell in cells.items():
                region, elapsed = _solve_timed(
                    method, objective, problem, track, ego_xy
                )
                cell["times"].append(elapsed)
                if region is None:
                    cell["infeasible"] += 1
                    continue
                cell["planes"].append(len(region.planes))
                try:
                    r = inscribed_radius_quality(region, ego_center, problem.target)
                except Infeasible:
                    continue
                cell["radii"].append(r)

    records = []
    for (method, objective), cell in cells.items():
        records.append(
            BenchRecord(
                scenario=label,
                method=method,
                objective=objective,
                n_obstacles=n_obs_total / max(n_poses, 1),
                mean_time=float(np.mean(cell["times"])) if cell["times"] else 0.0,
                mean_planes=float(np.mean(cell["planes"])) if cell["planes"] else 0.0,
                mean_radius=float(np.mean(cell["radii"])) if cell["radii"] else float("nan"),
                n_poses=n_poses,
                n_infeasible=cell["infeasible"],
                seed=seeds[0],
            )
        )
    return records


def write_offline_csv(records: list, path) -> None:
    _write_csv(
        path,
        [
            "scenario", "method", "objective", "n_obstacles", "mean_time_s",
            "mean_planes", "mean_inscribed_r", "n_poses", "n_infeasible",
            "seed", "format_version",
        ],
        [
            (
                r.scenario, r.method, r.objective, r.n_obstacles, r.mean_time,
                r.mean_planes, r.mean_radius, r.n_poses, r.n_infeasible,
                r.seed, FORMAT_VERSION,
            )
            for r in records
        ],
    )


# ---------------------------------------------------------------------------
# Scaling benchmark (random point clouds of increasing size)
# ---------------------------------------------------------------------------


def scaling_points(rng: np.random.Generator, n: int, d: float, target_xy) -> np.ndarray:
    """Uniform annulus [1, d] around the origin, minus a 0.3 m corridor
    around the origin-target segment."""
    seg = np.asarray(target_xy, dtype=np.float64)
    seg_len2 = float(seg @ seg)
    out = []
    while len(out) < n:
        ang = rng.uniform(0.0, 2.0 * math.pi)
        r = math.sqrt(rng.uniform(1.0, d * d))  # uniform by area
        q = np.array([r * math.cos(ang), r * math.sin(ang)])
        lam = np.clip((q @ seg) / seg_len2, 0.0, 1.0)
        if np.linalg.norm(q - lam * seg) < 0.3:
            continue
        out.append(q)
    return np.array(out)


def bench_scaling(
    point_counts: tuple = SCALING_COUNTS,
    methods: tuple = ("constrained", "bilevel"),
    objectives: tuple = OBJECTIVES,
    seeds: tuple = (0, 1, 2),
    d: float = 5.0,
    timeout_s: float = SCALING_TIMEOUT_S,
) -> list:
    """Rows of (count, method, objective, seed, time, feasible, timeout).

    Solves are not preempted; a solve slower than ``timeout_s`` is flagged
    after the fact.
    """
    if list(point_counts) != sorted(point_counts):
        raise ConfigError("point counts must be ascending")
    target = (2.0, 0.0)
    ego_corners = footprint_corners(0.0, 0.0, 0.0, 0.5, 0.3)
    rows = []
    for count in point_counts:
        for seed in seeds:
            rng = np.random.default_rng([seed, count])
            pts = scaling_points(rng, count, d, target)
            problem = SeparationProblem(
                obstacles=ObservableSet(pts, d),
                ego_corners=ego_corners,
                target=Point2(*target),
                n_planes=2,
            )
            for method in methods:
                for objective in objectives if method == "constrained" else ("-",):
                    region, elapsed = _solve_timed(
                        method, objective, problem, None, None
                    )
                    rows.append(
                        {
                            "n_points": count,
                            "method": method,
                            "objective": objective,
                            "seed": seed,
                            "time_s": elapsed,
                            "feasible": int(region is not None),
                            "timeout": int(elapsed > timeout_s),
                        }
                    )
    return rows


def write_scaling_csv(rows: list, path) -> None:
    _write_csv(
        path,
        ["n_points", "method", "objective", "seed", "time_s", "feasible",
         "timeout", "format_version"],
        [
            (
                r["n_points"], r["method"], r["objective"], r["seed"],
                r["time_s"], r["feasible"], r["timeout"], FORMAT_VERSION,
            )
            for r in rows
        ],
    )


# ---------------------------------------------------------------------------
# Closed-loop experiment matrix
# ---------------------------------------------------------------------------

_ROW_KEYS = {
    "track", "approach", "planner", "method", "objective", "opponent",
    "opponent_planner", "runs", "duration", "base_seed", "ego_start",
    "opponent_start", "target_speed", "opponent_speed",
}


def _load_experiment(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as e:
        raise ParseError(f"malformed experiment file {path}: {e}") from e
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    if not isinstance(raw, dict) or "rows" not in raw:
        raise ParseError("experiment file must be a mapping with a 'rows' list")
    return raw


def _row_scenario(row: dict) -> Scenario:
    track = get_track(str(row.get("track", "porto-like")))
    ego_s = float(row.get("ego_start", {}).get("s", 2.0))
    agents = [
        AgentSpec(
            state=VehicleState(
                *track.point_at(ego_s), track.heading_at(ego_s), 0.0
            ),
            controller=str(row.get("approach", "mpc_hype")),
            planner=str(row.get("planner", "pp")),
            method=str(row.get("method", "constrained")),
            objective=str(row.get("objective", "sat")),
            target_speed=float(row.get("target_speed", 3.0)),
        )
    ]
    opponent = row.get("opponent", "none")
    if opponent and str(opponent) != "none":
        opp_s = float(row.get("opponent_start", {}).get("s", ego_s + 4.0))
        agents.append(
            AgentSpec(
                state=VehicleState(
                    *track.point_at(opp_s), track.heading_at(opp_s), 0.0
                ),
                controller=str(opponent),
                planner=str(row.get("opponent_planner", "pp")),
                target_speed=float(row.get("opponent_speed", 3.0)),
            )
        )
    return Scenario(
        track=track,
        static_obstacles=[],
        agents=agents,
        duration=float(row.get("duration", 60.0)),
        jitter_along=0.5,
        jitter_lateral=0.15,
    )


def _run_cell(row: dict, seed: int, config: SimConfig | None = None):
    scenario = _row_scenario(row)
    return run_episode(scenario, seed=seed, config=config)


def run_matrix(path, out_csv=None, workers: int = 1, config: SimConfig | None = None):
    """Execute every experiment row and aggregate Table-style statistics.

    Returns the summary rows; optionally writes them as CSV.  Deterministic
    under fixed seeds regardless of ``workers``.
    """
    raw = _load_experiment(path)
    defaults = raw.get("defaults", {}) or {}
    rows = raw["rows"]
    if not isinstance(rows, list) or not rows:
        raise ParseError("experiment 'rows' must be a non-empty list")

    merged = []
    for i, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ParseError(f"experiment row #{i} must be a mapping")
        full = dict(defaults)
        full.update(row)
        unknown = set(full) - _ROW_KEYS
        if unknown:
            raise ConfigError(f"experiment row #{i}: unknown fields {sorted(unknown)}")
        merged.append(full)

    cells = []
    for i, row in enumerate(merged):
        runs = int(row.get("runs", 30))
        base_seed = int(row.get("base_seed", 0))
        for r in range(runs):
            cells.append((i, row, base_seed + r))

    results = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (i, seed, pool.submit(_run_cell, row, seed, config))
                for i, row, seed in cells
            ]
            for i, seed, fut in futures:
                results[(i, seed)] = fut.result()
    else:
        for i, row, seed in cells:
            results[(i, seed)] = _run_cell(row, seed, config)

    summary = []
    for i, row in enumerate(merged):
        runs = int(row.get("runs", 30))
        base_seed = int(row.get("base_seed", 0))
        episodes = [results[(i, base_seed + r)] for r in range(runs)]
        ego_eff = float(np.mean([e.efficiency[0] for e in episodes]))
        has_opp = len(episodes[0].efficiency) > 1
        opp_eff = (
            float(np.mean([e.efficiency[1:].mean() for e in episodes]))
            if has_opp
            else float("nan")
        )
        summary.append(
            {
                "track": str(row.get("track", "porto-like")),
                "approach": str(row.get("approach", "mpc_hype")),
                "local_planner": str(row.get("planner", "pp")),
                "opponent": str(row.get("opponent", "none")),
                "runs": runs,
                "duration_s": float(row.get("duration", 60.0)),
                "ego_efficiency_mps": ego_eff,
                "opponent_efficiency_mps": opp_eff,
                "mean_race_duration_s": float(
                    np.mean([e.race_duration for e in episodes])
                ),
                "safety_pct": aggregate_safety(episodes),
                "base_seed": base_seed,
            }
        )
    if out_csv is not None:
        write_matrix_csv(summary, out_csv)
    return summary


def write_matrix_csv(summary: list, path) -> None:
    header = [
        "track", "approach", "local_planner", "opponent", "runs", "duration_s",
        "ego_efficiency_mps", "opponent_efficiency_mps", "mean_race_duration_s",
        "safety_pct", "base_seed", "format_version",
    ]
    _write_csv(
        path,
        header,
        [
            tuple(row[k] for k in header[:-1]) + (FORMAT_VERSION,)
            for row in summary
        ],
    )


def format_matrix_table(summary: list) -> str:
    """Fixed-width text table of the matrix results."""
    header = (
        f"{'Track':<12} {'Approach':<10} {'Planner':<8} {'Opponent':<9} "
        f"{'EgoEff':>7} {'OppEff':>7} {'RaceDur':>8} {'Safety%':>8}"
    )
    lines = [header, "-" * len(header)]
    for row in summary:
        opp_eff = row["opponent_efficiency_mps"]
        opp_txt = f"{opp_eff:7.2f}" if not math.isnan(opp_eff) else "      -"
        lines.append(
            f"{row['track']:<12} {row['approach']:<10} {row['local_planner']:<8} "
            f"{row['opponent']:<9} {row['ego_efficiency_mps']:7.2f} {opp_txt} "
            f"{row['mean_race_duration_s']:8.2f} {row['safety_pct']:8.2f}"
        )
    return "\n".join(lines)
