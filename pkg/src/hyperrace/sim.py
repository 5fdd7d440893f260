"""Deterministic fixed-step multi-agent simulation.

Each control tick runs the full pipeline per agent, in index order: LiDAR
scan, scan simplification, observable-set construction, opponent reach
tubes, safe-region convexification, local-planner target, MPC (or a
baseline controller directly), then the vehicle plant.  Identical
(scenario, seed) pairs produce bit-identical results; all randomness is the
seeded start jitter.
"""

from dataclasses import dataclass, field
import math
import time

import numpy as np

from . import kernels
from .control import (
    ControlInput,
    DisparityParams,
    INFEASIBLE,
    MpcParams,
    PurePursuitParams,
    VehicleState,
    disparity_extender,
    footprint_corners,
    pure_pursuit,
    solve_mpc,
    step_dynamics,
)
from .convexify import (
    SeparationProblem,
    mpcc_corridor,
    separate_bilevel,
    separate_constrained,
)
from .errors import ConfigError, Infeasible, NoGap, NoTarget
from .geom import Box2, OrientedRect, Point2, rect_overlap
from .reach import KinematicObstacle, compute_reachtube
from .sensing import (
    LidarConfig,
    augment_with_reach,
    observable_static,
    rdp_simplify,
    scan,
    scan_to_points,
)
from .world import Scenario

WALL = -1  # collision-pair partner id for wall contact


@dataclass
class SimConfig:
    """Rates, sensing and control parameters shared by every agent."""

    dt: float = 0.01
    control_period: float = 0.05  # 20 Hz controllers, zero-order hold between
    lidar: LidarConfig = field(default_factory=LidarConfig)
    rdp_epsilon: float = 0.05
    observable_d: float = 5.0
    reach_horizon: float = 0.5
    reach_steps: int = 10
    velocity_slack: float = 0.5
    margin: float = 0.05
    n_planes: int = 2
    pp_lookahead: float = 1.5
    mpc_lookahead: float = 2.0
    v_max: float = 8.0
    a_max: float = 6.0
    steer_max: float = 0.4
    mpc_horizon: int = 20
    mpc_dt: float = 0.05
    corner_margin: float = 0.04
    w_pos: float = 1.0
    w_heading: float = 0.0
    w_speed: float = 0.4
    w_input: float = 0.05
    w_input_rate: float = 0.5
    w_terminal: float = 8.0
    # closed-loop ticks stop the SQP earlier than the library default;
    # sub-milli cost differences do not change the applied input
    mpc_cost_tol: float = 5e-4

    @property
    def steps_per_control(self) -> int:
        return max(1, int(round(self.control_period / self.dt)))

    def mpc_params(self, agent_spec) -> MpcParams:
        return MpcParams(
            horizon=self.mpc_horizon,
            dt=self.mpc_dt,
            w_pos=self.w_pos,
            w_heading=self.w_heading,
            w_speed=self.w_speed,
            w_input=self.w_input,
            w_input_rate=self.w_input_rate,
            w_terminal=self.w_terminal,
            v_max=self.v_max,
            a_max=self.a_max,
            steer_max=self.steer_max,
            v_ref=agent_spec.target_speed,
            footprint_length=agent_spec.footprint_length,
            footprint_width=agent_spec.footprint_width,
            corner_margin=self.corner_margin,
            cost_tol=self.mpc_cost_tol,
        )


@dataclass
class WorldState:
    """Simulation time, per-agent (state, alive) and the episode RNG.

    ``collisions`` lists the events detected in the step that produced this
    state, as (i, j) index pairs (j == WALL for wall contact).
    """

    t: float
    agents: list  # [(VehicleState, alive), ...]
    rng: np.random.Generator
    collisions: list = field(default_factory=list)


@dataclass
class AgentObservation:
    """Everything one controller sees at a control tick."""

    t: float
    index: int
    state: VehicleState
    scan: object  # LidarScan or None when the controller needs no scan
    opponents: list  # [(index, VehicleState, alive), ...]
    scenario: Scenario
    config: SimConfig


@dataclass
class EpisodeResult:
    """Per-agent distance/efficiency plus collision bookkeeping."""

    distances: np.ndarray
    elapsed: np.ndarray
    efficiency: np.ndarray
    collision: tuple | None  # (time, (i, j)); j == WALL for wall contact
    race_duration: float
    seed: int

    @property
    def collided(self) -> bool:
        return self.collision is not None


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------


class BaseController:
    needs_scan = False

    def __init__(self, spec, config: SimConfig):
        self.spec = spec
        self.config = config
        self.current_input = ControlInput(0.0, 0.0)

    def reset(self, scenario: Scenario, index: int):
        self.current_input = ControlInput(0.0, 0.0)

    def control(self, obs: AgentObservation) -> ControlInput:  # pragma: no cover
        raise NotImplementedError

    def brake(self, obs) -> ControlInput:
        """Maximum braking, straight steering (the speed clamp stops at 0)."""
        return ControlInput(-self.config.a_max, 0.0)

    def diagnostics(self) -> dict:
        """Per-tick extras for traces (planes, reach boxes, timings)."""
        return {}


class PurePursuitController(BaseController):
    def __init__(self, spec, config):
        super().__init__(spec, config)
        self.params = PurePursuitParams(
            speed_ref=spec.target_speed,
            a_max=config.a_max,
            steer_max=config.steer_max,
        )

    def control(self, obs):
        _, u = pure_pursuit(
            obs.state, obs.scenario.track.centerline, self.config.pp_lookahead,
            self.params,
        )
        return u


class DisparityExtenderController(BaseController):
    needs_scan = True

    def __init__(self, spec, config):
        super().__init__(spec, config)
        self.params = DisparityParams(
            vehicle_half_width=0.5 * spec.footprint_width + 0.1,
            target_cap=config.observable_d,
        )

    def control(self, obs):
        try:
            target = disparity_extender(obs.scan, self.params)
        except NoGap:
            return self.brake(obs)
        bearing = math.atan2(target.y - obs.state.y, target.x - obs.state.x)
        alpha = (bearing - obs.state.heading + math.pi) % (2 * math.pi) - math.pi
        steer = float(np.clip(alpha, -self.config.steer_max, self.config.steer_max))
        # slow down in tight space and for sharp turns
        clearance = min(float(target.dist((obs.state.x, obs.state.y))),
                        self.config.observable_d)
        v_cmd = self.spec.target_speed * min(
            1.0, 0.25 + 0.75 * clearance / self.config.observable_d
        ) * max(0.3, 1.0 - 0.8 * abs(steer) / self.config.steer_max)
        accel = float(np.clip(4.0 * (v_cmd - obs.state.v),
                              -self.config.a_max, self.config.a_max))
        return ControlInput(accel, steer)


class MpcController(BaseController):
    """MPC constrained to a safe region from one of the three methods."""

    def __init__(self, spec, config):
        super().__init__(spec, config)
        self.method = spec.method if spec.controller == "mpc_hype" else "mpcc"
        if self.method not in ("constrained", "bilevel", "mpcc"):
            raise ConfigError(f"unknown convexification method {self.method!r}")
        self.planner = spec.planner
        if self.planner not in ("pp", "de"):
            raise ConfigError(f"unknown local planner {self.planner!r}")
        self.needs_scan = self.method != "mpcc" or self.planner == "de"
        self.params = config.mpc_params(spec)
        self.pp_params = PurePursuitParams(
            speed_ref=spec.target_speed, a_max=config.a_max,
            steer_max=config.steer_max,
        )
        self.de_params = DisparityParams(
            vehicle_half_width=0.5 * spec.footprint_width + 0.1,
            target_cap=config.observable_d,
        )
        self.reset(None, 0)

    def reset(self, scenario, index):
        super().reset(scenario, index)
        self.warm = None
        self.last_input = np.zeros(2)
        self.last_region = None
        self.last_tubes = []
        self.last_target = None
        self.timings = {}

    # -- pipeline pieces ----------------------------------------------------

    def _target(self, obs):
        if self.planner == "de":
            return disparity_extender(obs.scan, self.de_params)
        target, _ = pure_pursuit(
            obs.state, obs.scenario.track.centerline, self.config.mpc_lookahead,
            self.pp_params,
        )
        return target

    def _opponent_tubes(self, obs):
        cfg = self.config
        tubes = []
        for idx, state, alive in obs.opponents:
            if not alive:
                continue
            vx = state.v * math.cos(state.heading)
            vy = state.v * math.sin(state.heading)
            other = obs.scenario.agents[idx]
            obstacle = KinematicObstacle(
                Box2(state.position, state.position),
                Box2(
                    Point2(vx - cfg.velocity_slack, vy - cfg.velocity_slack),
                    Point2(vx + cfg.velocity_slack, vy + cfg.velocity_slack),
                ),
                footprint=(other.footprint_length, other.footprint_width),
            )
            tubes.append(
                compute_reachtube(obstacle, cfg.reach_horizon, steps=cfg.reach_steps)
            )
        return tubes

    def _region(self, obs, target, tubes):
        cfg = self.config
        corridor = mpcc_corridor(obs.scenario.track, (obs.state.x, obs.state.y))
        if self.method == "mpcc":
            return corridor
        pts = scan_to_points(obs.scan)
        if pts.shape[0] >= 2:
            pts = rdp_simplify(pts, cfg.rdp_epsilon)
        observable = observable_static(pts, (obs.state.x, obs.state.y), cfg.observable_d)
        observable = augment_with_reach(
            observable, tubes, (obs.state.x, obs.state.y), cfg.observable_d
        )
        if observable.empty:
            return corridor
        ego = footprint_corners(
            obs.state.x, obs.state.y, obs.state.heading,
            self.spec.footprint_length, self.spec.footprint_width,
        )
        try:
            problem = SeparationProblem(
                obstacles=observable,
                ego_corners=ego,
                target=target,
                n_planes=cfg.n_planes,
                margin=cfg.margin,
            )
            if self.method == "bilevel":
                return separate_bilevel(problem)
            return separate_constrained(problem, self.spec.objective)
        except (Infeasible, ValueError):
            return corridor  # safe fallback: obstacle-blind track corridor

    def control(self, obs):
        try:
            target = self._target(obs)
        except (NoGap, NoTarget):
            self.warm = None
            return self.brake(obs)
        t0 = time.perf_counter()
        tubes = self._opponent_tubes(obs)
        t1 = time.perf_counter()
        region = self._region(obs, target, tubes)
        t2 = time.perf_counter()
        solution = solve_mpc(
            obs.state, region, target, self.params,
            u_init=self.warm, u_prev=self.last_input,
        )
        t3 = time.perf_counter()
        self.last_region = region
        self.last_tubes = tubes
        self.last_target = target
        self.timings = {"reach": t1 - t0, "convexify": t2 - t1, "mpc": t3 - t2}
        if solution.status == INFEASIBLE:
            self.warm = None
            u = self.brake(obs)
        else:
            # shift for the next warm start
            self.warm = np.vstack([solution.inputs[1:], solution.inputs[-1:]])
            u = solution.first_input
        self.last_input = u.as_array()
        return u

    def diagnostics(self):
        out = dict(self.timings)
        if self.last_region is not None:
            out["planes"] = self.last_region.planes
        if self.last_tubes:
            out["tubes"] = self.last_tubes
        if self.last_target is not None:
            out["target"] = self.last_target
        return out


_CONTROLLERS = {
    "pp": PurePursuitController,
    "de": DisparityExtenderController,
    "mpcc": MpcController,
    "mpc_hype": MpcController,
}


def build_controller(spec, config: SimConfig) -> BaseController:
    if spec.controller not in _CONTROLLERS:
        raise ConfigError(
            f"unknown controller id {spec.controller!r}; have {sorted(_CONTROLLERS)}"
        )
    return _CONTROLLERS[spec.controller](spec, config)


# ---------------------------------------------------------------------------
# Collision checks
# ---------------------------------------------------------------------------


def _agent_rect(state: VehicleState, spec) -> OrientedRect:
    return OrientedRect(
        state.position, state.heading, spec.footprint_length, spec.footprint_width
    )


class _WallChecker:
    """Wall contact test with a per-segment bounding-box prefilter."""

    def __init__(self, scenario: Scenario):
        self.seg_a, self.seg_b = scenario.segments
        self.lo = np.minimum(self.seg_a, self.seg_b)
        self.hi = np.maximum(self.seg_a, self.seg_b)

    def hits(self, rect: OrientedRect) -> bool:
        bb = rect.bounding_box()
        mask = ~(
            (self.hi[:, 0] < bb.lo.x)
            | (self.lo[:, 0] > bb.hi.x)
            | (self.hi[:, 1] < bb.lo.y)
            | (self.lo[:, 1] > bb.hi.y)
        )
        if not mask.any():
            return False
        a = self.seg_a[mask]
        b = self.seg_b[mask]
        return kernels.segments_hit_rect(
            a[:, 0], a[:, 1], b[:, 0], b[:, 1],
            rect.center.x, rect.center.y,
            math.cos(rect.heading), math.sin(rect.heading),
            0.5 * rect.length, 0.5 * rect.width,
        )


def detect_collisions(world: WorldState, scenario: Scenario, walls: _WallChecker):
    """All collision events among alive agents: pairs and wall contacts."""
    events = []
    rects = {}
    for i, (state, alive) in enumerate(world.agents):
        if alive:
            rects[i] = _agent_rect(state, scenario.agents[i])
    idx = sorted(rects)
    for a in range(len(idx)):
        for b in range(a + 1, len(idx)):
            i, j = idx[a], idx[b]
            if rect_overlap(rects[i], rects[j]):
                events.append((i, j))
    for i in idx:
        if walls.hits(rects[i]):
            events.append((i, WALL))
    return events


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def step(
    world: WorldState,
    scenario: Scenario,
    controllers: list,
    dt: float,
    config: SimConfig,
    walls: _WallChecker | None = None,
    step_index: int = 0,
) -> WorldState:
    """One fixed step of the closed loop.

    Controllers fire on their multirate ticks (every ``steps_per_control``
    plant steps) with zero-order hold between; controller failures brake the
    agent instead of aborting the episode.  Colliding agents are marked not
    alive; the events land in the returned state's ``collisions``.
    """
    walls = walls or _WallChecker(scenario)
    tick = step_index % config.steps_per_control == 0
    agents = list(world.agents)
    for i, controller in enumerate(controllers):
        state, alive = agents[i]
        if not alive:
            continue
        if tick:
            obs = AgentObservation(
                t=world.t,
                index=i,
                state=state,
                scan=scan(state, scenario, config.lidar)
                if controller.needs_scan
                else None,
                opponents=[
                    (j, s, a) for j, (s, a) in enumerate(agents) if j != i
                ],
                scenario=scenario,
                config=config,
            )
            try:
                u = controller.control(obs)
            except Exception:
                u = controller.brake(obs)
            controller.current_input = ControlInput(
                float(np.clip(u.accel, -config.a_max, config.a_max)),
                float(np.clip(u.steer, -config.steer_max, config.steer_max)),
            )
        new_state = step_dynamics(
            state, controller.current_input, dt,
            config.mpc_params(scenario.agents[i]).wheelbase,
            v_max=config.v_max,
        )
        agents[i] = (new_state, alive)

    new_world = WorldState(world.t + dt, agents, world.rng)
    events = detect_collisions(new_world, scenario, walls)
    new_world.collisions = events
    for i, j in events:
        si, _ = new_world.agents[i]
        new_world.agents[i] = (si, False)
        if j != WALL:
            sj, _ = new_world.agents[j]
            new_world.agents[j] = (sj, False)
    return new_world


def _jittered_agents(scenario: Scenario, rng: np.random.Generator):
    """Seeded start-pose jitter along/across the centerline, re-validated."""
    if scenario.jitter_along == 0.0 and scenario.jitter_lateral == 0.0:
        return [spec.state for spec in scenario.agents]
    track = scenario.track
    for _ in range(20):
        states = []
        for spec in scenario.agents:
            s0, _, _, _ = track.frame((spec.state.x, spec.state.y))
            ds = rng.uniform(-scenario.jitter_along, scenario.jitter_along)
            dl = rng.uniform(-scenario.jitter_lateral, scenario.jitter_lateral)
            s_new = s0 + ds
            pos = track.point_at(s_new) + dl * track.left_normal_at(s_new)
            states.append(
                VehicleState(
                    float(pos[0]), float(pos[1]),
                    track.heading_at(s_new), spec.state.v,
                )
            )
        ok = True
        rects = [
            OrientedRect(st.position, st.heading, sp.footprint_length, sp.footprint_width)
            for st, sp in zip(states, scenario.agents)
        ]
        for r in rects:
            if not all(scenario.drivable(c) for c in r.corners()):
                ok = False
        for a in range(len(rects)):
            for b in range(a + 1, len(rects)):
                if rect_overlap(rects[a], rects[b]):
                    ok = False
        if ok:
            return states
    return [spec.state for spec in scenario.agents]  # give up: nominal starts


def run_episode(
    scenario: Scenario,
    controllers: list | None = None,
    seed: int = 0,
    config: SimConfig | None = None,
    trace=None,
) -> EpisodeResult:
    """Run one episode to its duration or the first ego-involved collision.

    Deterministic: identical (scenario, seed) pairs give bit-identical
    results.  ``trace`` is an optional TraceWriter.
    """
    config = config or SimConfig()
    if controllers is None:
        controllers = [build_controller(spec, config) for spec in scenario.agents]
    if len(controllers) != len(scenario.agents):
        raise ConfigError("one controller per agent required")

    rng = np.random.default_rng([scenario.seed, seed])
    states = _jittered_agents(scenario, rng)
    for i, c in enumerate(controllers):
        c.reset(scenario, i)
    world = WorldState(0.0, [(s, True) for s in states], rng)
    walls = _WallChecker(scenario)
    n = len(states)

    distances = np.zeros(n)
    elapsed = np.zeros(n)
    first_collision = None
    race_end = None

    # spawn overlap counts as an immediate collision at t = 0
    initial = detect_collisions(world, scenario, walls)
    if initial:
        i, j = initial[0]
        first_collision = (0.0, (i, j))
        race_end = 0.0
    else:
        n_steps = int(round(scenario.duration / config.dt))
        for k in range(n_steps):
            prev = [s for s, _ in world.agents]
            prev_alive = [a for _, a in world.agents]
            world = step(world, scenario, controllers, config.dt, config, walls, k)
            for i, (s, _) in enumerate(world.agents):
                if prev_alive[i]:
                    distances[i] += math.hypot(s.x - prev[i].x, s.y - prev[i].y)
                    elapsed[i] += config.dt
            if trace is not None and k % config.steps_per_control == 0:
                trace.record(world, scenario, controllers)
            events = world.collisions
            if events and first_collision is None:
                i, j = events[0]
                first_collision = (world.t, (i, j))
            if events and any(0 in (i, j) for i, j in events):
                race_end = world.t  # ego involved: episode over
                break
            if not any(alive for _, alive in world.agents):
                race_end = world.t
                break

    if race_end is None:
        race_end = min(world.t, scenario.duration)
    race_duration = first_collision[0] if first_collision else race_end
    efficiency = np.where(elapsed > 0, distances / np.maximum(elapsed, 1e-12), 0.0)
    return EpisodeResult(
        distances=distances,
        elapsed=elapsed,
        efficiency=efficiency,
        collision=first_collision,
        race_duration=float(race_duration),
        seed=seed,
    )


def aggregate_safety(results: list) -> float:
    """Percentage of episodes without any collision."""
    if not results:
        raise ValueError("need at least one episode result")
    clean = sum(1 for r in results if not r.collided)
    return 100.0 * clean / len(results)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


class TraceWriter:
    """Line-per-record episode trace: poses, planes, reach boxes, timings."""

    def __init__(self, fh):
        self.fh = fh

    def record(self, world: WorldState, scenario: Scenario, controllers: list):
        t = world.t
        r = lambda v: repr(float(v))  # noqa: E731 - numpy scalars repr poorly
        for i, (s, alive) in enumerate(world.agents):
            self.fh.write(
                f"state t={t:.4f} agent={i} x={r(s.x)} y={r(s.y)} "
                f"psi={r(s.heading)} v={r(s.v)} alive={int(alive)}\n"
            )
        for i, c in enumerate(controllers):
            diag = c.diagnostics()
            planes = diag.get("planes")
            if planes:
                spec = ";".join(
                    f"{r(h.a[0])},{r(h.a[1])},{r(h.b)}" for h in planes
                )
                self.fh.write(f"planes t={t:.4f} agent={i} {spec}\n")
            tubes = diag.get("tubes")
            if tubes:
                boxes = ";".join(
                    f"{r(b.lo.x)},{r(b.lo.y)},{r(b.hi.x)},{r(b.hi.y)}"
                    for tube in tubes
                    for _, b in tube.steps
                )
                self.fh.write(f"reach t={t:.4f} agent={i} {boxes}\n")
            target = diag.get("target")
            if target is not None:
                self.fh.write(
                    f"target t={t:.4f} agent={i} {r(target.x)},{r(target.y)}\n"
                )
            timing = {k: v for k, v in diag.items() if k in ("reach", "convexify", "mpc")}
            if timing:
                parts = " ".join(f"{k}={v:.6f}" for k, v in sorted(timing.items()))
                self.fh.write(f"timing t={t:.4f} agent={i} {parts}\n")
