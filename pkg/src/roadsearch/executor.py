"""Scenario execution against a test subject.

The built-in subject is a deterministic kinematic bicycle driven by pure
pursuit on the right-lane center polyline.  It slows down for curvature it
can see within its lookahead window but previews no further, so it handles
straights and gentle bends cleanly while sharp turns entered at speed
produce genuine lane departures.  External subjects plug in through
``ExecutorInterface``; a newline-delimited JSON pipe adapter is provided
for out-of-process executors.
"""

import abc
import json
import math
import shlex
import subprocess
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from shapely.geometry import Polygon

from .errors import ExecutorError
from .geometry import (
    RoadSpec,
    SampledRoad,
    _circumradii,
    catmull_rom_sample,
    polyline_point_at,
    project_points,
    wrap_angle,
)
from .metrics import extract_failure_segment
from .scenario import (
    FailureRecord,
    ScenarioOutcome,
    TestScenario,
    outcome_from_json,
    scenario_to_json,
)

BOX_LENGTH = 4.2
BOX_WIDTH = 1.8
_BOX_DIAG = math.hypot(BOX_LENGTH, BOX_WIDTH)
_LOCAL_CORNERS = np.array(
    [
        [BOX_LENGTH / 2, BOX_WIDTH / 2],
        [BOX_LENGTH / 2, -BOX_WIDTH / 2],
        [-BOX_LENGTH / 2, -BOX_WIDTH / 2],
        [-BOX_LENGTH / 2, BOX_WIDTH / 2],
    ]
)


@dataclass(frozen=True)
class VehicleState:
    """Vehicle pose: position (m), heading (rad), speed (m/s)."""

    position: np.ndarray
    heading: float
    speed: float

    def __post_init__(self):
        pos = np.array(self.position, dtype=float).reshape(2)
        pos.flags.writeable = False
        object.__setattr__(self, "position", pos)
        if self.speed < 0:
            raise ValueError("speed must be non-negative")

    @property
    def bounding_box(self) -> np.ndarray:
        """Oriented rectangle corners (4, 2), counterclockwise."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        return self.position + _LOCAL_CORNERS @ rot.T


@dataclass(frozen=True)
class ExecutionTrace:
    """Time-ordered vehicle states with per-step lane measurements."""

    states: tuple[VehicleState, ...]
    oob_fractions: np.ndarray
    center_distances: np.ndarray

    def write_csv(self, fh) -> None:
        fh.write("step,x,y,heading,speed,center_distance,oob_fraction\n")
        for i, st in enumerate(self.states):
            fh.write(
                f"{i},{st.position[0]!r},{st.position[1]!r},{st.heading!r},"
                f"{st.speed!r},{self.center_distances[i]!r},{self.oob_fractions[i]!r}\n"
            )


class ExecutorCapabilities(NamedTuple):
    deterministic: bool
    reentrant: bool


class ExecutionResult(NamedTuple):
    trace: ExecutionTrace | None
    outcome: ScenarioOutcome


class ExecutorInterface(abc.ABC):
    """Contract between the search engines and a test subject."""

    capabilities: ExecutorCapabilities = ExecutorCapabilities(False, False)

    @abc.abstractmethod
    def execute(self, scenario: TestScenario) -> ExecutionResult:
        """Run one (pre-validated) scenario and report what happened."""


def oob_fraction(box, lane) -> float:
    """Fraction of the box area lying outside the lane polygon.

    ``box`` is a (4, 2) corner array, ``lane`` a simple polygon given as a
    vertex array or a prepared shapely Polygon.
    """
    box_poly = Polygon(np.asarray(box, dtype=float))
    if box_poly.area <= 0.0:
        raise ValueError("degenerate bounding box")
    lane_poly = lane if isinstance(lane, Polygon) else Polygon(np.asarray(lane, dtype=float))
    inside = box_poly.intersection(lane_poly).area
    frac = min(1.0, max(0.0, 1.0 - inside / box_poly.area))
    # Snap clipping noise so full containment / full departure are exact.
    if frac < 1e-12:
        return 0.0
    if frac > 1.0 - 1e-12:
        return 1.0
    return frac


def fitness(trace: ExecutionTrace, spec: RoadSpec) -> float:
    """Worst-moment margin to the lane center: min of w/2 - d over the trace.

    Minimized by the search; zero when the car center touches the lane
    boundary, negative once it leaves.
    """
    if len(trace.center_distances) == 0:
        raise ValueError("empty trace has no fitness")
    return spec.lane_width / 2.0 - float(np.max(trace.center_distances))


def detect_episodes(oob_fractions, tolerance: float) -> list[int]:
    """Onset indices of out-of-bound episodes in a per-step fraction series.

    An episode starts when the fraction reaches the tolerance and ends at
    the first step back below it; a new episode requires at least one
    recovered step in between.
    """
    onsets: list[int] = []
    in_episode = False
    for i, f in enumerate(oob_fractions):
        if not in_episode and f >= tolerance:
            onsets.append(i)
            in_episode = True
        elif in_episode and f < tolerance:
            in_episode = False
    return onsets


@dataclass(frozen=True)
class _RoadFrame:
    """Per-road data the driver and the OOB check need every step."""

    center: np.ndarray
    arcs: np.ndarray
    radii: np.ndarray
    lane_poly: Polygon
    half_width: float
    total: float
    fast_margin: float | None
    fast_end_margin: float


class BuiltinExecutor(ExecutorInterface):
    """Deterministic kinematic lane-keeping driver.

    Pure pursuit with lookahead max(min_lookahead, lookahead_time * v)
    steers toward the right-lane center; the target speed is the tightest
    curvature-limited speed sqrt(a_lat_max * r) visible inside the same
    lookahead window, capped by the scenario speed limit and the top speed.
    Steering is clamped to +-35 degrees and acceleration to +-3 m/s^2.
    """

    capabilities = ExecutorCapabilities(deterministic=True, reentrant=True)

    def __init__(
        self,
        dt: float = 0.05,
        wheelbase: float = 2.5,
        steer_limit: float = math.radians(35.0),
        accel_limit: float = 3.0,
        a_lat_max: float = 4.0,
        a_lat_slip: float = 6.0,
        lookahead_time: float = 0.8,
        min_lookahead: float = 5.0,
        top_speed: float = 25.0,
        sim_time_cap: float = 60.0,
        v_min_expected: float = 5.0,
        goal_tolerance: float = 4.0,
    ):
        self.dt = dt
        self.wheelbase = wheelbase
        self.steer_limit = steer_limit
        self.accel_limit = accel_limit
        self.a_lat_max = a_lat_max
        self.a_lat_slip = a_lat_slip
        self.lookahead_time = lookahead_time
        self.min_lookahead = min_lookahead
        self.top_speed = top_speed
        self.sim_time_cap = sim_time_cap
        self.v_min_expected = v_min_expected
        self.goal_tolerance = goal_tolerance

    # -- driving ---------------------------------------------------------

    def initial_state(self, road: SampledRoad) -> VehicleState:
        """Start pose: on the right-lane center, rear clear of the road start."""
        center = road.center_polyline_right_lane
        d = np.diff(center, axis=0)
        arcs = np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])
        start_arc = min(BOX_LENGTH / 2.0 + 0.4, 0.25 * float(arcs[-1]))
        pos = polyline_point_at(center, arcs, start_arc)
        i = min(int(np.searchsorted(arcs, start_arc, side="right")) - 1, len(d) - 1)
        i = max(i, 0)
        return VehicleState(
            position=pos, heading=math.atan2(d[i, 1], d[i, 0]), speed=0.0
        )

    def step(self, state: VehicleState, road: SampledRoad, speed_limit: float | None) -> VehicleState:
        """Advance one dt.  ``speed_limit`` is in m/s, None for unlimited."""
        frame = self._build_frame(road, None)
        arc, _ = project_points(state.position[None, :], frame.center)
        return self._step(state, frame, speed_limit, float(arc[0]))

    def _step(
        self,
        state: VehicleState,
        frame: _RoadFrame,
        speed_limit: float | None,
        arc: float,
    ) -> VehicleState:
        lookahead = max(self.min_lookahead, self.lookahead_time * state.speed)
        target = polyline_point_at(frame.center, frame.arcs, arc + lookahead)
        to_target = target - state.position
        dist = math.hypot(to_target[0], to_target[1])
        if dist < 1e-9:
            steer = 0.0
        else:
            alpha = float(
                wrap_angle(math.atan2(to_target[1], to_target[0]) - state.heading)
            )
            steer = math.atan2(2.0 * self.wheelbase * math.sin(alpha), dist)
            # Tires saturate: curvature is limited by the lateral-slip
            # envelope at the current speed, so a curve entered too fast is
            # understeered wide instead of tracked.
            cap = self.steer_limit
            if state.speed > 1.0:
                cap = min(
                    cap,
                    math.atan(self.a_lat_slip * self.wheelbase / state.speed**2),
                )
            steer = min(cap, max(-cap, steer))

        # Speed planning reacts to the curvature under the car, not ahead of
        # it: the driver brakes once a bend has begun, which is exactly what
        # makes sharp turns entered at speed fail while gentle ones are fine.
        i0 = max(0, int(np.searchsorted(frame.arcs, arc, side="right")) - 1)
        i1 = min(len(frame.radii), i0 + 2)
        r_local = float(np.min(frame.radii[i0:i1]))
        v_target = self.top_speed
        if math.isfinite(r_local):
            v_target = min(v_target, math.sqrt(self.a_lat_max * r_local))
        if speed_limit is not None:
            v_target = min(v_target, speed_limit)

        accel = (v_target - state.speed) / self.dt
        accel = min(self.accel_limit, max(-self.accel_limit, accel))

        v = state.speed
        x = state.position[0] + v * math.cos(state.heading) * self.dt
        y = state.position[1] + v * math.sin(state.heading) * self.dt
        heading = float(
            wrap_angle(state.heading + v / self.wheelbase * math.tan(steer) * self.dt)
        )
        speed = max(0.0, v + accel * self.dt)
        return VehicleState(position=np.array([x, y]), heading=heading, speed=speed)

    # -- execution -------------------------------------------------------

    def execute(self, scenario: TestScenario) -> ExecutionResult:
        t_start = time.perf_counter()
        road = catmull_rom_sample(scenario.road, scenario.spec)
        frame = self._build_frame(road, scenario.spec)
        limit = scenario.driving.speed_limit_ms
        tol = scenario.tolerance_threshold
        max_steps = min(
            math.ceil(4.0 * frame.total / (self.dt * self.v_min_expected)),
            math.ceil(self.sim_time_cap / self.dt),
        )

        state = self.initial_state(road)
        states: list[VehicleState] = []
        fracs: list[float] = []
        dists: list[float] = []
        onsets: list[tuple[float, float, int]] = []
        in_episode = False
        diverged = False

        goal_arc = frame.total - min(self.goal_tolerance, 0.25 * frame.total)
        for step_idx in range(max_steps):
            corners = state.bounding_box
            pts = np.vstack([state.position[None, :], corners])
            arcs_p, dists_p = project_points(pts, frame.center)
            arc = float(arcs_p[0])
            if arc >= goal_arc and step_idx > 0:
                break
            center_dist = float(dists_p[0])
            frac = self._oob(corners, arcs_p[1:], dists_p[1:], frame)

            states.append(state)
            fracs.append(frac)
            dists.append(center_dist)

            if not in_episode and frac >= tol:
                onsets.append((arc, frac, step_idx))
                in_episode = True
            elif in_episode and frac < tol:
                in_episode = False

            if frac >= 1.0:
                break

            state = self._step(state, frame, limit, arc)
            if not (
                math.isfinite(state.position[0])
                and math.isfinite(state.position[1])
                and math.isfinite(state.heading)
                and math.isfinite(state.speed)
            ):
                diverged = True
                break

        trace = ExecutionTrace(
            states=tuple(states),
            oob_fractions=np.array(fracs),
            center_distances=np.array(dists),
        )
        wall = time.perf_counter() - t_start
        max_frac = float(np.max(trace.oob_fractions)) if fracs else 0.0
        if diverged:
            outcome = ScenarioOutcome(
                scenario_id=scenario.id,
                valid=True,
                executed=False,
                failures=(),
                max_oob_fraction=max_frac,
                fitness=None,
                wall_time=wall,
                error="driver divergence: non-finite vehicle state",
            )
            return ExecutionResult(trace, outcome)

        failures = []
        for arc, frac, step_idx in onsets:
            rec = FailureRecord(
                arc_position=arc, oob_fraction=frac, segment_encoding="", timestep=step_idx
            )
            rec = rec.with_encoding(extract_failure_segment(road, rec).symbols)
            failures.append(rec)

        outcome = ScenarioOutcome(
            scenario_id=scenario.id,
            valid=True,
            executed=True,
            failures=tuple(failures),
            max_oob_fraction=max_frac,
            fitness=fitness(trace, scenario.spec),
            wall_time=wall,
        )
        return ExecutionResult(trace, outcome)

    # -- internals -------------------------------------------------------

    def _build_frame(self, road: SampledRoad, spec: RoadSpec | None) -> _RoadFrame:
        spec = spec if spec is not None else RoadSpec()
        center = road.center_polyline_right_lane
        d = np.diff(center, axis=0)
        arcs = np.concatenate([[0.0], np.cumsum(np.hypot(d[:, 0], d[:, 1]))])
        if len(center) >= 3:
            inner = _circumradii(center)
            radii = np.concatenate([[inner[0]], inner, [inner[-1]]])
        else:
            radii = np.full(len(center), np.inf)

        # The quick inside-the-lane test is sound only when corners keep a
        # margin covering chord sagitta at the tightest admissible radius.
        inner_r = spec.min_radius - spec.lane_width
        fast_margin = None
        if inner_r > 1.0:
            fast_margin = _BOX_DIAG**2 / (8.0 * inner_r) + 0.02
        return _RoadFrame(
            center=center,
            arcs=arcs,
            radii=radii,
            lane_poly=Polygon(road.lane_polygon_right),
            half_width=spec.lane_width / 2.0,
            total=float(arcs[-1]),
            fast_margin=fast_margin,
            fast_end_margin=1.5 * _BOX_DIAG,
        )

    def _oob(self, corners, corner_arcs, corner_dists, frame: _RoadFrame) -> float:
        if frame.fast_margin is not None:
            if (
                np.all(corner_dists < frame.half_width - frame.fast_margin)
                and np.all(corner_arcs > frame.fast_end_margin)
                and np.all(corner_arcs < frame.total - frame.fast_end_margin)
            ):
                return 0.0
        return oob_fraction(corners, frame.lane_poly)


def builtin_driver_step(
    state: VehicleState,
    road: SampledRoad,
    speed_limit: float | None,
    executor: BuiltinExecutor | None = None,
) -> VehicleState:
    """One step of the built-in driver with default parameters.

    ``speed_limit`` is in m/s (None = unlimited); a zero limit pins the
    car in place.
    """
    return (executor or BuiltinExecutor()).step(state, road, speed_limit)


class SubprocessExecutor(ExecutorInterface):
    """Adapter for an external test subject behind a line-JSON pipe.

    Each request is one JSON line ``{"scenario_id", "road": <Road JSON>,
    "speed_limit", "tolerance_threshold"}``; the child answers with one
    Outcome JSON line.  No trace is available through the pipe.
    """

    capabilities = ExecutorCapabilities(deterministic=False, reentrant=False)

    def __init__(self, cmd: list[str]):
        self.cmd = cmd
        self._proc: subprocess.Popen | None = None

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise ExecutorError(f"cannot start executor {self.cmd!r}: {exc}") from exc
        return self._proc

    def execute(self, scenario: TestScenario) -> ExecutionResult:
        proc = self._ensure_started()
        payload = scenario_to_json(scenario)
        request = {
            "scenario_id": scenario.id,
            "road": payload["road"],
            "speed_limit": scenario.driving.speed_limit,
            "tolerance_threshold": scenario.tolerance_threshold,
        }
        try:
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ExecutorError(f"executor pipe failed: {exc}") from exc
        if not line:
            raise ExecutorError("executor closed the pipe without answering")
        try:
            outcome = outcome_from_json(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ExecutorError(f"malformed outcome from executor: {exc}") from exc
        return ExecutionResult(None, outcome)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.terminate()
            self._proc.wait(timeout=5)
        self._proc = None


def resolve_executor(key: str) -> ExecutorInterface:
    """Look up an executor plugin by config key.

    ``builtin`` is the in-process driver; ``subprocess:<command line>``
    wraps an external process speaking the line-JSON protocol.
    """
    if key == "builtin":
        return BuiltinExecutor()
    if key.startswith("subprocess:"):
        cmd = shlex.split(key.split(":", 1)[1])
        if not cmd:
            raise ExecutorError("subprocess executor needs a command line")
        return SubprocessExecutor(cmd)
    raise ExecutorError(f"unknown executor plugin {key!r}")
