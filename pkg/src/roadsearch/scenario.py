"""Test scenarios and failure semantics.

A test scenario is one candidate road plus the fixed driving task (keep the
right lane from road start to road end) and the failing tolerance threshold:
the fraction of the car's bounding box that must leave the lane before an
episode counts as a failure.  Environment parameters are carried as
constants so the on-disk schema can grow without breaking old records.
"""

import uuid
from dataclasses import dataclass, replace

from .geometry import ControlPolyline, RoadSpec, road_from_json, road_to_json


@dataclass(frozen=True)
class DrivingTask:
    """Driving parameters of a scenario.  speed_limit is km/h, None = unlimited."""

    speed_limit: float | None = None
    lane: str = "right"
    start: str = "road_start"
    goal: str = "road_end"

    def __post_init__(self):
        if self.speed_limit is not None and self.speed_limit <= 0:
            raise ValueError("speed_limit must be positive when set")

    @property
    def speed_limit_ms(self) -> float | None:
        return None if self.speed_limit is None else self.speed_limit / 3.6


@dataclass(frozen=True)
class TestScenario:
    id: str
    road: ControlPolyline
    spec: RoadSpec
    driving: DrivingTask
    tolerance_threshold: float

    def __post_init__(self):
        if not (0.0 < self.tolerance_threshold <= 1.0):
            raise ValueError("tolerance_threshold must be in (0, 1]")


@dataclass(frozen=True)
class FailureRecord:
    """One out-of-bound episode.

    arc_position is measured along the right-lane center polyline at the
    episode onset; segment_encoding is the turn-angle symbol string of the
    surrounding road segment (see the diversity metrics module).
    """

    arc_position: float
    oob_fraction: float
    segment_encoding: str
    timestep: int

    def with_encoding(self, symbols: str) -> "FailureRecord":
        return replace(self, segment_encoding=symbols)


@dataclass(frozen=True)
class ScenarioOutcome:
    scenario_id: str
    valid: bool
    executed: bool
    failures: tuple[FailureRecord, ...] = ()
    max_oob_fraction: float = 0.0
    fitness: float | None = None
    wall_time: float = 0.0
    error: str | None = None


def new_scenario(road: ControlPolyline, config, index: int | None = None) -> TestScenario:
    """Build a scenario for one road from a campaign config.

    ``config`` must expose road_spec, speed_limit and tolerance_threshold
    (see CampaignConfig).  When ``index`` is given the id is a deterministic
    sequence number, otherwise a fresh UUID.
    """
    sid = f"scn-{index:06d}" if index is not None else uuid.uuid4().hex
    return TestScenario(
        id=sid,
        road=road,
        spec=config.road_spec,
        driving=DrivingTask(speed_limit=config.speed_limit),
        tolerance_threshold=config.tolerance_threshold,
    )


def scenario_to_json(s: TestScenario) -> dict:
    return {
        "id": s.id,
        "road": road_to_json(s.road, s.spec),
        "min_radius": s.spec.min_radius,
        "driving": {
            "speed_limit": s.driving.speed_limit,
            "lane": s.driving.lane,
            "start": s.driving.start,
            "goal": s.driving.goal,
        },
        "tolerance_threshold": s.tolerance_threshold,
    }


def scenario_from_json(data: dict) -> TestScenario:
    road, spec = road_from_json(data["road"])
    if "min_radius" in data:
        spec = RoadSpec(
            lane_width=spec.lane_width,
            samples_per_segment=spec.samples_per_segment,
            map_size=spec.map_size,
            min_radius=float(data["min_radius"]),
        )
    drv = data["driving"]
    return TestScenario(
        id=data["id"],
        road=road,
        spec=spec,
        driving=DrivingTask(
            speed_limit=drv["speed_limit"],
            lane=drv["lane"],
            start=drv["start"],
            goal=drv["goal"],
        ),
        tolerance_threshold=float(data["tolerance_threshold"]),
    )


def outcome_to_json(o: ScenarioOutcome) -> dict:
    data = {
        "scenario_id": o.scenario_id,
        "valid": o.valid,
        "executed": o.executed,
        "failures": [
            {
                "arc_position": f.arc_position,
                "oob_fraction": f.oob_fraction,
                "timestep": f.timestep,
                "segment_encoding": f.segment_encoding,
            }
            for f in o.failures
        ],
        "max_oob_fraction": o.max_oob_fraction,
        "fitness": o.fitness,
        "wall_time": o.wall_time,
    }
    if o.error is not None:
        data["error"] = o.error
    return data


def outcome_from_json(data: dict) -> ScenarioOutcome:
    return ScenarioOutcome(
        scenario_id=data["scenario_id"],
        valid=bool(data["valid"]),
        executed=bool(data["executed"]),
        failures=tuple(
            FailureRecord(
                arc_position=float(f["arc_position"]),
                oob_fraction=float(f["oob_fraction"]),
                segment_encoding=f["segment_encoding"],
                timestep=int(f["timestep"]),
            )
            for f in data["failures"]
        ),
        max_oob_fraction=float(data["max_oob_fraction"]),
        fitness=None if data["fitness"] is None else float(data["fitness"]),
        wall_time=float(data["wall_time"]),
        error=data.get("error"),
    )
