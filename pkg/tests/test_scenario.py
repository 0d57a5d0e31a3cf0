"""Scenario model: construction, invariants, JSON round-trips."""

import numpy as np
import pytest

from roadsearch.config import CampaignConfig, EngineConfig, preset_config
from roadsearch.geometry import ControlPolyline
from roadsearch.scenario import (
    DrivingTask,
    FailureRecord,
    ScenarioOutcome,
    new_scenario,
    outcome_from_json,
    outcome_to_json,
    scenario_from_json,
    scenario_to_json,
)


def make_road():
    return ControlPolyline(
        np.array([[10.0, 100.0], [50.0, 100.0], [150.0, 100.0], [190.0, 100.0]])
    )


def make_config(**kw):
    return CampaignConfig(engine_config=EngineConfig(engine="random"), **kw)


class TestScenarioConstruction:
    def test_two_calls_distinct_ids(self):
        cfg = make_config()
        road = make_road()
        assert new_scenario(road, cfg).id != new_scenario(road, cfg).id

    def test_indexed_ids_are_deterministic(self):
        cfg = make_config()
        road = make_road()
        assert new_scenario(road, cfg, index=3).id == "scn-000003"

    def test_tolerance_copied_from_config(self):
        cfg = make_config(tolerance_threshold=0.85)
        assert new_scenario(make_road(), cfg).tolerance_threshold == 0.85

    def test_set1_has_no_speed_limit(self):
        cfg = preset_config("set1")
        s = new_scenario(make_road(), cfg)
        assert s.driving.speed_limit is None
        assert s.tolerance_threshold == 0.95

    def test_tolerance_bounds_enforced(self):
        with pytest.raises(ValueError):
            make_config(tolerance_threshold=0.0)
        with pytest.raises(ValueError):
            make_config(tolerance_threshold=1.5)

    def test_speed_limit_positive(self):
        with pytest.raises(ValueError):
            DrivingTask(speed_limit=-10.0)

    def test_speed_limit_unit_conversion(self):
        assert DrivingTask(speed_limit=72.0).speed_limit_ms == pytest.approx(20.0)
        assert DrivingTask(speed_limit=None).speed_limit_ms is None


class TestSerialization:
    def test_scenario_round_trip(self):
        cfg = make_config(tolerance_threshold=0.7, speed_limit=50.0)
        s = new_scenario(make_road(), cfg, index=12)
        back = scenario_from_json(scenario_to_json(s))
        assert back.id == s.id
        assert back.road == s.road
        assert back.spec == s.spec
        assert back.driving == s.driving
        assert back.tolerance_threshold == s.tolerance_threshold

    def test_outcome_round_trip(self):
        o = ScenarioOutcome(
            scenario_id="scn-000001",
            valid=True,
            executed=True,
            failures=(
                FailureRecord(
                    arc_position=42.5, oob_fraction=0.91,
                    segment_encoding="eefgg", timestep=310,
                ),
            ),
            max_oob_fraction=0.91,
            fitness=-0.35,
            wall_time=1.25,
        )
        data = outcome_to_json(o)
        assert set(data) == {
            "scenario_id", "valid", "executed", "failures",
            "max_oob_fraction", "fitness", "wall_time",
        }
        assert outcome_from_json(data) == o

    def test_unexecuted_outcome_round_trip(self):
        o = ScenarioOutcome(scenario_id="scn-000002", valid=False, executed=False)
        assert outcome_from_json(outcome_to_json(o)) == o

    def test_divergence_error_survives(self):
        o = ScenarioOutcome(
            scenario_id="x", valid=True, executed=False,
            error="driver divergence: non-finite vehicle state",
        )
        assert outcome_from_json(outcome_to_json(o)).error == o.error
