"""Run configuration: engine hyperparameters, campaign presets, budgets.

Two preset experiment configurations are built in: ``set1`` (5 h budget,
200x200 m map, no speed limit, failing tolerance 0.95) and ``set2`` (2 h,
200x200 m, 70 km/h, 0.85).  The ``*-mini`` variants are desk-scale presets
for quick runs and the acceptance suite; they are not part of the original
experiment design.
"""

import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ConfigurationError
from .geometry import RoadSpec
from .metrics import MetricsReport
from .scenario import ScenarioOutcome, outcome_from_json, outcome_to_json

ENGINES = ("ga", "es_plus", "es_comma", "pso", "random")


@dataclass(frozen=True)
class PsoParams:
    w: float = 0.8
    c1: float = 2.0
    c2: float = 2.0


@dataclass(frozen=True)
class EngineConfig:
    """Hyperparameters of one search engine.

    ``offspring_size`` defaults per engine: 30 for (mu+lambda), 100 for
    (mu,lambda), otherwise the population size.
    """

    engine: str
    population_size: int = 70
    offspring_size: int | None = None
    tournament_size: int = 3
    crossover_rate: float = 0.3
    mutation_rate: float = 0.7
    eta: float = 20.0
    pso: PsoParams = PsoParams()
    rng_seed: int = 0
    elitism: bool = False

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigurationError(
                f"unknown engine {self.engine!r}; expected one of {ENGINES}"
            )
        if self.population_size < 1:
            raise ConfigurationError("population_size must be >= 1")
        if self.tournament_size < 1:
            raise ConfigurationError("tournament_size must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not (0.0 <= rate <= 1.0):
                raise ConfigurationError(f"{name} must be in [0, 1]")
        if self.eta <= 0:
            raise ConfigurationError("eta must be positive")
        if self.offspring_size is None:
            default = {"es_plus": 30, "es_comma": 100}.get(
                self.engine, self.population_size
            )
            object.__setattr__(self, "offspring_size", default)
        if self.offspring_size < 1:
            raise ConfigurationError("offspring_size must be >= 1")
        if self.engine == "es_comma" and not (self.population_size < self.offspring_size):
            raise ConfigurationError(
                "(mu,lambda) selection needs mu < lambda: "
                f"got mu={self.population_size}, lambda={self.offspring_size}"
            )


#: Fields fixed by each named preset; overriding one turns a config custom.
PRESETS: dict[str, dict] = {
    "set1": dict(
        time_budget=5 * 3600.0, map_size=200.0, speed_limit=None,
        tolerance_threshold=0.95,
    ),
    "set2": dict(
        time_budget=2 * 3600.0, map_size=200.0, speed_limit=70.0,
        tolerance_threshold=0.85,
    ),
    "set1-mini": dict(
        time_budget=600.0, map_size=200.0, speed_limit=None,
        tolerance_threshold=0.5,
    ),
    "set2-mini": dict(
        time_budget=300.0, map_size=200.0, speed_limit=70.0,
        tolerance_threshold=0.5,
    ),
}


@dataclass(frozen=True)
class CampaignConfig:
    """Everything one campaign run needs, including road model parameters."""

    engine_config: EngineConfig
    preset: str = "custom"
    time_budget: float = 600.0
    max_evaluations: int | None = None
    map_size: float = 200.0
    speed_limit: float | None = None
    tolerance_threshold: float = 0.5
    executor: str = "builtin"
    repetitions: int = 1
    output_dir: str | None = None
    lane_width: float = 4.0
    samples_per_segment: int = 10
    min_radius: float = 47.0
    seed_pool_path: str | None = None
    bootstrap_candidates: int = 300
    bootstrap_executions: int = 40

    def __post_init__(self):
        if self.preset != "custom":
            pinned = PRESETS.get(self.preset)
            if pinned is None:
                raise ConfigurationError(f"unknown preset {self.preset!r}")
            for key, value in pinned.items():
                if getattr(self, key) != value:
                    raise ConfigurationError(
                        f"preset {self.preset} fixes {key}={value!r}, "
                        f"got {getattr(self, key)!r}"
                    )
        if self.time_budget <= 0:
            raise ConfigurationError("time_budget must be positive")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ConfigurationError("max_evaluations must be >= 0")
        if self.map_size <= 0:
            raise ConfigurationError("map_size must be positive")
        if self.speed_limit is not None and self.speed_limit <= 0:
            raise ConfigurationError("speed_limit must be positive when set")
        if not (0.0 < self.tolerance_threshold <= 1.0):
            raise ConfigurationError("tolerance_threshold must be in (0, 1]")
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")

    @property
    def road_spec(self) -> RoadSpec:
        return RoadSpec(
            lane_width=self.lane_width,
            samples_per_segment=self.samples_per_segment,
            map_size=self.map_size,
            min_radius=self.min_radius,
        )

    def with_seed(self, seed: int) -> "CampaignConfig":
        return replace(self, engine_config=replace(self.engine_config, rng_seed=seed))

    def to_json(self) -> dict:
        return asdict(self)


def preset_config(name: str, engine_config: EngineConfig | None = None, **overrides) -> CampaignConfig:
    """Build a campaign config from a named preset.

    Overriding a preset-pinned field is allowed but relabels the config as
    ``custom`` so result files never claim preset values they do not have.
    """
    if name == "custom":
        base: dict = {}
    else:
        pinned = PRESETS.get(name)
        if pinned is None:
            raise ConfigurationError(f"unknown preset {name!r}")
        base = dict(pinned)
        if any(key in overrides and overrides[key] != pinned[key] for key in pinned):
            name = "custom"
    base.update(overrides)
    return CampaignConfig(
        engine_config=engine_config or EngineConfig(engine="random"),
        preset=name,
        **base,
    )


class Budget:
    """Wall-clock budget with an optional deterministic evaluation cap.

    No new evaluation may start after the wall-clock deadline; an in-flight
    evaluation is allowed to finish.  The evaluation cap exists because a
    wall-clock stop makes run lengths machine-dependent; capping executions
    gives bit-reproducible campaigns.
    """

    def __init__(self, seconds: float | None = None, max_evaluations: int | None = None):
        self.seconds = seconds
        self.max_evaluations = max_evaluations
        self.evaluations = 0
        self._t0: float | None = None

    def start(self) -> "Budget":
        if self._t0 is None:
            self._t0 = time.perf_counter()
        return self

    @property
    def elapsed(self) -> float:
        return 0.0 if self._t0 is None else time.perf_counter() - self._t0

    def exhausted(self) -> bool:
        self.start()
        if self.max_evaluations is not None and self.evaluations >= self.max_evaluations:
            return True
        return self.seconds is not None and self.elapsed >= self.seconds

    def note_evaluation(self) -> None:
        self.evaluations += 1

    @classmethod
    def from_config(cls, config: CampaignConfig) -> "Budget":
        return cls(seconds=config.time_budget, max_evaluations=config.max_evaluations)


@dataclass
class CampaignResult:
    """Outcome ledger of one engine run."""

    config: CampaignConfig
    outcomes: list[ScenarioOutcome] = field(default_factory=list)
    metrics: MetricsReport | None = None
    timing: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "outcomes": [outcome_to_json(o) for o in self.outcomes],
            "metrics": None if self.metrics is None else self.metrics.to_json(),
            "timing": self.timing,
        }


def engine_config_from_json(data: dict) -> EngineConfig:
    data = dict(data)
    pso = data.pop("pso", None)
    if pso is not None:
        data["pso"] = PsoParams(**pso)
    return EngineConfig(**data)


def campaign_config_from_json(data: dict) -> CampaignConfig:
    data = dict(data)
    data["engine_config"] = engine_config_from_json(data["engine_config"])
    return CampaignConfig(**data)


def campaign_result_from_json(data: dict) -> CampaignResult:
    return CampaignResult(
        config=campaign_config_from_json(data["config"]),
        outcomes=result_outcomes_from_json(data),
        metrics=None if data.get("metrics") is None else result_metrics_from_json(data),
        timing=dict(data.get("timing", {})),
    )


def result_metrics_from_json(data: dict) -> MetricsReport:
    m = data["metrics"]
    return MetricsReport(
        detected_failures=int(m["detected_failures"]),
        sparseness=float(m["sparseness"]),
        total_generated=int(m["total_generated"]),
        valid_count=int(m["valid_count"]),
        effectiveness=float(m["effectiveness"]),
        effectiveness_plus=float(m["effectiveness_plus"]),
        zero_valid=bool(m.get("zero_valid", False)),
        sparseness_by_convention=bool(m.get("sparseness_by_convention", False)),
    )


def result_outcomes_from_json(data: dict) -> list[ScenarioOutcome]:
    return [outcome_from_json(o) for o in data["outcomes"]]
