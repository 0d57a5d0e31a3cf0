"""Search engines: GA, (mu+lambda)-ES, (mu,lambda)-ES, PSO, random baseline.

All engines share the same chromosome (a road's control points), the same
domain operators (one-point crossover over control-point prefixes and
polynomial bounded mutation of a single coordinate, both with validity
repair), and the same quality seed population mixing valid random roads
with roads already known to push the driver out of the lane.

Every candidate chromosome an engine constructs is recorded in the outcome
ledger: invalid ones with ``valid=False``, population members with their
execution results.  Budgets count executor calls and wall time; no new
evaluation starts once either is exhausted.
"""

import itertools
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .config import Budget, CampaignConfig, CampaignResult, EngineConfig
from .errors import ConfigurationError
from .executor import ExecutorInterface
from .geometry import (
    ControlPolyline,
    RoadSpec,
    catmull_rom_sample,
    road_from_json,
    road_to_json,
    validate_road,
)
from .metrics import compile_metrics
from .scenario import ScenarioOutcome, new_scenario

Validator = Callable[[ControlPolyline], bool]

# Polar-walk envelope (per step: length and heading change).
WALK_STEP_RANGE = (25.0, 60.0)
WALK_MAX_DELTA = math.pi / 3.0
WALK_POINT_RANGE = (4, 12)
WALK_MARGIN = 14.0
# Structured modes inside the envelope: straight runs and constant-radius
# arcs, plus an occasional sprint-and-turn road (long straight feeding a
# sustained tight arc), which is the pattern that stresses a lane keeper.
WALK_ARC_RADIUS = (65.0, 110.0)
WALK_SPRINT_PROB = 0.3
WALK_SPRINT_ARC_RADIUS = (68.0, 90.0)
WALK_MODE_SWITCH_PROB = 0.35


def random_road(rng: np.random.Generator, bounds=(0.0, 200.0), margin: float = WALK_MARGIN) -> ControlPolyline | None:
    """One random road chromosome from the incremental polar walk.

    Returns None when no walk stayed inside the map after many retries
    (practically only for tiny maps).
    """
    lo, hi = bounds
    size = hi - lo
    n = int(rng.integers(WALK_POINT_RANGE[0], WALK_POINT_RANGE[1] + 1))
    base = rng.uniform(*WALK_STEP_RANGE)
    sprint = rng.random() < WALK_SPRINT_PROB and size >= 150.0

    for _ in range(100):
        if sprint:
            n_eff = max(n, 9)
            start = rng.uniform(lo + 10.0, lo + 0.22 * size, size=2)
            if rng.random() < 0.5:
                start[0] = hi - (start[0] - lo)
            if rng.random() < 0.5:
                start[1] = hi - (start[1] - lo)
            mid = np.array([(lo + hi) / 2.0, (lo + hi) / 2.0])
            heading = math.atan2(mid[1] - start[1], mid[0] - start[0]) + rng.uniform(-0.45, 0.45)
            plan = ["straight"] * int(rng.integers(3, 6))
            turn = "left" if rng.random() < 0.5 else "right"
            plan += [turn] * int(rng.integers(4, 8))
            r_curve = rng.uniform(*WALK_SPRINT_ARC_RADIUS)
        else:
            n_eff = n
            start = rng.uniform(lo + 10.0, hi - 10.0, size=2)
            heading = rng.uniform(0.0, 2.0 * math.pi)
            plan = []
            r_curve = rng.uniform(*WALK_ARC_RADIUS)

        pts = [start]
        mode = plan[0] if plan else rng.choice(["straight", "left", "right"])
        k = 0
        plan_broken = False
        while len(pts) < n_eff:
            placed = False
            for _ in range(30):
                if k < len(plan):
                    mode = plan[k]
                elif rng.random() < WALK_MODE_SWITCH_PROB or k == len(plan):
                    mode = rng.choice(["straight", "left", "right"])
                    r_curve = rng.uniform(*WALK_ARC_RADIUS)
                step = float(np.clip(base * (1.0 + rng.uniform(-0.12, 0.12)), *WALK_STEP_RANGE))
                if mode == "straight":
                    delta = rng.uniform(-math.radians(3.0), math.radians(3.0))
                else:
                    step = min(step, 0.6 * r_curve)
                    d = min(2.0 * math.asin(min(1.0, step / (2.0 * r_curve))), WALK_MAX_DELTA)
                    delta = d if mode == "left" else -d
                cand_heading = heading + delta
                nxt = pts[-1] + step * np.array([math.cos(cand_heading), math.sin(cand_heading)])
                if np.all(nxt >= lo + margin) and np.all(nxt <= hi - margin):
                    pts.append(nxt)
                    heading = cand_heading
                    placed = True
                    break
            if not placed:
                plan_broken = k < len(plan)
                break
            k += 1
        if plan_broken:
            continue
        if len(pts) >= 4:
            return ControlPolyline(np.array(pts), bounds=bounds)
    return None


# -- individuals and the seed pool ----------------------------------------


@dataclass
class Individual:
    chromosome: ControlPolyline
    cached_fitness: float | None = None
    cached_outcome: ScenarioOutcome | None = None

    def copy(self) -> "Individual":
        return Individual(self.chromosome, self.cached_fitness, self.cached_outcome)


@dataclass
class Particle:
    individual: Individual
    velocity: np.ndarray
    p_best: Individual


@dataclass
class SwarmState:
    particles: list[Particle]
    g_best: Individual
    hyperparams: dict


TAG_RANDOM = "random_valid"
TAG_FAILURE = "failure_derived"


@dataclass(frozen=True)
class SeedEntry:
    chromosome: ControlPolyline
    tag: str
    provenance: dict = field(default_factory=dict)


@dataclass
class SeedPool:
    entries: list[SeedEntry]

    def split(self) -> tuple[list[SeedEntry], list[SeedEntry]]:
        random_valid = [e for e in self.entries if e.tag == TAG_RANDOM]
        failure_derived = [e for e in self.entries if e.tag == TAG_FAILURE]
        return random_valid, failure_derived

    def save(self, path, spec: RoadSpec) -> None:
        data = [
            {**road_to_json(e.chromosome, spec), "tag": e.tag, "provenance": e.provenance}
            for e in self.entries
        ]
        Path(path).write_text(json.dumps(data, indent=1))

    @classmethod
    def load(cls, path) -> "SeedPool":
        raw = json.loads(Path(path).read_text())
        entries = []
        for item in raw:
            cp, spec = road_from_json(item)
            report = validate_road(catmull_rom_sample(cp, spec), spec)
            if not report.is_valid:
                raise ValueError(
                    f"seed pool entry is not a valid road: {report.constraint_ids()}"
                )
            entries.append(
                SeedEntry(chromosome=cp, tag=item["tag"], provenance=item.get("provenance", {}))
            )
        return cls(entries)


def bootstrap_seed_pool(
    config: CampaignConfig,
    executor: ExecutorInterface,
    budget: int,
    rng: np.random.Generator | None = None,
    out_path=None,
) -> SeedPool:
    """Build a quality seed pool from scratch.

    Generates ``config.bootstrap_candidates`` polar-walk roads, keeps the
    valid ones, executes a random subset of at most ``budget`` of them, and
    tags any that pushed half the car out of the lane as failure material.
    """
    rng = rng if rng is not None else np.random.default_rng(config.engine_config.rng_seed)
    spec = config.road_spec
    valid: list[ControlPolyline] = []
    for _ in range(config.bootstrap_candidates):
        cp = random_road(rng, bounds=(0.0, spec.map_size))
        if cp is None:
            continue
        if validate_road(catmull_rom_sample(cp, spec), spec).is_valid:
            valid.append(cp)
    if not valid:
        raise ConfigurationError(
            "bootstrap produced zero valid roads; check map_size/min_radius"
        )

    tags = {i: TAG_RANDOM for i in range(len(valid))}
    n_exec = min(budget, len(valid))
    order = rng.permutation(len(valid))[:n_exec]
    for i in order:
        scenario = new_scenario(valid[i], config)
        _, outcome = executor.execute(scenario)
        if outcome.executed and outcome.max_oob_fraction >= 0.5:
            tags[i] = TAG_FAILURE

    entries = [
        SeedEntry(
            chromosome=cp,
            tag=tags[i],
            provenance={"source": "polar_walk", "rng_seed": config.engine_config.rng_seed},
        )
        for i, cp in enumerate(valid)
    ]
    pool = SeedPool(entries)
    if out_path is not None:
        pool.save(out_path, spec)
    return pool


def init_population(pool: SeedPool, size: int, rng: np.random.Generator) -> list[Individual]:
    """Sample a starting population from the seed pool.

    When both tags are present each draw picks the failure-derived bucket
    with probability one half, biasing the start toward known-hard roads.
    """
    if not pool.entries:
        raise ValueError("seed pool is empty")
    random_valid, failure_derived = pool.split()
    out = []
    for _ in range(size):
        if random_valid and failure_derived:
            bucket = failure_derived if rng.random() < 0.5 else random_valid
        else:
            bucket = failure_derived or random_valid
        entry = bucket[int(rng.integers(len(bucket)))]
        out.append(Individual(entry.chromosome))
    return out


# -- variation operators ---------------------------------------------------


def tournament_select(pop: list[Individual], k: int, rng: np.random.Generator) -> Individual:
    """Pick the fitness-minimal individual of a size-k uniform draw.

    Drawn without replacement (with replacement only if k exceeds the
    population); ties go to the earlier population index.
    """
    if not pop:
        raise ValueError("empty population")
    if k < 1:
        raise ValueError("tournament size must be >= 1")
    idx = rng.choice(len(pop), size=k, replace=k > len(pop))
    best = None
    for i in sorted(int(j) for j in idx):
        ind = pop[i]
        if ind.cached_fitness is None:
            raise RuntimeError("tournament over unevaluated individual")
        if best is None or ind.cached_fitness < best.cached_fitness:
            best = ind
    return best


def crossover(
    parent_a: Individual,
    parent_b: Individual,
    rng: np.random.Generator,
    validator: Validator,
) -> tuple[Individual, Individual]:
    """Domain one-point crossover over control points, with validity repair.

    Swaps the point lists at a random cut; both children are re-sampled and
    validated.  Further cut points are tried until two valid children exist,
    for at most five attempts in total; otherwise the operation rolls back
    and copies of the parents are returned.
    """
    pa, pb = parent_a.chromosome, parent_b.chromosome
    min_len = min(len(pa), len(pb))
    cuts = rng.permutation(np.arange(1, min_len))
    children: list[ControlPolyline] = []
    for cut in cuts[:5]:
        cut = int(cut)
        for pts in (
            np.vstack([pa.points[:cut], pb.points[cut:]]),
            np.vstack([pb.points[:cut], pa.points[cut:]]),
        ):
            if len(children) >= 2:
                break
            try:
                cand = ControlPolyline(pts, bounds=pa.bounds)
            except ValueError:
                continue
            if validator(cand):
                children.append(cand)
        if len(children) >= 2:
            break
    if len(children) == 2:
        return Individual(children[0]), Individual(children[1])
    return parent_a.copy(), parent_b.copy()


def polynomial_bounded_delta(
    x: float, lo: float, hi: float, eta: float, rng: np.random.Generator
) -> float:
    """One draw of the polynomial bounded mutation for a single coordinate.

    High crowding degree eta concentrates the mutant near the original
    value; low eta spreads it across the bounds.
    """
    u = rng.random()
    span = hi - lo
    d1 = (x - lo) / span
    d2 = (hi - x) / span
    mut_pow = 1.0 / (eta + 1.0)
    if u < 0.5:
        val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
        dq = val**mut_pow - 1.0
    else:
        val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
        dq = 1.0 - val**mut_pow
    return float(min(hi, max(lo, x + dq * span)))


def mutate(
    ind: Individual,
    eta: float,
    rng: np.random.Generator,
    validator: Validator,
) -> Individual:
    """Mutate one coordinate of one control point, keeping the road valid.

    Invalid mutants retry with a different control point, up to one attempt
    per point; if all fail the original individual is returned.
    """
    cp = ind.chromosome
    lo, hi = cp.bounds
    for idx in rng.permutation(len(cp)):
        idx = int(idx)
        axis = int(rng.integers(2))
        x = float(cp.points[idx, axis])
        new_x = x
        for _ in range(8):
            new_x = polynomial_bounded_delta(x, lo, hi, eta, rng)
            if new_x != x:
                break
        if new_x == x:
            continue
        pts = np.array(cp.points)
        pts[idx, axis] = new_x
        try:
            cand = ControlPolyline(pts, bounds=cp.bounds)
        except ValueError:
            continue
        if validator(cand):
            return Individual(cand)
    return ind.copy()


def pso_velocity_update(
    position: np.ndarray,
    velocity: np.ndarray,
    p_best: np.ndarray,
    g_best: np.ndarray,
    w: float,
    c1: float,
    c2: float,
    r1: float,
    r2: float,
) -> np.ndarray:
    """Velocity update: inertia plus cognitive and social attraction."""
    return (
        w * velocity
        + c1 * r1 * (p_best - position)
        + c2 * r2 * (g_best - position)
    )


# -- engine plumbing -------------------------------------------------------


class _RunContext:
    """Shared bookkeeping of one engine run."""

    def __init__(self, config: CampaignConfig, executor, budget: Budget, recorder=None):
        self.config = config
        self.spec = config.road_spec
        self.executor = executor
        self.budget = budget.start()
        self.recorder = recorder
        self.outcomes: list[ScenarioOutcome] = []
        self.counter = itertools.count()
        self.eval_time = 0.0
        self.validation_time = 0.0

    def record(self, road: ControlPolyline, outcome: ScenarioOutcome) -> None:
        self.outcomes.append(outcome)
        if self.recorder is not None:
            self.recorder(road, outcome)

    def validator(self, cand: ControlPolyline) -> bool:
        """Validity check that books invalid candidates into the ledger."""
        t0 = time.perf_counter()
        report = validate_road(catmull_rom_sample(cand, self.spec), self.spec)
        self.validation_time += time.perf_counter() - t0
        if not report.is_valid:
            sid = f"scn-{next(self.counter):06d}"
            self.record(
                cand,
                ScenarioOutcome(scenario_id=sid, valid=False, executed=False),
            )
        return report.is_valid

    def evaluate(self, ind: Individual) -> bool:
        """Execute one individual unless cached; False if budget is spent."""
        if ind.cached_fitness is not None:
            return True
        if self.budget.exhausted():
            return False
        scenario = new_scenario(ind.chromosome, self.config, index=next(self.counter))
        t0 = time.perf_counter()
        _, outcome = self.executor.execute(scenario)
        self.eval_time += time.perf_counter() - t0
        self.budget.note_evaluation()
        ind.cached_outcome = outcome
        ind.cached_fitness = outcome.fitness if outcome.fitness is not None else math.inf
        self.record(ind.chromosome, outcome)
        return True

    def evaluate_all(self, pop: list[Individual]) -> bool:
        for ind in pop:
            if not self.evaluate(ind):
                return False
        return True

    def result(self, t_start: float) -> CampaignResult:
        result = CampaignResult(
            config=self.config,
            outcomes=self.outcomes,
            timing={
                "total": time.perf_counter() - t_start,
                "evaluation": self.eval_time,
                "validation": self.validation_time,
            },
        )
        result.metrics = compile_metrics(result)
        return result


def _require_engine(config: CampaignConfig, *names: str) -> EngineConfig:
    ec = config.engine_config
    if ec.engine not in names:
        raise ConfigurationError(f"engine {ec.engine!r} not usable here, expected {names}")
    return ec


# -- engines ---------------------------------------------------------------


def run_ga(config, executor, budget, seed_pool, recorder=None) -> CampaignResult:
    """Generational GA: tournament parents, crossover then mutation."""
    ec = _require_engine(config, "ga")
    t0 = time.perf_counter()
    ctx = _RunContext(config, executor, budget, recorder)
    rng = np.random.default_rng(ec.rng_seed)

    pop = init_population(seed_pool, ec.population_size, rng)
    ctx.evaluate_all(pop)
    while not ctx.budget.exhausted():
        nxt: list[Individual] = []
        while len(nxt) < ec.population_size:
            pa = tournament_select(pop, ec.tournament_size, rng)
            pb = tournament_select(pop, ec.tournament_size, rng)
            if rng.random() < ec.crossover_rate:
                ca, cb = crossover(pa, pb, rng, ctx.validator)
            else:
                ca, cb = pa.copy(), pb.copy()
            pair = []
            for child in (ca, cb):
                if rng.random() < ec.mutation_rate:
                    child = mutate(child, ec.eta, rng, ctx.validator)
                pair.append(child)
            nxt.extend(pair)
        nxt = nxt[: ec.population_size]
        if not ctx.evaluate_all(nxt):
            break
        if ec.elitism:
            best = min(pop, key=lambda i: i.cached_fitness)
            worst = max(range(len(nxt)), key=lambda j: nxt[j].cached_fitness)
            if best.cached_fitness < nxt[worst].cached_fitness:
                nxt[worst] = best.copy()
        pop = nxt
    return ctx.result(t0)


def _choose_partner(
    member_index: int,
    temp_pop: list[Individual],
    base_pop: list[Individual],
    rng: np.random.Generator,
) -> Individual:
    """Crossover partner: uniform over the other temporary members plus P.

    With a single-member temporary population the partner necessarily comes
    from P.
    """
    pool = temp_pop[:member_index] + temp_pop[member_index + 1 :] + base_pop
    return pool[int(rng.integers(len(pool)))]


def run_es(config, executor, budget, seed_pool, recorder=None) -> CampaignResult:
    """(mu+lambda) or (mu,lambda) evolution strategy.

    Each generation builds a temporary population of lambda by uniform
    reproduction; each member undergoes crossover or mutation by a single
    probability draw.  Selection is by tournament from parents plus
    offspring (plus variant) or offspring only (comma variant).
    """
    ec = _require_engine(config, "es_plus", "es_comma")
    t0 = time.perf_counter()
    ctx = _RunContext(config, executor, budget, recorder)
    rng = np.random.default_rng(ec.rng_seed)

    pop = init_population(seed_pool, ec.population_size, rng)
    ctx.evaluate_all(pop)
    while not ctx.budget.exhausted():
        temp = [pop[int(rng.integers(len(pop)))].copy() for _ in range(ec.offspring_size)]
        offspring: list[Individual] = []
        for i, member in enumerate(temp):
            choice = rng.random()
            if choice < ec.crossover_rate:
                partner = _choose_partner(i, temp, pop, rng)
                child, _ = crossover(member, partner, rng, ctx.validator)
                offspring.append(child)
            elif choice < ec.crossover_rate + ec.mutation_rate:
                offspring.append(mutate(member, ec.eta, rng, ctx.validator))
            else:
                offspring.append(member.copy())
        if not ctx.evaluate_all(offspring):
            break
        pool = pop + offspring if ec.engine == "es_plus" else offspring
        pop = [tournament_select(pool, ec.tournament_size, rng) for _ in range(ec.population_size)]
    return ctx.result(t0)


def run_pso(config, executor, budget, seed_pool, recorder=None) -> CampaignResult:
    """Particle swarm over control-point vectors.

    Positions and velocities follow the standard update with per-particle
    random weights drawn from (0, 2]; invalid moves halve the velocity and
    retry up to three times before reverting to the previous position.
    """
    ec = _require_engine(config, "pso")
    t0 = time.perf_counter()
    ctx = _RunContext(config, executor, budget, recorder)
    rng = np.random.default_rng(ec.rng_seed)
    w, c1, c2 = ec.pso.w, ec.pso.c1, ec.pso.c2

    swarm = SwarmState(particles=[], g_best=None, hyperparams={"w": w, "c1": c1, "c2": c2})
    for ind in init_population(seed_pool, ec.population_size, rng):
        swarm.particles.append(
            Particle(individual=ind, velocity=np.zeros_like(ind.chromosome.points), p_best=ind)
        )
    for part in swarm.particles:
        if not ctx.evaluate(part.individual):
            break
        part.p_best = part.individual
        if swarm.g_best is None or part.individual.cached_fitness < swarm.g_best.cached_fitness:
            swarm.g_best = part.individual

    bounds = swarm.particles[0].individual.chromosome.bounds
    while not ctx.budget.exhausted() and swarm.g_best is not None:
        for part in swarm.particles:
            if ctx.budget.exhausted():
                break
            pos = part.individual.chromosome.points
            r1 = 2.0 - rng.uniform(0.0, 2.0)
            r2 = 2.0 - rng.uniform(0.0, 2.0)
            g = swarm.g_best.chromosome.points
            g_term = np.zeros_like(pos)
            n_shared = min(len(pos), len(g))
            g_term[:n_shared] = g[:n_shared] - pos[:n_shared]
            velocity = (
                w * part.velocity
                + c1 * r1 * (part.p_best.chromosome.points - pos)
                + c2 * r2 * g_term
            )

            moved = None
            for _ in range(4):
                cand_pts = np.clip(pos + velocity, bounds[0], bounds[1])
                try:
                    cand = ControlPolyline(cand_pts, bounds=bounds)
                except ValueError:
                    velocity = velocity / 2.0
                    continue
                if ctx.validator(cand):
                    moved = cand
                    break
                velocity = velocity / 2.0
            part.velocity = velocity
            if moved is None:
                continue

            part.individual = Individual(moved)
            if not ctx.evaluate(part.individual):
                break
            if part.individual.cached_fitness < part.p_best.cached_fitness:
                part.p_best = part.individual
            if part.individual.cached_fitness < swarm.g_best.cached_fitness:
                swarm.g_best = part.individual
    return ctx.result(t0)


def run_random(config, executor, budget, seed_pool=None, recorder=None) -> CampaignResult:
    """Baseline: generate polar-walk roads and execute the valid ones."""
    _require_engine(config, "random")
    t0 = time.perf_counter()
    ctx = _RunContext(config, executor, budget, recorder)
    rng = np.random.default_rng(config.engine_config.rng_seed)
    bounds = (0.0, config.map_size)
    while not ctx.budget.exhausted():
        cp = random_road(rng, bounds=bounds)
        if cp is None:
            continue
        if ctx.validator(cp):
            ctx.evaluate(Individual(cp))
    return ctx.result(t0)


ENGINE_RUNNERS = {
    "ga": run_ga,
    "es_plus": run_es,
    "es_comma": run_es,
    "pso": run_pso,
    "random": run_random,
}


def run_engine(config, executor, budget, seed_pool=None, recorder=None) -> CampaignResult:
    """Dispatch to the configured engine."""
    runner = ENGINE_RUNNERS[config.engine_config.engine]
    if runner is run_random:
        return runner(config, executor, budget, recorder=recorder)
    if seed_pool is None:
        raise ConfigurationError(f"engine {config.engine_config.engine!r} needs a seed pool")
    return runner(config, executor, budget, seed_pool, recorder=recorder)
