"""Schedule construction and mutation-based search.

The objective is z = z1 + lambda * z2: z1 the mean of the makespan upper
bound, z2 an assignment-entropy term rewarding even repetition counts across
agents (cheap exploration signal). Search seeds with an earliest-deadline
-first schedule and improves it with elitist mutation: reassign an iteration,
swap the agents of two iterations, or swap adjacent iterations on one agent.
Schedules failing any deadline check are ranked behind all feasible ones
(fewest failures, then z) rather than scored into the population front.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import curves
from .evaluate import (
    PropagationResult,
    RiskAllocation,
    RobustnessReport,
    allocate_risk,
    check_robustness,
    propagate,
)
from .model import (
    CycleError,
    GaussianDist,
    KalmanState,
    ProblemInstance,
    Ref,
    Schedule,
    combined_topo_order,
)

EXPLOIT = "exploit"
EXPLORE_EXPLOIT = "explore_exploit"
ANNEALED = "annealed"
STRATEGY_KINDS = (EXPLOIT, EXPLORE_EXPLOIT, ANNEALED)


class ExhaustedRetries(Exception):
    """No valid mutation found within the retry bound."""


class InfeasiblePrecedence(Exception):
    """Instance precedence admits no schedule (cycle)."""


@dataclass(frozen=True)
class SearchConfig:
    population_size: int = 64
    elite_fraction: float = 0.25
    reassign_weight: float = 0.4
    swap_agents_weight: float = 0.3
    swap_adjacent_weight: float = 0.3
    time_limit: float | None = 5.0
    max_generations: int | None = None
    seed: int = 0
    lam: float = 0.0
    retry_bound: int = 50

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must be in (0, 1]")
        w = (self.reassign_weight, self.swap_agents_weight, self.swap_adjacent_weight)
        if any(x < 0 for x in w) or sum(w) <= 0:
            raise ValueError("mutation weights must be >= 0 and not all zero")
        if self.time_limit is None and self.max_generations is None:
            raise ValueError("need a time_limit or max_generations stop rule")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        if self.max_generations is not None and self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "elite_fraction": self.elite_fraction,
            "mutation_weights": [
                self.reassign_weight,
                self.swap_agents_weight,
                self.swap_adjacent_weight,
            ],
            "time_limit": self.time_limit,
            "max_generations": self.max_generations,
            "seed": self.seed,
            "lambda": self.lam,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "SearchConfig":
        weights = d.get("mutation_weights", [0.4, 0.3, 0.3])
        return cls(
            population_size=int(d.get("population_size", 64)),
            elite_fraction=float(d.get("elite_fraction", 0.25)),
            reassign_weight=float(weights[0]),
            swap_agents_weight=float(weights[1]),
            swap_adjacent_weight=float(weights[2]),
            time_limit=None if d.get("time_limit") is None else float(d["time_limit"]),
            max_generations=(
                None if d.get("max_generations") is None else int(d["max_generations"])
            ),
            seed=int(d.get("seed", 0)),
            lam=float(d.get("lambda", 0.0)),
            retry_bound=int(d.get("retry_bound", 50)),
        )


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = EXPLOIT
    lambda_explore: float = 50.0
    total_rounds: int = 5

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"kind must be one of {STRATEGY_KINDS}")
        if self.total_rounds < 1:
            raise ValueError("total_rounds must be >= 1")
        if self.lambda_explore < 0:
            raise ValueError("lambda_explore must be >= 0")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda_explore": self.lambda_explore,
            "total_rounds": self.total_rounds,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "StrategyConfig":
        return cls(
            kind=str(d.get("kind", EXPLOIT)),
            lambda_explore=float(d.get("lambda_explore", 50.0)),
            total_rounds=int(d.get("total_rounds", 5)),
        )


def strategy_lambda(strategy: StrategyConfig, round_index: int) -> float:
    """Exploration weight for a 1-based round. Annealed strategies explore for
    the first ceil(total/2) rounds and then switch to pure exploitation."""
    if not 1 <= round_index <= strategy.total_rounds:
        raise ValueError("round_index out of range")
    if strategy.kind == EXPLOIT:
        return 0.0
    if strategy.kind == EXPLORE_EXPLOIT:
        return strategy.lambda_explore
    if round_index <= math.ceil(strategy.total_rounds / 2):
        return strategy.lambda_explore
    return 0.0


@dataclass(frozen=True)
class ObjectiveValue:
    z: float
    z1: float
    z2: float
    lam: float
    feasible: bool
    failed_deadlines: int

    def to_json_dict(self) -> dict:
        return {
            "z": self.z,
            "z1": self.z1,
            "z2": self.z2,
            "lambda": self.lam,
            "feasible": self.feasible,
            "failed_deadlines": self.failed_deadlines,
        }


StateMap = Mapping[tuple[str, str], KalmanState]
RepsMap = Mapping[tuple[str, str], int]


def prior_states(instance: ProblemInstance) -> dict[tuple[str, str], KalmanState]:
    """Flatten per-agent curve priors into the (agent, task) -> state map the
    search operates on."""
    return {
        (a.agent_id, t): s for a in instance.agents for t, s in a.curve_prior.items()
    }


def instance_reps(instance: ProblemInstance) -> dict[tuple[str, str], int]:
    out: dict[tuple[str, str], int] = {}
    for a in instance.agents:
        for t in instance.index.task_by_id:
            out[(a.agent_id, t)] = a.completed_reps.get(t, 0)
    return out


def project_schedule_durations(
    instance: ProblemInstance,
    schedule: Schedule,
    states: StateMap,
    completed_reps: RepsMap | None = None,
) -> dict[Ref, GaussianDist]:
    """Duration distribution per scheduled iteration.

    The repetition index seen by an (agent, task) stream is the agent's
    completed count plus its earlier same-task assignments in this schedule,
    so two iterations of one task on one agent project different means.
    """
    reps = completed_reps if completed_reps is not None else instance_reps(instance)
    out: dict[Ref, GaussianDist] = {}
    for agent, order in schedule.agent_orders.items():
        seen: dict[str, int] = {}
        for ref in order:
            task_id = ref[0]
            k = seen.get(task_id, 0)
            i = reps.get((agent, task_id), 0) + k + 1
            out[ref] = curves.project_duration(states[(agent, task_id)], i)
            seen[task_id] = k + 1
    return out


def entropy_term(
    instance: ProblemInstance,
    schedule: Schedule,
    completed_reps: RepsMap | None = None,
) -> float:
    """Mean absolute deviation of per-agent repetition counts, averaged over
    tasks and agents. Prior completed repetitions count toward the balance."""
    reps = completed_reps if completed_reps is not None else instance_reps(instance)
    agents = [a.agent_id for a in instance.agents]
    tasks = list(instance.index.task_by_id)
    if not agents or not tasks:
        return 0.0
    assigned: dict[tuple[str, str], int] = {}
    for ref, agent in schedule.assignment.items():
        key = (agent, ref[0])
        assigned[key] = assigned.get(key, 0) + 1
    total = 0.0
    for t in tasks:
        row = [reps.get((a, t), 0) + assigned.get((a, t), 0) for a in agents]
        mean = sum(row) / len(row)
        total += sum(abs(r - mean) for r in row)
    return total / (len(tasks) * len(agents))


@dataclass
class EvaluatedSchedule:
    schedule: Schedule
    objective: ObjectiveValue
    propagation: PropagationResult
    report: RobustnessReport
    durations: dict[Ref, GaussianDist]

    @property
    def rank_key(self) -> tuple:
        o = self.objective
        return (0 if o.feasible else 1, o.failed_deadlines, o.z)


def evaluate_schedule(
    instance: ProblemInstance,
    schedule: Schedule,
    states: StateMap,
    lam: float,
    alloc: RiskAllocation | None = None,
    completed_reps: RepsMap | None = None,
) -> EvaluatedSchedule:
    if alloc is None:
        alloc = allocate_risk(instance)
    durations = project_schedule_durations(instance, schedule, states, completed_reps)
    prop = propagate(instance, schedule, durations)
    report = check_robustness(prop, alloc)
    z1 = prop.makespan_ub.mean
    z2 = entropy_term(instance, schedule, completed_reps)
    failed = sum(1 for c in report.per_deadline if not c.passed)
    obj = ObjectiveValue(
        z=z1 + lam * z2,
        z1=z1,
        z2=z2,
        lam=lam,
        feasible=report.robust,
        failed_deadlines=failed,
    )
    return EvaluatedSchedule(schedule, obj, prop, report, durations)


def objective(
    instance: ProblemInstance,
    schedule: Schedule,
    states: StateMap,
    lam: float,
    alloc: RiskAllocation | None = None,
    completed_reps: RepsMap | None = None,
) -> ObjectiveValue:
    return evaluate_schedule(instance, schedule, states, lam, alloc, completed_reps).objective


def edf_seed(
    instance: ProblemInstance,
    states: StateMap,
    completed_reps: RepsMap | None = None,
) -> Schedule:
    """Greedy seed: release iterations in effective-deadline order (deadline-
    less last, ties by (task_id, n)) onto the agent that finishes them
    earliest under projected mean durations."""
    reps = completed_reps if completed_reps is not None else instance_reps(instance)
    refs = instance.refs()
    edges_in = {r: instance.precon_edges(r) for r in refs}
    indeg = {r: len(edges_in[r]) for r in refs}
    succ: dict[Ref, list[Ref]] = {r: [] for r in refs}
    for r in refs:
        for p, _ in edges_in[r]:
            succ[p].append(r)

    def eff_deadline(ref: Ref) -> float:
        d = instance.task(ref[0]).abs_deadline
        return d if d is not None else math.inf

    agents = sorted(a.agent_id for a in instance.agents)
    avail = {a: 0.0 for a in agents}
    local_count: dict[tuple[str, str], int] = {}
    est_finish: dict[Ref, float] = {}
    assignment: dict[Ref, str] = {}
    orders: dict[str, list[Ref]] = {a: [] for a in agents}

    ready = [(eff_deadline(r), r) for r in refs if indeg[r] == 0]
    heapq.heapify(ready)
    placed = 0
    while ready:
        _, ref = heapq.heappop(ready)
        task_id = ref[0]
        ready_at = 0.0
        for p, wait in edges_in[ref]:
            ready_at = max(ready_at, est_finish[p] + wait)
        best: tuple[float, str] | None = None
        for a in agents:
            i = reps.get((a, task_id), 0) + local_count.get((a, task_id), 0) + 1
            dur = curves.curve_mean(states[(a, task_id)].x, i)
            fin = max(avail[a], ready_at) + dur
            if best is None or (fin, a) < best:
                best = (fin, a)
        fin, agent = best
        assignment[ref] = agent
        orders[agent].append(ref)
        avail[agent] = fin
        est_finish[ref] = fin
        local_count[(agent, task_id)] = local_count.get((agent, task_id), 0) + 1
        placed += 1
        for s in succ[ref]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, (eff_deadline(s), s))
    if placed != len(refs):
        raise InfeasiblePrecedence("preconditions contain a cycle")
    return Schedule(assignment, {a: tuple(o) for a, o in orders.items()})


def _is_acyclic(instance: ProblemInstance, schedule: Schedule) -> bool:
    try:
        combined_topo_order(instance, schedule)
        return True
    except CycleError:
        return False


def _reassign(schedule: Schedule, refs: list[Ref], agents: list[str], rng) -> Schedule | None:
    if len(agents) < 2:
        return None
    ref = refs[int(rng.integers(len(refs)))]
    current = schedule.assignment[ref]
    others = [a for a in agents if a != current]
    target = others[int(rng.integers(len(others)))]
    new = schedule.copy()
    old_order = list(new.agent_orders[current])
    old_order.remove(ref)
    new.agent_orders[current] = tuple(old_order)
    tgt = list(new.agent_orders.get(target, ()))
    pos = int(rng.integers(len(tgt) + 1))
    tgt.insert(pos, ref)
    new.agent_orders[target] = tuple(tgt)
    new.assignment[ref] = target
    return new


def _swap_agents(schedule: Schedule, refs: list[Ref], rng) -> Schedule | None:
    if len(refs) < 2:
        return None
    i, j = rng.choice(len(refs), size=2, replace=False)
    r1, r2 = refs[int(i)], refs[int(j)]
    a1, a2 = schedule.assignment[r1], schedule.assignment[r2]
    if a1 == a2:
        return None
    new = schedule.copy()
    o1 = list(new.agent_orders[a1])
    o2 = list(new.agent_orders[a2])
    o1[o1.index(r1)] = r2
    o2[o2.index(r2)] = r1
    new.agent_orders[a1] = tuple(o1)
    new.agent_orders[a2] = tuple(o2)
    new.assignment[r1] = a2
    new.assignment[r2] = a1
    return new


def _swap_adjacent(schedule: Schedule, rng) -> Schedule | None:
    candidates = [a for a, o in sorted(schedule.agent_orders.items()) if len(o) >= 2]
    if not candidates:
        return None
    agent = candidates[int(rng.integers(len(candidates)))]
    order = list(schedule.agent_orders[agent])
    k = int(rng.integers(len(order) - 1))
    order[k], order[k + 1] = order[k + 1], order[k]
    new = schedule.copy()
    new.agent_orders[agent] = tuple(order)
    return new


def mutate(
    instance: ProblemInstance,
    schedule: Schedule,
    config: SearchConfig,
    rng: np.random.Generator,
) -> Schedule:
    """One random neighbor of the schedule, precedence-valid.

    Operator draw: reassign / swap-agents / swap-adjacent by configured
    weights. If no operator can change the schedule at all (single agent,
    single iteration) an unchanged copy is returned; repeated precedence
    violations exhaust the retry bound instead.
    """
    refs = sorted(schedule.assignment)
    agents = sorted(schedule.agent_orders)
    weights = np.array(
        [config.reassign_weight, config.swap_agents_weight, config.swap_adjacent_weight],
        dtype=float,
    )
    probs = weights / weights.sum()
    can_change = (
        len(agents) >= 2
        and len(refs) >= 1
        or any(len(o) >= 2 for o in schedule.agent_orders.values())
    )
    if not can_change:
        return schedule.copy()
    for _ in range(config.retry_bound):
        op = int(rng.choice(3, p=probs))
        if op == 0:
            new = _reassign(schedule, refs, agents, rng)
        elif op == 1:
            new = _swap_agents(schedule, refs, rng)
        else:
            new = _swap_adjacent(schedule, rng)
        if new is None:
            continue
        if _is_acyclic(instance, new):
            return new
    raise ExhaustedRetries(f"no valid mutation in {config.retry_bound} attempts")


@dataclass
class EvolveResult:
    best: EvaluatedSchedule
    history: list[ObjectiveValue]


def evolve(
    instance: ProblemInstance,
    states: StateMap,
    config: SearchConfig,
    completed_reps: RepsMap | None = None,
    initial_schedules: list[Schedule] | None = None,
) -> EvolveResult:
    """Elitist mutation search from an EDF seed.

    initial_schedules (say, last round's winner) join the starting population
    so a round loop never regresses below its carried-over schedule.
    Deterministic for a fixed seed when generation-bounded; a time limit adds
    a machine-dependent stop. history records the best objective after the
    seeded population and after each generation; elitism makes the trace
    non-increasing under the ranking (feasibility, failures, z).
    """
    rng = np.random.default_rng(config.seed)
    alloc = allocate_risk(instance)
    t0 = time.monotonic()

    def out_of_time() -> bool:
        return config.time_limit is not None and time.monotonic() - t0 >= config.time_limit

    def make_child(parent: Schedule) -> Schedule:
        try:
            return mutate(instance, parent, config, rng)
        except ExhaustedRetries:
            return parent.copy()

    seed_schedule = edf_seed(instance, states, completed_reps)
    population = [seed_schedule]
    for s in initial_schedules or []:
        if len(population) < config.population_size:
            population.append(s.copy())
    while len(population) < config.population_size:
        population.append(make_child(seed_schedule))
    evaluated = [
        evaluate_schedule(instance, s, states, config.lam, alloc, completed_reps)
        for s in population
    ]
    evaluated.sort(key=lambda e: e.rank_key)
    best = evaluated[0]
    history = [best.objective]

    gen = 0
    n_elite = max(1, round(config.population_size * config.elite_fraction))
    while True:
        if config.max_generations is not None and gen >= config.max_generations:
            break
        if out_of_time():
            break
        elites = evaluated[:n_elite]
        children = []
        while len(children) < config.population_size - n_elite:
            parent = elites[int(rng.integers(len(elites)))]
            child = make_child(parent.schedule)
            children.append(
                evaluate_schedule(instance, child, states, config.lam, alloc, completed_reps)
            )
        evaluated = sorted(elites + children, key=lambda e: e.rank_key)
        if evaluated[0].rank_key < best.rank_key:
            best = evaluated[0]
        history.append(best.objective)
        gen += 1
    return EvolveResult(best, history)
