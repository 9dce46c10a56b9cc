"""Synthetic problem instances with known ground-truth learning curves.

Each (agent, task) pair gets a true exponential curve assembled from a task
base, an agent offset, and pair jitter, so agents differ per task but share
structure. Embedded priors are the true parameters blurred by a relative
noise factor; the ground truth stays outside the instance so benchmarks can
replay executions against it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import curves
from .model import (
    AgentSpec,
    CurveParams,
    HUMAN,
    KalmanState,
    Precondition,
    ProblemInstance,
    Ref,
    Schedule,
    TaskSpec,
)


class ConfigError(Exception):
    """Generator configuration rejected before any drawing happens."""


@dataclass(frozen=True)
class GenConfig:
    n_tasks: int = 6
    n_agents: int = 3
    max_iterations: int = 3
    deadline_fraction: float = 0.2
    # count -> probability, counts truncated to the tasks drawn so far
    precondition_weights: tuple[tuple[int, float], ...] = (
        (0, 0.4),
        (1, 0.3),
        (2, 0.2),
        (3, 0.1),
    )
    wait_prob: float = 0.5
    wait_range: tuple[float, float] = (5.0, 30.0)
    noise_frac: float = 0.08
    epsilon: float = 0.05
    time_budget: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_tasks < 1:
            raise ConfigError("n_tasks must be >= 1")
        if self.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 0.0 <= self.deadline_fraction <= 1.0:
            raise ConfigError("deadline_fraction must be in [0, 1]")
        if not self.precondition_weights or any(
            c < 0 or p < 0 for c, p in self.precondition_weights
        ):
            raise ConfigError("precondition_weights must be nonnegative")
        if sum(p for _, p in self.precondition_weights) <= 0:
            raise ConfigError("precondition_weights must not all be zero")
        if not 0.0 <= self.wait_prob <= 1.0:
            raise ConfigError("wait_prob must be in [0, 1]")
        if self.wait_range[0] < 0 or self.wait_range[1] < self.wait_range[0]:
            raise ConfigError("wait_range must be 0 <= lo <= hi")
        if self.noise_frac < 0:
            raise ConfigError("noise_frac must be >= 0")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must be in (0, 1)")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ConfigError("time_budget must be positive")

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "GenConfig":
        kwargs = dict(d)
        if "precondition_weights" in kwargs:
            kwargs["precondition_weights"] = tuple(
                (int(c), float(p)) for c, p in kwargs["precondition_weights"]
            )
        if "wait_range" in kwargs:
            lo, hi = kwargs["wait_range"]
            kwargs["wait_range"] = (float(lo), float(hi))
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class GroundTruth:
    """True curves and noise levels, keyed by (agent_id, task_id)."""

    params: dict[tuple[str, str], CurveParams]
    noise_std: dict[tuple[str, str], float]

    def duration_mean(self, agent_id: str, task_id: str, iteration: int) -> float:
        return curves.curve_mean(self.params[(agent_id, task_id)], iteration)


def _true_params(rng: np.random.Generator, n_tasks: int, n_agents: int):
    task_c = rng.normal(60.0, 15.0, n_tasks)
    task_k = rng.normal(30.0, 10.0, n_tasks)
    task_b = rng.uniform(0.1, 0.8, n_tasks)
    agent_c = rng.normal(20.0, 10.0, n_agents)
    agent_k = rng.normal(10.0, 5.0, n_agents)
    agent_b = rng.uniform(0.1, 0.8, n_agents)
    out = {}
    for ti in range(n_tasks):
        for ai in range(n_agents):
            c = task_c[ti] + agent_c[ai] + rng.uniform(0.0, 20.0)
            k = task_k[ti] + agent_k[ai] + rng.uniform(0.0, 10.0)
            b = (task_b[ti] + agent_b[ai] + rng.uniform(0.1, 0.8)) / 3.0
            out[(ti, ai)] = CurveParams(
                c=max(c, curves.C_FLOOR), k=max(k, 0.0), beta=min(max(b, 0.0), 5.0)
            )
    return out


def _prior_state(
    rng: np.random.Generator, true: CurveParams, noise_frac: float
) -> KalmanState:
    blur = 1.0 + noise_frac * rng.standard_normal(3)
    x = CurveParams(
        c=max(true.c * blur[0], curves.C_FLOOR),
        k=max(true.k * blur[1], 0.0),
        beta=min(max(true.beta * blur[2], 0.0), 5.0),
    )
    spread = np.maximum(
        noise_frac * np.abs([true.c, true.k, true.beta]), [1.0, 1.0, 0.01]
    )
    P = np.diag(spread**2)
    R = float((noise_frac * true.c) ** 2 + 0.25)
    return KalmanState(x=x, P=P, Q=1e-4 * P, R=R)


def generate(config: GenConfig) -> tuple[ProblemInstance, GroundTruth]:
    """Draw an instance and its ground truth from the config seed."""
    rng = np.random.default_rng(config.seed)
    task_ids = [f"t{j + 1:02d}" for j in range(config.n_tasks)]
    agent_ids = [f"a{j + 1:02d}" for j in range(config.n_agents)]
    true = _true_params(rng, config.n_tasks, config.n_agents)

    iterations = [
        int(rng.integers(1, config.max_iterations + 1)) for _ in task_ids
    ]

    counts = np.array([c for c, _ in config.precondition_weights])
    probs = np.array([p for _, p in config.precondition_weights], dtype=float)
    probs = probs / probs.sum()
    total_wait = 0.0
    preconditions: list[list[Precondition]] = []
    for j in range(config.n_tasks):
        want = int(rng.choice(counts, p=probs))
        m = min(want, j)
        precons = []
        if m > 0:
            picks = rng.choice(j, size=m, replace=False)
            for p in sorted(int(x) for x in picks):
                wait = 0.0
                if rng.random() < config.wait_prob:
                    wait = float(rng.uniform(*config.wait_range))
                    total_wait += wait
                precons.append(
                    Precondition(pred=(task_ids[p], iterations[p]), wait=wait)
                )
        preconditions.append(precons)

    # priors before deadlines: the budget heuristic needs projected means
    priors: dict[tuple[str, str], KalmanState] = {}
    noise_std: dict[tuple[str, str], float] = {}
    gt_params: dict[tuple[str, str], CurveParams] = {}
    for ti, t in enumerate(task_ids):
        for ai, a in enumerate(agent_ids):
            tp = true[(ti, ai)]
            gt_params[(a, t)] = tp
            noise_std[(a, t)] = config.noise_frac * tp.c
            priors[(a, t)] = _prior_state(rng, tp, config.noise_frac)

    mu_total = total_wait
    var_total = 0.0
    for ti, t in enumerate(task_ids):
        for i in range(1, iterations[ti] + 1):
            per_agent = [
                curves.project_duration(priors[(a, t)], i) for a in agent_ids
            ]
            mu_total += sum(d.mean for d in per_agent) / len(per_agent)
            var_total += sum(d.stddev**2 for d in per_agent) / len(per_agent)
    budget = config.time_budget
    if budget is None:
        budget = (mu_total + 3.0 * np.sqrt(var_total)) / config.n_agents
        budget = float(max(budget, 1.0))

    n_deadlined = int(round(config.deadline_fraction * config.n_tasks))
    deadlined = set()
    if n_deadlined > 0:
        deadlined = {
            int(x) for x in rng.choice(config.n_tasks, size=n_deadlined, replace=False)
        }

    tasks = []
    for j, t in enumerate(task_ids):
        best_means = [
            min(curves.project_duration(priors[(a, t)], i).mean for a in agent_ids)
            for i in range(1, iterations[j] + 1)
        ]
        emf = sum(best_means)
        abs_deadline = None
        if j in deadlined:
            lo = 1.2 * emf
            hi = max(budget, 2.0 * lo)
            abs_deadline = float(rng.uniform(lo, hi))
        cmax = max(gt_params[(a, t)].c for a in agent_ids)
        kmax = max(gt_params[(a, t)].k for a in agent_ids)
        tasks.append(
            TaskSpec(
                task_id=t,
                iterations=iterations[j],
                duration_lb=0.1,
                duration_ub=1.5 * (cmax + kmax),
                preconditions=tuple(preconditions[j]),
                abs_deadline=abs_deadline,
            )
        )

    agents = [
        AgentSpec(
            agent_id=a,
            kind=HUMAN,
            curve_prior={t: priors[(a, t)] for t in task_ids},
            completed_reps={},
        )
        for a in agent_ids
    ]
    instance = ProblemInstance(
        tasks=tuple(tasks),
        agents=tuple(agents),
        epsilon=config.epsilon,
        time_budget=budget,
    )
    return instance, GroundTruth(params=gt_params, noise_std=noise_std)


def sample_execution(
    gt: GroundTruth,
    instance: ProblemInstance,
    schedule: Schedule,
    seed: int = 0,
    completed_reps: Mapping[tuple[str, str], int] | None = None,
) -> dict[Ref, float]:
    """One noisy execution of a schedule under the ground truth.

    Repetition indices advance along each agent's order exactly as the
    projection does, so observed durations line up with projected ones.
    """
    rng = np.random.default_rng(seed)
    lb = {t.task_id: t.duration_lb for t in instance.tasks}
    out: dict[Ref, float] = {}
    for agent in sorted(schedule.agent_orders):
        seen: dict[str, int] = {}
        for ref in schedule.agent_orders[agent]:
            task_id = ref[0]
            k = seen.get(task_id, 0)
            base = 0
            if completed_reps is not None:
                base = completed_reps.get((agent, task_id), 0)
            i = base + k + 1
            mean = gt.duration_mean(agent, task_id, i)
            d = rng.normal(mean, gt.noise_std[(agent, task_id)])
            out[ref] = float(max(d, lb[task_id], 0.1))
            seen[task_id] = k + 1
    return out
