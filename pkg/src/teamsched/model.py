"""Domain types shared by every layer: tasks, agents, schedules, deadlines.

Iterations of a task are addressed by 1-based refs (task_id, n). All times are
seconds from schedule start. Instances and schedules serialize to plain JSON
with refs encoded as {"task": ..., "n": ...}.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

Ref = tuple[str, int]

HUMAN = "human"
ROBOT = "robot"
AGENT_KINDS = (HUMAN, ROBOT)


class CycleError(Exception):
    """Precedence or ordering constraints form a cycle."""


@dataclass(frozen=True)
class GaussianDist:
    """Gaussian over seconds; stddev 0 encodes a deterministic value."""

    mean: float
    stddev: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.stddev)):
            raise ValueError("GaussianDist requires finite parameters")
        if self.stddev < 0.0:
            raise ValueError("stddev must be >= 0")

    def cdf(self, y: float) -> float:
        if self.stddev == 0.0:
            return 1.0 if y >= self.mean else 0.0
        z = (y - self.mean) / self.stddev
        return 0.5 * math.erfc(-z / math.sqrt(2.0))

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "stddev": self.stddev}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "GaussianDist":
        return cls(float(d["mean"]), float(d["stddev"]))


@dataclass(frozen=True)
class CurveParams:
    """Exponential learning curve y = c + k * exp(-beta * i), i >= 1."""

    c: float
    k: float
    beta: float

    def __post_init__(self):
        for v in (self.c, self.k, self.beta):
            if not math.isfinite(v):
                raise ValueError("curve parameters must be finite")

    def to_json_dict(self) -> dict:
        return {"c": self.c, "k": self.k, "beta": self.beta}

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "CurveParams":
        return cls(float(d["c"]), float(d["k"]), float(d["beta"]))


@dataclass(eq=False)
class KalmanState:
    """Adaptive filter state for one (agent, task) learning curve.

    residual_std is the current observation-noise estimate and always equals
    sqrt(R); it is stored separately because it is what downstream consumers
    read.
    """

    x: CurveParams
    P: np.ndarray
    Q: np.ndarray
    R: float
    alpha: float = 0.9
    residual_std: float | None = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float).reshape(3, 3)
        self.Q = np.asarray(self.Q, dtype=float).reshape(3, 3)
        self.R = float(self.R)
        if self.R < 0.0:
            raise ValueError("R must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.residual_std is None:
            self.residual_std = math.sqrt(self.R)
        if not np.all(np.isfinite(self.P)) or not np.all(np.isfinite(self.Q)):
            raise ValueError("P and Q must be finite")

    def __eq__(self, other):
        if not isinstance(other, KalmanState):
            return NotImplemented
        return (
            self.x == other.x
            and np.array_equal(self.P, other.P)
            and np.array_equal(self.Q, other.Q)
            and self.R == other.R
            and self.alpha == other.alpha
            and self.residual_std == other.residual_std
        )

    def to_json_dict(self) -> dict:
        return {
            "x": self.x.to_json_dict(),
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "R": self.R,
            "alpha": self.alpha,
            "residual_std": self.residual_std,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "KalmanState":
        return cls(
            x=CurveParams.from_json_dict(d["x"]),
            P=np.array(d["P"], dtype=float),
            Q=np.array(d["Q"], dtype=float),
            R=float(d["R"]),
            alpha=float(d.get("alpha", 0.9)),
            residual_std=float(d["residual_std"]) if "residual_std" in d else None,
        )


@dataclass(frozen=True)
class DurationObservation:
    agent_id: str
    task_id: str
    iteration_index: int
    observed_duration: float

    def __post_init__(self):
        if self.iteration_index < 1:
            raise ValueError("iteration_index starts at 1")
        if not math.isfinite(self.observed_duration) or self.observed_duration < 0:
            raise ValueError("observed_duration must be finite and >= 0")

    def to_json_dict(self) -> dict:
        return {
            "agent": self.agent_id,
            "task": self.task_id,
            "i": self.iteration_index,
            "duration": self.observed_duration,
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "DurationObservation":
        return cls(str(d["agent"]), str(d["task"]), int(d["i"]), float(d["duration"]))


def ref_to_json(ref: Ref) -> dict:
    return {"task": ref[0], "n": ref[1]}


def ref_from_json(d: Mapping) -> Ref:
    return (str(d["task"]), int(d["n"]))


def ref_key(ref: Ref) -> str:
    return f"{ref[0]}#{ref[1]}"


@dataclass(frozen=True)
class Precondition:
    pred: Ref
    wait: float = 0.0


@dataclass(frozen=True)
class RelDeadline:
    """Finish of `end` minus this task's start must fit in `budget` seconds."""

    end: Ref
    budget: float


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    iterations: int = 1
    duration_lb: float | None = None
    duration_ub: float | None = None
    preconditions: tuple[Precondition, ...] = ()
    abs_deadline: float | None = None
    rel_deadlines: tuple[RelDeadline, ...] = ()

    def to_json_dict(self) -> dict:
        d: dict = {"task_id": self.task_id, "iterations": self.iterations}
        if self.duration_lb is not None:
            d["duration_lb"] = self.duration_lb
        if self.duration_ub is not None:
            d["duration_ub"] = self.duration_ub
        if self.preconditions:
            d["preconditions"] = [
                {"pred": ref_to_json(p.pred), "wait": p.wait} for p in self.preconditions
            ]
        if self.abs_deadline is not None:
            d["abs_deadline"] = self.abs_deadline
        if self.rel_deadlines:
            d["rel_deadlines"] = [
                {"end": ref_to_json(r.end), "budget": r.budget} for r in self.rel_deadlines
            ]
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "TaskSpec":
        return cls(
            task_id=str(d["task_id"]),
            iterations=int(d.get("iterations", 1)),
            duration_lb=None if d.get("duration_lb") is None else float(d["duration_lb"]),
            duration_ub=None if d.get("duration_ub") is None else float(d["duration_ub"]),
            preconditions=tuple(
                Precondition(ref_from_json(p["pred"]), float(p.get("wait", 0.0)))
                for p in d.get("preconditions", [])
            ),
            abs_deadline=None if d.get("abs_deadline") is None else float(d["abs_deadline"]),
            rel_deadlines=tuple(
                RelDeadline(ref_from_json(r["end"]), float(r["budget"]))
                for r in d.get("rel_deadlines", [])
            ),
        )


@dataclass(eq=False)
class AgentSpec:
    agent_id: str
    kind: str
    curve_prior: dict[str, KalmanState] = field(default_factory=dict)
    completed_reps: dict[str, int] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, AgentSpec):
            return NotImplemented
        return (
            self.agent_id == other.agent_id
            and self.kind == other.kind
            and self.curve_prior == other.curve_prior
            and self.completed_reps == other.completed_reps
        )

    def to_json_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "kind": self.kind,
            "curve_prior": {t: s.to_json_dict() for t, s in sorted(self.curve_prior.items())},
            "completed_reps": {t: r for t, r in sorted(self.completed_reps.items())},
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "AgentSpec":
        return cls(
            agent_id=str(d["agent_id"]),
            kind=str(d["kind"]),
            curve_prior={
                str(t): KalmanState.from_json_dict(s)
                for t, s in d.get("curve_prior", {}).items()
            },
            completed_reps={str(t): int(r) for t, r in d.get("completed_reps", {}).items()},
        )


ABS = "abs"
REL = "rel"
BUDGET = "budget"


@dataclass(frozen=True)
class DeadlineSpec:
    """One chance constraint: kind abs/rel/budget, resolved to iteration refs."""

    kind: str
    key: str
    bound: float
    target: Ref | None = None
    anchor: Ref | None = None


class _Index:
    """Derived lookups for an instance; built lazily, never serialized."""

    def __init__(self, inst: "ProblemInstance"):
        self.task_by_id = {t.task_id: t for t in inst.tasks}
        self.agent_by_id = {a.agent_id: a for a in inst.agents}
        refs: list[Ref] = []
        for t in inst.tasks:
            refs.extend((t.task_id, n) for n in range(1, t.iterations + 1))
        self.refs = tuple(refs)
        self.ref_set = frozenset(refs)
        edges: dict[Ref, list[tuple[Ref, float]]] = {r: [] for r in refs}
        for t in inst.tasks:
            for p in t.preconditions:
                edges[(t.task_id, 1)].append((p.pred, p.wait))
            # repetitions of one task happen in order
            for n in range(2, t.iterations + 1):
                edges[(t.task_id, n)].append(((t.task_id, n - 1), 0.0))
        self.edges_in = {r: tuple(es) for r, es in edges.items()}
        self.deadlines = self._deadlines(inst)

    def _deadlines(self, inst: "ProblemInstance") -> tuple[DeadlineSpec, ...]:
        out: list[DeadlineSpec] = []
        for t in inst.tasks:
            if t.abs_deadline is not None:
                ref = (t.task_id, t.iterations)
                out.append(DeadlineSpec(ABS, f"abs:{t.task_id}", t.abs_deadline, target=ref))
            for r in t.rel_deadlines:
                anchor = (t.task_id, 1)
                key = f"rel:{ref_key(anchor)}->{ref_key(r.end)}"
                out.append(DeadlineSpec(REL, key, r.budget, target=r.end, anchor=anchor))
        if inst.time_budget is not None:
            out.append(DeadlineSpec(BUDGET, "budget", inst.time_budget))
        return tuple(out)


@dataclass(eq=False)
class ProblemInstance:
    """Tasks, agents, and the schedule-level risk budget. Treat as immutable."""

    tasks: tuple[TaskSpec, ...]
    agents: tuple[AgentSpec, ...]
    epsilon: float
    time_budget: float | None = None
    _index: _Index | None = field(default=None, repr=False)

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.tasks == other.tasks
            and list(self.agents) == list(other.agents)
            and self.epsilon == other.epsilon
            and self.time_budget == other.time_budget
        )

    @property
    def index(self) -> _Index:
        if self._index is None:
            self._index = _Index(self)
        return self._index

    def refs(self) -> tuple[Ref, ...]:
        return self.index.refs

    def task(self, task_id: str) -> TaskSpec:
        return self.index.task_by_id[task_id]

    def agent(self, agent_id: str) -> AgentSpec:
        return self.index.agent_by_id[agent_id]

    def precon_edges(self, ref: Ref) -> tuple[tuple[Ref, float], ...]:
        """Incoming precedence edges (pred ref, wait), implicit chain included."""
        return self.index.edges_in[ref]

    def deadlines(self) -> tuple[DeadlineSpec, ...]:
        return self.index.deadlines

    def to_json_dict(self) -> dict:
        d: dict = {
            "tasks": [t.to_json_dict() for t in self.tasks],
            "agents": [a.to_json_dict() for a in self.agents],
            "epsilon": self.epsilon,
        }
        if self.time_budget is not None:
            d["time_budget"] = self.time_budget
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "ProblemInstance":
        return cls(
            tasks=tuple(TaskSpec.from_json_dict(t) for t in d["tasks"]),
            agents=tuple(AgentSpec.from_json_dict(a) for a in d["agents"]),
            epsilon=float(d["epsilon"]),
            time_budget=None if d.get("time_budget") is None else float(d["time_budget"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ProblemInstance":
        return cls.from_json_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        with open(path) as fh:
            return cls.loads(fh.read())


@dataclass
class Schedule:
    """Assignment of every iteration ref to an agent plus per-agent orders."""

    assignment: dict[Ref, str]
    agent_orders: dict[str, tuple[Ref, ...]]

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        return self.assignment == other.assignment and self.agent_orders == other.agent_orders

    def copy(self) -> "Schedule":
        return Schedule(dict(self.assignment), dict(self.agent_orders))

    def to_json_dict(self) -> dict:
        return {
            "assignment": [
                {"task": r[0], "n": r[1], "agent": a}
                for r, a in sorted(self.assignment.items())
            ],
            "agent_orders": {
                agent: [ref_to_json(r) for r in order]
                for agent, order in sorted(self.agent_orders.items())
            },
        }

    @classmethod
    def from_json_dict(cls, d: Mapping) -> "Schedule":
        return cls(
            assignment={(str(e["task"]), int(e["n"])): str(e["agent"]) for e in d["assignment"]},
            agent_orders={
                str(agent): tuple(ref_from_json(r) for r in order)
                for agent, order in d["agent_orders"].items()
            },
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "Schedule":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


@dataclass
class ValidationResult:
    ok: bool
    violations: list[Violation]


def toposort(nodes: Iterable[Ref], edges_in: Mapping[Ref, Iterable[Ref]]) -> tuple[Ref, ...]:
    """Kahn's algorithm with sorted tie-breaks so traversal is deterministic."""
    nodes = sorted(nodes)
    indeg = {r: 0 for r in nodes}
    out: dict[Ref, list[Ref]] = {r: [] for r in nodes}
    for r in nodes:
        for p in edges_in.get(r, ()):
            indeg[r] += 1
            out[p].append(r)
    ready = sorted(r for r in nodes if indeg[r] == 0)
    order: list[Ref] = []
    heapq.heapify(ready)
    while ready:
        r = heapq.heappop(ready)
        order.append(r)
        for s in out[r]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(ready, s)
    if len(order) != len(nodes):
        raise CycleError("precedence constraints contain a cycle")
    return tuple(order)


def combined_topo_order(instance: ProblemInstance, schedule: Schedule) -> tuple[Ref, ...]:
    """Topological order over precedence edges plus per-agent order chains."""
    edges: dict[Ref, list[Ref]] = {r: [] for r in instance.refs()}
    for r in instance.refs():
        edges[r].extend(p for p, _ in instance.precon_edges(r))
    for order in schedule.agent_orders.values():
        for prev, cur in zip(order, order[1:]):
            edges[cur].append(prev)
    return toposort(instance.refs(), edges)


def _robot_prior_ok(state: KalmanState) -> bool:
    return (
        state.x.k == 0.0
        and state.residual_std == 0.0
        and state.R == 0.0
        and not np.any(state.P)
    )


def validate_instance(instance: ProblemInstance) -> ValidationResult:
    """Structural validation: id uniqueness, ref resolution, DAG-ness, priors."""
    v: list[Violation] = []
    if not instance.agents:
        v.append(Violation("no-agents", "instance needs at least one agent"))
    if not 0.0 < instance.epsilon < 1.0:
        v.append(Violation("bad-epsilon", f"epsilon must be in (0, 1), got {instance.epsilon}"))
    if instance.time_budget is not None and instance.time_budget <= 0:
        v.append(Violation("bad-budget", "time_budget must be positive"))

    task_ids = [t.task_id for t in instance.tasks]
    if len(set(task_ids)) != len(task_ids):
        v.append(Violation("duplicate-task", "task ids must be unique"))
    agent_ids = [a.agent_id for a in instance.agents]
    if len(set(agent_ids)) != len(agent_ids):
        v.append(Violation("duplicate-agent", "agent ids must be unique"))
    if v:
        return ValidationResult(False, v)

    known = instance.index.ref_set
    for t in instance.tasks:
        if t.iterations < 1:
            v.append(Violation("bad-iterations", f"{t.task_id}: iterations must be >= 1"))
        if t.duration_lb is not None and t.duration_lb < 0:
            v.append(Violation("bad-bounds", f"{t.task_id}: duration_lb must be >= 0"))
        if (
            t.duration_lb is not None
            and t.duration_ub is not None
            and t.duration_lb > t.duration_ub
        ):
            v.append(Violation("bad-bounds", f"{t.task_id}: duration_lb > duration_ub"))
        if t.abs_deadline is not None and t.abs_deadline <= 0:
            v.append(Violation("bad-deadline", f"{t.task_id}: abs_deadline must be positive"))
        for p in t.preconditions:
            if p.wait < 0:
                v.append(Violation("bad-wait", f"{t.task_id}: wait must be >= 0"))
            if p.pred not in known:
                v.append(
                    Violation("unknown-ref", f"{t.task_id}: precondition {ref_key(p.pred)} unknown")
                )
        for r in t.rel_deadlines:
            if r.end not in known:
                v.append(
                    Violation("unknown-ref", f"{t.task_id}: rel deadline end {ref_key(r.end)} unknown")
                )
            if r.budget <= 0:
                v.append(Violation("bad-deadline", f"{t.task_id}: rel budget must be positive"))

    for a in instance.agents:
        if a.kind not in AGENT_KINDS:
            v.append(Violation("bad-kind", f"{a.agent_id}: kind must be one of {AGENT_KINDS}"))
            continue
        for task_id, reps in a.completed_reps.items():
            if task_id not in instance.index.task_by_id:
                v.append(Violation("unknown-ref", f"{a.agent_id}: completed_reps for unknown task {task_id}"))
            if reps < 0:
                v.append(Violation("bad-reps", f"{a.agent_id}: completed_reps must be >= 0"))
        for task_id, state in a.curve_prior.items():
            if task_id not in instance.index.task_by_id:
                v.append(Violation("unknown-ref", f"{a.agent_id}: prior for unknown task {task_id}"))
                continue
            if state.x.c <= 0 or state.x.k < 0 or not 0 <= state.x.beta <= 5:
                v.append(Violation("bad-curve", f"{a.agent_id}/{task_id}: curve params out of range"))
            if a.kind == ROBOT and not _robot_prior_ok(state):
                v.append(
                    Violation("robot-curve", f"{a.agent_id}/{task_id}: robots need k = 0 and zero noise")
                )
        missing = [t for t in task_ids if t not in a.curve_prior]
        if missing:
            v.append(
                Violation("missing-prior", f"{a.agent_id}: no duration prior for {', '.join(missing)}")
            )

    if not any(x.code == "unknown-ref" or x.code == "bad-iterations" for x in v):
        try:
            toposort(
                instance.refs(),
                {r: [p for p, _ in instance.precon_edges(r)] for r in instance.refs()},
            )
        except CycleError:
            v.append(Violation("cycle", "preconditions form a cycle"))

    return ValidationResult(not v, v)


def schedule_violations(instance: ProblemInstance, schedule: Schedule) -> list[Violation]:
    """Check a schedule against an instance: coverage, consistency, acyclicity."""
    v: list[Violation] = []
    refs = set(instance.refs())
    assigned = set(schedule.assignment)
    for r in sorted(assigned - refs):
        v.append(Violation("unknown-ref", f"assignment covers unknown ref {ref_key(r)}"))
    for r in sorted(refs - assigned):
        v.append(Violation("missing-ref", f"{ref_key(r)} is not assigned"))
    agent_ids = {a.agent_id for a in instance.agents}
    for r, agent in sorted(schedule.assignment.items()):
        if agent not in agent_ids:
            v.append(Violation("unknown-agent", f"{ref_key(r)} assigned to unknown agent {agent}"))
    seen: set[Ref] = set()
    for agent, order in sorted(schedule.agent_orders.items()):
        if agent not in agent_ids:
            v.append(Violation("unknown-agent", f"order given for unknown agent {agent}"))
            continue
        for r in order:
            if r in seen:
                v.append(Violation("duplicate-ref", f"{ref_key(r)} appears in two orders"))
            seen.add(r)
            if schedule.assignment.get(r) != agent:
                v.append(
                    Violation("order-mismatch", f"{ref_key(r)} ordered under {agent} but assigned elsewhere")
                )
    for r in sorted(assigned - seen):
        v.append(Violation("order-missing", f"{ref_key(r)} missing from its agent's order"))
    if not v:
        try:
            combined_topo_order(instance, schedule)
        except CycleError:
            v.append(Violation("cycle", "agent orders conflict with preconditions"))
    return v
