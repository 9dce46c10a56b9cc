import numpy as np
import pytest

from teamsched.model import (
    HUMAN,
    AgentSpec,
    CurveParams,
    KalmanState,
    Precondition,
    ProblemInstance,
    Schedule,
    TaskSpec,
)


def make_state(c=30.0, k=10.0, beta=0.5, spread=1.0, r=1.0):
    return KalmanState(
        x=CurveParams(c, k, beta),
        P=np.eye(3) * spread,
        Q=np.eye(3) * 1e-4,
        R=r,
    )


def flat_prior(task_ids, c=30.0, k=10.0, beta=0.5, spread=1.0, r=1.0):
    return {t: make_state(c, k, beta, spread, r) for t in task_ids}


def two_agent_instance(
    iterations=(2, 1),
    preconditions=(),
    abs_deadlines=(None, None),
    epsilon=0.05,
    time_budget=None,
):
    """Two humans, two tasks, configurable chain structure."""
    tasks = []
    for j, (n, dl) in enumerate(zip(iterations, abs_deadlines)):
        pres = tuple(p for (tid, p) in preconditions if tid == f"t{j + 1}")
        tasks.append(
            TaskSpec(
                task_id=f"t{j + 1}",
                iterations=n,
                preconditions=pres,
                abs_deadline=dl,
            )
        )
    task_ids = [t.task_id for t in tasks]
    agents = tuple(
        AgentSpec(agent_id=a, kind=HUMAN, curve_prior=flat_prior(task_ids))
        for a in ("a1", "a2")
    )
    return ProblemInstance(
        tasks=tuple(tasks), agents=agents, epsilon=epsilon, time_budget=time_budget
    )


def sched_from_orders(orders):
    """Build a Schedule from {agent: refs}, deriving the assignment map."""
    assignment = {r: a for a, refs in orders.items() for r in refs}
    return Schedule(assignment=assignment, agent_orders={a: tuple(o) for a, o in orders.items()})


def seq_schedule(instance, agent_id=None):
    """Everything on one agent in topological-ish task order."""
    agent_id = agent_id or instance.agents[0].agent_id
    order = []
    for t in instance.tasks:
        for n in range(1, t.iterations + 1):
            order.append((t.task_id, n))
    orders = {a.agent_id: tuple() for a in instance.agents}
    orders[agent_id] = tuple(order)
    return sched_from_orders(orders)


@pytest.fixture
def chain_instance():
    return two_agent_instance(
        iterations=(2, 1),
        preconditions=[("t2", Precondition(pred=("t1", 2), wait=5.0))],
    )
