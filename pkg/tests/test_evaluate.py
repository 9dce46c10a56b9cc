import math

import numpy as np
import pytest
from scipy.special import ndtr

from teamsched.evaluate import (
    MissingDuration,
    allocate_risk,
    check_robustness,
    gaussian_quantile,
    max_gaussian_ub,
    propagate,
    sum_gaussian,
)
from teamsched.model import (
    GaussianDist,
    Precondition,
    Schedule,
    TaskSpec,
)
from teamsched.oracles import make_grid, quadrature_oracle

from conftest import sched_from_orders, seq_schedule, two_agent_instance


def test_sum_gaussian_closed_form():
    s = sum_gaussian(GaussianDist(3.0, 4.0), GaussianDist(1.0, 3.0))
    assert s.mean == pytest.approx(4.0)
    assert s.stddev == pytest.approx(5.0)


def test_max_gaussian_ub_single_passthrough():
    d = GaussianDist(7.0, 1.5)
    assert max_gaussian_ub([d]) == d
    with pytest.raises(ValueError):
        max_gaussian_ub([])


def test_gaussian_quantile():
    d = GaussianDist(10.0, 2.0)
    assert gaussian_quantile(d, 0.5) == pytest.approx(10.0)
    assert gaussian_quantile(d, 0.95) == pytest.approx(10.0 + 1.6448536269514722 * 2)
    assert gaussian_quantile(GaussianDist(4.0, 0.0), 0.99) == 4.0
    with pytest.raises(ValueError):
        gaussian_quantile(d, 0.0)


def dur_map(instance, mean=20.0, std=2.0):
    return {r: GaussianDist(mean, std) for r in instance.refs()}


def test_propagate_sequential_means_add(chain_instance):
    sched = seq_schedule(chain_instance)
    durations = dur_map(chain_instance, mean=10.0, std=0.0)
    prop = propagate(chain_instance, sched, durations)
    # t1#1 -> t1#2 -> (wait 5) -> t2#1 all on one agent
    assert prop.start_mean[("t1", 1)] == pytest.approx(0.0)
    assert prop.finish[("t1", 1)].mean == pytest.approx(10.0)
    assert prop.finish[("t1", 2)].mean == pytest.approx(20.0)
    assert prop.start_mean[("t2", 1)] == pytest.approx(25.0)
    assert prop.finish[("t2", 1)].mean == pytest.approx(35.0)
    assert prop.makespan_ub.mean == pytest.approx(35.0)
    assert prop.makespan_ub.stddev == pytest.approx(0.0)


def test_propagate_stddev_accumulates(chain_instance):
    sched = seq_schedule(chain_instance)
    prop = propagate(chain_instance, sched, dur_map(chain_instance, 10.0, 3.0))
    # three sequential tasks, no max nodes with competing inputs
    assert prop.makespan_ub.stddev == pytest.approx(3.0 * math.sqrt(3.0))


def test_propagate_cross_agent_wait(chain_instance):
    sched = sched_from_orders({"a1": (("t1", 1), ("t1", 2)), "a2": (("t2", 1),)})
    prop = propagate(chain_instance, sched, dur_map(chain_instance, 10.0, 0.0))
    # t2 on the idle agent still waits for t1#2 + 5s wait
    assert prop.start_mean[("t2", 1)] == pytest.approx(25.0)


def test_propagate_floors_duration_at_lb():
    inst = two_agent_instance(iterations=(1, 1))
    tasks = tuple(
        TaskSpec(task_id=t.task_id, iterations=1, duration_lb=12.0) for t in inst.tasks
    )
    inst = type(inst)(tasks=tasks, agents=inst.agents, epsilon=0.05)
    sched = seq_schedule(inst)
    prop = propagate(inst, sched, dur_map(inst, mean=5.0, std=1.0))
    assert prop.finish[(inst.tasks[0].task_id, 1)].mean == pytest.approx(12.0)


def test_propagate_reports_ub_exceedance():
    inst = two_agent_instance(iterations=(1, 1))
    tasks = tuple(
        TaskSpec(task_id=t.task_id, iterations=1, duration_ub=20.0) for t in inst.tasks
    )
    inst = type(inst)(tasks=tasks, agents=inst.agents, epsilon=0.05)
    sched = seq_schedule(inst)
    prop = propagate(inst, sched, dur_map(inst, mean=18.0, std=2.0))
    ref = (inst.tasks[0].task_id, 1)
    assert prop.ub_exceed[ref] == pytest.approx(1.0 - ndtr(1.0), rel=1e-6)


def test_propagate_missing_duration_raises(chain_instance):
    sched = seq_schedule(chain_instance)
    durations = dur_map(chain_instance)
    durations.pop(("t2", 1))
    with pytest.raises(MissingDuration):
        propagate(chain_instance, sched, durations)


def test_allocate_risk_uniform_split():
    inst = two_agent_instance(
        iterations=(1, 1), abs_deadlines=(100.0, 200.0), time_budget=500.0
    )
    alloc = allocate_risk(inst)
    assert len(alloc.deadlines) == 3  # two abs + budget pseudo-deadline
    for key, eps in alloc.epsilon_d.items():
        assert eps == pytest.approx(inst.epsilon / 3)
    assert alloc.share == pytest.approx(inst.epsilon / 3)


def test_allocate_risk_no_deadlines():
    inst = two_agent_instance(iterations=(1, 1))
    alloc = allocate_risk(inst)
    assert alloc.deadlines == ()
    assert alloc.epsilon_d == {}


def test_check_robustness_abs_deadline_pass_and_fail():
    inst = two_agent_instance(iterations=(1, 1), abs_deadlines=(100.0, None))
    sched = seq_schedule(inst)
    alloc = allocate_risk(inst)
    tight = propagate(inst, sched, dur_map(inst, mean=45.0, std=1.0))
    loose = propagate(inst, sched, dur_map(inst, mean=45.0, std=45.0))
    ok = check_robustness(tight, alloc)
    bad = check_robustness(loose, alloc)
    assert ok.robust and all(c.passed for c in ok.per_deadline)
    assert not bad.robust
    # margin sign agrees with the pass flag
    for rep in (ok, bad):
        for c in rep.per_deadline:
            assert (c.margin >= 0) == c.passed
            assert isinstance(c.passed, bool)


def test_check_robustness_budget_uses_makespan():
    inst = two_agent_instance(iterations=(1, 1), time_budget=50.0)
    sched = seq_schedule(inst)
    alloc = allocate_risk(inst)
    prop = propagate(inst, sched, dur_map(inst, mean=40.0, std=0.0))
    rep = check_robustness(prop, alloc)
    assert not rep.robust  # two tasks of 40 -> makespan 80 > 50
    prop2 = propagate(inst, sched, dur_map(inst, mean=20.0, std=0.0))
    rep2 = check_robustness(prop2, alloc)
    assert rep2.robust  # 40 fits inside the 50 budget


def test_robustness_report_json(chain_instance):
    sched = seq_schedule(chain_instance)
    alloc = allocate_risk(chain_instance)
    rep = check_robustness(propagate(chain_instance, sched, dur_map(chain_instance)), alloc)
    doc = rep.to_json_dict()
    assert set(doc) >= {"robust", "makespan_ub", "per_deadline", "duration_flags"}


def test_composition_soundness_small_random_schedules():
    # bound CDF must sit below the quadrature CDF pointwise
    rng = np.random.default_rng(42)
    for trial in range(6):
        n_tasks = int(rng.integers(2, 4))
        iters = [int(rng.integers(1, 3)) for _ in range(n_tasks)]
        while sum(iters) > 8:
            iters[iters.index(max(iters))] -= 1
        pre = []
        if n_tasks >= 2 and rng.random() < 0.7:
            pre.append(("t2", Precondition(pred=("t1", iters[0]), wait=float(rng.uniform(0, 10)))))
        inst = two_agent_instance(iterations=tuple(iters), preconditions=pre)
        refs = list(inst.refs())
        orders = {"a1": [], "a2": []}
        for t in inst.tasks:
            a = "a1" if rng.random() < 0.5 else "a2"
            for n in range(1, t.iterations + 1):
                orders[a].append((t.task_id, n))
        sched = sched_from_orders(orders)
        durations = {
            r: GaussianDist(float(rng.uniform(5, 30)), float(rng.uniform(0.5, 4)))
            for r in refs
        }
        prop = propagate(inst, sched, durations)
        quad = quadrature_oracle(inst, sched, durations)
        xs = quad.grid.xs
        bound_cdf = ndtr((xs - prop.makespan_ub.mean) / prop.makespan_ub.stddev)
        # quadrature carries small discretization error; 5e-3 absorbs it
        assert np.max(bound_cdf - quad.makespan_cdf()) <= 5e-3
