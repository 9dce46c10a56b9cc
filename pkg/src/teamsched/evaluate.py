"""Schedule evaluation under Gaussian duration uncertainty.

Finish times propagate through the combined precedence/order DAG: each
iteration starts at the max of its predecessors' finishes (waits shift the
mean) and its agent's previous finish, then adds its duration. The max of
Gaussians is replaced by a Gaussian upper bound whose CDF provably sits below
the product of the input CDFs at the checked points, so deadline statements
derived from the result are conservative. Risk is split uniformly across
deadlines and each is checked as a one-sided quantile condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from . import kernels
from .model import (
    ABS,
    BUDGET,
    REL,
    DeadlineSpec,
    GaussianDist,
    ProblemInstance,
    Ref,
    Schedule,
    combined_topo_order,
    ref_key,
)


class MissingDuration(Exception):
    """A scheduled iteration has no projected duration."""


def sum_gaussian(a: GaussianDist, b: GaussianDist) -> GaussianDist:
    """Sum of independent Gaussians, closed form."""
    return GaussianDist(a.mean + b.mean, math.hypot(a.stddev, b.stddev))


def max_gaussian_ub(inputs: Sequence[GaussianDist], **kwargs) -> GaussianDist:
    """Gaussian stochastically dominating max(inputs); see kernels for the
    line-search construction. A single input is returned unchanged."""
    if not inputs:
        raise ValueError("max_gaussian_ub needs at least one input")
    if len(inputs) == 1:
        return inputs[0]
    means = np.array([d.mean for d in inputs], dtype=float)
    stds = np.array([d.stddev for d in inputs], dtype=float)
    mu, sigma, _ = kernels.max_upper_bound(means, stds, **kwargs)
    return GaussianDist(mu, sigma)


def gaussian_quantile(d: GaussianDist, p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    if d.stddev == 0.0:
        return d.mean
    return d.mean + float(ndtri(p)) * d.stddev


@dataclass
class PropagationResult:
    """Per-iteration start means and finish bounds plus the makespan bound.

    ub_exceed carries P(duration > duration_ub) for tasks that declare an
    upper bound; it is a side report and never alters propagation.
    """

    finish: dict[Ref, GaussianDist]
    start_mean: dict[Ref, float]
    makespan_ub: GaussianDist
    ub_exceed: dict[Ref, float] = field(default_factory=dict)


def propagate(
    instance: ProblemInstance,
    schedule: Schedule,
    durations: Mapping[Ref, GaussianDist],
) -> PropagationResult:
    """Traverse the schedule DAG and bound every finish distribution."""
    order = combined_topo_order(instance, schedule)
    prev_on_agent: dict[str, Ref] = {}
    pred_of: dict[Ref, Ref | None] = {}
    for agent, agent_order in schedule.agent_orders.items():
        prev: Ref | None = None
        for r in agent_order:
            pred_of[r] = prev
            prev = r

    finish: dict[Ref, GaussianDist] = {}
    start_mean: dict[Ref, float] = {}
    ub_exceed: dict[Ref, float] = {}

    for ref in order:
        task = instance.task(ref[0])
        try:
            dur = durations[ref]
        except KeyError:
            raise MissingDuration(f"no duration for {ref_key(ref)}") from None
        if task.duration_lb is not None and dur.mean < task.duration_lb:
            dur = GaussianDist(task.duration_lb, dur.stddev)
        if task.duration_ub is not None:
            ub_exceed[ref] = 1.0 - dur.cdf(task.duration_ub)

        # several edges from one predecessor collapse to the largest wait:
        # max(X + w1, X + w2) is X + max(w1, w2), never an independent max
        pred_wait: dict[Ref, float] = {}
        for pred, wait in instance.precon_edges(ref):
            if wait > pred_wait.get(pred, -1.0):
                pred_wait[pred] = wait
        prev = pred_of.get(ref)
        if prev is not None:
            pred_wait.setdefault(prev, 0.0)
        inputs: list[GaussianDist] = []
        for pred, wait in pred_wait.items():
            f = finish[pred]
            inputs.append(GaussianDist(f.mean + wait, f.stddev) if wait else f)

        start = max_gaussian_ub(inputs) if inputs else GaussianDist(0.0, 0.0)
        start_mean[ref] = start.mean
        finish[ref] = sum_gaussian(start, dur)

    last = [finish[agent_order[-1]] for agent_order in schedule.agent_orders.values() if agent_order]
    makespan = max_gaussian_ub(last) if last else GaussianDist(0.0, 0.0)
    return PropagationResult(finish, start_mean, makespan, ub_exceed)


@dataclass(frozen=True)
class RiskAllocation:
    """Uniform split of the schedule risk budget across all deadlines."""

    epsilon: float
    deadlines: tuple[DeadlineSpec, ...]
    epsilon_d: Mapping[str, float]

    @property
    def share(self) -> float:
        return self.epsilon / len(self.deadlines) if self.deadlines else self.epsilon


def allocate_risk(instance: ProblemInstance) -> RiskAllocation:
    """epsilon_d = epsilon / n for each of the n deadlines (time budget
    included as one pseudo-deadline), so failures union-bound to epsilon."""
    deadlines = instance.deadlines()
    n = len(deadlines)
    eps_d = {d.key: instance.epsilon / n for d in deadlines} if n else {}
    return RiskAllocation(instance.epsilon, deadlines, eps_d)


@dataclass(frozen=True)
class DeadlineCheck:
    key: str
    kind: str
    bound: float
    epsilon_d: float
    satisfaction_prob: float
    margin: float
    passed: bool


@dataclass
class RobustnessReport:
    per_deadline: list[DeadlineCheck]
    makespan_ub: GaussianDist
    robust: bool
    duration_flags: list[tuple[Ref, float]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "robust": self.robust,
            "makespan_ub": self.makespan_ub.to_json_dict(),
            "per_deadline": [
                {
                    "key": c.key,
                    "kind": c.kind,
                    "bound": c.bound,
                    "epsilon_d": c.epsilon_d,
                    "satisfaction_prob": c.satisfaction_prob,
                    "margin": c.margin,
                    "passed": c.passed,
                }
                for c in self.per_deadline
            ],
            "duration_flags": [
                {"task": r[0], "n": r[1], "prob": p} for r, p in self.duration_flags
            ],
        }


def _one_sided(mean: float, std: float, bound: float, eps_d: float) -> tuple[float, float, bool]:
    """(satisfaction prob, margin, passed) for Pr(value <= bound) >= 1 - eps_d."""
    if std == 0.0:
        prob = 1.0 if mean <= bound else 0.0
        return prob, float(bound - mean), bool(mean <= bound)
    z = float(ndtri(1.0 - eps_d))
    margin = float(bound - (mean + z * std))
    prob = 0.5 * math.erfc(-((bound - mean) / std) / math.sqrt(2.0))
    return prob, margin, margin >= 0.0


def check_robustness(prop: PropagationResult, alloc: RiskAllocation) -> RobustnessReport:
    """Evaluate every deadline at its allocated risk level.

    robust is True iff every deadline check passes; duration upper-bound
    exceedances are reported as flags without affecting robustness.
    """
    checks: list[DeadlineCheck] = []
    for d in alloc.deadlines:
        eps_d = alloc.epsilon_d[d.key]
        if d.kind == ABS:
            f = prop.finish[d.target]
            prob, margin, ok = _one_sided(f.mean, f.stddev, d.bound, eps_d)
        elif d.kind == REL:
            f = prop.finish[d.target]
            span = f.mean - prop.start_mean[d.anchor]
            prob, margin, ok = _one_sided(span, f.stddev, d.bound, eps_d)
        elif d.kind == BUDGET:
            m = prop.makespan_ub
            prob, margin, ok = _one_sided(m.mean, m.stddev, d.bound, eps_d)
        else:  # pragma: no cover - deadline kinds are closed
            raise ValueError(f"unknown deadline kind {d.kind}")
        checks.append(DeadlineCheck(d.key, d.kind, d.bound, eps_d, prob, margin, ok))

    flags = [(r, p) for r, p in sorted(prop.ub_exceed.items()) if p > alloc.share]
    return RobustnessReport(
        per_deadline=checks,
        makespan_ub=prop.makespan_ub,
        robust=all(c.passed for c in checks),
        duration_flags=flags,
    )
