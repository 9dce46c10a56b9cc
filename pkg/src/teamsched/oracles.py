"""Independent evaluators used to check the Gaussian bound.

quadrature_oracle replays the same max-then-add recursion numerically on a
shared uniform grid (density of a max via f_max = sum_i f_i prod_{j!=i} F_j,
sums via discrete convolution), treating node inputs as independent exactly
like the bound does. monte_carlo_oracle instead replays realizations, so
shared ancestors stay correlated; it is the ground truth for calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import (
    ABS,
    BUDGET,
    REL,
    GaussianDist,
    ProblemInstance,
    Ref,
    Schedule,
    combined_topo_order,
)

MASS_TOL = 1e-6
MAX_GRID_POINTS = 10_000_000


class GridOverflow(Exception):
    """Probability mass escaped the grid, or the range cannot be afforded
    at the requested resolution."""


@dataclass(frozen=True)
class Grid:
    xs: np.ndarray
    dx: float

    @property
    def points(self) -> int:
        return len(self.xs)


def make_grid(
    instance: ProblemInstance,
    durations: Mapping[Ref, GaussianDist],
    *,
    points: int | None = 2048,
    resolution: float | None = None,
) -> Grid:
    """Uniform grid from 0 to the sum of duration means + 6 sigma plus waits.

    Pass `resolution` (seconds per bin) instead of `points` to hold bin width
    constant across instance sizes.
    """
    hi = 0.0
    for d in durations.values():
        hi += d.mean + 6.0 * d.stddev
    for r in instance.refs():
        for _, wait in instance.precon_edges(r):
            hi += wait
    hi = max(hi, 1.0)
    if resolution is not None:
        n = max(64, int(math.ceil(hi / resolution)))
    else:
        n = int(points or 2048)
    if n > MAX_GRID_POINTS:
        raise GridOverflow(f"range {hi:g} needs {n} points at this resolution")
    xs = np.linspace(0.0, hi, n)
    return Grid(xs, float(xs[1] - xs[0]))


def _density(dist: GaussianDist, grid: Grid) -> np.ndarray:
    if dist.stddev == 0.0:
        f = np.zeros(grid.points)
        idx = int(round(dist.mean / grid.dx))
        if not 0 <= idx < grid.points:
            raise GridOverflow("point mass outside grid")
        f[idx] = 1.0 / grid.dx
        return f
    z = (grid.xs - dist.mean) / dist.stddev
    f = np.exp(-0.5 * z * z) / (dist.stddev * math.sqrt(2.0 * math.pi))
    return f


def _cdf(f: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(f)
    out[0] = 0.0
    np.cumsum((f[1:] + f[:-1]) * (0.5 * dx), out=out[1:])
    return out


def _shift(f: np.ndarray, wait: float, grid: Grid) -> np.ndarray:
    k = int(round(wait / grid.dx))
    if k == 0:
        return f
    if k >= grid.points:
        raise GridOverflow("wait shift pushed mass off the grid")
    escaped = float(f[grid.points - k :].sum()) * grid.dx
    if escaped > MASS_TOL:
        raise GridOverflow("wait shift pushed mass off the grid")
    out = np.zeros_like(f)
    out[k:] = f[: grid.points - k]
    return out


def _max_density(fs: list[np.ndarray], dx: float) -> np.ndarray:
    if len(fs) == 1:
        return fs[0]
    Fs = [_cdf(f, dx) for f in fs]
    out = np.zeros_like(fs[0])
    for i, fi in enumerate(fs):
        term = fi.copy()
        for j, Fj in enumerate(Fs):
            if j != i:
                term *= Fj
        out += term
    return out


def _convolve(f: np.ndarray, g: np.ndarray, grid: Grid) -> np.ndarray:
    full = np.convolve(f, g) * grid.dx
    escaped = float(full[grid.points :].sum()) * grid.dx
    if escaped > MASS_TOL:
        raise GridOverflow("convolution mass escaped the grid")
    return full[: grid.points]


@dataclass
class QuadratureResult:
    grid: Grid
    finish_density: dict[Ref, np.ndarray]
    makespan_density: np.ndarray

    def finish_cdf(self, ref: Ref) -> np.ndarray:
        return _cdf(self.finish_density[ref], self.grid.dx)

    def makespan_cdf(self) -> np.ndarray:
        return _cdf(self.makespan_density, self.grid.dx)


def density_moments(f: np.ndarray, grid: Grid) -> tuple[float, float]:
    mass = float(np.trapezoid(f, grid.xs))
    mean = float(np.trapezoid(f * grid.xs, grid.xs)) / mass
    var = float(np.trapezoid(f * (grid.xs - mean) ** 2, grid.xs)) / mass
    return mean, math.sqrt(max(var, 0.0))


def quadrature_oracle(
    instance: ProblemInstance,
    schedule: Schedule,
    durations: Mapping[Ref, GaussianDist],
    grid: Grid | None = None,
) -> QuadratureResult:
    """Numerical finish densities for every iteration plus the makespan."""
    if grid is None:
        grid = make_grid(instance, durations)
    order = combined_topo_order(instance, schedule)
    pred_of: dict[Ref, Ref | None] = {}
    for agent_order in schedule.agent_orders.values():
        prev: Ref | None = None
        for r in agent_order:
            pred_of[r] = prev
            prev = r

    dur_density = {r: _density(durations[r], grid) for r in order}
    dur_is_delta = {r: durations[r].stddev == 0.0 for r in order}
    finish: dict[Ref, np.ndarray] = {}

    for ref in order:
        task = instance.task(ref[0])
        # one predecessor reached through several edges is still one input
        pred_wait: dict[Ref, float] = {}
        for pred, wait in instance.precon_edges(ref):
            if wait > pred_wait.get(pred, -1.0):
                pred_wait[pred] = wait
        prev = pred_of.get(ref)
        if prev is not None:
            pred_wait.setdefault(prev, 0.0)
        inputs = [_shift(finish[p], w, grid) for p, w in pred_wait.items()]

        dmean = durations[ref].mean
        if task.duration_lb is not None and dmean < task.duration_lb:
            d = GaussianDist(task.duration_lb, durations[ref].stddev)
            fdur = _density(d, grid)
            is_delta = d.stddev == 0.0
            delta_mean = d.mean
        else:
            fdur = dur_density[ref]
            is_delta = dur_is_delta[ref]
            delta_mean = dmean

        if not inputs:
            finish[ref] = fdur
            continue
        fstart = _max_density(inputs, grid.dx)
        if is_delta:
            finish[ref] = _shift(fstart, delta_mean, grid)
        else:
            finish[ref] = _convolve(fstart, fdur, grid)

    last = [finish[o[-1]] for o in schedule.agent_orders.values() if o]
    if last:
        makespan = _max_density(last, grid.dx)
    else:
        makespan = _density(GaussianDist(0.0, 0.0), grid)
    return QuadratureResult(grid, finish, makespan)


@dataclass
class MonteCarloResult:
    makespan_quantiles: dict[float, float]
    makespan_mean: float
    makespan_std: float
    deadline_success: dict[str, float]
    all_success: float
    n_samples: int


def monte_carlo_oracle(
    instance: ProblemInstance,
    schedule: Schedule,
    durations: Mapping[Ref, GaussianDist],
    *,
    n_samples: int = 100_000,
    seed: int = 0,
    quantiles: tuple[float, ...] = (0.5, 0.9, 0.95),
) -> MonteCarloResult:
    """Replay the schedule on sampled durations (truncated at 0, floored at
    any task duration_lb) and report empirical makespan and deadline stats."""
    rng = np.random.default_rng(seed)
    order = combined_topo_order(instance, schedule)
    pred_of: dict[Ref, Ref | None] = {}
    for agent_order in schedule.agent_orders.values():
        prev: Ref | None = None
        for r in agent_order:
            pred_of[r] = prev
            prev = r

    samples: dict[Ref, np.ndarray] = {}
    for ref in sorted(order):
        d = durations[ref]
        if d.stddev == 0.0:
            s = np.full(n_samples, d.mean)
        else:
            s = rng.normal(d.mean, d.stddev, size=n_samples)
            np.maximum(s, 0.0, out=s)
        lb = instance.task(ref[0]).duration_lb
        if lb is not None:
            np.maximum(s, lb, out=s)
        samples[ref] = s

    start: dict[Ref, np.ndarray] = {}
    finish: dict[Ref, np.ndarray] = {}
    zeros = np.zeros(n_samples)
    for ref in order:
        acc: np.ndarray | None = None
        for pred, wait in instance.precon_edges(ref):
            cand = finish[pred] + wait if wait else finish[pred]
            acc = cand.copy() if acc is None else np.maximum(acc, cand)
        prev = pred_of.get(ref)
        if prev is not None:
            acc = finish[prev].copy() if acc is None else np.maximum(acc, finish[prev])
        s = zeros if acc is None else acc
        start[ref] = s
        finish[ref] = s + samples[ref]

    last = [finish[o[-1]] for o in schedule.agent_orders.values() if o]
    makespan = np.maximum.reduce(last) if last else zeros

    success = np.ones(n_samples, dtype=bool)
    per_deadline: dict[str, float] = {}
    for d in instance.deadlines():
        if d.kind == ABS:
            met = finish[d.target] <= d.bound
        elif d.kind == REL:
            met = (finish[d.target] - start[d.anchor]) <= d.bound
        elif d.kind == BUDGET:
            met = makespan <= d.bound
        else:  # pragma: no cover
            raise ValueError(f"unknown deadline kind {d.kind}")
        per_deadline[d.key] = float(met.mean())
        success &= met

    qs = {q: float(np.quantile(makespan, q)) for q in quantiles}
    return MonteCarloResult(
        makespan_quantiles=qs,
        makespan_mean=float(makespan.mean()),
        makespan_std=float(makespan.std()),
        deadline_success=per_deadline,
        all_success=float(success.mean()),
        n_samples=n_samples,
    )
