"""Benchmark harness: desk-scale experiments and simulated sessions.

Subcommands:
  speedup       wall time of the quadrature oracle vs. bound propagation
  conservatism  how far the bound's 95th-percentile makespan sits above
                Monte Carlo ground truth, in percent
  kalman        frozen population prior vs. adaptively updated model,
                total prediction error over 20 iterations
  session       closed-loop rounds: evolve, execute, update, repeat
  kernels       compiled vs. pure-python max-bound kernel on random cases

Each run emits a JSON report (and a CSV of per-trial records with --out).
All randomness flows from --seed; timing fields vary run to run.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import statistics
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import curves, kernels
from .evaluate import gaussian_quantile, propagate
from .generator import ConfigError, GenConfig, GroundTruth, generate, sample_execution
from .kernels import gauss_py
from .model import (
    CurveParams,
    DurationObservation,
    GaussianDist,
    HUMAN,
    ProblemInstance,
    Ref,
    Schedule,
)
from .oracles import make_grid, monte_carlo_oracle, quadrature_oracle
from .search import (
    SearchConfig,
    StrategyConfig,
    edf_seed,
    evolve,
    instance_reps,
    prior_states,
    strategy_lambda,
)


@dataclass
class ExperimentReport:
    name: str
    seed: int
    records: list[dict]
    summary: dict
    meta: dict

    def to_json_dict(self) -> dict:
        return {
            "experiment": self.name,
            "seed": self.seed,
            "records": self.records,
            "summary": self.summary,
            "meta": self.meta,
        }

    def write(self, out: Path) -> tuple[Path, Path]:
        json_path = out if out.suffix == ".json" else out.with_suffix(".json")
        csv_path = json_path.with_suffix(".csv")
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")
        fields: list[str] = []
        for rec in self.records:
            for k in rec:
                if k not in fields:
                    fields.append(k)
        with csv_path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(self.records)
        return json_path, csv_path


def _meta() -> dict:
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "kernel_backend": kernels.BACKEND,
    }


def _trial_seed(seed: int, *parts: int) -> int:
    mix = seed & 0xFFFFFFFF
    for p in parts:
        mix = (mix * 1000003 + p + 1) & 0xFFFFFFFF
    return mix


def _gt_durations(
    gt: GroundTruth,
    instance: ProblemInstance,
    schedule: Schedule,
) -> dict[Ref, GaussianDist]:
    """True duration distributions along the schedule's repetition streams."""
    lb = {t.task_id: t.duration_lb for t in instance.tasks}
    out: dict[Ref, GaussianDist] = {}
    for agent in sorted(schedule.agent_orders):
        seen: dict[str, int] = {}
        for ref in schedule.agent_orders[agent]:
            task_id = ref[0]
            k = seen.get(task_id, 0)
            mean = gt.duration_mean(agent, task_id, k + 1)
            out[ref] = GaussianDist(max(mean, lb[task_id]), gt.noise_std[(agent, task_id)])
            seen[task_id] = k + 1
    return out


# ---------------------------------------------------------------- speedup


def cmd_speedup(
    seed: int = 0,
    trials: int = 1,
    sizes: Sequence[int] = (25, 50, 75),
    resolution: float = 0.5,
    gen: GenConfig | None = None,
) -> ExperimentReport:
    """Times one bound propagation against one quadrature pass per instance.

    The grid holds bin width fixed (`resolution` seconds) so quadrature cost
    grows with the horizon while the bound path stays near-linear in tasks.
    """
    base = gen or GenConfig(n_agents=3, max_iterations=1, deadline_fraction=0.0)
    records = []
    for size in sizes:
        for trial in range(trials):
            cfg = replace(
                base, n_tasks=int(size), seed=_trial_seed(seed, size, trial)
            )
            instance, gt = generate(cfg)
            schedule = edf_seed(instance, prior_states(instance))
            durations = _gt_durations(gt, instance, schedule)

            t0 = time.perf_counter()
            propagate(instance, schedule, durations)
            bound_s = time.perf_counter() - t0

            grid = make_grid(instance, durations, resolution=resolution)
            t0 = time.perf_counter()
            quadrature_oracle(instance, schedule, durations, grid=grid)
            quad_s = time.perf_counter() - t0

            records.append(
                {
                    "size": int(size),
                    "trial": trial,
                    "bound_seconds": bound_s,
                    "quadrature_seconds": quad_s,
                    "ratio": quad_s / bound_s if bound_s > 0 else math.inf,
                    "grid_points": grid.points,
                }
            )
    summary: dict = {}
    ratios = []
    for size in sizes:
        rs = [r for r in records if r["size"] == size]
        med = statistics.median(r["ratio"] for r in rs)
        summary[f"size_{size}"] = {
            "median_bound_seconds": statistics.median(r["bound_seconds"] for r in rs),
            "median_quadrature_seconds": statistics.median(
                r["quadrature_seconds"] for r in rs
            ),
            "median_ratio": med,
        }
        ratios.append(med)
    summary["ratio_increasing"] = all(b > a for a, b in zip(ratios, ratios[1:]))
    return ExperimentReport("speedup", seed, records, summary, _meta())


# ----------------------------------------------------------- conservatism


def cmd_conservatism(
    seed: int = 0,
    trials: int = 20,
    quantile: float = 0.95,
    n_samples: int = 100_000,
    gen: GenConfig | None = None,
) -> ExperimentReport:
    """Percent added time of the bound's makespan quantile over Monte Carlo."""
    base = gen or GenConfig()
    records = []
    for trial in range(trials):
        cfg = replace(base, seed=_trial_seed(seed, trial))
        instance, gt = generate(cfg)
        schedule = edf_seed(instance, prior_states(instance))
        durations = _gt_durations(gt, instance, schedule)
        prop = propagate(instance, schedule, durations)
        q_bound = gaussian_quantile(prop.makespan_ub, quantile)
        mc = monte_carlo_oracle(
            instance,
            schedule,
            durations,
            n_samples=n_samples,
            seed=_trial_seed(seed, trial, 1),
            quantiles=(quantile,),
        )
        q_mc = mc.makespan_quantiles[quantile]
        pct = 100.0 * (q_bound - q_mc) / q_mc
        records.append(
            {
                "trial": trial,
                "bound_quantile": q_bound,
                "mc_quantile": q_mc,
                "conservatism_pct": pct,
            }
        )
    pcts = [r["conservatism_pct"] for r in records]
    summary = {
        "quantile": quantile,
        "median_pct": statistics.median(pcts),
        "mean_pct": statistics.fmean(pcts),
        "min_pct": min(pcts),
        "max_pct": max(pcts),
    }
    return ExperimentReport("conservatism", seed, records, summary, _meta())


# ----------------------------------------------------------------- kalman


def _curve_family(rng: np.random.Generator):
    c0 = max(rng.normal(60.0, 15.0), 5.0)
    k0 = max(rng.normal(30.0, 10.0), 1.0)
    b0 = rng.uniform(0.2, 0.7)

    def draw():
        return CurveParams(
            c=max(c0 + rng.normal(0.0, 5.0), curves.C_FLOOR),
            k=max(k0 + rng.normal(0.0, 3.0), 0.0),
            beta=float(np.clip(b0 + rng.normal(0.0, 0.08), 0.05, 2.0)),
        )

    return draw


def cmd_kalman(
    seed: int = 0,
    trials: int = 50,
    n_agents: int = 50,
    n_iterations: int = 20,
    noise_std: float = 3.0,
    bootstrap: int = 200,
) -> ExperimentReport:
    """Total one-step-ahead error: frozen population prior vs. updated model.

    Per trial a fresh population of workers is sampled around a shared curve
    family, the prior is fit from their noisy histories, and a held-out
    individual is tracked for n_iterations. Errors are against the true
    (noise-free) individual means.
    """
    records = []
    for trial in range(trials):
        rng = np.random.default_rng(_trial_seed(seed, trial))
        for attempt in range(5):
            draw = _curve_family(rng)
            samples = {}
            for w in range(n_agents):
                p = draw()
                samples[f"w{w}"] = [
                    (
                        i,
                        max(curves.curve_mean(p, i) + rng.normal(0.0, noise_std), 0.1),
                    )
                    for i in range(1, n_iterations + 1)
                ]
            try:
                prior = curves.fit_population_prior(
                    samples, bootstrap=bootstrap, seed=_trial_seed(seed, trial, attempt)
                )
                break
            except curves.DegenerateData:
                continue
        else:
            raise curves.DegenerateData(f"trial {trial}: population fit kept failing")

        individual = draw()
        truth = [curves.curve_mean(individual, i) for i in range(1, n_iterations + 1)]
        err_pop = 0.0
        err_adaptive = 0.0
        state = prior
        for i, m in enumerate(truth, start=1):
            err_pop += abs(curves.curve_mean(prior.x, i) - m)
            err_adaptive += abs(curves.curve_mean(state.x, i) - m)
            y = m + rng.normal(0.0, noise_std) if noise_std > 0 else m
            obs = DurationObservation(
                agent_id="subject",
                task_id="task",
                iteration_index=i,
                observed_duration=max(y, 0.1),
            )
            state = curves.kalman_update(state, obs)
        records.append(
            {
                "trial": trial,
                "population_error": err_pop,
                "adaptive_error": err_adaptive,
                "improvement": err_pop - err_adaptive,
                "improved": err_adaptive < err_pop,
            }
        )
    improved = [r["improved"] for r in records]
    summary = {
        "median_population_error": statistics.median(
            r["population_error"] for r in records
        ),
        "median_adaptive_error": statistics.median(
            r["adaptive_error"] for r in records
        ),
        "median_improvement": statistics.median(r["improvement"] for r in records),
        "improved_fraction": sum(improved) / len(improved),
    }
    return ExperimentReport("kalman", seed, records, summary, _meta())


# ---------------------------------------------------------------- session


def _truth_from_priors(instance: ProblemInstance) -> GroundTruth:
    # instance-only runs treat the embedded priors as the truth
    params = {}
    noise = {}
    for a in instance.agents:
        for t, s in a.curve_prior.items():
            params[(a.agent_id, t)] = s.x
            noise[(a.agent_id, t)] = s.residual_std
    return GroundTruth(params=params, noise_std=noise)


def _replay_makespan(
    instance: ProblemInstance, schedule: Schedule, observed: Mapping[Ref, float]
) -> float:
    exact = {r: GaussianDist(v, 0.0) for r, v in observed.items()}
    return propagate(instance, schedule, exact).makespan_ub.mean


def run_session(
    instance: ProblemInstance,
    gt: GroundTruth,
    strategy: StrategyConfig,
    search: SearchConfig,
    seed: int = 0,
) -> list[dict]:
    """One closed loop: evolve, execute, feed observations back, repeat.

    Human observations update the curve states in stream order; repetition
    counts carry across rounds so later rounds project further down the
    learning curve. The winning schedule seeds the next round's population.
    """
    states = dict(prior_states(instance))
    reps = dict(instance_reps(instance))
    human = {a.agent_id for a in instance.agents if a.kind == HUMAN}
    carried: Schedule | None = None
    rows = []
    for r in range(1, strategy.total_rounds + 1):
        lam = strategy_lambda(strategy, r)
        cfg = replace(search, lam=lam, seed=_trial_seed(search.seed, seed, r))
        result = evolve(
            instance,
            states,
            cfg,
            completed_reps=reps,
            initial_schedules=[carried] if carried is not None else None,
        )
        sched = result.best.schedule
        obj = result.best.objective
        observed = sample_execution(
            gt, instance, sched, seed=_trial_seed(seed, r, 7), completed_reps=reps
        )
        rows.append(
            {
                "round": r,
                "lambda": lam,
                "z": obj.z,
                "z1": obj.z1,
                "z2": obj.z2,
                "robust": result.best.report.robust,
                "observed_makespan": _replay_makespan(instance, sched, observed),
            }
        )
        for agent in sorted(sched.agent_orders):
            seen: dict[str, int] = {}
            for ref in sched.agent_orders[agent]:
                task_id = ref[0]
                k = seen.get(task_id, 0)
                i = reps[(agent, task_id)] + k + 1
                if agent in human:
                    obs = DurationObservation(
                        agent_id=agent,
                        task_id=task_id,
                        iteration_index=i,
                        observed_duration=observed[ref],
                    )
                    states[(agent, task_id)] = curves.kalman_update(
                        states[(agent, task_id)], obs
                    )
                seen[task_id] = k + 1
        for agent, order in sched.agent_orders.items():
            for ref in order:
                reps[(agent, ref[0])] += 1
        carried = sched
    return rows


def cmd_session(
    seed: int = 0,
    trials: int = 1,
    strategy: StrategyConfig | None = None,
    rounds: int = 5,
    instance_path: str | None = None,
    gen: GenConfig | None = None,
    search: SearchConfig | None = None,
) -> ExperimentReport:
    strat = strategy or StrategyConfig()
    if strat.total_rounds != rounds:
        strat = replace(strat, total_rounds=rounds)
    search_cfg = search or SearchConfig(
        population_size=24, time_limit=None, max_generations=6
    )
    records = []
    for trial in range(trials):
        if instance_path is not None:
            instance = ProblemInstance.load(instance_path)
            gt = _truth_from_priors(instance)
        else:
            cfg = replace(gen or GenConfig(), seed=_trial_seed(seed, trial))
            instance, gt = generate(cfg)
        for row in run_session(instance, gt, strat, search_cfg, seed=_trial_seed(seed, trial, 3)):
            records.append({"trial": trial, **row})
    by_round: dict[int, list[dict]] = {}
    for rec in records:
        by_round.setdefault(rec["round"], []).append(rec)
    summary = {
        "strategy": strat.kind,
        "rounds": rounds,
        "lambda_trace": [strategy_lambda(strat, r) for r in range(1, rounds + 1)],
        "mean_z2": statistics.fmean(r["z2"] for r in records),
        "per_round_mean_makespan": {
            str(r): statistics.fmean(x["observed_makespan"] for x in rs)
            for r, rs in sorted(by_round.items())
        },
    }
    return ExperimentReport("session", seed, records, summary, _meta())


# ---------------------------------------------------------------- kernels


def cmd_kernels(seed: int = 0, trials: int = 200) -> ExperimentReport:
    """Compiled vs. pure-python bound kernel on random input sets.

    Results must agree exactly (same arithmetic, same order); the report
    carries the worst observed deviation alongside the timing ratio.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(trials):
        n = int(rng.integers(2, 7))
        means = rng.uniform(0.0, 200.0, n)
        stds = rng.uniform(0.0, 25.0, n)
        stds[rng.random(n) < 0.15] = 0.0
        cases.append((means, stds))

    def run(fn):
        t0 = time.perf_counter()
        out = [fn(m, s) for m, s in cases]
        return time.perf_counter() - t0, out

    pure_s, pure_out = run(gauss_py.max_upper_bound)
    compiled_available = kernels.BACKEND == "compiled"
    if compiled_available:
        comp_s, comp_out = run(kernels.max_upper_bound)
    else:
        comp_s, comp_out = pure_s, pure_out
    max_dmu = max(abs(a[0] - b[0]) for a, b in zip(pure_out, comp_out))
    max_dsigma = max(abs(a[1] - b[1]) for a, b in zip(pure_out, comp_out))
    records = [
        {
            "case": i,
            "n_inputs": len(m),
            "mu": comp_out[i][0],
            "sigma": comp_out[i][1],
            "steps": comp_out[i][2],
        }
        for i, (m, _) in enumerate(cases)
    ]
    summary = {
        "compiled_available": compiled_available,
        "pure_seconds": pure_s,
        "compiled_seconds": comp_s,
        "speedup": pure_s / comp_s if comp_s > 0 else math.inf,
        "max_abs_dmu": max_dmu,
        "max_abs_dsigma": max_dsigma,
    }
    return ExperimentReport("kernels", seed, records, summary, _meta())


# -------------------------------------------------------------------- cli


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return raw


_ALLOWED_KEYS = {
    "speedup": {"sizes", "resolution", "gen"},
    "conservatism": {"quantile", "n_samples", "gen"},
    "kalman": {"n_agents", "n_iterations", "noise_std", "bootstrap"},
    "session": {"gen", "search", "strategy"},
    "kernels": set(),
}


def _run_command(args: argparse.Namespace) -> ExperimentReport:
    cfg = _load_config(args.config)
    extra = set(cfg) - _ALLOWED_KEYS[args.command]
    if extra:
        raise ConfigError(f"unknown config keys for {args.command}: {sorted(extra)}")
    gen = GenConfig.from_json_dict(cfg["gen"]) if "gen" in cfg else None
    if args.command == "speedup":
        return cmd_speedup(
            seed=args.seed,
            trials=args.trials,
            sizes=tuple(int(s) for s in cfg.get("sizes", (25, 50, 75))),
            resolution=float(cfg.get("resolution", 0.5)),
            gen=gen,
        )
    if args.command == "conservatism":
        return cmd_conservatism(
            seed=args.seed,
            trials=args.trials,
            quantile=float(cfg.get("quantile", 0.95)),
            n_samples=int(cfg.get("n_samples", 100_000)),
            gen=gen,
        )
    if args.command == "kalman":
        return cmd_kalman(
            seed=args.seed,
            trials=args.trials,
            n_agents=int(cfg.get("n_agents", 50)),
            n_iterations=int(cfg.get("n_iterations", 20)),
            noise_std=float(cfg.get("noise_std", 3.0)),
            bootstrap=int(cfg.get("bootstrap", 200)),
        )
    if args.command == "session":
        try:
            strategy = (
                StrategyConfig.from_json_dict(cfg["strategy"])
                if "strategy" in cfg
                else StrategyConfig(kind=args.strategy)
            )
            search = (
                SearchConfig.from_json_dict(cfg["search"]) if "search" in cfg else None
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cmd_session(
            seed=args.seed,
            trials=args.trials,
            strategy=strategy,
            rounds=args.rounds,
            instance_path=args.instance,
            gen=gen,
            search=search,
        )
    return cmd_kernels(seed=args.seed, trials=args.trials)


def _print_report(report: ExperimentReport) -> None:
    print(f"experiment: {report.name}  seed: {report.seed}  "
          f"records: {len(report.records)}  backend: {report.meta['kernel_backend']}")
    for k, v in report.summary.items():
        if isinstance(v, dict):
            print(f"  {k}:")
            for k2, v2 in v.items():
                print(f"    {k2}: {v2}")
        else:
            print(f"  {k}: {v}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bench", description="scheduling benchmark harness"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = {
        "speedup": 1,
        "conservatism": 20,
        "kalman": 50,
        "session": 1,
        "kernels": 200,
    }
    for name, default_trials in defaults.items():
        p = sub.add_parser(name)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=default_trials)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--config", type=str, default=None)
        if name == "session":
            p.add_argument(
                "--strategy",
                choices=["exploit", "explore_exploit", "annealed"],
                default="exploit",
            )
            p.add_argument("--rounds", type=int, default=5)
            p.add_argument("--instance", type=str, default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    try:
        report = _run_command(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_report(report)
    if args.out is not None:
        json_path, csv_path = report.write(args.out)
        print(f"wrote {json_path} and {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
