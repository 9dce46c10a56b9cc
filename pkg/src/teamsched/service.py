"""HTTP coordination service for round-based scheduling sessions.

One session = one instance run for strategy.total_rounds rounds. Each round
publishes a schedule; the operator submits observed durations for every
human-assigned iteration; the service updates the curve filters, advances
the round, and reoptimizes with that round's exploration weight.

Persistence is an append-only JSONL event log per session (created /
scheduled / observed / responded). State is a pure fold of the log:
scheduled events carry their schedule, rows, and robustness report verbatim
so a restart never re-runs the optimizer, and observation replay applies the
same deterministic filter updates. Observation submissions carry an
idempotency key; replaying a key returns the stored response without
touching state.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from fastapi import Body, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import curves, kernels
from .generator import ConfigError
from .model import (
    AgentSpec,
    DurationObservation,
    GaussianDist,
    HUMAN,
    KalmanState,
    ProblemInstance,
    Ref,
    Schedule,
    validate_instance,
)
from .evaluate import propagate
from .search import (
    InfeasiblePrecedence,
    SearchConfig,
    StrategyConfig,
    evolve,
    instance_reps,
    prior_states,
    strategy_lambda,
)

logger = logging.getLogger("teamsched.service")

_SID_RE = re.compile(r"^[0-9a-f]{12}$")


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8421
    data_dir: str = "./teamsched-data"
    prior_library: str | None = None
    static_dir: str | None = None
    search: SearchConfig = field(default_factory=SearchConfig)


_ENV_KEYS = {
    "TEAMSCHED_HOST": "host",
    "TEAMSCHED_PORT": "port",
    "TEAMSCHED_DATA_DIR": "data_dir",
    "TEAMSCHED_PRIOR_LIBRARY": "prior_library",
    "TEAMSCHED_STATIC_DIR": "static_dir",
}


def load_service_config(
    path: str | None = None, env: Mapping[str, str] | None = None
) -> ServiceConfig:
    """Config file first, then environment overrides."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read service config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("service config must hold a JSON object")
        unknown = set(raw) - {"host", "port", "data_dir", "prior_library", "static_dir", "search"}
        if unknown:
            raise ConfigError(f"unknown service config keys: {sorted(unknown)}")
        values.update(raw)
    for env_key, attr in _ENV_KEYS.items():
        if env_key in env:
            values[attr] = env[env_key]
    search = values.pop("search", None)
    try:
        cfg = ServiceConfig(**{k: v for k, v in values.items() if k != "port"})
        if "port" in values:
            cfg.port = int(values["port"])
        if search is not None:
            cfg.search = SearchConfig.from_json_dict(search)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_prior_library(path: str | None) -> dict[str, KalmanState]:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read prior library {path}: {exc}") from exc
    return {t: KalmanState.from_json_dict(d) for t, d in raw.items()}


# ------------------------------------------------------------ session state


@dataclass
class SessionState:
    session_id: str
    instance: ProblemInstance
    strategy: StrategyConfig
    search: SearchConfig
    states: dict[tuple[str, str], KalmanState]
    reps: dict[tuple[str, str], int]
    round_index: int = 0
    rounds_observed: int = 0
    complete: bool = False
    current: dict | None = None
    history: list[dict] = field(default_factory=list)
    observed_rounds: list[dict] = field(default_factory=list)
    obs_history: dict[tuple[str, str], list[dict]] = field(default_factory=dict)
    idempotency: dict[str, dict] = field(default_factory=dict)
    pending_key: str | None = None
    pending_response: bool = False

    @property
    def total_rounds(self) -> int:
        return self.strategy.total_rounds


def _ref_of(d: Mapping) -> Ref:
    return (str(d["task"]), int(d["n"]))


def _new_session_state(ev: Mapping) -> SessionState:
    instance = ProblemInstance.from_json_dict(ev["instance"])
    strategy = StrategyConfig.from_json_dict(ev["strategy"])
    search = SearchConfig.from_json_dict(ev["search"])
    return SessionState(
        session_id=ev["session_id"],
        instance=instance,
        strategy=strategy,
        search=search,
        states=dict(prior_states(instance)),
        reps=dict(instance_reps(instance)),
    )


def _robot_durations(state: SessionState, schedule: Schedule) -> dict[Ref, float]:
    human = {a.agent_id for a in state.instance.agents if a.kind == HUMAN}
    out: dict[Ref, float] = {}
    for agent in sorted(schedule.agent_orders):
        if agent in human:
            continue
        seen: dict[str, int] = {}
        for ref in schedule.agent_orders[agent]:
            task_id = ref[0]
            k = seen.get(task_id, 0)
            i = state.reps[(agent, task_id)] + k + 1
            out[ref] = curves.project_duration(state.states[(agent, task_id)], i).mean
            seen[task_id] = k + 1
    return out


def _apply_observed(state: SessionState, ev: Mapping) -> None:
    """Deterministic fold step for one observed event."""
    schedule = Schedule.from_json_dict(state.current["schedule"])
    observed = {_ref_of(o): float(o["duration"]) for o in ev["observations"]}
    exact = {r: GaussianDist(v, 0.0) for r, v in observed.items()}
    for r, v in _robot_durations(state, schedule).items():
        exact[r] = GaussianDist(v, 0.0)
    makespan = propagate(state.instance, schedule, exact).makespan_ub.mean

    ordered = sorted(
        ev["observations"],
        key=lambda o: (o["agent"], o["task"], int(o["iteration_index"])),
    )
    for o in ordered:
        key = (str(o["agent"]), str(o["task"]))
        obs = DurationObservation(
            agent_id=key[0],
            task_id=key[1],
            iteration_index=int(o["iteration_index"]),
            observed_duration=float(o["duration"]),
        )
        state.states[key] = curves.kalman_update(state.states[key], obs)
        state.obs_history.setdefault(key, []).append(
            {
                "round": int(ev["round"]),
                "n": int(o["n"]),
                "iteration_index": int(o["iteration_index"]),
                "duration": float(o["duration"]),
            }
        )
    for agent, order in schedule.agent_orders.items():
        for ref in order:
            state.reps[(agent, ref[0])] += 1
    state.observed_rounds.append(
        {
            "round": int(ev["round"]),
            "observed_makespan": makespan,
            "lambda": state.current["lambda"],
            "z1": state.current["objective"]["z1"],
            "robust": state.current["report"]["robust"],
        }
    )
    state.rounds_observed += 1
    state.pending_key = ev.get("idempotency_key")
    state.pending_response = True
    if state.rounds_observed >= state.total_rounds:
        state.complete = True


def fold_events(events: list[Mapping]) -> SessionState:
    state: SessionState | None = None
    for ev in events:
        kind = ev.get("type")
        if kind == "created":
            state = _new_session_state(ev)
        elif state is None:
            raise ValueError("event log does not start with a created event")
        elif kind == "scheduled":
            state.current = {
                "round": int(ev["round"]),
                "lambda": float(ev["lambda"]),
                "schedule": ev["schedule"],
                "rows": ev["rows"],
                "objective": ev["objective"],
                "report": ev["report"],
            }
            state.round_index = int(ev["round"])
            state.history.append(state.current)
        elif kind == "observed":
            _apply_observed(state, ev)
        elif kind == "responded":
            if ev.get("idempotency_key"):
                state.idempotency[ev["idempotency_key"]] = ev["response"]
            state.pending_key = None
            state.pending_response = False
    if state is None:
        raise ValueError("empty event log")
    return state


# ------------------------------------------------------------------- store


def _mix_seed(seed: int, *parts: int) -> int:
    mix = seed & 0xFFFFFFFF
    for p in parts:
        mix = (mix * 1000003 + p + 1) & 0xFFFFFFFF
    return mix


class SessionStore:
    """Event-logged sessions, one JSONL file each, single writer per session."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.dir = Path(config.data_dir) / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prior_library = load_prior_library(config.prior_library)
        self._sessions: dict[str, SessionState] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._registry = threading.Lock()

    def lock(self, session_id: str) -> threading.RLock:
        with self._registry:
            if session_id not in self._locks:
                self._locks[session_id] = threading.RLock()
            return self._locks[session_id]

    def _path(self, session_id: str) -> Path:
        return self.dir / f"{session_id}.jsonl"

    def append(self, session_id: str, event: dict) -> None:
        event = {**event, "ts": time.time()}
        with self._path(session_id).open("a") as fh:
            fh.write(json.dumps(event) + "\n")

    def get(self, session_id: str) -> SessionState | None:
        """Folded state, loading (and healing) from disk on first touch."""
        if not _SID_RE.match(session_id):
            return None
        with self.lock(session_id):
            if session_id in self._sessions:
                return self._sessions[session_id]
            path = self._path(session_id)
            if not path.exists():
                return None
            raw = path.read_text()
            events = []
            consumed = 0
            for line in raw.splitlines(keepends=True):
                stripped = line.strip()
                if stripped:
                    try:
                        events.append(json.loads(stripped))
                    except json.JSONDecodeError:
                        break  # torn tail write; everything before it is intact
                consumed += len(line)
            if consumed < len(raw):
                # drop the torn tail so healed appends land on an intact log
                path.write_text(raw[:consumed])
            state = fold_events(events)
            self._heal(state)
            self._sessions[session_id] = state
            return state

    def _heal(self, state: SessionState) -> None:
        # a crash can land between observed and the follow-up scheduled or
        # responded writes; finish the round here so replays stay exact
        if not state.complete and state.rounds_observed == state.round_index:
            payload = self.optimize(state, state.round_index + 1)
            self.append(state.session_id, {"type": "scheduled", **payload})
            state.current = payload
            state.round_index = payload["round"]
            state.history.append(payload)
        if state.pending_response:
            response = build_summary(state)
            self.append(
                state.session_id,
                {
                    "type": "responded",
                    "round": state.rounds_observed,
                    "idempotency_key": state.pending_key,
                    "response": response,
                },
            )
            if state.pending_key:
                state.idempotency[state.pending_key] = response
            state.pending_key = None
            state.pending_response = False

    def optimize(self, state: SessionState, round_index: int) -> dict:
        lam = strategy_lambda(state.strategy, round_index)
        cfg = replace(
            state.search, lam=lam, seed=_mix_seed(state.search.seed, round_index)
        )
        carried = None
        if state.current is not None:
            carried = [Schedule.from_json_dict(state.current["schedule"])]
        result = evolve(
            state.instance,
            state.states,
            cfg,
            completed_reps=state.reps,
            initial_schedules=carried,
        )
        best = result.best
        rows = []
        for agent in sorted(best.schedule.agent_orders):
            for ref in best.schedule.agent_orders[agent]:
                fin = best.propagation.finish[ref]
                rows.append(
                    {
                        "task": ref[0],
                        "n": ref[1],
                        "agent": agent,
                        "start_mean": best.propagation.start_mean[ref],
                        "finish_mean": fin.mean,
                        "finish_std": fin.stddev,
                    }
                )
        return {
            "round": round_index,
            "lambda": lam,
            "schedule": best.schedule.to_json_dict(),
            "rows": rows,
            "objective": best.objective.to_json_dict(),
            "report": best.report.to_json_dict(),
        }

    def create(
        self,
        instance: ProblemInstance,
        strategy: StrategyConfig,
        search: SearchConfig,
    ) -> SessionState:
        session_id = uuid.uuid4().hex[:12]
        state = SessionState(
            session_id=session_id,
            instance=instance,
            strategy=strategy,
            search=search,
            states=dict(prior_states(instance)),
            reps=dict(instance_reps(instance)),
        )
        with self.lock(session_id):
            self.append(
                session_id,
                {
                    "type": "created",
                    "session_id": session_id,
                    "instance": instance.to_json_dict(),
                    "strategy": strategy.to_json_dict(),
                    "search": search.to_json_dict(),
                    "total_rounds": strategy.total_rounds,
                },
            )
            payload = self.optimize(state, 1)
            self.append(session_id, {"type": "scheduled", **payload})
            state.current = payload
            state.round_index = 1
            state.history.append(payload)
            self._sessions[session_id] = state
        return state


# -------------------------------------------------------------- documents


def expected_observations(state: SessionState) -> dict[Ref, dict]:
    """Human-assigned iterations of the current schedule with the stream
    index each observation must carry."""
    schedule = Schedule.from_json_dict(state.current["schedule"])
    human = {a.agent_id for a in state.instance.agents if a.kind == HUMAN}
    out: dict[Ref, dict] = {}
    for agent in sorted(schedule.agent_orders):
        seen: dict[str, int] = {}
        for ref in schedule.agent_orders[agent]:
            task_id = ref[0]
            k = seen.get(task_id, 0)
            if agent in human:
                out[ref] = {
                    "task": ref[0],
                    "n": ref[1],
                    "agent": agent,
                    "iteration_index": state.reps[(agent, task_id)] + k + 1,
                }
            seen[task_id] = k + 1
    return out


def schedule_doc(state: SessionState) -> dict:
    cur = state.current
    return {
        "session_id": state.session_id,
        "round_index": state.round_index,
        "total_rounds": state.total_rounds,
        "complete": state.complete,
        "strategy": state.strategy.to_json_dict(),
        "rounds": list(state.observed_rounds),
        "lambda": cur["lambda"],
        "robust": cur["report"]["robust"],
        "schedule": cur["schedule"],
        "rows": cur["rows"],
        "objective": cur["objective"],
        "deadlines": cur["report"]["per_deadline"],
        "makespan_ub": cur["report"]["makespan_ub"],
        "expected_observations": (
            [] if state.complete else sorted(
                expected_observations(state).values(),
                key=lambda o: (o["agent"], o["task"], o["n"]),
            )
        ),
    }


def agents_doc(state: SessionState) -> dict:
    agents = []
    for a in sorted(state.instance.agents, key=lambda x: x.agent_id):
        tasks = []
        for task_id in sorted(state.instance.index.task_by_id):
            key = (a.agent_id, task_id)
            s = state.states[key]
            done = state.reps[key]
            proj = curves.project_duration(s, done + 1)
            tasks.append(
                {
                    "task_id": task_id,
                    "params": s.x.to_json_dict(),
                    "residual_std": s.residual_std,
                    "completed_repetitions": done,
                    "next_iteration": done + 1,
                    "projection": proj.to_json_dict(),
                    "observations": list(state.obs_history.get(key, [])),
                }
            )
        agents.append({"agent_id": a.agent_id, "kind": a.kind, "tasks": tasks})
    return {
        "session_id": state.session_id,
        "round_index": state.round_index,
        "complete": state.complete,
        "agents": agents,
    }


def build_summary(state: SessionState) -> dict:
    doc = schedule_doc(state)
    doc["agents"] = agents_doc(state)["agents"]
    return doc


# -------------------------------------------------------------------- app


def _error(status: int, payload: dict) -> JSONResponse:
    return JSONResponse(status_code=status, content=payload)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    cfg = config or load_service_config()
    store = SessionStore(cfg)
    app = FastAPI(title="team scheduling service", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        t0 = time.perf_counter()
        response = await call_next(request)
        logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "ms": round(1000.0 * (time.perf_counter() - t0), 2),
                }
            )
        )
        return response

    @app.get("/health")
    def health():
        return {"status": "ok", "kernel_backend": kernels.BACKEND}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)):
        if "instance" not in body:
            return _error(400, {"error": "missing instance"})
        try:
            strategy = StrategyConfig.from_json_dict(body.get("strategy", {}))
            search = (
                SearchConfig.from_json_dict(body["search"])
                if "search" in body
                else store.config.search
            )
        except (ValueError, TypeError, KeyError) as exc:
            return _error(400, {"error": f"bad config: {exc}"})
        try:
            instance = ProblemInstance.from_json_dict(body["instance"])
        except (ValueError, TypeError, KeyError) as exc:
            return _error(400, {"error": f"malformed instance: {exc}"})
        if store.prior_library:
            instance = _fill_priors(instance, store.prior_library)
        result = validate_instance(instance)
        if not result.ok:
            return _error(
                400,
                {
                    "error": "invalid instance",
                    "violations": [
                        {"code": v.code, "message": v.message} for v in result.violations
                    ],
                },
            )
        try:
            state = store.create(instance, strategy, search)
        except (InfeasiblePrecedence, KeyError) as exc:
            return _error(422, {"error": f"no schedule could be constructed: {exc}"})
        return build_summary(state)

    @app.get("/sessions/{session_id}/schedule")
    def get_schedule(session_id: str):
        state = store.get(session_id)
        if state is None:
            return _error(404, {"error": "unknown session"})
        with store.lock(session_id):
            return schedule_doc(state)

    @app.get("/sessions/{session_id}/agents")
    def get_agents(session_id: str):
        state = store.get(session_id)
        if state is None:
            return _error(404, {"error": "unknown session"})
        with store.lock(session_id):
            return agents_doc(state)

    @app.post("/sessions/{session_id}/observations")
    def post_observations(
        session_id: str,
        body: dict = Body(...),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        state = store.get(session_id)
        if state is None:
            return _error(404, {"error": "unknown session"})
        key = idempotency_key or body.get("idempotency_key")
        with store.lock(session_id):
            if key and key in state.idempotency:
                return state.idempotency[key]
            if state.complete:
                return _error(410, {"error": "session already completed all rounds"})
            round_submitted = body.get("round")
            if round_submitted is not None and int(round_submitted) != state.round_index:
                return _error(
                    410 if int(round_submitted) < state.round_index else 409,
                    {
                        "error": "round mismatch",
                        "expected_round": state.round_index,
                    },
                )
            raw = body.get("observations")
            if not isinstance(raw, list):
                return _error(409, {"error": "observations must be a list"})
            expected = expected_observations(state)
            seen: dict[Ref, dict] = {}
            problems: list[str] = []
            for o in raw:
                try:
                    ref = _ref_of(o)
                    duration = float(o["duration"])
                    agent = str(o.get("agent", ""))
                except (KeyError, TypeError, ValueError):
                    problems.append(f"malformed observation {o!r}")
                    continue
                if ref in seen:
                    problems.append(f"duplicate observation for {ref[0]}#{ref[1]}")
                elif ref not in expected:
                    problems.append(f"unexpected iteration {ref[0]}#{ref[1]}")
                elif agent and agent != expected[ref]["agent"]:
                    problems.append(
                        f"{ref[0]}#{ref[1]} is assigned to {expected[ref]['agent']}"
                    )
                elif not duration > 0:
                    problems.append(f"duration for {ref[0]}#{ref[1]} must be > 0")
                else:
                    seen[ref] = {**expected[ref], "duration": duration}
            missing = sorted(set(expected) - set(seen))
            if problems or missing:
                return _error(
                    409,
                    {
                        "error": "observations mismatch the expected set",
                        "missing": [{"task": t, "n": n} for t, n in missing],
                        "problems": problems,
                        "expected_round": state.round_index,
                    },
                )
            observed_event = {
                "type": "observed",
                "round": state.round_index,
                "idempotency_key": key,
                "observations": sorted(
                    seen.values(), key=lambda o: (o["agent"], o["task"], o["n"])
                ),
            }
            store.append(session_id, observed_event)
            _apply_observed(state, observed_event)
            if not state.complete:
                payload = store.optimize(state, state.round_index + 1)
                store.append(session_id, {"type": "scheduled", **payload})
                state.current = payload
                state.round_index = payload["round"]
                state.history.append(payload)
            response = build_summary(state)
            store.append(
                session_id,
                {
                    "type": "responded",
                    "round": state.rounds_observed,
                    "idempotency_key": key,
                    "response": response,
                },
            )
            if key:
                state.idempotency[key] = response
            state.pending_key = None
            state.pending_response = False
            return response

    if cfg.static_dir and Path(cfg.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=cfg.static_dir, html=True), name="console")
    return app


def _fill_priors(
    instance: ProblemInstance, library: Mapping[str, KalmanState]
) -> ProblemInstance:
    """Give human agents the library prior for any task they lack one for."""
    changed = False
    agents = []
    task_ids = [t.task_id for t in instance.tasks]
    for a in instance.agents:
        if a.kind != HUMAN:
            agents.append(a)
            continue
        prior = dict(a.curve_prior)
        for t in task_ids:
            if t not in prior and t in library:
                prior[t] = library[t]
                changed = True
        agents.append(
            AgentSpec(
                agent_id=a.agent_id,
                kind=a.kind,
                curve_prior=prior,
                completed_reps=dict(a.completed_reps),
            )
        )
    if not changed:
        return instance
    return ProblemInstance(
        tasks=instance.tasks,
        agents=tuple(agents),
        epsilon=instance.epsilon,
        time_budget=instance.time_budget,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="teamsched-service")
    parser.add_argument("--config", type=str, default=None)
    parser.add_argument("--host", type=str, default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--data-dir", type=str, default=None)
    parser.add_argument("--prior-library", type=str, default=None)
    parser.add_argument("--static-dir", type=str, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_service_config(args.config)
        if args.host is not None:
            cfg.host = args.host
        if args.port is not None:
            cfg.port = args.port
        if args.data_dir is not None:
            cfg.data_dir = args.data_dir
        if args.prior_library is not None:
            cfg.prior_library = args.prior_library
        if args.static_dir is not None:
            cfg.static_dir = args.static_dir
        app = create_app(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    import uvicorn

    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
