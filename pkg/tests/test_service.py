import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from teamsched.generator import ConfigError, GenConfig, generate
from teamsched.model import (
    HUMAN,
    ROBOT,
    AgentSpec,
    CurveParams,
    KalmanState,
    ProblemInstance,
    TaskSpec,
)
from teamsched.service import (
    ServiceConfig,
    create_app,
    load_prior_library,
    load_service_config,
)

from conftest import flat_prior

FAST_SEARCH = {"population_size": 6, "time_limit": None, "max_generations": 1, "seed": 0}


def service(tmp_path, **cfg_kwargs):
    cfg = ServiceConfig(data_dir=str(tmp_path / "data"), **cfg_kwargs)
    return create_app(cfg), cfg


def instance_dict(seed=0):
    inst, _ = generate(
        GenConfig(n_tasks=2, n_agents=2, max_iterations=2, deadline_fraction=0.0, seed=seed)
    )
    return inst.to_json_dict()


def create_body(seed=0, rounds=2):
    return {
        "instance": instance_dict(seed),
        "strategy": {"kind": "exploit", "total_rounds": rounds},
        "search": dict(FAST_SEARCH),
    }


def observations_for(doc, duration=25.0):
    return {
        "round": doc["round_index"],
        "observations": [
            {**o, "duration": duration} for o in doc["expected_observations"]
        ],
    }


def play_round(client, sid, duration=25.0, key=None):
    doc = client.get(f"/sessions/{sid}/schedule").json()
    headers = {"Idempotency-Key": key} if key else {}
    return client.post(
        f"/sessions/{sid}/observations",
        json=observations_for(doc, duration),
        headers=headers,
    )


def test_health_reports_backend(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["kernel_backend"] in ("python", "compiled")


def test_create_session_full_summary(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        r = client.post("/sessions", json=create_body())
    assert r.status_code == 201
    doc = r.json()
    assert len(doc["session_id"]) == 12
    assert doc["round_index"] == 1
    assert doc["total_rounds"] == 2
    assert doc["complete"] is False
    assert doc["rounds"] == []
    assert doc["expected_observations"]
    assert {"z", "z1", "z2"} <= set(doc["objective"])
    assert doc["strategy"]["kind"] == "exploit"
    assert all({"task", "n", "agent", "start_mean"} <= set(row) for row in doc["rows"])
    assert {a["agent_id"] for a in doc["agents"]} == {"a01", "a02"}


def test_create_session_rejects_missing_instance(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        r = client.post("/sessions", json={})
    assert r.status_code == 400
    assert "instance" in r.json()["error"]


def test_create_session_rejects_bad_strategy(tmp_path):
    app, _ = service(tmp_path)
    body = create_body()
    body["strategy"] = {"kind": "greedy"}
    with TestClient(app) as client:
        r = client.post("/sessions", json=body)
    assert r.status_code == 400
    assert "bad config" in r.json()["error"]


def test_create_session_rejects_malformed_instance(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        r = client.post("/sessions", json={"instance": {"tasks": 3}})
    assert r.status_code == 400
    assert "malformed" in r.json()["error"]


def test_create_session_reports_validation_codes(tmp_path):
    app, _ = service(tmp_path)
    body = create_body()
    del body["instance"]["agents"][0]["curve_prior"]["t01"]
    with TestClient(app) as client:
        r = client.post("/sessions", json=body)
    assert r.status_code == 400
    codes = {v["code"] for v in r.json()["violations"]}
    assert "missing-prior" in codes


def test_unknown_and_malformed_session_ids(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        assert client.get("/sessions/deadbeefdead/schedule").status_code == 404
        assert client.get("/sessions/deadbeefdead/agents").status_code == 404
        assert (
            client.post(
                "/sessions/deadbeefdead/observations", json={"observations": []}
            ).status_code
            == 404
        )
        assert client.get("/sessions/not-a-session/schedule").status_code == 404


def test_two_round_session_runs_to_completion(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]

        r1 = play_round(client, sid, duration=30.0)
        assert r1.status_code == 200
        doc1 = r1.json()
        assert doc1["round_index"] == 2
        assert doc1["complete"] is False
        assert len(doc1["rounds"]) == 1
        assert doc1["rounds"][0]["observed_makespan"] > 0

        r2 = play_round(client, sid, duration=28.0)
        doc2 = r2.json()
        assert doc2["complete"] is True
        assert doc2["expected_observations"] == []
        assert len(doc2["rounds"]) == 2

        r3 = play_round(client, sid, duration=28.0)
        assert r3.status_code == 410


def test_schedule_doc_alone_reconstructs_session_view(tmp_path):
    # a refreshed client must get strategy and round history from GET
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        play_round(client, sid, duration=30.0)
        doc = client.get(f"/sessions/{sid}/schedule").json()
    assert doc["strategy"]["kind"] == "exploit"
    assert len(doc["rounds"]) == 1
    assert doc["rounds"][0]["round"] == 1
    assert doc["rounds"][0]["observed_makespan"] > 0
    assert "agents" not in doc


def test_observation_updates_agent_projections(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        before = client.get(f"/sessions/{sid}/agents").json()
        play_round(client, sid, duration=200.0)
        after = client.get(f"/sessions/{sid}/agents").json()
    assert before["round_index"] == 1 and after["round_index"] == 2
    observed = [
        t
        for a in after["agents"]
        for t in a["tasks"]
        if t["observations"]
    ]
    assert observed
    for t in observed:
        assert t["completed_repetitions"] >= 1
        assert t["next_iteration"] == t["completed_repetitions"] + 1


def test_observations_validation_codes(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        doc = client.get(f"/sessions/{sid}/schedule").json()
        good = observations_for(doc)
        url = f"/sessions/{sid}/observations"

        r = client.post(url, json={"round": 1, "observations": "nope"})
        assert r.status_code == 409

        short = {"round": 1, "observations": good["observations"][:-1]}
        r = client.post(url, json=short)
        assert r.status_code == 409
        missing = r.json()["missing"]
        want = good["observations"][-1]
        assert {"task": want["task"], "n": want["n"]} in missing

        dup = {"round": 1, "observations": good["observations"] + good["observations"][:1]}
        r = client.post(url, json=dup)
        assert r.status_code == 409
        assert any("duplicate" in p for p in r.json()["problems"])

        extra = json.loads(json.dumps(good))
        extra["observations"].append({"task": "t01", "n": 99, "duration": 5.0})
        r = client.post(url, json=extra)
        assert r.status_code == 409
        assert any("unexpected" in p for p in r.json()["problems"])

        wrong_agent = json.loads(json.dumps(good))
        wrong_agent["observations"][0]["agent"] = "nobody"
        r = client.post(url, json=wrong_agent)
        assert r.status_code == 409
        assert any("assigned" in p for p in r.json()["problems"])

        negative = json.loads(json.dumps(good))
        negative["observations"][0]["duration"] = 0.0
        r = client.post(url, json=negative)
        assert r.status_code == 409
        assert any("must be > 0" in p for p in r.json()["problems"])

        r = client.post(url, json={"round": 7, "observations": good["observations"]})
        assert r.status_code == 409
        assert r.json()["expected_round"] == 1

        # a valid submission, then a stale replay of round 1 without a key
        assert client.post(url, json=good).status_code == 200
        r = client.post(url, json=good)
        assert r.status_code == 410


def test_idempotent_replay_returns_stored_response(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        first = play_round(client, sid, duration=30.0, key="round-1-key")
        again = play_round(client, sid, duration=30.0, key="round-1-key")
        assert first.status_code == again.status_code == 200
        assert first.json() == again.json()
        # the replay did not advance the session a second time
        doc = client.get(f"/sessions/{sid}/schedule").json()
        assert doc["round_index"] == 2
        agents_now = client.get(f"/sessions/{sid}/agents").json()["agents"]
        total_now = sum(len(t["observations"]) for a in agents_now for t in a["tasks"])
        total_first = sum(
            len(t["observations"]) for a in first.json()["agents"] for t in a["tasks"]
        )
        assert total_now == total_first


def test_idempotency_key_in_body_works(tmp_path):
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        doc = client.get(f"/sessions/{sid}/schedule").json()
        body = {**observations_for(doc), "idempotency_key": "in-body"}
        first = client.post(f"/sessions/{sid}/observations", json=body)
        again = client.post(f"/sessions/{sid}/observations", json=body)
        assert first.json() == again.json()


def test_restart_folds_to_identical_documents(tmp_path):
    app, cfg = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        play_round(client, sid, duration=30.0)
        sched_before = client.get(f"/sessions/{sid}/schedule").json()
        agents_before = client.get(f"/sessions/{sid}/agents").json()

    with TestClient(create_app(cfg)) as client:
        assert client.get(f"/sessions/{sid}/schedule").json() == sched_before
        assert client.get(f"/sessions/{sid}/agents").json() == agents_before


def test_restart_heals_log_cut_after_observed(tmp_path):
    app, cfg = service(tmp_path)
    with TestClient(app) as client:
        sid = client.post("/sessions", json=create_body()).json()["session_id"]
        first = play_round(client, sid, duration=30.0, key="kept-key")
        sched_before = client.get(f"/sessions/{sid}/schedule").json()

    log = tmp_path / "data" / "sessions" / f"{sid}.jsonl"
    lines = log.read_text().splitlines()
    kinds = [json.loads(x)["type"] for x in lines]
    assert kinds == ["created", "scheduled", "observed", "scheduled", "responded"]
    # crash between the observed append and the follow-up writes, plus a torn
    # half-line from the interrupted scheduled write
    log.write_text("\n".join(lines[:3]) + '\n{"type": "schedu\n')

    with TestClient(create_app(cfg)) as client:
        healed = client.get(f"/sessions/{sid}/schedule").json()
        assert healed == sched_before
        replay = play_round(client, sid, duration=30.0, key="kept-key")
        assert replay.json() == first.json()

    kinds = [json.loads(x)["type"] for x in log.read_text().splitlines()]
    assert kinds == ["created", "scheduled", "observed", "scheduled", "responded"]


def test_robot_iterations_are_not_observed(tmp_path):
    robot_state = KalmanState(
        x=CurveParams(c=18.0, k=0.0, beta=0.5),
        P=np.zeros((3, 3)),
        Q=np.zeros((3, 3)),
        R=0.0,
    )
    tasks = tuple(TaskSpec(task_id=t, iterations=1) for t in ("t1", "t2"))
    agents = (
        AgentSpec(agent_id="h1", kind=HUMAN, curve_prior=flat_prior(["t1", "t2"])),
        AgentSpec(
            agent_id="r1",
            kind=ROBOT,
            curve_prior={"t1": robot_state, "t2": robot_state},
        ),
    )
    inst = ProblemInstance(tasks=tasks, agents=agents, epsilon=0.05)
    app, _ = service(tmp_path)
    with TestClient(app) as client:
        r = client.post(
            "/sessions",
            json={
                "instance": inst.to_json_dict(),
                "strategy": {"kind": "exploit", "total_rounds": 1},
                "search": dict(FAST_SEARCH),
            },
        )
        assert r.status_code == 201
        doc = r.json()
        assert all(o["agent"] == "h1" for o in doc["expected_observations"])
        sid = doc["session_id"]
        final = play_round(client, sid, duration=22.0)
        assert final.status_code == 200
        assert final.json()["complete"] is True


def test_static_dir_serves_console(tmp_path):
    static = tmp_path / "static"
    static.mkdir()
    (static / "index.html").write_text("<html>console</html>")
    app, _ = service(tmp_path, static_dir=str(static))
    with TestClient(app) as client:
        assert client.get("/health").status_code == 200
        page = client.get("/")
        assert page.status_code == 200
        assert "console" in page.text


def test_load_service_config_env_overrides_file(tmp_path):
    path = tmp_path / "svc.json"
    path.write_text(
        json.dumps({"port": 9000, "data_dir": "from-file", "search": FAST_SEARCH})
    )
    cfg = load_service_config(str(path), env={"TEAMSCHED_PORT": "9100"})
    assert cfg.port == 9100
    assert cfg.data_dir == "from-file"
    assert cfg.search.population_size == 6


def test_load_service_config_rejects_bad_input(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ConfigError):
        load_service_config(str(missing), env={})
    bad = tmp_path / "bad.json"
    bad.write_text("[]")
    with pytest.raises(ConfigError):
        load_service_config(str(bad), env={})
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"prot": 1}))
    with pytest.raises(ConfigError):
        load_service_config(str(unknown), env={})
    with pytest.raises(ConfigError):
        load_service_config(None, env={"TEAMSCHED_PORT": "abc"})


def test_prior_library_loading_and_fill(tmp_path):
    assert load_prior_library(None) == {}
    body = create_body()
    # strip one prior so the bare instance fails validation
    state_json = body["instance"]["agents"][0]["curve_prior"].pop("t01")
    lib_path = tmp_path / "lib.json"
    lib_path.write_text(json.dumps({"t01": state_json}))
    lib = load_prior_library(str(lib_path))
    assert set(lib) == {"t01"}

    app, _ = service(tmp_path, prior_library=str(lib_path))
    with TestClient(app) as client:
        r = client.post("/sessions", json=body)
    assert r.status_code == 201

    broken = tmp_path / "broken.json"
    broken.write_text("{nope")
    with pytest.raises(ConfigError):
        load_prior_library(str(broken))
