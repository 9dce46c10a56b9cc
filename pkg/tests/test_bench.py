import csv
import json

from teamsched.bench import (
    ExperimentReport,
    _trial_seed,
    cmd_conservatism,
    cmd_kalman,
    cmd_kernels,
    cmd_session,
    cmd_speedup,
    main,
)
from teamsched.generator import GenConfig, generate
from teamsched.search import ANNEALED, SearchConfig, StrategyConfig


def small_gen(**kwargs):
    base = dict(n_tasks=3, n_agents=2, max_iterations=2, deadline_fraction=0.0)
    base.update(kwargs)
    return GenConfig(**base)


def test_trial_seed_deterministic_and_distinct():
    assert _trial_seed(7, 1, 2) == _trial_seed(7, 1, 2)
    assert _trial_seed(7, 1, 2) != _trial_seed(7, 2, 1)
    assert 0 <= _trial_seed(123456789, 99) < 2**32


def test_report_write_creates_json_and_csv(tmp_path):
    rep = ExperimentReport(
        name="demo",
        seed=3,
        records=[{"a": 1, "b": 2.5}, {"a": 2, "c": "x"}],
        summary={"best": 1},
        meta={"kernel_backend": "python"},
    )
    json_path, csv_path = rep.write(tmp_path / "rep")
    data = json.loads(json_path.read_text())
    assert data["experiment"] == "demo"
    assert data["seed"] == 3
    assert data["summary"] == {"best": 1}
    with csv_path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    assert set(rows[0]) == {"a", "b", "c"}


def test_cmd_speedup_tiny_sizes():
    rep = cmd_speedup(seed=1, trials=1, sizes=(3, 5), resolution=2.0, gen=small_gen())
    assert {r["size"] for r in rep.records} == {3, 5}
    assert all(r["ratio"] > 0 for r in rep.records)
    assert "size_3" in rep.summary and "size_5" in rep.summary
    assert isinstance(rep.summary["ratio_increasing"], bool)


def test_cmd_conservatism_positive_margin():
    rep = cmd_conservatism(seed=2, trials=2, n_samples=20_000, gen=small_gen())
    assert len(rep.records) == 2
    assert rep.summary["min_pct"] > 0.0
    assert rep.summary["median_pct"] >= rep.summary["min_pct"]


def test_cmd_kalman_reports_improvement_fraction():
    rep = cmd_kalman(seed=3, trials=2, n_agents=8, n_iterations=8, bootstrap=40)
    assert len(rep.records) == 2
    assert 0.0 <= rep.summary["improved_fraction"] <= 1.0
    for r in rep.records:
        assert r["improvement"] == r["population_error"] - r["adaptive_error"]


def test_cmd_session_lambda_trace_and_rounds():
    rep = cmd_session(
        seed=4,
        trials=1,
        strategy=StrategyConfig(kind=ANNEALED, lambda_explore=50.0, total_rounds=4),
        rounds=4,
        gen=small_gen(),
        search=SearchConfig(population_size=8, max_generations=2, time_limit=None),
    )
    assert rep.summary["lambda_trace"] == [50.0, 50.0, 0.0, 0.0]
    assert [r["round"] for r in rep.records] == [1, 2, 3, 4]
    assert all(r["z2"] >= 0 for r in rep.records)


def test_cmd_kernels_backends_agree():
    rep = cmd_kernels(seed=5, trials=40)
    assert rep.summary["max_abs_dmu"] == 0.0
    assert rep.summary["max_abs_dsigma"] == 0.0
    assert len(rep.records) == 40


def test_main_writes_output_files(tmp_path, capsys):
    rc = main(["kernels", "--trials", "5", "--out", str(tmp_path / "rep")])
    assert rc == 0
    assert (tmp_path / "rep.json").exists()
    assert (tmp_path / "rep.csv").exists()
    out = capsys.readouterr().out
    assert "experiment: kernels" in out
    assert "wrote" in out


def test_main_rejects_zero_trials(capsys):
    assert main(["kernels", "--trials", "0"]) == 2
    assert "trials" in capsys.readouterr().err


def test_main_rejects_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["kernels", "--config", str(cfg)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_main_rejects_non_object_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["kernels", "--config", str(cfg)]) == 2
    assert "JSON object" in capsys.readouterr().err


def test_main_session_from_saved_instance(tmp_path):
    inst, _ = generate(small_gen(seed=6))
    inst_path = tmp_path / "instance.json"
    inst.save(inst_path)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {"search": {"population_size": 6, "time_limit": None, "max_generations": 1}}
        )
    )
    rc = main(
        [
            "session",
            "--rounds",
            "2",
            "--instance",
            str(inst_path),
            "--config",
            str(cfg),
        ]
    )
    assert rc == 0
