import json

import pytest

from lpreward.cli import EXIT_CONFIG, EXIT_INTERNAL, EXIT_OK, EXIT_RUN_FAILED, main


@pytest.fixture
def world(tmp_path):
    mdp = tmp_path / "mdp.json"
    assert main(["mdp", "gen", "--states", "3", "--seed", "2", "--out", str(mdp),
                 "--write-expert", str(tmp_path / "e.jsonl"), "--n-expert", "100",
                 "--write-feedback", str(tmp_path / "f.jsonl"), "--n-queries", "50"]) == EXIT_OK
    return tmp_path


def _read(path):
    return json.loads(path.read_text())


def test_mdp_gen(world):
    m = _read(world / "mdp.json")
    assert m["n_states"] == 3 and m["n_actions"] == 2
    assert m["r"] == [1.0, 0.9] * 3


def test_mdp_gen_deterministic(tmp_path):
    main(["mdp", "gen", "--seed", "5", "--out", str(tmp_path / "a.json")])
    main(["mdp", "gen", "--seed", "5", "--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()


def test_irl_run_from_files(world):
    out = world / "irl.json"
    assert main(["irl", "run", "--mdp", str(world / "mdp.json"), "--expert", str(world / "e.jsonl"),
                 "--out", str(out)]) == EXIT_OK
    rep = _read(out)
    assert rep["status"] == "ok" and len(rep["reward"]) == 6
    assert rep["n_expert"] == 100 and 0 <= rep["l1_error"] <= 2


def test_irl_run_simulated(world):
    out = world / "irl.json"
    assert main(["irl", "run", "--mdp", str(world / "mdp.json"), "--n-expert", "30",
                 "--eps-x", "0.0", "--eps-g", "0.5", "--out", str(out)]) == EXIT_OK
    assert _read(out)["eps_x"] == 0.0


def test_rlhf_run(world):
    out = world / "hf.json"
    assert main(["rlhf", "run", "--mdp", str(world / "mdp.json"), "--feedback", str(world / "f.jsonl"),
                 "--out", str(out)]) == EXIT_OK
    assert _read(out)["n_queries"] == 50


def test_integrate_run(world):
    out = world / "int.json"
    assert main(["integrate", "run", "--mdp", str(world / "mdp.json"), "--expert", str(world / "e.jsonl"),
                 "--n-queries", "20", "--eps-r", "0.01", "--out", str(out)]) == EXIT_OK
    assert _read(out)["status"] == "ok"


def test_infeasible_run_exits_2(world):
    out = world / "hf.json"
    code = main(["rlhf", "run", "--mdp", str(world / "mdp.json"), "--eps-r", "-5", "--out", str(out)])
    assert code == EXIT_RUN_FAILED
    assert _read(out)["status"] == "infeasible"


def test_bandit(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bandit", "--seed", "7", "--out", str(out)]) == EXIT_OK
    rep = _read(out)
    assert {"pi_star", "pi_lp", "pi_mle", "pi_pe", "counts", "seed"} <= set(rep)
    assert rep["seed"] == 7 and rep["pi_star"] == "a3"


def test_bandit_many_seeds(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bandit", "--seeds", "3", "--out", str(out)]) == EXIT_OK
    assert len(_read(out)["reports"]) == 3


def test_experiment_outputs(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("N_grid: [10]\nruns: 2\nalgorithms: [LP-IRL-1, MLE-HF]\n")
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == EXIT_OK
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "algorithm,N,run_id,seed,l1_error,status,wall_time_ms"
    assert len(lines) == 5 and lines[1].startswith("LP-IRL-1,10,0,3,")
    assert (out / "summary.csv").exists() and (out / "error_curve.svg").exists()


def test_experiment_flags_override_file(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("N_grid: [10]\nruns: 5\nalgorithms: [LP-IRL-1]\n")
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(cfg), "--out", str(out), "--runs", "1", "--jobs", "2"]) == 0
    assert len((out / "results.csv").read_text().splitlines()) == 2


def test_experiment_failed_run_exits_2(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("N_grid: [10]\nruns: 1\nalgorithms: [LP-HF]\nparams:\n  LP-HF: {eps_r: -5.0}\n")
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_RUN_FAILED
    assert ",infeasible," in (tmp_path / "o" / "results.csv").read_text()


@pytest.mark.parametrize("text", ["runs: 0\n", "algorithms: [nope]\n", "bogus: 1\n", "runs: [1\n"])
def test_experiment_config_errors_exit_1(tmp_path, text):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text)
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_and_bad_overrides_exit_1(tmp_path):
    assert main(["experiment", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path)]) == EXIT_CONFIG
    cfg = tmp_path / "c.yaml"
    cfg.write_text("runs: 1\n")
    assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path), "--jobs", "0"]) == EXIT_CONFIG


def test_usage_errors_exit_1(tmp_path):
    assert main([]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["irl", "run"]) == EXIT_CONFIG
    assert main(["irl", "run", "--mdp", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_help_exits_0(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "experiment" in capsys.readouterr().out


def test_internal_error_exits_3(monkeypatch, world):
    import lpreward.cli as cli

    def boom(*a, **k):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli, "solve_reward_gap_lp", boom)
    assert main(["irl", "run", "--mdp", str(world / "mdp.json"), "--n-expert", "10"]) == EXIT_INTERNAL
