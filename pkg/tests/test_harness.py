import csv
import dataclasses
import json

import numpy as np
import pytest

from bobw_bandit import cli, harness, theory
from bobw_bandit.core import ConfigError
from bobw_bandit.environments import Adaptive, TheoryInstance
from bobw_bandit.metrics import RegretMode

BERNOULLI = [{"dist": "bernoulli", "mu": 0.4}, {"dist": "bernoulli", "mu": 0.6}]


def minimal(**over):
    raw = {"name": "minimal", "horizon": 1000, "seeds": 5,
           "policy": {"kind": "bobw", "epsilon": 0.2},
           "environment": {"type": "stochastic", "arms": BERNOULLI}}
    raw.update(over)
    return raw


def write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_writes_files(tmp_path, capsys):
    cfg = write(tmp_path, minimal())
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "out"), "--workers", "1"]) == 0
    rows = read_rows(tmp_path / "out" / "minimal_trajectory.csv")
    assert rows[0] == ["round", "mean_regret", "se_regret"] and len(rows) == 1001
    summary = json.loads((tmp_path / "out" / "minimal_summary.json").read_text())
    assert summary["num_trials"] == 5 and summary["config"]["horizon"] == 1000
    assert "code_version" in summary and summary["bounds"][0]["formula_id"] == "stochastic_upper"


def test_summary_bounds_recomputable(tmp_path):
    res = harness.run_experiment(harness.parse_config(minimal(seeds=2)), workers=1)
    b = res.summary()["bounds"][0]
    inst = TheoryInstance(tuple(b["mu"]), tuple(b["sigma_sq"]))
    assert theory.upper_bound_stochastic(inst, b["epsilon"], b["horizon"]).value == b["value"]


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, minimal())
    for out in ("a", "b"):
        cli.main(["run", "--config", cfg, "--out", str(tmp_path / out), "--workers", "1"])
    a = (tmp_path / "a" / "minimal_trajectory.csv").read_bytes()
    assert a == (tmp_path / "b" / "minimal_trajectory.csv").read_bytes()


def test_worker_count_does_not_matter(tmp_path):
    cfg = write(tmp_path, minimal(seeds=4, horizon=300))
    for w in ("1", "3"):
        cli.main(["run", "--config", cfg, "--out", str(tmp_path / w), "--workers", w])
    assert (tmp_path / "1" / "minimal_trajectory.csv").read_bytes() == \
        (tmp_path / "3" / "minimal_trajectory.csv").read_bytes()


def test_trial_order_does_not_matter():
    a = harness.run_experiment(harness.parse_config(minimal(seeds=[0, 1, 2, 3, 4, 5])), workers=1)
    b = harness.run_experiment(harness.parse_config(minimal(seeds=[5, 3, 1, 0, 4, 2])), workers=1)
    assert np.allclose(a.mean, b.mean, rtol=0, atol=1e-12)
    assert sorted(a.final_regrets) == sorted(b.final_regrets)


def test_adding_trials_keeps_existing_streams():
    small = harness.parse_config(minimal(seeds=3))
    big = harness.parse_config(minimal(seeds=6))
    for s in small.seeds:
        assert np.array_equal(harness.run_trial(small, s).arms, harness.run_trial(big, s).arms)


def test_pseudo_regret_mean_monotone():
    res = harness.run_experiment(harness.parse_config(minimal(seeds=list(range(1, 51)))), workers=1)
    assert res.mean[0] >= 0 and np.all(np.diff(res.mean) >= 0)


def test_seed_override_changes_streams(tmp_path):
    cfg = write(tmp_path, minimal(seeds=2, horizon=200))
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "x"), "--workers", "1"])
    cli.main(["run", "--config", cfg, "--out", str(tmp_path / "y"), "--workers", "1", "--seed", "99"])
    summary = json.loads((tmp_path / "y" / "minimal_summary.json").read_text())
    assert summary["config"]["master_seed"] == 99
    assert (tmp_path / "x" / "minimal_trajectory.csv").read_bytes() != \
        (tmp_path / "y" / "minimal_trajectory.csv").read_bytes()


@pytest.mark.parametrize("mutate", [
    lambda r: r.pop("horizon"),
    lambda r: r.update(horizon=10),
    lambda r: r["policy"].update(epsilon=0.7),
    lambda r: r["environment"].update(type="nope"),
    lambda r: r.update(regret_mode="pseudo", environment={"type": "scripted", "losses": [[0.1, 0.2]] * 60}),
    lambda r: r.update(environment={"type": "scripted", "losses": [[0.1, 0.2]] * 10}),
])
def test_config_errors_exit_2(tmp_path, mutate):
    raw = minimal()
    mutate(raw)
    with pytest.raises(ConfigError):
        harness.parse_config(raw)
    assert cli.main(["run", "--config", write(tmp_path, raw)]) == cli.EXIT_CONFIG


def test_malformed_json_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["bounds", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", write(tmp_path, minimal()), "--seed", "-1"]) == 2


def test_bounds_lower_bound_instance(tmp_path, capsys):
    cfg = write(tmp_path, {"formula": "lower_bound_simplified", "mu": [0.1, 0.3], "sigma_sq": [0.09, 0.05]})
    assert cli.main(["bounds", "--config", cfg]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.47096, abs=1e-5)


def test_bounds_stochastic_instance(tmp_path, capsys):
    spec = {"formula": "stochastic_upper", "mu": [0.2, 0.3, 0.5], "sigma_sq": [0.1, 0.2, 0.05],
            "horizon": 10000, "epsilon": 0.2}
    out = tmp_path / "bound.json"
    assert cli.main(["bounds", "--config", write(tmp_path, spec), "--out", str(out)]) == 0
    expect = theory.upper_bound_stochastic(TheoryInstance((0.2, 0.3, 0.5), (0.1, 0.2, 0.05)), 0.2, 10000)
    assert json.loads(out.read_text())["value"] == expect.value


def test_bounds_list_and_schema_error(tmp_path, capsys):
    reqs = [{"formula": "delta_of_epsilon", "epsilon": 0.2}, {"formula": "h_of_z", "z": 0.1}]
    assert cli.main(["bounds", "--config", write(tmp_path, reqs)]) == 0
    vals = json.loads(capsys.readouterr().out)
    assert vals[1]["value"] == 2.4
    assert cli.main(["bounds", "--config", write(tmp_path, {"formula": "h_of_z"}, "b.json")]) == 2
    assert cli.main(["bounds", "--config", write(tmp_path, {"formula": "x"}, "c.json")]) == 2


def test_verify_default_passes(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


def test_verify_tightened_threshold_reports_failure(capsys, tmp_path):
    report = tmp_path / "verify.json"
    code = cli.main(["verify", "--approx-threshold", "0.05", "--instances", "10", "--out", str(report)])
    assert code == cli.EXIT_VERIFY
    checks = {c["name"]: c for c in json.loads(report.read_text())}
    plain = checks["lower_bound_approx"]
    assert not plain["passed"] and 0.05 < plain["measured"] <= 0.06
    assert checks["moment_form_equivalence"]["passed"]
    assert checks["moment_form_equivalence"]["measured"] <= 1e-9


def sweep_raw(grid, **over):
    raw = minimal(name="sw", seeds=3, horizon=500, grid=grid)
    raw.update(over)
    return raw


def test_sweep_over_policies(tmp_path):
    raw = sweep_raw({"policy": [{"kind": "bobw"}, {"kind": "tsallis_inf_iw"}, {"kind": "ucb_v"}]})
    assert cli.main(["sweep", "--config", write(tmp_path, raw), "--out", str(tmp_path), "--workers", "1"]) == 0
    rows = read_rows(tmp_path / "sw_sweep.csv")
    assert len(rows) == 4
    assert [r[2] for r in rows[1:]] == ["bobw(eps=0.2)", "tsallis_inf_iw", "ucb_v"]


def test_sweep_over_epsilon_changes_bounds():
    rows = harness.run_sweep(sweep_raw({"policy.epsilon": [0.1, 0.2, 0.5]}), workers=1)
    got = [r["bounds"]["stochastic_upper"] for r in rows]
    inst = TheoryInstance((0.4, 0.6), (0.24, 0.24))
    assert got == [theory.upper_bound_stochastic(inst, e, 500).value for e in (0.1, 0.2, 0.5)]
    assert len(set(got)) == 3


def test_sweep_over_horizon():
    rows = harness.run_sweep(sweep_raw({"horizon": [500, 2000]}), workers=1)
    assert [r["horizon"] for r in rows] == [500, 2000]
    for r in rows:
        assert r["regret_over_log_T"] == pytest.approx(r["final_mean_regret"] / np.log(r["horizon"]))


def test_adaptive_environment_uses_protocol_loop():
    base = harness.parse_config({"horizon": 200, "seeds": 2, "policy": {"kind": "bobw"},
                                 "environment": {"type": "scripted", "losses": [[0.5, 0.5]] * 200}})

    def punish_last(t, history):
        # the arm played last round gets loss 1
        loss = [0.2, 0.2]
        if history:
            loss[history[-1][1]] = 1.0
        return loss

    cfg = dataclasses.replace(base, environment=Adaptive(2, punish_last))
    assert cfg.regret_mode is RegretMode.REALIZED
    res = harness.run_experiment(cfg, workers=1)
    assert res.mean.shape == (200,) and np.isfinite(res.final_mean)
    rec = harness.run_trial(cfg, 0)
    assert np.all(rec.losses[1:][np.arange(199), rec.arms[:-1]] == 1.0)
