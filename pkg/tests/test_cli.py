import json

import pytest
import yaml

from nlcancel import cli


def run(argv):
    return cli.main([str(a) for a in argv])


def test_simulate_shape(tmp_path):
    assert run(["simulate", "--example", "pendulum", "--T", 10, "--seed", 7, "--out", tmp_path]) == 0
    lines = (tmp_path / "data.csv").read_text().splitlines()
    assert len(lines) == 12  # header plus 11 state rows
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["seed"] == 7 and "data.csv" in man["file_sha256"]


def test_simulate_repetitions(tmp_path):
    code = run(["simulate", "--example", "pendulum-noisy", "--delta", 0.01, "--T", 30, "--reps", 100, "--out", tmp_path])
    assert code == 0
    assert len(list(tmp_path.glob("data_rep*.csv"))) == 100
    assert (tmp_path / "data_mean.csv").read_text().startswith("#mode=discrete")


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run(["simulate", "--example", "nosuch", "--out", tmp_path]) == 1
    assert "nosuch" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 1
    assert run(["synth", "--config", tmp_path / "missing.yaml", "--out", tmp_path / "r.json"]) == 1


def test_synth_example1(tmp_path):
    assert run(["synth", "--example-id", 1, "--out", tmp_path / "r.json"]) == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    K = dict(zip(doc["labels"], doc["K"][0]))
    assert K["sin(x1)"] == pytest.approx(-9.8, abs=1e-4)
    assert set(doc["provenance"]) >= {"config_sha256", "dataset_sha256"}


def test_synth_example4_modes(tmp_path):
    assert run(["synth", "--example-id", 4, "--stage", "minnorm", "--out", tmp_path / "m.json"]) == 0
    assert json.loads((tmp_path / "m.json").read_text())["objective"] == pytest.approx(0.2, abs=1e-3)
    assert run(["synth", "--example-id", 4, "--stage", "exact", "--out", tmp_path / "e.json"]) == 3
    assert json.loads((tmp_path / "e.json").read_text())["status"] == "infeasible"


def test_synth_is_deterministic(tmp_path):
    for name in ("a.json", "b.json"):
        assert run(["synth", "--example-id", 6, "--out", tmp_path / name]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_synth_from_csv_files(tmp_path):
    run(["simulate", "--example", "pendulum", "--T", 10, "--seed", 1, "--out", tmp_path / "sim"])
    assert run(["synth", "--example-id", 1, "--data", tmp_path / "sim" / "data.csv", "--out", tmp_path / "r.json"]) == 0


def test_certify_roa_and_rpi(tmp_path):
    run(["synth", "--example-id", 4, "--stage", "sparse", "--out", tmp_path / "r4.json"])
    assert run(["certify", "--example-id", 4, "--stage", "sparse", "--result", tmp_path / "r4.json", "--out", tmp_path / "c4"]) == 0
    cert = json.loads((tmp_path / "c4" / "certificate.json").read_text())
    assert cert["kind"] == "ROA" and cert["gamma"] > 1
    header = (tmp_path / "c4" / "region.csv").read_text().splitlines()[0]
    assert header == "x1,x2,V,decrement,in_X,in_R,in_Z"

    run(["synth", "--example-id", 8, "--out", tmp_path / "r8.json"])
    assert run(["certify", "--example-id", 8, "--result", tmp_path / "r8.json", "--out", tmp_path / "c8"]) == 0
    cert = json.loads((tmp_path / "c8" / "certificate.json").read_text())
    assert cert["kind"] == "RPI" and len(cert["gamma_interval"]) == 2
    assert cert["stability_probability"]["p"] == pytest.approx(0.9948, abs=1e-3)


def _pi_config(tmp_path, delta, lower, upper):
    cfg = cli.example_config(7)
    cfg["stages"][1]["certification"].update(delta=delta, Q_box={"lower": lower, "upper": upper})
    path = tmp_path / f"pi_{delta}.yaml"
    path.write_text(yaml.safe_dump(cfg))
    run(["synth", "--config", path, "--stage", "PI", "--out", tmp_path / "r.json"])
    return path


def _certify_pi(tmp_path, path, data=()):
    extra = ["--data", *data] if data else []
    return run(["certify", "--config", path, "--stage", "PI", "--result", tmp_path / "r.json", *extra, "--out", tmp_path / "c"])


def test_pi_stage_uses_constant_delta(tmp_path):
    # the W stage's state-dependent bound must not leak into the PI stage
    (_, pi), = [s for s in cli.stages(cli.example_config(7)) if s[0] == "PI"]
    assert "delta_x" not in pi["certification"] and pi["certification"]["delta"] == 3e-5


def test_certify_refused_exits_zero(tmp_path):
    # Q hugs the data, but an inflated delta pushes the smallest certified level outside it
    path = _pi_config(tmp_path, 1e-2, [-0.06, -0.2], [0.06, 0.2])
    assert _certify_pi(tmp_path, path) == 0
    cert = json.loads((tmp_path / "c" / "certificate.json").read_text())
    assert cert["kind"] == "refused" and len(cert["violating_points"]) > 0


def test_certify_empty_exits_zero(tmp_path):
    path = _pi_config(tmp_path, 3e-2, [-0.06, -0.2], [0.06, 0.2])
    assert _certify_pi(tmp_path, path) == 0


def test_certify_data_outside_Q_is_input_error(tmp_path):
    path = _pi_config(tmp_path, 3e-5, [-1e-6, -1e-6], [1e-6, 1e-6])
    assert _certify_pi(tmp_path, path) == 1
    assert _certify_pi(tmp_path, path, [tmp_path / "missing.csv"]) == 1


@pytest.mark.parametrize("example", [1, 2, 3, 4, 10])
def test_demo_forced_rows_pass(tmp_path, capsys, example):
    assert run(["demo", example, "--out", tmp_path]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    rows = json.loads(next(tmp_path.glob("*/comparison.json")).read_text())["rows"]
    assert any(r["check"] == "pass" for r in rows)


def test_demo_range_checked():
    with pytest.raises(SystemExit) as exc:
        run(["demo", 11])
    assert exc.value.code == 1


def test_sweep_records_exit_codes(tmp_path):
    out = tmp_path / "sweep.jsonl"
    assert run(["sweep", "--example-id", 9, "--stage", "N1", "--seeds", "0:2", "--out", out]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["params"]["experiment.seed"] for r in recs] == [0, 1]
    assert recs[0]["exit"] == 2 and recs[1]["exit"] == 0


def test_sweep_parameter_grid(tmp_path):
    out = tmp_path / "s.jsonl"
    assert run(["sweep", "--example-id", 4, "--stage", "exact", "--set", "experiment.seed=1,2", "--out", out]) == 0
    recs = [json.loads(line) for line in out.read_text().splitlines()]
    assert all(r["exit"] == 3 for r in recs)


def test_every_shipped_config_parses():
    for i in range(1, 11):
        cfg = cli.example_config(i)
        for name, stage in cli.stages(cfg):
            assert stage["model"]
            assert stage.get("synthesis", {}).get("mode") in cli.MODES
