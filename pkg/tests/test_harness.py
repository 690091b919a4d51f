import csv
import io
import json
from dataclasses import replace

import pytest

from tsic import cli
from tsic.harness import (
    METRIC_FIELDS,
    PRESETS,
    ConfigError,
    ExperimentConfig,
    metrics_csv,
    read_metrics,
    run_experiment,
    trace_experiment,
    write_trace,
)
from tsic.qnet import TrainConfig
from tsic.sim import SimConfig, generate_workload, write_workload


def tiny(**kw):
    base = dict(sim=SimConfig(num_nodes=3, num_tasks=40), policies=["TSIC", "RR"],
                seeds=[0, 1, 2], train_episodes=1)
    base.update(kw)
    return ExperimentConfig(**base)


def test_cartesian_row_count():
    rows = run_experiment(tiny())
    assert len(rows) == 6
    assert [(r.policy, r.seed) for r in rows] == [(p, s) for p in ("TSIC", "RR") for s in (0, 1, 2)]
    for r in rows:
        assert r.total_s == pytest.approx(r.comm_s + r.wait_s + r.comp_s)


def test_same_config_same_bytes():
    assert metrics_csv(run_experiment(tiny())) == metrics_csv(run_experiment(tiny()))


def test_rr_independent_of_train_config():
    a = run_experiment(tiny(policies=["RR"]))
    b = run_experiment(tiny(policies=["RR"], train=TrainConfig(learning_rate=0.5, gamma=0.9, seed=7)))
    assert metrics_csv(a) == metrics_csv(b)


def test_parallel_matches_serial():
    cfg = tiny(seeds=[0, 1])
    assert metrics_csv(run_experiment(cfg, jobs=2)) == metrics_csv(run_experiment(cfg))


def test_lfu_sweep_resolves_cache_names():
    cfg = tiny(policies=["GRD"], caches=["ADP", "LFU"], sweep_axis="lfu_size",
               sweep_values=[2, 3], seeds=[0])
    rows = run_experiment(cfg)
    assert [(r.sweep_value, r.cache) for r in rows] == [(2, "ADP"), (2, "LFU-2"), (3, "ADP"), (3, "LFU-3")]
    assert rows[0].wait_s == rows[2].wait_s  # ADP does not depend on K


def test_node_and_task_sweeps():
    rows = run_experiment(tiny(policies=["GRD"], sweep_axis="node_count", sweep_values=[2, 4], seeds=[0]))
    assert [r.sweep_value for r in rows] == [2, 4]
    rows = run_experiment(tiny(policies=["GRD"], sweep_axis="task_count", sweep_values=[5, 9], seeds=[0]))
    assert rows[0].failures + 0 <= 5


@pytest.mark.parametrize("bad", [
    dict(seeds=[]),
    dict(policies=["FIFO"]),
    dict(caches=["MRU"]),
    dict(caches=["LFU"]),
    dict(sweep_axis="node_count", sweep_values=[3, 3]),
    dict(sweep_axis="colour", sweep_values=[1]),
    dict(sweep_values=[1, 2]),
    dict(sim=SimConfig(num_nodes=0)),
    dict(train=TrainConfig(gamma=2.0)),
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        tiny(**bad).validate()


def test_config_json_roundtrip(tmp_path):
    cfg = PRESETS["fig3"]()
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.load(path)
    assert back == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"sim": {}, "policy": "TSIC"})


def test_trace_aggregation_oracle():
    cfg = tiny(seeds=[1], policies=["TSIC"])
    row = run_experiment(cfg)[0]
    buf = io.StringIO()
    write_trace(trace_experiment(cfg), buf)
    buf.seek(0)
    recs = list(csv.DictReader(buf))
    assert list(recs[0]) == ["slot", "task_id", "action_node", "masked", "eps_draw", "reward", "failed"]
    done = [-float(r["reward"]) for r in recs if r["failed"] == "0"]
    assert len(recs) == 40 and len(recs) - len(done) == row.failures
    assert sum(done) / len(done) == pytest.approx(row.total_s, rel=1e-12)


def test_csv_schema_and_reader():
    text = metrics_csv(run_experiment(tiny(policies=["GRD"], seeds=[0])))
    assert text.splitlines()[0] == ",".join(METRIC_FIELDS)
    rec = read_metrics(io.StringIO(text))[0]
    assert rec["policy"] == "GRD" and rec["sweep_value"] == "" and rec["seed"] == 0


def test_workload_file_drives_evaluation(tmp_path):
    sim = SimConfig(num_nodes=3, num_tasks=30, rng_seed=0)
    path = tmp_path / "w.csv"
    write_workload(generate_workload(replace(sim, rng_seed=5)), path)
    a = run_experiment(tiny(policies=["RR"], seeds=[0], workload_path=str(path)))
    b = run_experiment(tiny(policies=["RR"], seeds=[0]))
    assert a[0].total_s != b[0].total_s


def test_presets_shape():
    f3, f4, f5 = PRESETS["fig3"](), PRESETS["fig4"](), PRESETS["fig5"]()
    for cfg in (f3, f4, f5):
        cfg.validate()
        assert cfg.seeds == [0, 1, 2, 3, 4]
        assert cfg.train.epsilon == 0.5 and cfg.train.gamma == 0.5
        assert cfg.train.caching_update == 10 and cfg.train.target_update == 5
        assert cfg.sim.image_size_mb == (253.07, 458.73)
        # the smallest node holds the ten smallest possible images
        assert 10 * 253.07 <= min(cfg.sim.storage_tiers) < 11 * 253.07
    assert f3.sweep_axis == "lfu_size" and f3.policies == ["TSIC"]
    assert f4.sweep_axis == "node_count" and f4.sweep_values == [3, 4, 5, 6, 7, 8]
    assert f5.sweep_axis == "task_count" and f5.sweep_values == [50, 100, 200, 300, 400]


def test_cli_run_and_errors(tmp_path, capsys):
    cfg = tiny(policies=["GRD"], seeds=[0])
    cpath = tmp_path / "c.json"
    cpath.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "m.csv"
    cli.main(["run", "--config", str(cpath), "--out", str(out)])
    assert out.read_text() == metrics_csv(run_experiment(cfg))
    cli.main(["trace", "--config", str(cpath)])
    assert capsys.readouterr().out.startswith("slot,task_id,action_node")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"seeds": []}))
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--config", str(bad)])
    assert "seed" in str(exc.value)
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(tmp_path / "missing.json")])


def test_cli_preset_dump(capsys):
    cli.main(["preset", "fig4", "--dump-config"])
    d = json.loads(capsys.readouterr().out)
    assert d["sweep_axis"] == "node_count"


def test_cli_workload_export(tmp_path):
    cfg = tiny()
    cpath = tmp_path / "c.json"
    cpath.write_text(json.dumps(cfg.to_dict()))
    out = tmp_path / "w.csv"
    cli.main(["workload", "--config", str(cpath), "--out", str(out)])
    assert len(out.read_text().splitlines()) == 41
