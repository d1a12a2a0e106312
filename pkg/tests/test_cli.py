import csv
import json
from pathlib import Path

import numpy as np
import pytest

from gkpqec import config as C
from gkpqec.checkpoints import load_checkpoint, save_checkpoint
from gkpqec.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, NumericalFailure, check_state, main
from gkpqec.grape import AgentRun, CurvePoint, Adam
from gkpqec.policies import LookupPolicy, RecurrentPolicy

SMALL = ["--set", "hilbert.n_fock=20", "--set", "code.max_truncation_loss=0.05",
         "--set", "integrator.dt=0.002", "--threads", "1"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path), *SMALL])


def only_dir(tmp_path):
    (d,) = [p for p in tmp_path.iterdir() if p.is_dir()]
    return d


def test_merge_defaults_and_unknown_keys():
    c = C.merge({}, "run-qec")
    assert c["hilbert"]["n_fock"] == 100 and c["noise"]["preset"] == "low"
    with pytest.raises(C.ConfigError, match=r"noise\.presett: unknown key"):
        C.merge({"noise": {"presett": "low"}})
    with pytest.raises(C.ConfigError, match="unknown config block"):
        C.merge({"nosie": {}})
    with pytest.raises(C.ConfigError, match="train"):
        C.merge({}, "train")
    with pytest.raises(C.ConfigError, match="code.delta"):
        C.merge({"code": {"delta": 1.5}})
    assert C.merge({"integrator": {"dt": "1e-3"}})["integrator"]["dt"] == 1e-3


def test_config_dump_roundtrip(tmp_path):
    c = C.merge({"noise": {"preset": "high"}, "hilbert": {"n_fock": 30}})
    C.dump(c, tmp_path / "c.yaml")
    assert C.load(tmp_path / "c.yaml") == c


def test_check_state():
    check_state(np.diag([0.5, 0.5]), "x")
    with pytest.raises(NumericalFailure):
        check_state(np.diag([0.6, 0.5]), "x")
    with pytest.raises(NumericalFailure):
        check_state(np.diag([1.1, -0.1]), "x")


def test_prepare_state(tmp_path):
    assert run(tmp_path, "prepare-state", "--set", "prepare.wigner_points=5") == EXIT_OK
    d = only_dir(tmp_path)
    for f in ("state.json", "state.csv", "wigner.csv", "report.json", "config.yaml"):
        assert (d / f).exists()
    rep = json.loads((d / "report.json").read_text())
    assert rep["paulis"]["Z"] > 0.8 and len(rep["delta_ladder"]) == 3


def test_bad_config_exit_codes(tmp_path):
    assert run(tmp_path, "run-qec", "--set", "noise.preset=extreme") == EXIT_CONFIG
    assert run(tmp_path, "run-qec", "--set", "run.bogus=1") == EXIT_CONFIG
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("noise: [unclosed")
    assert run(tmp_path, "run-qec", "--config", str(cfg)) == EXIT_CONFIG
    assert run(tmp_path, "enumerate", "--set", "enumerate.n_half_cycles=13") == EXIT_CONFIG
    assert run(tmp_path, "train") == EXIT_CONFIG


def test_truncation_overflow_is_config_error(tmp_path):
    assert main(["prepare-state", "--out", str(tmp_path), "--set", "hilbert.n_fock=10"]) == EXIT_CONFIG


def test_numerical_failure_exit(tmp_path, monkeypatch):
    import gkpqec.cli as cli

    def boom(*a, **k):
        raise NumericalFailure("trace drift")

    monkeypatch.setitem(cli.COMMANDS, "run-qec", boom)
    assert run(tmp_path, "run-qec") == EXIT_NUMERIC


def test_run_qec_stochastic(tmp_path):
    assert run(tmp_path, "run-qec", "--set", "run.n_cycles=2", "--set", "run.batch_size=2",
               "--set", "noise.preset=high", "--seed", "3") == EXIT_OK
    d = only_dir(tmp_path)
    rows = [json.loads(x) for x in (d / "trajectories-pZ.jsonl").read_text().splitlines()]
    assert len(rows) == 2 * 4 and {r["outcome"] for r in rows} <= {"g", "e"}
    with open(d / "pauli-pZ.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 3


def test_run_qec_forced_and_autonomous(tmp_path):
    assert run(tmp_path / "a", "run-qec", "--set", "run.mode=forced", "--set", "run.outcomes=gegg") == EXIT_OK
    rows = (only_dir(tmp_path / "a") / "trajectory-pZ.jsonl").read_text().splitlines()
    assert [json.loads(r)["outcome"] for r in rows] == list("gegg")
    assert run(tmp_path / "b", "run-qec", "--set", "run.mode=forced") == EXIT_CONFIG
    assert run(tmp_path / "c", "run-qec", "--set", "run.mode=autonomous", "--set", "run.n_cycles=1",
               "--set", "schedule.kind=autonomous") == EXIT_OK


def test_enumerate(tmp_path):
    assert run(tmp_path, "enumerate", "--set", "enumerate.n_half_cycles=3", "--set", "noise.preset=high") == EXIT_OK
    d = only_dir(tmp_path)
    with open(d / "branches.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert sum(float(r["probability"]) for r in rows) == pytest.approx(1, abs=1e-8)


def train_args(epochs):
    return ["--set", "train.epochs=%d" % epochs, "--set", "train.batch_size=2",
            "--set", "train.n_cycles_train=1", "--set", "train.n_fock=20",
            "--set", "train.max_truncation_loss=0.05", "--set", "train.dt=0.002",
            "--set", "train.n_agents=1", "--set", "train.noise_preset=high",
            "--set", "train.learning_rate=1e-3", "--set", "train.policy=fnn"]


def test_train_and_resume(tmp_path):
    assert run(tmp_path / "a", "train", *train_args(2)) == EXIT_OK
    d = only_dir(tmp_path / "a")
    with open(d / "curve-agent-0.csv") as fh:
        assert [r["epoch"] for r in csv.DictReader(fh)] == ["0", "1"]
    ck = d / "agent-0.json"
    assert run(tmp_path / "b", "train", *train_args(2), "--set", f"train.resume={ck}") == EXIT_OK
    d2 = only_dir(tmp_path / "b")
    with open(d2 / "curve-agent-0.csv") as fh:
        assert [r["epoch"] for r in csv.DictReader(fh)] == ["0", "1", "2", "3"]
    # the resumed run equals an uninterrupted four-epoch run
    assert run(tmp_path / "c", "train", *train_args(4)) == EXIT_OK
    a = load_checkpoint(d2 / "agent-0.json")["policy"].weights
    b = load_checkpoint(only_dir(tmp_path / "c") / "agent-0.json")["policy"].weights
    assert all(np.allclose(a[k], b[k]) for k in a)


def test_evaluate(tmp_path):
    assert run(tmp_path, "evaluate", "--set", "evaluate.n_cycles=2", "--set", "evaluate.labels=['+Z']",
               "--set", "evaluate.injection_alphas=[0.2]", "--set", "evaluate.injection_cycles=1",
               "--set", "evaluate.policies=['standard']", "--set", "noise.preset=high") == EXIT_OK
    d = only_dir(tmp_path)
    assert (d / "comparison.csv").exists() and (d / "injection.csv").exists()
    json.loads((d / "summary.json").read_text())


def test_checkpoint_roundtrip(tmp_path):
    pol = RecurrentPolicy(seed=5)
    run_ = AgentRun(5, pol, curve=[CurvePoint(0, 0.2, 0.8)], adam=Adam(1e-3), rng_state={"x": 1},
                    epoch0_infidelity=0.2)
    save_checkpoint(tmp_path / "c.json", run_, {"note": "x"})
    ck = load_checkpoint(tmp_path / "c.json")
    assert ck["metadata"] == {"note": "x"} and ck["run"].epochs_done == 1
    assert all(np.array_equal(pol.weights[k], ck["policy"].weights[k]) for k in pol.weights)
    save_checkpoint(tmp_path / "l.json", LookupPolicy(2))
    ck = load_checkpoint(tmp_path / "l.json")
    assert ck["run"] is None and ck["policy"].depth == 2
    doc = json.loads((tmp_path / "l.json").read_text())
    doc["version"] = 99
    (tmp_path / "l.json").write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(tmp_path / "l.json")
