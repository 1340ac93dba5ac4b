import csv
import json
import math
import random

import pytest

from brwlab.cli import ConfigError, ExperimentConfig, Replicas, csv_text, main
from brwlab.model import find_tstar

from conftest import TSTAR_B


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return lines[0].split("=", 1)[1], list(csv.DictReader(lines[1:]))


def test_tstar_summary(tmp_path, model_b):
    code, out = run(tmp_path, "tstar", "model_b")
    assert code == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["summary"]["tstar"] == pytest.approx(TSTAR_B, abs=1e-12)
    assert doc["summary"]["tstar"] == pytest.approx(find_tstar(model_b), abs=1e-15)
    assert abs(doc["summary"]["phi_at_tstar"]) <= 1e-12


def test_renewal_table(tmp_path):
    code, out = run(tmp_path, "renewal", "model_a", "-p", "n_max=50")
    assert code == 0
    _, rows = read_csv(out / "excursion.csv")
    assert len(rows) == 50
    for r in rows:
        assert float(r["n_q_n"]) == pytest.approx(0.5, abs=1e-12)


def test_tail_dp_slope(tmp_path):
    code, out = run(tmp_path, "tail-dp", "model_b", "-p", "k_max=60")
    assert code == 0
    s = json.loads((out / "summary.json").read_text())["summary"]
    assert s["slope"] == pytest.approx(s["log_q"], rel=0.05)


def test_outputs_are_byte_identical(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    argv = ["grow-stats", "model_b", "--seed", "5", "--replicas", "4", "-p", "depth=6"]
    assert main([*argv, "--out", str(a)]) == 0
    assert main([*argv, "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_replica_count_independent_of_threads(tmp_path, monkeypatch):
    argv = ["grow-stats", "model_b", "--seed", "2", "--replicas", "6", "-p", "depth=5"]
    monkeypatch.setenv("BRWLAB_THREADS", "1")
    assert main([*argv, "--out", str(tmp_path / "one")]) == 0
    monkeypatch.setenv("BRWLAB_THREADS", "4")
    assert main([*argv, "--out", str(tmp_path / "four")]) == 0
    for p in (tmp_path / "one").iterdir():
        assert p.read_bytes() == (tmp_path / "four" / p.name).read_bytes()


def test_grow_stats_barrier(tmp_path):
    code, out = run(tmp_path, "grow-stats", "model_b", "--replicas", "3", "-p", "depth=6", "-p", "barrier=0")
    assert code == 0
    free = main(["grow-stats", "model_b", "--replicas", "3", "-p", "depth=6", "--out", str(tmp_path / "free")])
    assert free == 0
    assert (out / "generations.csv").read_text() != (tmp_path / "free" / "generations.csv").read_text()


def test_replica_merge_is_order_free():
    vals = {i: math.sin(i) * 10**(i % 5) for i in range(40)}
    whole = Replicas(vals)
    keys = list(vals)
    random.Random(0).shuffle(keys)
    merged = Replicas()
    for k in keys:
        merged = merged.merge(Replicas({k: vals[k]}))
    assert merged.mean() == whole.mean()
    assert merged.stderr() == whole.stderr()
    assert merged.median() == whole.median()
    with pytest.raises(ValueError):
        merged.merge(Replicas({3: 1.0}))


def test_empty_table_has_header():
    text = csv_text(["a", "b"], [], "abc")
    assert text == "# config_hash=abc\na,b\n"


def test_every_file_carries_the_hash(tmp_path):
    code, out = run(tmp_path, "scaling", "model_b", "--replicas", "2", "-p", "depth=8")
    assert code == 0
    cfg_hash = json.loads((out / "summary.json").read_text())["config_hash"]
    csvs = sorted(out.glob("*.csv"))
    assert csvs
    for p in csvs:
        assert read_csv(p)[0] == cfg_hash


def test_scaling_plot_schema(tmp_path):
    code, out = run(tmp_path, "scaling", "model_a", "--replicas", "3", "-p", "depth=10", "-p", "levels=[1,2,3]")
    assert code == 0
    _, rows = read_csv(out / "scaling.plot.csv")
    assert list(rows[0]) == ["n", "sup_localtime", "n_normalizer", "ratio"]
    assert [int(r["n"]) for r in rows] == [1, 2, 3]
    for r in rows:
        assert float(r["ratio"]) == pytest.approx(float(r["sup_localtime"]) / float(r["n_normalizer"]), rel=1e-15)


def test_config_hash_ignores_output_dir():
    a = ExperimentConfig("model_b", "tstar", out="x")
    b = ExperimentConfig("model_b", "tstar", out="y")
    c = ExperimentConfig("model_b", "tstar", seed=1)
    assert a.hash == b.hash != c.hash


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "model_a", "experiment": "renewal", "parameters": {"n_max": 5}}))
    code, out = run(tmp_path, "renewal", "--config", str(cfg))
    assert code == 0
    assert len(read_csv(out / "excursion.csv")[1]) == 5


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": "model_a", "experiment": "tstar", "colour": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": "model_a"})
    with pytest.raises(ConfigError):
        ExperimentConfig("model_a", "tstar", replicas=0)


@pytest.mark.parametrize("argv", [
    ["tstar", "model_b", "-p", "bogus=1"],
    ["tstar", "no_such_model"],
    ["renewal", "model_a", "-p", "noequals"],
    ["scaling", "model_a", "-p", "levels=[0,1]"],
])
def test_exit_config_error(tmp_path, argv):
    assert run(tmp_path, *argv)[0] == 2


def test_exit_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "model_a", "experiment": "tstar", "colour": "red"}))
    assert run(tmp_path, "tstar", "--config", str(cfg))[0] == 2


def test_exit_precision(tmp_path):
    assert run(tmp_path, "tail-dp", "model_b", "-p", "L=2", "-p", "U=3", "-p", "k_max=30",
               "-p", "k_lo=10", "-p", "rel_width=1e-9")[0] == 3


def test_exit_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["tstar", "model_b", "--out", str(blocker / "sub")]) == 4


def test_exit_failed_check(tmp_path):
    assert run(tmp_path, "many-to-one-check", "model_b", "-p", "depth=2", "-p", "tol=-1")[0] == 1


def test_many_to_one_check_passes(tmp_path):
    code, out = run(tmp_path, "many-to-one-check", "model_b")
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["checks"] == {"many_to_one": True}
