import json

import pytest

from abnmle.cli import main
from abnmle.search import Dag
from abnmle import ScoreCache, brute_force_dag


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--k", "3", "--density", "0.7", "--dists", "gaussian",
                 "--n", "400", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_pipeline(sim, tmp_path):
    run = tmp_path / "run"
    args = ["--data", str(sim / "data.csv"), "--dists", str(sim / "dists.json"), "--out", str(run)]
    assert main(["buildcache", "--max-parents", "2", *args]) == 0
    assert main(["search", "--score", "bic", "--cache", str(run / "cache.csv"), "--out", str(run)]) == 0
    summary = json.loads((run / "search.json").read_text())
    assert summary["score"] == "bic"
    cache = ScoreCache.from_csv((run / "cache.csv").read_text())
    dag = Dag.from_csv((run / "dag.csv").read_text())
    expected, total = brute_force_dag(cache, "bic")
    assert dag == expected and summary["total"] == total
    assert (run / "dag.dot").read_text().startswith("digraph")
    assert main(["fit", "--dag", str(run / "dag.csv"), *args]) == 0
    doc = json.loads((run / "fit.json").read_text())
    assert doc["totals"]["bic"] == pytest.approx(total, abs=1e-9)


def test_evaluate_identity(sim, tmp_path):
    t = str(sim / "truth.csv")
    assert main(["evaluate", "--learned", t, "--truth", t, "--out", str(tmp_path)]) == 0
    cc = json.loads((tmp_path / "confusion.json").read_text())
    arcs = Dag.from_csv((sim / "truth.csv").read_text()).n_arcs
    assert cc == {"tp": arcs, "fp": 0, "fn": 0, "mode": "directed"}


def test_evaluate_replicates(tmp_path):
    assert main(["evaluate", "--replicates", "2", "--k", "4", "--sample-sizes", "100,200",
                 "--max-parents", "2", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "recovery.csv").read_text().splitlines()
    assert lines[0].startswith("density,n,replicate,score,tp,fp,fn")
    assert len(lines) == 1 + 2 * 2 * 4
    assert (tmp_path / "recovery_summary.csv").exists()


def test_bench(tmp_path):
    assert main(["bench", "--replicates", "3", "--k", "4", "--n", "300", "--max-parents", "2",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "bench.csv").read_text().splitlines()
    assert rows[0].startswith("task,repetitions,median_s,q1_s,q3_s")
    assert len(rows) == 5


def test_usage_errors(capsys, tmp_path):
    assert main(["search", "--score", "nope"]) == 1
    assert "--score" in capsys.readouterr().err
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--dists", "x", "--dag", "y"]) == 1
    assert "--data" in capsys.readouterr().err
    assert main(["frobnicate"]) == 1


def test_validation_error_exit_code(tmp_path):
    (tmp_path / "d.csv").write_text("a,b\n1,\n2,3\n")
    (tmp_path / "s.json").write_text('{"a": "gaussian", "b": "gaussian"}')
    assert main(["buildcache", "--data", str(tmp_path / "d.csv"), "--dists", str(tmp_path / "s.json"),
                 "--out", str(tmp_path)]) == 1


def test_internal_error_exit_code(monkeypatch, tmp_path):
    import abnmle.cli as cli

    def boom(args, cfg):
        raise RuntimeError("bug")

    monkeypatch.setitem(cli.COMMANDS, "evaluate", boom)
    assert main(["evaluate", "--out", str(tmp_path)]) == 2


def test_threads_byte_identical(sim, tmp_path):
    outs = []
    for t in ("1", "4"):
        out = tmp_path / f"t{t}"
        args = ["--data", str(sim / "data.csv"), "--dists", str(sim / "dists.json"), "--threads", t, "--out", str(out)]
        assert main(["search", "--max-parents", "2", *args]) == 0
        assert main(["fit", "--dag", str(out / "dag.csv"), *args]) == 0
        outs.append([(out / f).read_bytes() for f in ("cache.csv", "dag.csv", "dag.dot", "fit.json")])
    assert outs[0] == outs[1]


def test_ban_retain_adjust_flags(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--k", "4", "--density", "0.5", "--n", "300", "--seed", "1", "--out", str(sim)]) == 0
    (tmp_path / "ban.csv").write_text(",x1,x2,x3\nx1,0,1,0\nx2,0,0,0\nx3,0,0,0\n")
    (tmp_path / "ret.csv").write_text(",x1,x2,x3\nx1,0,0,1\nx2,0,0,0\nx3,0,0,0\n")
    out = tmp_path / "run"
    assert main(["search", "--data", str(sim / "data.csv"), "--dists", str(sim / "dists.json"),
                 "--ban", str(tmp_path / "ban.csv"), "--retain", str(tmp_path / "ret.csv"),
                 "--adjust", "x4", "--max-parents", "2", "--out", str(out)]) == 0
    dag = Dag.from_csv((out / "dag.csv").read_text())
    assert dag.node_names == ("x1", "x2", "x3")
    assert dag.adjacency[0, 2] == 1 and dag.adjacency[0, 1] == 0


def test_ten_continuous_nodes_end_to_end(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--k", "10", "--density", "0.2", "--dists", "gaussian", "--n", "10000",
                 "--seed", "7", "--out", str(sim)]) == 0
    out = tmp_path / "run"
    assert main(["search", "--score", "bic", "--max-parents", "5", "--data", str(sim / "data.csv"),
                 "--dists", str(sim / "dists.json"), "--out", str(out)]) == 0
    dag = Dag.from_csv((out / "dag.csv").read_text())
    assert dag.k == 10
    assert json.loads((out / "search.json").read_text())["cache_entries"] == 3820
