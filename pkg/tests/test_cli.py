import hashlib
import json

import numpy as np
import pytest

from bjns.cli import main, read_group_csv, InputError

CHAIN = ["--burnin", "20", "--samples", "30"]


def _digest(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--seed", "4", "--design", "random_shared_k4", "--p", "8", "--n", "40",
                 "--sparsity", "0.8", "--out", str(out)]) == 0
    return out


def test_simulate_block_k6(tmp_path):
    assert main(["simulate", "--seed", "1", "--design", "block_k6", "--p", "40", "--n", "30",
                 "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert [f for f in files if f.startswith("group")] == [f"group{k}.csv" for k in range(1, 7)]
    truth = json.loads((tmp_path / "truth.json").read_text())
    comps = {tuple(c) for c in truth["spec"]["components"]}
    assert {(1, 2), (3, 4), (5, 6), (1, 3, 5), (2, 4, 6)} < comps and len(comps) == 11


def test_simulate_deterministic_and_unknown_design(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["simulate", "--seed", "9", "--design", "ar2_chain_k4", "--p", "12", "--n", "20",
                     "--out", str(d)]) == 0
    assert _digest(a) == _digest(b)
    assert main(["simulate", "--seed", "9", "--design", "nope", "--out", str(tmp_path / "c")]) == 2


def test_fit_two_groups(tmp_path, sim):
    man = {"groups": [{"name": "a", "path": str(sim / "group1.csv")},
                      {"name": "b", "path": str(sim / "group2.csv")}]}
    (tmp_path / "m.json").write_text(json.dumps(man))
    assert main(["fit", "--seed", "1", "--manifest", str(tmp_path / "m.json"), *CHAIN,
                 "--out", str(tmp_path / "o")]) == 0
    fit = json.loads((tmp_path / "o" / "fit.json").read_text())
    assert len(fit["spec"]["components"]) == 3
    for name in ("fit.json", "trace.csv", "edges_by_component.csv", "kappa_or_stability.csv"):
        assert (tmp_path / "o" / name).exists()


def test_fit_rerun_is_byte_identical(tmp_path, sim):
    args = ["fit", "--seed", "2", "--manifest", str(sim / "manifest.json"), *CHAIN, "--diag-sampler", "grid"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")


def test_fit_then_score(tmp_path, sim):
    assert main(["fit", "--seed", "2", "--manifest", str(sim / "manifest.json"), *CHAIN,
                 "--truth", str(sim / "truth.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "kappa_or_stability.csv").read_text().startswith("sample,kappa")
    assert main(["score", "--seed", "0", "--fit", str(tmp_path / "fit.json"), "--truth", str(sim / "truth.json"),
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "scores.csv").read_text().splitlines()
    assert lines[0] == "target,MC%,SP%,SE%"
    assert lines[1].startswith("Omega1,")


def test_score_perfect_and_empty(tmp_path, sim):
    from bjns.inference import FitResult
    from bjns.synthetic import GroundTruth
    truth = GroundTruth.from_dict(json.loads((sim / "truth.json").read_text()))
    E = truth.theta.component.size
    K = truth.K

    def write(comp, name):
        res = FitResult(truth.spec, truth.p, comp, np.ones(E), np.where(comp >= 0, 0.5, 0.0),
                        np.full((E, 2), np.nan), truth.delta.diag, 1)
        (tmp_path / name).write_text(json.dumps(res.to_dict()))

    write(truth.theta.component.copy(), "perfect.json")
    assert main(["score", "--seed", "0", "--fit", str(tmp_path / "perfect.json"), "--truth",
                 str(sim / "truth.json"), "--out", str(tmp_path / "p")]) == 0
    rows = [r.split(",") for r in (tmp_path / "p" / "scores.csv").read_text().splitlines()[1:]]
    for r in rows:
        if r[0].startswith("Omega") or r[0] in ("Psi1-2-3-4",):
            assert [float(x) for x in r[1:]] == [100.0, 100.0, 100.0]
    write(np.full(E, -1), "empty.json")
    assert main(["score", "--seed", "0", "--fit", str(tmp_path / "empty.json"), "--truth",
                 str(sim / "truth.json"), "--out", str(tmp_path / "e")]) == 0
    rows = [r.split(",") for r in (tmp_path / "e" / "scores.csv").read_text().splitlines()[1:1 + K]]
    assert all(float(r[3]) == 0.0 for r in rows)


def test_score_mismatched_truth(tmp_path, sim):
    assert main(["fit", "--seed", "2", "--manifest", str(sim / "manifest.json"), *CHAIN,
                 "--out", str(tmp_path)]) == 0
    assert main(["simulate", "--seed", "1", "--design", "block_k6", "--p", "10", "--n", "20",
                 "--out", str(tmp_path / "other")]) == 0
    assert main(["score", "--seed", "0", "--fit", str(tmp_path / "fit.json"),
                 "--truth", str(tmp_path / "other" / "truth.json"), "--out", str(tmp_path)]) == 2


def test_screen_k3(tmp_path):
    assert main(["simulate", "--seed", "3", "--design", "random_shared_k4", "--p", "8", "--n", "30",
                 "--sparsity", "0.8", "--out", str(tmp_path / "d")]) == 0
    man = json.loads((tmp_path / "d" / "manifest.json").read_text())
    man["groups"] = man["groups"][:3]
    (tmp_path / "d" / "m3.json").write_text(json.dumps(man))
    base = ["screen", "--seed", "5", "--manifest", str(tmp_path / "d" / "m3.json"), *CHAIN,
            "--pairwise-burnin", "10", "--pairwise-samples", "20"]
    assert main(base + ["--out", str(tmp_path / "s1")]) == 0
    assert main(base + ["--jobs", "3", "--out", str(tmp_path / "s2")]) == 0
    rep = json.loads((tmp_path / "s1" / "screen_report.json").read_text())
    assert sum(e["stage"] == "pairwise" for e in rep["entries"]) == 3
    assert _digest(tmp_path / "s1") == _digest(tmp_path / "s2")
    assert (tmp_path / "s1" / "final_spec.json").exists()


def test_missing_group_file(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"groups": [{"name": "a", "path": "missing.csv"}]}))
    assert main(["fit", "--seed", "1", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 2


def test_malformed_csv_reports_line(tmp_path, capsys):
    f = tmp_path / "g.csv"
    f.write_text("a,b\n1,2\n3,x\n4,5\n")
    with pytest.raises(InputError, match=r"g.csv:3: non-numeric value 'x'"):
        read_group_csv(f)
    f.write_text("a,b\n1,2\n3\n")
    with pytest.raises(InputError, match=r":3: expected 2 fields"):
        read_group_csv(f)
    (tmp_path / "m.json").write_text(json.dumps({"groups": [{"name": "a", "path": "g.csv"}]}))
    assert main(["fit", "--seed", "1", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 2
    assert "g.csv:3" in capsys.readouterr().err


def test_dimension_mismatch(tmp_path):
    (tmp_path / "a.csv").write_text("x,y\n1,2\n3,4\n5,7\n")
    (tmp_path / "b.csv").write_text("x,y,z\n1,2,3\n3,4,5\n5,7,1\n")
    (tmp_path / "m.json").write_text(json.dumps({"groups": [{"name": "a", "path": "a.csv"},
                                                            {"name": "b", "path": "b.csv"}]}))
    assert main(["fit", "--seed", "1", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path)]) == 2


def test_numeric_failure_exit_code(tmp_path):
    (tmp_path / "a.csv").write_text("x,y\n1,2\n1,3\n1,5\n")
    (tmp_path / "m.json").write_text(json.dumps({"groups": [{"name": "a", "path": "a.csv"}]}))
    assert main(["fit", "--seed", "1", "--manifest", str(tmp_path / "m.json"), *CHAIN,
                 "--out", str(tmp_path)]) == 3


def test_seed_is_required(tmp_path, sim):
    assert main(["fit", "--manifest", str(sim / "manifest.json"), "--out", str(tmp_path)]) == 2


def test_spec_file(tmp_path, sim):
    (tmp_path / "spec.json").write_text(json.dumps({"K": 4, "components": [[1], [2], [3], [4], [1, 2, 3, 4]]}))
    assert main(["fit", "--seed", "1", "--manifest", str(sim / "manifest.json"), "--spec",
                 str(tmp_path / "spec.json"), *CHAIN, "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "fit.json").read_text())["spec"]["components"]) == 5
    (tmp_path / "bad.json").write_text(json.dumps({"K": 4, "components": [[1], [2], [3]]}))
    assert main(["fit", "--seed", "1", "--manifest", str(sim / "manifest.json"), "--spec",
                 str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
