import json
from pathlib import Path

import numpy as np
import pytest

from profrisk import io as fio
from profrisk.bp import build_factor_graph, run_bp
from profrisk.cli import main
from profrisk.core import Match, MatchSet, SimilarityMatrix, validate_dataset
from profrisk.errors import FormatError
from profrisk.synth import SynthConfig, synthesize_dataset
from profrisk.weights import fit_logistic, prepare_training

SMALL = SynthConfig(n_users=40, n_train_users=80, n_train_coupled=60, n_train_uncoupled=60, seed=3)


def test_dataset_round_trip(tmp_path):
    ds = synthesize_dataset(SMALL)
    digest = fio.write_dataset(ds, tmp_path)
    back = fio.read_dataset(tmp_path)
    assert back.dataset_hash == digest == fio.dataset_hash(ds)
    assert fio.dataset_hash(back) == digest
    assert set(back.aux) == set(ds.aux) and set(back.target) == set(ds.target)
    for uid, p in ds.aux.items():
        assert back.aux[uid].attributes.name == p.attributes.name
        assert back.aux[uid].attributes.location == p.attributes.location
        assert back.aux[uid].attributes.activity_times == p.attributes.activity_times
    assert back.truth.pairs == ds.truth.pairs
    assert back.split == ds.split
    assert back.name_db == ds.name_db
    assert validate_dataset(back.profiles(), back.truth, back.split) == validate_dataset(ds.profiles(), ds.truth, ds.split)
    for c, pv in ds.channels.items():
        got = back.channels[c]
        assert dict(zip(zip(got.aux_ids, got.target_ids), got.values)) == dict(zip(zip(pv.aux_ids, pv.target_ids), pv.values))


def test_tampered_dataset_is_rejected(tmp_path):
    fio.write_dataset(synthesize_dataset(SMALL), tmp_path)
    path = tmp_path / "truth.csv"
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(FormatError):
        fio.read_dataset(tmp_path)


def test_weights_round_trip(tmp_path):
    ds = synthesize_dataset(SMALL)
    data, stats = prepare_training(ds)
    w = fit_logistic(data)
    fio.write_weights(w, stats, tmp_path, "cfg", ds.dataset_hash)
    w2, stats2, header = fio.read_weights(tmp_path)
    assert w2 == w and stats2 == stats
    assert header["kind"] == "weights"


def test_matches_and_similarity_round_trip(tmp_path):
    ms = MatchSet((Match("a1", "t2", 0.1 + 0.2), Match("a0", "t0", 1e-17)))
    fio.write_matches(ms, tmp_path / "m.csv", "c", "d", total=1.5)
    back, h = fio.read_matches(tmp_path / "m.csv")
    assert back.pairs() == ms.pairs()
    assert sorted(m.score for m in back) == sorted(m.score for m in ms)
    assert h["dataset"] == "d"
    R = SimilarityMatrix.from_dense(np.random.default_rng(0).random((3, 4)))
    fio.write_similarity(R, tmp_path / "s.csv", "c", "d")
    R2, _ = fio.read_similarity(tmp_path / "s.csv")
    assert R2.aux_ids == R.aux_ids
    np.testing.assert_array_equal(R2.combined, R.combined)


def test_marginal_dump_of_three_by_two(tmp_path):
    R = SimilarityMatrix.from_dense([[0.9, 0.1], [0.2, 0.8], [0.3, 0.3]])
    table = run_bp(build_factor_graph(R))
    fio.write_marginals(table, tmp_path / "marg.csv", "c", None)
    rows, _ = fio.read_marginals(tmp_path / "marg.csv")
    assert len(rows) == 6
    fio.write_trace(table, tmp_path / "trace.csv", "c", None)
    tr, _ = fio.read_trace(tmp_path / "trace.csv")
    assert len(tr) == 6 and all(len(v) == 3 for v in tr.values())


def test_wrong_kind_is_rejected(tmp_path):
    fio.write_matches(MatchSet(()), tmp_path / "m.csv", "c", None)
    with pytest.raises(FormatError):
        fio.read_truth(tmp_path / "m.csv")


# ---------------------------------------------------------------------- CLI


def _run(*argv):
    assert main([str(a) for a in argv]) == 0


def _pipeline(root: Path, workers: int = 1, algo: str = "bp"):
    ds, wt, mt = root / "ds", root / "w", root / "m"
    _run("synth", "--n-users", 40, "--n-train-users", 80, "--n-train-coupled", 60, "--n-train-uncoupled", 60,
         "--seed", 3, "--out", ds)
    _run("train", "--dataset", ds, "--out", wt, "--epochs", 300)
    _run("match", "--dataset", ds, "--weights", wt, "--algo", algo, "--prune", "log", "--trace",
         "--workers", workers, "--out", mt)
    return ds, wt, mt


def _tree_bytes(d: Path):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_cli_outputs_are_byte_identical_across_runs_and_workers(tmp_path, monkeypatch):
    # run records echo their input paths, so both runs use the same relative ones
    trees = []
    for name, workers in (("one", 1), ("two", 2)):
        (tmp_path / name).mkdir()
        monkeypatch.chdir(tmp_path / name)
        dirs = _pipeline(Path("."), workers=workers)
        trees.append([_tree_bytes(tmp_path / name / d) for d in dirs])
    assert trees[0] == trees[1]


def test_cli_eval_and_hash_guard(tmp_path, capsys):
    ds, wt, mt = _pipeline(tmp_path)
    _run("eval", "--dataset", ds, "--matches", mt / "matches.csv", "--marginals", mt / "marginals.csv",
         "--trace", mt / "trace.csv", "--similarity", mt / "similarity.csv", "--variance-threshold", 0.01,
         "--out", tmp_path / "e")
    rep, header = fio.read_json(tmp_path / "e" / "report.json")
    assert header["dataset"] == fio.read_dataset(ds).dataset_hash
    assert 0 <= rep["accuracy"] <= 1 and "sufficient_condition" in rep and len(rep["segments"]) == 2

    _run("synth", "--n-users", 40, "--n-train-users", 80, "--n-train-coupled", 60, "--n-train-uncoupled", 60,
         "--seed", 4, "--out", tmp_path / "other")
    capsys.readouterr()
    assert main(["eval", "--dataset", str(tmp_path / "other"), "--matches", str(mt / "matches.csv"),
                 "--out", str(tmp_path / "e2")]) == 2
    assert "FormatError" in capsys.readouterr().err


def test_cli_hungarian_on_tiny_dataset(tmp_path):
    ds = tmp_path / "ds"
    _run("synth", "--n-users", 2, "--n-train-users", 40, "--n-train-coupled", 20, "--n-train-uncoupled", 20,
         "--out", ds)
    _run("train", "--dataset", ds, "--out", tmp_path / "w", "--epochs", 100)
    _run("match", "--dataset", ds, "--weights", tmp_path / "w", "--algo", "hungarian", "--out", tmp_path / "m")
    ms, h = fio.read_matches(tmp_path / "m" / "matches.csv")
    assert len(ms) == 2
    run, _ = fio.read_json(tmp_path / "m" / "run.json")
    assert run["matches"] == 2


def test_cli_train_without_coupled_pairs_fails(tmp_path, capsys):
    ds = tmp_path / "ds"
    _run("synth", "--n-users", 10, "--n-train-users", 20, "--n-train-coupled", 0, "--out", ds)
    assert main(["train", "--dataset", str(ds), "--out", str(tmp_path / "w")]) == 2
    assert "DegenerateTraining" in capsys.readouterr().err


def test_cli_rejects_bad_synth_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"edge_overlap": 0.0}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "InvalidConfig" in capsys.readouterr().err


def test_cli_bench_scaling(tmp_path):
    _run("bench", "--kind", "scaling", "--sizes", "10,20", "--hungarian-sizes", "10,20,30", "--repeats", 1,
         "--out", tmp_path)
    bench, _ = fio.read_json(tmp_path / "bench.json")
    assert bench["slope_unavailable"] == {"bp": True, "hungarian": False}
