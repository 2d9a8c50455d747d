import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from profrisk.bp import BPConfig, PrunePolicy, build_factor_graph, extract_matching, run_bp
from profrisk.core import CouplingGroundTruth, Match, MatchSet, SimilarityMatrix
from profrisk.errors import EmptyGroundTruth, InvalidConfig, TraceUnavailable
from profrisk.evaluation import (
    aux_size_sweep,
    bench_scaling,
    epsilon_accuracy,
    fit_slope,
    pruning_comparison,
    row_variance,
    score,
    sufficient_condition_rate,
    variance_segmentation,
)
from profrisk.synth import synth_similarity_matrix

TRUTH5 = CouplingGroundTruth([(f"a{k}", f"t{k}") for k in range(5)])


def test_counting_example():
    ms = MatchSet((Match("a0", "t0", 0.9), Match("a1", "t1", 0.6), Match("a2", "t3", 0.8), Match("a3", "t2", 0.4)))
    rep = score(ms, TRUTH5, (0.0, 0.5, 0.85, 0.95))
    r = rep.row(0.0)
    assert (r.tp, r.fp, r.fn) == (2, 2, 3)
    assert r.precision == 0.5 and r.recall == 0.4
    assert rep.accuracy == 0.4 and rep.epsilon == 40.0
    assert (rep.row(0.5).tp, rep.row(0.5).fp) == (2, 1)
    assert (rep.row(0.85).tp, rep.row(0.85).fp) == (1, 0)
    top = rep.row(0.95)
    assert top.zero_denominator and top.precision == 1.0 and top.recall == 0.0


def test_identification_accuracy_counts_only_unshared_claims():
    ms = MatchSet((Match("a0", "t0", 0.9), Match("a0", "t1", 0.8), Match("a1", "t1", 0.7), Match("a2", "t2", 0.9)))
    rep = score(ms, TRUTH5, ())
    assert rep.accuracy == pytest.approx(3 / 5)
    # a0 and t1 are both claimed twice, so only (a2, t2) identifies uniquely
    assert rep.identification_accuracy == pytest.approx(1 / 5)


def test_attainable_recall():
    ms = MatchSet((Match("a0", "t0", 0.9),))
    rep = score(ms, TRUTH5, (0.0,), attainable=[("a0", "t0"), ("a1", "t1")])
    assert rep.row(0.0).attainable_recall == 0.5 and rep.row(0.0).recall == 0.2


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.floats(0, 1)), max_size=30))
@settings(max_examples=150, deadline=None)
def test_recall_falls_as_threshold_rises(raw):
    ms = MatchSet(tuple(Match(f"a{i}", f"t{j}", s) for i, j, s in raw))
    rep = score(ms, TRUTH5)
    rec = [r.recall for r in rep.rows]
    assert rec == sorted(rec, reverse=True)
    for r in rep.rows:
        assert 0.0 <= r.precision <= 1.0 and 0.0 <= r.recall <= 1.0
        assert r.tp + r.fn == len(TRUTH5)
    assert 0 <= rep.identification_accuracy <= rep.accuracy <= 1


def test_epsilon_and_guards():
    ms = MatchSet((Match("a0", "t0", 0.1), Match("a1", "t1", 0.1), Match("a2", "t2", 0.1)))
    assert epsilon_accuracy(ms, TRUTH5) == pytest.approx(60.0)
    with pytest.raises(EmptyGroundTruth):
        score(ms, CouplingGroundTruth([]))
    with pytest.raises(InvalidConfig):
        score(ms, TRUTH5, (0.5, 0.1))


def test_sufficient_condition_on_dominant_two_by_two():
    R = SimilarityMatrix.from_dense([[0.9, 0.1], [0.2, 0.8]])
    truth = CouplingGroundTruth([(R.aux_ids[0], R.target_ids[0]), (R.aux_ids[1], R.target_ids[1])])
    sc = sufficient_condition_rate(run_bp(build_factor_graph(R)), truth)
    assert sc.rate == 1.0 and sc.rate_correct == 1.0 and sc.n_correct == 2 and not sc.degenerate


def test_sufficient_condition_single_pair_is_degenerate():
    R = SimilarityMatrix.from_dense([[0.7]])
    truth = CouplingGroundTruth([(R.aux_ids[0], R.target_ids[0])])
    sc = sufficient_condition_rate(run_bp(build_factor_graph(R)), truth)
    assert sc.degenerate and sc.rate == 0.0


def test_sufficient_condition_needs_trace():
    with pytest.raises(TraceUnavailable):
        sufficient_condition_rate(None, TRUTH5)
    with pytest.raises(TraceUnavailable):
        sufficient_condition_rate({("a0", "t0"): (0.1, 0.2)}, TRUTH5)
    sc = sufficient_condition_rate({("a0", "t0"): (0.1, 0.2), ("a1", "t1"): (0.3, 0.3)}, TRUTH5,
                                   MatchSet((Match("a0", "t0", 1.0),)))
    assert sc.rate == 0.5 and sc.rate_correct == 1.0


def test_row_variance_examples():
    R = SimilarityMatrix.from_dense([[0.0, 0.5], [1.0, 0.5]])
    v = row_variance(R)
    assert v[R.target_ids[0]] == pytest.approx(0.25)
    assert v[R.target_ids[1]] == 0.0


def test_variance_segments_partition_targets(caplog):
    R, truth = synth_similarity_matrix(30, 30, seed=3)
    table = run_bp(build_factor_graph(R))
    ms = extract_matching(table, R)
    var = row_variance(R)
    thr = float(np.median(list(var.values())))
    lo = variance_segmentation(R, truth, ms, thr, "low")
    hi = variance_segmentation(R, truth, ms, thr, "high")
    at = {t for t in R.target_ids if var[t] == thr}
    assert set(lo.targets) | set(hi.targets) | at == set(R.target_ids)
    assert not set(lo.targets) & set(hi.targets)
    with caplog.at_level(logging.WARNING):
        empty = variance_segmentation(R, truth, ms, 10.0, "high")
    assert empty.empty and empty.report is None and "empty" in caplog.text
    with pytest.raises(InvalidConfig):
        variance_segmentation(R, truth, ms, thr, "middle")


def test_fit_slope():
    assert fit_slope([1, 2], [1, 4]) is None
    assert fit_slope([1, 2, 4, 8], [3, 12, 48, 192]) == pytest.approx(2.0)


def test_bench_scaling_shape():
    res = bench_scaling([(10, 10), (20, 20)], repeats=1, bp_iterations=2)
    assert len(res.rows) == 4
    assert res.slope_unavailable("bp") and res.slope_unavailable("hungarian")
    assert {r.size for r in res.rows if r.algorithm == "bp"} == {100, 400}
    with pytest.raises(InvalidConfig):
        bench_scaling([(5, 5)], algorithms=("simplex",))


def test_pruning_rows_and_sweep():
    R, truth = synth_similarity_matrix(40, 40, seed=4)
    rows = pruning_comparison(R, truth, repeats=1, timing_iterations=2)
    assert [r.policy for r in rows] == ["full", "sqrt", "log"]
    assert rows[0].variables == 1600 and rows[2].variables < rows[1].variables < 1600
    targets = R.target_ids[:10]
    sweep = aux_size_sweep(R, truth, targets, [10, 20, 40], PrunePolicy("log"), BPConfig())
    assert [r.n_aux for r in sweep] == [10, 20, 40]
    with pytest.raises(InvalidConfig):
        aux_size_sweep(R, truth, targets, [5])
