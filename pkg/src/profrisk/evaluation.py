"""Scoring matchings against ground truth, segment analyses, and runtime sweeps."""

from __future__ import annotations

import logging
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .assignment import hungarian
from .bp import BPConfig, MarginalTable, PrunePolicy, build_factor_graph, extract_matching, run_bp
from .core import CouplingGroundTruth, MatchSet, SimilarityMatrix
from .errors import EmptyGroundTruth, InvalidConfig, TraceUnavailable
from .synth import synth_similarity_matrix

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(10))


@dataclass(frozen=True)
class ScoreRow:
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    attainable_recall: float
    # no pair cleared the threshold; precision is reported as 1.0 by convention
    zero_denominator: bool


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[ScoreRow, ...]
    accuracy: float
    # pairs that are the only claim on both their users; equals accuracy for one-to-one output
    identification_accuracy: float
    n_truth: int
    n_attainable: int
    n_matches: int
    config: Mapping[str, object] = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return 100.0 * self.accuracy

    def row(self, threshold: float) -> ScoreRow:
        for r in self.rows:
            if r.threshold == threshold:
                return r
        raise KeyError(threshold)


def _check_truth(truth: CouplingGroundTruth):
    if len(truth) == 0:
        raise EmptyGroundTruth("ground truth has no coupled pairs")


def score(matches: MatchSet, truth: CouplingGroundTruth, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
          attainable: Iterable[tuple[str, str]] | None = None, config: Mapping | None = None) -> EvaluationReport:
    """Precision/recall per threshold plus threshold-free accuracy.

    ``attainable`` restricts the recall denominator to truth pairs that could
    still be found (for example those that survived pruning).
    """
    _check_truth(truth)
    if list(thresholds) != sorted(thresholds):
        raise InvalidConfig("thresholds must be sorted ascending")
    T = truth.pairs
    att = T if attainable is None else T & set(attainable)
    correct = np.array([(m.aux_id, m.target_id) in T for m in matches], dtype=bool)
    scores = np.array([m.score for m in matches], dtype=float)
    in_att = np.array([(m.aux_id, m.target_id) in att for m in matches], dtype=bool)

    rows = []
    for t in thresholds:
        keep = scores >= t
        tp = int(np.sum(keep & correct))
        fp = int(np.sum(keep & ~correct))
        tp_att = int(np.sum(keep & correct & in_att))
        zero = tp + fp == 0
        rows.append(ScoreRow(
            threshold=float(t), tp=tp, fp=fp, fn=len(T) - tp,
            precision=1.0 if zero else tp / (tp + fp),
            recall=tp / len(T),
            attainable_recall=tp_att / len(att) if att else 0.0,
            zero_denominator=zero,
        ))

    claims_a = Counter(m.aux_id for m in matches)
    claims_t = Counter(m.target_id for m in matches)
    unique = sum(1 for m, ok in zip(matches, correct) if ok and claims_a[m.aux_id] == 1 and claims_t[m.target_id] == 1)
    return EvaluationReport(
        rows=tuple(rows),
        accuracy=int(correct.sum()) / len(T),
        identification_accuracy=unique / len(T),
        n_truth=len(T),
        n_attainable=len(att),
        n_matches=len(matches),
        config=dict(config or {}),
    )


def epsilon_accuracy(matches: MatchSet, truth: CouplingGroundTruth) -> float:
    """The exact percentage of coupled pairs matched correctly (the run is ε-accurate for this ε)."""
    return score(matches, truth, ()).epsilon


# -------------------------------------------------------- sufficient condition


@dataclass(frozen=True)
class SufficientCondition:
    rate: float  # over truth pairs that survived pruning
    rate_correct: float  # over correctly matched truth pairs
    n_pairs: int
    n_correct: int
    # nothing to measure, or the second iteration left every measured marginal unchanged
    degenerate: bool


def _trace_by_pair(m: MarginalTable) -> dict[tuple[str, str], tuple[float, float]]:
    g = m.graph
    m1, m2 = m.trace[1], m.trace[2]
    return {(g.aux_ids[i], g.target_ids[j]): (float(a), float(b))
            for i, j, a, b in zip(g.var_aux, g.var_target, m1, m2)}


def sufficient_condition_rate(m: MarginalTable | Mapping[tuple[str, str], Sequence[float]],
                              truth: CouplingGroundTruth, matches: MatchSet | None = None) -> SufficientCondition:
    """Share of coupled pairs whose iteration-2 marginal strictly exceeds the iteration-1 marginal.

    ``m`` is a marginal table or a loaded trace mapping each surviving pair to
    its (iteration 1, iteration 2, ...) marginals. "Correctly matched" is
    judged against ``matches``, or the table's own one-to-one extraction.
    """
    if m is None:
        raise TraceUnavailable("no marginal trace given")
    if isinstance(m, MarginalTable):
        if 1 not in m.trace or 2 not in m.trace:
            raise TraceUnavailable("marginal trace lacks iterations 1 and 2")
        if matches is None:
            matches = extract_matching(m)
        trace = _trace_by_pair(m)
    else:
        if matches is None:
            raise TraceUnavailable("a loaded trace needs the matching it came with")
        trace = m
    surv = [trace[p] for p in sorted(truth.pairs) if p in trace]
    corr = [trace[p] for p in sorted(truth.pairs & matches.pairs()) if p in trace]
    up_s = [t[1] > t[0] for t in surv]
    up_c = [t[1] > t[0] for t in corr]
    return SufficientCondition(
        rate=sum(up_s) / len(surv) if surv else 0.0,
        rate_correct=sum(up_c) / len(corr) if corr else 0.0,
        n_pairs=len(surv),
        n_correct=len(corr),
        degenerate=not surv or all(t[1] == t[0] for t in surv),
    )


# -------------------------------------------------------- variance segments


def row_variance(R: SimilarityMatrix) -> dict[str, float]:
    """Population variance of each target's similarities against every auxiliary user."""
    v = np.var(R.combined, axis=0)
    return {t: float(x) for t, x in zip(R.target_ids, v)}


@dataclass(frozen=True)
class Segment:
    mode: str
    variance_threshold: float
    targets: tuple[str, ...]
    report: EvaluationReport | None
    # no target fell in the segment, or none of them has a coupled counterpart
    empty: bool


def variance_segmentation(R: SimilarityMatrix, truth: CouplingGroundTruth, matches: MatchSet,
                          variance_threshold: float, mode: str,
                          thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> Segment:
    """Score only targets whose row variance is strictly above (high) or below (low) the threshold."""
    _check_truth(truth)
    if mode not in ("low", "high"):
        raise InvalidConfig(f"unknown segment mode {mode!r}")
    var = row_variance(R)
    if mode == "high":
        sel = tuple(t for t in R.target_ids if var[t] > variance_threshold)
    else:
        sel = tuple(t for t in R.target_ids if var[t] < variance_threshold)
    sub_truth = truth.restrict(target_ids=sel)
    if not sel or len(sub_truth) == 0:
        log.warning("variance segment %s@%g is empty", mode, variance_threshold)
        return Segment(mode, variance_threshold, sel, None, True)
    report = score(matches.restrict_targets(sel), sub_truth, thresholds)
    return Segment(mode, variance_threshold, sel, report, False)


# ----------------------------------------------------------- size sweeps


def fit_slope(x: Sequence[float], y: Sequence[float]) -> float | None:
    """Least-squares slope of log y against log x; None with fewer than 3 points."""
    if len(x) < 3:
        return None
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    n_aux: int
    m_target: int
    size: int  # variable nodes for BP, max(N, M) for Hungarian
    seconds: float


@dataclass(frozen=True)
class BenchResult:
    rows: tuple[BenchRow, ...]
    slopes: Mapping[str, float | None]

    def slope_unavailable(self, algorithm: str) -> bool:
        return self.slopes.get(algorithm) is None


def _median_time(fn: Callable[[], object], repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def beta_generator(n: int, m: int, seed: int) -> SimilarityMatrix:
    return synth_similarity_matrix(n, m, seed=seed)[0]


def bench_scaling(sizes: Sequence[tuple[int, int]], algorithms: Sequence[str] = ("bp", "hungarian"),
                  generator: Callable[[int, int, int], SimilarityMatrix] = beta_generator,
                  repeats: int = 3, bp_iterations: int = 10, seed: int = 0,
                  policy: PrunePolicy = PrunePolicy()) -> BenchResult:
    """Median wall-clock per algorithm and size, with fitted log-log slopes.

    BP runs a fixed number of iterations (tolerance 0) so every size does the
    same amount of message passing; the timed section is message passing only.
    """
    for a in algorithms:
        if a not in ("bp", "hungarian"):
            raise InvalidConfig(f"unknown algorithm {a!r}")
    rows = []
    cfg = BPConfig(max_iters=bp_iterations, tol=0.0, workers=1)
    for n, m in sizes:
        R = generator(n, m, seed)
        for a in algorithms:
            if a == "bp":
                g = build_factor_graph(R, policy)
                secs = _median_time(lambda: run_bp(g, cfg), repeats)
                rows.append(BenchRow(a, n, m, g.n_variables, secs))
            else:
                secs = _median_time(lambda: hungarian(R), repeats)
                rows.append(BenchRow(a, n, m, max(n, m), secs))
    slopes = {}
    for a in algorithms:
        sel = [r for r in rows if r.algorithm == a]
        slopes[a] = fit_slope([r.size for r in sel], [r.seconds for r in sel])
    return BenchResult(tuple(rows), slopes)


@dataclass(frozen=True)
class PruningRow:
    policy: str
    variables: int
    mean_target_degree: float
    precision: float
    recall: float
    accuracy: float
    iterations: int
    converged: bool
    seconds_per_iteration: float


def pruning_comparison(R: SimilarityMatrix, truth: CouplingGroundTruth,
                       policies: Sequence[PrunePolicy] = (PrunePolicy("full"), PrunePolicy("sqrt"), PrunePolicy("log")),
                       config: BPConfig = BPConfig(), threshold: float = 0.5, timing_iterations: int = 10,
                       repeats: int = 3) -> tuple[PruningRow, ...]:
    """Precision/recall/accuracy and per-iteration cost for each candidate-pruning regime."""
    _check_truth(truth)
    out = []
    fixed = BPConfig(max_iters=timing_iterations, tol=0.0, damping=config.damping,
                     normalize=config.normalize, workers=config.workers)
    for p in policies:
        g = build_factor_graph(R, p)
        table = run_bp(g, config)
        ms = extract_matching(table, R)
        rep = score(ms, truth, (threshold,))
        per_iter = _median_time(lambda: run_bp(g, fixed), repeats) / timing_iterations
        out.append(PruningRow(
            policy=str(p),
            variables=g.n_variables,
            mean_target_degree=float(np.mean(g.target_degree)),
            precision=rep.rows[0].precision,
            recall=rep.rows[0].recall,
            accuracy=rep.accuracy,
            iterations=table.iterations_run,
            converged=table.converged,
            seconds_per_iteration=per_iter,
        ))
    return tuple(out)


@dataclass(frozen=True)
class SweepRow:
    n_aux: int
    m_target: int
    precision: float
    recall: float
    accuracy: float


def aux_size_sweep(R: SimilarityMatrix, truth: CouplingGroundTruth, target_ids: Sequence[str],
                   aux_sizes: Sequence[int], policy: PrunePolicy = PrunePolicy("log"),
                   config: BPConfig = BPConfig(), threshold: float = 0.5) -> tuple[SweepRow, ...]:
    """Hold the target set fixed and grow the auxiliary pool.

    The pool always starts with the targets' coupled counterparts, followed by
    the remaining auxiliary users in id order, so every size nests the smaller.
    """
    sub_truth = truth.restrict(target_ids=target_ids)
    _check_truth(sub_truth)
    partners = sorted(a for a, _ in sub_truth.pairs)
    rest = [a for a in R.aux_ids if a not in set(partners)]
    pool = partners + rest
    out = []
    for n in aux_sizes:
        if n < len(partners) or n > len(pool):
            raise InvalidConfig(f"aux size {n} outside [{len(partners)}, {len(pool)}]")
        sub = R.subset(aux_ids=sorted(pool[:n]), target_ids=sorted(target_ids))
        table = run_bp(build_factor_graph(sub, policy), config)
        ms = extract_matching(table, sub)
        t = sub_truth.restrict(aux_ids=sub.aux_ids)
        rep = score(ms, t, (threshold,))
        out.append(SweepRow(n, len(target_ids), rep.rows[0].precision, rep.rows[0].recall, rep.accuracy))
    return tuple(out)
