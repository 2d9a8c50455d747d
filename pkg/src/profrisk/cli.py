"""Command-line entry point: synth, train, match, eval, bench."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .assignment import hungarian, threshold_classifier
from .bp import BPConfig, PrunePolicy, bp_match
from .errors import FormatError, InvalidConfig, ProfRiskError
from .evaluation import (
    DEFAULT_THRESHOLDS,
    aux_size_sweep,
    bench_scaling,
    pruning_comparison,
    row_variance,
    score,
    sufficient_condition_rate,
    variance_segmentation,
)
from .synth import SynthConfig, synthesize_dataset
from .weights import LogisticConfig, eval_similarity, fit_logistic, prepare_training

log = logging.getLogger("profrisk")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _echo(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out", "workers", "verbose")}


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _require_same_dataset(expected: str, header: dict, what: str):
    got = header.get("dataset", "-")
    if got not in ("-", expected):
        raise FormatError(f"{what} was produced from dataset {got}, not {expected}")


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    fields = {}
    if args.config:
        fields.update(json.loads(Path(args.config).read_text()))
    for name in ("n_users", "n_train_users", "graph_model", "graph_param", "vertex_overlap", "edge_overlap",
                 "name_typo_rate", "location_jitter_km", "activity_offset_s", "gender_flip_rate",
                 "n_train_coupled", "n_train_uncoupled"):
        v = getattr(args, name)
        if v is not None:
            fields[name] = v
    if "channel_betas" in fields:
        fields["channel_betas"] = {k: (tuple(c), tuple(u)) for k, (c, u) in fields["channel_betas"].items()}
    fields["seed"] = args.seed
    try:
        cfg = SynthConfig(**fields)
    except TypeError as e:
        raise InvalidConfig(str(e)) from None
    ds = synthesize_dataset(cfg)
    out = _out(args)
    chash = fio.config_hash(cfg)
    digest = fio.write_dataset(ds, out, chash)
    fio.write_json({"command": "synth", "synth_config": cfg, "dataset": digest}, out / "synth_config.json",
                   "config", chash, digest)
    print(f"wrote dataset {digest}: {len(ds.aux)} aux, {len(ds.target)} target, {len(ds.truth)} coupled eval pairs")
    return 0


def cmd_train(args) -> int:
    ds = fio.read_dataset(args.dataset)
    lcfg = LogisticConfig(learning_rate=args.lr, epochs=args.epochs, l2=args.l2, seed=args.seed)
    data, stats = prepare_training(ds, args.n_coupled, args.n_uncoupled, workers=args.workers)
    w = fit_logistic(data, lcfg)
    out = _out(args)
    chash = fio.config_hash({"command": "train", "logistic": lcfg, "n_coupled": args.n_coupled,
                             "n_uncoupled": args.n_uncoupled})
    fio.write_weights(w, stats, out, chash, ds.dataset_hash)
    diag = {
        "command": "train",
        "config": _echo(args),
        "channels": list(data.channels),
        "rows": {"coupled": int(data.y.sum()), "uncoupled": int(len(data.y) - data.y.sum())},
        "loss_first": w.loss_history[0],
        "loss_final": w.loss_history[-1],
        "loss_monotone": bool(np.all(np.diff(w.loss_history) <= 1e-12)),
    }
    fio.write_json(diag, out / "training.json", "training", chash, ds.dataset_hash)
    print("weights: " + ", ".join(f"{c}={w.weights[c]:.3f}" for c in w.channels))
    return 0


def cmd_match(args) -> int:
    ds = fio.read_dataset(args.dataset)
    w, stats, wheader = fio.read_weights(args.weights)
    _require_same_dataset(ds.dataset_hash, wheader, "weights")
    policy = PrunePolicy.parse(args.prune)
    bcfg = BPConfig(max_iters=args.max_iters, tol=args.tol, damping=args.damping, workers=args.workers)
    threshold = args.threshold
    if threshold is None:
        threshold = {"bp": 0.0, "hungarian": -math.inf, "threshold": 0.5}[args.algo]
    params = {"command": "match", "algo": args.algo, "prune": str(policy), "threshold": threshold,
              "score": args.score, "weights": wheader.get("config"),
              # worker count never changes results, so it stays out of the hash
              "bp": dataclasses.replace(bcfg, workers=1) if args.algo == "bp" else None}
    chash = fio.config_hash(params)
    out = _out(args)
    R = eval_similarity(ds, w, stats, workers=args.workers)
    fio.write_similarity(R, out / "similarity.csv", chash, ds.dataset_hash)
    run = {"command": "match", "config": {**_echo(args), "threshold": threshold}, "n_aux": R.n_aux,
           "m_target": R.m_target}
    if args.algo == "bp":
        ms, table = bp_match(R, policy, bcfg, threshold, args.score)
        fio.write_marginals(table, out / "marginals.csv", chash, ds.dataset_hash)
        if args.trace:
            fio.write_trace(table, out / "trace.csv", chash, ds.dataset_hash)
        fio.write_matches(ms, out / "matches.csv", chash, ds.dataset_hash, algo="bp")
        run.update({
            "variables": table.graph.n_variables,
            "iterations": table.iterations_run,
            "converged": table.converged,
            "marginals_normalized_by": table.normalized_by,
            "damping_used": table.damping > 0,
            "unmatchable_targets": list(table.unmatchable_targets),
        })
    elif args.algo == "hungarian":
        a = hungarian(R)
        ms = a.as_matchset(R, threshold)
        fio.write_matches(ms, out / "matches.csv", chash, ds.dataset_hash, total=a.total_similarity,
                          algo="hungarian")
        run["total_similarity"] = a.total_similarity
    else:
        ms = threshold_classifier(R, threshold)
        fio.write_matches(ms, out / "matches.csv", chash, ds.dataset_hash, algo="threshold")
    run["matches"] = len(ms)
    fio.write_json(run, out / "run.json", "run", chash, ds.dataset_hash)
    print(f"{args.algo}: {len(ms)} matches")
    return 0


def cmd_eval(args) -> int:
    ds = fio.read_dataset(args.dataset)
    ms, mheader = fio.read_matches(args.matches)
    _require_same_dataset(ds.dataset_hash, mheader, "matches")
    truth = ds.truth
    thresholds = _floats(args.thresholds) if args.thresholds else list(DEFAULT_THRESHOLDS)
    attainable = None
    if args.marginals:
        rows, h = fio.read_marginals(args.marginals)
        _require_same_dataset(ds.dataset_hash, h, "marginals")
        attainable = {(a, t) for a, t, _, _ in rows}
    rep = score(ms, truth, sorted(thresholds), attainable)
    chash = fio.config_hash({"command": "eval", "thresholds": sorted(thresholds), "matches": mheader.get("config"),
                             "variance_thresholds": args.variance_threshold or []})
    report = {
        "command": "eval",
        "config": _echo(args),
        "matches_config": mheader.get("config"),
        "n_truth": rep.n_truth,
        "n_attainable": rep.n_attainable,
        "n_matches": rep.n_matches,
        "accuracy": rep.accuracy,
        "identification_accuracy": rep.identification_accuracy,
        "epsilon": rep.epsilon,
        "rows": [dataclasses.asdict(r) for r in rep.rows],
    }
    if args.trace:
        tr, h = fio.read_trace(args.trace)
        _require_same_dataset(ds.dataset_hash, h, "trace")
        report["sufficient_condition"] = dataclasses.asdict(sufficient_condition_rate(tr, truth, ms))
    out = _out(args)
    segments = []
    if args.similarity:
        R, h = fio.read_similarity(args.similarity)
        _require_same_dataset(ds.dataset_hash, h, "similarity")
        var = row_variance(R)
        report["per_target_variance"] = var
        for vt in args.variance_threshold or []:
            for mode in ("low", "high"):
                seg = variance_segmentation(R, truth, ms, vt, mode, sorted(thresholds))
                segments.append((vt, mode, len(seg.targets), seg.empty,
                                 seg.report.epsilon if seg.report else float("nan")))
        report["segments"] = [dict(zip(("variance_threshold", "mode", "targets", "empty", "epsilon"), s))
                              for s in segments]
    fio.write_json(report, out / "report.json", "report", chash, ds.dataset_hash)
    fio.write_csv(out / "scores.csv", "scores",
                  ("threshold", "tp", "fp", "fn", "precision", "recall", "attainable_recall", "zero_denominator"),
                  ((r.threshold, r.tp, r.fp, r.fn, r.precision, r.recall, r.attainable_recall,
                    int(r.zero_denominator)) for r in rep.rows), chash, ds.dataset_hash)
    if segments:
        fio.write_csv(out / "segments.csv", "segments", ("variance_threshold", "mode", "targets", "empty", "epsilon"),
                      ((vt, m, n, int(e), eps) for vt, m, n, e, eps in segments), chash, ds.dataset_hash)
    print(f"accuracy {rep.accuracy:.4f} (epsilon {rep.epsilon:.1f}) over {rep.n_truth} coupled pairs")
    return 0


def cmd_bench(args) -> int:
    out = _out(args)
    chash = fio.config_hash({k: v for k, v in _echo(args).items() if k != "workers"})
    if args.kind == "scaling":
        bp_sizes = [(n, n) for n in _ints(args.sizes)]
        h_sizes = [(n, n) for n in _ints(args.hungarian_sizes)]
        bp = bench_scaling(bp_sizes, ("bp",), repeats=args.repeats, bp_iterations=args.bp_iterations, seed=args.seed)
        hu = bench_scaling(h_sizes, ("hungarian",), repeats=args.repeats, seed=args.seed)
        rows = list(bp.rows) + list(hu.rows)
        fio.write_csv(out / "scaling.csv", "scaling", ("algorithm", "n_aux", "m_target", "size", "seconds"),
                      ((r.algorithm, r.n_aux, r.m_target, r.size, r.seconds) for r in rows), chash, None)
        slopes = {"bp": bp.slopes["bp"], "hungarian": hu.slopes["hungarian"]}
        fio.write_json({"command": "bench", "config": _echo(args), "slopes": slopes,
                        "slope_unavailable": {k: v is None for k, v in slopes.items()}},
                       out / "bench.json", "bench", chash, None)
        print("slopes: " + ", ".join(f"{k}={'n/a' if v is None else f'{v:.3f}'}" for k, v in slopes.items()))
        return 0

    if not args.dataset or not args.weights:
        raise InvalidConfig(f"bench --kind {args.kind} needs --dataset and --weights")
    ds = fio.read_dataset(args.dataset)
    w, stats, wheader = fio.read_weights(args.weights)
    _require_same_dataset(ds.dataset_hash, wheader, "weights")
    bcfg = BPConfig(max_iters=args.max_iters, tol=args.tol, damping=args.damping, workers=args.workers)
    if args.kind == "pruning":
        R = eval_similarity(ds, w, stats, workers=args.workers)
        policies = [PrunePolicy.parse(p) for p in args.policies.split(",")]
        rows = pruning_comparison(R, ds.truth, policies, bcfg, args.threshold, repeats=args.repeats)
        fio.write_csv(out / "pruning.csv", "pruning",
                      ("policy", "variables", "mean_target_degree", "precision", "recall", "accuracy", "iterations",
                       "converged", "seconds_per_iteration"),
                      ((r.policy, r.variables, r.mean_target_degree, r.precision, r.recall, r.accuracy, r.iterations,
                        int(r.converged), r.seconds_per_iteration) for r in rows), chash, ds.dataset_hash)
        for r in rows:
            print(f"{r.policy:>8}  precision {r.precision:.3f}  recall {r.recall:.3f}  accuracy {100 * r.accuracy:.1f}%")
        return 0

    # aux-sweep
    targets = sorted(t for _, t in ds.truth.pairs)[:args.n_targets]
    R = eval_similarity(ds, w, stats, target_ids=targets, workers=args.workers)
    sizes = _ints(args.aux_sizes)
    rows = aux_size_sweep(R, ds.truth, targets, sizes, PrunePolicy.parse(args.prune), bcfg, args.threshold)
    fio.write_csv(out / "aux_sweep.csv", "aux_sweep", ("n_aux", "m_target", "precision", "recall", "accuracy"),
                  ((r.n_aux, r.m_target, r.precision, r.recall, r.accuracy) for r in rows), chash, ds.dataset_hash)
    for r in rows:
        print(f"N={r.n_aux:>5}  precision {r.precision:.3f}  recall {r.recall:.3f}")
    return 0


# ------------------------------------------------------------------ parser


def _bp_flags(p):
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--damping", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="profrisk", description="Cross-network profile matching risk toolkit")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default=".")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic coupled dataset")
    p.add_argument("--config", help="JSON file with generator settings")
    p.add_argument("--n-users", type=int)
    p.add_argument("--n-train-users", type=int)
    p.add_argument("--graph-model", choices=("preferential_attachment", "erdos_renyi"))
    p.add_argument("--graph-param", type=float)
    p.add_argument("--vertex-overlap", type=float)
    p.add_argument("--edge-overlap", type=float)
    p.add_argument("--name-typo-rate", type=float)
    p.add_argument("--location-jitter-km", type=float)
    p.add_argument("--activity-offset-s", type=float)
    p.add_argument("--gender-flip-rate", type=float)
    p.add_argument("--n-train-coupled", type=int)
    p.add_argument("--n-train-uncoupled", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="learn attribute weights")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n-coupled", type=int, default=1500)
    p.add_argument("--n-uncoupled", type=int, default=1500)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("match", parents=[common], help="match evaluation users")
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights", required=True, help="directory holding weights.csv and channel_stats.csv")
    p.add_argument("--algo", choices=("bp", "hungarian", "threshold"), default="bp")
    p.add_argument("--prune", default="full", help="full, sqrt, log or topk:K")
    p.add_argument("--threshold", type=float)
    p.add_argument("--score", choices=("similarity", "marginal"), default="similarity")
    p.add_argument("--trace", action="store_true", help="also dump iteration 1, 2 and final marginals")
    _bp_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", parents=[common], help="score a matching against ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--matches", required=True)
    p.add_argument("--marginals")
    p.add_argument("--trace")
    p.add_argument("--similarity")
    p.add_argument("--thresholds", help="comma-separated, default 0,0.1,...,0.9")
    p.add_argument("--variance-threshold", type=float, action="append")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="runtime and accuracy sweeps")
    p.add_argument("--kind", choices=("scaling", "pruning", "aux-sweep"), default="scaling")
    p.add_argument("--sizes", default="100,200,300,400,500")
    p.add_argument("--hungarian-sizes", default="100,200,300,400,500,600")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--bp-iterations", type=int, default=10)
    p.add_argument("--dataset")
    p.add_argument("--weights")
    p.add_argument("--policies", default="full,sqrt,log")
    p.add_argument("--prune", default="log")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--n-targets", type=int, default=100)
    p.add_argument("--aux-sizes", default="100,250,500,750,1000")
    _bp_flags(p)
    p.set_defaults(func=cmd_bench)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ProfRiskError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
