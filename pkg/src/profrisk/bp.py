"""Belief propagation over the bipartite profile-pair factor graph.

Every candidate pair (i, j) is a binary variable node connected to exactly
two factor nodes: the auxiliary user's factor f_i and the target user's
factor g_j. A factor's message to one of its variables is

    S(i, j) * prod over the factor's other variables d of (1 - mu_d)

normalised so that the factor's outgoing messages sum to one. A variable
forwards to each factor whatever it heard from the opposite factor in the
previous iteration. Updates are synchronous (Jacobi).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .core import Match, MatchSet, SimilarityMatrix
from .errors import EmptyInput, InvalidConfig, UnknownUser

# floor on (1 - mu) so a saturated neighbour cannot zero a whole factor
ONE_MINUS_FLOOR = 1e-12


@dataclass(frozen=True)
class PrunePolicy:
    kind: str = "full"
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("full", "sqrt", "log", "topk"):
            raise InvalidConfig(f"unknown prune policy {self.kind!r}")
        if self.kind == "topk" and (self.k is None or self.k < 1):
            raise InvalidConfig("topk needs k >= 1")

    @classmethod
    def parse(cls, text: str) -> "PrunePolicy":
        text = text.strip().lower()
        if text.startswith("topk:"):
            return cls("topk", int(text.split(":", 1)[1]))
        return cls(text)

    def budget(self, degree: int) -> int | None:
        """Candidates kept per factor whose unpruned degree is ``degree``; None keeps all."""
        if self.kind == "full":
            return None
        if self.kind == "sqrt":
            b = math.ceil(math.sqrt(degree))
        elif self.kind == "log":
            b = math.ceil(math.log2(degree)) if degree > 1 else 1
        else:
            b = self.k
        return max(1, b)

    def __str__(self) -> str:
        return f"topk:{self.k}" if self.kind == "topk" else self.kind


@dataclass(frozen=True)
class FactorGraph:
    """Variable nodes are stored sorted by (aux index, target index)."""

    aux_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    var_aux: np.ndarray
    var_target: np.ndarray
    similarity: np.ndarray
    aux_offsets: np.ndarray
    target_order: np.ndarray
    target_offsets: np.ndarray
    policy: PrunePolicy = PrunePolicy()

    @property
    def n_variables(self) -> int:
        return len(self.var_aux)

    @property
    def aux_degree(self) -> np.ndarray:
        return np.diff(self.aux_offsets)

    @property
    def target_degree(self) -> np.ndarray:
        return np.diff(self.target_offsets)

    def sigma_f(self, i: int) -> np.ndarray:
        """Variable indices attached to auxiliary factor i."""
        return np.arange(self.aux_offsets[i], self.aux_offsets[i + 1])

    def sigma_g(self, j: int) -> np.ndarray:
        """Variable indices attached to target factor j."""
        return self.target_order[self.target_offsets[j]:self.target_offsets[j + 1]]


def _offsets(sorted_groups: np.ndarray, n_groups: int) -> np.ndarray:
    off = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(np.bincount(sorted_groups, minlength=n_groups), out=off[1:])
    return off


def _top_per_group(groups: np.ndarray, other: np.ndarray, sims: np.ndarray, budget: int) -> np.ndarray:
    """Boolean keep-mask: top ``budget`` similarities within each group, ties to the lower ``other`` index."""
    order = np.lexsort((other, -sims, groups))
    g_sorted = groups[order]
    starts = np.searchsorted(g_sorted, g_sorted, side="left")
    rank = np.arange(len(order)) - starts
    keep = np.zeros(len(order), bool)
    keep[order[rank < budget]] = True
    return keep


def build_factor_graph(R: SimilarityMatrix, policy: PrunePolicy = PrunePolicy()) -> FactorGraph:
    n, m = R.n_aux, R.m_target
    if n == 0 or m == 0 or not R.mask.any():
        raise EmptyInput("similarity matrix is empty")
    rows, cols = np.nonzero(R.mask)  # row-major, i.e. sorted by (aux, target)
    sims = R.combined[rows, cols]

    if policy.kind != "full":
        keep = _top_per_group(rows, cols, sims, policy.budget(m))
        keep |= _top_per_group(cols, rows, sims, policy.budget(n))
        rows, cols, sims = rows[keep], cols[keep], sims[keep]

    target_order = np.lexsort((rows, cols))
    graph = FactorGraph(
        aux_ids=R.aux_ids,
        target_ids=R.target_ids,
        var_aux=rows.astype(np.int64),
        var_target=cols.astype(np.int64),
        similarity=sims.astype(float),
        aux_offsets=_offsets(rows, n),
        target_order=target_order.astype(np.int64),
        target_offsets=_offsets(cols[target_order], m),
        policy=policy,
    )
    for a in (graph.var_aux, graph.var_target, graph.similarity, graph.aux_offsets,
              graph.target_order, graph.target_offsets):
        a.setflags(write=False)
    return graph


@dataclass(frozen=True)
class BPConfig:
    max_iters: int = 200
    tol: float = 1e-6
    damping: float = 0.0
    # which factor family marginals are normalised over: "auto" picks the smaller side
    normalize: str = "auto"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.damping <= 0.9:
            raise InvalidConfig("damping must be in [0, 0.9]")
        if self.normalize not in ("auto", "target", "aux"):
            raise InvalidConfig(f"unknown marginal normalisation {self.normalize!r}")
        if self.max_iters < 1:
            raise InvalidConfig("max_iters must be >= 1")


@dataclass
class MessageState:
    """Messages in variable order. mu_* flow variable -> factor, lam/beta flow factor -> variable."""

    mu_to_aux: np.ndarray
    mu_to_target: np.ndarray
    lam: np.ndarray
    beta: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class MarginalTable:
    graph: FactorGraph
    marginal: np.ndarray
    trace: Mapping[int, np.ndarray]
    converged: bool
    iterations_run: int
    history: tuple[float, ...] = ()
    normalized_by: str = "target"
    damping: float = 0.0
    updates_per_iteration: int = 0
    unmatchable_targets: tuple[str, ...] = field(default=())

    def dense(self, which: np.ndarray | None = None) -> np.ndarray:
        g = self.graph
        out = np.full((len(g.aux_ids), len(g.target_ids)), np.nan)
        out[g.var_aux, g.var_target] = self.marginal if which is None else which
        return out

    def lookup(self, aux_id: str, target_id: str) -> float:
        g = self.graph
        i = g.aux_ids.index(aux_id)
        j = g.target_ids.index(target_id)
        lo, hi = g.aux_offsets[i], g.aux_offsets[i + 1]
        pos = lo + np.searchsorted(g.var_target[lo:hi], j)
        if pos < hi and g.var_target[pos] == j:
            return float(self.marginal[pos])
        raise KeyError((aux_id, target_id))


def _segments(offsets: np.ndarray, workers: int) -> list[tuple[int, int]]:
    """Split groups into at most ``workers`` contiguous runs, as (first group, end group)."""
    n = len(offsets) - 1
    if workers <= 1 or n < 2 * workers:
        return [(0, n)]
    b = np.linspace(0, n, workers + 1).astype(int)
    return [(b[k], b[k + 1]) for k in range(workers)]


def _factor_messages_chunk(mu, log_s, offsets, out, g0, g1):
    lo, hi = offsets[g0], offsets[g1]
    if hi == lo:
        return
    local = offsets[g0:g1 + 1] - lo
    deg = np.diff(local)
    nonempty = deg > 0
    starts = local[:-1][nonempty]
    group = np.repeat(np.arange(len(starts)), deg[nonempty])

    log_free = np.log(np.maximum(1.0 - mu[lo:hi], ONE_MINUS_FLOOR))
    total = np.add.reduceat(log_free, starts)
    a = log_s[lo:hi] + total[group] - log_free
    peak = np.maximum.reduceat(a, starts)
    dead = np.isneginf(peak)  # every similarity in the factor is zero
    e = np.exp(a - np.where(dead, 0.0, peak)[group])
    z = np.add.reduceat(e, starts)
    res = e / np.where(z > 0, z, 1.0)[group]
    if dead.any():
        d = dead[group]
        res[d] = 1.0 / deg[nonempty][group[d]]
    out[lo:hi] = res


def _factor_messages(mu, log_s, offsets, workers):
    out = np.empty_like(mu)
    segs = _segments(offsets, workers)
    if len(segs) == 1:
        _factor_messages_chunk(mu, log_s, offsets, out, *segs[0])
    else:
        with ThreadPoolExecutor(len(segs)) as ex:
            list(ex.map(lambda s: _factor_messages_chunk(mu, log_s, offsets, out, *s), segs))
    return out


def _normalize_groups(x, offsets):
    out = np.empty_like(x)
    deg = np.diff(offsets)
    nonempty = deg > 0
    starts = offsets[:-1][nonempty]
    if len(starts):
        z = np.add.reduceat(x, starts)
        group = np.repeat(np.arange(len(starts)), deg[nonempty])
        out[:] = x / np.where(z > 0, z, 1.0)[group]
    return out


def run_bp(g: FactorGraph, config: BPConfig = BPConfig(),
           callback: Callable[[MessageState], None] | None = None) -> MarginalTable:
    with np.errstate(divide="ignore"):
        log_s = np.log(g.similarity)
    order = g.target_order
    inv_order = np.empty_like(order)
    inv_order[order] = np.arange(len(order))
    log_s_t = log_s[order]

    side = config.normalize
    if side == "auto":
        side = "aux" if len(g.aux_ids) < len(g.target_ids) else "target"

    def marginals(lam, beta):
        raw = lam * beta
        if side == "aux":
            return _normalize_groups(raw, g.aux_offsets)
        return _normalize_groups(raw[order], g.target_offsets)[inv_order]

    # uniform opening messages: 1 / degree of the receiving factor
    state = MessageState(
        mu_to_aux=1.0 / g.aux_degree[g.var_aux],
        mu_to_target=1.0 / g.target_degree[g.var_target],
        lam=np.zeros(g.n_variables),
        beta=np.zeros(g.n_variables),
    )
    trace: dict[int, np.ndarray] = {}
    history: list[float] = []
    prev = None
    converged = False
    v = 0
    for v in range(1, config.max_iters + 1):
        if v > 1:
            state.mu_to_aux = state.beta
            state.mu_to_target = state.lam
        lam = _factor_messages(state.mu_to_aux, log_s, g.aux_offsets, config.workers)
        beta = _factor_messages(state.mu_to_target[order], log_s_t, g.target_offsets, config.workers)[inv_order]
        if v > 1 and config.damping > 0:
            lam = (1 - config.damping) * lam + config.damping * state.lam
            beta = (1 - config.damping) * beta + config.damping * state.beta
        state.lam, state.beta, state.iteration = lam, beta, v
        if callback is not None:
            callback(state)

        marg = marginals(lam, beta)
        if v <= 2:
            trace[v] = marg
        if prev is not None:
            change = float(np.max(np.abs(marg - prev))) if len(marg) else 0.0
            history.append(change)
            if change < config.tol:
                converged = True
                prev = marg
                break
        prev = marg

    trace["final"] = prev
    unmatchable = tuple(t for t, d in zip(g.target_ids, g.target_degree) if d == 0)
    return MarginalTable(
        graph=g,
        marginal=prev,
        trace=trace,
        converged=converged,
        iterations_run=v,
        history=tuple(history),
        normalized_by=side,
        damping=config.damping,
        updates_per_iteration=4 * g.n_variables,
        unmatchable_targets=unmatchable,
    )


def _ranked(m: MarginalTable) -> np.ndarray:
    """Variable indices by marginal desc, then similarity desc, then (aux, target) index."""
    g = m.graph
    return np.lexsort((np.arange(g.n_variables), -g.similarity, -m.marginal))


def extract_matching(m: MarginalTable, R: SimilarityMatrix | None = None, threshold: float = 0.0,
                     mode: str = "one_to_one", score: str = "similarity") -> MatchSet:
    """Turn marginals into declared matches.

    ``score`` picks the value attached to each match and compared against
    ``threshold``: the pair's similarity or its marginal.
    """
    g = m.graph
    if score == "similarity":
        if R is not None:
            values = R.combined[g.var_aux, g.var_target]
        else:
            values = g.similarity
    elif score == "marginal":
        values = m.marginal
    else:
        raise InvalidConfig(f"unknown score {score!r}")

    out = []
    if mode == "one_to_one":
        used_a = np.zeros(len(g.aux_ids), bool)
        used_t = np.zeros(len(g.target_ids), bool)
        limit = min(len(g.aux_ids), len(g.target_ids))
        for k in _ranked(m):
            i, j = g.var_aux[k], g.var_target[k]
            if used_a[i] or used_t[j] or values[k] < threshold:
                continue
            used_a[i] = used_t[j] = True
            out.append((i, j, float(values[k])))
            if len(out) == limit:
                break
    elif mode == "per_target_argmax":
        seen = np.zeros(len(g.target_ids), bool)
        for k in _ranked(m):
            j = g.var_target[k]
            if seen[j]:
                continue
            seen[j] = True
            if values[k] >= threshold:
                out.append((g.var_aux[k], j, float(values[k])))
    else:
        raise InvalidConfig(f"unknown extraction mode {mode!r}")
    out.sort(key=lambda r: (r[0], r[1]))
    return MatchSet(tuple(Match(g.aux_ids[i], g.target_ids[j], s) for i, j, s in out))


def targeted_rank(m: MarginalTable, target_id: str) -> list[tuple[str, float]]:
    """Auxiliary candidates for one target, most probable first. Empty if pruning left none."""
    g = m.graph
    try:
        j = g.target_ids.index(target_id)
    except ValueError:
        raise UnknownUser(target_id) from None
    idx = g.sigma_g(j)
    order = np.lexsort((g.var_aux[idx], -g.similarity[idx], -m.marginal[idx]))
    return [(g.aux_ids[g.var_aux[idx[k]]], float(m.marginal[idx[k]])) for k in order]


def bp_match(R: SimilarityMatrix, policy: PrunePolicy = PrunePolicy(), config: BPConfig = BPConfig(),
             threshold: float = 0.0, score: str = "similarity") -> tuple[MatchSet, MarginalTable]:
    table = run_bp(build_factor_graph(R, policy), config)
    return extract_matching(table, R, threshold, "one_to_one", score), table
