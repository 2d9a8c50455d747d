"""Per-attribute similarity metrics between an auxiliary and a target profile.

Every metric maps into [0, 1]. Scalar functions raise ``MissingAttribute``
when an input is absent; the batch helpers at the bottom instead return a
``present`` mask so the caller can impute.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .core import AttributeRecord, ChannelMatrix, Gender, PairValues
from .errors import InvalidChannelValue, MissingAttribute, ShapeMismatch, UnknownNode, UnknownUser

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
NATIVE_CHANNELS = ("name", "location", "gender", "activity", "graph")
HIST_BINS = 100


@dataclass(frozen=True)
class SimilarityConfig:
    location_scale_km: float = 100.0
    activity_horizon_s: float = 86400.0
    degree_bins: int = 70
    bin_size: int = 15


# --------------------------------------------------------------------- names


def _norm_name(s: str | None) -> str:
    return "" if s is None else s.strip().casefold()


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance over code points."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def name_similarity(a: str | None, b: str | None) -> float:
    a, b = _norm_name(a), _norm_name(b)
    if not a or not b:
        raise MissingAttribute("user name missing")
    return 1.0 - edit_distance(a, b) / max(len(a), len(b))


# ------------------------------------------------------------------ location


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def location_similarity(a, b, scale_km: float = 100.0) -> float:
    if a is None or b is None:
        raise MissingAttribute("location missing")
    return math.exp(-haversine_km(a, b) / scale_km)


# -------------------------------------------------------------------- gender


def gender_probs(rec: AttributeRecord, name_db: Mapping[str, tuple[int, int]]) -> tuple[float, float]:
    """(p_male, p_female) for a profile, inferred from the first name token when unknown."""
    if rec.gender == Gender.M:
        return 1.0, 0.0
    if rec.gender == Gender.F:
        return 0.0, 1.0
    tokens = _norm_name(rec.name).split()
    counts = name_db.get(tokens[0]) if tokens else None
    if counts is None or sum(counts) <= 0:
        raise MissingAttribute("gender unknown and name not in name table")
    m, f = counts
    return m / (m + f), f / (m + f)


def gender_similarity(a: AttributeRecord, b: AttributeRecord, name_db: Mapping[str, tuple[int, int]]) -> float:
    pm, pf = gender_probs(a, name_db)
    qm, qf = gender_probs(b, name_db)
    return pm * qm + pf * qf


# ------------------------------------------------------------------ activity


def activity_similarity(a: Sequence[float] | None, b: Sequence[float] | None, horizon_s: float = 86400.0) -> float:
    """Greedy smallest-gap pairing of min(|a|, |b|) timestamp pairs, no reuse.

    Ties on the gap go to the earlier ``a`` timestamp, then the earlier ``b``.
    """
    if not a or not b:
        raise MissingAttribute("activity missing")
    a = sorted(a)
    b = sorted(b)
    cand = sorted((abs(x - y), i, j) for i, x in enumerate(a) for j, y in enumerate(b))
    used_a, used_b = set(), set()
    total = 0.0
    need = min(len(a), len(b))
    for gap, i, j in cand:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        total += gap
        if len(used_a) == need:
            break
    return 1.0 - min(max(total / need / horizon_s, 0.0), 1.0)


# --------------------------------------------------------------------- graph


@dataclass(frozen=True)
class DegreeFeatureVector:
    counts: tuple[int, ...]
    bin_size: int = 15

    def __len__(self) -> int:
        return len(self.counts)


def adjacency(edges: Iterable[tuple[str, str]]) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for u, v in edges:
        if u == v:
            continue
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    return adj


def _as_adjacency(graph) -> Mapping[str, set]:
    return graph if isinstance(graph, Mapping) else adjacency(graph)


def degree_features(graph, node: str, n: int = 70, b: int = 15) -> DegreeFeatureVector:
    """Histogram of neighbor degrees in bins [k*b, (k+1)*b); overflow lands in the last bin."""
    adj = _as_adjacency(graph)
    if node not in adj:
        raise UnknownNode(node)
    counts = [0] * n
    for nb in adj[node]:
        counts[min(len(adj[nb]) // b, n - 1)] += 1
    return DegreeFeatureVector(tuple(counts), b)


def degree_feature_matrix(graph, nodes: Sequence[str | None], n: int = 70, b: int = 15) -> np.ndarray:
    """Rows of degree features; nodes absent from the graph are isolated (all-zero row)."""
    adj = _as_adjacency(graph)
    out = np.zeros((len(nodes), n), dtype=float)
    for r, node in enumerate(nodes):
        for nb in adj.get(node, ()):
            out[r, min(len(adj[nb]) // b, n - 1)] += 1
    return out


def graph_similarity(fa: DegreeFeatureVector, fb: DegreeFeatureVector) -> float:
    if len(fa) != len(fb) or fa.bin_size != fb.bin_size:
        raise ShapeMismatch("degree feature vectors differ in length or bin size")
    x = np.asarray(fa.counts, float)
    y = np.asarray(fb.counts, float)
    nx_, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx_ == 0 and ny == 0:
        return 1.0
    if nx_ == 0 or ny == 0:
        return 0.0
    return float(min(1.0, x @ y / (nx_ * ny)))


# ---------------------------------------------------------- external channels


def load_external_channel(triplets, aux_ids: Sequence[str], target_ids: Sequence[str]) -> ChannelMatrix:
    """Scatter (aux_id, target_id, similarity) triplets into an N x M channel matrix."""
    ai = {a: i for i, a in enumerate(aux_ids)}
    ti = {t: j for j, t in enumerate(target_ids)}
    values = np.zeros((len(aux_ids), len(target_ids)))
    present = np.zeros_like(values, dtype=bool)
    if isinstance(triplets, PairValues):
        triplets = zip(triplets.aux_ids, triplets.target_ids, triplets.values)
    for a, t, s in triplets:
        s = float(s)
        if not 0.0 <= s <= 1.0:
            raise InvalidChannelValue(f"similarity {s} for ({a}, {t}) outside [0, 1]")
        if a not in ai:
            raise UnknownUser(a)
        if t not in ti:
            raise UnknownUser(t)
        values[ai[a], ti[t]] = s
        present[ai[a], ti[t]] = True
    return ChannelMatrix(values, present)


def lookup_pairs(pv: PairValues, aux_ids: Sequence[str], target_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Values of ``pv`` for aligned id sequences; returns (values, present)."""
    index = {(a, t): k for k, (a, t) in enumerate(zip(pv.aux_ids, pv.target_ids))}
    values = np.zeros(len(aux_ids))
    present = np.zeros(len(aux_ids), bool)
    for k, key in enumerate(zip(aux_ids, target_ids)):
        pos = index.get(key)
        if pos is not None:
            values[k] = pv.values[pos]
            present[k] = True
    if values[present].size and (values[present].min() < 0 or values[present].max() > 1):
        raise InvalidChannelValue("external channel value outside [0, 1]")
    return values, present


# ---------------------------------------------------------------- imputation


@dataclass(frozen=True)
class ChannelStats:
    """Training-time distribution of each channel's observed similarities."""

    hist: Mapping[str, tuple[float, ...]] = field(default_factory=dict)
    mean: Mapping[str, float] = field(default_factory=dict)
    count: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def from_observations(cls, observations: Mapping[str, Iterable[float]]) -> "ChannelStats":
        hist, mean, count = {}, {}, {}
        for ch, vals in observations.items():
            v = np.asarray(list(vals), dtype=float)
            if v.size == 0:
                continue
            h, _ = np.histogram(v, bins=HIST_BINS, range=(0.0, 1.0))
            hist[ch] = tuple((h / h.sum()).tolist())
            mean[ch] = float(v.mean())
            count[ch] = int(v.size)
        return cls(hist, mean, count)


def impute_missing(stats: ChannelStats, channel: str) -> float:
    """Pooled training mean of a channel, or 0.5 for a channel never observed."""
    if channel not in stats.mean or stats.count.get(channel, 0) == 0:
        log.warning("no training observations for channel %r; imputing 0.5", channel)
        return 0.5
    return stats.mean[channel]


# ---------------------------------------------------------- batch evaluation


@njit(nogil=True, cache=False)
def _lev_pairs(codes_a, off_a, codes_b, off_b, ai, tj, out):
    buf_len = 1
    for k in range(len(off_b) - 1):
        buf_len = max(buf_len, off_b[k + 1] - off_b[k] + 1)
    prev = np.empty(buf_len, np.int64)
    cur = np.empty(buf_len, np.int64)
    for p in range(len(ai)):
        a0, a1 = off_a[ai[p]], off_a[ai[p] + 1]
        b0, b1 = off_b[tj[p]], off_b[tj[p] + 1]
        la, lb = a1 - a0, b1 - b0
        if la == 0 or lb == 0:
            out[p] = np.nan
            continue
        for j in range(lb + 1):
            prev[j] = j
        for i in range(1, la + 1):
            cur[0] = i
            ca = codes_a[a0 + i - 1]
            for j in range(1, lb + 1):
                sub = prev[j - 1] + (0 if ca == codes_b[b0 + j - 1] else 1)
                d = min(prev[j] + 1, cur[j - 1] + 1)
                cur[j] = min(d, sub)
            for j in range(lb + 1):
                prev[j] = cur[j]
        out[p] = 1.0 - prev[lb] / max(la, lb)


@njit(nogil=True, cache=False)
def _activity_pairs(ta, off_a, tb, off_b, ai, tj, horizon, out):
    for p in range(len(ai)):
        a0, a1 = off_a[ai[p]], off_a[ai[p] + 1]
        b0, b1 = off_b[tj[p]], off_b[tj[p] + 1]
        la, lb = a1 - a0, b1 - b0
        if la == 0 or lb == 0:
            out[p] = np.nan
            continue
        gaps = np.empty(la * lb)
        for i in range(la):
            for j in range(lb):
                gaps[i * lb + j] = abs(ta[a0 + i] - tb[b0 + j])
        # stable sort keeps (i, j) order among equal gaps
        order = np.argsort(gaps, kind="mergesort")
        used_a = np.zeros(la, np.bool_)
        used_b = np.zeros(lb, np.bool_)
        need = min(la, lb)
        got = 0
        total = 0.0
        for q in order:
            i = q // lb
            j = q - i * lb
            if used_a[i] or used_b[j]:
                continue
            used_a[i] = True
            used_b[j] = True
            total += gaps[q]
            got += 1
            if got == need:
                break
        out[p] = 1.0 - min(max(total / need / horizon, 0.0), 1.0)


def _ragged(seqs: Sequence[Sequence], dtype) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    off = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(lengths, out=off[1:])
    flat = np.fromiter((x for s in seqs for x in s), dtype=dtype, count=int(off[-1]))
    return flat, off


class ProfileTable:
    """Column-oriented view of a profile list, ready for pairwise kernels."""

    def __init__(self, records: Sequence[AttributeRecord], name_db: Mapping[str, tuple[int, int]] | None = None,
                 graph=None, config: SimilarityConfig = SimilarityConfig()):
        name_db = name_db or {}
        self.size = len(records)
        names = [_norm_name(r.name) for r in records]
        self.name_codes, self.name_off = _ragged([[ord(c) for c in s] for s in names], np.int32)
        self.coords = np.array([r.location if r.location is not None else (np.nan, np.nan) for r in records],
                               dtype=float).reshape(len(records), 2)
        probs = np.full((len(records), 2), np.nan)
        for k, r in enumerate(records):
            try:
                probs[k] = gender_probs(r, name_db)
            except MissingAttribute:
                pass
        self.gender = probs
        acts = [sorted(r.activity_times) if r.activity_times else [] for r in records]
        self.act_times, self.act_off = _ragged(acts, np.float64)
        if graph is None:
            self.degree = None
            self.has_graph = np.zeros(len(records), bool)
        else:
            nodes = [r.graph_node for r in records]
            self.degree = degree_feature_matrix(graph, nodes, config.degree_bins, config.bin_size)
            self.has_graph = np.array([n is not None for n in nodes])
            norms = np.linalg.norm(self.degree, axis=1, keepdims=True)
            self.degree_unit = np.divide(self.degree, norms, out=np.zeros_like(self.degree), where=norms > 0)
            self.degree_zero = norms[:, 0] == 0


def _chunked(fn, n: int, workers: int):
    """Run fn(lo, hi) over [0, n) in ``workers`` contiguous chunks."""
    if workers <= 1 or n < 2 * workers:
        fn(0, n)
        return
    bounds = np.linspace(0, n, workers + 1).astype(int)
    with ThreadPoolExecutor(workers) as ex:
        list(ex.map(lambda k: fn(bounds[k], bounds[k + 1]), range(workers)))


def native_pair_channels(aux: ProfileTable, target: ProfileTable, ai: np.ndarray, tj: np.ndarray,
                         config: SimilarityConfig = SimilarityConfig(), workers: int = 1
                         ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Native channel similarities for aligned index arrays; {channel: (values, present)}."""
    ai = np.asarray(ai, dtype=np.int64)
    tj = np.asarray(tj, dtype=np.int64)
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    name = np.empty(len(ai))
    act = np.empty(len(ai))

    def _run(lo, hi):
        _lev_pairs(aux.name_codes, aux.name_off, target.name_codes, target.name_off, ai[lo:hi], tj[lo:hi], name[lo:hi])
        _activity_pairs(aux.act_times, aux.act_off, target.act_times, target.act_off, ai[lo:hi], tj[lo:hi],
                        float(config.activity_horizon_s), act[lo:hi])

    _chunked(_run, len(ai), workers)
    out["name"] = (np.nan_to_num(name), ~np.isnan(name))
    out["activity"] = (np.nan_to_num(act), ~np.isnan(act))

    lat1, lon1 = np.radians(aux.coords[ai, 0]), np.radians(aux.coords[ai, 1])
    lat2, lon2 = np.radians(target.coords[tj, 0]), np.radians(target.coords[tj, 1])
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    d = 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))
    loc = np.exp(-d / config.location_scale_km)
    out["location"] = (np.nan_to_num(loc), ~np.isnan(loc))

    g = aux.gender[ai, 0] * target.gender[tj, 0] + aux.gender[ai, 1] * target.gender[tj, 1]
    out["gender"] = (np.nan_to_num(g), ~np.isnan(g))

    if aux.degree is not None and target.degree is not None:
        cos = np.einsum("ij,ij->i", aux.degree_unit[ai], target.degree_unit[tj])
        both_zero = aux.degree_zero[ai] & target.degree_zero[tj]
        cos = np.clip(np.where(both_zero, 1.0, cos), 0.0, 1.0)
        out["graph"] = (cos, aux.has_graph[ai] & target.has_graph[tj])
    return out
