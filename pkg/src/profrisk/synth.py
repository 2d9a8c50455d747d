"""Synthetic coupled social-network datasets with known ground truth.

A base graph is sampled into two overlapping views (auxiliary and target);
each individual gets a latent persona that both views perturb independently.
External channels (photo, freetext, interest, sentiment) are drawn per pair
from Beta distributions that differ between coupled and uncoupled pairs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

from .core import (
    AttributeRecord,
    CouplingGroundTruth,
    Dataset,
    DatasetSplit,
    Gender,
    Network,
    PairValues,
    SimilarityMatrix,
    UserProfile,
    with_channel_flags,
)
from .errors import InvalidConfig

EPOCH0 = 1_600_000_000
KM_PER_DEG = 111.195

EXTERNAL_CHANNELS = ("photo", "freetext", "interest", "sentiment")

# (lat, lon, relative population)
CITIES = (
    (40.71, -74.01, 8.4), (34.05, -118.24, 3.9), (41.88, -87.63, 2.7), (29.76, -95.37, 2.3),
    (33.45, -112.07, 1.6), (39.95, -75.17, 1.6), (29.42, -98.49, 1.5), (32.72, -117.16, 1.4),
    (32.78, -96.80, 1.3), (37.34, -121.89, 1.0), (30.27, -97.74, 1.0), (39.74, -104.99, 0.7),
    (47.61, -122.33, 0.7), (42.36, -71.06, 0.7), (25.76, -80.19, 0.5), (51.51, -0.13, 8.9),
    (48.86, 2.35, 2.1), (52.52, 13.40, 3.6), (40.42, -3.70, 3.2), (41.90, 12.50, 2.8),
    (43.65, -79.38, 2.9), (45.50, -73.57, 1.7), (35.68, 139.69, 9.7), (-33.87, 151.21, 5.3),
    (19.43, -99.13, 9.2),
)


def _default_betas() -> dict[str, tuple[tuple[float, float], tuple[float, float]]]:
    return {
        "photo": ((5.0, 2.0), (2.0, 5.0)),
        "freetext": ((3.0, 2.0), (2.0, 3.0)),
        "interest": ((4.0, 3.0), (3.0, 4.0)),
        "sentiment": ((3.0, 2.5), (2.5, 3.0)),
    }


def _default_missing() -> dict[str, float]:
    return {
        "name": 0.05, "location": 0.15, "gender": 0.25, "activity": 0.15,
        "photo": 0.2, "freetext": 0.25, "interest": 0.15, "sentiment": 0.15,
    }


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 500  # evaluation individuals
    n_train_users: int = 1500  # disjoint training individuals
    graph_model: str = "preferential_attachment"
    graph_param: float = 2  # edges per new node (PA) or edge probability (ER)
    vertex_overlap: float = 1.0
    edge_overlap: float = 0.9
    name_typo_rate: float = 0.1
    location_jitter_km: float = 20.0
    activity_offset_s: float = 1800.0
    activity_events: int = 12
    activity_window_days: float = 14.0
    activity_shared: float = 0.6
    gender_flip_rate: float = 0.05
    channel_betas: Mapping[str, tuple[tuple[float, float], tuple[float, float]]] = field(default_factory=_default_betas)
    missing_rate: Mapping[str, float] = field(default_factory=_default_missing)
    n_train_coupled: int = 1500
    n_train_uncoupled: int = 1500
    seed: int = 0

    def __post_init__(self):
        if self.n_users + self.n_train_users < 2:
            raise InvalidConfig("need at least 2 users")
        if self.graph_model not in ("preferential_attachment", "erdos_renyi"):
            raise InvalidConfig(f"unknown graph model {self.graph_model!r}")
        if self.graph_model == "preferential_attachment" and (self.graph_param < 1 or int(self.graph_param) != self.graph_param):
            raise InvalidConfig("preferential attachment needs an integer m >= 1")
        if self.graph_model == "erdos_renyi" and not 0.0 <= self.graph_param <= 1.0:
            raise InvalidConfig("erdos-renyi edge probability must be in [0, 1]")
        for name in ("vertex_overlap", "edge_overlap"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must be in (0, 1]")
        for name in ("name_typo_rate", "gender_flip_rate", "activity_shared"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must be in [0, 1]")
        for ch, rate in self.missing_rate.items():
            if not 0.0 <= rate <= 1.0:
                raise InvalidConfig(f"missing rate for {ch} must be in [0, 1]")
        for ch, pair in self.channel_betas.items():
            if any(x <= 0 for ab in pair for x in ab):
                raise InvalidConfig(f"Beta parameters for {ch} must be > 0")
        if self.activity_events < 1:
            raise InvalidConfig("activity_events must be >= 1")

    @property
    def total_users(self) -> int:
        return self.n_users + self.n_train_users

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_betas"] = {k: [list(c), list(u)] for k, (c, u) in sorted(self.channel_betas.items())}
        d["missing_rate"] = dict(sorted(self.missing_rate.items()))
        return d


def _rng(cfg: SynthConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, stream])


def inclusion_probability(overlap: float) -> float:
    """Per-view keep probability whose two independent draws give the requested expected Jaccard overlap."""
    return 2.0 * overlap / (1.0 + overlap)


# ------------------------------------------------------------------- graphs


def generate_base_graph(cfg: SynthConfig, n_nodes: int | None = None) -> list[tuple[int, int]]:
    n = cfg.total_users if n_nodes is None else n_nodes
    if n < 2:
        raise InvalidConfig("need at least 2 nodes")
    rng = _rng(cfg, 0)
    if cfg.graph_model == "erdos_renyi":
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(len(iu)) < cfg.graph_param
        return list(zip(iu[keep].tolist(), ju[keep].tolist()))

    m = int(cfg.graph_param)
    if m >= n:
        raise InvalidConfig("preferential attachment needs m < n")
    # start from a clique on m nodes, then attach each new node to m distinct
    # existing nodes with probability proportional to degree
    edges = [(i, j) for i in range(m) for j in range(i + 1, m)]
    pool = [v for e in edges for v in e]
    for new in range(m, n):
        chosen: list[int] = []
        while len(chosen) < m:
            if pool:
                cand = pool[int(rng.integers(len(pool)))]
            else:
                cand = int(rng.integers(new))
            if cand not in chosen:
                chosen.append(cand)
        for c in sorted(chosen):
            edges.append((c, new))
            pool.extend((c, new))
    return edges


@dataclass(frozen=True)
class Views:
    """Two sampled views of one base graph, with per-view re-randomised ids."""

    edges_aux: tuple[tuple[str, str], ...]
    edges_target: tuple[tuple[str, str], ...]
    truth: CouplingGroundTruth
    aux_of: Mapping[int, str]  # base node -> aux id (nodes present in the aux view)
    target_of: Mapping[int, str]

    def __iter__(self):
        return iter((self.edges_aux, self.edges_target, self.truth))


def _ids(prefix: str, nodes: list[int], n: int, rng) -> dict[int, str]:
    width = len(str(max(n - 1, 1)))
    labels = rng.permutation(n)
    return {v: f"{prefix}{labels[v]:0{width}d}" for v in nodes}


def sample_views(base: list[tuple[int, int]], cfg: SynthConfig, n_nodes: int | None = None) -> Views:
    n = cfg.total_users if n_nodes is None else n_nodes
    rng = _rng(cfg, 1)
    pv = inclusion_probability(cfg.vertex_overlap)
    in_a = rng.random(n) < pv
    in_t = rng.random(n) < pv
    pe = inclusion_probability(cfg.edge_overlap)
    e = np.asarray(base, dtype=np.int64).reshape(-1, 2)
    ea = e[(rng.random(len(e)) < pe) & in_a[e[:, 0]] & in_a[e[:, 1]]] if len(e) else e
    et = e[(rng.random(len(e)) < pe) & in_t[e[:, 0]] & in_t[e[:, 1]]] if len(e) else e
    aux_of = _ids("a", np.nonzero(in_a)[0].tolist(), n, rng)
    target_of = _ids("t", np.nonzero(in_t)[0].tolist(), n, rng)
    truth = CouplingGroundTruth((aux_of[v], target_of[v]) for v in range(n) if in_a[v] and in_t[v])
    return Views(
        edges_aux=tuple((aux_of[u], aux_of[v]) for u, v in ea.tolist()),
        edges_target=tuple((target_of[u], target_of[v]) for u, v in et.tolist()),
        truth=truth,
        aux_of=aux_of,
        target_of=target_of,
    )


# --------------------------------------------------------------- attributes


def bundled_name_table() -> dict[str, tuple[int, int]]:
    text = resources.files("profrisk.data").joinpath("name_gender.csv").read_text(encoding="utf-8")
    return parse_name_table(text.splitlines())


def parse_name_table(lines) -> dict[str, tuple[int, int]]:
    table = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, m, f = line.split(",")
        table[name.strip().casefold()] = (int(m), int(f))
    return table


def _surnames() -> list[str]:
    text = resources.files("profrisk.data").joinpath("surnames.txt").read_text(encoding="utf-8")
    return [s for s in text.split() if s]


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _typos(name: str, rate: float, rng) -> str:
    out = []
    for ch in name:
        if rate > 0 and rng.random() < rate:
            op = int(rng.integers(3))
            if op == 0:
                out.append(_LETTERS[int(rng.integers(26))])
            elif op == 2:
                out.append(ch)
                out.append(_LETTERS[int(rng.integers(26))])
            # op == 1 deletes the character
        else:
            out.append(ch)
    result = "".join(out).strip()
    return result or name


def _jitter(lat: float, lon: float, km: float, rng) -> tuple[float, float]:
    if km <= 0:
        return lat, lon
    dlat, dlon = rng.normal(0.0, km, 2) / KM_PER_DEG
    lat2 = min(90.0, max(-90.0, lat + dlat))
    lon2 = lon + dlon / max(math.cos(math.radians(lat2)), 1e-3)
    lon2 = (lon2 + 180.0) % 360.0 - 180.0
    return round(lat2, 6), round(lon2, 6)


@dataclass(frozen=True)
class Persona:
    first: str
    last: str
    gender: Gender
    home: tuple[float, float]
    events: tuple[int, ...]
    disclosure: float  # in [0, 1]; scales how much of the profile is published


def _personas(cfg: SynthConfig, n: int, name_db, rng) -> list[Persona]:
    names = sorted(name_db)
    surnames = _surnames()
    w = np.array([c[2] for c in CITIES])
    w = w / w.sum()
    window = cfg.activity_window_days * 86400
    out = []
    for _ in range(n):
        first = names[int(rng.integers(len(names)))]
        m, f = name_db[first]
        gender = Gender.M if rng.random() < m / (m + f) else Gender.F
        city = CITIES[int(rng.choice(len(CITIES), p=w))]
        home = _jitter(city[0], city[1], 25.0, rng)
        events = tuple(sorted(int(EPOCH0 + x) for x in rng.uniform(0, window, cfg.activity_events)))
        last = surnames[int(rng.integers(len(surnames)))]
        out.append(Persona(first, last, gender, home, events, float(rng.random())))
    return out


def _view_record(p: Persona, cfg: SynthConfig, noisy: bool, present: Mapping[str, bool], node_id: str, rng
                 ) -> AttributeRecord:
    name = f"{p.first} {p.last}"
    home = p.home
    gender = p.gender
    events = p.events
    if noisy:
        name = _typos(name, cfg.name_typo_rate, rng)
        home = _jitter(home[0], home[1], cfg.location_jitter_km, rng)
        if rng.random() < cfg.gender_flip_rate:
            gender = Gender.F if gender == Gender.M else Gender.M
        window = cfg.activity_window_days * 86400
        kept = []
        for t in p.events:
            if rng.random() < cfg.activity_shared:
                kept.append(int(round(t + rng.normal(0.0, cfg.activity_offset_s))))
            else:
                kept.append(int(EPOCH0 + rng.uniform(0, window)))
        events = tuple(sorted(kept))
    return AttributeRecord(
        name=name if present["name"] else None,
        location=home if present["location"] else None,
        gender=gender if present["gender"] else Gender.UNKNOWN,
        activity_times=events if present["activity"] else None,
        graph_node=node_id,
        external_channels={c: present[c] for c in EXTERNAL_CHANNELS if c in present},
    )


def make_split(cfg: SynthConfig, views: Views, n_nodes: int | None = None) -> tuple[DatasetSplit, CouplingGroundTruth]:
    """Disjoint train/eval individuals; returns the split and the evaluation ground truth."""
    n = cfg.total_users if n_nodes is None else n_nodes
    rng = _rng(cfg, 2)
    order = rng.permutation(n)
    eval_nodes = sorted(order[:cfg.n_users].tolist())
    train_nodes = sorted(order[cfg.n_users:].tolist())
    eval_aux = sorted(views.aux_of[v] for v in eval_nodes if v in views.aux_of)
    eval_target = sorted(views.target_of[v] for v in eval_nodes if v in views.target_of)
    truth = views.truth.restrict(eval_aux, eval_target)

    both = [v for v in train_nodes if v in views.aux_of and v in views.target_of]
    rng.shuffle(both)
    coupled = [(views.aux_of[v], views.target_of[v]) for v in both[:cfg.n_train_coupled]]
    tr_aux = [views.aux_of[v] for v in train_nodes if v in views.aux_of]
    tr_tgt = [views.target_of[v] for v in train_nodes if v in views.target_of]
    coupled_set = views.truth.pairs
    uncoupled: list[tuple[str, str]] = []
    seen = set()
    max_uncoupled = len(tr_aux) * len(tr_tgt) - len(both)
    want = min(cfg.n_train_uncoupled, max(max_uncoupled, 0))
    while len(uncoupled) < want:
        pair = (tr_aux[int(rng.integers(len(tr_aux)))], tr_tgt[int(rng.integers(len(tr_tgt)))])
        if pair in coupled_set or pair in seen:
            continue
        seen.add(pair)
        uncoupled.append(pair)
    split = DatasetSplit(tuple(coupled), tuple(uncoupled), tuple(eval_aux), tuple(eval_target))
    return split, truth


def _beta_channel(pairs_a, pairs_t, is_coupled, betas, rng):
    (ca, cb), (ua, ub) = betas
    vals = np.where(is_coupled, rng.beta(ca, cb, len(is_coupled)), rng.beta(ua, ub, len(is_coupled)))
    return PairValues(tuple(pairs_a), tuple(pairs_t), np.round(vals, 6))


def synth_attributes(cfg: SynthConfig, views: Views, split: DatasetSplit, n_nodes: int | None = None,
                     name_db: Mapping[str, tuple[int, int]] | None = None):
    """Profiles for both views plus external channel values on eval and training pairs.

    Returns (aux profiles, target profiles, {channel: PairValues}).
    """
    n = cfg.total_users if n_nodes is None else n_nodes
    name_db = dict(name_db or bundled_name_table())
    rng = _rng(cfg, 3)
    personas = _personas(cfg, n, name_db, rng)
    channels = ("name", "location", "gender", "activity") + tuple(c for c in EXTERNAL_CHANNELS if c in cfg.channel_betas)

    def presence(p: Persona):
        # rate ** k with k in [0.35, 2.8]: the median user misses at exactly ``rate``,
        # rates 0 and 1 stay exact, open users publish more than private ones
        k = 2.0 ** (1.5 * (1.0 - 2.0 * p.disclosure))
        return {c: bool(rng.random() >= cfg.missing_rate.get(c, 0.0) ** k) for c in channels}

    aux, target = {}, {}
    for v in range(n):
        if v in views.aux_of:
            uid = views.aux_of[v]
            aux[uid] = UserProfile(uid, Network.AUX, _view_record(personas[v], cfg, False, presence(personas[v]), uid, rng))
        if v in views.target_of:
            uid = views.target_of[v]
            target[uid] = UserProfile(uid, Network.TARGET, _view_record(personas[v], cfg, True, presence(personas[v]), uid, rng))

    # eval pairs: full cross product; training pairs: the split's lists
    ea = np.array(split.eval_aux, dtype=object)
    et = np.array(split.eval_target, dtype=object)
    grid_a = np.repeat(ea, len(et))
    grid_t = np.tile(et, len(ea))
    truth_pairs = views.truth.pairs
    train_pairs = list(split.train_coupled) + list(split.train_uncoupled)
    all_a = np.concatenate([grid_a, np.array([a for a, _ in train_pairs], dtype=object)])
    all_t = np.concatenate([grid_t, np.array([t for _, t in train_pairs], dtype=object)])
    coupled = np.fromiter(((a, t) in truth_pairs for a, t in zip(all_a, all_t)), dtype=bool, count=len(all_a))

    ext: dict[str, PairValues] = {}
    for ch in sorted(cfg.channel_betas):
        has_a = np.fromiter((aux[a].attributes.external_channels.get(ch, False) for a in all_a), bool, len(all_a))
        has_t = np.fromiter((target[t].attributes.external_channels.get(ch, False) for t in all_t), bool, len(all_t))
        draw = _beta_channel(all_a, all_t, coupled, cfg.channel_betas[ch], rng)
        keep = has_a & has_t
        ext[ch] = PairValues(tuple(all_a[keep]), tuple(all_t[keep]), draw.values[keep])
    return aux, target, ext


def synthesize_dataset(cfg: SynthConfig = SynthConfig()) -> Dataset:
    name_db = bundled_name_table()
    base = generate_base_graph(cfg)
    views = sample_views(base, cfg)
    split, truth = make_split(cfg, views)
    aux, target, channels = synth_attributes(cfg, views, split, name_db=name_db)
    return Dataset(
        aux=with_channel_flags(aux, channels, Network.AUX),
        target=with_channel_flags(target, channels, Network.TARGET),
        edges={Network.AUX: views.edges_aux, Network.TARGET: views.edges_target},
        channels=channels,
        truth=truth,
        split=split,
        name_db=name_db,
    )


def synth_similarity_matrix(n_aux: int, n_target: int, coupled=(8.0, 2.0), uncoupled=(2.0, 8.0), seed: int = 0
                            ) -> tuple[SimilarityMatrix, CouplingGroundTruth]:
    """A similarity matrix drawn straight from the coupled/uncoupled Beta model.

    min(n_aux, n_target) random disjoint pairs are coupled.
    """
    rng = np.random.default_rng(seed)
    S = rng.beta(*uncoupled, size=(n_aux, n_target))
    k = min(n_aux, n_target)
    rows = rng.permutation(n_aux)[:k]
    cols = rng.permutation(n_target)[:k]
    S[rows, cols] = rng.beta(*coupled, size=k)
    # Beta draws can underflow to exactly 0 or round to 1
    S = np.clip(S, 1e-12, 1.0)
    R = SimilarityMatrix.from_dense(S)
    truth = CouplingGroundTruth((R.aux_ids[i], R.target_ids[j]) for i, j in zip(rows, cols))
    return R, truth
