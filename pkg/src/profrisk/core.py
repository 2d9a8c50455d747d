"""Domain types shared by the similarity, matching and evaluation code."""

from __future__ import annotations

import dataclasses
import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ShapeMismatch


class Network(str, enum.Enum):
    AUX = "A"
    TARGET = "T"


class Gender(str, enum.Enum):
    M = "M"
    F = "F"
    UNKNOWN = ""


@dataclass(frozen=True)
class AttributeRecord:
    """Publicly shared attributes of one profile. ``None`` means not shared."""

    name: str | None = None
    location: tuple[float, float] | None = None  # (lat, lon) degrees
    gender: Gender = Gender.UNKNOWN
    activity_times: tuple[float, ...] | None = None
    graph_node: str | None = None
    external_channels: Mapping[str, bool] = field(default_factory=dict)

    def violations(self) -> list[str]:
        out = []
        if self.location is not None:
            lat, lon = self.location
            if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
                out.append(f"location out of range: {self.location}")
        if self.activity_times is not None:
            ts = self.activity_times
            if any(b < a for a, b in zip(ts, ts[1:])):
                out.append("activity_times not non-decreasing")
        return out


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    network: Network
    attributes: AttributeRecord = field(default_factory=AttributeRecord)


def _frozen(a: np.ndarray, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelMatrix:
    """One channel's N x M similarities; ``present`` is False where the value is missing."""

    values: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, float))
        object.__setattr__(self, "present", _frozen(self.present, bool))
        if self.values.shape != self.present.shape:
            raise ShapeMismatch("values and present mask differ in shape")


@dataclass(frozen=True)
class SimilarityMatrix:
    """The N x M combined similarity matrix R.

    ``mask`` marks stored entries; a False entry was pruned (or never
    computed). Missing *attributes* are tracked per channel instead.
    """

    aux_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    combined: np.ndarray
    mask: np.ndarray | None = None
    per_channel: Mapping[str, ChannelMatrix] = field(default_factory=dict)

    def __post_init__(self):
        combined = _frozen(self.combined, float)
        shape = (len(self.aux_ids), len(self.target_ids))
        if combined.shape != shape:
            raise ShapeMismatch(f"combined has shape {combined.shape}, ids give {shape}")
        mask = np.ones(shape, bool) if self.mask is None else self.mask
        object.__setattr__(self, "combined", combined)
        object.__setattr__(self, "mask", _frozen(mask, bool))
        object.__setattr__(self, "aux_ids", tuple(self.aux_ids))
        object.__setattr__(self, "target_ids", tuple(self.target_ids))
        if self.mask.shape != shape:
            raise ShapeMismatch("mask shape differs from combined")
        stored = combined[self.mask]
        if stored.size and (np.nanmin(stored) < 0.0 or np.nanmax(stored) > 1.0 or np.isnan(stored).any()):
            raise ValueError("similarities must lie in [0, 1]")

    @property
    def n_aux(self) -> int:
        return len(self.aux_ids)

    @property
    def m_target(self) -> int:
        return len(self.target_ids)

    @classmethod
    def from_dense(cls, values, aux_ids=None, target_ids=None, mask=None) -> "SimilarityMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise ShapeMismatch("similarity matrix must be 2-D")
        n, m = values.shape
        if aux_ids is None:
            aux_ids = default_ids("a", n)
        if target_ids is None:
            target_ids = default_ids("t", m)
        return cls(tuple(aux_ids), tuple(target_ids), values, mask)

    def aux_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.aux_ids)}

    def target_index(self) -> dict[str, int]:
        return {t: j for j, t in enumerate(self.target_ids)}

    def subset(self, aux_ids: Iterable[str] | None = None, target_ids: Iterable[str] | None = None) -> "SimilarityMatrix":
        ai = self.aux_index()
        ti = self.target_index()
        aux = list(self.aux_ids) if aux_ids is None else list(aux_ids)
        tgt = list(self.target_ids) if target_ids is None else list(target_ids)
        rows = np.array([ai[a] for a in aux], dtype=int)
        cols = np.array([ti[t] for t in tgt], dtype=int)
        sel = np.ix_(rows, cols)
        channels = {k: ChannelMatrix(c.values[sel], c.present[sel]) for k, c in self.per_channel.items()}
        return SimilarityMatrix(tuple(aux), tuple(tgt), self.combined[sel], self.mask[sel], channels)


def default_ids(prefix: str, n: int) -> tuple[str, ...]:
    # zero padding keeps sorted order equal to positional order
    width = max(1, len(str(max(n - 1, 0))))
    return tuple(f"{prefix}{k:0{width}d}" for k in range(n))


@dataclass(frozen=True)
class CouplingGroundTruth:
    pairs: frozenset[tuple[str, str]]

    def __init__(self, pairs: Iterable[tuple[str, str]]):
        object.__setattr__(self, "pairs", frozenset((str(a), str(t)) for a, t in pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self.pairs

    def violations(self) -> list[str]:
        out = []
        for kind, counts in (("aux", Counter(a for a, _ in self.pairs)), ("target", Counter(t for _, t in self.pairs))):
            for uid in sorted(u for u, c in counts.items() if c > 1):
                out.append(f"{kind} {uid} coupled twice")
        return out

    def target_to_aux(self) -> dict[str, str]:
        return {t: a for a, t in sorted(self.pairs)}

    def aux_to_target(self) -> dict[str, str]:
        return {a: t for a, t in sorted(self.pairs)}

    def restrict(self, aux_ids: Iterable[str] | None = None, target_ids: Iterable[str] | None = None) -> "CouplingGroundTruth":
        aset = None if aux_ids is None else set(aux_ids)
        tset = None if target_ids is None else set(target_ids)
        return CouplingGroundTruth(
            (a, t) for a, t in self.pairs if (aset is None or a in aset) and (tset is None or t in tset)
        )


@dataclass(frozen=True)
class DatasetSplit:
    train_coupled: tuple[tuple[str, str], ...]
    train_uncoupled: tuple[tuple[str, str], ...]
    eval_aux: tuple[str, ...]
    eval_target: tuple[str, ...]

    def train_aux(self) -> set[str]:
        return {a for a, _ in self.train_coupled} | {a for a, _ in self.train_uncoupled}

    def train_target(self) -> set[str]:
        return {t for _, t in self.train_coupled} | {t for _, t in self.train_uncoupled}


@dataclass(frozen=True)
class Match:
    aux_id: str
    target_id: str
    score: float


@dataclass(frozen=True)
class MatchSet:
    """Pairs declared as matches. ``score`` is the value thresholds act on."""

    matches: tuple[Match, ...] = ()

    def __len__(self) -> int:
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def pairs(self) -> set[tuple[str, str]]:
        return {(m.aux_id, m.target_id) for m in self.matches}

    def above(self, threshold: float) -> "MatchSet":
        return MatchSet(tuple(m for m in self.matches if m.score >= threshold))

    def restrict_targets(self, target_ids: Iterable[str]) -> "MatchSet":
        keep = set(target_ids)
        return MatchSet(tuple(m for m in self.matches if m.target_id in keep))


@dataclass(frozen=True)
class PairValues:
    """Sparse per-pair similarities of one externally computed channel."""

    aux_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "aux_ids", tuple(self.aux_ids))
        object.__setattr__(self, "target_ids", tuple(self.target_ids))
        object.__setattr__(self, "values", _frozen(self.values, float))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class Dataset:
    """Everything the pipeline reads: profiles, graphs, channels, truth and split."""

    aux: Mapping[str, UserProfile]
    target: Mapping[str, UserProfile]
    edges: Mapping[Network, tuple[tuple[str, str], ...]] = field(default_factory=dict)
    channels: Mapping[str, PairValues] = field(default_factory=dict)
    truth: CouplingGroundTruth = field(default_factory=lambda: CouplingGroundTruth(()))
    split: DatasetSplit | None = None
    name_db: Mapping[str, tuple[int, int]] = field(default_factory=dict)
    dataset_hash: str | None = None

    def profiles(self) -> list[UserProfile]:
        return list(self.aux.values()) + list(self.target.values())


def validate_dataset(profiles: Iterable[UserProfile], truth: CouplingGroundTruth, split: DatasetSplit | None) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out: list[str] = []
    ids = {Network.AUX: set(), Network.TARGET: set()}
    for p in profiles:
        bucket = ids[Network(p.network)]
        if p.user_id in bucket:
            out.append(f"duplicate {p.network.name.lower()} user {p.user_id}")
        bucket.add(p.user_id)
        out.extend(f"user {p.user_id}: {v}" for v in p.attributes.violations())

    out.extend(truth.violations())
    for a, t in sorted(truth.pairs):
        if a not in ids[Network.AUX]:
            out.append(f"truth references unknown aux {a}")
        if t not in ids[Network.TARGET]:
            out.append(f"truth references unknown target {t}")

    if split is not None:
        for a, t in split.train_coupled + split.train_uncoupled:
            if a not in ids[Network.AUX]:
                out.append(f"split references unknown aux {a}")
            if t not in ids[Network.TARGET]:
                out.append(f"split references unknown target {t}")
        for a in split.eval_aux:
            if a not in ids[Network.AUX]:
                out.append(f"split references unknown aux {a}")
        for t in split.eval_target:
            if t not in ids[Network.TARGET]:
                out.append(f"split references unknown target {t}")
        overlap = sorted((split.train_aux() & set(split.eval_aux)) | (split.train_target() & set(split.eval_target)))
        if overlap:
            out.append(f"split overlap: {', '.join(overlap)}")
    return out


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    # split by sign so large |x| never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def with_channel_flags(profiles: Mapping[str, UserProfile], channels: Mapping[str, PairValues],
                       network: Network) -> dict[str, UserProfile]:
    """Copies of ``profiles`` whose external-channel flags mark the channels each user appears in."""
    seen: dict[str, set[str]] = {}
    for name, pv in channels.items():
        ids = pv.aux_ids if network == Network.AUX else pv.target_ids
        for uid in set(ids):
            seen.setdefault(uid, set()).add(name)
    out = {}
    for uid, p in profiles.items():
        flags = {c: True for c in sorted(seen.get(uid, ()))}
        out[uid] = dataclasses.replace(p, attributes=dataclasses.replace(p.attributes, external_channels=flags))
    return out
