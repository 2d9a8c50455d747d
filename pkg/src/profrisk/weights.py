"""Attribute weighting by logistic regression and assembly of the similarity matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import ChannelMatrix, Dataset, Network, PairValues, SimilarityMatrix, UserProfile, sigmoid
from .errors import DegenerateTraining, InvalidFeature, MissingChannel
from .similarity import (
    NATIVE_CHANNELS,
    ChannelStats,
    ProfileTable,
    SimilarityConfig,
    adjacency,
    impute_missing,
    lookup_pairs,
    native_pair_channels,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingMatrix:
    channels: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class LogisticConfig:
    learning_rate: float = 0.1
    epochs: int = 2000
    l2: float = 1e-4
    # full-batch descent from zero weights consumes no randomness; kept for provenance
    seed: int = 0


@dataclass(frozen=True)
class WeightVector:
    weights: Mapping[str, float]
    bias: float
    means: Mapping[str, float]
    stds: Mapping[str, float]
    loss_history: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(self.weights)


def _loss_grad(Z, y, w, b, l2):
    z = Z @ w + b
    # log(1 + exp(-z)) for positives, log(1 + exp(z)) for negatives
    loss = np.mean(np.logaddexp(0.0, np.where(y == 1, -z, z))) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - y
    return loss, Z.T @ r / len(y) + l2 * w, float(np.mean(r))


def fit_logistic(data: TrainingMatrix, config: LogisticConfig = LogisticConfig()) -> WeightVector:
    X = np.asarray(data.X, dtype=float)
    y = np.asarray(data.y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] != len(data.channels):
        raise InvalidFeature("training matrix shape does not match channels/labels")
    if not np.all(np.isfinite(X)):
        raise InvalidFeature("non-finite feature value")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateTraining("training data needs both coupled and uncoupled rows")

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    Z = (X - mean) / std

    w = np.zeros(X.shape[1])
    b = 0.0
    history = []
    for _ in range(config.epochs):
        loss, gw, gb = _loss_grad(Z, y, w, b, config.l2)
        history.append(loss)
        w = w - config.learning_rate * gw
        b = b - config.learning_rate * gb
    history.append(_loss_grad(Z, y, w, b, config.l2)[0])

    chans = data.channels
    return WeightVector(
        weights={c: float(v) for c, v in zip(chans, w)},
        bias=float(b),
        means={c: float(v) for c, v in zip(chans, mean)},
        stds={c: float(v) for c, v in zip(chans, std)},
        loss_history=tuple(history),
    )


def predict_proba(X: np.ndarray, channels: Sequence[str], w: WeightVector) -> np.ndarray:
    cols = {c: X[:, k] for k, c in enumerate(channels)}
    return combine(cols, w)


def combine(values: Mapping[str, np.ndarray], w: WeightVector) -> np.ndarray:
    """Vectorised combined similarity; ``values`` must cover every weighted channel."""
    missing = [c for c in w.channels if c not in values]
    if missing:
        raise MissingChannel(", ".join(missing))
    z = np.full(np.shape(next(iter(values.values()))) if values else (), w.bias, dtype=float)
    for c in w.channels:
        z = z + w.weights[c] * (np.asarray(values[c], dtype=float) - w.means[c]) / w.stds[c]
    return sigmoid(z)


def combined_similarity(channels: Mapping[str, float], w: WeightVector) -> float:
    return float(combine({c: np.asarray(v, float) for c, v in channels.items()}, w))


# ----------------------------------------------------------- pair features


def _graph_of(edges: Mapping, network: Network):
    e = edges.get(network) if edges else None
    return adjacency(e) if e else None


def pair_channels(aux_profiles: Sequence[UserProfile], target_profiles: Sequence[UserProfile],
                  ai: np.ndarray, tj: np.ndarray, *,
                  external: Mapping[str, PairValues | ChannelMatrix] | None = None,
                  name_db: Mapping[str, tuple[int, int]] | None = None,
                  edges: Mapping[Network, Sequence[tuple[str, str]]] | None = None,
                  config: SimilarityConfig = SimilarityConfig(),
                  workers: int = 1) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Every channel's (values, present) for the aligned pairs (aux[ai[k]], target[tj[k]])."""
    aux_tab = ProfileTable([p.attributes for p in aux_profiles], name_db, _graph_of(edges, Network.AUX), config)
    tgt_tab = ProfileTable([p.attributes for p in target_profiles], name_db, _graph_of(edges, Network.TARGET), config)
    out = native_pair_channels(aux_tab, tgt_tab, ai, tj, config, workers)
    if external:
        aux_ids = np.array([p.user_id for p in aux_profiles], dtype=object)
        tgt_ids = np.array([p.user_id for p in target_profiles], dtype=object)
        for name in sorted(external):
            ch = external[name]
            if isinstance(ch, ChannelMatrix):
                out[name] = (ch.values[ai, tj], ch.present[ai, tj])
            else:
                out[name] = lookup_pairs(ch, aux_ids[ai], tgt_ids[tj])
    return out


def channel_order(names) -> list[str]:
    native = [c for c in NATIVE_CHANNELS if c in names]
    return native + sorted(c for c in names if c not in NATIVE_CHANNELS)


def impute(channels: Mapping[str, tuple[np.ndarray, np.ndarray]], wanted: Sequence[str], stats: ChannelStats,
           size: int) -> dict[str, np.ndarray]:
    """Fill missing entries with the channel's training mean; absent channels are fully imputed."""
    out = {}
    for c in wanted:
        if c in channels:
            vals, present = channels[c]
            out[c] = np.where(present, vals, impute_missing(stats, c))
        else:
            out[c] = np.full(size, impute_missing(stats, c))
    return out


def prepare_training(dataset: Dataset, n_coupled: int | None = None, n_uncoupled: int | None = None,
                     config: SimilarityConfig = SimilarityConfig(), workers: int = 1
                     ) -> tuple[TrainingMatrix, ChannelStats]:
    """Labelled, imputed training rows plus the per-channel statistics used for imputation."""
    split = dataset.split
    if split is None:
        raise DegenerateTraining("dataset has no train/eval split")
    coupled = list(split.train_coupled if n_coupled is None else split.train_coupled[:n_coupled])
    uncoupled = list(split.train_uncoupled if n_uncoupled is None else split.train_uncoupled[:n_uncoupled])
    if not coupled or not uncoupled:
        raise DegenerateTraining(f"need coupled and uncoupled pairs, got {len(coupled)} and {len(uncoupled)}")
    pairs = coupled + uncoupled
    labels = np.array([1.0] * len(coupled) + [0.0] * len(uncoupled))

    aux_ids = sorted({a for a, _ in pairs})
    tgt_ids = sorted({t for _, t in pairs})
    ai_map = {a: i for i, a in enumerate(aux_ids)}
    ti_map = {t: j for j, t in enumerate(tgt_ids)}
    ai = np.array([ai_map[a] for a, _ in pairs])
    tj = np.array([ti_map[t] for _, t in pairs])
    chans = pair_channels([dataset.aux[a] for a in aux_ids], [dataset.target[t] for t in tgt_ids], ai, tj,
                          external=dataset.channels, name_db=dataset.name_db, edges=dataset.edges,
                          config=config, workers=workers)
    active = channel_order([c for c, (_, present) in chans.items() if present.any()])
    stats = ChannelStats.from_observations({c: chans[c][0][chans[c][1]] for c in active})
    filled = impute(chans, active, stats, len(pairs))
    X = np.column_stack([filled[c] for c in active]) if active else np.zeros((len(pairs), 0))
    return TrainingMatrix(tuple(active), X, labels), stats


def build_similarity_matrix(aux: Sequence[UserProfile], target: Sequence[UserProfile], w: WeightVector,
                            channels: Mapping[str, PairValues | ChannelMatrix] | None, stats: ChannelStats, *,
                            name_db: Mapping[str, tuple[int, int]] | None = None,
                            edges: Mapping[Network, Sequence[tuple[str, str]]] | None = None,
                            config: SimilarityConfig = SimilarityConfig(), workers: int = 1) -> SimilarityMatrix:
    """Combined similarity between every auxiliary and target profile (ids sorted)."""
    pa = sorted(range(len(aux)), key=lambda k: aux[k].user_id)
    pt = sorted(range(len(target)), key=lambda k: target[k].user_id)
    aux = [aux[k] for k in pa]
    target = [target[k] for k in pt]
    if channels:
        # ChannelMatrix inputs are indexed in caller order
        channels = {c: ChannelMatrix(ch.values[np.ix_(pa, pt)], ch.present[np.ix_(pa, pt)])
                    if isinstance(ch, ChannelMatrix) else ch for c, ch in channels.items()}
    n, m = len(aux), len(target)
    ai, tj = np.divmod(np.arange(n * m), m) if m else (np.zeros(0, int), np.zeros(0, int))
    chans = pair_channels(aux, target, ai, tj, external=channels, name_db=name_db, edges=edges,
                          config=config, workers=workers)
    filled = impute(chans, w.channels, stats, n * m)
    combined = combine(filled, w).reshape(n, m) if w.channels else np.full((n, m), float(sigmoid(w.bias)))
    per_channel = {c: ChannelMatrix(v.reshape(n, m), p.reshape(n, m)) for c, (v, p) in chans.items()}
    return SimilarityMatrix(tuple(p.user_id for p in aux), tuple(p.user_id for p in target), combined,
                            per_channel=per_channel)


def eval_similarity(dataset: Dataset, w: WeightVector, stats: ChannelStats, aux_ids=None, target_ids=None,
                    config: SimilarityConfig = SimilarityConfig(), workers: int = 1) -> SimilarityMatrix:
    """Similarity matrix over the dataset's evaluation users (or the given subsets)."""
    split = dataset.split
    aux_ids = aux_ids if aux_ids is not None else (split.eval_aux if split else sorted(dataset.aux))
    target_ids = target_ids if target_ids is not None else (split.eval_target if split else sorted(dataset.target))
    return build_similarity_matrix([dataset.aux[a] for a in aux_ids], [dataset.target[t] for t in target_ids], w,
                                   dataset.channels, stats, name_db=dataset.name_db, edges=dataset.edges,
                                   config=config, workers=workers)
