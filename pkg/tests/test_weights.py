import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from profrisk.core import AttributeRecord, ChannelMatrix, Gender, Network, UserProfile
from profrisk.errors import DegenerateTraining, InvalidFeature, MissingChannel
from profrisk.similarity import ChannelStats, activity_similarity, location_similarity, name_similarity
from profrisk.weights import (
    LogisticConfig,
    TrainingMatrix,
    WeightVector,
    build_similarity_matrix,
    combined_similarity,
    fit_logistic,
    predict_proba,
)


def _tm(X, y, chans=None):
    X = np.asarray(X, float)
    return TrainingMatrix(tuple(chans or [f"c{k}" for k in range(X.shape[1])]), X, np.asarray(y, float))


def test_separable_data_is_classified_perfectly():
    X = np.array([[0.9]] * 500 + [[0.1]] * 500)
    y = [1] * 500 + [0] * 500
    w = fit_logistic(_tm(X, y))
    p = predict_proba(X, ("c0",), w)
    assert np.all((p >= 0.5) == (np.asarray(y) == 1))


def test_degenerate_and_invalid_training():
    with pytest.raises(DegenerateTraining):
        fit_logistic(_tm([[0.1], [0.2]], [1, 1]))
    with pytest.raises(InvalidFeature):
        fit_logistic(_tm([[0.1], [np.nan]], [1, 0]))


def test_loss_is_non_increasing_every_epoch():
    rng = np.random.default_rng(3)
    y = rng.integers(0, 2, 400)
    X = np.column_stack([rng.beta(8, 2, 400) * y + rng.beta(2, 8, 400) * (1 - y), rng.random(400)])
    w = fit_logistic(_tm(X, y), LogisticConfig(epochs=500))
    h = np.array(w.loss_history)
    assert len(h) == 501
    assert np.all(np.diff(h) <= 1e-12)


def test_pure_noise_channel_gets_near_zero_weight():
    rng = np.random.default_rng(0)
    n = 3000
    y = np.repeat([1, 0], n // 2)
    signal = np.where(y == 1, rng.beta(8, 2, n), rng.beta(2, 8, n))
    noise = rng.random(n)
    w = fit_logistic(_tm(np.column_stack([signal, noise]), y, ["signal", "noise"]))
    assert abs(w.weights["noise"]) < 0.1
    # permutation oracle: shuffling the noise column leaves its weight centred on zero
    perm = [fit_logistic(_tm(np.column_stack([signal, rng.permutation(noise)]), y, ["signal", "noise"]),
                         LogisticConfig(epochs=300)).weights["noise"] for _ in range(5)]
    assert abs(np.mean(perm)) < 0.1


def test_row_order_does_not_change_weights():
    rng = np.random.default_rng(5)
    y = rng.integers(0, 2, 300)
    X = rng.random((300, 3)) + y[:, None] * 0.3
    w1 = fit_logistic(_tm(X, y), LogisticConfig(epochs=300))
    p = rng.permutation(300)
    w2 = fit_logistic(_tm(X[p], y[p]), LogisticConfig(epochs=300))
    for c in w1.channels:
        assert w1.weights[c] == pytest.approx(w2.weights[c], abs=1e-9)
    assert w1.bias == pytest.approx(w2.bias, abs=1e-9)


def test_beta_model_held_out_accuracy():
    rng = np.random.default_rng(11)

    def draw(n):
        y = rng.integers(0, 2, n)
        return np.where(y == 1, rng.beta(8, 2, n), rng.beta(2, 8, n))[:, None], y

    Xtr, ytr = draw(3000)
    Xte, yte = draw(5000)
    w = fit_logistic(_tm(Xtr, ytr))
    acc = np.mean((predict_proba(Xte, ("c0",), w) >= 0.5) == (yte == 1))
    assert acc >= 0.95


def _wv(weights, bias=0.0, means=None, stds=None):
    return WeightVector(weights, bias, means or {c: 0.0 for c in weights}, stds or {c: 1.0 for c in weights})


def test_combined_similarity_examples():
    assert combined_similarity({"x": 0.3}, _wv({"x": 0.0})) == 0.5
    assert combined_similarity({"x": 0.0}, _wv({"x": 1.0})) == 0.5
    assert combined_similarity({"x": math.log(3)}, _wv({"x": 1.0})) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(MissingChannel):
        combined_similarity({"x": 0.1}, _wv({"x": 1.0, "y": 1.0}))


@given(st.floats(-5, 5), st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=200, deadline=None)
def test_combined_is_monotone_and_in_open_interval(bias, a, b):
    w = _wv({"x": 2.0, "y": -1.0}, bias, {"x": 0.5, "y": 0.5}, {"x": 0.2, "y": 0.3})
    lo, hi = sorted((a, b))
    s_lo = combined_similarity({"x": lo, "y": 0.4}, w)
    s_hi = combined_similarity({"x": hi, "y": 0.4}, w)
    assert 0.0 < s_lo <= s_hi < 1.0


def test_one_by_one_matrix_matches_hand_chain():
    a = UserProfile("a1", Network.AUX, AttributeRecord(name="ann lee", location=(40.0, -74.0), gender=Gender.F,
                                                       activity_times=(0.0, 3600.0)))
    t = UserProfile("t1", Network.TARGET, AttributeRecord(name="anne lee", location=(40.5, -74.2), gender=Gender.F,
                                                          activity_times=(600.0, 4000.0)))
    chans = ("name", "location", "gender", "activity", "photo")
    w = WeightVector({c: 0.5 + k for k, c in enumerate(chans)}, -1.0, {c: 0.4 for c in chans},
                     {c: 0.25 for c in chans})
    photo = ChannelMatrix(np.array([[0.7]]), np.array([[True]]))
    stats = ChannelStats.from_observations({c: [0.3] for c in chans})
    R = build_similarity_matrix([a], [t], w, {"photo": photo}, stats)
    raw = {
        "name": name_similarity("ann lee", "anne lee"),
        "location": location_similarity((40.0, -74.0), (40.5, -74.2)),
        "gender": 1.0,
        "activity": activity_similarity((0.0, 3600.0), (600.0, 4000.0)),
        "photo": 0.7,
    }
    z = -1.0 + sum(w.weights[c] * (raw[c] - 0.4) / 0.25 for c in chans)
    assert R.combined[0, 0] == pytest.approx(1 / (1 + math.exp(-z)), abs=1e-12)


def test_all_missing_pair_uses_imputed_values():
    a = UserProfile("a1", Network.AUX, AttributeRecord())
    t = UserProfile("t1", Network.TARGET, AttributeRecord())
    w = WeightVector({"name": 2.0, "location": 1.0}, 0.1, {"name": 0.5, "location": 0.5},
                     {"name": 0.1, "location": 0.2})
    stats = ChannelStats.from_observations({"name": [0.6], "location": [0.3]})
    R1 = build_similarity_matrix([a], [t], w, None, stats)
    R2 = build_similarity_matrix([a], [t], w, None, stats)
    z = 0.1 + 2.0 * (0.6 - 0.5) / 0.1 + 1.0 * (0.3 - 0.5) / 0.2
    assert R1.combined[0, 0] == pytest.approx(1 / (1 + math.exp(-z)), abs=1e-12)
    assert R1.combined[0, 0] == R2.combined[0, 0]
    assert not R1.per_channel["name"].present.any()


def test_matrix_is_sorted_by_id_and_channel_matrices_follow():
    users_a = [UserProfile(u, Network.AUX, AttributeRecord(name=u)) for u in ("ab", "aa")]
    users_t = [UserProfile(u, Network.TARGET, AttributeRecord(name=u)) for u in ("tb", "ta")]
    ext = ChannelMatrix(np.array([[0.1, 0.2], [0.3, 0.4]]), np.ones((2, 2), bool))
    w = _wv({"ext": 1.0})
    R = build_similarity_matrix(users_a, users_t, w, {"ext": ext}, ChannelStats())
    assert R.aux_ids == ("aa", "ab") and R.target_ids == ("ta", "tb")
    # caller order was (ab, aa) x (tb, ta)
    assert R.per_channel["ext"].values.tolist() == [[0.4, 0.3], [0.2, 0.1]]


def test_default_matrix_is_complete_and_in_range(default_run):
    _, _, _, R = default_run
    assert R.combined.shape == (500, 500)
    assert np.all((R.combined > 0) & (R.combined < 1))
