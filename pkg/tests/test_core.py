import numpy as np
import pytest

from profrisk.core import (
    AttributeRecord,
    CouplingGroundTruth,
    DatasetSplit,
    Gender,
    Match,
    MatchSet,
    Network,
    SimilarityMatrix,
    UserProfile,
    sigmoid,
    validate_dataset,
)
from profrisk.errors import ShapeMismatch


def _users():
    return [
        UserProfile("a1", Network.AUX, AttributeRecord(name="ann lee", location=(10.0, 20.0), gender=Gender.F)),
        UserProfile("a2", Network.AUX, AttributeRecord(name="bob ray")),
        UserProfile("t1", Network.TARGET, AttributeRecord(name="ann le")),
        UserProfile("t2", Network.TARGET, AttributeRecord(activity_times=(1.0, 2.0, 2.0))),
    ]


def test_well_formed_dataset_has_no_violations():
    truth = CouplingGroundTruth([("a1", "t1"), ("a2", "t2")])
    split = DatasetSplit((("a1", "t1"),), (), ("a2",), ("t2",))
    assert validate_dataset(_users(), truth, split) == []


def test_aux_coupled_twice_is_reported():
    truth = CouplingGroundTruth([("a1", "t1"), ("a1", "t2")])
    out = validate_dataset(_users(), truth, None)
    assert "aux a1 coupled twice" in out


def test_split_overlap_is_reported():
    truth = CouplingGroundTruth([("a1", "t1")])
    split = DatasetSplit((("a1", "t1"),), (), ("a1",), ("t2",))
    assert any(v.startswith("split overlap") for v in validate_dataset(_users(), truth, split))


def test_unknown_ids_and_bad_coordinates():
    users = _users() + [UserProfile("a3", Network.AUX, AttributeRecord(location=(95.0, 0.0)))]
    truth = CouplingGroundTruth([("a9", "t1")])
    out = validate_dataset(users, truth, None)
    assert any("a9" in v for v in out)
    assert any("location out of range" in v for v in out)


def test_decreasing_activity_is_a_violation():
    bad = AttributeRecord(activity_times=(5.0, 1.0))
    assert bad.violations()
    assert AttributeRecord(activity_times=(1.0, 1.0, 3.0)).violations() == []


def test_similarity_matrix_range_and_shape():
    with pytest.raises(ValueError):
        SimilarityMatrix.from_dense([[1.5]])
    with pytest.raises(ShapeMismatch):
        SimilarityMatrix(("a",), ("t", "u"), np.zeros((2, 2)))
    R = SimilarityMatrix.from_dense([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]])
    assert (R.n_aux, R.m_target) == (2, 3)
    assert R.mask.all()
    sub = R.subset(target_ids=[R.target_ids[2], R.target_ids[0]])
    assert sub.combined.tolist() == [[0.3, 0.1], [0.6, 0.4]]


def test_matrix_arrays_are_read_only():
    R = SimilarityMatrix.from_dense([[0.5]])
    with pytest.raises(ValueError):
        R.combined[0, 0] = 0.1


def test_matchset_helpers():
    ms = MatchSet((Match("a", "t", 0.9), Match("b", "u", 0.3)))
    assert ms.pairs() == {("a", "t"), ("b", "u")}
    assert ms.above(0.5).pairs() == {("a", "t")}
    assert ms.restrict_targets(["u"]).pairs() == {("b", "u")}


def test_sigmoid_is_stable_and_exact_at_log3():
    assert sigmoid(np.log(3.0)) == pytest.approx(0.75, abs=1e-15)
    big = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert big.tolist() == [0.0, 0.5, 1.0]
