import numpy as np
import pytest
from hypothesis import given, strategies as st

from abnmle import ConstraintSpec, Dataset, DistributionKind, encode_design, load_dataset, validate_constraints
from abnmle.data import INTERCEPT, parse_dist_spec, read_constraint_csv, write_adjacency_csv
from abnmle.errors import IllegalParent, LevelMismatch, MissingSpec, MissingValue, UnknownColumn


def test_load_simple():
    ds = load_dataset("a,b\n0,1.5\n1,2.5\n1,-3\n", {"a": "binomial", "b": "gaussian"})
    assert (ds.n, ds.k) == (3, 2)
    np.testing.assert_array_equal(ds.column(0), [0, 1, 1])
    np.testing.assert_array_equal(ds.column(1), [1.5, 2.5, -3.0])


def test_poisson_negative_rejected():
    with pytest.raises(LevelMismatch):
        load_dataset("a\n1\n-1\n", {"a": "poisson"})


def test_poisson_fractional_rejected():
    with pytest.raises(LevelMismatch):
        load_dataset("a\n1\n2.5\n", {"a": "poisson"})


def test_multinomial_recode_sorted():
    ds = load_dataset("c\nz\nx\ny\nx\n", {"c": {"multinomial": 3}})
    np.testing.assert_array_equal(ds.column(0), [2, 0, 1, 0])
    assert ds.labels[0] == ("x", "y", "z")


def test_binomial_numeric_order():
    ds = load_dataset("a\n10\n9\n10\n", {"a": "binomial"})
    # numeric, not string, order: 9 < 10
    np.testing.assert_array_equal(ds.column(0), [1, 0, 1])


def test_binomial_wrong_level_count():
    with pytest.raises(LevelMismatch):
        load_dataset("a\n1\n2\n3\n", {"a": "binomial"})
    with pytest.raises(LevelMismatch):
        load_dataset("a\n1\n1\n", {"a": "binomial"})


def test_missing_value():
    with pytest.raises(MissingValue):
        load_dataset("a,b\n1,\n2,3\n", {"a": "gaussian", "b": "gaussian"})


def test_name_mismatch():
    with pytest.raises(UnknownColumn):
        load_dataset("a,b\n1,2\n", {"a": "gaussian"})
    with pytest.raises(MissingSpec):
        load_dataset("a\n1\n", {"a": "gaussian", "b": "gaussian"})


def test_dist_spec_json():
    d = parse_dist_spec('{"a": "gaussian", "b": {"multinomial": 4}}')
    assert d["a"] == DistributionKind("gaussian")
    assert d["b"] == DistributionKind("multinomial", 4)


def _mixed(n=12):
    rng = np.random.default_rng(3)
    data = np.c_[rng.normal(size=n), np.arange(n) % 3, np.arange(n) % 2, rng.poisson(2, n)]
    return Dataset(("g", "m", "b", "p"), data,
                   ("gaussian", DistributionKind("multinomial", 3), "binomial", "poisson"))


def test_encode_intercept_only():
    X, y = encode_design(_mixed(), 0, [])
    assert X.values.shape == (12, 1)
    assert np.all(X.values == 1)
    assert X.column_labels == (INTERCEPT,)


def test_encode_dummy_arithmetic():
    ds = _mixed()
    X, y = encode_design(ds, 2, [0, 1])
    assert X.p == 4
    assert X.column_labels == (INTERCEPT, "g", "m[1]", "m[2]")
    np.testing.assert_array_equal(X.values[:, 2], ds.column(1) == 1)
    assert y.dtype.kind == "i"


def test_encode_adjust_after_parents():
    X, _ = encode_design(_mixed(), 0, [3], adjust=[2])
    assert X.column_labels == (INTERCEPT, "p", "b")
    assert X.source_terms["b"] == "b"


def test_encode_own_parent():
    with pytest.raises(IllegalParent):
        encode_design(_mixed(), 0, [0])
    with pytest.raises(IndexError):
        encode_design(_mixed(), 0, [9])


@given(st.integers(0, 3), st.sets(st.integers(0, 3)))
def test_encode_column_count(child, parents):
    parents.discard(child)
    ds = _mixed()
    X, _ = encode_design(ds, child, parents)
    assert X.p == 1 + sum(ds.dists[p].width for p in parents)


def test_round_trip_csv():
    ds = _mixed()
    again = load_dataset(ds.to_csv(), ds.dist_spec())
    np.testing.assert_array_equal(again.data, ds.data)
    assert again.dists == ds.dists and again.names == ds.names


@given(st.permutations(list(range(8))))
def test_recode_independent_of_row_order(perm):
    vals = ["b", "a", "c", "a", "b", "c", "c", "a"]
    text = "c\n" + "\n".join(vals[i] for i in perm) + "\n"
    ds = load_dataset(text, {"c": {"multinomial": 3}})
    mapping = {v: int(code) for v, code in zip((vals[i] for i in perm), ds.column(0))}
    assert mapping == {"a": 0, "b": 1, "c": 2}


def test_validate_constraints():
    cs = ConstraintSpec.empty(6, 2)
    assert validate_constraints(cs) == []
    ban = np.zeros((6, 6), int)
    ret = np.zeros((6, 6), int)
    ban[2, 5] = ret[2, 5] = 1
    v = validate_constraints(ConstraintSpec(ban, ret, (), 2))
    assert [(x.kind, x.row, x.col) for x in v] == [("Conflict", 2, 5)]
    ret = np.zeros((6, 6), int)
    ret[0, 1:4] = 1
    v = validate_constraints(ConstraintSpec(np.zeros((6, 6), int), ret, (), 2))
    assert [x.kind for x in v] == ["RetainOverflow"]


def test_constraint_csv_round_trip():
    names = ["a", "b", "c"]
    m = np.array([[0, 1, 0], [0, 0, 0], [1, 1, 0]])
    np.testing.assert_array_equal(read_constraint_csv(write_adjacency_csv(m, names), names), m)
