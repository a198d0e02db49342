import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abnmle import ConstraintSpec, Dataset, build_cache, enumerate_parent_sets, node_scores
from abnmle.cache import ScoreCache, expected_count
from abnmle.errors import ConstraintConflict, ValidationError
from conftest import gaussian_dataset


def test_enumerate_counts():
    sets = enumerate_parent_sets(4, 2)
    assert [len(s) for s in sets] == [7, 7, 7, 7]
    assert all(s == sorted(s) for s in sets)


def test_enumerate_retain():
    ret = np.zeros((3, 3), int)
    ret[0, 2] = 1
    sets = enumerate_parent_sets(3, 2, ConstraintSpec(np.zeros((3, 3), int), ret, (), 2))
    assert sets[0] == [0b100, 0b110]


def test_enumerate_ban():
    ban = np.zeros((3, 3), int)
    ban[0, 1] = ban[0, 2] = 1
    sets = enumerate_parent_sets(3, 2, ConstraintSpec(ban, np.zeros((3, 3), int), (), 2))
    assert sets[0] == [0]


def test_enumerate_conflict():
    m = np.zeros((3, 3), int)
    m[0, 1] = 1
    with pytest.raises(ConstraintConflict):
        enumerate_parent_sets(3, 2, ConstraintSpec(m, m, (), 2))


@given(st.integers(2, 7), st.integers(1, 6), st.data())
def test_cache_completeness_formula(k, max_parents, data):
    ban = np.zeros((k, k), int)
    ret = np.zeros((k, k), int)
    child = data.draw(st.integers(0, k - 1))
    others = [i for i in range(k) if i != child]
    roles = data.draw(st.lists(st.sampled_from(["free", "ban", "retain"]), min_size=k - 1, max_size=k - 1))
    for i, role in zip(others, roles):
        if role == "ban":
            ban[child, i] = 1
        elif role == "retain":
            ret[child, i] = 1
    r, b = int(ret.sum()), int(ban.sum())
    if r > max_parents:
        return
    sets = enumerate_parent_sets(k, max_parents, ConstraintSpec(ban, ret, (), max_parents))
    assert len(sets[child]) == expected_count(k, max_parents, r, b)
    assert len(set(sets[child])) == len(sets[child])


def test_node_scores_arithmetic():
    mlik, aic, bic, mdl = node_scores(-100.0, 3, math.exp(2), 5, 0)
    assert (mlik, aic) == (-100.0, 106.0)
    assert bic == pytest.approx(103.0, abs=1e-12)
    assert mdl == pytest.approx(103.0 + math.log(5), abs=1e-12)


def test_node_scores_mdl_penalty_network():
    # C_k for parent-set sizes (0, 1, 1) at k = 3 is 5 log 3
    extra = sum(node_scores(-1.0, 2, 10, 3, m)[3] - node_scores(-1.0, 2, 10, 3, m)[2] for m in (0, 1, 1))
    assert extra == pytest.approx(5 * math.log(3), abs=1e-12)


def test_node_scores_rejects_zero_d():
    with pytest.raises(ValidationError):
        node_scores(-1.0, 0, 10, 3, 0)


def test_build_cache_count_and_determinism():
    ds = gaussian_dataset(4, 200, seed=1)
    cs = ConstraintSpec.empty(4, 2)
    a, b = build_cache(ds, cs), build_cache(ds, cs)
    assert len(a) == 28
    assert a.to_csv() == b.to_csv()


def test_cache_ten_nodes_entry_count():
    sets = enumerate_parent_sets(10, 5)
    assert [len(s) for s in sets] == [382] * 10


def test_cache_entry_invariants():
    cache = build_cache(gaussian_dataset(4, 300, seed=2), ConstraintSpec.empty(4, 3))
    for e in cache:
        assert not e.parents >> e.child & 1
        assert e.n_parents == bin(e.parents).count("1") <= 3
        assert e.aic == pytest.approx(-e.loglik + 2 * e.d, abs=1e-9)
        assert e.bic == pytest.approx(-e.loglik + e.d / 2 * math.log(300), abs=1e-9)
        assert e.mdl - e.bic == pytest.approx((1 + e.n_parents) * math.log(4), abs=1e-9)


def test_empty_parent_set_never_beats_supersets():
    cache = build_cache(gaussian_dataset(4, 300, seed=3), ConstraintSpec.empty(4, 3))
    for per in cache.entries:
        empty = per[0]
        assert empty.parents == 0
        assert all(e.loglik >= empty.loglik for e in per)


def test_adjustment_excluded_from_nodes():
    ds = gaussian_dataset(4, 200, seed=4)
    cache = build_cache(ds, ConstraintSpec.empty(4, 3, adjust=["v3"]))
    assert cache.node_names == ("v0", "v1", "v2")
    assert len(cache) == 3 * 4
    # every model carries the adjuster: intercept-only gaussian has d = 1 + 1 + 1
    assert cache.entries[0][0].d == 3


def test_bic_score_equivalence_two_nodes():
    rng = np.random.default_rng(5)
    x = rng.normal(size=500)
    y = 0.8 * x + rng.normal(size=500)
    cache = build_cache(Dataset(("x", "y"), np.c_[x, y], ("gaussian", "gaussian")), ConstraintSpec.empty(2, 1))
    x_to_y = cache.lookup(0, 0).bic + cache.lookup(1, 0b01).bic
    y_to_x = cache.lookup(0, 0b10).bic + cache.lookup(1, 0).bic
    assert x_to_y == pytest.approx(y_to_x, abs=1e-8)


def test_cache_csv_round_trip():
    cache = build_cache(gaussian_dataset(3, 100, seed=6), ConstraintSpec.empty(3, 2))
    again = ScoreCache.from_csv(cache.to_csv())
    assert again.node_names == cache.node_names
    assert list(again) == list(cache)
    assert again.to_csv() == cache.to_csv()


def test_cache_threads_identical():
    ds = gaussian_dataset(4, 200, seed=7)
    cs = ConstraintSpec.empty(4, 3)
    assert build_cache(ds, cs, threads=1).to_csv() == build_cache(ds, cs, threads=3).to_csv()


def test_mixed_cache_methods():
    from abnmle import random_dag, simulate_data

    gt = random_dag(4, 0.5, ["gaussian", "binomial", "poisson", {"multinomial": 3}], seed=3)
    ds = simulate_data(gt, 800, seed=4)
    cache = build_cache(ds, ConstraintSpec.empty(4, 3))
    assert len(cache) == 4 * 8
    assert {e.method for e in cache} <= {"irls", "firth", "multinomial_ml", "multinomial_ridge"} | {
        "rank_reduced+" + m for m in ("irls", "firth", "multinomial_ml", "multinomial_ridge")
    }
