"""Entity scoring: exact-match counting, micro pooling, report plumbing."""

import numpy as np
import pytest

from docread.corpus import EntitySchema
from docread.evaluate import (
    EntityScore,
    merge_reports,
    normalize_value,
    score,
)

from oracles import f1_counting_oracle, prf_from_counts


def random_entity_map(rng, names, max_values=3):
    out = {}
    for name in names:
        n = int(rng.integers(0, max_values + 1))
        if n:
            out[name] = [f"v{int(rng.integers(0, 6))}" for _ in range(n)]
    return out


def test_perfect_prediction():
    gold = {"date": ["2020-01-01"], "total": ["9.00", "12.50"]}
    rep = score(dict(gold), gold)
    assert rep.micro.f1 == 1.0
    assert rep.micro.tp == 3 and rep.micro.fp == 0 and rep.micro.fn == 0


def test_miss_and_spurious():
    rep = score({"date": ["x"]}, {"date": ["y"], "total": ["z"]})
    assert rep.micro.tp == 0
    assert rep.micro.fp == 1
    assert rep.micro.fn == 2
    assert rep.micro.f1 == 0.0


def test_duplicate_values_consume_one_to_one():
    rep = score({"code": ["A", "A", "A"]}, {"code": ["A", "A"]})
    assert (rep.micro.tp, rep.micro.fp, rep.micro.fn) == (2, 1, 0)


def test_value_crossing_entities_does_not_count():
    rep = score({"date": ["X"]}, {"total": ["X"]})
    assert rep.micro.tp == 0 and rep.micro.fp == 1 and rep.micro.fn == 1


def test_trim_and_casefold():
    rep = score({"date": ["  ABC "]}, {"date": ["abc"]})
    assert rep.micro.f1 == 1.0
    strict = score({"date": ["  ABC "]}, {"date": ["abc"]}, trim=False, casefold=False)
    assert strict.micro.f1 == 0.0
    assert normalize_value(" A b\t") == "a b"


def test_matches_counting_oracle_many_times():
    rng = np.random.default_rng([71, 0])
    names = ("date", "total", "code", "tax")
    for _ in range(1000):
        pred = random_entity_map(rng, names)
        gold = random_entity_map(rng, names)
        rep = score(pred, gold)
        tp, fp, fn = f1_counting_oracle(pred, gold)
        assert (rep.micro.tp, rep.micro.fp, rep.micro.fn) == (tp, fp, fn)
        _, _, f1 = prf_from_counts(tp, fp, fn)
        assert rep.micro.f1 == pytest.approx(f1)


def test_value_order_is_irrelevant():
    rng = np.random.default_rng([71, 1])
    names = ("a", "b")
    for _ in range(200):
        pred = random_entity_map(rng, names)
        gold = random_entity_map(rng, names)
        shuffled = {k: list(rng.permutation(v)) for k, v in pred.items()}
        a = score(pred, gold)
        b = score(shuffled, gold)
        assert (a.micro.tp, a.micro.fp, a.micro.fn) == (b.micro.tp, b.micro.fp, b.micro.fn)


def test_micro_recomputes_from_per_entity():
    rng = np.random.default_rng([71, 2])
    names = ("x", "y", "z")
    for _ in range(50):
        rep = score(random_entity_map(rng, names), random_entity_map(rng, names))
        assert rep.micro.tp == sum(s.tp for s in rep.per_entity.values())
        assert rep.micro.fp == sum(s.fp for s in rep.per_entity.values())
        assert rep.micro.fn == sum(s.fn for s in rep.per_entity.values())


def test_unknown_entity_warns_but_counts():
    schema = EntitySchema(("date",))
    with pytest.warns(UserWarning, match="unknown entities"):
        rep = score({"mystery": ["q"]}, {"date": ["d"]}, schema=schema)
    assert rep.per_entity["mystery"].fp == 1


def test_empty_maps():
    rep = score({}, {})
    assert rep.micro.f1 == 0.0
    assert rep.micro.tp == 0


def test_entity_score_edge_rates():
    assert EntityScore(0, 0, 0).precision == 0.0
    assert EntityScore(0, 0, 0).recall == 0.0
    assert EntityScore(0, 0, 0).f1 == 0.0
    assert EntityScore(3, 1, 0).recall == 1.0


def test_macro_f1_averages_entities():
    rep = score(
        {"a": ["1"], "b": ["x"]},
        {"a": ["1"], "b": ["y"]},
    )
    assert rep.macro_f1 == pytest.approx((1.0 + 0.0) / 2)


def test_merge_reports_pools_counts():
    r1 = score({"a": ["1"]}, {"a": ["1"]})
    r2 = score({"a": ["2"]}, {"a": ["3"], "b": ["4"]})
    merged = merge_reports([r1, r2])
    assert merged.per_entity["a"].tp == 1
    assert merged.per_entity["a"].fp == 1
    assert merged.per_entity["a"].fn == 1
    assert merged.per_entity["b"].fn == 1
    assert merged.micro.tp == 1


def test_merge_rejects_mixed_fingerprints():
    r1 = score({"a": ["1"]}, {"a": ["1"]})
    r2 = score({"a": ["1"]}, {"a": ["1"]}, casefold=False)
    with pytest.raises(ValueError, match="fingerprints"):
        merge_reports([r1, r2])
    with pytest.raises(ValueError, match="no reports"):
        merge_reports([])


def test_as_dict_shape():
    rep = score({"a": ["1"]}, {"a": ["1", "2"]})
    d = rep.as_dict()
    assert d["micro"]["tp"] == 1
    assert d["per_entity"]["a"]["fn"] == 1
    assert "fingerprint" in d and "macro_f1" in d
