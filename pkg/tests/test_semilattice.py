import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from dcs.semilattice import (
    GMAP,
    GSET,
    MAXINT,
    OVERWRITE,
    REGISTRY,
    MixedStateSpace,
    UnknownStateSpace,
    bottom,
    from_canonical,
    from_json,
    gmap,
    gset,
    join,
    join_all,
    leq,
    maxint,
    overwrite,
    overwrite_merge,
)
from dcs.laws import payloads

GROUND = "abc"
SUBSETS = [frozenset(s) for r in range(4) for s in itertools.combinations(GROUND, r)]


def test_fig6_union():
    assert join(gset("x"), gset("y")) == gset("x", "y")


def test_maxint_idempotent_at_zero():
    assert join(maxint(0), maxint(0)) == maxint(0)


def test_join_matches_subset_union_oracle():
    assert len(SUBSETS) == 8
    for a, b in itertools.product(SUBSETS, SUBSETS):
        assert join(gset(*a), gset(*b)) == gset(*(a | b))


def test_leq_matches_subset_oracle():
    for a, b in itertools.product(SUBSETS, SUBSETS):
        assert leq(gset(*a), gset(*b)) == (a <= b)


def test_leq_examples():
    assert leq(gset(), gset("x"))
    assert not leq(maxint(3), maxint(2))


def test_mixed_spaces_rejected():
    with pytest.raises(MixedStateSpace):
        join(gset("x"), maxint(1))
    with pytest.raises(MixedStateSpace):
        leq(maxint(1), gset())
    with pytest.raises(MixedStateSpace):
        join_all([gset("x"), maxint(1)])


def test_unknown_space():
    with pytest.raises(UnknownStateSpace):
        REGISTRY.get("pn-counter")


def test_join_all_empty_is_bottom():
    assert join_all([], GSET) == gset()
    assert join_all([], MAXINT) == maxint(0)
    with pytest.raises(ValueError):
        join_all([])


def test_join_all_absorbs_duplicates():
    assert join_all([gset("x"), gset("y"), gset("x")]) == gset("x", "y")


def test_join_all_all_720_permutations():
    rng = random.Random(5)
    values = [gset(*rng.sample("abcdefgh", rng.randint(0, 3))) for _ in range(6)]
    want = gset(*set().union(*(v.value for v in values)))
    results = {join_all(list(p)) for p in itertools.permutations(values)}
    assert results == {want}


def test_overwrite_schedules():
    s = overwrite(0)
    assert overwrite_merge(overwrite_merge(s, overwrite(1)), overwrite(2)) == overwrite(2)
    assert overwrite_merge(overwrite_merge(s, overwrite(2)), overwrite(1)) == overwrite(1)
    assert overwrite_merge(overwrite(4), overwrite(4)) == overwrite(4)


def test_overwrite_is_not_commutative():
    a, b = overwrite(1), overwrite(2)
    assert join(a, b) != join(b, a)
    assert OVERWRITE not in REGISTRY.lawful_tags()


def test_gmap_pointwise_union():
    a = gmap({"f": ["x"], "g": ["y"]})
    b = gmap({"f": ["z"]})
    assert join(a, b) == gmap({"f": ["x", "z"], "g": ["y"]})
    # empty entries carry no information
    assert gmap({"f": []}) == gmap()


def test_maxint_range():
    with pytest.raises(ValueError):
        maxint(-1)
    with pytest.raises(ValueError):
        maxint(2**64)


@pytest.mark.parametrize("space", [GSET, MAXINT, GMAP, OVERWRITE])
@settings(max_examples=200)
@given(data=st.data())
def test_canonical_roundtrip(space, data):
    v = data.draw(payloads(space))
    assert from_canonical(space, v.canonical_bytes()) == v
    assert from_json(space, v.to_json()) == v


def test_canonical_bytes_are_order_free():
    assert gset("b", "a").canonical_bytes() == gset("a", "b").canonical_bytes()
    assert maxint(1).canonical_bytes() == (1).to_bytes(8, "big")


@pytest.mark.parametrize("space", [GSET, MAXINT, GMAP])
@settings(max_examples=300)
@given(data=st.data())
def test_lawful_spaces_satisfy_aci(space, data):
    a, b, c = (data.draw(payloads(space)) for _ in range(3))
    assert join(join(a, b), c) == join(a, join(b, c))
    assert join(a, b) == join(b, a)
    assert join(a, a) == a
    assert leq(a, join(a, b))
    assert join(bottom(space), a) == a
