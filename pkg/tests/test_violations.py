import pytest

from dcs.contribution import FindingKind, make_contribution, validate_contribution
from dcs.dag import isomorphic
from dcs.semilattice import gset, maxint, overwrite
from dcs.violations import (
    CONSISTENT,
    CYCLE,
    ILL_DEFINED,
    STRUCTURAL,
    VALUE,
    VIOLATIONS,
    ViolationMode,
    ambiguity_rate,
    ambiguity_table,
    canonical_scenario,
    forgery_factory,
    lawful_counterpart,
    local_counter_factory,
    local_counter_rid,
    run_violation,
    seed_pairs,
)

EXPECTED = {
    ViolationMode.NO_FAIRNESS: VALUE,
    ViolationMode.NON_SEMILATTICE: VALUE,
    ViolationMode.DUPLICATE_RID: ILL_DEFINED,
    ViolationMode.MUTABLE_PARENTS: STRUCTURAL,
    ViolationMode.CAUSAL_FORGERY: CYCLE,
}


@pytest.mark.parametrize("mode", VIOLATIONS, ids=lambda m: m.value)
def test_each_mode_fails_in_its_own_way(mode):
    v = run_violation(mode)
    assert v.classification == EXPECTED[mode], v.detail
    assert v.ambiguous


@pytest.mark.parametrize("mode", VIOLATIONS, ids=lambda m: m.value)
def test_lawful_counterpart_is_consistent(mode):
    v = run_violation(ViolationMode.LAWFUL, canonical_scenario(mode))
    assert v.classification == CONSISTENT, v.detail
    assert v.isomorphic and v.values_equal


def test_partitioned_agent_never_hears():
    v = run_violation(ViolationMode.NO_FAIRNESS)
    for rec in v.records:
        assert rec.agents[2].state["k"] == gset()
        assert rec.agents[1].state["k"] == gset("a_r")


def test_overwrite_order_decides_the_value():
    v = run_violation(ViolationMode.NON_SEMILATTICE)
    assert v.states(0)[3]["k"] == overwrite(2)
    assert v.states(1)[3]["k"] == overwrite(1)


def test_lawful_swap_uses_max():
    s = lawful_counterpart(canonical_scenario(ViolationMode.NON_SEMILATTICE))
    assert {spec.space for spec in s.keys.values()} == {"maxint"}
    v = run_violation(ViolationMode.LAWFUL, canonical_scenario(ViolationMode.NON_SEMILATTICE))
    assert v.states(0)[3]["k"] == v.states(1)[3]["k"] == maxint(2)


def test_local_counters_collide():
    a = local_counter_factory(1, 0, "k", (), gset("data_A"), ())
    b = local_counter_factory(2, 0, "k", (), gset("data_B"), ())
    assert a.rid == b.rid == local_counter_rid(0)
    assert FindingKind.RID_COLLISION in [f.kind for f in validate_contribution(b, {a.rid: a})]


def test_forgery_skips_the_observation_check():
    c = forgery_factory(1, 0, "k", {"ab" * 32}, gset("x"), set())
    assert c.parents == {"ab" * 32}
    # the rid ignores parents, so a forward reference can be predicted
    assert c.rid == forgery_factory(1, 0, "k", (), gset("x"), set()).rid


def test_mutable_parents_changes_a_local_view():
    v = run_violation(ViolationMode.MUTABLE_PARENTS)
    a, b = v.records
    assert any(not isomorphic(a.agents[x].dag, b.agents[x].dag) for x in a.agents)


def test_rates_on_a_few_trials():
    assert ambiguity_rate(ViolationMode.CAUSAL_FORGERY, trials=5) == 1.0
    assert ambiguity_rate(ViolationMode.LAWFUL, canonical_scenario(ViolationMode.CAUSAL_FORGERY), trials=5) == 0.0
    with pytest.raises(ValueError):
        ambiguity_rate(ViolationMode.LAWFUL, canonical_scenario(ViolationMode.DUPLICATE_RID), trials=0)


def test_lawful_needs_a_scenario():
    with pytest.raises(ValueError):
        run_violation(ViolationMode.LAWFUL)


def test_seed_pairs_are_reproducible():
    assert seed_pairs(5, 3) == seed_pairs(5, 3)
    assert seed_pairs(5, 3) != seed_pairs(5, 4)


def test_table_shape():
    rows = ambiguity_table(trials=3)
    assert [r.rate for r in rows] == [0.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    assert rows[0].trials == 3 * 5
    assert [r.extension for r in rows[1:]] == [True, True, True, False, False]


@pytest.mark.parametrize("text", ["causal-forgery", "CausalForgery", "causal_forgery", "CAUSAL_FORGERY"])
def test_mode_parsing(text):
    assert ViolationMode.parse(text) is ViolationMode.CAUSAL_FORGERY


def test_unknown_mode():
    with pytest.raises(ValueError):
        ViolationMode.parse("byzantine")
