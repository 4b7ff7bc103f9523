import random

import pytest

from dcs.agent import FIRST_OBSERVED, FRONTIER, AgentState, InvalidContribution, NotSubscribed
from dcs.contribution import CausalViolation, Contribution, make_contribution
from dcs.dag import RidCollision
from dcs.semilattice import GSET, MAXINT, gset, maxint
from dcs.violations import mutate_parents


def agent(i=1, **kw):
    return AgentState(i, {"k": GSET, "m": MAXINT}, **kw)


def test_receive_joins_and_dedups():
    a = agent()
    c = make_contribution(2, 0, "k", (), gset("x"), ())
    assert a.receive(c) is True
    assert a.receive(c) is False
    assert a.state["k"] == gset("x")
    assert a.observed == {c.rid}


def test_receive_unsubscribed_key():
    a = AgentState(1, {"k": GSET})
    c = make_contribution(2, 0, "other", (), gset("x"), ())
    with pytest.raises(NotSubscribed):
        a.receive(c)


def test_contribute_advances_seq_and_observes_itself():
    a = agent()
    c1 = a.contribute("k", gset("x"))
    c2 = a.contribute("k", gset("y"))
    assert (c1.creator_seq, c2.creator_seq) == (0, 1)
    assert c2.parents == {c1.rid}
    assert a.state["k"] == gset("x", "y")


def test_contribute_rejects_unobserved_parent():
    with pytest.raises(CausalViolation):
        agent().contribute("k", gset("x"), ["ab" * 32])


def test_strict_receiver_rejects_tampered_parents():
    a, b = agent(1), agent(2)
    x = a.contribute("k", gset("x"))
    b.receive(x)
    y = b.contribute("k", gset("y"))
    with pytest.raises(InvalidContribution):
        a.receive(mutate_parents(y, ()))


def test_forged_copy_leaves_state_alone():
    # the digest check catches a reused rid before the dag sees it
    a = agent()
    x = make_contribution(2, 0, "k", (), gset("x"), ())
    a.receive(x)
    with pytest.raises(InvalidContribution):
        a.receive(Contribution(x.rid, frozenset(), gset("evil"), "k", 3, 0))
    assert a.state["k"] == gset("x")


def test_lenient_receiver_keeps_first_version():
    a = agent(strict=False)
    x = make_contribution(2, 0, "k", (), gset("x"), ())
    a.receive(x)
    assert a.receive(x) is False
    with pytest.raises(RidCollision):
        a.receive(Contribution(x.rid, frozenset(), gset("evil"), "k", 3, 0))


def test_first_observed_rule():
    a = agent()
    m = make_contribution(2, 0, "m", (), maxint(3), ())
    x = make_contribution(3, 0, "k", (), gset("x"), ())
    y = make_contribution(4, 0, "k", (), gset("y"), ())
    for c in (m, y, x):
        a.receive(c)
    assert a.select_parents("k", FIRST_OBSERVED) == {y.rid}
    assert a.select_parents("m", FIRST_OBSERVED) == {m.rid}


def test_unknown_selection_rule():
    with pytest.raises(ValueError):
        agent().select_parents("k", "latest")


def frontier_oracle(view, key):
    """Maximal elements by pairwise ancestor checks over the transitive parent relation."""
    by_rid = {c.rid: c for c in view}

    def ancestors(r):
        out, stack = set(), list(by_rid[r].parents)
        while stack:
            p = stack.pop()
            if p in by_rid and p not in out:
                out.add(p)
                stack.extend(by_rid[p].parents)
        return out

    mine = [c.rid for c in view if c.key == key]
    return {r for r in mine if not any(r in ancestors(o) for o in mine if o != r)}


@pytest.mark.parametrize("seed", range(50))
def test_local_frontier_matches_oracle(seed):
    rng = random.Random(seed)
    history = []
    for i in range(rng.randint(1, 12)):
        key = rng.choice("km")
        same = [c.rid for c in history if c.key == key]
        parents = set(rng.sample(same, rng.randint(0, min(2, len(same))))) if same else set()
        payload = gset(f"v{i}") if key == "k" else maxint(i)
        history.append(make_contribution(rng.randint(1, 3), i, key, parents, payload, {c.rid for c in history}))
    a = agent(9)
    view = [c for c in history if rng.random() < 0.8] or history[:1]
    # a view closed under parents, as any sealed local view is
    closed = {c.rid for c in view}
    for c in history[::-1]:
        if c.rid in closed:
            closed |= c.parents
    view = [c for c in history if c.rid in closed]
    for c in view:
        a.receive(c)
    for key in "km":
        assert a.local_frontier(key) == frontier_oracle(view, key)
    assert a.select_parents("k", FRONTIER) == a.local_frontier("k")
    assert a.recomputed_state("k") == a.state["k"]


def test_snapshot_is_detached():
    a = agent()
    a.contribute("k", gset("x"))
    snap = a.snapshot()
    a.contribute("k", gset("y"))
    assert len(snap.dag) == 1 and len(snap.observed) == 1
