import itertools
import random

import networkx as nx
import pytest
from networkx.algorithms.isomorphism import DiGraphMatcher

from dcs.contribution import Contribution, make_contribution
from dcs.dag import (
    CycleDetected,
    ProvenanceDag,
    RidCollision,
    UnknownRid,
    UnsealedDag,
    isomorphic,
    observationally_equivalent,
)
from dcs.experiments import random_lawful_dag, relabeled, reparent_leaf
from dcs.semilattice import gset
from dcs.violations import forgery_factory


def fig6():
    x = make_contribution(1, 0, "k", (), gset("x"), ())
    y = make_contribution(2, 0, "k", (), gset("y"), ())
    y_after_x = make_contribution(2, 0, "k", {x.rid}, gset("y"), {x.rid})
    return ProvenanceDag([x, y]), ProvenanceDag([x, y_after_x]), x, y, y_after_x


def random_history(seed, n, p=0.3):
    """Parents drawn from any earlier vertex; not necessarily antichains."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        parents = {c.rid for c in out if rng.random() < p}
        out.append(make_contribution(rng.randint(1, 3), i, "k", parents, gset(f"v{i}"), {c.rid for c in out}))
    return out


def closure_oracle(cs):
    """Floyd-Warshall reachability over the parent edges."""
    ids = [c.rid for c in cs]
    idx = {r: i for i, r in enumerate(ids)}
    n = len(ids)
    reach = [[False] * n for _ in range(n)]
    for c in cs:
        for p in c.parents:
            reach[idx[p]][idx[c.rid]] = True
    for k in range(n):
        for i in range(n):
            if reach[i][k]:
                for j in range(n):
                    if reach[k][j]:
                        reach[i][j] = True
    return {(ids[i], ids[j]) for i in range(n) for j in range(n) if reach[i][j]}


def nx_isomorphic(g1: ProvenanceDag, g2: ProvenanceDag) -> bool:
    def to_nx(g):
        d = nx.DiGraph()
        for r, c in g.vertices.items():
            d.add_node(r, label=c.label())
        d.add_edges_from(g.edges())
        return d

    m = DiGraphMatcher(to_nx(g1), to_nx(g2), node_match=lambda a, b: a["label"] == b["label"])
    return m.is_isomorphic()


def test_insert_root():
    g = ProvenanceDag([make_contribution(1, 0, "k", (), gset("x"), ())])
    assert len(g) == 1 and g.edges() == set()


def test_insert_chain():
    _, chain, x, _, yx = fig6()
    assert len(chain) == 2
    assert chain.edges() == {(x.rid, yx.rid)}


def test_duplicate_insert_is_noop_and_collision_raises():
    _, _, x, _, _ = fig6()
    g = ProvenanceDag([x])
    assert g.insert(x) is False
    other = Contribution(x.rid, frozenset(), gset("other"), "k", 2, 0)
    with pytest.raises(RidCollision):
        g.insert(other)


def test_forged_mutual_parents_close_a_cycle():
    r1 = forgery_factory(1, 0, "k", {"r2"}, gset("r1"), set())
    r2 = forgery_factory(2, 0, "k", {r1.rid}, gset("r2"), set())
    r1 = forgery_factory(1, 0, "k", {r2.rid}, gset("r1"), set())
    g = ProvenanceDag()
    g.insert(r1)
    with pytest.raises(CycleDetected):
        g.insert(r2)


def test_self_parent_is_a_cycle():
    c = Contribution("aa", frozenset({"aa"}), gset("x"), "k", 1, 0)
    with pytest.raises(CycleDetected):
        ProvenanceDag([c])


def test_out_of_order_insert_buffers_then_seals():
    cs = random_history(3, 10)
    g = ProvenanceDag()
    for c in reversed(cs):
        g.insert(c)
    assert g.sealed
    assert g.edges() == ProvenanceDag(cs).edges()


def test_delta_lists_dangling_parents():
    x = make_contribution(1, 0, "k", (), gset("x"), ())
    y = make_contribution(2, 0, "k", {x.rid}, gset("y"), {x.rid})
    g = ProvenanceDag([y])
    assert not g.sealed
    assert g.delta().dangling == {x.rid}
    with pytest.raises(UnsealedDag):
        g.topological_layers()
    g.insert(x)
    assert g.sealed and g.delta().dangling == set()


def test_two_parents_committed_in_one_cascade():
    a = make_contribution(1, 0, "k", (), gset("a"), ())
    b = make_contribution(2, 0, "k", {a.rid}, gset("b"), {a.rid})
    c = make_contribution(3, 0, "k", {a.rid, b.rid}, gset("c"), {a.rid, b.rid})
    g = ProvenanceDag([c, b, a])
    assert g.sealed and len(g) == 3


def test_ancestor_queries_fig6():
    concurrent, chain, x, y, yx = fig6()
    assert chain.is_ancestor(x.rid, yx.rid)
    assert not chain.is_ancestor(yx.rid, yx.rid)
    assert concurrent.are_concurrent(x.rid, y.rid)
    assert not chain.are_concurrent(x.rid, yx.rid)
    assert not concurrent.are_concurrent(x.rid, x.rid)
    with pytest.raises(UnknownRid):
        chain.is_ancestor(x.rid, "ff" * 32)


@pytest.mark.parametrize("seed", range(20))
def test_ancestors_match_closure_oracle(seed):
    cs = random_history(seed, 10)
    g = ProvenanceDag(cs)
    reach = closure_oracle(cs)
    for a, b in itertools.product(cs, cs):
        assert g.is_ancestor(a.rid, b.rid) == ((a.rid, b.rid) in reach)


def test_layers_fig6():
    concurrent, chain, x, y, yx = fig6()
    assert concurrent.topological_layers() == [sorted([x.rid, y.rid])]
    assert chain.topological_layers() == [[x.rid], [yx.rid]]


def longest_path_oracle(cs):
    parents = {c.rid: c.parents for c in cs}

    def depth(r):
        return 0 if not parents[r] else 1 + max(depth(p) for p in parents[r])

    return max(depth(c.rid) for c in cs)


@pytest.mark.parametrize("seed", range(20))
def test_layer_count_is_longest_path_plus_one(seed):
    cs = random_history(seed, 8, 0.4)
    layers = ProvenanceDag(cs).topological_layers()
    assert len(layers) == 1 + longest_path_oracle(cs)
    assert all(layer == sorted(layer) for layer in layers)


@pytest.mark.parametrize("seed", range(5))
def test_insertion_order_does_not_matter(seed):
    cs = random_history(seed, 12)
    rng = random.Random(seed)
    texts = set()
    graphs = []
    for _ in range(20):
        order = list(cs)
        rng.shuffle(order)
        g = ProvenanceDag(order)
        graphs.append(g)
        texts.add(g.to_text())
    assert len(texts) == 1
    assert all(isomorphic(graphs[0], g) for g in graphs[1:])


def test_isomorphic_self_and_fig6():
    concurrent, chain, *_ = fig6()
    res = isomorphic(chain, chain)
    assert res and all(k == v for k, v in res.mapping.items())
    assert not isomorphic(concurrent, chain)


@pytest.mark.parametrize("seed", range(40))
def test_isomorphism_agrees_with_networkx(seed):
    rng = random.Random(seed)
    base = random_lawful_dag(rng, rng.randint(2, 8))
    other = relabeled(base, "s") if seed % 2 else (reparent_leaf(base, rng) or base)
    g1, g2 = ProvenanceDag(base), ProvenanceDag(other)
    assert bool(isomorphic(g1, g2)) == nx_isomorphic(g1, g2)


@pytest.mark.parametrize("seed", range(10))
def test_isomorphism_is_an_equivalence(seed):
    rng = random.Random(seed)
    base = random_lawful_dag(rng, 6)
    a, b, c = ProvenanceDag(base), ProvenanceDag(relabeled(base, "1")), ProvenanceDag(relabeled(base, "2"))
    assert isomorphic(a, a)
    assert bool(isomorphic(a, b)) == bool(isomorphic(b, a))
    assert isomorphic(a, b) and isomorphic(b, c) and isomorphic(a, c)


def test_isomorphism_with_duplicate_labels():
    # two identical-label events distinguished only by rid, as under a broken rid scheme
    def v(rid, parents=()):
        return Contribution(rid, frozenset(parents), gset("x"), "k", 1, 0)

    g1 = ProvenanceDag([v("a"), v("b"), v("c", ["a"])])
    g2 = ProvenanceDag([v("p"), v("q"), v("r", ["q"])])
    g3 = ProvenanceDag([v("p"), v("q"), v("r", ["p", "q"])])
    assert isomorphic(g1, g2)
    assert not isomorphic(g1, g3)
    assert nx_isomorphic(g1, g2) and not nx_isomorphic(g1, g3)
    assert observationally_equivalent(g1, g2)
    assert not observationally_equivalent(g1, g3)


def test_observational_equivalence_fig6():
    concurrent, chain, x, y, yx = fig6()
    assert observationally_equivalent(chain, chain)
    res = observationally_equivalent(concurrent, chain)
    assert not res
    assert res.query.kind == "isAncestor"
    assert res.query.answer1 is False and res.query.answer2 is True


def test_observational_equivalence_needs_sealed():
    x = make_contribution(1, 0, "k", (), gset("x"), ())
    y = make_contribution(2, 0, "k", {x.rid}, gset("y"), {x.rid})
    with pytest.raises(UnsealedDag):
        observationally_equivalent(ProvenanceDag([y]), ProvenanceDag([x, y]))


@pytest.mark.parametrize("seed", range(100))
def test_observational_equivalence_iff_isomorphic(seed):
    rng = random.Random(f"pairs:{seed}")
    base = random_lawful_dag(rng, rng.randint(2, 8))
    other = relabeled(base, str(seed)) if seed % 2 == 0 else reparent_leaf(base, rng)
    g1, g2 = ProvenanceDag(base), ProvenanceDag(other)
    assert bool(observationally_equivalent(g1, g2)) == bool(isomorphic(g1, g2)) == (seed % 2 == 0)


def test_reachability_blind_spot():
    # a transitively implied extra edge changes the graph but no ancestor query
    a = make_contribution(1, 0, "k", (), gset("a"), ())
    b = make_contribution(1, 1, "k", {a.rid}, gset("b"), {a.rid})
    c1 = make_contribution(1, 2, "k", {b.rid}, gset("c"), {a.rid, b.rid})
    c2 = Contribution(c1.rid, frozenset({a.rid, b.rid}), c1.payload, "k", 1, 2)
    g1, g2 = ProvenanceDag([a, b, c1]), ProvenanceDag([a, b, c2])
    assert not isomorphic(g1, g2)
    assert observationally_equivalent(g1, g2)


def test_exports_are_deterministic():
    _, chain, x, _, yx = fig6()
    assert chain.to_text() == ProvenanceDag(reversed(list(chain))).to_text()
    dot = chain.to_dot()
    assert dot.startswith("digraph") and f'"{x.rid}" -> "{yx.rid}"' in dot
