"""Executable law cases: the lemmas, theorems and minimality cases as checks.

A case either searches for a counterexample with hypothesis (shrinking it
when one turns up) or enumerates its input space outright. Expected-fail
cases pass only when the counterexample they are built to produce appears,
and in the named form.
"""

from __future__ import annotations

import itertools
import random
from pathlib import Path
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from hypothesis import HealthCheck, find, settings, strategies as st
from hypothesis.errors import NoSuchExample

from .agent import AgentState
from .contribution import Contribution, make_contribution
from .dag import ProvenanceDag, isomorphic, observationally_equivalent
from .network import convergence_failures, propagation_misses, run
from .policy import batching, fifo, lifo, reordering
from .scenario import random_scenario
from .semilattice import (
    GMAP,
    GSET,
    MAXINT,
    OVERWRITE,
    REGISTRY,
    bottom,
    gmap,
    gset,
    join,
    join_all,
    leq,
    maxint,
    overwrite,
)

# -- strategies -------------------------------------------------------------------------

def payloads(space: str) -> st.SearchStrategy:
    if space == GSET:
        return st.frozensets(st.sampled_from("abcdef"), max_size=4).map(lambda s: gset(*s))
    if space == MAXINT:
        return st.integers(0, 2**64 - 1).map(maxint)
    if space == GMAP:
        return st.dictionaries(st.sampled_from("fgh"), st.frozensets(st.sampled_from("xyz"), max_size=3),
                               max_size=3).map(gmap)
    if space == OVERWRITE:
        return st.integers(-5, 5).map(overwrite)
    raise ValueError(space)


@st.composite
def histories(draw, max_vertices: int = 8, max_len: int = 30) -> tuple[list[Contribution], list[int]]:
    """A lawful history plus a delivery sequence over it, with repeats."""
    n = draw(st.integers(1, max_vertices))
    out: list[Contribution] = []
    seqs = {1: 0, 2: 0, 3: 0}
    for i in range(n):
        picked = draw(st.sets(st.integers(0, i - 1), max_size=3)) if i else set()
        creator = draw(st.integers(1, 3))
        payload = draw(payloads(GSET))
        c = make_contribution(creator, seqs[creator], "k", {out[j].rid for j in picked}, payload,
                              {x.rid for x in out})
        seqs[creator] += 1
        out.append(c)
    order = draw(st.permutations(range(n)))
    extra = draw(st.lists(st.integers(0, n - 1), max_size=max_len - n))
    seq = list(order)
    for j, e in enumerate(extra):
        seq.insert(draw(st.integers(0, len(seq))), e)
    return out, seq


# -- cases ------------------------------------------------------------------------------

@dataclass(frozen=True)
class LawCase:
    """``prop`` returns None when the law holds for an input, or a short name
    for what broke. ``exhaustive`` cases supply their own inputs."""

    law_id: str
    description: str
    prop: Callable[[Any], str | None]
    strategy: st.SearchStrategy | None = None
    trials: int = 500
    exhaustive: Callable[[], Any] | None = None
    expect_failure: str | None = None


@dataclass
class LawResult:
    law_id: str
    passed: bool
    trials: int
    counterexample: Any = None
    broke: str | None = None
    expected_failure: str | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        note = f" (expected failure: {self.broke})" if self.expected_failure and self.passed else ""
        if not self.passed:
            note = f" counterexample={self.counterexample!r} broke={self.broke}"
        return f"{self.law_id}\t{status}\t{self.trials} trials{note}"


def run_law(case: LawCase, seed: int = 0, fixtures: Path | str | None = None) -> LawResult:
    """With ``fixtures`` set, any counterexample found is written there as
    ``<law id>.txt`` so it can be replayed by hand."""
    count = 0

    def broken(x) -> bool:
        nonlocal count
        count += 1
        return case.prop(x) is not None

    example, broke = None, None
    if case.exhaustive is not None:
        for x in case.exhaustive():
            if broken(x):
                example, broke = x, case.prop(x)
                break
    else:
        cfg = settings(max_examples=case.trials, database=None, deadline=None,
                       suppress_health_check=list(HealthCheck))
        try:
            example = find(case.strategy, broken, settings=cfg, random=random.Random(seed))
            broke = case.prop(example)
        except NoSuchExample:
            pass
    if case.expect_failure is None:
        passed = broke is None
    else:
        passed = broke == case.expect_failure
    if fixtures is not None and broke is not None:
        out = Path(fixtures)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{case.law_id}.txt").write_text(f"seed\t{seed}\nbroke\t{broke}\nexample\t{example!r}\n")
    return LawResult(case.law_id, passed, count, example, broke, case.expect_failure)


# -- semilattice laws -------------------------------------------------------------------

def aci_violation(triple) -> str | None:
    a, b, c = triple
    if join(join(a, b), c) != join(a, join(b, c)):
        return "associativity"
    if join(a, b) != join(b, a):
        return "commutativity"
    if join(a, a) != a:
        return "idempotence"
    if not (leq(a, join(a, b)) and leq(b, join(a, b))):
        return "inflationarity"
    if join(bottom(a.space), a) != a:
        return "bottom-identity"
    return None


def triples(space: str) -> st.SearchStrategy:
    p = payloads(space)
    return st.tuples(p, p, p)


# -- agent-level lemmas -----------------------------------------------------------------

def _replay(history) -> list[tuple[AgentState, Any]]:
    cs, seq = history
    agent = AgentState(9, {"k": GSET})
    steps = []
    for i in seq:
        before = (agent.state["k"], frozenset(agent.observed))
        agent.receive(cs[i])
        steps.append((agent, before, cs[i]))
    return steps


def monotonicity_violation(history) -> str | None:
    for agent, (before, _), _ in _replay(history):
        if not leq(before, agent.state["k"]):
            return "state decreased"
    return None


def preservation_violation(history) -> str | None:
    for agent, (_, seen), c in _replay(history):
        if not seen <= agent.observed:
            return "observed rid lost"
        known = agent.dag.known()
        if any(not leq(known[r].payload, agent.state["k"]) for r in agent.observed):
            return "payload overwritten"
    return None


def decomposability_violation(history) -> str | None:
    cs, seq = history
    steps = _replay(history)
    agent = steps[-1][0]
    unique = {cs[i].rid: cs[i].payload for i in seq}
    if agent.state["k"] != join_all(unique.values(), GSET):
        return "state is not the join of unique payloads"
    if agent.recomputed_state("k") != agent.state["k"]:
        return "incremental and recomputed states differ"
    half = len(cs) // 2
    left, right = [c.payload for c in cs[:half]], [c.payload for c in cs[half:]]
    if join_all(left + right, GSET) != join(join_all(left, GSET), join_all(right, GSET)):
        return "join does not split over a partition"
    return None


def order_violation(history) -> str | None:
    """Same multiset of deliveries in a different order, with and without repeats."""
    cs, seq = history
    a, b = AgentState(9, {"k": GSET}), AgentState(9, {"k": GSET})
    for i in seq:
        a.receive(cs[i])
    for i in sorted(set(seq), reverse=True):
        b.receive(cs[i])
    if a.state != b.state:
        return "state depends on arrival order"
    if a.dag.edges() != b.dag.edges() or set(a.dag.vertices) != set(b.dag.vertices):
        return "graph depends on arrival order"
    return None


FIVE_LISTS = [
    [gset("a"), gset("b"), gset("c"), gset("a", "d"), gset()],
    [maxint(3), maxint(9), maxint(0), maxint(9), maxint(2**64 - 1)],
    [gmap({"f": ["x"]}), gmap({"g": ["y"]}), gmap({"f": ["z"]}), gmap(), gmap({"f": ["x", "y"]})],
]


def permutations_with_repeats():
    for values in FIVE_LISTS:
        for perm in itertools.permutations(range(5)):
            yield values, perm, ()
            yield values, perm, (perm[0], perm[-1])


def permutation_violation(case) -> str | None:
    values, perm, repeats = case
    want = join_all(values)
    got = join_all([values[i] for i in perm] + [values[i] for i in repeats])
    return None if got == want else "join depends on order or multiplicity"


# -- system-level cases -----------------------------------------------------------------

def propagation_violation(seeds) -> str | None:
    sc_seed, net_seed = seeds
    sc = random_scenario(sc_seed, n_agents=4, n_contributions=8, n_keys=2)
    rec = run(sc, replace(sc.network, seed=net_seed))
    if rec.fault or rec.unfired:
        return "run did not complete"
    return "undelivered" if propagation_misses(rec, sc) else None


def uniqueness_violation(seeds) -> str | None:
    sc_seed, s1, s2 = seeds
    sc = random_scenario(sc_seed, n_agents=4, n_contributions=10, n_keys=2)
    a = run(sc, replace(sc.network, seed=s1))
    b = run(sc, replace(sc.network, seed=s2))
    if not isomorphic(a.global_dag, b.global_dag):
        return "non-isomorphic"
    if convergence_failures(a, sc) or convergence_failures(b, sc):
        return "no convergence"
    return None


POLICIES = {"fifo": fifo, "lifo": lifo, "batching": lambda: batching(2), "reordering": lambda: reordering(3)}


def policy_violation(args) -> str | None:
    sc_seed, p1, p2, seed = args
    sc = random_scenario(sc_seed, n_agents=4, n_contributions=10, n_keys=2)
    a = run(sc, replace(sc.network, seed=seed), POLICIES[p1]())
    b = run(sc, replace(sc.network, seed=seed + 1), POLICIES[p2]())
    if {c.rid for c in a.contributions} != {c.rid for c in b.contributions}:
        return "contribution sets differ"
    return None if isomorphic(a.global_dag, b.global_dag) else "non-isomorphic"


def equivalence_violation(seed) -> str | None:
    from .experiments import random_lawful_dag, relabeled, reparent_leaf

    rng = random.Random(f"p1-law:{seed}")
    base = random_lawful_dag(rng, rng.randint(2, 7))
    other = relabeled(base, str(seed)) if seed % 2 == 0 else reparent_leaf(base, rng)
    g1, g2 = ProvenanceDag(base), ProvenanceDag(other)
    return None if bool(isomorphic(g1, g2)) == bool(observationally_equivalent(g1, g2)) else "disagree"


def separation_violation(seed) -> str | None:
    from .experiments import crdt_separation

    return None if crdt_separation(seed).passed else "no separation"


def minimality_case(mode_name: str):
    def prop(seed_pair) -> str | None:
        from .violations import CONSISTENT, ViolationMode, run_violation

        v = run_violation(ViolationMode.parse(mode_name), seed_pair=seed_pair)
        return None if v.classification == CONSISTENT else v.classification

    return prop


seed_ints = st.integers(0, 2**32 - 1)

ALL_CASES: list[LawCase] = [
    *[LawCase("ACI", f"join laws on {s}", aci_violation, triples(s), 1000) for s in REGISTRY.lawful_tags()],
    LawCase("ACI", "join laws on the overwrite register", aci_violation, triples(OVERWRITE), 1000,
            expect_failure="commutativity"),
    LawCase("L1", "state never decreases along a delivery sequence", monotonicity_violation, histories(), 500),
    LawCase("L2", "order and repeats do not matter: all permutations of 5-element lists",
            permutation_violation, exhaustive=permutations_with_repeats),
    LawCase("L2", "agent state and graph do not depend on arrival order", order_violation, histories(), 500),
    LawCase("L3", "state is the join of unique payloads", decomposability_violation, histories(), 500),
    LawCase("L4", "fair delivery reaches every live relevant agent", propagation_violation,
            st.tuples(seed_ints, seed_ints), 500),
    LawCase("L5", "nothing observed is lost or overwritten", preservation_violation, histories(), 500),
    LawCase("THM1", "global graph unique and states converge", uniqueness_violation,
            st.tuples(seed_ints, seed_ints, seed_ints), 100),
    LawCase("THM2", "policies do not change the graph", policy_violation,
            st.tuples(seed_ints, st.sampled_from(sorted(POLICIES)), st.sampled_from(sorted(POLICIES)), seed_ints), 100),
    LawCase("P1", "observational equivalence iff isomorphism", equivalence_violation, seed_ints, 200),
    LawCase("P2", "equal values, distinguishable histories", separation_violation, seed_ints, 10),
    LawCase("T3-i", "no fairness breaks convergence", minimality_case("NoFairness"),
            st.tuples(seed_ints, seed_ints), 5, expect_failure="ValueDivergence"),
    LawCase("T3-ii", "non-semilattice merge breaks convergence", minimality_case("NonSemilattice"),
            st.tuples(seed_ints, seed_ints), 5, expect_failure="ValueDivergence"),
    LawCase("T3-iii", "duplicate rids leave the graph ill-defined", minimality_case("DuplicateRid"),
            st.tuples(seed_ints, seed_ints), 5, expect_failure="IllDefinedGraph"),
    LawCase("T3-iv", "mutable parents break uniqueness", minimality_case("MutableParents"),
            st.tuples(seed_ints, seed_ints), 5, expect_failure="StructuralAmbiguity"),
    LawCase("T3-v", "forward references allow cycles", minimality_case("CausalForgery"),
            st.tuples(seed_ints, seed_ints), 5, expect_failure="CycleDetected"),
]

# every result the guarantees rest on, and the law ids that exercise it
COVERAGE: dict[str, tuple[str, ...]] = {
    "Lemma 1 state monotonicity": ("L1",),
    "Lemma 2 order and duplicate independence": ("L2",),
    "Lemma 3 decomposability": ("L3",),
    "Lemma 4 eventual propagation": ("L4",),
    "Lemma 5 information preservation": ("L5",),
    "Axiom 2 join laws": ("ACI",),
    "Theorem 1 uniqueness and convergence": ("THM1",),
    "Theorem 2 policy independence": ("THM2",),
    "Proposition 1 observational equivalence": ("P1",),
    "Proposition 2 separation from state-only replication": ("P2",),
    "Theorem 3 case i": ("T3-i",),
    "Theorem 3 case ii": ("T3-ii",),
    "Theorem 3 case iii": ("T3-iii",),
    "Theorem 3 case iv": ("T3-iv",),
    "Theorem 3 case v": ("T3-v",),
}


def cases(law_id: str) -> list[LawCase]:
    return [c for c in ALL_CASES if c.law_id == law_id]


def coverage_gaps(cases_: list[LawCase] | None = None) -> list[str]:
    have = {c.law_id for c in (ALL_CASES if cases_ is None else cases_)}
    return [name for name, ids in COVERAGE.items() if not all(i in have for i in ids)]


def run_all(seed: int = 0, fixtures: Path | str | None = None) -> list[LawResult]:
    return [run_law(c, seed, fixtures) for c in ALL_CASES]
