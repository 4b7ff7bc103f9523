"""The ten acceptance criteria, each at its stated tolerance and time limit.

A summary line per criterion is printed at the end of the run.
"""

import random
import time
from pathlib import Path

import pytest

from dcs.cli import main as cli
from dcs.experiments import (
    PERFORMANCE_TASKS,
    ROUTING_TASKS,
    crdt_separation,
    default_policies,
    performance,
    proposition_one_check,
    routing_study,
    routing_theorem_two,
    theorem_one_sweep,
    theorem_two_matrix,
)
from dcs.laws import cases, run_law
from dcs.scenario import random_scenario
from dcs.semilattice import GMAP, GSET, MAXINT, REGISTRY, bottom, gmap, gset, join, leq, maxint
from dcs.violations import (
    CYCLE,
    ILL_DEFINED,
    STRUCTURAL,
    VALUE,
    ViolationMode,
    ambiguity_table,
    run_violation,
)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def measured(record, text):
    record("measured", text)


# -- AC1 -------------------------------------------------------------------------------

def random_value(rng: random.Random, space: str):
    if space == GSET:
        return gset(*rng.sample("abcdefgh", rng.randint(0, 5)))
    if space == MAXINT:
        return maxint(rng.choice([0, rng.randint(0, 10), rng.getrandbits(64)]))
    return gmap({f: rng.sample("uvwxyz", rng.randint(0, 3)) for f in rng.sample("fgh", rng.randint(0, 3))})


@pytest.mark.criterion("AC1")
def test_ac1_semilattice_laws(record_property):
    n = 1000
    rng = random.Random("ac1")
    with Timer() as t:
        for space in (GSET, MAXINT, GMAP):
            bot = bottom(space)
            for _ in range(n):
                a, b, c = (random_value(rng, space) for _ in range(3))
                assert join(join(a, b), c) == join(a, join(b, c)), (space, a, b, c)
                assert join(a, b) == join(b, a), (space, a, b)
                assert join(a, a) == a, (space, a)
                assert leq(a, join(a, b)) and leq(b, join(a, b)), (space, a, b)
                assert join(bot, a) == a == join(a, bot), (space, a)
    assert sorted(REGISTRY.lawful_tags()) == sorted([GSET, MAXINT, GMAP])
    assert t.elapsed < 5.0
    measured(record_property, f"{n} triples x 3 spaces, exact, {t.elapsed:.2f}s")


# -- AC2 -------------------------------------------------------------------------------

@pytest.mark.criterion("AC2")
def test_ac2_theorem_one(record_property):
    scenario = random_scenario(0, n_agents=5, n_contributions=20)
    assert scenario.network.fairness_enabled
    with Timer() as t:
        report = theorem_one_sweep(scenario, n_seeds=100)
    report.check()
    iso = next(c for c in report.claims if "isomorphic" in c.description)
    assert iso.measured == "100/100"
    assert t.elapsed < 30.0
    measured(record_property, f"isomorphic {iso.measured}, states exact, {t.elapsed:.2f}s")


# -- AC3 -------------------------------------------------------------------------------

@pytest.mark.criterion("AC3")
def test_ac3_theorem_two(record_property):
    with Timer() as t:
        scripted = theorem_two_matrix(default_policies(), random_scenario(0), n_runs=50)
        study = routing_study(ROUTING_TASKS)
        routed = routing_theorem_two(study)
    scripted.check()
    routed.check()
    d1, d2 = scripted.details, routed.details
    assert d1["isomorphic"] == d1["coincident"] > 0
    assert d2["isomorphic"] == d2["coincident"] > 0
    assert len(study.tasks) == 500
    assert t.elapsed < 120.0
    measured(record_property, f"scripted {d1['isomorphic']}/{d1['coincident']}, "
                              f"routing {d2['isomorphic']}/{d2['coincident']} of {d2['tasks']} tasks "
                              f"(100%), {t.elapsed:.1f}s")


# -- AC4 -------------------------------------------------------------------------------

@pytest.mark.criterion("AC4")
def test_ac4_ambiguity_table(record_property):
    with Timer() as t:
        rows = ambiguity_table(trials=100, seed=0, lawful_scenarios=[random_scenario(0)])
    by_axiom = {r.axiom: r for r in rows}
    lawful = rows[0]
    assert lawful.rate == 0.0 and lawful.trials >= 100
    mp = by_axiom["Metadata Mutability (Axiom 4)"]
    cf = by_axiom["Causal Forgery (Axiom 5)"]
    assert mp.rate == 1.0 and mp.trials == 100
    assert cf.rate == 1.0 and cf.trials == 100
    assert t.elapsed < 30.0
    measured(record_property, f"lawful {lawful.rate:.0%} ({lawful.trials} pairs), axiom 4 {mp.rate:.0%}, "
                              f"axiom 5 {cf.rate:.0%}, {t.elapsed:.2f}s")


# -- AC5 -------------------------------------------------------------------------------

MINIMALITY = [
    (ViolationMode.NO_FAIRNESS, VALUE),
    (ViolationMode.NON_SEMILATTICE, VALUE),
    (ViolationMode.DUPLICATE_RID, ILL_DEFINED),
    (ViolationMode.MUTABLE_PARENTS, STRUCTURAL),
    (ViolationMode.CAUSAL_FORGERY, CYCLE),
]


@pytest.mark.criterion("AC5")
def test_ac5_each_axiom_is_necessary(record_property):
    seen = []
    for mode, want in MINIMALITY:
        got = {run_violation(mode, seed_pair=p).classification for p in [(0, 1), (5, 5), (123, 77)]}
        assert got == {want}, (mode, got)
        seen.append(f"{mode.value}->{want}")
    # the specific shapes of the failures
    nf = run_violation(ViolationMode.NO_FAIRNESS)
    assert nf.states()[1]["k"] != nf.states()[2]["k"]
    ns = run_violation(ViolationMode.NON_SEMILATTICE)
    assert (ns.states(0)[3]["k"].value, ns.states(1)[3]["k"].value) == (2, 1)
    for lid in ("T3-i", "T3-ii", "T3-iii", "T3-iv", "T3-v"):
        (case,) = cases(lid)
        assert run_law(case).passed, lid
    measured(record_property, ", ".join(seen))


# -- AC6 -------------------------------------------------------------------------------

@pytest.mark.criterion("AC6")
def test_ac6_separation(record_property):
    reports = [crdt_separation(seed) for seed in range(5)]
    for r in reports:
        r.check()
    queries = {str(r.details["query"]) for r in reports}
    assert len(queries) == 1
    measured(record_property, f"gset{{x,y}} everywhere, non-isomorphic, witness {queries.pop()}")


# -- AC7 -------------------------------------------------------------------------------

@pytest.mark.criterion("AC7")
def test_ac7_proposition_one(record_property):
    with Timer() as t:
        report = proposition_one_check(n_pairs=200, max_vertices=8)
    report.check()
    assert report.details == {"isomorphic": 100, "mutated": 100}
    assert report.claims[0].measured == "200/200"
    assert t.elapsed < 30.0
    measured(record_property, f"agreement {report.claims[0].measured}, {t.elapsed:.2f}s")


# -- AC8 -------------------------------------------------------------------------------

@pytest.mark.criterion("AC8")
def test_ac8_lemmas(record_property):
    lines = []
    for lid in ("L1", "L2", "L3", "L4", "L5"):
        for case in cases(lid):
            result = run_law(case)
            assert result.passed, result.line()
            if case.exhaustive is None:
                assert result.trials >= 500, result.line()
            lines.append(f"{lid}:{result.trials}")
    # the exhaustive order case covers every permutation of 5-element lists
    (exhaustive,) = [c for c in cases("L2") if c.exhaustive is not None]
    assert run_law(exhaustive).trials >= 120
    measured(record_property, " ".join(lines))


# -- AC9 -------------------------------------------------------------------------------

def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.criterion("AC9")
def test_ac9_replay(tmp_path, record_property, capsys):
    rng = random.Random("ac9")
    policies = ["fifo", "lifo", "batching:3", "reordering:5"]
    for i in range(10):
        args = ["simulate", "--scenario", f"random:{rng.randint(0, 10**6)}",
                "--seed", str(rng.randint(0, 10**6)), "--policy", rng.choice(policies)]
        if i % 3 == 0:
            args += ["--seeds", "2"]
        a, b = tmp_path / f"{i}a", tmp_path / f"{i}b"
        assert cli(args + ["--out", str(a)]) == 0
        assert cli(args + ["--out", str(b)]) == 0
        assert tree(a) == tree(b), f"manifest {i} diverged"
        assert cli(["replay", str(a)]) == 0
        assert "MISMATCH" not in capsys.readouterr().out
    measured(record_property, "10/10 manifests byte-identical, replay digests match")


# -- AC10 ------------------------------------------------------------------------------

@pytest.mark.criterion("AC10")
def test_ac10_distinctiveness(record_property):
    study = routing_study(PERFORMANCE_TASKS)
    assert len(study.topology.nodes) == 16 and len(study.tasks) >= 500
    rows, tests, report = performance(study)
    report.check()
    static, q, adaptive = rows
    assert static.mean_hops <= q.mean_hops and static.mean_hops <= adaptive.mean_hops
    assert any(t.differs for t in tests)
    assert all(r.success == 1.0 for r in rows)
    measured(record_property, "mean hops " + " / ".join(f"{r.mean_hops:.2f}" for r in rows)
             + "; " + ", ".join(f"{t.a}-{t.b} p={min(t.welch_p, t.levene_p):.3g}" for t in tests)
             + "; success 100%")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
