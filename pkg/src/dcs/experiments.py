"""End-to-end experiments. Each returns an ExperimentReport whose claims are
keyed by acceptance-criterion id (AC1..AC10)."""

from __future__ import annotations

import hashlib
import itertools
import random
from dataclasses import dataclass, field, replace
from statistics import mean, pstdev

from .contribution import Contribution, make_contribution
from .dag import ProvenanceDag, isomorphic, observationally_equivalent
from .network import (
    ExecutionRecord,
    NetworkConfig,
    convergence_failures,
    expected_states,
    propagation_misses,
    run,
)
from .policy import OperationalPolicy, batching, fifo, lifo, reordering
from .routing import (
    ADAPTIVE,
    MODES,
    QLEARNING,
    STATIC,
    QRoutingConfig,
    Router,
    RoutingTopology,
    make_tasks,
    random_topology,
)
from .scenario import Intent, KeySpec, ParentRule, Scenario, fig6_causal, fig6_concurrent
from .semilattice import GSET, gset
from .violations import mutate_parents


class ExperimentFailure(AssertionError):
    pass


@dataclass
class Claim:
    criterion: str
    description: str
    passed: bool
    measured: object = None

    def line(self) -> str:
        return f"{self.criterion}\t{'PASS' if self.passed else 'FAIL'}\t{self.description}\t{self.measured}"


@dataclass
class ExperimentReport:
    name: str
    seeds: list = field(default_factory=list)
    claims: list[Claim] = field(default_factory=list)
    tables: dict[str, str] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)

    def claim(self, criterion: str, description: str, passed: bool, measured=None) -> Claim:
        c = Claim(criterion, description, bool(passed), measured)
        self.claims.append(c)
        return c

    def check(self) -> "ExperimentReport":
        bad = [c for c in self.claims if not c.passed]
        if bad:
            raise ExperimentFailure("; ".join(f"{c.criterion}: {c.description} ({c.measured})" for c in bad))
        return self

    def text(self) -> str:
        return "".join(c.line() + "\n" for c in self.claims)


# -- theorem one --------------------------------------------------------------------------

def local_view_problems(record: ExecutionRecord, scenario: Scenario) -> list[str]:
    """Each live agent's dag must be the sub-dag of the global one induced by its keys."""
    out = []
    g = record.global_dag
    for a, snap in sorted(record.agents.items()):
        if snap.crashed:
            continue
        keys = set(scenario.subscriptions(a))
        want = {r for r, c in g.vertices.items() if c.key in keys}
        if not snap.dag.sealed:
            out.append(f"agent {a}: local dag still buffers {sorted(snap.dag.buffered)[:3]}")
        if set(snap.dag.vertices) != want:
            out.append(f"agent {a}: vertex set differs from its induced sub-dag")
        elif snap.dag.edges() != {(p, r) for p, r in g.edges() if r in want and p in want}:
            out.append(f"agent {a}: edge set differs from its induced sub-dag")
    return out


def theorem_one_sweep(scenario: Scenario, n_seeds: int = 100, first_seed: int = 0,
                      policy: OperationalPolicy | None = None) -> ExperimentReport:
    seeds = list(range(first_seed, first_seed + n_seeds))
    report = ExperimentReport(f"theorem-one:{scenario.name}", seeds)
    reference: ExecutionRecord | None = None
    non_iso: list[tuple[int, int]] = []
    wrong_state: list[tuple[int, int, str]] = []
    misses: list[tuple[int, object]] = []
    views: list[tuple[int, str]] = []
    faults: list[tuple[int, str]] = []
    for s in seeds:
        rec = run(scenario, replace(scenario.network, seed=s), policy or fifo())
        if rec.fault or rec.global_dag is None or rec.unfired or not rec.quiescent:
            faults.append((s, rec.fault or rec.global_fault or f"unfired {rec.unfired}"))
            continue
        misses += [(s, m) for m in propagation_misses(rec, scenario)]
        wrong_state += [(s, a, k) for a, k in convergence_failures(rec, scenario)]
        views += [(s, v) for v in local_view_problems(rec, scenario)]
        # isomorphism is an equivalence, so matching every run to the first covers all pairs
        if reference is None:
            reference = rec
        elif not isomorphic(reference.global_dag, rec.global_dag):
            non_iso.append((reference.seed, s))
    n_ok = len(seeds) - len(faults)
    report.claim("AC2", "runs complete without fault", not faults, faults[:3] or n_ok)
    report.claim("AC2", "global dags pairwise isomorphic", not non_iso and n_ok == len(seeds),
                 f"{n_ok - len(non_iso)}/{len(seeds)}" + (f" counterexample {non_iso[0]}" if non_iso else ""))
    report.claim("AC2", "live relevant states equal joinAll of key payloads", not wrong_state,
                 wrong_state[:3] or "exact")
    report.claim("AC8", "every contribution reached every live relevant agent", not misses, misses[:3] or 0)
    report.claim("AC2", "local dags are induced sub-dags of the global dag", not views, views[:3] or "ok")
    if reference is not None:
        report.details["final_state"] = {k: repr(v) for k, v in expected_states(reference, scenario).items()}
    return report


def fairness_sweep(scenario: Scenario, bounds=(5, 8, 12, 20), n_seeds: int = 20,
                   first_seed: int = 0) -> ExperimentReport:
    """Convergence at several delivery bounds; any finite bound should do."""
    report = ExperimentReport(f"fairness-sweep:{scenario.name}", list(range(first_seed, first_seed + n_seeds)))
    reorder = scenario.network.max_reorder_delay
    per_bound = {}
    for b in bounds:
        if b <= reorder:
            continue
        swept = replace(scenario, network=replace(scenario.network, fairness_bound=b))
        per_bound[b] = theorem_one_sweep(swept, n_seeds, first_seed).passed
    report.claim("AC8", "propagation and convergence hold at every fairness bound",
                 bool(per_bound) and all(per_bound.values()), per_bound)
    report.details["bounds"] = per_bound
    return report


# -- theorem two ------------------------------------------------------------------------

def default_policies() -> list[OperationalPolicy]:
    return [fifo(), batching(2), reordering(7)]


def theorem_two_matrix(policies: list[OperationalPolicy], scenario: Scenario, n_runs: int = 50,
                       first_seed: int = 0) -> ExperimentReport:
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    report = ExperimentReport(f"theorem-two:{scenario.name}", list(range(first_seed, first_seed + n_runs)))
    pairs = coincident = iso = 0
    failures = []
    for i in range(n_runs):
        recs = [run(scenario, replace(scenario.network, seed=first_seed + i + 1000 * j), p)
                for j, p in enumerate(policies)]
        for (pa, a), (pb, b) in itertools.combinations(zip(policies, recs), 2):
            pairs += 1
            if {c.rid for c in a.contributions} != {c.rid for c in b.contributions}:
                continue
            coincident += 1
            if isomorphic(a.global_dag, b.global_dag):
                iso += 1
            else:
                failures.append((i, pa.name, pb.name))
    rate = iso / coincident if coincident else 0.0
    report.claim("AC3", "policy pairs isomorphic on coincident runs", coincident > 0 and iso == coincident,
                 f"{iso}/{coincident} ({rate:.0%})" + (f" first failure {failures[0]}" if failures else ""))
    report.details.update(pairs=pairs, coincident=coincident, isomorphic=iso,
                          coincidence_rate=coincident / pairs if pairs else 0.0,
                          policies=[p.name for p in policies])
    return report


ROUTING_TASKS = 500
PERFORMANCE_TASKS = 1000

ROUTING_NETWORK = NetworkConfig(drop_probability=0.3, duplicate_probability=0.2, max_reorder_delay=3)
ROUTING_DISPATCH = {STATIC: fifo, QLEARNING: lifo, ADAPTIVE: lambda: reordering(11)}


def path_scenario(task: int, path: list[int], n_nodes: int,
                  network: NetworkConfig = ROUTING_NETWORK) -> Scenario:
    """One contribution per forwarding step; each names the previous hop as parent."""
    key = f"task-{task}"
    intents = []
    for j, (a, b) in enumerate(zip(path, path[1:])):
        rule = ParentRule("explicit", (f"h{j - 1}",)) if j else ParentRule("empty")
        intents.append(Intent(j, a, key, gset(f"{j}:{a}->{b}"), rule, f"h{j}"))
    subs = tuple(sorted(set(path)))
    return Scenario(f"route-{task}", n_nodes, {key: KeySpec(GSET, subs)}, tuple(intents), network=network)


@dataclass
class RoutingStudy:
    topology: RoutingTopology
    tasks: list[tuple[int, int]]
    paths: dict[str, list[list[int] | None]]
    bfs: list[int]
    routers: dict[str, Router]

    def hops(self, mode: str) -> list[int]:
        return [len(p) - 1 for p in self.paths[mode] if p is not None]

    def success(self, mode: str) -> float:
        return sum(p is not None for p in self.paths[mode]) / len(self.tasks)


def routing_study(n_tasks: int = ROUTING_TASKS, topology_seed: int = 0, tasks_seed: int = 1,
                  config: QRoutingConfig | None = None) -> RoutingStudy:
    """Train each policy, then route ``n_tasks`` packets with learning still on.

    Evaluation is online: the learned routers keep their floor exploration
    rate, as a deployed Q-router would. A task fails if it exceeds the hop
    budget of 4x its BFS distance.
    """
    topo = random_topology(topology_seed)
    cfg = config or QRoutingConfig()
    tasks = make_tasks(topo, n_tasks, tasks_seed)
    routers = {m: Router(topo, m, cfg) for m in MODES}
    paths = {}
    for m, r in routers.items():
        r.train()
        paths[m] = [r.route(s, d) for s, d in tasks]
    bfs = [routers[STATIC].distance(s, d) for s, d in tasks]
    return RoutingStudy(topo, tasks, paths, bfs, routers)


def routing_theorem_two(study: RoutingStudy, first_seed: int = 0) -> ExperimentReport:
    report = ExperimentReport("theorem-two:routing", [first_seed])
    n = len(study.topology.nodes)
    coincident = iso = 0
    failures = []
    for i, _ in enumerate(study.tasks):
        ps = [study.paths[m][i] for m in MODES]
        if any(p is None for p in ps) or any(p != ps[0] for p in ps):
            continue
        coincident += 1
        scenario = path_scenario(i, ps[0], n)
        recs = [run(scenario, replace(scenario.network, seed=first_seed + 7919 * i + j), ROUTING_DISPATCH[m]())
                for j, m in enumerate(MODES)]
        ok = all(r.fault is None and r.global_dag is not None and not r.unfired for r in recs)
        if ok and all(isomorphic(recs[0].global_dag, r.global_dag) for r in recs[1:]):
            iso += 1
        else:
            failures.append(i)
    report.claim("AC3", "routing policies isomorphic on the path-coincident subset",
                 coincident > 0 and iso == coincident,
                 f"{iso}/{coincident}" + (f" first failure task {failures[0]}" if failures else ""))
    report.details.update(tasks=len(study.tasks), coincident=coincident, isomorphic=iso,
                          coincidence_rate=coincident / len(study.tasks))
    return report


# -- performance and distinctiveness ---------------------------------------------------

@dataclass(frozen=True)
class PerformanceRow:
    policy: str
    mean_hops: float
    std_hops: float
    success: float
    tasks: int


@dataclass(frozen=True)
class PairTest:
    a: str
    b: str
    welch_p: float
    levene_p: float

    @property
    def differs(self) -> bool:
        return self.welch_p < 0.05 or self.levene_p < 0.05


LABELS = {STATIC: "Static Optimal", QLEARNING: "Q-Routing", ADAPTIVE: "Adaptive Q-Routing"}


def performance(study: RoutingStudy) -> tuple[list[PerformanceRow], list[PairTest], ExperimentReport]:
    from scipy import stats

    rows = [PerformanceRow(LABELS[m], mean(study.hops(m)), pstdev(study.hops(m)), study.success(m),
                           len(study.tasks)) for m in MODES]
    tests = []
    for a, b in itertools.combinations(MODES, 2):
        ha, hb = study.hops(a), study.hops(b)
        welch = stats.ttest_ind(ha, hb, equal_var=False).pvalue
        lev = stats.levene(ha, hb).pvalue
        tests.append(PairTest(a, b, float(welch), float(lev)))
    report = ExperimentReport("performance", [])
    static = rows[0].mean_hops
    report.claim("AC10", "static mean hops <= each learned policy", all(static <= r.mean_hops for r in rows[1:]),
                 " / ".join(f"{r.mean_hops:.3f}" for r in rows))
    report.claim("AC10", "hop distributions not all identical (95%)", any(t.differs for t in tests),
                 "; ".join(f"{t.a}-{t.b} welch={t.welch_p:.2g} levene={t.levene_p:.2g}" for t in tests))
    report.claim("AC10", "success within 4x BFS budget is 100% for all", all(r.success == 1.0 for r in rows),
                 " / ".join(f"{r.success:.1%}" for r in rows))
    return rows, tests, report


# -- separation and observational equivalence -------------------------------------------

def crdt_separation(seed: int = 0) -> ExperimentReport:
    report = ExperimentReport("separation", [seed])
    concurrent, causal = fig6_concurrent(), fig6_causal()
    a = run(concurrent, replace(concurrent.network, seed=seed))
    b = run(causal, replace(causal.network, seed=seed))
    want = gset("x", "y")
    values = [s.state["k"] for rec in (a, b) for s in rec.agents.values()]
    report.claim("AC6", "every agent ends with gset{x,y} in both executions", all(v == want for v in values),
                 sorted({repr(v) for v in values}))
    iso = isomorphic(a.global_dag, b.global_dag)
    report.claim("AC6", "dags are non-isomorphic", not iso, bool(iso))
    eq = observationally_equivalent(a.global_dag, b.global_dag)
    report.claim("AC6", "a query distinguishes the executions", not eq and eq.query is not None,
                 str(eq.query) if eq.query else None)
    report.details.update(query=eq.query, dags=(a.global_dag, b.global_dag))
    return report


def random_lawful_dag(rng: random.Random, n: int, n_creators: int = 3) -> list[Contribution]:
    """Lawful contributions whose parent sets are antichains of earlier vertices."""
    out: list[Contribution] = []
    seqs = [0] * (n_creators + 1)
    for i in range(n):
        picked = [c for c in out if rng.random() < 0.35]
        g = ProvenanceDag(out)
        parents = {c.rid for c in picked}
        # drop anything already implied through another parent
        parents -= {p for q in parents for p in g.ancestors(q)}
        creator = rng.randint(1, n_creators)
        c = make_contribution(creator, seqs[creator], "k", parents, gset(f"v{i}"), {x.rid for x in out})
        seqs[creator] += 1
        out.append(c)
    return out


def relabeled(contributions: list[Contribution], salt: str) -> list[Contribution]:
    """Same graph under fresh, unrelated rids."""
    fresh = {c.rid: hashlib.sha256(f"{salt}:{c.rid}".encode()).hexdigest() for c in contributions}
    return [replace(c, rid=fresh[c.rid], parents=frozenset(fresh[p] for p in c.parents)) for c in contributions]


def reparent_leaf(contributions: list[Contribution], rng: random.Random) -> list[Contribution] | None:
    """Move one leaf onto a different antichain of the other vertices."""
    g = ProvenanceDag(contributions)
    leaves = [c for c in contributions if not g.children(c.rid)]
    rng.shuffle(leaves)
    for leaf in leaves:
        others = [c.rid for c in contributions if c.rid != leaf.rid]
        options = []
        for k in range(len(others) + 1):
            for combo in itertools.combinations(others, k):
                s = set(combo)
                if not any(p in g.ancestors(q) for p in s for q in s) and s != set(leaf.parents):
                    options.append(s)
        if options:
            new = mutate_parents(leaf, rng.choice(options))
            return [new if c.rid == leaf.rid else c for c in contributions]
    return None


def proposition_one_check(n_pairs: int = 200, max_vertices: int = 8, seed: int = 0) -> ExperimentReport:
    if max_vertices > 8:
        raise ValueError("exhaustive queries are budgeted for at most 8 vertices")
    rng = random.Random(f"prop1:{seed}")
    report = ExperimentReport("proposition-one", [seed])
    agree = 0
    mismatches = []
    kinds = {"isomorphic": 0, "mutated": 0}
    for i in range(n_pairs):
        base = random_lawful_dag(rng, rng.randint(2, max_vertices))
        if i % 2 == 0:
            other = relabeled(base, f"{seed}:{i}")
            rng.shuffle(other)
            kinds["isomorphic"] += 1
        else:
            other = reparent_leaf(base, rng)
            kinds["mutated"] += 1
        g1, g2 = ProvenanceDag(base), ProvenanceDag(other)
        iso = bool(isomorphic(g1, g2))
        eq = bool(observationally_equivalent(g1, g2))
        if iso == eq and iso == (i % 2 == 0):
            agree += 1
        else:
            mismatches.append((i, iso, eq))
    report.claim("AC7", "observational equivalence agrees with isomorphism", agree == n_pairs,
                 f"{agree}/{n_pairs}" + (f" first mismatch {mismatches[0]}" if mismatches else ""))
    report.details.update(kinds)
    return report
