"""Axiom-removal injectors and the ambiguity-rate harness.

Each mode switches off exactly one axiom. Every mode ships a canonical
scenario built so that the two schedules of a trial pair (ascending vs
descending same-tick delivery) deterministically hit the failure.
"""

from __future__ import annotations

import enum
import hashlib
import random
from dataclasses import dataclass, field, replace
from typing import Callable

from .agent import AgentState
from .contribution import Contribution, make_contribution
from .dag import ProvenanceDag, isomorphic
from .network import LAWFUL, ExecutionRecord, NetworkConfig, Rules, run
from .policy import OperationalPolicy, fifo, lifo
from .scenario import Intent, KeySpec, ParentRule, Scenario
from .semilattice import GSET, MAXINT, OVERWRITE, REGISTRY, gset, maxint, overwrite


class ViolationMode(enum.Enum):
    LAWFUL = "Lawful"
    NO_FAIRNESS = "NoFairness"
    NON_SEMILATTICE = "NonSemilattice"
    DUPLICATE_RID = "DuplicateRid"
    MUTABLE_PARENTS = "MutableParents"
    CAUSAL_FORGERY = "CausalForgery"

    @classmethod
    def parse(cls, text: str) -> "ViolationMode":
        norm = text.replace("-", "").replace("_", "").lower()
        for m in cls:
            if m.value.lower() == norm or m.name.replace("_", "").lower() == norm:
                return m
        raise ValueError(f"unknown violation mode {text!r}")


VIOLATIONS = tuple(m for m in ViolationMode if m is not ViolationMode.LAWFUL)

AXIOM = {
    ViolationMode.LAWFUL: "-",
    ViolationMode.NO_FAIRNESS: "Weak Fairness (Axiom 1)",
    ViolationMode.NON_SEMILATTICE: "Semilattice Merge (Axiom 2)",
    ViolationMode.DUPLICATE_RID: "Unique Identity (Axiom 3)",
    ViolationMode.MUTABLE_PARENTS: "Metadata Mutability (Axiom 4)",
    ViolationMode.CAUSAL_FORGERY: "Causal Forgery (Axiom 5)",
}

# classifications, most severe first
CYCLE = "CycleDetected"
ILL_DEFINED = "IllDefinedGraph"
STRUCTURAL = "StructuralAmbiguity"
VALUE = "ValueDivergence"
CONSISTENT = "Consistent"


# -- injectors --------------------------------------------------------------------------

def mutate_parents(c: Contribution, parents) -> Contribution:
    """Same rid, different parent set. Only possible once Axiom 4 is off."""
    return replace(c, parents=frozenset(parents))


def forge_rid(c: Contribution, rid: str) -> Contribution:
    return replace(c, rid=rid)


def local_counter_rid(seq: int) -> str:
    # every agent counts from the same base, so the first events of two agents share "7"
    return format(7 + seq, "064x")


def local_counter_factory(creator, creator_seq, key, parents, payload, observed, expected_space=None):
    c = make_contribution(creator, creator_seq, key, parents, payload, observed, expected_space)
    return forge_rid(c, local_counter_rid(creator_seq))


def parentless_rid(creator: int, seq: int, key: str, payload) -> str:
    """A digest that leaves parents out, so anyone can name the rid in advance."""
    h = hashlib.sha256(b"dcs/forgeable/v1\x00")
    h.update(f"{creator}\x00{seq}\x00{key}\x00{payload.space}\x00".encode())
    h.update(payload.canonical_bytes())
    return h.hexdigest()


def forgery_factory(creator, creator_seq, key, parents, payload, observed, expected_space=None):
    # no parents-subset-of-observed check: forward references go through
    return Contribution(parentless_rid(creator, creator_seq, key, payload), frozenset(parents),
                        payload, key, creator, creator_seq)


def rid_predictor(scenario: Scenario) -> Callable[[Intent], str]:
    def seq_of(intent: Intent) -> int:
        mine = sorted((i.tick, n) for n, i in enumerate(scenario.intents) if i.agent == intent.agent)
        return [n for _, n in mine].index(scenario.intents.index(intent))

    def predict(intent: Intent) -> str:
        return parentless_rid(intent.agent, seq_of(intent), intent.key, intent.payload)

    return predict


def forging_relay(forger: int, victim: int) -> Callable[[AgentState, Contribution], Contribution | None]:
    """``forger`` rewrites the parents of ``victim``'s contributions to the first
    same-key event it happened to observe, then relays its version."""

    def rewrite(agent: AgentState, c: Contribution) -> Contribution | None:
        if agent.id != forger or c.creator != victim or c.rid in agent.observed:
            return None
        known = agent.dag.known()
        first = next((r for r in agent.observation_order if known[r].key == c.key), None)
        if first is None or c.parents == {first}:
            return None
        return mutate_parents(c, {first})

    return rewrite


def rules_for(mode: ViolationMode, scenario: Scenario, forger: int | None = None,
              victim: int | None = None) -> Rules:
    if mode in (ViolationMode.LAWFUL, ViolationMode.NO_FAIRNESS):
        return replace(LAWFUL, name=mode.value)
    if mode is ViolationMode.NON_SEMILATTICE:
        return Rules(name=mode.value, allow_unlawful_spaces=True)
    if mode is ViolationMode.DUPLICATE_RID:
        return Rules(name=mode.value, strict=False, factory=local_counter_factory)
    if mode is ViolationMode.MUTABLE_PARENTS:
        if forger is None:
            forger = scenario.n_agents
        if victim is None:
            victim = scenario.intents[-1].agent if scenario.intents else 1
        return Rules(name=mode.value, strict=False, rewrite=forging_relay(forger, victim))
    if mode is ViolationMode.CAUSAL_FORGERY:
        return Rules(name=mode.value, strict=False, factory=forgery_factory, forward_refs=True,
                     predict_rid=rid_predictor(scenario))
    raise ValueError(mode)


def config_for(mode: ViolationMode, config: NetworkConfig) -> NetworkConfig:
    if mode is ViolationMode.NO_FAIRNESS:
        return replace(config, fairness_enabled=False)
    return config


def lawful_counterpart(scenario: Scenario) -> Scenario:
    """Swap any non-semilattice key for the max-register it was imitating."""
    bad = {k for k, s in scenario.keys.items() if not REGISTRY.get(s.space).lawful}
    if not bad:
        return scenario
    keys = {k: (KeySpec(MAXINT, s.subscribers) if k in bad else s) for k, s in scenario.keys.items()}
    intents = tuple(replace(i, payload=maxint(max(0, i.payload.value))) if i.key in bad else i
                    for i in scenario.intents)
    return replace(scenario, name=scenario.name + "-lawful", keys=keys, intents=intents)


# -- canonical scenarios ----------------------------------------------------------------

_QUIET = NetworkConfig(drop_probability=0.0, duplicate_probability=0.0, max_reorder_delay=0)


def no_fairness_scenario() -> Scenario:
    """w creates a_r; the link w -> v is cut. With fairness the cut is bridged."""
    u, v, w = 1, 2, 3
    return Scenario(
        name="fig1",
        n_agents=3,
        keys={"k": KeySpec(GSET, (u, v, w))},
        intents=(Intent(0, w, "k", gset("a_r"), ParentRule("empty"), "delta_r"),),
        network=replace(_QUIET, partition=frozenset({(w, v)})),
    )


def non_semilattice_scenario() -> Scenario:
    """Two writes to an overwrite register; the observer keeps whichever lands last."""
    return Scenario(
        name="fig2",
        n_agents=3,
        keys={"k": KeySpec(OVERWRITE, (1, 2, 3))},
        intents=(
            Intent(0, 1, "k", overwrite(1), ParentRule("empty"), "delta_1"),
            Intent(0, 2, "k", overwrite(2), ParentRule("empty"), "delta_2"),
        ),
        network=_QUIET,
    )


def duplicate_rid_scenario() -> Scenario:
    """U and V each make their first contribution; both get local id 7."""
    return Scenario(
        name="fig3",
        n_agents=3,
        keys={"k": KeySpec(GSET, (1, 2, 3))},
        intents=(
            Intent(0, 1, "k", gset("data_A"), ParentRule("empty"), "delta_A"),
            Intent(0, 2, "k", gset("data_B"), ParentRule("empty"), "delta_B"),
        ),
        network=_QUIET,
    )


def mutable_parents_scenario() -> Scenario:
    """p and q reach agent 4 in the same tick; r arrives one tick later and
    agent 4 re-parents it onto whichever of p, q it saw first."""
    return Scenario(
        name="fig4",
        n_agents=4,
        keys={"k": KeySpec(GSET, (1, 2, 3, 4))},
        intents=(
            Intent(0, 1, "k", gset("p"), ParentRule("empty"), "p"),
            Intent(0, 2, "k", gset("q"), ParentRule("empty"), "q"),
            Intent(1, 3, "k", gset("r"), ParentRule("empty"), "r"),
        ),
        network=_QUIET,
    )


def causal_forgery_scenario() -> Scenario:
    """Each of two agents names the other's not-yet-created event as parent."""
    return Scenario(
        name="fig5",
        n_agents=3,
        keys={"k": KeySpec(GSET, (1, 2, 3))},
        intents=(
            Intent(0, 1, "k", gset("r1"), ParentRule("explicit", ("r2",)), "r1"),
            Intent(0, 2, "k", gset("r2"), ParentRule("explicit", ("r1",)), "r2"),
        ),
        network=_QUIET,
    )


CANONICAL: dict[ViolationMode, Callable[[], Scenario]] = {
    ViolationMode.NO_FAIRNESS: no_fairness_scenario,
    ViolationMode.NON_SEMILATTICE: non_semilattice_scenario,
    ViolationMode.DUPLICATE_RID: duplicate_rid_scenario,
    ViolationMode.MUTABLE_PARENTS: mutable_parents_scenario,
    ViolationMode.CAUSAL_FORGERY: causal_forgery_scenario,
}


def canonical_scenario(mode: ViolationMode) -> Scenario:
    return CANONICAL[mode]()


# -- verdicts ---------------------------------------------------------------------------

SCHEDULES: tuple[Callable[[], OperationalPolicy], Callable[[], OperationalPolicy]] = (fifo, lifo)


@dataclass
class AmbiguityVerdict:
    mode: ViolationMode
    scenario: str
    seeds: tuple[int, int]
    classification: str
    records: tuple[ExecutionRecord, ExecutionRecord] = field(repr=False)
    isomorphic: bool | None = None
    values_equal: bool | None = None
    detail: str = ""

    @property
    def ambiguous(self) -> bool:
        return self.classification != CONSISTENT

    @property
    def dags(self) -> tuple[ProvenanceDag | None, ProvenanceDag | None]:
        return self.records[0].global_dag, self.records[1].global_dag

    def states(self, which: int = 0) -> dict:
        return self.records[which].final_states()


def execute(mode: ViolationMode, scenario: Scenario, seed: int, policy: OperationalPolicy,
            forger: int | None = None, victim: int | None = None) -> ExecutionRecord:
    if mode is ViolationMode.LAWFUL:
        scenario = lawful_counterpart(scenario)
    rules = rules_for(mode, scenario, forger, victim)
    config = replace(config_for(mode, scenario.network), seed=seed)
    return run(scenario, config, policy, rules, raise_on_budget=False)


def _faults(rec: ExecutionRecord) -> set[str]:
    out = set()
    if rec.fault_kind:
        out.add(rec.fault_kind)
    if rec.global_fault:
        out.add(rec.global_fault.split(":", 1)[0])
    return out


def _divergent_within(rec: ExecutionRecord, scenario: Scenario) -> list[str]:
    bad = []
    for k, spec in sorted(scenario.keys.items()):
        vals = {rec.agents[a].state[k] for a in spec.subscribers if not rec.agents[a].crashed}
        if len(vals) > 1:
            bad.append(k)
    return bad


def classify(a: ExecutionRecord, b: ExecutionRecord, scenario: Scenario) -> tuple[str, bool | None, bool | None, str]:
    faults = _faults(a) | _faults(b)
    if "CycleDetected" in faults:
        return CYCLE, None, None, "a dependency cycle was detected"
    if "RidCollision" in faults:
        return ILL_DEFINED, None, None, "two different contributions claim one rid"
    if faults:
        return ILL_DEFINED, None, None, ", ".join(sorted(faults))

    iso = bool(isomorphic(a.global_dag, b.global_dag))
    views = [x for x in sorted(a.agents) if not isomorphic(a.agents[x].dag, b.agents[x].dag)]
    if not iso or views:
        where = "global graph" if not iso else f"local views of agents {views}"
        return STRUCTURAL, False, None, f"runs disagree on the {where}"

    inside = _divergent_within(a, scenario) + _divergent_within(b, scenario)
    across = a.final_states() != b.final_states()
    if inside or across:
        what = f"relevant agents disagree on {sorted(set(inside))}" if inside else "final states differ between runs"
        return VALUE, True, False, what
    return CONSISTENT, True, True, ""


def run_violation(mode: ViolationMode, scenario: Scenario | None = None,
                  seed_pair: tuple[int, int] = (0, 1), **kw) -> AmbiguityVerdict:
    """Run the pair (schedule A, seed s1), (schedule B, seed s2) and classify the outcome."""
    if scenario is None:
        if mode is ViolationMode.LAWFUL:
            raise ValueError("the lawful mode has no canonical scenario; pass one")
        scenario = canonical_scenario(mode)
    recs = tuple(execute(mode, scenario, s, sched(), **kw) for s, sched in zip(seed_pair, SCHEDULES))
    effective = lawful_counterpart(scenario) if mode is ViolationMode.LAWFUL else scenario
    cls, iso, eq, detail = classify(recs[0], recs[1], effective)
    return AmbiguityVerdict(mode, scenario.name, tuple(seed_pair), cls, recs, iso, eq, detail)


def seed_pairs(trials: int, seed: int) -> list[tuple[int, int]]:
    rng = random.Random(f"trials:{seed}")
    return [(rng.getrandbits(63), rng.getrandbits(63)) for _ in range(trials)]


def ambiguity_rate(mode: ViolationMode, scenario: Scenario | None = None, trials: int = 100,
                   seed: int = 0) -> float:
    if trials < 1:
        raise ValueError("trials must be at least 1")
    hits = sum(run_violation(mode, scenario, p).ambiguous for p in seed_pairs(trials, seed))
    return hits / trials


@dataclass(frozen=True)
class AmbiguityRow:
    system: str
    axiom: str
    rate: float
    trials: int
    scenarios: tuple[str, ...]
    extension: bool = False


def ambiguity_table(trials: int = 100, seed: int = 0,
                    lawful_scenarios: list[Scenario] | None = None) -> list[AmbiguityRow]:
    """One lawful row over every canonical scenario (plus any extras), then one row per mode.

    Only the Axiom 4 and 5 rows have published counterparts; the rest are
    marked as extensions.
    """
    pool = [canonical_scenario(m) for m in VIOLATIONS] + list(lawful_scenarios or [])
    hits = sum(ambiguity_rate(ViolationMode.LAWFUL, s, trials, seed) * trials for s in pool)
    rows = [AmbiguityRow("DCS (Baseline)", "None", hits / (trials * len(pool)), trials * len(pool),
                         tuple(s.name for s in pool))]
    for m in VIOLATIONS:
        s = canonical_scenario(m)
        rows.append(AmbiguityRow(f"Violation: {m.value}", AXIOM[m], ambiguity_rate(m, s, trials, seed),
                                 trials, (s.name,),
                                 extension=m not in (ViolationMode.MUTABLE_PARENTS, ViolationMode.CAUSAL_FORGERY)))
    return rows
