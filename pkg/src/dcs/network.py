"""Seeded discrete-event simulation of an unreliable network.

Messages may be dropped, duplicated and delayed. With fairness enabled the
sender retransmits every tick until one attempt gets through, and a final
attempt that cannot be lost is made at ``fairness_bound`` ticks after the
first send, so every live relevant agent receives every contribution within
that horizon. Virtual time is integer ticks.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field, fields, replace
from typing import TYPE_CHECKING, Any, Callable, Iterable

from .agent import AgentSnapshot, AgentState, InvalidContribution, EMPTY, FRONTIER, FIRST_OBSERVED
from .contribution import Contribution, Rid, make_contribution, DIGEST_NAME
from .dag import DagError, ProvenanceDag, CycleDetected, RidCollision
from .policy import ASC, DESC, OperationalPolicy, apply_policy, fifo
from .semilattice import REGISTRY, SemilatticeValue, join_all

if TYPE_CHECKING:
    from .scenario import Intent, Scenario

CRASH, DELIVER, INTENT, FLUSH = range(4)

DEFAULT_MAX_EVENTS = 10**6


class NonQuiescent(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    drop_probability: float = 0.0
    duplicate_probability: float = 0.0
    max_reorder_delay: int = 0
    fairness_enabled: bool = True
    fairness_bound: int = 8
    seed: int = 0
    partition: frozenset = frozenset()
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must lie in [0, 1]")
        # each copy spawns another with this probability, so 1 would never stop
        if not 0.0 <= self.duplicate_probability < 1.0:
            raise ValueError("duplicate_probability must lie in [0, 1)")
        if self.max_reorder_delay < 0:
            raise ValueError("max_reorder_delay must be nonnegative")
        if self.fairness_enabled and self.fairness_bound <= self.max_reorder_delay:
            raise ValueError("fairness_bound must exceed max_reorder_delay")
        object.__setattr__(self, "partition", frozenset(tuple(p) for p in self.partition))

    def expected_copies(self) -> float:
        """Mean copies one unforced attempt puts on the wire."""
        return (1.0 - self.drop_probability) / (1.0 - self.duplicate_probability)

    def to_json(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["partition"] = sorted([list(p) for p in self.partition])
        return out

    @classmethod
    def from_json(cls, raw: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown network settings: {sorted(unknown)}")
        raw = dict(raw)
        if "partition" in raw:
            raw["partition"] = frozenset(tuple(p) for p in raw["partition"])
        return cls(**raw)


@dataclass(frozen=True)
class Rules:
    """Which axioms the run enforces. Only the violations module builds
    anything other than ``LAWFUL``."""

    name: str = "lawful"
    strict: bool = True
    factory: Callable[..., Contribution] = make_contribution
    allow_unlawful_spaces: bool = False
    forward_refs: bool = False
    predict_rid: Callable[["Intent"], Rid] | None = None
    # (agent, received contribution) -> rewritten version to keep and relay, or None
    rewrite: Callable[[AgentState, Contribution], Contribution | None] | None = None


LAWFUL = Rules()


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    agent: int
    rid: str
    action: str

    def line(self) -> str:
        return f"{self.tick}\t{self.agent}\t{self.rid}\t{self.action}"


class Schedule:
    """Event queue plus the per-channel random streams of one run."""

    def __init__(self, config: NetworkConfig, policy: OperationalPolicy):
        self.config = config
        self.policy = policy
        self.tick = 0
        self._queue: list[tuple] = []
        self._seq = 0
        self._channels: dict[tuple[int, int], random.Random] = {}
        self._order_rng = random.Random(f"{config.seed}:order")
        self.trace: list[TraceRecord] = []

    def channel(self, sender: int, recipient: int) -> random.Random:
        # one stream per directed channel, so adding an agent leaves others' draws alone
        rng = self._channels.get((sender, recipient))
        if rng is None:
            rng = random.Random(f"{self.config.seed}:chan:{sender}:{recipient}")
            self._channels[(sender, recipient)] = rng
        return rng

    def push(self, tick: int, phase: int, order: float, event: Any) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (tick, phase, order, self._seq, event))

    def pop(self) -> tuple:
        return heapq.heappop(self._queue)

    def __len__(self) -> int:
        return len(self._queue)

    def _order_key(self, sender: int) -> float:
        if self.policy.delivery_order == ASC:
            return sender
        if self.policy.delivery_order == DESC:
            return -sender
        return self._order_rng.random()

    def _attempt(self, c: Contribution, sender: int, recipient: int, t: int, extra: int) -> int:
        cfg = self.config
        if (sender, recipient) in cfg.partition:
            self.trace.append(TraceRecord(t, recipient, c.rid, f"blocked-from-{sender}"))
            return 0
        rng = self.channel(sender, recipient)
        if rng.random() < cfg.drop_probability:
            self.trace.append(TraceRecord(t, recipient, c.rid, f"dropped-from-{sender}"))
            return 0
        copies = 1
        while rng.random() < cfg.duplicate_probability:
            copies += 1
        for _ in range(copies):
            delay = rng.randint(0, cfg.max_reorder_delay)
            self.push(t + 1 + delay + extra, DELIVER, self._order_key(sender), (recipient, c))
        return copies

    def broadcast(self, c: Contribution, sender: int, recipients: Iterable[int], now: int,
                  extra_delay: int = 0) -> dict[int, int]:
        """Enqueue deliveries of ``c`` to every recipient; returns copies per recipient."""
        cfg = self.config
        sent = {}
        for r in sorted(set(recipients) - {sender}):
            if not cfg.fairness_enabled:
                sent[r] = self._attempt(c, sender, r, now, extra_delay)
                continue
            copies = 0
            last = now + cfg.fairness_bound - cfg.max_reorder_delay - 1
            for t in range(now, last + 1):
                copies = self._attempt(c, sender, r, t, extra_delay)
                if copies:
                    break
            if not copies:
                self.push(now + cfg.fairness_bound + extra_delay, DELIVER, self._order_key(sender), (r, c))
                self.trace.append(TraceRecord(now, r, c.rid, f"forced-from-{sender}"))
                copies = 1
            sent[r] = copies
        return sent


@dataclass
class ExecutionRecord:
    scenario: str
    seed: int
    config: NetworkConfig
    policy: str
    rules: str
    contributions: list[Contribution]
    agents: dict[int, AgentSnapshot]
    global_dag: ProvenanceDag | None
    trace: list[TraceRecord]
    fault: str | None = None
    fault_kind: str | None = None
    global_fault: str | None = None
    quiescent: bool = True
    unfired: list[str] = field(default_factory=list)
    deliveries: Counter = field(default_factory=Counter)
    created_by_intent: dict[str, Rid] = field(default_factory=dict)

    def final_states(self) -> dict[int, dict[str, SemilatticeValue]]:
        return {a: dict(s.state) for a, s in sorted(self.agents.items())}

    def live(self) -> list[int]:
        return [a for a, s in sorted(self.agents.items()) if not s.crashed]

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for t in self.trace:
            h.update(t.line().encode() + b"\n")
        return h.hexdigest()

    def artifact_texts(self) -> dict[str, str]:
        from .contribution import log_header, to_record

        states = ["agent\tcrashed\tkey\tvalue"]
        for a, snap in sorted(self.agents.items()):
            for k, v in sorted(snap.state.items()):
                states.append(f"{a}\t{int(snap.crashed)}\t{k}\t{v!r}")
        summary = [
            f"scenario\t{self.scenario}",
            f"seed\t{self.seed}",
            f"policy\t{self.policy}",
            f"rules\t{self.rules}",
            f"digest\t{DIGEST_NAME}",
            f"contributions\t{len(self.contributions)}",
            f"quiescent\t{self.quiescent}",
            f"fault\t{self.fault or '-'}",
            f"global_fault\t{self.global_fault or '-'}",
            f"unfired\t{','.join(self.unfired) or '-'}",
            f"trace_digest\t{self.trace_digest()}",
        ]
        out = {
            "summary.tsv": "\n".join(summary) + "\n",
            "trace.log": "".join(t.line() + "\n" for t in self.trace),
            "contributions.log": "\n".join([log_header()] + [to_record(c) for c in self.contributions]) + "\n",
            "states.tsv": "\n".join(states) + "\n",
        }
        if self.global_dag is not None:
            out["dag.txt"] = self.global_dag.to_text()
            out["dag.dot"] = self.global_dag.to_dot()
        for a, snap in sorted(self.agents.items()):
            out[f"agents/{a}.dag.txt"] = snap.dag.to_text()
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, text in sorted(self.artifact_texts().items()):
            h.update(name.encode() + b"\0" + text.encode() + b"\0")
        return h.hexdigest()


def run(scenario: "Scenario", config: NetworkConfig | None = None,
        policy: OperationalPolicy | None = None, rules: Rules = LAWFUL,
        raise_on_budget: bool = True) -> ExecutionRecord:
    """Drive the scenario to quiescence and return everything observable about the run."""
    return _Run(scenario, config or scenario.network, policy or fifo(), rules).go(raise_on_budget)


class _Run:
    def __init__(self, scenario: "Scenario", config: NetworkConfig, policy: OperationalPolicy, rules: Rules):
        self.scenario = scenario
        self.config = config
        self.policy = policy
        self.rules = rules
        if not rules.allow_unlawful_spaces:
            for k, spec in scenario.keys.items():
                if not REGISTRY.get(spec.space).lawful:
                    raise ValueError(f"key {k!r} uses non-semilattice space {spec.space!r} in a lawful run")
        self.agents = {
            a: AgentState(a, scenario.subscriptions(a), strict=rules.strict, factory=rules.factory)
            for a in range(1, scenario.n_agents + 1)
        }
        self.sched = Schedule(config, policy)
        self.created: dict[str, Contribution] = {}
        self.contributions: list[Contribution] = []
        self.deferred: dict[int, list[int]] = defaultdict(list)
        self.outbox: dict[int, list[Contribution]] = defaultdict(list)
        self.deliveries: Counter = Counter()
        self.fault: str | None = None
        self.fault_kind: str | None = None

    @property
    def trace(self) -> list[TraceRecord]:
        return self.sched.trace

    def go(self, raise_on_budget: bool) -> ExecutionRecord:
        s = self.sched
        for a, t in sorted(self.scenario.crashes.items()):
            s.push(t, CRASH, a, a)
        for n, intent in enumerate(self.scenario.intents):
            s.push(intent.tick, INTENT, n, n)

        processed = 0
        quiescent = True
        while len(s):
            if processed >= self.config.max_events:
                quiescent = False
                break
            tick, phase, _, _, event = s.pop()
            s.tick = tick
            processed += 1
            try:
                self._dispatch(tick, phase, event)
            except (DagError, InvalidContribution) as e:
                self.fault_kind = type(e).__name__
                if isinstance(e, InvalidContribution):
                    self.fault_kind = e.findings[0].kind.value
                self.fault = f"{self.fault_kind}: {e}"
                self.trace.append(TraceRecord(tick, 0, "-", f"abort {self.fault_kind}"))
                break
        if not quiescent and raise_on_budget:
            raise NonQuiescent(f"event budget of {self.config.max_events} exhausted")

        unfired = [self._intent_name(n) for a in sorted(self.deferred) for n in self.deferred[a]]
        global_dag, global_fault = None, None
        try:
            global_dag = ProvenanceDag(self.contributions)
        except DagError as e:
            global_fault = f"{type(e).__name__}: {e}"
        return ExecutionRecord(
            scenario=self.scenario.name,
            seed=self.config.seed,
            config=self.config,
            policy=self.policy.name,
            rules=self.rules.name,
            contributions=list(self.contributions),
            agents={a: st.snapshot() for a, st in self.agents.items()},
            global_dag=global_dag,
            trace=list(self.trace),
            fault=self.fault,
            fault_kind=self.fault_kind,
            global_fault=global_fault,
            quiescent=quiescent,
            unfired=unfired,
            deliveries=self.deliveries,
            created_by_intent={k: c.rid for k, c in self.created.items()},
        )

    def _intent_name(self, n: int) -> str:
        return self.scenario.intents[n].name or f"#{n}"

    def _dispatch(self, tick: int, phase: int, event: Any) -> None:
        if phase == CRASH:
            self.agents[event].crashed = True
            self.trace.append(TraceRecord(tick, event, "-", "crash"))
        elif phase == DELIVER:
            recipient, c = event
            agent = self.agents[recipient]
            if agent.crashed:
                self.trace.append(TraceRecord(tick, recipient, c.rid, "lost-crashed"))
                return
            self.deliveries[(c.rid, recipient)] += 1
            altered = self.rules.rewrite(agent, c) if self.rules.rewrite else None
            fresh = agent.receive(altered or c)
            self.trace.append(TraceRecord(tick, recipient, c.rid, "receive" if fresh else "duplicate"))
            if fresh and altered is not None:
                self.trace.append(TraceRecord(tick, recipient, c.rid, "relay-rewritten"))
                relevant = self.scenario.keys[c.key].subscribers
                self.sched.broadcast(altered, recipient, relevant, tick)
            if fresh:
                self._retry_deferred(recipient, tick)
        elif phase == INTENT:
            self._fire(event, tick)
        elif phase == FLUSH:
            self._flush(event, tick)

    def _resolve(self, intent: "Intent", agent: AgentState) -> frozenset | str | None:
        """Parent selection for ``intent``, or None while an explicit parent is unobserved."""
        kind = intent.parents.kind
        if kind in (EMPTY, FRONTIER, FIRST_OBSERVED):
            return kind
        rids = []
        for ref in intent.parents.refs:
            c = self.created.get(ref)
            if self.rules.forward_refs:
                rids.append(c.rid if c is not None else self.rules.predict_rid(self.scenario.intent_by_name(ref)))
            elif c is None or c.rid not in agent.observed:
                return None
            else:
                rids.append(c.rid)
        return frozenset(rids)

    def _fire(self, n: int, tick: int) -> None:
        intent = self.scenario.intents[n]
        agent = self.agents[intent.agent]
        if agent.crashed:
            self.trace.append(TraceRecord(tick, intent.agent, "-", f"skipped {self._intent_name(n)}"))
            return
        # an agent works through its script in order, so creator_seq is fixed by the scenario
        selection = None if self.deferred.get(intent.agent) else self._resolve(intent, agent)
        if selection is None:
            self.deferred[intent.agent].append(n)
            self.trace.append(TraceRecord(tick, intent.agent, "-", f"defer {self._intent_name(n)}"))
            return
        self._emit(n, selection, tick)

    def _emit(self, n: int, selection, tick: int) -> None:
        intent = self.scenario.intents[n]
        agent = self.agents[intent.agent]
        c = agent.contribute(intent.key, intent.payload, selection)
        if intent.name:
            self.created[intent.name] = c
        self.contributions.append(c)
        self.trace.append(TraceRecord(tick, intent.agent, c.rid, f"contribute {self._intent_name(n)}"))
        if not self.outbox[intent.agent]:
            self.sched.push(tick, FLUSH, intent.agent, intent.agent)
        self.outbox[intent.agent].append(c)

    def _retry_deferred(self, agent_id: int, tick: int) -> None:
        waiting = self.deferred.get(agent_id)
        if not waiting:
            return
        agent = self.agents[agent_id]
        while waiting:
            selection = self._resolve(self.scenario.intents[waiting[0]], agent)
            if selection is None:
                break
            self._emit(waiting.pop(0), selection, tick)
        if not waiting:
            del self.deferred[agent_id]

    def _flush(self, agent_id: int, tick: int) -> None:
        box = self.outbox.pop(agent_id, [])
        if not box or self.agents[agent_id].crashed:
            return
        for i, batch in enumerate(apply_policy(self.policy, box)):
            for c in batch:
                relevant = self.scenario.keys[c.key].subscribers
                self.sched.broadcast(c, agent_id, relevant, tick, extra_delay=i)


# -- checks ---------------------------------------------------------------------------

def propagation_misses(record: ExecutionRecord, scenario: "Scenario") -> list[tuple[Rid, int]]:
    """(rid, agent) pairs where a live relevant agent never observed a contribution."""
    misses = []
    for c in record.contributions:
        for a in scenario.keys[c.key].subscribers:
            snap = record.agents[a]
            if not snap.crashed and c.rid not in snap.observed:
                misses.append((c.rid, a))
    return misses


def expected_states(record: ExecutionRecord, scenario: "Scenario") -> dict[str, SemilatticeValue]:
    return {
        k: join_all([c.payload for c in record.contributions if c.key == k], spec.space)
        for k, spec in sorted(scenario.keys.items())
    }


def convergence_failures(record: ExecutionRecord, scenario: "Scenario") -> list[tuple[int, str]]:
    """(agent, key) pairs whose final state is not the join of every key payload."""
    want = expected_states(record, scenario)
    bad = []
    for k, spec in sorted(scenario.keys.items()):
        for a in spec.subscribers:
            snap = record.agents[a]
            if not snap.crashed and snap.state[k] != want[k]:
                bad.append((a, k))
    return bad
