"""Per-agent state: observed rids, merged per-key state, and a local DAG view."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Union

from .contribution import (
    AgentId,
    Contribution,
    Finding,
    FindingKind,
    Rid,
    StateSpaceMismatch,
    make_contribution,
    validate_contribution,
)
from .dag import ProvenanceDag
from .semilattice import SemilatticeValue, bottom, join, join_all


class NotSubscribed(KeyError):
    pass


class InvalidContribution(ValueError):
    def __init__(self, findings: list[Finding]):
        super().__init__("; ".join(map(str, findings)))
        self.findings = findings


EMPTY = "empty"
FRONTIER = "frontier"
FIRST_OBSERVED = "first-observed"

# "empty", "frontier", "first-observed", or an explicit collection of rids
ParentSelection = Union[str, Iterable[Rid]]

ContributionFactory = Callable[..., Contribution]


class AgentState:
    """One agent's view of the world.

    ``subscriptions`` maps each key the agent belongs to Rel(k) for onto that
    key's state-space tag. ``strict`` turns on receiver-side digest and
    self-parent checks; violation runs switch it off together with the
    lawful ``factory``.
    """

    def __init__(self, agent_id: AgentId, subscriptions: Mapping[str, str], *,
                 strict: bool = True, factory: ContributionFactory = make_contribution):
        if agent_id < 1:
            raise ValueError("agent ids start at 1")
        self.id = agent_id
        self.subscriptions = dict(subscriptions)
        self.strict = strict
        self.factory = factory
        self.observed: set[Rid] = set()
        self.observation_order: list[Rid] = []
        self.dag = ProvenanceDag()
        self.state: dict[str, SemilatticeValue] = {k: bottom(s) for k, s in self.subscriptions.items()}
        self.next_seq = 0
        self.crashed = False

    def __repr__(self) -> str:
        return f"AgentState(id={self.id}, observed={len(self.observed)}, seq={self.next_seq})"

    def _require(self, key: str) -> str:
        try:
            return self.subscriptions[key]
        except KeyError:
            raise NotSubscribed(f"agent {self.id} is not in Rel({key!r})") from None

    def receive(self, c: Contribution) -> bool:
        """Merge ``c``. Returns False for a duplicate delivery, which changes nothing."""
        space = self._require(c.key)
        if self.strict:
            if c.payload.space != space:
                raise StateSpaceMismatch(f"key {c.key!r} holds {space!r}, got {c.payload.space!r}")
            bad = [f for f in validate_contribution(c, {}) if f.kind != FindingKind.RID_COLLISION]
            if bad:
                raise InvalidContribution(bad)
        if not self.strict:
            # without identity checks a second version of a known event is simply ignored
            known = self.dag.known().get(c.rid)
            if known is not None and known.label() == c.label():
                return False
        # raises RidCollision / CycleDetected before any state is touched
        if not self.dag.insert(c):
            return False
        self.observed.add(c.rid)
        self.observation_order.append(c.rid)
        self.state[c.key] = join(self.state[c.key], c.payload)
        return True

    def select_parents(self, key: str, selection: ParentSelection) -> frozenset:
        if selection == EMPTY:
            return frozenset()
        if selection == FRONTIER:
            return self.local_frontier(key)
        if selection == FIRST_OBSERVED:
            known = self.dag.known()
            for r in self.observation_order:
                if known[r].key == key:
                    return frozenset([r])
            return frozenset()
        if isinstance(selection, str):
            raise ValueError(f"unknown parent selection rule {selection!r}")
        return frozenset(selection)

    def contribute(self, key: str, payload: SemilatticeValue,
                   parent_selection: ParentSelection = FRONTIER) -> Contribution:
        space = self._require(key)
        parents = self.select_parents(key, parent_selection)
        c = self.factory(self.id, self.next_seq, key, parents, payload, self.observed,
                         expected_space=space)
        self.next_seq += 1
        self.receive(c)
        return c

    def local_frontier(self, key: str) -> frozenset:
        """Observed key-``key`` rids with no observed key-``key`` descendant."""
        self._require(key)
        known = self.dag.known()
        mine = {r for r, c in known.items() if c.key == key}
        covered: set[Rid] = set()
        stack = [p for r in mine for p in known[r].parents]
        while stack:
            p = stack.pop()
            if p in covered or p not in known:
                continue
            covered.add(p)
            stack.extend(known[p].parents)
        return frozenset(mine - covered)

    def recomputed_state(self, key: str) -> SemilatticeValue:
        """State rebuilt from scratch as the join of every observed key payload."""
        space = self._require(key)
        payloads = [c.payload for c in self.dag.known().values() if c.key == key]
        return join_all(payloads, space)

    def snapshot(self) -> "AgentSnapshot":
        return AgentSnapshot(self.id, frozenset(self.observed), dict(self.state),
                             self.dag.copy(), self.crashed)


@dataclass(frozen=True)
class AgentSnapshot:
    id: AgentId
    observed: frozenset
    state: dict = field(hash=False)
    dag: ProvenanceDag = field(hash=False, compare=False)
    crashed: bool = False
