"""Declarative scenarios: agents, Rel(k) per key, scripted intents, crashes."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .network import NetworkConfig
from .semilattice import REGISTRY, SemilatticeValue, from_json, gset, maxint, gmap, GSET, GMAP, MAXINT


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ParentRule:
    """``empty``, ``frontier``, ``first-observed``, or ``explicit`` with intent names."""

    kind: str = "empty"
    refs: tuple[str, ...] = ()

    def to_json(self) -> Any:
        return list(self.refs) if self.kind == "explicit" else self.kind

    @classmethod
    def from_json(cls, raw: Any) -> "ParentRule":
        if isinstance(raw, str):
            if raw not in ("empty", "frontier", "first-observed"):
                raise ScenarioError(f"unknown parent rule {raw!r}")
            return cls(raw)
        return cls("explicit", tuple(raw))


@dataclass(frozen=True)
class Intent:
    tick: int
    agent: int
    key: str
    payload: SemilatticeValue
    parents: ParentRule = ParentRule()
    name: str | None = None


@dataclass(frozen=True)
class KeySpec:
    space: str
    subscribers: tuple[int, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    n_agents: int
    keys: dict[str, KeySpec] = field(hash=False)
    intents: tuple[Intent, ...] = ()
    crashes: dict[int, int] = field(default_factory=dict, hash=False)
    network: NetworkConfig = NetworkConfig()

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        agents = range(1, self.n_agents + 1)
        if self.n_agents < 1:
            raise ScenarioError("a scenario needs at least one agent")
        for k, spec in self.keys.items():
            if spec.space not in REGISTRY:
                raise ScenarioError(f"key {k!r}: unknown state space {spec.space!r}")
            if not spec.subscribers or any(a not in agents for a in spec.subscribers):
                raise ScenarioError(f"key {k!r}: subscribers must be a nonempty subset of 1..{self.n_agents}")
        names = [i.name for i in self.intents if i.name is not None]
        if len(names) != len(set(names)):
            raise ScenarioError("intent names must be unique")
        for i in self.intents:
            if i.agent not in agents:
                raise ScenarioError(f"intent {i.name or i}: unknown agent {i.agent}")
            if i.key not in self.keys:
                raise ScenarioError(f"intent {i.name or i}: unknown key {i.key!r}")
            if i.agent not in self.keys[i.key].subscribers:
                raise ScenarioError(f"intent {i.name or i}: agent {i.agent} is not in Rel({i.key!r})")
            if i.payload.space != self.keys[i.key].space:
                raise ScenarioError(f"intent {i.name or i}: payload space does not match key {i.key!r}")
            if i.tick < 0:
                raise ScenarioError("intent ticks must be nonnegative")
            for ref in i.parents.refs:
                if ref not in names:
                    raise ScenarioError(f"intent {i.name or i}: unknown parent reference {ref!r}")
        for a, t in self.crashes.items():
            if a not in agents or t < 0:
                raise ScenarioError(f"bad crash entry {a}: {t}")

    def subscriptions(self, agent: int) -> dict[str, str]:
        return {k: s.space for k, s in sorted(self.keys.items()) if agent in s.subscribers}

    def intent_by_name(self, name: str) -> Intent:
        for i in self.intents:
            if i.name == name:
                return i
        raise KeyError(name)

    # -- (de)serialization ----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "agents": self.n_agents,
            "keys": {k: {"space": s.space, "subscribers": list(s.subscribers)}
                     for k, s in sorted(self.keys.items())},
            "intents": [
                {"tick": i.tick, "agent": i.agent, "key": i.key, "payload": i.payload.to_json(),
                 "parents": i.parents.to_json(), **({"name": i.name} if i.name else {})}
                for i in self.intents
            ],
            "crashes": {str(a): t for a, t in sorted(self.crashes.items())},
            "network": self.network.to_json(),
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Scenario":
        try:
            keys = {k: KeySpec(v["space"], tuple(v["subscribers"])) for k, v in raw["keys"].items()}
            intents = tuple(
                Intent(
                    tick=int(i["tick"]),
                    agent=int(i["agent"]),
                    key=i["key"],
                    payload=from_json(keys[i["key"]].space, i["payload"]),
                    parents=ParentRule.from_json(i.get("parents", "empty")),
                    name=i.get("name"),
                )
                for i in raw.get("intents", [])
            )
            return cls(
                name=raw["name"],
                n_agents=int(raw["agents"]),
                keys=keys,
                intents=intents,
                crashes={int(a): int(t) for a, t in raw.get("crashes", {}).items()},
                network=NetworkConfig.from_json(raw.get("network", {})),
            )
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"malformed scenario: {e!r}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"


def load(path: Path | str) -> Scenario:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"scenario not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{p}: {e}") from None
    return Scenario.from_json(raw)


def with_network(s: Scenario, **changes) -> Scenario:
    return replace(s, network=replace(s.network, **changes))


# -- built-in scenarios -------------------------------------------------------------

def fig6_concurrent() -> Scenario:
    """Two agents each create a root; values join to {x, y}."""
    return Scenario(
        name="fig6a",
        n_agents=2,
        keys={"k": KeySpec(GSET, (1, 2))},
        intents=(
            Intent(0, 1, "k", gset("x"), ParentRule("empty"), "dx"),
            Intent(0, 2, "k", gset("y"), ParentRule("empty"), "dy"),
        ),
        network=NetworkConfig(drop_probability=0.3, duplicate_probability=0.2, max_reorder_delay=3),
    )


def fig6_causal() -> Scenario:
    """Agent 2 observes agent 1's contribution and names it as parent."""
    return Scenario(
        name="fig6b",
        n_agents=2,
        keys={"k": KeySpec(GSET, (1, 2))},
        intents=(
            Intent(0, 1, "k", gset("x"), ParentRule("empty"), "dx"),
            Intent(0, 2, "k", gset("y"), ParentRule("explicit", ("dx",)), "dy"),
        ),
        network=NetworkConfig(drop_probability=0.3, duplicate_probability=0.2, max_reorder_delay=3),
    )


def random_scenario(seed: int, n_agents: int = 5, n_contributions: int = 20, n_keys: int = 3,
                    crash_agent: bool = False) -> Scenario:
    """A lawful scenario whose contribution set does not depend on network timing.

    Parents are explicit intent references (same key, earlier intent), so the
    generated history is fixed by the scenario and only delivery varies.
    """
    rng = random.Random(f"scenario:{seed}")
    # nondecreasing ticks keep every explicit reference pointing backwards in each script
    ticks = sorted(rng.randint(0, 15) for _ in range(n_contributions))
    spaces = [GSET, MAXINT, GMAP]
    keys = {}
    for j in range(n_keys):
        subs = sorted(rng.sample(range(1, n_agents + 1), rng.randint(2, n_agents)))
        keys[f"k{j}"] = KeySpec(spaces[j % len(spaces)], tuple(subs))
    intents = []
    for n in range(n_contributions):
        key = rng.choice(sorted(keys))
        spec = keys[key]
        agent = rng.choice(spec.subscribers)
        earlier = [i.name for i in intents if i.key == key]
        refs = tuple(sorted(rng.sample(earlier, rng.randint(0, min(2, len(earlier)))))) if earlier else ()
        if spec.space == GSET:
            payload = gset(f"e{n}", f"e{rng.randint(0, 5)}")
        elif spec.space == MAXINT:
            payload = maxint(rng.randint(0, 100))
        else:
            payload = gmap({f"f{rng.randint(0, 3)}": [f"v{n}"]})
        rule = ParentRule("explicit", refs) if refs else ParentRule("empty")
        intents.append(Intent(ticks[n], agent, key, payload, rule, f"i{n}"))
    crashes = {}
    if crash_agent:
        creators = {i.agent for i in intents}
        idle = [a for a in range(1, n_agents + 1) if a not in creators]
        victim = idle[0] if idle else n_agents
        if not idle:
            # a crash at tick 0 would drop the victim's intents, so strip them
            intents = _drop_agent(intents, victim)
        crashes[victim] = 0
    return Scenario(
        name=f"random-{seed}",
        n_agents=n_agents,
        keys=keys,
        intents=tuple(intents),
        crashes=crashes,
        network=NetworkConfig(drop_probability=0.3, duplicate_probability=0.2, max_reorder_delay=4,
                              fairness_bound=12),
    )


def _drop_agent(intents: list[Intent], agent: int) -> list[Intent]:
    gone = {i.name for i in intents if i.agent == agent}
    out = []
    for i in intents:
        if i.agent == agent:
            continue
        refs = tuple(r for r in i.parents.refs if r not in gone)
        if i.parents.kind == "explicit":
            rule = ParentRule("explicit", refs) if refs else ParentRule("empty")
            i = replace(i, parents=rule)
        out.append(i)
    return out


BUILTIN = {
    "fig6a": fig6_concurrent,
    "fig6b": fig6_causal,
}
