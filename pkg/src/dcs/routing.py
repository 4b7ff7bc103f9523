"""Routing policies over a fixed topology: static shortest path, Q-routing, adaptive Q-routing."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from statistics import pvariance

STATIC = "static"
QLEARNING = "qlearning"
ADAPTIVE = "adaptive"
MODES = (STATIC, QLEARNING, ADAPTIVE)


class Unreachable(RuntimeError):
    pass


class NotNeighbor(ValueError):
    pass


@dataclass(frozen=True)
class RoutingTopology:
    """Undirected, connected, unit-cost graph over nodes 1..n."""

    adjacency: dict[int, tuple[int, ...]] = field(hash=False)

    def __post_init__(self):
        for u, nbs in self.adjacency.items():
            if u in nbs:
                raise ValueError(f"self-loop at {u}")
            for v in nbs:
                if u not in self.adjacency.get(v, ()):
                    raise ValueError(f"edge {u}-{v} is not symmetric")
        if self.adjacency and len(bfs_distances(self, next(iter(self.adjacency)))) != len(self.adjacency):
            raise ValueError("topology is not connected")

    @property
    def nodes(self) -> list[int]:
        return sorted(self.adjacency)

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.adjacency[u]

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u, nbs in self.adjacency.items() for v in nbs if u < v)

    @classmethod
    def from_edges(cls, edges, n: int | None = None) -> "RoutingTopology":
        adj: dict[int, set[int]] = {i: set() for i in range(1, (n or 0) + 1)}
        for u, v in edges:
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
        return cls({u: tuple(sorted(vs)) for u, vs in sorted(adj.items())})

    def to_text(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges())


def random_topology(seed: int = 0, n: int = 16, mean_degree: float = 3.0) -> RoutingTopology:
    """Random spanning tree plus random chords up to the requested mean degree."""
    rng = random.Random(f"topology:{seed}")
    order = list(range(1, n + 1))
    rng.shuffle(order)
    edges = set()
    for i in range(1, n):
        u, v = order[i], rng.choice(order[:i])
        edges.add((min(u, v), max(u, v)))
    target = round(n * mean_degree / 2)
    candidates = [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1) if (u, v) not in edges]
    rng.shuffle(candidates)
    edges.update(candidates[:max(0, target - len(edges))])
    return RoutingTopology.from_edges(sorted(edges), n)


def bfs_distances(topology: RoutingTopology, source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in topology.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


class QTable:
    """Q[(node, destination, neighbor)] = estimated hops to destination via neighbor."""

    def __init__(self, topology: RoutingTopology, alpha: float = 0.5, initial: float = 0.0):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.topology = topology
        self.alpha = alpha
        self.q: dict[tuple[int, int, int], float] = {
            (u, d, v): initial
            for u in topology.nodes for d in topology.nodes if d != u
            for v in topology.neighbors(u)
        }

    def get(self, node: int, destination: int, neighbor: int) -> float:
        try:
            return self.q[(node, destination, neighbor)]
        except KeyError:
            raise NotNeighbor(f"{neighbor} is not a neighbor of {node}") from None

    def best(self, node: int, destination: int) -> tuple[int, float]:
        """Greedy neighbor and its estimate; ties go to the smallest id."""
        if node == destination:
            return node, 0.0
        return min(((self.q[(node, destination, v)], v) for v in self.topology.neighbors(node)),
                   key=lambda qv: (qv[0], qv[1]))[::-1]

    def remaining(self, node: int, destination: int) -> float:
        return 0.0 if node == destination else self.best(node, destination)[1]

    def to_text(self) -> str:
        return "".join(f"{u}\t{d}\t{v}\t{q:.6f}\n" for (u, d, v), q in sorted(self.q.items()))


def update_q(qtable: QTable, node: int, destination: int, chosen: int,
             observed_remaining: float, alpha: float | None = None) -> QTable:
    """Q <- Q + alpha * (1 + observed_remaining - Q). Updates in place and returns the table."""
    a = qtable.alpha if alpha is None else alpha
    old = qtable.get(node, destination, chosen)
    qtable.q[(node, destination, chosen)] = old + a * (1.0 + observed_remaining - old)
    return qtable


def static_next_hop(topology: RoutingTopology, current: int, destination: int,
                    dist_cache: dict[int, dict[int, int]] | None = None) -> int:
    if dist_cache is not None:
        dist = dist_cache.get(destination)
        if dist is None:
            dist = dist_cache[destination] = bfs_distances(topology, destination)
    else:
        dist = bfs_distances(topology, destination)
    if current not in dist:
        raise Unreachable(f"{destination} unreachable from {current}")
    for v in topology.neighbors(current):
        if dist[v] == dist[current] - 1:
            return v
    raise Unreachable(f"no downhill neighbor at {current}")


def route_hop(topology: RoutingTopology, qtable: QTable | None, current: int, destination: int,
              mode: str, rng: random.Random | None = None, epsilon: float = 0.0,
              came_from: int | None = None, slack: float | None = None) -> int:
    """``slack`` is the hop budget left; exploration only picks neighbors whose
    own estimate still fits in it."""
    if current == destination:
        raise ValueError("already at destination")
    if not topology.neighbors(current):
        raise Unreachable(f"{current} has no neighbors")
    if mode == STATIC:
        return static_next_hop(topology, current, destination)
    if mode not in (QLEARNING, ADAPTIVE):
        raise ValueError(f"unknown routing mode {mode!r}")
    nbs = topology.neighbors(current)
    if rng is not None and epsilon > 0 and rng.random() < epsilon:
        options = [v for v in nbs if v != came_from] or list(nbs)
        if slack is not None:
            options = [v for v in options if 1 + qtable.remaining(v, destination) <= slack]
        if options:
            return rng.choice(options)
    return qtable.best(current, destination)[0]


@dataclass
class QRoutingConfig:
    alpha: float = 0.5
    epsilon: float = 0.1
    epsilon_floor: float = 0.05
    epsilon_decay: float = 0.9997
    episodes: int = 10_000
    seed: int = 0
    # adaptive variant: alpha tracks the variance of recent delivery-time residuals
    window: int = 20
    alpha_min: float = 0.1
    alpha_max: float = 0.9
    hop_budget_factor: int = 4


class Router:
    """A routing policy plus whatever it learns while forwarding."""

    def __init__(self, topology: RoutingTopology, mode: str, config: QRoutingConfig | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown routing mode {mode!r}")
        self.topology = topology
        self.mode = mode
        self.config = config or QRoutingConfig()
        self.rng = random.Random(f"router:{mode}:{self.config.seed}")
        self.qtable = QTable(topology, self.config.alpha) if mode != STATIC else None
        self.epsilon = self.config.epsilon
        self.alpha = self.config.alpha
        self.residuals: deque[float] = deque(maxlen=self.config.window)
        self._dist: dict[int, dict[int, int]] = {}

    def distance(self, src: int, dst: int) -> int:
        d = self._dist.get(dst)
        if d is None:
            d = self._dist[dst] = bfs_distances(self.topology, dst)
        return d[src]

    def route(self, src: int, dst: int, learn: bool = True, greedy: bool = False,
              budget: int | None = None) -> list[int] | None:
        """Forward one packet; returns the node path, or None if the hop budget ran out."""
        if budget is None:
            budget = self.config.hop_budget_factor * self.distance(src, dst)
        if self.mode == STATIC:
            path = [src]
            while path[-1] != dst:
                path.append(static_next_hop(self.topology, path[-1], dst, self._dist))
            return path
        estimate = self.qtable.remaining(src, dst)
        eps = 0.0 if greedy else self.epsilon
        path = [src]
        prev = None
        while path[-1] != dst:
            if len(path) - 1 >= budget:
                return None
            cur = path[-1]
            nxt = route_hop(self.topology, self.qtable, cur, dst, self.mode, self.rng, eps, prev,
                            slack=budget - (len(path) - 1))
            if learn:
                update_q(self.qtable, cur, dst, nxt, self.qtable.remaining(nxt, dst), self.alpha)
            path.append(nxt)
            prev = cur
        if learn and self.mode == ADAPTIVE:
            self.residuals.append((len(path) - 1) - estimate)
            if len(self.residuals) >= 2:
                v = pvariance(self.residuals)
                c = self.config
                self.alpha = c.alpha_min + (c.alpha_max - c.alpha_min) * v / (1.0 + v)
        return path

    def train(self, episodes: int | None = None, tasks_seed: int | None = None) -> None:
        if self.mode == STATIC:
            return
        n = self.config.episodes if episodes is None else episodes
        rng = random.Random(f"train:{self.config.seed if tasks_seed is None else tasks_seed}")
        nodes = self.topology.nodes
        for _ in range(n):
            src, dst = rng.sample(nodes, 2)
            # training walks are capped generously; early on the table knows nothing
            self.route(src, dst, learn=True, budget=4 * len(nodes))
            self.epsilon = max(self.config.epsilon_floor, self.epsilon * self.config.epsilon_decay)


def make_tasks(topology: RoutingTopology, n: int, seed: int = 0) -> list[tuple[int, int]]:
    rng = random.Random(f"tasks:{seed}")
    return [tuple(rng.sample(topology.nodes, 2)) for _ in range(n)]
