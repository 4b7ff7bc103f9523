"""Provenance DAG over contribution rids.

Edges run parent -> child. Contributions whose parents have not arrived yet
are buffered and committed as soon as their parents are present, so the
committed graph is acyclic by construction; a forged cycle shows up as a
buffered contribution that transitively waits on itself, which ``insert``
detects and rejects.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Iterator

from .contribution import Contribution, Rid
from .semilattice import join_all


class DagError(Exception):
    pass


class RidCollision(DagError):
    def __init__(self, rid: Rid, first: Contribution, second: Contribution):
        super().__init__(f"rid {rid} claimed by two different contributions")
        self.rid = rid
        self.first = first
        self.second = second


class CycleDetected(DagError):
    def __init__(self, cycle: list[Rid]):
        super().__init__("cycle: " + " -> ".join(r[:12] for r in cycle))
        self.cycle = cycle


class UnknownRid(DagError, KeyError):
    pass


class UnsealedDag(DagError):
    pass


@dataclass(frozen=True)
class DagDelta:
    buffered: tuple[Contribution, ...]
    dangling: frozenset


class ProvenanceDag:
    def __init__(self, contributions: Iterable[Contribution] = ()):
        self.vertices: dict[Rid, Contribution] = {}
        self._children: dict[Rid, set[Rid]] = defaultdict(set)
        self._pending: dict[Rid, Contribution] = {}
        self._waiting: dict[Rid, set[Rid]] = defaultdict(set)
        self._ancestors: dict[Rid, frozenset] = {}
        for c in contributions:
            self.insert(c)

    # -- mutation -------------------------------------------------------------

    def insert(self, c: Contribution) -> bool:
        """Add ``c``; returns False when an identical record is already present."""
        existing = self.vertices.get(c.rid) or self._pending.get(c.rid)
        if existing is not None:
            if existing == c:
                return False
            raise RidCollision(c.rid, existing, c)
        if c.rid in c.parents:
            raise CycleDetected([c.rid, c.rid])
        cycle = self._cycle_through(c)
        if cycle:
            raise CycleDetected(cycle)

        missing = [p for p in c.parents if p not in self.vertices]
        if missing:
            self._pending[c.rid] = c
            for p in missing:
                self._waiting[p].add(c.rid)
            return True

        self._commit(c)
        work = deque([c.rid])
        while work:
            arrived = work.popleft()
            for w in sorted(self._waiting.pop(arrived, ())):
                # w may already have been committed through another parent in this cascade
                wc = self._pending.get(w)
                if wc is not None and all(p in self.vertices for p in wc.parents):
                    del self._pending[w]
                    self._commit(wc)
                    work.append(w)
        return True

    def _commit(self, c: Contribution) -> None:
        self.vertices[c.rid] = c
        for p in c.parents:
            self._children[p].add(c.rid)

    def _cycle_through(self, c: Contribution) -> list[Rid] | None:
        # Committed vertices cannot reach c, so only buffered ones need walking.
        stack = [(p, [c.rid, p]) for p in sorted(c.parents)]
        seen = set()
        while stack:
            rid, path = stack.pop()
            if rid == c.rid:
                return path
            if rid in seen or rid not in self._pending:
                continue
            seen.add(rid)
            for p in sorted(self._pending[rid].parents):
                stack.append((p, path + [p]))
        return None

    # -- inspection -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, rid: Rid) -> bool:
        return rid in self.vertices

    def __iter__(self) -> Iterator[Contribution]:
        return iter(self.vertices[r] for r in sorted(self.vertices))

    @property
    def sealed(self) -> bool:
        return not self._pending

    @property
    def buffered(self) -> dict[Rid, Contribution]:
        return dict(self._pending)

    def known(self) -> dict[Rid, Contribution]:
        return {**self.vertices, **self._pending}

    def delta(self) -> DagDelta:
        dangling = frozenset(r for r in self._waiting if r not in self._pending and r not in self.vertices)
        buffered = tuple(self._pending[r] for r in sorted(self._pending))
        return DagDelta(buffered, dangling)

    def edges(self) -> set[tuple[Rid, Rid]]:
        return {(p, c.rid) for c in self.vertices.values() for p in c.parents}

    def parents(self, rid: Rid) -> frozenset:
        return self._get(rid).parents

    def children(self, rid: Rid) -> frozenset:
        self._get(rid)
        return frozenset(self._children.get(rid, ()))

    def copy(self) -> "ProvenanceDag":
        new = ProvenanceDag()
        new.vertices = dict(self.vertices)
        new._children = defaultdict(set, {k: set(v) for k, v in self._children.items()})
        new._pending = dict(self._pending)
        new._waiting = defaultdict(set, {k: set(v) for k, v in self._waiting.items()})
        new._ancestors = dict(self._ancestors)
        return new

    def _get(self, rid: Rid) -> Contribution:
        try:
            return self.vertices[rid]
        except KeyError:
            raise UnknownRid(rid) from None

    def _require_sealed(self) -> None:
        if not self.sealed:
            raise UnsealedDag(f"{len(self._pending)} contributions still wait on missing parents")

    # -- queries --------------------------------------------------------------

    def ancestors(self, rid: Rid) -> frozenset:
        """Strict ancestors. Cached: committed history never changes."""
        self._get(rid)
        cached = self._ancestors.get(rid)
        if cached is not None:
            return cached
        # iterative post-order so deep chains do not hit the recursion limit
        stack = [(rid, False)]
        while stack:
            r, expanded = stack.pop()
            if r in self._ancestors:
                continue
            ps = self.vertices[r].parents
            if not expanded:
                stack.append((r, True))
                stack.extend((p, False) for p in ps if p not in self._ancestors)
                continue
            acc = set(ps)
            for p in ps:
                acc |= self._ancestors[p]
            self._ancestors[r] = frozenset(acc)
        return self._ancestors[rid]

    def is_ancestor(self, p: Rid, r: Rid) -> bool:
        self._get(p)
        return p in self.ancestors(r)

    def are_concurrent(self, a: Rid, b: Rid) -> bool:
        self._get(a)
        self._get(b)
        return a != b and not self.is_ancestor(a, b) and not self.is_ancestor(b, a)

    def depth(self) -> dict[Rid, int]:
        """Longest-path depth of every committed vertex (roots are 0)."""
        out: dict[Rid, int] = {}
        for r in self.topological_order():
            ps = self.vertices[r].parents
            out[r] = 1 + max(out[p] for p in ps) if ps else 0
        return out

    def topological_order(self) -> list[Rid]:
        indeg = {r: len(c.parents) for r, c in self.vertices.items()}
        ready = sorted(r for r, d in indeg.items() if d == 0)
        out = []
        while ready:
            r = ready.pop(0)
            out.append(r)
            fresh = []
            for ch in self._children.get(r, ()):
                if ch in indeg:
                    indeg[ch] -= 1
                    if indeg[ch] == 0:
                        fresh.append(ch)
            if fresh:
                ready = sorted(ready + fresh)
        return out

    def topological_layers(self) -> list[list[Rid]]:
        self._require_sealed()
        layers: dict[int, list[Rid]] = defaultdict(list)
        for r, d in self.depth().items():
            layers[d].append(r)
        return [sorted(layers[d]) for d in range(len(layers))]

    # -- export ---------------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"# vertices={len(self.vertices)} edges={len(self.edges())} buffered={len(self._pending)}"]
        depth = self.depth()
        by_layer: dict[int, list[Rid]] = defaultdict(list)
        for r, d in depth.items():
            by_layer[d].append(r)
        for d in sorted(by_layer):
            lines.append(f"layer {d}")
            for r in sorted(by_layer[d]):
                c = self.vertices[r]
                ps = ",".join(sorted(c.parents)) or "-"
                lines.append(f"  {r} key={c.key} by={c.creator}#{c.creator_seq} "
                             f"payload={c.payload!r} parents={ps}")
        for r in sorted(self._pending):
            c = self._pending[r]
            lines.append(f"buffered {r} parents={','.join(sorted(c.parents))}")
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        lines = ["digraph provenance {", "  rankdir=LR;"]
        for r in sorted(self.vertices):
            c = self.vertices[r]
            label = f"{r[:8]}\\n{c.key} {c.creator}#{c.creator_seq}\\n{c.payload!r}".replace('"', "'")
            lines.append(f'  "{r}" [label="{label}"];')
        for p, r in sorted(self.edges()):
            lines.append(f'  "{p}" -> "{r}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


# -- isomorphism ----------------------------------------------------------------

@dataclass
class IsoResult:
    isomorphic: bool
    mapping: dict[Rid, Rid] | None = None

    def __bool__(self) -> bool:
        return self.isomorphic


def _graph(dag: ProvenanceDag) -> tuple[dict[Rid, Contribution], dict[Rid, frozenset]]:
    nodes = dag.known()
    parents = {r: frozenset(p for p in c.parents if p in nodes) for r, c in nodes.items()}
    return nodes, parents


def _order(nodes: dict[Rid, Contribution], parents: dict[Rid, frozenset]) -> list[Rid]:
    """Parents before children where possible; anything on a cycle goes last."""
    indeg = {r: len(ps) for r, ps in parents.items()}
    kids: dict[Rid, list[Rid]] = defaultdict(list)
    for r, ps in parents.items():
        for p in ps:
            kids[p].append(r)
    ready = deque(sorted(r for r, d in indeg.items() if d == 0))
    out = []
    while ready:
        r = ready.popleft()
        out.append(r)
        for k in sorted(kids[r]):
            indeg[k] -= 1
            if indeg[k] == 0:
                ready.append(k)
    placed = set(out)
    return out + sorted(r for r in nodes if r not in placed)


def isomorphic(g1: ProvenanceDag, g2: ProvenanceDag) -> IsoResult:
    """Decide whether a label- and edge-preserving bijection exists.

    A vertex label is (creator, creator_seq, key, payload). Under lawful
    content addressing both graphs share rids and the identity check succeeds
    immediately; otherwise a backtracking search maps g1's vertices in
    topological order, requiring each candidate's parent set to be the image
    of the source vertex's parent set.
    """
    n1, par1 = _graph(g1)
    n2, par2 = _graph(g2)
    if len(n1) != len(n2):
        return IsoResult(False)
    if n1.keys() == n2.keys() and all(n1[r] == n2[r] for r in n1):
        return IsoResult(True, {r: r for r in sorted(n1)})

    def dangling(nodes, r):
        return sum(1 for p in nodes[r].parents if p not in nodes)

    def sig(nodes, par, outdeg, r):
        return (nodes[r].label(), len(par[r]), outdeg[r], dangling(nodes, r))

    out1: dict[Rid, int] = defaultdict(int)
    out2: dict[Rid, int] = defaultdict(int)
    for r, ps in par1.items():
        for p in ps:
            out1[p] += 1
    for r, ps in par2.items():
        for p in ps:
            out2[p] += 1
    sig1 = {r: sig(n1, par1, out1, r) for r in n1}
    sig2 = {r: sig(n2, par2, out2, r) for r in n2}
    if sorted(map(repr, sig1.values())) != sorted(map(repr, sig2.values())):
        return IsoResult(False)
    buckets: dict = defaultdict(list)
    for r in sorted(n2):
        buckets[sig2[r]].append(r)

    order = _order(n1, par1)
    phi: dict[Rid, Rid] = {}
    used: set[Rid] = set()

    def consistent(u: Rid, v: Rid) -> bool:
        for p in par1[u]:
            if p in phi and phi[p] not in par2[v]:
                return False
        inv = {b: a for a, b in phi.items()}
        for q in par2[v]:
            if q in inv and inv[q] not in par1[u]:
                return False
        return True

    def search(i: int) -> bool:
        if i == len(order):
            return True
        u = order[i]
        for v in buckets[sig1[u]]:
            if v in used or not consistent(u, v):
                continue
            phi[u] = v
            used.add(v)
            if search(i + 1):
                return True
            del phi[u]
            used.discard(v)
        return False

    if not search(0):
        return IsoResult(False)
    edges1 = {(phi[p], phi[r]) for r, ps in par1.items() for p in ps}
    edges2 = {(p, r) for r, ps in par2.items() for p in ps}
    if edges1 != edges2:
        return IsoResult(False)
    return IsoResult(True, dict(sorted(phi.items())))


# -- observational equivalence -----------------------------------------------------

@dataclass(frozen=True)
class Query:
    kind: str
    args: tuple
    answer1: object
    answer2: object

    def __str__(self) -> str:
        args = ", ".join(a[:12] if isinstance(a, str) else repr(a) for a in self.args)
        return f"{self.kind}({args}) -> {self.answer1!r} vs {self.answer2!r}"


@dataclass
class EquivalenceResult:
    equivalent: bool
    query: Query | None = None
    mapping: dict[Rid, Rid] | None = None

    def __bool__(self) -> bool:
        return self.equivalent


def _aggregates(dag: ProvenanceDag) -> dict[str, tuple]:
    by_key: dict[str, list] = defaultdict(list)
    for c in dag.vertices.values():
        by_key[c.key].append(c)
    out = {}
    for k, cs in by_key.items():
        value = join_all([c.payload for c in cs])
        labels = frozenset(repr(c.label()) for c in cs)
        out[k] = (value, labels)
    return out


def observationally_equivalent(g1: ProvenanceDag, g2: ProvenanceDag) -> EquivalenceResult:
    """Compare two sealed histories through the query interface only.

    Observations are per-key join aggregates, the per-key aggregate of event
    labels, and every ``is_ancestor``/``are_concurrent`` query over pairs of
    events matched by label. No edge set is compared directly, so this is an
    independent check on ``isomorphic``. Reachability is all the queries can
    see: two dags that differ only by an edge already implied transitively
    are indistinguishable here.
    """
    for g in (g1, g2):
        g._require_sealed()
    a1, a2 = _aggregates(g1), _aggregates(g2)
    for k in sorted(set(a1) | set(a2)):
        v1 = a1.get(k, (None, frozenset()))
        v2 = a2.get(k, (None, frozenset()))
        if v1[0] != v2[0]:
            return EquivalenceResult(False, Query("joinAll", (k,), v1[0], v2[0]))
        if v1[1] != v2[1]:
            return EquivalenceResult(False, Query("labels", (k,), len(v1[1]), len(v2[1])))

    by_label1: dict[tuple, list[Rid]] = defaultdict(list)
    by_label2: dict[tuple, list[Rid]] = defaultdict(list)
    for r in sorted(g1.vertices):
        by_label1[g1.vertices[r].label()].append(r)
    for r in sorted(g2.vertices):
        by_label2[g2.vertices[r].label()].append(r)
    for lab in by_label1:
        if len(by_label1[lab]) != len(by_label2.get(lab, ())):
            return EquivalenceResult(False, Query("count", (repr(lab),),
                                                  len(by_label1[lab]), len(by_label2.get(lab, ()))))

    order = [r for r in g1.topological_order()]
    anc1 = {r: g1.ancestors(r) for r in g1.vertices}
    anc2 = {r: g2.ancestors(r) for r in g2.vertices}

    if all(len(v) == 1 for v in by_label1.values()):
        phi = {rs[0]: by_label2[lab][0] for lab, rs in by_label1.items()}
        for a, b in product(order, order):
            if a == b:
                continue
            x, y = phi[a], phi[b]
            q1, q2 = a in anc1[b], x in anc2[y]
            if q1 != q2:
                return EquivalenceResult(False, Query("isAncestor", (a, b, x, y), q1, q2))
            c1 = g1.are_concurrent(a, b)
            c2 = g2.are_concurrent(x, y)
            if c1 != c2:
                return EquivalenceResult(False, Query("areConcurrent", (a, b, x, y), c1, c2))
        return EquivalenceResult(True, mapping=dict(sorted(phi.items())))

    # Duplicate labels: search for a label-respecting matching under which all
    # ancestor answers agree.
    desc1: dict[Rid, int] = defaultdict(int)
    desc2: dict[Rid, int] = defaultdict(int)
    for r, a in anc1.items():
        for p in a:
            desc1[p] += 1
    for r, a in anc2.items():
        for p in a:
            desc2[p] += 1
    phi: dict[Rid, Rid] = {}
    used: set[Rid] = set()

    def fits(u: Rid, v: Rid) -> bool:
        if len(anc1[u]) != len(anc2[v]) or desc1[u] != desc2[v]:
            return False
        for a, x in phi.items():
            if (a in anc1[u]) != (x in anc2[v]) or (u in anc1[a]) != (v in anc2[x]):
                return False
        return True

    def search(i: int) -> bool:
        if i == len(order):
            return True
        u = order[i]
        for v in by_label2[g1.vertices[u].label()]:
            if v in used or not fits(u, v):
                continue
            phi[u] = v
            used.add(v)
            if search(i + 1):
                return True
            del phi[u]
            used.discard(v)
        return False

    if search(0):
        return EquivalenceResult(True, mapping=dict(sorted(phi.items())))
    profile1 = sorted((repr(g1.vertices[r].label()), len(anc1[r]), desc1[r]) for r in g1.vertices)
    profile2 = sorted((repr(g2.vertices[r].label()), len(anc2[r]), desc2[r]) for r in g2.vertices)
    return EquivalenceResult(False, Query("ancestorProfile", (), profile1 == profile2, False))
