"""Immutable contributions, content-addressed rids, and the line-oriented log format."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .semilattice import SemilatticeValue, from_canonical

Rid = str
AgentId = int

DIGEST_NAME = "sha256"


class CausalViolation(ValueError):
    """A parent was named that the creator had not observed."""


class StateSpaceMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Contribution:
    rid: Rid
    parents: frozenset
    payload: SemilatticeValue
    key: str
    creator: AgentId
    creator_seq: int

    @property
    def space(self) -> str:
        return self.payload.space

    def label(self) -> tuple:
        """Identity of the event independent of its rid and parents."""
        return (self.creator, self.creator_seq, self.key, self.payload)

    def __repr__(self) -> str:
        return f"Contribution({self.rid[:8]}, key={self.key!r}, by={self.creator}#{self.creator_seq})"


def _enc(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack(">I", len(b)) + b


def digest(creator: AgentId, creator_seq: int, key: str, parents: Iterable[Rid],
           payload: SemilatticeValue) -> Rid:
    h = hashlib.new(DIGEST_NAME)
    h.update(b"dcs/contribution/v1\x00")
    h.update(struct.pack(">IQ", creator, creator_seq))
    h.update(_enc(key))
    ps = sorted(parents)
    h.update(struct.pack(">I", len(ps)))
    for p in ps:
        h.update(_enc(p))
    h.update(_enc(payload.space))
    body = payload.canonical_bytes()
    h.update(struct.pack(">I", len(body)) + body)
    return h.hexdigest()


def recompute_rid(c: Contribution) -> Rid:
    return digest(c.creator, c.creator_seq, c.key, c.parents, c.payload)


def make_contribution(creator: AgentId, creator_seq: int, key: str, parents: Iterable[Rid],
                      payload: SemilatticeValue, observed: Iterable[Rid] | set,
                      expected_space: str | None = None) -> Contribution:
    """The lawful constructor: parents must already be observed, rid is the content digest."""
    if creator < 1:
        raise ValueError("agent ids start at 1")
    if creator_seq < 0:
        raise ValueError("creator_seq must be nonnegative")
    parents = frozenset(parents)
    observed = observed if isinstance(observed, (set, frozenset)) else set(observed)
    unknown = parents - observed
    if unknown:
        raise CausalViolation(f"parents not observed by agent {creator}: {sorted(unknown)}")
    if expected_space is not None and payload.space != expected_space:
        raise StateSpaceMismatch(f"key {key!r} holds {expected_space!r}, got {payload.space!r}")
    rid = digest(creator, creator_seq, key, parents, payload)
    return Contribution(rid, parents, payload, key, creator, creator_seq)


class FindingKind(str, Enum):
    RID_COLLISION = "RidCollision"
    SELF_PARENT = "SelfParent"
    UNKNOWN_DIGEST = "UnknownDigest"


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    rid: Rid
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind.value}: {self.rid} {self.detail}".rstrip()


def validate_contribution(c: Contribution, known: Mapping[Rid, Contribution]) -> list[Finding]:
    """Receiver-side audit. Returns findings rather than raising."""
    findings = []
    other = known.get(c.rid)
    if other is not None and other != c:
        findings.append(Finding(FindingKind.RID_COLLISION, c.rid,
                                f"claimed by {other.label()[:2]} and {c.label()[:2]}"))
    if c.rid in c.parents:
        findings.append(Finding(FindingKind.SELF_PARENT, c.rid))
    if recompute_rid(c) != c.rid:
        findings.append(Finding(FindingKind.UNKNOWN_DIGEST, c.rid, "rid does not match content digest"))
    return findings


# -- log records --------------------------------------------------------------

def to_record(c: Contribution) -> str:
    rec = {
        "rid": c.rid,
        "creator": c.creator,
        "creatorSeq": c.creator_seq,
        "key": c.key,
        "parents": sorted(c.parents),
        "stateSpaceTag": c.payload.space,
        "payload": c.payload.canonical_bytes().hex(),
    }
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=True)


def from_record(line: str) -> Contribution:
    rec = json.loads(line)
    payload = from_canonical(rec["stateSpaceTag"], bytes.fromhex(rec["payload"]))
    return Contribution(
        rid=rec["rid"],
        parents=frozenset(rec["parents"]),
        payload=payload,
        key=rec["key"],
        creator=int(rec["creator"]),
        creator_seq=int(rec["creatorSeq"]),
    )


def log_header() -> str:
    return f"# dcs contribution log; digest={DIGEST_NAME}"


def write_log(path: Path | str, contributions: Iterable[Contribution]) -> None:
    lines = [log_header()] + [to_record(c) for c in contributions]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_log(path: Path | str) -> list[Contribution]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(from_record(line))
        except (ValueError, KeyError, TypeError) as e:
            raise ValueError(f"{path}:{n}: malformed contribution record ({e})") from None
    return out
