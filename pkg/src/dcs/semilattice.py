"""Payload state spaces: join-semilattices plus one deliberately broken register."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import reduce
from typing import Any, Callable, Iterable, Mapping


class MixedStateSpace(ValueError):
    pass


class UnknownStateSpace(KeyError):
    pass


@dataclass(frozen=True)
class SemilatticeValue:
    """An immutable element of one registered state space.

    ``value`` is always held in normalized form, so dataclass equality is
    structural and agrees with equality of canonical bytes.
    """

    space: str
    value: Any

    def canonical_bytes(self) -> bytes:
        return REGISTRY.get(self.space).encode(self.value)

    def to_json(self) -> Any:
        return REGISTRY.get(self.space).to_json(self.value)

    def __repr__(self) -> str:
        return f"{self.space}({self.to_json()!r})"


@dataclass(frozen=True)
class StateSpace:
    tag: str
    merge: Callable[[Any, Any], Any]
    bottom: Any
    normalize: Callable[[Any], Any]
    encode: Callable[[Any], bytes]
    decode: Callable[[bytes], Any]
    to_json: Callable[[Any], Any]
    lawful: bool = True

    def make(self, raw: Any) -> SemilatticeValue:
        return SemilatticeValue(self.tag, self.normalize(raw))


class StateSpaceRegistry:
    def __init__(self) -> None:
        self._spaces: dict[str, StateSpace] = {}

    def register(self, space: StateSpace) -> None:
        if space.tag in self._spaces:
            raise ValueError(f"state space {space.tag!r} already registered")
        self._spaces[space.tag] = space

    def get(self, tag: str) -> StateSpace:
        try:
            return self._spaces[tag]
        except KeyError:
            raise UnknownStateSpace(tag) from None

    def tags(self) -> list[str]:
        return sorted(self._spaces)

    def lawful_tags(self) -> list[str]:
        return [t for t in self.tags() if self._spaces[t].lawful]

    def __contains__(self, tag: str) -> bool:
        return tag in self._spaces


REGISTRY = StateSpaceRegistry()


# -- encoding helpers ---------------------------------------------------------

def _enc_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack(">I", len(b)) + b


def _dec_str(buf: bytes, pos: int) -> tuple[str, int]:
    (n,) = struct.unpack_from(">I", buf, pos)
    pos += 4
    return buf[pos:pos + n].decode("utf-8"), pos + n


def _enc_gset(elems: frozenset) -> bytes:
    items = sorted(e.encode("utf-8") for e in elems)
    out = [struct.pack(">I", len(items))]
    out += [struct.pack(">I", len(b)) + b for b in items]
    return b"".join(out)


def _dec_gset_at(buf: bytes, pos: int) -> tuple[frozenset, int]:
    (n,) = struct.unpack_from(">I", buf, pos)
    pos += 4
    elems = []
    for _ in range(n):
        s, pos = _dec_str(buf, pos)
        elems.append(s)
    return frozenset(elems), pos


def _dec_gset(buf: bytes) -> frozenset:
    value, pos = _dec_gset_at(buf, 0)
    if pos != len(buf):
        raise ValueError("trailing bytes in gset encoding")
    return value


def _norm_gset(raw: Iterable[str]) -> frozenset:
    if isinstance(raw, str):
        raise TypeError("gset payload must be an iterable of strings, not a string")
    elems = frozenset(raw)
    if not all(isinstance(e, str) for e in elems):
        raise TypeError("gset elements must be strings")
    return elems


def _norm_maxint(raw: int) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise TypeError("maxint payload must be an int")
    if not 0 <= raw < 2**64:
        raise ValueError("maxint payload must fit in an unsigned 64-bit integer")
    return raw


def _norm_gmap(raw: Mapping[str, Iterable[str]] | Iterable[tuple[str, frozenset]]) -> frozenset:
    items = raw.items() if isinstance(raw, Mapping) else raw
    out = {}
    for k, v in items:
        if not isinstance(k, str):
            raise TypeError("gmap keys must be strings")
        elems = _norm_gset(v)
        # an absent key and an empty set are the same element
        if elems:
            out[k] = out.get(k, frozenset()) | elems
    return frozenset(out.items())


def _join_gmap(a: frozenset, b: frozenset) -> frozenset:
    merged = dict(a)
    for k, v in b:
        merged[k] = merged.get(k, frozenset()) | v
    return frozenset(merged.items())


def _enc_gmap(m: frozenset) -> bytes:
    entries = sorted(m, key=lambda kv: kv[0].encode("utf-8"))
    out = [struct.pack(">I", len(entries))]
    for k, v in entries:
        out.append(_enc_str(k))
        out.append(_enc_gset(v))
    return b"".join(out)


def _dec_gmap(buf: bytes) -> frozenset:
    (n,) = struct.unpack_from(">I", buf, 0)
    pos = 4
    items = []
    for _ in range(n):
        k, pos = _dec_str(buf, pos)
        v, pos = _dec_gset_at(buf, pos)
        items.append((k, v))
    if pos != len(buf):
        raise ValueError("trailing bytes in gmap encoding")
    return _norm_gmap(items)


def _norm_overwrite(raw: int) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise TypeError("overwrite-register payload must be an int")
    if not -(2**63) <= raw < 2**63:
        raise ValueError("overwrite-register payload must fit in a signed 64-bit integer")
    return raw


def overwrite_merge(a: SemilatticeValue, b: SemilatticeValue) -> SemilatticeValue:
    """Last-arrival-wins: returns ``b`` regardless of ``a``. Not a join."""
    if a.space != OVERWRITE or b.space != OVERWRITE:
        raise MixedStateSpace("overwrite_merge is only defined on the overwrite-register space")
    return b


GSET = "gset"
MAXINT = "maxint"
GMAP = "gmap"
OVERWRITE = "overwrite-register"

REGISTRY.register(StateSpace(
    tag=GSET,
    merge=frozenset.__or__,
    bottom=frozenset(),
    normalize=_norm_gset,
    encode=_enc_gset,
    decode=_dec_gset,
    to_json=lambda v: sorted(v),
))
REGISTRY.register(StateSpace(
    tag=MAXINT,
    merge=max,
    bottom=0,
    normalize=_norm_maxint,
    encode=lambda v: struct.pack(">Q", v),
    decode=lambda b: struct.unpack(">Q", b)[0],
    to_json=lambda v: v,
))
REGISTRY.register(StateSpace(
    tag=GMAP,
    merge=_join_gmap,
    bottom=frozenset(),
    normalize=_norm_gmap,
    encode=_enc_gmap,
    decode=_dec_gmap,
    to_json=lambda v: {k: sorted(s) for k, s in sorted(v)},
))
REGISTRY.register(StateSpace(
    tag=OVERWRITE,
    merge=lambda a, b: b,
    bottom=0,
    normalize=_norm_overwrite,
    encode=lambda v: struct.pack(">q", v),
    decode=lambda b: struct.unpack(">q", b)[0],
    to_json=lambda v: v,
    lawful=False,
))


# -- constructors -------------------------------------------------------------

def gset(*elems: str) -> SemilatticeValue:
    return REGISTRY.get(GSET).make(elems)


def maxint(n: int) -> SemilatticeValue:
    return REGISTRY.get(MAXINT).make(n)


def gmap(entries: Mapping[str, Iterable[str]] | None = None) -> SemilatticeValue:
    return REGISTRY.get(GMAP).make(entries or {})


def overwrite(n: int) -> SemilatticeValue:
    return REGISTRY.get(OVERWRITE).make(n)


def bottom(space: str) -> SemilatticeValue:
    return SemilatticeValue(space, REGISTRY.get(space).bottom)


def from_json(space: str, raw: Any) -> SemilatticeValue:
    return REGISTRY.get(space).make(raw)


def from_canonical(space: str, data: bytes) -> SemilatticeValue:
    ss = REGISTRY.get(space)
    return SemilatticeValue(space, ss.normalize(ss.decode(data)))


# -- algebra ------------------------------------------------------------------

def _same_space(a: SemilatticeValue, b: SemilatticeValue) -> StateSpace:
    if a.space != b.space:
        raise MixedStateSpace(f"cannot combine {a.space!r} with {b.space!r}")
    return REGISTRY.get(a.space)


def join(a: SemilatticeValue, b: SemilatticeValue) -> SemilatticeValue:
    """Least upper bound of ``a`` and ``b``.

    For the overwrite register this dispatches to the (unlawful) overwrite
    merge, which is how the non-semilattice violation mode plugs in.
    """
    ss = _same_space(a, b)
    return SemilatticeValue(ss.tag, ss.merge(a.value, b.value))


def leq(a: SemilatticeValue, b: SemilatticeValue) -> bool:
    return join(a, b) == b


def join_all(values: Iterable[SemilatticeValue], space: str | None = None) -> SemilatticeValue:
    values = list(values)
    if not values:
        if space is None:
            raise ValueError("join_all of an empty collection needs an explicit space")
        return bottom(space)
    if space is not None and values[0].space != space:
        raise MixedStateSpace(f"expected {space!r}, got {values[0].space!r}")
    return reduce(join, values)
