"""Operational policies: how an agent's outgoing contributions are ordered and batched.

A policy only ever sees frozen contributions and can only permute or
partition them; ``apply_policy`` checks that the multiset survives.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from .contribution import Contribution

Batches = list[list[Contribution]]

ASC = "asc"
DESC = "desc"
SEEDED = "seeded"


class PolicyTamper(RuntimeError):
    pass


@dataclass(frozen=True)
class OperationalPolicy:
    """``delivery_order`` is the hint the scheduler uses to order same-tick
    deliveries: by sender ascending, descending, or by a seeded shuffle."""

    name: str
    dispatch: Callable[[list[Contribution]], Batches]
    delivery_order: str = ASC
    seed: int = 0

    def __post_init__(self):
        if self.delivery_order not in (ASC, DESC, SEEDED):
            raise ValueError(f"unknown delivery order {self.delivery_order!r}")


def apply_policy(policy: OperationalPolicy, outbox: list[Contribution]) -> Batches:
    batches = policy.dispatch(list(outbox))
    out = Counter(c for batch in batches for c in batch)
    if out != Counter(outbox) or any(not b for b in batches):
        raise PolicyTamper(f"policy {policy.name!r} did not preserve its outbox")
    return batches


def fifo() -> OperationalPolicy:
    return OperationalPolicy("fifo", lambda box: [[c] for c in box], ASC)


def lifo() -> OperationalPolicy:
    return OperationalPolicy("lifo", lambda box: [[c] for c in reversed(box)], DESC)


def batching(size: int = 2) -> OperationalPolicy:
    if size < 1:
        raise ValueError("batch size must be positive")

    def dispatch(box):
        return [box[i:i + size] for i in range(0, len(box), size)]

    return OperationalPolicy(f"batching({size})", dispatch, ASC)


def reordering(seed: int = 0) -> OperationalPolicy:
    def dispatch(box):
        rng = random.Random(f"{seed}:" + ",".join(c.rid for c in box))
        box = list(box)
        rng.shuffle(box)
        return [[c] for c in box]

    return OperationalPolicy(f"reordering({seed})", dispatch, SEEDED, seed)


def by_name(spec: str) -> OperationalPolicy:
    """Parse 'fifo', 'lifo', 'batching:N' or 'reordering:SEED'."""
    name, _, arg = spec.partition(":")
    if name == "fifo":
        return fifo()
    if name == "lifo":
        return lifo()
    if name == "batching":
        return batching(int(arg or 2))
    if name == "reordering":
        return reordering(int(arg or 0))
    raise ValueError(f"unknown policy {spec!r}")
