"""Timestamped fluid queues with FIFO/LIFO service and per-unit delay accounting.

Queue totals follow the slotted recursion

    q_j(t+1) = max(q_j(t) - mu_j(t), 0) + A_j(t)

service is applied to the content present at the start of the slot; arrivals
join afterwards and are first servable in the next slot. When the allocated
service mu_j exceeds the available content, the deficit is transmitted as null
padding (recorded, never enqueued). Content is fluid: chunks carry real-valued
amounts and their arrival slot, so departures can be attributed to arrival
times under either discipline.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DepartureRecord",
    "AdjustmentRecord",
    "DelayStats",
    "DelayAccumulator",
    "QueueLedger",
    "apply_slot",
    "adjust_to",
    "delay_stats",
]

_DUST = 1e-12

FIFO = "FIFO"
LIFO = "LIFO"


@dataclass
class DepartureRecord:
    queue: int
    amount: float
    arrival_slot: int
    departure_slot: int
    was_null: bool


@dataclass
class AdjustmentRecord:
    dropped: np.ndarray        # total amount removed per queue (newest first)
    dropped_null: np.ndarray   # portion of `dropped` that was null padding
    added_null: np.ndarray     # null amount appended per queue

    @property
    def empty(self) -> bool:
        return not (self.dropped.any() or self.added_null.any())


class QueueLedger:
    """Per-queue chunk lists plus conservation counters.

    Chunks are [arrival_slot, amount, is_null] triples ordered oldest-first.
    The cached totals follow the scalar recursion exactly; chunk sums agree
    with them to float accumulation error.
    """

    def __init__(self, r: int):
        self.r = int(r)
        self.chunks: list[deque] = [deque() for _ in range(self.r)]
        self._totals = np.zeros(self.r)
        # conservation counters (real = non-null)
        self.arrived = np.zeros(self.r)
        self.departed_real = np.zeros(self.r)
        self.departed_null = np.zeros(self.r)  # null chunks served from the ledger
        self.padding_null = np.zeros(self.r)   # service deficit, never enqueued
        self.dropped_real = np.zeros(self.r)
        self.dropped_null = np.zeros(self.r)
        self.added_null = np.zeros(self.r)

    @property
    def totals(self) -> np.ndarray:
        return self._totals.copy()

    def total(self, j: int) -> float:
        return float(self._totals[j])

    def chunk_sum(self, j: int) -> float:
        return float(sum(c[1] for c in self.chunks[j]))

    def remaining_real(self) -> np.ndarray:
        return np.array([sum(c[1] for c in q if not c[2]) for q in self.chunks])

    def remaining_null(self) -> np.ndarray:
        return np.array([sum(c[1] for c in q if c[2]) for q in self.chunks])

    def add_initial(self, amounts, slot: int = 0) -> None:
        """Seed backlog before a run (test hook); counts as real arrivals."""
        amounts = np.asarray(amounts, dtype=float)
        for j in range(self.r):
            if amounts[j] > 0:
                self.chunks[j].append([slot, float(amounts[j]), False])
                self._totals[j] += float(amounts[j])
                self.arrived[j] += float(amounts[j])


def _serve(ledger: QueueLedger, j: int, amount: float, slot: int, lifo: bool, out: list):
    """Remove up to `amount` from queue j, newest-first when lifo."""
    chunks = ledger.chunks[j]
    need = amount
    while need > _DUST and chunks:
        chunk = chunks[-1] if lifo else chunks[0]
        take = chunk[1] if chunk[1] <= need else need
        out.append(DepartureRecord(j, take, chunk[0], slot, chunk[2]))
        if chunk[2]:
            ledger.departed_null[j] += take
        else:
            ledger.departed_real[j] += take
        need -= take
        chunk[1] -= take
        if chunk[1] <= _DUST:
            if lifo:
                chunks.pop()
            else:
                chunks.popleft()
    return need


def apply_slot(ledger: QueueLedger, arrivals, services, slot: int, discipline: str = FIFO) -> list[DepartureRecord]:
    """One slot of queue dynamics; returns the departures it caused.

    Serves min(q_j, mu_j) from the existing chunks (front for FIFO, back for
    LIFO), emits a null departure for any service deficit, then appends the
    slot's arrivals as a new chunk.
    """
    if discipline not in (FIFO, LIFO):
        raise ValueError(f"unknown discipline {discipline!r}")
    arrivals = np.asarray(arrivals, dtype=float)
    services = np.asarray(services, dtype=float)
    if arrivals.shape != (ledger.r,) or services.shape != (ledger.r,):
        raise ValueError("arrivals/services must be r-vectors")
    if (arrivals < 0).any() or (services < 0).any():
        raise ValueError("arrivals and services must be non-negative")
    lifo = discipline == LIFO
    out: list[DepartureRecord] = []
    for j in range(ledger.r):
        mu = float(services[j])
        if mu > 0:
            deficit = _serve(ledger, j, mu, slot, lifo, out)
            if deficit > _DUST:
                out.append(DepartureRecord(j, deficit, slot, slot, True))
                ledger.padding_null[j] += deficit
        a = float(arrivals[j])
        if a > 0:
            ledger.chunks[j].append([slot, a, False])
            ledger.arrived[j] += a
        ledger._totals[j] = max(ledger._totals[j] - mu, 0.0) + a
    return out


def adjust_to(ledger: QueueLedger, target, slot: int) -> AdjustmentRecord:
    """Force totals to `target`: drop newest-first when above, pad with null below."""
    target = np.asarray(target, dtype=float)
    if target.shape != (ledger.r,):
        raise ValueError("target must be an r-vector")
    if (target < 0).any():
        raise ValueError("target must be non-negative")
    dropped = np.zeros(ledger.r)
    dropped_null = np.zeros(ledger.r)
    added = np.zeros(ledger.r)
    for j in range(ledger.r):
        excess = ledger._totals[j] - target[j]
        if excess > 0:
            chunks = ledger.chunks[j]
            need = excess
            while need > _DUST and chunks:
                chunk = chunks[-1]
                take = chunk[1] if chunk[1] <= need else need
                if chunk[2]:
                    dropped_null[j] += take
                    ledger.dropped_null[j] += take
                else:
                    ledger.dropped_real[j] += take
                need -= take
                chunk[1] -= take
                if chunk[1] <= _DUST:
                    chunks.pop()
            dropped[j] = excess
        elif excess < 0:
            ledger.chunks[j].append([slot, float(-excess), True])
            ledger.added_null[j] += -excess
            added[j] = -excess
        ledger._totals[j] = float(target[j])
    return AdjustmentRecord(dropped=dropped, dropped_null=dropped_null, added_null=added)


@dataclass
class DelayStats:
    mean_delay: float | None
    delivered_rate: np.ndarray
    stuck_backlog: np.ndarray
    mean_delay_per_queue: list[float | None] = field(default_factory=list)
    delivered_amount: np.ndarray | None = None


class DelayAccumulator:
    """Streaming amount-weighted delay statistics over departure records.

    Null departures are excluded from the delay average unless
    ``include_null``; delivered rates always count real departures only.
    """

    def __init__(self, r: int, include_null: bool = False):
        self.r = r
        self.include_null = include_null
        self.weighted_delay = np.zeros(r)
        self.weight = np.zeros(r)
        self.delivered = np.zeros(r)

    def add(self, rec: DepartureRecord) -> None:
        if not rec.was_null:
            self.delivered[rec.queue] += rec.amount
        if rec.was_null and not self.include_null:
            return
        self.weighted_delay[rec.queue] += rec.amount * (rec.departure_slot - rec.arrival_slot)
        self.weight[rec.queue] += rec.amount

    def add_many(self, records) -> None:
        for rec in records:
            self.add(rec)

    def finalize(self, horizon: int, remaining) -> DelayStats:
        remaining = np.asarray(remaining, dtype=float)
        total_weight = self.weight.sum()
        mean = float(self.weighted_delay.sum() / total_weight) if total_weight > 0 else None
        per_queue = [
            float(self.weighted_delay[j] / self.weight[j]) if self.weight[j] > 0 else None
            for j in range(self.r)
        ]
        return DelayStats(
            mean_delay=mean,
            delivered_rate=self.delivered / max(horizon, 1),
            stuck_backlog=remaining,
            mean_delay_per_queue=per_queue,
            delivered_amount=self.delivered.copy(),
        )


def delay_stats(departures, include_null: bool = False, *, horizon: int, r: int, remaining=None) -> DelayStats:
    """Amount-weighted delay summary of a departure stream."""
    acc = DelayAccumulator(r, include_null=include_null)
    acc.add_many(departures)
    return acc.finalize(horizon, np.zeros(r) if remaining is None else remaining)
