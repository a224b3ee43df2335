"""Sender-side deadlock detection and recovery.

Each source keeps a flit counter ``F`` and a blocking counter ``C`` for the
message it is injecting. ``C`` grows in every cycle an injection attempt
fails and resets on progress. When ``C > T`` before ``F`` reached
``F_path`` the attempt is declared deadlocked, a release signal tears the
reserved path down and the message is retried after a random back-off.

The kernel implements the same rules inline; these objects are the
reference model used by tests and by anyone stepping a single sender.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .rng import STREAM_BACKOFF, randint


class SenderStatus(str, Enum):
    IDLE = "idle"
    INJECTING = "injecting"
    BLOCKED = "blocked"
    DEADLOCKED = "deadlocked"
    RELEASING = "releasing"
    BACKING_OFF = "backing_off"


@dataclass
class DbrParams:
    timeout: int = 64
    backoff_min: int = 16
    backoff_max: int = 128
    retry_cap: int = 50

    def validate(self) -> list[str]:
        errs = []
        if self.timeout < 1:
            errs.append("dbr.timeout must be >= 1")
        if not 0 <= self.backoff_min <= self.backoff_max:
            errs.append("dbr.backoff_min must be in [0, backoff_max]")
        if self.retry_cap < 0:
            errs.append("dbr.retry_cap must be >= 0")
        return errs


@dataclass
class SenderState:
    timeout: int
    fpath: int
    total: int
    F: int = 0
    C: int = 0
    status: SenderStatus = SenderStatus.INJECTING
    backoff_until: int = 0

    def start_attempt(self, fpath: int, total: int) -> None:
        self.F = 0
        self.C = 0
        self.fpath = fpath
        self.total = total
        self.status = SenderStatus.INJECTING


def sender_step(s: SenderState, injected: bool, now: int) -> SenderState:
    """Advance the counters by one cycle given whether a flit left the source."""
    if s.status not in (SenderStatus.INJECTING, SenderStatus.BLOCKED):
        raise ValueError(f"sender_step on status {s.status}")
    if injected:
        s.F += 1
        s.C = 0
        if s.F >= s.total:
            s.status = SenderStatus.IDLE
        else:
            s.status = SenderStatus.INJECTING
        return s
    s.C += 1
    s.status = SenderStatus.BLOCKED
    if s.C > s.timeout and s.F < s.fpath:
        s.status = SenderStatus.DEADLOCKED
    return s


@dataclass(frozen=True)
class ReleaseSignal:
    message_id: object
    issued_at: int


def release_path(message_id, path: list, issued_at: int) -> list[tuple[int, object]]:
    """Teardown schedule: ``(cycle, channel)`` freeing one hop per cycle from the source."""
    return [(issued_at + i, ch) for i, ch in enumerate(path)]


class Undeliverable(Exception):
    pass


def backoff_draw(seed: int, node: int, draw: int, lo: int, hi: int) -> int:
    return int(randint(seed, node, draw, STREAM_BACKOFF, lo, hi))


def schedule_retry(
    retry_count: int, params: DbrParams, seed: int, node: int, draw: int, now: int
) -> tuple[int, int]:
    """Return ``(backoff_until, new_retry_count)``; raises Undeliverable past the cap."""
    new_count = retry_count + 1
    if new_count > params.retry_cap:
        raise Undeliverable(f"retry cap {params.retry_cap} exceeded")
    return now + backoff_draw(seed, node, draw, params.backoff_min, params.backoff_max), new_count


@dataclass
class NetworkSnapshot:
    now: int
    last_move_cycle: int
    undelivered: int


def detect_global_stall(snap: NetworkSnapshot, window: int) -> bool:
    """Watchdog oracle: nothing moved for ``window`` cycles while work is pending."""
    return snap.undelivered > 0 and snap.now - snap.last_move_cycle >= window
