"""Message and flit model for compressionless wormhole switching.

The cycle-level router datapath lives in :mod:`dbrsim.kernel`; this module
holds the value types and the pure rules it applies (padding length, flit
layout, delivery timestamp at the sink).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class FlitKind(str, Enum):
    HEADER = "header"
    BODY = "body"


@dataclass(frozen=True)
class MessageId:
    src: int
    seq: int
    retry: int = 0


@dataclass(frozen=True)
class Flit:
    message_id: MessageId
    kind: FlitKind
    index: int
    pad_signal: bool = False
    payload_width: int = 128


@dataclass
class Message:
    src: int
    dst: int
    size_data: int = 16
    created_at: int = 0
    retry_count: int = 0
    epoch: str = "old"

    def __post_init__(self):
        if self.size_data < 1:
            raise ValueError("size_data must be >= 1")
        if self.retry_count < 0:
            raise ValueError("retry_count must be >= 0")

    def transmitted_length(self, fpath: int) -> int:
        return max(self.size_data, fpath)


def compute_fpath(buffer_depth: int, distance: int) -> int:
    """Minimum injected flits guaranteeing the header reached the destination."""
    if buffer_depth < 1 or distance < 0:
        raise ValueError("buffer_depth >= 1 and distance >= 0 required")
    return buffer_depth * distance


def pad_message(m: Message, fpath: int, seq: int = 0, payload_width: int = 128) -> list[Flit]:
    """Header, ``size_data - 1`` data flits, then pad flits up to ``fpath``."""
    mid = MessageId(m.src, seq, m.retry_count)
    total = m.transmitted_length(fpath)
    flits = [Flit(mid, FlitKind.HEADER, 0, False, payload_width)]
    for i in range(1, total):
        flits.append(Flit(mid, FlitKind.BODY, i, i >= m.size_data, payload_width))
    return flits


def delivery_index(size_data: int, total: int) -> int:
    """Index of the flit whose arrival timestamps delivery.

    With padding it is the first pad flit (rising edge of the pad signal),
    otherwise the last data flit.
    """
    return size_data if total > size_data else size_data - 1


class SinkTracker:
    """Reference sink: consumes flits of one destination and reports deliveries.

    Flits of attempts marked torn down are discarded; a logical message
    (src, seq) is counted at most once.
    """

    def __init__(self):
        self.delivered: dict[tuple[int, int], int] = {}
        self.torn_down: set[MessageId] = set()
        self.discarded = 0
        self.pads_dropped = 0

    def tear_down(self, mid: MessageId) -> None:
        self.torn_down.add(mid)

    def receive(self, flit: Flit, size_data: int, total: int, now: int) -> bool:
        mid = flit.message_id
        if mid in self.torn_down:
            self.discarded += 1
            return False
        if flit.pad_signal:
            self.pads_dropped += 1
        key = (mid.src, mid.seq)
        if flit.index == delivery_index(size_data, total) and key not in self.delivered:
            self.delivered[key] = now
            return True
        return False
