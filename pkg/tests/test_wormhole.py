import pytest
from hypothesis import given
from hypothesis import strategies as st

from dbrsim.wormhole import (
    FlitKind,
    Message,
    MessageId,
    SinkTracker,
    compute_fpath,
    delivery_index,
    pad_message,
)


@pytest.mark.parametrize("depth,dist,want", [(4, 5, 20), (4, 0, 0), (1, 7, 7)])
def test_fpath_is_depth_times_distance(depth, dist, want):
    assert compute_fpath(depth, dist) == want


@pytest.mark.parametrize("depth,dist", [(0, 3), (4, -1)])
def test_fpath_rejects_bad_input(depth, dist):
    with pytest.raises(ValueError):
        compute_fpath(depth, dist)


@pytest.mark.parametrize("size,fpath,total,pads", [(16, 8, 16, 0), (16, 28, 28, 12), (1, 6, 6, 5)])
def test_padding_length(size, fpath, total, pads):
    flits = pad_message(Message(0, 1, size), fpath)
    assert len(flits) == total
    assert sum(f.pad_signal for f in flits) == pads


def test_message_rejects_empty_and_negative_retry():
    with pytest.raises(ValueError):
        Message(0, 1, 0)
    with pytest.raises(ValueError):
        Message(0, 1, 4, retry_count=-1)


@given(size=st.integers(1, 40), fpath=st.integers(0, 80))
def test_pad_signal_single_rising_edge(size, fpath):
    flits = pad_message(Message(2, 5, size), fpath)
    assert flits[0].kind is FlitKind.HEADER and not flits[0].pad_signal
    bits = [f.pad_signal for f in flits]
    # all data flits first, then all pads
    assert bits == sorted(bits)
    assert bits.count(False) == size
    assert [f.index for f in flits] == list(range(len(flits)))


def test_delivery_at_first_pad_or_last_data():
    assert delivery_index(4, 12) == 4
    assert delivery_index(16, 16) == 15


def test_sink_counts_once_and_discards_torn_down():
    sink = SinkTracker()
    m = Message(0, 3, 4)
    flits = pad_message(m, 12, seq=7)
    got = [sink.receive(f, 4, 12, now=i) for i, f in enumerate(flits)]
    assert got.count(True) == 1 and got.index(True) == 4
    assert sink.pads_dropped == 8
    # a second attempt of the same logical message does not count again
    again = pad_message(Message(0, 3, 4, retry_count=1), 12, seq=7)
    assert not any(sink.receive(f, 4, 12, now=50) for f in again)
    dead = MessageId(1, 1, 0)
    sink.tear_down(dead)
    assert not sink.receive(pad_message(Message(1, 3, 2), 0, seq=1)[1], 2, 2, now=60)
    assert sink.discarded == 1
