import numpy as np
import pytest

from dbrsim.dbr import (
    DbrParams,
    NetworkSnapshot,
    SenderState,
    SenderStatus,
    Undeliverable,
    backoff_draw,
    detect_global_stall,
    release_path,
    schedule_retry,
    sender_step,
)


def blocked(s, n):
    for t in range(n):
        sender_step(s, False, t)
    return s


def test_deadlock_needs_strictly_more_than_T():
    s = blocked(SenderState(timeout=64, fpath=20, total=20), 64)
    assert s.C == 64 and s.status is SenderStatus.BLOCKED
    sender_step(s, False, 64)
    assert s.status is SenderStatus.DEADLOCKED


def test_progress_resets_blocking_counter():
    s = blocked(SenderState(timeout=64, fpath=20, total=20), 60)
    sender_step(s, True, 60)
    assert (s.C, s.F, s.status) == (0, 1, SenderStatus.INJECTING)


def test_no_deadlock_once_fpath_reached():
    s = SenderState(timeout=4, fpath=3, total=10)
    for t in range(3):
        sender_step(s, True, t)
    blocked(s, 100)
    assert s.status is SenderStatus.BLOCKED


def test_idle_after_last_flit_and_step_rejects_idle():
    s = SenderState(timeout=4, fpath=0, total=2)
    sender_step(s, True, 0)
    sender_step(s, True, 1)
    assert s.status is SenderStatus.IDLE
    with pytest.raises(ValueError):
        sender_step(s, True, 2)


def test_start_attempt_resets_counters():
    s = blocked(SenderState(timeout=64, fpath=20, total=20), 10)
    s.start_attempt(24, 24)
    assert (s.F, s.C, s.fpath, s.status) == (0, 0, 24, SenderStatus.INJECTING)


def test_release_one_hop_per_cycle():
    sched = release_path("m", ["a", "b", "c", "d", "e"], 100)
    assert sched == [(100, "a"), (101, "b"), (102, "c"), (103, "d"), (104, "e")]
    assert release_path("m", ["a"], 7) == [(7, "a")]


def test_backoff_in_range_and_deterministic():
    p = DbrParams()
    draws = [backoff_draw(5, 3, i, p.backoff_min, p.backoff_max) for i in range(2000)]
    assert min(draws) >= 16 and max(draws) <= 128
    assert draws == [backoff_draw(5, 3, i, 16, 128) for i in range(2000)]
    # all 113 values show up
    assert len(set(draws)) == 113


def test_backoff_collisions_are_rare():
    # two senders deadlocked together pick the same back-off with probability 1/113
    same = sum(backoff_draw(1, 0, i, 16, 128) == backoff_draw(1, 1, i, 16, 128) for i in range(1000))
    assert same < 25


def test_retry_cap():
    p = DbrParams(retry_cap=50)
    until, n = schedule_retry(49, p, 0, 1, 0, now=1000)
    assert n == 50 and 1016 <= until <= 1128
    with pytest.raises(Undeliverable):
        schedule_retry(50, p, 0, 1, 0, now=1000)


def test_params_validation():
    assert DbrParams().validate() == []
    assert len(DbrParams(timeout=0, backoff_min=9, backoff_max=3, retry_cap=-1).validate()) == 3


def test_stall_oracle():
    assert not detect_global_stall(NetworkSnapshot(5000, 0, 0), 1000)
    assert detect_global_stall(NetworkSnapshot(5000, 4000, 3), 1000)
    assert not detect_global_stall(NetworkSnapshot(5000, 4001, 3), 1000)
