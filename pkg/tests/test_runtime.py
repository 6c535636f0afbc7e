import math
import random
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dd_schrodinger.errors import ExchangeTimeout, TopologyMismatch
from dd_schrodinger.runtime import (
    Exchange,
    Reduce,
    Runtime,
    Topology,
    exchange_traces,
    reduce_norm,
    run_concurrent,
    run_sequential,
    thread_cap,
)


def test_topology():
    t = Topology(3)
    assert list(t.ranks) == [1, 2, 3]
    assert t.neighbors(2) == {"l": 1, "r": 3}
    assert t.neighbors(1)["l"] is None and t.neighbors(3)["r"] is None
    assert t.edges() == [(1, 2), (2, 3)]
    with pytest.raises(TopologyMismatch):
        Topology(0)


def test_exchange_two_workers():
    a, b = np.array([1.0 + 2j]), np.array([3.0])
    inc = exchange_traces(Topology(2), {(1, "r"): a, (2, "l"): b})
    assert inc[(2, "l")] is not a
    np.testing.assert_array_equal(inc[(2, "l")], a)
    np.testing.assert_array_equal(inc[(1, "r")], b)


def test_exchange_chain_of_three():
    t = Topology(3)
    out = {(1, "r"): 1, (2, "l"): 2, (2, "r"): 3, (3, "l"): 4}
    inc = exchange_traces(t, out)
    assert inc == {(2, "l"): 1, (1, "r"): 2, (3, "l"): 3, (2, "r"): 4}


def test_exchange_payload_bitwise(rng):
    x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    inc = exchange_traces(Topology(2), {(1, "r"): x, (2, "l"): x * 0})
    assert inc[(2, "l")].tobytes() == x.tobytes()


def test_exchange_mismatch():
    with pytest.raises(TopologyMismatch):
        exchange_traces(Topology(3), {(1, "r"): 1, (2, "l"): 2})
    with pytest.raises(TopologyMismatch):
        exchange_traces(Topology(2), {(1, "r"): 1, (2, "l"): 2, (1, "l"): 3})


def test_reduce_norm():
    assert reduce_norm(Topology(3), [0, 0, 0]) == 0
    assert reduce_norm(Topology(4), [0, 9, 0, 0]) == 3
    with pytest.raises(TopologyMismatch):
        reduce_norm(Topology(2), [1.0])


def _ring_program(payloads, rounds=3, log=None):
    N = len(payloads)

    def program(j):
        x = payloads[j]
        total = 0.0
        for k in range(rounds):
            inc = yield Exchange({"l": x * (k + 1) if j > 1 else None,
                                  "r": x * (k + 2) if j < N else None})
            got = [v for v in (inc["l"], inc["r"]) if v is not None]
            x = x + sum(got)
            total = yield Reduce(float(np.vdot(x, x).real))
            if log is not None:
                log.append((j, k))
        return x, total

    return program


def _payloads(N, seed=0):
    r = np.random.default_rng(seed)
    return {j: r.standard_normal(4) + 1j * r.standard_normal(4) for j in range(1, N + 1)}


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_modes_agree_bitwise(N):
    t = Topology(N)
    prog = _ring_program(_payloads(N))
    seq = run_sequential(t, prog)
    con = run_concurrent(t, prog)
    for (xs, ts), (xc, tc) in zip(seq, con):
        assert xs.tobytes() == xc.tobytes() and ts == tc
    norms = {tot for _, tot in seq}
    assert len(norms) == 1


def test_reduce_matches_sequential_sum():
    t = Topology(3)
    vals = {1: 0.1, 2: 0.2, 3: 0.3}

    def program(j):
        total = yield Reduce(vals[j])
        return total

    out = run_concurrent(t, program)
    assert out == [math.sqrt((0.1 + 0.2) + 0.3)] * 3
    assert out == run_sequential(t, program)


def test_program_without_sync():
    def program(j):
        return j * 10
        yield  # pragma: no cover

    assert run_sequential(Topology(3), program) == [10, 20, 30]
    assert run_concurrent(Topology(3), program) == [10, 20, 30]


def test_timeout_when_peer_never_arrives():
    def program(j):
        if j == 2:
            time.sleep(0.5)
            return None
        yield Exchange({"r": 1.0})

    with pytest.raises((ExchangeTimeout, TopologyMismatch)):
        run_concurrent(Topology(2), program, timeout=0.1)


def test_sequential_detects_unbalanced_programs():
    def program(j):
        if j == 1:
            yield Exchange({"r": 1.0})
        return j

    with pytest.raises(TopologyMismatch):
        run_sequential(Topology(2), program)

    def mixed(j):
        if j == 1:
            yield Reduce(1.0)
        else:
            yield Exchange({"l": 1.0})

    with pytest.raises(TopologyMismatch):
        run_sequential(Topology(2), mixed)


def test_worker_error_propagates():
    def program(j):
        yield Exchange({"l": 1.0} if j == 2 else {"r": 1.0})
        if j == 1:
            raise ValueError("boom")
        yield Reduce(1.0)

    with pytest.raises(ValueError, match="boom"):
        run_concurrent(Topology(2), program, timeout=5)


def test_send_without_neighbour():
    def program(j):
        yield Exchange({"l": 1.0, "r": 1.0})

    with pytest.raises(TopologyMismatch):
        run_concurrent(Topology(2), program, timeout=5)
    with pytest.raises(TopologyMismatch):
        run_sequential(Topology(2), program)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("SCHRO_THREADS", "2")
    assert thread_cap() == 2
    monkeypatch.setenv("SCHRO_THREADS", "")
    assert thread_cap() is None
    monkeypatch.setenv("SCHRO_THREADS", "1")
    prog = _ring_program(_payloads(4))
    a = run_concurrent(Topology(4), prog)
    b = run_sequential(Topology(4), prog)
    assert all(x[0].tobytes() == y[0].tobytes() for x, y in zip(a, b))


def test_runtime_selector():
    prog = _ring_program(_payloads(3))
    a = Runtime("sequential").run(Topology(3), prog)
    b = Runtime("threads", max_threads=2).run(Topology(3), prog)
    assert all(x[0].tobytes() == y[0].tobytes() for x, y in zip(a, b))
    with pytest.raises(ValueError):
        Runtime("mpi")


@settings(max_examples=25, deadline=None)
@given(N=st.integers(2, 6), seed=st.integers(0, 2**31 - 1), rounds=st.integers(1, 4))
def test_no_deadlock_under_random_delays(N, seed, rounds):
    r = random.Random(seed)
    delays = {}

    def jitter(j):
        time.sleep(delays.setdefault((j, len(delays)), r.random() * 0.002))

    log = []
    prog = _ring_program(_payloads(N, seed % 1000), rounds, log)
    con = run_concurrent(Topology(N), prog, timeout=20, jitter=jitter)
    seq = run_sequential(Topology(N), _ring_program(_payloads(N, seed % 1000), rounds))
    assert len(log) == N * rounds
    for (xc, tc), (xs, ts) in zip(con, seq):
        assert xc.tobytes() == xs.tobytes() and tc == ts
