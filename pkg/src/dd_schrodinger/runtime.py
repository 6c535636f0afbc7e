"""Worker-per-subdomain execution with neighbour exchange and ordered reductions.

A worker program is a generator function ``program(rank)``.  It runs local
work and synchronises by yielding requests:

* ``incoming = yield Exchange({"l": payload, "r": payload})`` swaps traces
  with the chain neighbours; ``incoming["l"]`` is what the left neighbour
  sent to the right, and so on.
* ``total = yield Reduce(local_sq)`` returns ``sqrt`` of the sum of all
  contributions, added in rank order.

The generator's return value is the worker's result.  The sequential
executor steps all workers round-robin in the calling thread; the threaded
executor gives each worker its own thread.  Because payloads are copied and
reductions are summed in rank order, both produce bitwise identical results.
"""
from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Hashable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ExchangeTimeout, TopologyMismatch

__all__ = [
    "Topology",
    "ExchangeMsg",
    "Exchange",
    "Reduce",
    "Runtime",
    "exchange_traces",
    "reduce_norm",
    "run_sequential",
    "run_concurrent",
    "thread_cap",
]


@dataclass(frozen=True)
class Topology:
    """``N`` workers in a chain, ranks ``1..N``."""

    N: int

    def __post_init__(self):
        if self.N < 1:
            raise TopologyMismatch("a topology needs at least one worker")

    @property
    def ranks(self) -> range:
        return range(1, self.N + 1)

    def neighbors(self, j: int) -> Dict[str, Optional[int]]:
        return {"l": j - 1 if j > 1 else None, "r": j + 1 if j < self.N else None}

    def edges(self):
        return [(j, j + 1) for j in range(1, self.N)]


@dataclass(frozen=True)
class ExchangeMsg:
    sender: int
    receiver: int
    tag: Tuple[Hashable, ...]
    payload: object


@dataclass(frozen=True)
class Exchange:
    outgoing: Mapping[str, object]


@dataclass(frozen=True)
class Reduce:
    value: float


def _copy(payload):
    if payload is None:
        return None
    if isinstance(payload, np.ndarray):
        return payload.copy()
    return payload


def exchange_traces(topology: Topology, outgoing: Mapping[Tuple[int, str], object]):
    """Neighbour swap.  ``outgoing[(j, "r")]`` is delivered as ``incoming[(j + 1, "l")]``."""
    expected = set()
    for j, k in topology.edges():
        expected.add((j, "r"))
        expected.add((k, "l"))
    got = {key for key, val in outgoing.items() if val is not None}
    if got != expected:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise TopologyMismatch(f"exchange mismatch: missing {missing}, unexpected {extra}")
    incoming = {}
    for j, k in topology.edges():
        incoming[(k, "l")] = _copy(outgoing[(j, "r")])
        incoming[(j, "r")] = _copy(outgoing[(k, "l")])
    return incoming


def reduce_norm(topology: Topology, local_sq: Sequence[float]) -> float:
    """``sqrt(sum(local_sq))`` summed in worker order."""
    if len(local_sq) != topology.N:
        raise TopologyMismatch(f"expected {topology.N} contributions, got {len(local_sq)}")
    total = 0.0
    for v in local_sq:
        total += float(v)
    return math.sqrt(total)


def _start(program, j):
    gen = program(j)
    if not hasattr(gen, "send"):
        return None, ("done", gen)
    try:
        return gen, ("req", gen.send(None))
    except StopIteration as stop:
        return gen, ("done", stop.value)


def run_sequential(topology: Topology, program: Callable):
    """Run all workers round-robin in the current thread; returns results by rank."""
    gens = {}
    status = {}
    for j in topology.ranks:
        gens[j], status[j] = _start(program, j)
    superstep = 0
    while any(kind == "req" for kind, _ in status.values()):
        active = [j for j in topology.ranks if status[j][0] == "req"]
        if len(active) != topology.N:
            raise TopologyMismatch(f"workers {active} wait at superstep {superstep} but others finished")
        reqs = {j: status[j][1] for j in active}
        kinds = {type(r) for r in reqs.values()}
        if len(kinds) != 1:
            raise TopologyMismatch(f"mixed synchronisation requests at superstep {superstep}")
        kind = kinds.pop()
        if kind is Exchange:
            out = {}
            for j, r in reqs.items():
                for side, payload in r.outgoing.items():
                    out[(j, side)] = payload
            inc = exchange_traces(topology, out)
            replies = {j: {"l": inc.get((j, "l")), "r": inc.get((j, "r"))} for j in active}
        elif kind is Reduce:
            total = reduce_norm(topology, [reqs[j].value for j in topology.ranks])
            replies = {j: total for j in active}
        else:
            raise TopologyMismatch(f"unknown request {kind.__name__}")
        for j in active:
            try:
                status[j] = ("req", gens[j].send(replies[j]))
            except StopIteration as stop:
                status[j] = ("done", stop.value)
        superstep += 1
    return [status[j][1] for j in topology.ranks]


def thread_cap() -> Optional[int]:
    value = os.environ.get("SCHRO_THREADS")
    if not value:
        return None
    cap = int(value)
    return cap if cap > 0 else None


class _Board:
    """Mailboxes and reduction slots shared by the worker threads."""

    def __init__(self, topology, timeout):
        self.topology = topology
        self.timeout = timeout
        self.cond = threading.Condition()
        self.mail: Dict[tuple, object] = {}
        self.slots: Dict[tuple, float] = {}
        self.failed: Optional[BaseException] = None

    def _wait(self, pred, what):
        ok = self.cond.wait_for(lambda: pred() or self.failed is not None, timeout=self.timeout)
        if self.failed is not None:
            raise TopologyMismatch(f"peer worker failed: {self.failed!r}")
        if not ok:
            raise ExchangeTimeout(f"timed out waiting for {what}")

    def exchange(self, j, step, outgoing):
        nb = self.topology.neighbors(j)
        with self.cond:
            for side, payload in outgoing.items():
                if payload is None:
                    continue
                dest = nb.get(side)
                if dest is None:
                    raise TopologyMismatch(f"worker {j} sent on side {side!r} without a neighbour")
                arrive = "r" if side == "l" else "l"
                key = (dest, arrive, step)
                if key in self.mail:
                    raise TopologyMismatch(f"duplicate message for {key}")
                self.mail[key] = ExchangeMsg(j, dest, (step, side), _copy(payload))
            self.cond.notify_all()
            want = [(j, s, step) for s in ("l", "r") if nb[s] is not None]
            self._wait(lambda: all(k in self.mail for k in want), f"traces at superstep {step}")
            return {s: (self.mail.pop((j, s, step)).payload if nb[s] is not None else None)
                    for s in ("l", "r")}

    def reduce(self, j, step, value):
        with self.cond:
            self.slots[(j, step)] = float(value)
            self.cond.notify_all()
            ranks = list(self.topology.ranks)
            self._wait(lambda: all((r, step) in self.slots for r in ranks), f"reduction {step}")
            total = reduce_norm(self.topology, [self.slots[(r, step)] for r in ranks])
            self.slots[(j, step, "seen")] = 1.0
            if all((r, step, "seen") in self.slots for r in ranks):
                for r in ranks:
                    self.slots.pop((r, step), None)
                    self.slots.pop((r, step, "seen"), None)
            return total

    def fail(self, exc):
        with self.cond:
            if self.failed is None:
                self.failed = exc
            self.cond.notify_all()


def run_concurrent(topology: Topology, program: Callable, timeout: Optional[float] = 600.0,
                   max_threads: Optional[int] = None, jitter: Optional[Callable[[int], None]] = None):
    """Run each worker in its own thread.

    ``max_threads`` (default ``SCHRO_THREADS``) caps how many workers compute at
    once; waiting at a synchronisation point releases the slot.  ``jitter`` is
    called with the rank before each local compute phase (used to inject
    scheduling delays in tests).
    """
    board = _Board(topology, timeout)
    cap = max_threads if max_threads is not None else thread_cap()
    gate = threading.Semaphore(cap) if cap else None
    results: Dict[int, object] = {}
    errors: Dict[int, BaseException] = {}

    def worker(j):
        try:
            if gate:
                gate.acquire()
            try:
                if jitter:
                    jitter(j)
                gen, status = _start(program, j)
            finally:
                if gate:
                    gate.release()
            step = 0
            while status[0] == "req":
                req = status[1]
                if isinstance(req, Exchange):
                    reply = board.exchange(j, step, req.outgoing)
                elif isinstance(req, Reduce):
                    reply = board.reduce(j, step, req.value)
                else:
                    raise TopologyMismatch(f"unknown request {type(req).__name__}")
                step += 1
                if gate:
                    gate.acquire()
                try:
                    if jitter:
                        jitter(j)
                    try:
                        status = ("req", gen.send(reply))
                    except StopIteration as stop:
                        status = ("done", stop.value)
                finally:
                    if gate:
                        gate.release()
            results[j] = status[1]
        except BaseException as exc:  # propagate to the caller and wake peers
            errors[j] = exc
            board.fail(exc)

    threads = [threading.Thread(target=worker, args=(j,), name=f"dd-worker-{j}", daemon=True)
               for j in topology.ranks]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        first = min(errors)
        primary = [e for e in errors.values() if not isinstance(e, TopologyMismatch)]
        raise primary[0] if primary else errors[first]
    return [results[j] for j in topology.ranks]


class Runtime:
    """Executor selector: ``mode`` is ``"sequential"`` or ``"threads"``."""

    def __init__(self, mode: str = "sequential", timeout: Optional[float] = 600.0,
                 max_threads: Optional[int] = None):
        if mode not in ("sequential", "threads"):
            raise ValueError(f"unknown runtime mode {mode!r}")
        self.mode = mode
        self.timeout = timeout
        self.max_threads = max_threads

    def run(self, topology: Topology, program: Callable):
        if self.mode == "sequential" or topology.N == 1:
            return run_sequential(topology, program)
        return run_concurrent(topology, program, timeout=self.timeout, max_threads=self.max_threads)
