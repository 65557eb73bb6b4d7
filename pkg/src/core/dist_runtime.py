"""
In-process rank runtime with an MPI-like communication contract.

Each rank is one worker thread. Point-to-point messages travel through FIFO
mailboxes keyed by (source, dest, tag); sends complete immediately and
receives block. Collectives are built on point-to-point messages and reduce
in rank-ascending order, so results are bitwise reproducible for a fixed rank
count.
"""
import logging
import os
import queue
import threading
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from .errors import ContractViolation, DeadlockError, RankAborted

logger = logging.getLogger(__name__)

_POLL = 0.02
_COLL_TAG = "__coll__"


def default_timeout() -> float:
    """Deadlock timeout in seconds, from MATCHAMG_DEADLOCK_TIMEOUT (default 30)."""
    return float(os.getenv("MATCHAMG_DEADLOCK_TIMEOUT", "30"))


@dataclass(frozen=True)
class Partition:
    """Consecutive row blocks assigned in rank order: rank r owns [starts[r], starts[r+1])."""
    starts: np.ndarray

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.int64)
        object.__setattr__(self, "starts", starts)
        if len(starts) < 2 or starts[0] != 0 or np.any(np.diff(starts) < 0):
            raise ContractViolation(f"invalid partition offsets {starts.tolist()}")

    @classmethod
    def uniform(cls, global_n: int, nranks: int) -> "Partition":
        counts = [(global_n // nranks) + (1 if r < global_n % nranks else 0) for r in range(nranks)]
        return cls.from_counts(counts)

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "Partition":
        return cls(np.concatenate([[0], np.cumsum(np.asarray(counts, dtype=np.int64))]))

    @property
    def global_n(self) -> int:
        return int(self.starts[-1])

    @property
    def nranks(self) -> int:
        return len(self.starts) - 1

    def extent(self, rank: int) -> int:
        return int(self.starts[rank + 1] - self.starts[rank])

    def range(self, rank: int) -> tuple:
        """Half-open owned interval [start, stop)."""
        return int(self.starts[rank]), int(self.starts[rank + 1])

    def owner(self, index):
        """Owning rank of one or many global indices."""
        return np.searchsorted(self.starts, index, side="right") - 1

    def __eq__(self, other) -> bool:
        return isinstance(other, Partition) and np.array_equal(self.starts, other.starts)

    def __hash__(self) -> int:
        return hash(self.starts.tobytes())


def payload_bytes(payload: Any) -> int:
    if isinstance(payload, np.ndarray):
        return int(payload.nbytes)
    if isinstance(payload, (tuple, list)):
        return sum(payload_bytes(p) for p in payload)
    if payload is None:
        return 0
    return 8


def _detach(payload: Any) -> Any:
    if isinstance(payload, np.ndarray):
        return payload.copy()
    if isinstance(payload, tuple):
        return tuple(_detach(p) for p in payload)
    if isinstance(payload, list):
        return [_detach(p) for p in payload]
    return payload


@dataclass
class CommStats:
    """Per-rank counters: messages/bytes sent per phase, collectives by kind, phase wall times."""
    messages: Dict[str, int] = field(default_factory=lambda: defaultdict(int))
    bytes: Dict[str, int] = field(default_factory=lambda: defaultdict(int))
    collectives: Dict[str, int] = field(default_factory=lambda: defaultdict(int))
    phase_seconds: Dict[str, float] = field(default_factory=lambda: defaultdict(float))

    @property
    def total_messages(self) -> int:
        return sum(self.messages.values())

    @property
    def total_bytes(self) -> int:
        return sum(self.bytes.values())

    def snapshot(self) -> "CommStats":
        return CommStats(defaultdict(int, self.messages), defaultdict(int, self.bytes),
                         defaultdict(int, self.collectives), defaultdict(float, self.phase_seconds))

    def since(self, earlier: "CommStats") -> "CommStats":
        """Counters accumulated after `earlier` was taken."""
        diff = CommStats()
        for name in ("messages", "bytes", "collectives", "phase_seconds"):
            now, before = getattr(self, name), getattr(earlier, name)
            target = getattr(diff, name)
            for key, value in now.items():
                delta = value - before.get(key, 0)
                if delta:
                    target[key] = delta
        return diff


class Request:
    """Handle of a non-blocking send; the mailbox already holds the payload."""

    def wait(self) -> None:
        return None


class _World:
    def __init__(self, nranks: int, timeout: float):
        self.nranks = nranks
        self.timeout = timeout
        self.mailboxes: Dict[tuple, queue.Queue] = defaultdict(queue.Queue)
        self.lock = threading.Lock()
        self.blocked: Dict[int, str] = {}
        self.abort = threading.Event()

    def mailbox(self, source: int, dest: int, tag: Any) -> queue.Queue:
        with self.lock:
            return self.mailboxes[(source, dest, tag)]


class RankCtx:
    """The only handle algorithm code uses to talk to other ranks."""

    def __init__(self, world: _World, rank: int):
        self._world = world
        self.rank = rank
        self.nranks = world.nranks
        self.stats = CommStats()
        self._phases: List[str] = []
        self._coll_seq = 0

    # --- instrumentation ------------------------------------------------------

    @property
    def current_phase(self) -> str:
        return self._phases[-1] if self._phases else "other"

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        """Attribute messages and wall time inside the block to `name`."""
        self._phases.append(name)
        start = time.perf_counter()
        try:
            yield
        finally:
            self.stats.phase_seconds[name] += time.perf_counter() - start
            self._phases.pop()

    # --- point to point -------------------------------------------------------

    def isend(self, dest: int, payload: Any, tag: Any = 0) -> Request:
        if not 0 <= dest < self.nranks:
            raise ContractViolation(f"rank {self.rank} sends to invalid rank {dest}")
        phase = self.current_phase
        self.stats.messages[phase] += 1
        self.stats.bytes[phase] += payload_bytes(payload)
        self._world.mailbox(self.rank, dest, tag).put(_detach(payload))
        return Request()

    def recv(self, source: int, tag: Any = 0) -> Any:
        world = self._world
        box = world.mailbox(source, self.rank, tag)
        try:
            return box.get_nowait()
        except queue.Empty:
            pass
        with world.lock:
            world.blocked[self.rank] = f"recv from {source} tag {tag!r}"
        deadline = time.monotonic() + world.timeout
        try:
            while True:
                if world.abort.is_set():
                    raise RankAborted(f"rank {self.rank} aborted while waiting on rank {source}")
                try:
                    return box.get(timeout=_POLL)
                except queue.Empty:
                    pass
                if time.monotonic() >= deadline:
                    with world.lock:
                        blocked = dict(world.blocked)
                    raise DeadlockError(blocked.keys(), world.timeout,
                                        "; ".join(f"rank {r}: {d}" for r, d in sorted(blocked.items())))
        finally:
            with world.lock:
                world.blocked.pop(self.rank, None)

    # --- collectives ----------------------------------------------------------

    def _next_coll_tag(self, kind: str) -> tuple:
        self._coll_seq += 1
        self.stats.collectives[kind] += 1
        return (_COLL_TAG, kind, self._coll_seq)

    def allgather(self, local: Any) -> List[Any]:
        """Every rank receives the list of all contributions ordered by rank."""
        tag = self._next_coll_tag("allgather")
        return self._gather_all(local, tag)

    def _gather_all(self, local: Any, tag: tuple) -> List[Any]:
        for dest in range(self.nranks):
            if dest != self.rank:
                self.isend(dest, local, tag)
        return [local if src == self.rank else self.recv(src, tag) for src in range(self.nranks)]

    def alltoallv(self, send_chunks: Sequence[Any]) -> List[Any]:
        """Chunk r of this rank arrives as chunk `self.rank` at rank r."""
        if len(send_chunks) != self.nranks:
            raise ContractViolation(f"alltoallv needs {self.nranks} chunks, got {len(send_chunks)}")
        tag = self._next_coll_tag("alltoallv")
        for dest, chunk in enumerate(send_chunks):
            if dest != self.rank:
                self.isend(dest, chunk, tag)
        return [_detach(send_chunks[src]) if src == self.rank else self.recv(src, tag)
                for src in range(self.nranks)]

    def allreduce_sum(self, x):
        """Sum over ranks in rank-ascending order; scalars or equal-shape arrays."""
        tag = self._next_coll_tag("allreduce")
        parts = self._gather_all(x, tag)
        total = parts[0]
        for part in parts[1:]:
            total = total + part
        return total

    def barrier(self) -> None:
        tag = self._next_coll_tag("barrier")
        self._gather_all(None, tag)

    def p2p_exchange(self, sends: Dict[int, Any], sources: Sequence[int], tag: Any) -> Dict[int, Any]:
        """Post all sends, then complete the receives from `sources`."""
        for dest, payload in sends.items():
            self.isend(dest, payload, tag)
        return {src: self.recv(src, tag) for src in sources}


def spawn_ranks(nranks: int, program: Callable[..., Any], *args,
                timeout: Optional[float] = None, **kwargs) -> List[Any]:
    """
    Run `program(ctx, *args, **kwargs)` on `nranks` workers and return per-rank results.

    The first failure is re-raised after every worker has stopped; surviving
    ranks are unblocked with RankAborted.
    """
    if nranks < 1:
        raise ContractViolation(f"rank count must be >= 1, got {nranks}")
    world = _World(nranks, default_timeout() if timeout is None else timeout)
    results: List[Any] = [None] * nranks
    failures: List[tuple] = []
    fail_lock = threading.Lock()

    def worker(rank: int) -> None:
        ctx = RankCtx(world, rank)
        try:
            results[rank] = program(ctx, *args, **kwargs)
        except BaseException as exc:
            with fail_lock:
                failures.append((time.monotonic(), rank, exc))
            world.abort.set()

    if nranks == 1:
        worker(0)
    else:
        threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}", daemon=True)
                   for r in range(nranks)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    if failures:
        primary = [f for f in failures if not isinstance(f[2], RankAborted)] or failures
        _, rank, exc = min(primary, key=lambda f: f[0])
        logger.error("rank %d failed: %s", rank, exc)
        raise exc
    return results
