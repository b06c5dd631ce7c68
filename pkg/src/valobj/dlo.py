"""Single-writer multi-reader ledgers (get / append).

Two fabrics share one interface. ``OracleFabric`` keeps each ledger as an
in-kernel list and linearizes every call at the step that issues it.
``ReplicatedFabric`` keeps a copy of every ledger at each replica and runs a
majority-quorum protocol over simulated messages: append writes the owner's
full history to all replicas and waits for a majority; get reads from a
majority, adopts the longest history, writes it back to a majority, then
returns it.

Ledger calls are generators used with ``yield from`` inside kernel tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .core import ConfigurationError, MalformedRunError, OperationRecord, VectorTimestamp
from .kernel import Kernel

Durable = Callable[[], None]


@dataclass(frozen=True)
class LedgerRecord:
    ts: VectorTimestamp
    op: OperationRecord

    def __str__(self) -> str:
        return f"<{self.ts},{self.op}>"


def check_ledger(k: int, records: Sequence[LedgerRecord]) -> None:
    """The j-th record of ledger k carries issuer k and has seen j-1 of k's records."""
    for j, rec in enumerate(records):
        if rec.ts.issuer != k or rec.op.issuer != k:
            raise MalformedRunError(f"ledger {k} holds a record issued by {rec.ts.issuer}")
        if rec.ts.counts[k - 1] != j:
            raise MalformedRunError(f"record {j + 1} of ledger {k} has count {rec.ts.counts[k - 1]}")


@dataclass
class LedgerCall:
    """One get/append on one ledger, with logical invoke and response stamps."""

    ledger: int
    caller: int
    kind: str
    invoke: int
    response: Optional[int] = None
    value: Any = None  # appended record, or the tuple a get returned


class _Fabric:
    backend = ""

    def __init__(self, kernel: Kernel, n: int, log_calls: bool = True) -> None:
        if n < 1:
            raise ConfigurationError("need at least one ledger")
        self.kernel = kernel
        self.n = n
        self.log_calls = log_calls
        self.calls: List[LedgerCall] = []
        self._tick = 0
        kernel.register(self)

    def _stamp(self) -> int:
        self._tick += 1
        return self._tick

    def _begin(self, ledger: int, caller: int, kind: str, value: Any = None) -> Optional[LedgerCall]:
        if not 1 <= ledger <= self.n:
            raise ConfigurationError(f"no ledger {ledger}")
        if not self.log_calls:
            return None
        call = LedgerCall(ledger, caller, kind, self._stamp(), value=value)
        self.calls.append(call)
        return call

    def _end(self, call: Optional[LedgerCall], value: Any = None) -> None:
        if call is not None:
            call.response = self._stamp()
            if call.kind == "get":
                call.value = value

    def handle(self, owner: int) -> "LedgerHandle":
        return LedgerHandle(owner, self)

    def _check_owner(self, ledger: int, caller: int) -> None:
        if ledger != caller:
            raise PermissionError(f"process {caller} may not append to ledger {ledger}")


class OracleLedger:
    """One atomic ledger; only ``owner`` may append."""

    __slots__ = ("owner", "records")

    def __init__(self, owner: Any) -> None:
        self.owner = owner
        self.records: List[Any] = []

    def get(self) -> Tuple[Any, ...]:
        return tuple(self.records)

    def append(self, record: Any, caller: Any) -> None:
        if caller != self.owner:
            raise PermissionError(f"{caller} may not append to a ledger owned by {self.owner}")
        self.records.append(record)


class OracleFabric(_Fabric):
    """Atomic in-kernel ledgers."""

    backend = "oracle"

    def __init__(self, kernel: Kernel, n: int, log_calls: bool = True) -> None:
        super().__init__(kernel, n, log_calls)
        self.ledgers: Dict[int, OracleLedger] = {k: OracleLedger(k) for k in range(1, n + 1)}

    def get(self, ledger: int, caller: int):
        call = self._begin(ledger, caller, "get")
        snapshot = self.ledgers[ledger].get()
        self._end(call, snapshot)
        return snapshot
        yield  # pragma: no cover - makes this a generator

    def append(self, ledger: int, record: Any, caller: int, on_durable: Optional[Durable] = None):
        self._check_owner(ledger, caller)
        call = self._begin(ledger, caller, "append", record)
        self.ledgers[ledger].append(record, caller)
        if on_durable is not None:
            on_durable()
        self._end(call)
        return None
        yield  # pragma: no cover

    def contents(self, ledger: int) -> Tuple[Any, ...]:
        return self.ledgers[ledger].get()

    def fingerprint(self) -> tuple:
        return tuple(led.get() for led in self.ledgers.values())


class _Pending:
    __slots__ = ("kind", "ledger", "acks", "replies")

    def __init__(self, kind: str, ledger: int) -> None:
        self.kind = kind
        self.ledger = ledger
        self.acks: set = set()
        self.replies: Dict[int, tuple] = {}

    def key(self) -> tuple:
        return (
            self.kind,
            self.ledger,
            frozenset(self.acks),
            tuple(sorted(self.replies.items())),
        )


class ReplicatedFabric(_Fabric):
    """Majority-replicated ledgers tolerating ``f`` crashed replica hosts.

    Replica ``r`` runs on process ``r`` (replicas beyond the process count are
    ownerless and never crash). Each request is a message task owned by the
    replica's host; the reply lands in the caller's pending slot in the same
    step. ``#dlo`` notes record every message handled.
    """

    backend = "replicated"

    def __init__(
        self,
        kernel: Kernel,
        n: int,
        n_replicas: int = 3,
        f: int = 1,
        log_calls: bool = True,
        notes: bool = True,
    ) -> None:
        if n_replicas < 1 or f < 0 or 2 * f >= n_replicas:
            raise ConfigurationError(f"replicated ledgers need f < n_replicas/2 (n_replicas={n_replicas}, f={f})")
        super().__init__(kernel, n, log_calls)
        self.n_replicas = n_replicas
        self.f = f
        self.majority = n_replicas // 2 + 1
        self.notes = notes
        # replica -> ledger -> history
        self.replicas: Dict[int, Dict[int, tuple]] = {
            r: {k: () for k in range(1, n + 1)} for r in range(1, n_replicas + 1)
        }
        self.local: Dict[int, tuple] = {k: () for k in range(1, n + 1)}
        self.pending: Dict[int, _Pending] = {}
        self._durable: Dict[int, List[Tuple[int, Durable]]] = {k: [] for k in range(1, n + 1)}

    def host(self, replica: int) -> Optional[int]:
        return replica if replica <= self.n else None

    def _note(self, text: str) -> None:
        if self.notes:
            self.kernel.note(f"#dlo {text}")

    def _send(self, caller: int, kind: str, ledger: int, history: Optional[tuple]) -> _Pending:
        slot = _Pending(kind, ledger)
        self.pending[caller] = slot
        for r in range(1, self.n_replicas + 1):
            self.kernel.spawn(
                self._deliver(r, caller, slot, history),
                f"dlo:{kind}:{caller}:{ledger}:r{r}",
                owner=self.host(r),
                daemon=True,
            )
        return slot

    def _deliver(self, r: int, caller: int, slot: _Pending, history: Optional[tuple]):
        # runs as a single step once the scheduler picks the message
        k = slot.ledger
        if slot.kind == "READ":
            held = self.replicas[r][k]
            slot.replies[r] = held
            self._note(f"r{r} READ L{k} from p{caller} -> READ-ACK({len(held)})")
        else:
            if len(history) > len(self.replicas[r][k]):
                self.replicas[r][k] = history
                self._fire_durable(k)
            slot.acks.add(r)
            self._note(f"r{r} WRITE({len(history)}) L{k} from p{caller} -> WRITE-ACK")
        return
        yield  # pragma: no cover

    def _fire_durable(self, k: int) -> None:
        waiting = self._durable[k]
        if not waiting:
            return
        keep = []
        for index, callback in waiting:
            holders = sum(1 for rep in self.replicas.values() if len(rep[k]) >= index)
            if holders >= self.majority:
                callback()
            else:
                keep.append((index, callback))
        self._durable[k] = keep

    def get(self, ledger: int, caller: int):
        call = self._begin(ledger, caller, "get")
        slot = self._send(caller, "READ", ledger, None)
        yield lambda: len(slot.replies) >= self.majority
        best = max(slot.replies.values(), key=len)
        self.kernel.observe(best)
        slot = self._send(caller, "WRITE", ledger, best)
        yield lambda: len(slot.acks) >= self.majority
        self.pending.pop(caller, None)
        self._end(call, best)
        return best

    def append(self, ledger: int, record: Any, caller: int, on_durable: Optional[Durable] = None):
        self._check_owner(ledger, caller)
        call = self._begin(ledger, caller, "append", record)
        history = self.local[ledger] + (record,)
        self.local[ledger] = history
        if on_durable is not None:
            self._durable[ledger].append((len(history), on_durable))
        slot = self._send(caller, "WRITE", ledger, history)
        yield lambda: len(slot.acks) >= self.majority
        self.pending.pop(caller, None)
        self._end(call)

    def contents(self, ledger: int) -> Tuple[Any, ...]:
        return max((rep[ledger] for rep in self.replicas.values()), key=len)

    def fingerprint(self) -> tuple:
        # stamps stay in: states that differ only in real-time order of ledger
        # calls are not interchangeable for the linearizability check
        calls = tuple((c.ledger, c.caller, c.kind, c.invoke, c.response, c.value) for c in self.calls)
        return (
            tuple(tuple(rep.values()) for rep in self.replicas.values()),
            tuple(sorted((c, p.key()) for c, p in self.pending.items())),
            calls,
        )


@dataclass(frozen=True)
class LedgerHandle:
    """Ledger ``owner`` as seen through a fabric; only the owner appends."""

    owner: int
    fabric: Any

    @property
    def backend(self) -> str:
        return self.fabric.backend

    def get(self, caller: int):
        return self.fabric.get(self.owner, caller)

    def append(self, record: Any, caller: int, on_durable: Optional[Durable] = None):
        return self.fabric.append(self.owner, record, caller, on_durable)

    def contents(self) -> tuple:
        return self.fabric.contents(self.owner)


def replicated_backend(n_replicas: int, f: int) -> Callable[[Kernel, int], ReplicatedFabric]:
    """A fabric factory for ``n_replicas`` replicas tolerating ``f`` crashes."""
    if n_replicas < 1 or f < 0 or 2 * f >= n_replicas:
        raise ConfigurationError(f"replicated ledgers need f < n_replicas/2 (n_replicas={n_replicas}, f={f})")

    def build(kernel: Kernel, n: int) -> ReplicatedFabric:
        return ReplicatedFabric(kernel, n, n_replicas, f)

    return build


def oracle_backend() -> Callable[[Kernel, int], OracleFabric]:
    return lambda kernel, n: OracleFabric(kernel, n)


def make_backend(name: str, n_replicas: int = 3, f: int = 1) -> Callable[[Kernel, int], Any]:
    if name == "oracle":
        return oracle_backend()
    if name == "replicated":
        return replicated_backend(n_replicas, f)
    raise ConfigurationError(f"unknown ledger backend {name!r}")


# -- linearizability ----------------------------------------------------------


def check_linearizable(calls: Iterable[LedgerCall]) -> bool:
    """Brute-force search for a legal sequential order of one ledger's calls.

    Completed calls must all be placed; pending appends may be placed or not;
    pending gets are ignored. Placement respects real time: a call can go
    next only if no unplaced completed call responded before it was invoked.
    """
    calls = [c for c in calls if c.response is not None or c.kind == "append"]
    if not calls:
        return True
    done_mask = 0
    for n, c in enumerate(calls):
        if c.response is not None:
            done_mask |= 1 << n
    failed: set = set()

    def search(placed: int, state: tuple) -> bool:
        if placed & done_mask == done_mask:
            return True
        # single writer: the placed set determines the ledger state
        if placed in failed:
            return False
        # earliest response among unplaced completed calls bounds what may go next
        horizon = min(
            calls[n].response for n in range(len(calls)) if not placed >> n & 1 and calls[n].response is not None
        )
        for n, c in enumerate(calls):
            if placed >> n & 1 or c.invoke > horizon:
                continue
            if c.kind == "append":
                nxt = state + (c.value,)
            elif tuple(c.value) == state:
                nxt = state
            else:
                continue
            if search(placed | 1 << n, nxt):
                return True
        failed.add(placed)
        return False

    return search(0, ())


def check_fabric(fabric: _Fabric) -> Dict[int, bool]:
    """Per-ledger linearizability verdicts for every logged call."""
    by_ledger: Dict[int, List[LedgerCall]] = {k: [] for k in range(1, fabric.n + 1)}
    for c in fabric.calls:
        by_ledger[c.ledger].append(c)
    return {k: check_linearizable(cs) for k, cs in by_ledger.items()}
