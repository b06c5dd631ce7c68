"""Domain types shared by every module.

Operations, vector timestamps, ordered operation sets, the pluggable
``valid``/``execute`` pair, histories, and the centralized ``apply``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional, Sequence, Tuple, Union

Uid = Tuple[int, int]


class ConfigurationError(ValueError):
    """Inconsistent system parameters (sizes, fault bounds, vector lengths)."""


class MalformedRunError(ValueError):
    """A run or trace violates a structural invariant."""


class IncompleteMapError(KeyError):
    """COMPLETE policy was asked to finish an operation without a result."""


def format_uid(uid: Uid) -> str:
    return f"{uid[0]}.{uid[1]}"


def parse_uid(text: str) -> Uid:
    issuer, _, seq = text.partition(".")
    return int(issuer), int(seq)


@dataclass(frozen=True)
class OperationRecord:
    """An application operation ``kind(args...)`` issued by ``issuer``.

    ``seq`` is the per-issuer sequence number; ``(issuer, seq)`` is the uid.
    Equality and hashing are structural over all four fields.
    """

    kind: str
    args: Tuple[Any, ...] = ()
    issuer: int = 1
    seq: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))

    @property
    def uid(self) -> Uid:
        return (self.issuer, self.seq)

    def shape(self) -> tuple:
        """Operation identity ignoring its sequence number."""
        return (self.kind, self.args, self.issuer)

    def __str__(self) -> str:
        from .traceio import format_op

        return format_op(self)


@dataclass(frozen=True)
class VectorTimestamp:
    issuer: int
    counts: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.counts, tuple):
            object.__setattr__(self, "counts", tuple(self.counts))
        if not 1 <= self.issuer <= len(self.counts):
            raise ConfigurationError(f"issuer {self.issuer} outside 1..{len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise ConfigurationError(f"negative ledger count in {self.counts}")

    def __str__(self) -> str:
        return f"({self.issuer},[{','.join(map(str, self.counts))}])"


def ts_precedes(a: VectorTimestamp, b: VectorTimestamp) -> bool:
    """True iff ``b`` saw strictly more records of ``a``'s issuer than ``a`` did."""
    if len(a.counts) != len(b.counts):
        raise ConfigurationError(
            f"timestamp lengths differ: {len(a.counts)} vs {len(b.counts)}"
        )
    k = a.issuer - 1
    return b.counts[k] > a.counts[k]


def transitive_closure(pairs: Iterable[Tuple[Uid, Uid]]) -> frozenset:
    succ: dict = {}
    for a, b in pairs:
        succ.setdefault(a, set()).add(b)
    closed = set()
    for start in list(succ):
        seen = set()
        stack = list(succ[start])
        while stack:
            x = stack.pop()
            if x in seen:
                continue
            seen.add(x)
            stack.extend(succ.get(x, ()))
        closed.update((start, x) for x in seen)
    return frozenset(closed)


class OrderedOps:
    """A set of operations with a strict order: the ``<P, <>`` argument.

    Total orders are kept as a plain sequence; partial orders keep their
    transitively closed relation over uids.
    """

    __slots__ = ("_ops", "_pos", "_order", "_total")

    def __init__(
        self,
        ops: Iterable[OperationRecord] = (),
        order: Iterable[Tuple[Uid, Uid]] = (),
        *,
        total: bool = False,
        closed: bool = False,
    ) -> None:
        self._ops = tuple(ops)
        self._pos = {op.uid: n for n, op in enumerate(self._ops)}
        if len(self._pos) != len(self._ops):
            raise MalformedRunError("duplicate uid in ordered operation set")
        self._total = total
        if total:
            self._order = None
        else:
            rel = frozenset(order) if closed else transitive_closure(order)
            for a, b in rel:
                if a == b:
                    raise MalformedRunError(f"order is not irreflexive at {format_uid(a)}")
                if a not in self._pos or b not in self._pos:
                    raise MalformedRunError("order mentions an operation outside the set")
            self._order = rel

    @classmethod
    def sequence(cls, ops: Iterable[OperationRecord]) -> "OrderedOps":
        return cls(ops, total=True)

    @property
    def ops(self) -> Tuple[OperationRecord, ...]:
        return self._ops

    @property
    def is_total(self) -> bool:
        return self._total

    def __iter__(self) -> Iterator[OperationRecord]:
        return iter(self._ops)

    def __len__(self) -> int:
        return len(self._ops)

    def __contains__(self, op: object) -> bool:
        return isinstance(op, OperationRecord) and self._pos.get(op.uid) is not None and (
            self._ops[self._pos[op.uid]] == op
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OrderedOps):
            return NotImplemented
        return set(self._ops) == set(other._ops) and self.pairs() == other.pairs()

    def __hash__(self) -> int:
        return hash((frozenset(self._ops), self.pairs()))

    def __repr__(self) -> str:
        if self._total:
            return f"OrderedOps.sequence([{', '.join(map(str, self._ops))}])"
        return f"OrderedOps({[str(o) for o in self._ops]}, {len(self._order)} pairs)"

    def by_uid(self, uid: Uid) -> OperationRecord:
        return self._ops[self._pos[uid]]

    def precedes(self, a: OperationRecord, b: OperationRecord) -> bool:
        if self._total:
            pa, pb = self._pos.get(a.uid), self._pos.get(b.uid)
            return pa is not None and pb is not None and pa < pb
        return (a.uid, b.uid) in self._order

    def pairs(self) -> frozenset:
        if self._total:
            uids = [op.uid for op in self._ops]
            return frozenset(
                (uids[x], uids[y]) for x in range(len(uids)) for y in range(x + 1, len(uids))
            )
        return self._order

    def restrict(self, keep: Iterable[OperationRecord]) -> "OrderedOps":
        wanted = {op.uid for op in keep}
        ops = [op for op in self._ops if op.uid in wanted]
        if self._total:
            return OrderedOps.sequence(ops)
        rel = frozenset((a, b) for a, b in self._order if a in wanted and b in wanted)
        return OrderedOps(ops, rel, closed=True)

    def down_set(self, op: OperationRecord) -> "OrderedOps":
        return self.restrict(x for x in self._ops if self.precedes(x, op))

    def append(self, op: OperationRecord) -> "OrderedOps":
        """The ``||`` operator: ``op`` is placed after every current element."""
        if self._total:
            return OrderedOps.sequence(self._ops + (op,))
        rel = set(self._order)
        rel.update((x.uid, op.uid) for x in self._ops)
        return OrderedOps(self._ops + (op,), rel, closed=True)

    def of_issuer(self, issuer: int) -> Tuple[OperationRecord, ...]:
        return tuple(op for op in self._ops if op.issuer == issuer)

    def last_by(self, issuer: int) -> Optional[OperationRecord]:
        """The latest operation of ``issuer``; its operations must be totally ordered."""
        mine = self.of_issuer(issuer)
        if not mine:
            return None
        if self._total:
            return mine[-1]
        maxima = [a for a in mine if not any(self.precedes(a, b) for b in mine if b is not a)]
        if len(maxima) != 1:
            raise MalformedRunError(f"operations of process {issuer} are not totally ordered")
        return maxima[0]


class Status(enum.Enum):
    ACK = "ACK"
    NACK = "NACK"


@dataclass(frozen=True)
class ApplyResult:
    status: Status
    value: Any = None

    def __post_init__(self) -> None:
        if self.status is Status.NACK and self.value is not None:
            raise ValueError("NACK carries no value")

    @classmethod
    def ack(cls, value: Any = None) -> "ApplyResult":
        return cls(Status.ACK, value)

    @classmethod
    def nack(cls) -> "ApplyResult":
        return cls(Status.NACK)

    @property
    def ok(self) -> bool:
        return self.status is Status.ACK

    def __str__(self) -> str:
        from .traceio import format_result

        return format_result(self)


ValidFn = Callable[[OrderedOps, OperationRecord, int], bool]
ExecuteFn = Callable[[OrderedOps, OperationRecord, int], Any]


@dataclass(frozen=True)
class ObjectSpec:
    """A validated object: pure ``valid`` and ``execute`` over ``<P, <>``."""

    name: str
    valid: ValidFn
    execute: ExecuteFn
    initial_prefix: OrderedOps = field(default_factory=lambda: OrderedOps.sequence(()))
    params: dict = field(default_factory=dict, compare=False, hash=False)


def apply_centralized(
    spec: ObjectSpec,
    state: Union[OrderedOps, Sequence[OperationRecord]],
    op: OperationRecord,
    i: int,
) -> Tuple[ApplyResult, OrderedOps]:
    """Single-server apply: validate against ``state``, then execute and append."""
    if not isinstance(state, OrderedOps):
        state = OrderedOps.sequence(state)
    if spec.valid(state, op, i):
        value = spec.execute(state, op, i)
        return ApplyResult.ack(value), state.append(op)
    return ApplyResult.nack(), state


# -- histories ---------------------------------------------------------------


class EventKind(enum.Enum):
    INVOKE = "INVOKE"
    RESPOND = "RESPOND"


@dataclass(frozen=True)
class HistoryEvent:
    time: int
    uid: Uid
    issuer: int
    kind: EventKind
    payload: Union[OperationRecord, ApplyResult]


@dataclass(frozen=True)
class TraceNote:
    """A ``#``-prefixed debugging line carried along in the trace file."""

    text: str


class Policy(enum.Enum):
    DROP = "DROP"
    COMPLETE = "COMPLETE"


class HistoryTrace:
    """Invocation/response events in emission order, plus debug notes."""

    def __init__(self, entries: Iterable[Union[HistoryEvent, TraceNote]] = ()) -> None:
        self.entries: list = list(entries)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HistoryTrace) and self.entries == other.entries

    def __len__(self) -> int:
        return len(self.events)

    @property
    def events(self) -> list:
        return [e for e in self.entries if isinstance(e, HistoryEvent)]

    @property
    def notes(self) -> list:
        return [e for e in self.entries if isinstance(e, TraceNote)]

    def invoke(self, time: int, op: OperationRecord) -> None:
        self.entries.append(HistoryEvent(time, op.uid, op.issuer, EventKind.INVOKE, op))

    def respond(self, time: int, uid: Uid, result: ApplyResult) -> None:
        self.entries.append(HistoryEvent(time, uid, uid[0], EventKind.RESPOND, result))

    def note(self, text: str) -> None:
        self.entries.append(TraceNote(text))

    def _index(self) -> Tuple[dict, dict]:
        inv, resp = {}, {}
        for e in self.events:
            (inv if e.kind is EventKind.INVOKE else resp)[e.uid] = e
        return inv, resp

    def invocations(self) -> dict:
        return self._index()[0]

    def responses(self) -> dict:
        return self._index()[1]

    def operations(self) -> dict:
        """uid -> OperationRecord for every invoked operation."""
        return {uid: e.payload for uid, e in self.invocations().items()}

    def pending(self) -> list:
        inv, resp = self._index()
        return [uid for uid in inv if uid not in resp]

    def is_complete(self) -> bool:
        return not self.pending()

    def validate(self) -> None:
        """Raise MalformedRunError unless the trace is well formed."""
        inv, resp = {}, {}
        open_by_issuer: dict = {}
        last_time = None
        for e in self.events:
            if last_time is not None and e.time < last_time:
                raise MalformedRunError(f"time goes backwards at {format_uid(e.uid)}")
            last_time = e.time
            if e.issuer != e.uid[0]:
                raise MalformedRunError(f"issuer mismatch for {format_uid(e.uid)}")
            if e.kind is EventKind.INVOKE:
                if e.uid in inv:
                    raise MalformedRunError(f"duplicate INVOKE for {format_uid(e.uid)}")
                if open_by_issuer.get(e.issuer) is not None:
                    raise MalformedRunError(f"process {e.issuer} invoked while busy")
                inv[e.uid] = e
                open_by_issuer[e.issuer] = e.uid
            else:
                if e.uid not in inv:
                    raise MalformedRunError(f"RESPOND before INVOKE for {format_uid(e.uid)}")
                if e.uid in resp:
                    raise MalformedRunError(f"duplicate RESPOND for {format_uid(e.uid)}")
                resp[e.uid] = e
                if open_by_issuer.get(e.issuer) == e.uid:
                    open_by_issuer[e.issuer] = None


def real_time_precedes(h: HistoryTrace, u1: Uid, u2: Uid) -> bool:
    """``u1 -> u2``: the response of ``u1`` happens before the invocation of ``u2``."""
    inv, resp = h._index()
    for u in (u1, u2):
        if u not in inv:
            raise KeyError(f"unknown operation {format_uid(u)}")
    if u1 == u2 or u1 not in resp:
        return False
    return resp[u1].time < inv[u2].time


def complete_history(
    h: HistoryTrace,
    policy: Policy = Policy.DROP,
    results: Optional[Mapping[Uid, ApplyResult]] = None,
) -> HistoryTrace:
    """Turn a partial history into a complete one.

    DROP removes unmatched invocations. COMPLETE appends responses at the
    end, one tick apart in uid order, taking results from ``results``.
    """
    pending = sorted(h.pending())
    if not pending:
        return HistoryTrace(h.entries)
    if policy is Policy.DROP:
        gone = set(pending)
        return HistoryTrace(
            e for e in h.entries if not (isinstance(e, HistoryEvent) and e.uid in gone)
        )
    results = results or {}
    missing = [u for u in pending if u not in results]
    if missing:
        raise IncompleteMapError(f"no result for {', '.join(map(format_uid, missing))}")
    out = HistoryTrace(h.entries)
    t = max((e.time for e in h.events), default=0)
    for uid in pending:
        t += 1
        out.respond(t, uid, results[uid])
    return out


def drop_operations(h: HistoryTrace, uids: Iterable[Uid]) -> HistoryTrace:
    """Remove every event of the given operations, keeping notes."""
    gone = set(uids)
    return HistoryTrace(
        e for e in h.entries if not (isinstance(e, HistoryEvent) and e.uid in gone)
    )
