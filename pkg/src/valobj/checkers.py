"""Brute-force decision procedures.

``check_regular`` and ``check_total`` search for an order over the accepted
operations of a complete trace that contains real-time order, validates each
operation against what precedes it, and reproduces each recorded value.
``check_persistent_validity`` and ``check_persistent_execution`` enumerate
reachable sequences over a finite operation universe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from .core import (
    HistoryTrace,
    MalformedRunError,
    ObjectSpec,
    OperationRecord,
    OrderedOps,
    Status,
    format_uid,
)

PASS = "PASS"
FAIL = "FAIL"


class BudgetExceeded(RuntimeError):
    def __init__(self, size: int, budget: int, explored: int = 0) -> None:
        self.size = size
        self.budget = budget
        self.explored = explored
        super().__init__(f"{size} accepted operations exceed the search budget of {budget}")


@dataclass(frozen=True)
class Violation:
    """One operation that no candidate order could justify.

    ``prefix`` is the order the operation was last evaluated against;
    ``required`` lists the operations real time forces into it.
    """

    op: OperationRecord
    prefix: OrderedOps
    required: Tuple[OperationRecord, ...]
    reason: str  # "invalid" or "value"
    recorded: Any
    computed: Any

    def describe(self) -> str:
        prefix = ", ".join(map(str, _linear(self.prefix))) or "empty"
        head = f"op {format_uid(self.op.uid)} {self.op}"
        if self.reason == "invalid":
            return f"{head}: not valid after [{prefix}]"
        return f"{head}: recorded {_show(self.recorded)}, execute gives {_show(self.computed)} after [{prefix}]"


@dataclass(frozen=True)
class PropertyWitness:
    """``S``, and ``op_j`` placed before ``op_i`` changes op_i's validity or result."""

    prefix: OrderedOps
    op_i: OperationRecord
    op_j: OperationRecord
    reason: str  # "invalidated" or "result"
    before: Any = None
    after: Any = None

    def describe(self) -> str:
        s = ", ".join(map(str, self.prefix)) or "empty"
        text = f"S=[{s}] op_i={self.op_i} by {self.op_i.issuer} op_j={self.op_j} by {self.op_j.issuer}"
        if self.reason == "invalidated":
            return text + ": op_j invalidates op_i"
        return text + f": op_i returns {_show(self.before)} alone, {_show(self.after)} after op_j"


@dataclass
class CheckReport:
    verdict: str
    explored: int
    witness: Any = None
    bound: Optional[int] = None
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def describe(self) -> str:
        if self.passed:
            return PASS if self.bound is None else f"{PASS} (up to length {self.bound})"
        return f"{FAIL} {self.witness.describe()}" if self.witness is not None else FAIL

    def to_dict(self) -> dict:
        out: Dict[str, Any] = {"verdict": self.verdict, "explored": self.explored}
        if self.bound is not None:
            out["bound"] = self.bound
        if isinstance(self.witness, OrderedOps):
            out["order"] = [format_uid(op.uid) for op in _linear(self.witness)]
            if not self.witness.is_total:
                out["pairs"] = sorted([format_uid(a), format_uid(b)] for a, b in self.witness.pairs())
        elif self.witness is not None:
            out["witness"] = self.witness.describe()
        return out


def _show(value: Any) -> str:
    from .traceio import format_value

    return format_value(value)


def _linear(order: OrderedOps) -> List[OperationRecord]:
    """A deterministic linearization (topological, ties by uid)."""
    if order.is_total:
        return list(order)
    rest = sorted(order, key=lambda o: o.uid)
    out: List[OperationRecord] = []
    while rest:
        for op in rest:
            if not any(order.precedes(o, op) for o in rest if o is not op):
                out.append(op)
                rest.remove(op)
                break
    return out


# -- traces -------------------------------------------------------------------


@dataclass
class _Accepted:
    ops: List[OperationRecord]  # sorted by response time
    values: List[Any]
    rt_pred: List[frozenset]  # indices whose response precedes the invocation


def _accepted(trace: HistoryTrace) -> _Accepted:
    trace.validate()
    if not trace.is_complete():
        pending = ", ".join(map(format_uid, trace.pending()))
        raise MalformedRunError(f"trace has pending operations ({pending}); complete it first")
    inv, resp = trace.invocations(), trace.responses()
    uids = [u for u in resp if resp[u].payload.status is Status.ACK]
    uids.sort(key=lambda u: (resp[u].time, u))
    ops = [inv[u].payload for u in uids]
    values = [resp[u].payload.value for u in uids]
    rt_pred = [
        frozenset(a for a, ua in enumerate(uids) if resp[ua].time < inv[ub].time)
        for ub in uids
    ]
    return _Accepted(ops, values, rt_pred)


def _order_from(ops: Sequence[OperationRecord], down: Dict[int, frozenset], members) -> OrderedOps:
    members = sorted(members)
    pairs = [(ops[a].uid, ops[b].uid) for b in members for a in down[b]]
    return OrderedOps([ops[m] for m in members], pairs, closed=True)


def _check_regular_certificate(acc: _Accepted, spec: ObjectSpec, order: OrderedOps) -> bool:
    index = {op.uid: n for n, op in enumerate(acc.ops)}
    if set(index) != {op.uid for op in order}:
        return False
    for b, op in enumerate(acc.ops):
        if any(not order.precedes(acc.ops[a], op) for a in acc.rt_pred[b]):
            return False
        P = order.down_set(op)
        if not spec.valid(P, op, op.issuer) or spec.execute(P, op, op.issuer) != acc.values[b]:
            return False
    return True


def check_regular(
    trace: HistoryTrace,
    spec: ObjectSpec,
    budget: int = 10,
    certificate: Optional[OrderedOps] = None,
) -> CheckReport:
    """Search for a partial order over accepted operations justifying the trace."""
    acc = _accepted(trace)
    m = len(acc.ops)
    if certificate is not None and _check_regular_certificate(acc, spec, certificate):
        return CheckReport(PASS, 1, certificate)
    if m > budget:
        raise BudgetExceeded(m, budget)

    ops, values, rt_pred = acc.ops, acc.values, acc.rt_pred
    failed: set = set()
    explored = 0
    worst: Dict[str, Any] = {"depth": -1, "violation": None}

    def downsets(placed: List[int], down: Dict[int, frozenset], required: frozenset) -> List[frozenset]:
        optional = [p for p in placed if p not in required]
        found: List[frozenset] = []

        def grow(n: int, chosen: frozenset) -> None:
            if n == len(optional):
                found.append(chosen)
                return
            a = optional[n]
            if down[a] <= chosen:
                grow(n + 1, chosen | {a})
            grow(n + 1, chosen)

        grow(0, required)
        found.sort(key=lambda d: (-len(d), sorted(d)))
        return found

    def search(placed: List[int], down: Dict[int, frozenset]) -> Optional[Dict[int, frozenset]]:
        nonlocal explored
        if len(placed) == m:
            return down
        last = placed[-1] if placed else None
        key = (frozenset(down.items()), last)
        if key in failed:
            return None
        placed_set = frozenset(placed)
        for x in range(m):
            if x in placed_set or not rt_pred[x] <= placed_set:
                continue
            required = frozenset(rt_pred[x]).union(*(down[y] for y in rt_pred[x]))
            op = ops[x]
            for D in downsets(placed, down, required):
                # canonical insertion order: unrelated neighbours go by response order
                if last is not None and last not in D and x < last:
                    continue
                explored += 1
                P = _order_from(ops, down, D)
                if not spec.valid(P, op, op.issuer):
                    _note_failure(worst, len(placed), op, P, required, "invalid", values[x], None, ops)
                    continue
                got = spec.execute(P, op, op.issuer)
                if got != values[x]:
                    _note_failure(worst, len(placed), op, P, required, "value", values[x], got, ops)
                    continue
                nxt = dict(down)
                nxt[x] = D
                result = search(placed + [x], nxt)
                if result is not None:
                    return result
        failed.add(key)
        return None

    found = search([], {})
    if found is None:
        return CheckReport(FAIL, explored, worst["violation"])
    return CheckReport(PASS, explored, _order_from(ops, found, range(m)))


def _note_failure(worst, depth, op, P, required, reason, recorded, computed, ops) -> None:
    if depth > worst["depth"]:
        worst["depth"] = depth
        worst["violation"] = Violation(
            op, P, tuple(ops[r] for r in sorted(required)), reason, recorded, computed
        )


def check_total(
    trace: HistoryTrace,
    spec: ObjectSpec,
    budget: int = 10,
    certificate: Optional[OrderedOps] = None,
) -> CheckReport:
    """Search for a sequence of accepted operations justifying the trace."""
    acc = _accepted(trace)
    ops, values, rt_pred = acc.ops, acc.values, acc.rt_pred
    m = len(ops)
    index = {op.uid: n for n, op in enumerate(ops)}

    if certificate is not None:
        cert = [index.get(op.uid) for op in certificate]
        if None not in cert and len(cert) == m and _replay_total(ops, values, rt_pred, spec, cert):
            return CheckReport(PASS, 1, OrderedOps.sequence(ops[c] for c in cert))
    if m > budget:
        raise BudgetExceeded(m, budget)

    explored = 0
    worst: Dict[str, Any] = {"depth": -1, "violation": None}

    def search(seq: List[int], S: OrderedOps) -> Optional[List[int]]:
        nonlocal explored
        if len(seq) == m:
            return seq
        placed = frozenset(seq)
        for x in range(m):
            if x in placed or not rt_pred[x] <= placed:
                continue
            explored += 1
            op = ops[x]
            required = frozenset(rt_pred[x])
            if not spec.valid(S, op, op.issuer):
                _note_failure(worst, len(seq), op, S, required, "invalid", values[x], None, ops)
                continue
            got = spec.execute(S, op, op.issuer)
            if got != values[x]:
                _note_failure(worst, len(seq), op, S, required, "value", values[x], got, ops)
                continue
            result = search(seq + [x], S.append(op))
            if result is not None:
                return result
        return None

    found = search([], spec.initial_prefix)
    if found is None:
        return CheckReport(FAIL, explored, worst["violation"])
    return CheckReport(PASS, explored, OrderedOps.sequence(ops[x] for x in found))


def _replay_total(ops, values, rt_pred, spec: ObjectSpec, order: Sequence[int]) -> bool:
    S = spec.initial_prefix
    seen: set = set()
    for x in order:
        op = ops[x]
        if not rt_pred[x] <= seen:
            return False
        if not spec.valid(S, op, op.issuer) or spec.execute(S, op, op.issuer) != values[x]:
            return False
        S = S.append(op)
        seen.add(x)
    return True


# -- persistent validity / execution -----------------------------------------


def reachable_sequences(
    spec: ObjectSpec, universe: Sequence[OperationRecord], max_len: int
) -> Iterator[Tuple[OperationRecord, ...]]:
    """Every sequence of at most ``max_len`` universe operations that is valid
    element by element, shortest first.

    Copies of the same operation shape are interchangeable, so only the
    lowest-numbered unused copy of each shape is ever chosen.
    """
    layer: List[Tuple[OperationRecord, ...]] = [()]
    for length in range(max_len + 1):
        nxt: List[Tuple[OperationRecord, ...]] = []
        for seq in layer:
            yield seq
            if length == max_len:
                continue
            S = spec.initial_prefix
            for op in seq:
                S = S.append(op)
            for op in fresh_candidates(universe, seq):
                if spec.valid(S, op, op.issuer):
                    nxt.append(seq + (op,))
        layer = nxt


def fresh_candidates(universe: Sequence[OperationRecord], used: Sequence[OperationRecord]) -> List[OperationRecord]:
    taken = set(used)
    seen_shapes: set = set()
    out = []
    for op in universe:
        if op in taken or op.shape() in seen_shapes:
            continue
        seen_shapes.add(op.shape())
        out.append(op)
    return out


def _co_valid_pairs(
    spec: ObjectSpec, universe, max_len
) -> Iterator[Tuple[OrderedOps, OrderedOps, OperationRecord, OperationRecord]]:
    """(S, S + op_j, op_i, op_j) for every co-valid pair by distinct issuers."""
    for seq in reachable_sequences(spec, universe, max_len):
        S = spec.initial_prefix
        for op in seq:
            S = S.append(op)
        valid_now = [op for op in fresh_candidates(universe, seq) if spec.valid(S, op, op.issuer)]
        for op_j in valid_now:
            after_j = S.append(op_j)
            for op_i in valid_now:
                if op_j.issuer != op_i.issuer:
                    yield S, after_j, op_i, op_j


def check_persistent_validity(
    spec: ObjectSpec, op_universe: Sequence[OperationRecord], max_len: int
) -> CheckReport:
    explored = 0
    for S, after_j, op_i, op_j in _co_valid_pairs(spec, op_universe, max_len):
        explored += 1
        if not spec.valid(after_j, op_i, op_i.issuer):
            return CheckReport(FAIL, explored, PropertyWitness(S, op_i, op_j, "invalidated"))
    return CheckReport(PASS, explored, bound=max_len)


def check_persistent_execution(
    spec: ObjectSpec, op_universe: Sequence[OperationRecord], max_len: int
) -> CheckReport:
    """Persistent validity and result stability in one pass.

    The first co-valid pair that breaks either is the witness; an
    ``invalidated`` witness means persistent validity already fails.
    """
    explored = 0
    for S, after_j, op_i, op_j in _co_valid_pairs(spec, op_universe, max_len):
        explored += 1
        if not spec.valid(after_j, op_i, op_i.issuer):
            return CheckReport(FAIL, explored, PropertyWitness(S, op_i, op_j, "invalidated"))
        before = spec.execute(S, op_i, op_i.issuer)
        after = spec.execute(after_j, op_i, op_i.issuer)
        if before != after:
            return CheckReport(FAIL, explored, PropertyWitness(S, op_i, op_j, "result", before, after))
    return CheckReport(PASS, explored, bound=max_len)
