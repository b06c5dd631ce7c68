"""Validated regular object over n single-writer ledgers.

Each process reads every ledger in index order, timestamps its operation
with the ledger lengths it saw, validates against everything it saw, and on
success appends ``<ts, op>`` to its own ledger.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Optional, Sequence

from .core import (
    ApplyResult,
    ConfigurationError,
    HistoryTrace,
    MalformedRunError,
    ObjectSpec,
    OperationRecord,
    OrderedOps,
    Uid,
    VectorTimestamp,
    ts_precedes,
)
from .dlo import LedgerHandle, LedgerRecord
from .kernel import Kernel


def timestamp_pairs(records: Iterable[LedgerRecord]) -> List[tuple]:
    recs = list(records)
    return [
        (a.op.uid, b.op.uid)
        for a in recs
        for b in recs
        if a is not b and ts_precedes(a.ts, b.ts)
    ]


def find_cycle(pairs: Iterable[tuple]) -> Optional[List[Uid]]:
    """A cycle in the relation, if any (as a list of uids)."""
    succ: Dict[Uid, List[Uid]] = {}
    for a, b in pairs:
        succ.setdefault(a, []).append(b)
    colour: Dict[Uid, int] = {}
    path: List[Uid] = []

    def visit(u: Uid) -> Optional[List[Uid]]:
        colour[u] = 1
        path.append(u)
        for v in succ.get(u, ()):
            if colour.get(v) == 1:
                return path[path.index(v):] + [v]
            if v not in colour:
                found = visit(v)
                if found:
                    return found
        path.pop()
        colour[u] = 2
        return None

    for u in sorted(succ):
        if u not in colour:
            found = visit(u)
            if found:
                return found
    return None


def derive_partial_order(records: Iterable[LedgerRecord]) -> OrderedOps:
    """Operations ordered by timestamp: ``a < b`` iff b saw more of a's issuer's records."""
    recs = sorted(records, key=lambda r: r.op.uid)
    for a, b in zip(recs, recs[1:]):
        if a.op.uid == b.op.uid:
            raise MalformedRunError(f"duplicate record for operation {a.op.uid}")
    return OrderedOps([r.op for r in recs], timestamp_pairs(recs))


def response_order_extension(records: Iterable[LedgerRecord], trace: HistoryTrace) -> OrderedOps:
    """The recorded operations as a sequence sorted by response time."""
    responses = trace.responses()
    recs = list(records)
    missing = [r.op.uid for r in recs if r.op.uid not in responses]
    if missing:
        raise MalformedRunError(f"operations without a response: {missing}")
    recs.sort(key=lambda r: responses[r.op.uid].time)
    return OrderedOps.sequence(r.op for r in recs)


class RegularNode:
    """Per-process state: own id, the n ledger handles, and the object spec."""

    def __init__(
        self,
        pid: int,
        ledgers: Sequence[LedgerHandle],
        spec: ObjectSpec,
        kernel: Kernel,
        invoked: Optional[Dict[Uid, int]] = None,
    ) -> None:
        if ledgers[pid - 1].owner != pid:
            raise ConfigurationError(f"ledger {pid} is not owned by process {pid}")
        self.pid = pid
        self.ledgers = tuple(ledgers)
        self.spec = spec
        self.kernel = kernel
        self.invoked = invoked if invoked is not None else {}
        self.busy = False

    def apply(self, op: OperationRecord):
        if op.issuer != self.pid:
            raise ConfigurationError(f"process {self.pid} cannot issue {op}")
        if self.busy:
            raise MalformedRunError(f"process {self.pid} has an apply in progress")
        self.busy = True
        k = self.kernel
        snapshots = []
        for j, ledger in enumerate(self.ledgers, start=1):
            yield
            if j == 1:
                self.invoked[op.uid] = k.now
                k.trace.invoke(k.now, op)
            snapshot = yield from ledger.get(self.pid)
            snapshots.append(k.observe(snapshot))
        yield
        ts = VectorTimestamp(self.pid, tuple(len(g) for g in snapshots))
        seen = {r.op.uid: r for g in snapshots for r in g}
        P = derive_partial_order(seen.values())
        if not self.spec.valid(P, op, self.pid):
            result = ApplyResult.nack()
            k.trace.respond(k.now, op.uid, result)
            self.busy = False
            return result
        result = ApplyResult.ack(self.spec.execute(P, op, self.pid))
        yield
        yield from self.ledgers[self.pid - 1].append(
            LedgerRecord(ts, op),
            self.pid,
            on_durable=lambda: k.trace.respond(k.now, op.uid, result),
        )
        self.busy = False
        return result


def apply_regular(node: RegularNode, op: OperationRecord):
    """The apply as a kernel generator; use with ``yield from``."""
    return node.apply(op)
