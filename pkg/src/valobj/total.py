"""Validated totally-ordered object over atomic broadcast.

Broadcast is a kernel-resident sequencer: acceptance happens in one atomic
step of the sender, after which every live node delivers the message in
sequence order at its own pace. Each node applies the same validate-then-
execute rule to every delivery, so all nodes hold the same sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .core import (
    ApplyResult,
    ConfigurationError,
    MalformedRunError,
    ObjectSpec,
    OperationRecord,
    OrderedOps,
    Uid,
    apply_centralized,
    format_uid,
)
from .kernel import Kernel


@dataclass(frozen=True)
class ABMessage:
    op: OperationRecord
    sender: int
    seq: int


class Sequencer:
    def __init__(self, kernel: Kernel) -> None:
        self.log: List[ABMessage] = []
        kernel.register(self)

    def accept(self, op: OperationRecord, sender: int) -> ABMessage:
        if any(m.op.uid == op.uid for m in self.log):
            raise MalformedRunError(f"operation {format_uid(op.uid)} broadcast twice")
        m = ABMessage(op, sender, len(self.log) + 1)
        self.log.append(m)
        return m

    def accepted(self, uid: Uid) -> bool:
        return any(m.op.uid == uid for m in self.log)

    def fingerprint(self) -> tuple:
        return tuple((m.sender, m.op) for m in self.log)


def ab_broadcast(sequencer: Sequencer, op: OperationRecord, sender: int) -> ABMessage:
    return sequencer.accept(op, sender)


def replay(spec: ObjectSpec, messages: Sequence[ABMessage]) -> Tuple[Dict[Uid, ApplyResult], OrderedOps]:
    """Results and final sequence from applying the delivery order centrally."""
    S = spec.initial_prefix
    results: Dict[Uid, ApplyResult] = {}
    for m in messages:
        results[m.op.uid], S = apply_centralized(spec, S, m.op, m.sender)
    return results, S


class TotalNode:
    def __init__(
        self,
        pid: int,
        spec: ObjectSpec,
        sequencer: Sequencer,
        kernel: Kernel,
        invoked: Optional[Dict[Uid, int]] = None,
        notes: bool = True,
    ) -> None:
        self.pid = pid
        self.invoked = invoked if invoked is not None else {}
        self.spec = spec
        self.sequencer = sequencer
        self.kernel = kernel
        self.notes = notes
        self.S: OrderedOps = spec.initial_prefix
        self.delivered = 0
        self.pending: Optional[Uid] = None
        self.ret: Optional[ApplyResult] = None
        kernel.spawn(self._deliveries(), f"ab:deliver:{pid}", owner=pid, daemon=True, wait=self._has_next)

    def _has_next(self) -> bool:
        return len(self.sequencer.log) > self.delivered

    def _deliveries(self):
        k = self.kernel
        while True:
            m = self.sequencer.log[self.delivered]
            self.delivered += 1
            k.observe(m.seq)
            if self.notes:
                k.note(f"#ab p{self.pid} seq={m.seq} sender={m.sender} uid={format_uid(m.op.uid)}")
            result, self.S = apply_centralized(self.spec, self.S, m.op, m.sender)
            if m.op.uid == self.pending:
                self.ret = result
                k.trace.respond(k.now, m.op.uid, result)
            yield self._has_next

    def apply(self, op: OperationRecord):
        if op.issuer != self.pid:
            raise ConfigurationError(f"process {self.pid} cannot issue {op}")
        if self.pending is not None:
            raise MalformedRunError(f"process {self.pid} has an apply in progress")
        k = self.kernel
        yield
        self.invoked[op.uid] = k.now
        k.trace.invoke(k.now, op)
        self.pending, self.ret = op.uid, None
        yield
        ab_broadcast(self.sequencer, op, self.pid)
        yield lambda: self.ret is not None
        result, self.pending, self.ret = self.ret, None, None
        return result


def apply_total(node: TotalNode, op: OperationRecord):
    """The apply as a kernel generator; use with ``yield from``."""
    return node.apply(op)
