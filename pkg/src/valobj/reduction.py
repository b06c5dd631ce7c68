"""Consensus from a totally-ordered object that lacks persistent validity.

Given a reachable prefix ``S`` and two operations where ``op_j`` invalidates
``op_i``, two processes agree by racing their operations on the object:
whoever's operation is accepted wins. When ``op_i`` does not invalidate
``op_j`` in return, calls go through logged registers so ``j`` can learn the
fate of ``op_i``. The n-process wrapper lets ``i`` and ``j`` decide on
behalf of everyone.

All shared memory is write-once single-writer registers; the object is used
only through its ``apply``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .checkers import fresh_candidates, reachable_sequences
from .core import (
    ApplyResult,
    ConfigurationError,
    ObjectSpec,
    OperationRecord,
    OrderedOps,
    Status,
    apply_centralized,
)
from .dlo import OracleLedger
from .kernel import Exploration, Kernel, explore

BOTTOM = None


class ProtocolViolation(AssertionError):
    """An ordering fact the reduction relies on did not hold."""


class SWMRRegister:
    """Atomic write-once register; a ledger holding at most one record."""

    __slots__ = ("name", "_ledger")

    def __init__(self, name: str, writer: Any) -> None:
        self.name = name
        self._ledger = OracleLedger(writer)

    @property
    def writer(self) -> Any:
        return self._ledger.owner

    def write(self, value: Any, caller: Any) -> None:
        if self._ledger.get():
            raise ConfigurationError(f"register {self.name} written twice")
        self._ledger.append(value, caller)

    def read(self) -> Any:
        held = self._ledger.get()
        return held[0] if held else BOTTOM


class RegisterBank:
    """Named registers, created on first use."""

    def __init__(self) -> None:
        self.registers: Dict[str, SWMRRegister] = {}

    def register(self, name: str, writer: Any) -> SWMRRegister:
        reg = self.registers.get(name)
        if reg is None:
            reg = self.registers[name] = SWMRRegister(name, writer)
        elif reg.writer != writer:
            raise PermissionError(f"register {name} belongs to {reg.writer}")
        return reg

    def read(self, name: str) -> Any:
        reg = self.registers.get(name)
        return BOTTOM if reg is None else reg.read()

    def fingerprint(self) -> tuple:
        return tuple(sorted((n, r.read()) for n, r in self.registers.items()))


class BlackBoxObject:
    """A reliable totally-ordered object seeded with a prefix.

    ``apply`` is its whole interface; every call is recorded.
    """

    def __init__(self, spec: ObjectSpec, prefix: OrderedOps) -> None:
        self._spec = spec
        self._S = prefix
        self.calls: List[Tuple[OperationRecord, int, ApplyResult]] = []

    def apply(self, op: OperationRecord, i: int) -> ApplyResult:
        result, self._S = apply_centralized(self._spec, self._S, op, i)
        self.calls.append((op, i, result))
        return result

    def holds(self, op: OperationRecord) -> bool:
        """Test hook: whether ``op`` was accepted."""
        return any(c[0] == op and c[2].ok for c in self.calls)

    @property
    def sequence(self) -> Tuple[OperationRecord, ...]:
        return self._S.ops

    def fingerprint(self) -> tuple:
        return self._S.ops


@dataclass(frozen=True)
class ReductionWitness:
    spec: ObjectSpec
    prefix: OrderedOps
    op_i: OperationRecord
    op_j: OperationRecord
    mutual: bool

    @property
    def i(self) -> int:
        return self.op_i.issuer

    @property
    def j(self) -> int:
        return self.op_j.issuer

    def check(self) -> None:
        s, oi, oj = self.spec, self.op_i, self.op_j
        S = self.prefix
        ok = (
            oi.issuer != oj.issuer
            and oi not in S
            and oj not in S
            and s.valid(S, oi, oi.issuer)
            and s.valid(S, oj, oj.issuer)
            and not s.valid(S.append(oj), oi, oi.issuer)
            and self.mutual == (not s.valid(S.append(oi), oj, oj.issuer))
        )
        if not ok:
            raise ConfigurationError("not a reduction witness")

    def describe(self) -> str:
        s = ", ".join(map(str, self.prefix)) or "empty"
        kind = "mutual" if self.mutual else "one-way"
        return f"S=[{s}] op_i={self.op_i} by {self.i} op_j={self.op_j} by {self.j} ({kind})"


def find_reduction_witness(
    spec: ObjectSpec,
    op_universe: Sequence[OperationRecord],
    max_prefix_len: int,
    require_mutual: Optional[bool] = None,
) -> Optional[ReductionWitness]:
    """The first (shortest prefix) witness, optionally of a given kind."""
    for seq in reachable_sequences(spec, op_universe, max_prefix_len):
        S = spec.initial_prefix
        for op in seq:
            S = S.append(op)
        valid_now = [op for op in fresh_candidates(op_universe, seq) if spec.valid(S, op, op.issuer)]
        for op_i in valid_now:
            for op_j in valid_now:
                if op_j.issuer == op_i.issuer or spec.valid(S.append(op_j), op_i, op_i.issuer):
                    continue
                mutual = not spec.valid(S.append(op_i), op_j, op_j.issuer)
                if require_mutual is None or require_mutual == mutual:
                    w = ReductionWitness(spec, S, op_i, op_j, mutual)
                    w.check()
                    return w
    return None


# -- protocols ------------------------------------------------------------------


@dataclass
class ConsensusRun:
    kernel: Kernel
    witness: ReductionWitness
    proposals: Dict[int, Any]
    O: BlackBoxObject
    bank: RegisterBank = field(default_factory=RegisterBank)
    decisions: Dict[int, Any] = field(default_factory=dict)
    counters: Dict[int, int] = field(default_factory=dict)
    participants: Tuple[int, ...] = ()

    def fingerprint(self) -> tuple:
        return (self.bank.fingerprint(), self.O.fingerprint(), tuple(sorted(self.decisions.items())))

    def decide(self, pid: int, value: Any) -> None:
        if pid in self.decisions:
            raise ProtocolViolation(f"process {pid} decided twice")
        self.decisions[pid] = value
        self.kernel.note(f"#cons p{pid} decide {value}")

    def read(self, name: str) -> Any:
        return self.kernel.observe(self.bank.read(name))


def _mutual_process(run: ConsensusRun, me: int, other: int, op: OperationRecord, v: Any):
    """Write own proposal, apply own operation, decide by its outcome."""
    yield
    run.bank.register(f"cons_{me}", me).write(v, me)
    yield
    r = run.kernel.observe(run.O.apply(op, me))
    yield
    if r.status is Status.NACK:
        v = run.read(f"cons_{other}")
        if v is BOTTOM:
            raise ProtocolViolation(f"process {me} lost but cons_{other} is empty")
    return v


def logged_apply(run: ConsensusRun, k: int, op: OperationRecord):
    """Submit ``op`` through ``oplist_k`` and wait for ``reslist_k``."""
    c = run.counters[k] = run.counters.get(k, 0) + 1
    yield
    run.bank.register(f"oplist_{k}[{c}]", k).write(op, k)
    slot = f"reslist_{k}[{c}]"
    yield lambda: run.bank.read(slot) is not BOTTOM
    return run.read(slot)


def object_logging_task(run: ConsensusRun, k: int):
    """The object's side: serve ``oplist_k`` slots in order, forever."""
    c = 1
    while True:
        op = run.read(f"oplist_{k}[{c}]")
        result = run.O.apply(op, k)
        run.bank.register(f"reslist_{k}[{c}]", "O").write(result, "O")
        c += 1
        nxt = f"oplist_{k}[{c}]"
        yield lambda: run.bank.read(nxt) is not BOTTOM


def _spawn_object_task(run: ConsensusRun, k: int) -> None:
    first = f"oplist_{k}[1]"
    run.kernel.spawn(
        object_logging_task(run, k), f"object:{k}", owner=None, daemon=True,
        wait=lambda: run.bank.read(first) is not BOTTOM,
    )


def _oneway_i(run: ConsensusRun, op: OperationRecord, v: Any, j: int):
    me = op.issuer
    yield
    run.bank.register(f"cons_{me}", me).write(v, me)
    res = yield from logged_apply(run, me, op)
    yield
    if res.status is Status.NACK:
        v = run.read(f"cons_{j}")
        if v is BOTTOM:
            raise ProtocolViolation(f"process {me} lost but cons_{j} is empty")
    return v


def _oneway_j(run: ConsensusRun, op_j: OperationRecord, op_i: OperationRecord, v: Any):
    me, i = op_j.issuer, op_i.issuer
    yield
    run.bank.register(f"cons_{me}", me).write(v, me)
    yield from logged_apply(run, me, op_j)
    yield
    found = None
    c = 1
    while True:
        held = run.read(f"oplist_{i}[{c}]")
        if held is BOTTOM:
            break
        if held == op_i:
            found = c
            break
        c += 1
    if found is None:
        # op_i can only arrive after op_j now, where it is invalid
        if not run.O.holds(op_j):
            raise ProtocolViolation("op_i absent but op_j was not accepted")
        return v
    slot = f"reslist_{i}[{found}]"
    yield lambda: run.bank.read(slot) is not BOTTOM
    opires = run.read(slot)
    if opires.status is Status.NACK:
        return v
    yield
    v1 = run.read(f"cons_{i}")
    if v1 is BOTTOM:
        raise ProtocolViolation(f"op_i accepted but cons_{i} is empty")
    return v1


def _two_party(run: ConsensusRun, me: int, v: Any, algorithm: str):
    w = run.witness
    if algorithm == "mutual":
        other = w.j if me == w.i else w.i
        op = w.op_i if me == w.i else w.op_j
        return (yield from _mutual_process(run, me, other, op, v))
    if me == w.i:
        return (yield from _oneway_i(run, w.op_i, v, w.j))
    return (yield from _oneway_j(run, w.op_j, w.op_i, v))


def _deciding(run: ConsensusRun, me: int, v: Any, algorithm: str):
    value = yield from _two_party(run, me, v, algorithm)
    run.decide(me, value)


def _setup(kernel: Kernel, witness: ReductionWitness, proposals: Dict[int, Any]) -> ConsensusRun:
    run = ConsensusRun(kernel, witness, dict(proposals), BlackBoxObject(witness.spec, witness.prefix))
    kernel.register(run)
    return run


def _choose(algorithm: Optional[str], witness: ReductionWitness) -> str:
    algorithm = algorithm or ("mutual" if witness.mutual else "oneway")
    if algorithm not in ("mutual", "oneway"):
        raise ConfigurationError(f"unknown two-process algorithm {algorithm!r}")
    return algorithm


def consensus_mutual(kernel: Kernel, witness: ReductionWitness, v_i: Any, v_j: Any) -> ConsensusRun:
    """Set up the two racing processes on ``kernel``; run it to get decisions."""
    run = _setup(kernel, witness, {witness.i: v_i, witness.j: v_j})
    run.participants = (witness.i, witness.j)
    for pid, v in ((witness.i, v_i), (witness.j, v_j)):
        kernel.spawn(_deciding(run, pid, v, "mutual"), f"p{pid}", owner=pid)
    return run


def consensus_oneway(kernel: Kernel, witness: ReductionWitness, v_1: Any, v_2: Any) -> ConsensusRun:
    run = _setup(kernel, witness, {witness.i: v_1, witness.j: v_2})
    run.participants = (witness.i, witness.j)
    for k in (witness.i, witness.j):
        _spawn_object_task(run, k)
    for pid, v in ((witness.i, v_1), (witness.j, v_2)):
        kernel.spawn(_deciding(run, pid, v, "oneway"), f"p{pid}", owner=pid)
    return run


def _wrapper_process(run: ConsensusRun, me: int, n: int, v: Any, algorithm: str):
    w = run.witness
    yield
    run.bank.register(f"prop_{me}", me).write(v, me)
    if me in (w.i, w.j):
        names = [f"prop_{k}" for k in range(1, n + 1)]
        yield lambda: sum(run.bank.read(x) is not BOTTOM for x in names) >= n - 1
        filled = [(k, run.read(f"prop_{k}")) for k in range(1, n + 1)]
        chosen = min((k, val) for k, val in filled if val is not BOTTOM)[1]
        value = yield from _two_party(run, me, chosen, algorithm)
        run.decide(me, value)
        yield
        run.bank.register(f"decision_{me}", me).write(value, me)
        return
    names = (f"decision_{w.i}", f"decision_{w.j}")
    yield lambda: any(run.bank.read(x) is not BOTTOM for x in names)
    for x in names:
        got = run.read(x)
        if got is not BOTTOM:
            run.decide(me, got)
            return


def consensus_n(
    kernel: Kernel,
    witness: ReductionWitness,
    proposals: Sequence[Any],
    algorithm: Optional[str] = None,
) -> ConsensusRun:
    n = len(proposals)
    if n < 3 or not {witness.i, witness.j} <= set(range(1, n + 1)):
        raise ConfigurationError(f"need n >= 3 processes including {witness.i} and {witness.j}")
    algorithm = _choose(algorithm, witness)
    run = _setup(kernel, witness, {k: proposals[k - 1] for k in range(1, n + 1)})
    run.participants = tuple(range(1, n + 1))
    if algorithm == "oneway":
        for k in (witness.i, witness.j):
            _spawn_object_task(run, k)
    for k in range(1, n + 1):
        kernel.spawn(_wrapper_process(run, k, n, proposals[k - 1], algorithm), f"p{k}", owner=k)
    return run


# -- verdicts and exhaustive exploration ----------------------------------------


@dataclass(frozen=True)
class BranchOutcome:
    crashes: Tuple[Tuple[int, int], ...]
    decisions: Tuple[Tuple[int, Any], ...]
    rounds: int
    agreement: bool
    validity: bool
    termination: bool

    @property
    def ok(self) -> bool:
        return self.agreement and self.validity and self.termination

    @property
    def crash_pattern(self) -> str:
        return ",".join(f"p{p}@{s}" for p, s in self.crashes) or "-"

    @property
    def decided(self) -> str:
        values = sorted({str(v) for _, v in self.decisions})
        if not values:
            return "none"
        return values[0] if len(values) == 1 else "DISAGREE(" + ",".join(values) + ")"

    def line(self, seed: Any) -> str:
        return f"{seed} {self.crash_pattern} {self.decided} {self.rounds}"


def outcome(run: ConsensusRun, kernel: Kernel) -> BranchOutcome:
    decided = set(run.decisions.values())
    live = [p for p in run.participants if p not in kernel.crashed]
    return BranchOutcome(
        crashes=tuple(kernel.crash_log),
        decisions=tuple(sorted(run.decisions.items())),
        rounds=kernel.now,
        agreement=len(decided) <= 1,
        validity=all(v in run.proposals.values() for v in decided),
        termination=all(p in run.decisions for p in live) and not kernel.stuck(),
    )


def _builder(protocol: str, witness: ReductionWitness, proposals: Sequence[Any], algorithm: Optional[str]):
    def build(kernel: Kernel) -> ConsensusRun:
        if protocol == "mutual":
            return consensus_mutual(kernel, witness, proposals[0], proposals[1])
        if protocol == "oneway":
            return consensus_oneway(kernel, witness, proposals[0], proposals[1])
        if protocol == "n":
            return consensus_n(kernel, witness, proposals, algorithm)
        raise ConfigurationError(f"unknown protocol {protocol!r}")

    return build


def explore_consensus(
    protocol: str,
    witness: ReductionWitness,
    proposals: Sequence[Any],
    f: int = 1,
    budget: int = 100_000,
    algorithm: Optional[str] = None,
    dedupe: bool = True,
) -> Exploration:
    """Every schedule and crash placement (up to ``f``), one outcome per branch."""
    return explore(
        _builder(protocol, witness, proposals, algorithm),
        lambda run, kernel, path: outcome(run, kernel),
        max_crashes=f,
        budget=budget,
        dedupe=dedupe,
    )


def run_consensus_seeded(
    protocol: str,
    witness: ReductionWitness,
    proposals: Sequence[Any],
    seed: int,
    crash_plan: Sequence[Tuple[int, int]] = (),
    algorithm: Optional[str] = None,
) -> Tuple[BranchOutcome, Kernel]:
    kernel = Kernel(crash_plan=crash_plan)
    run = _builder(protocol, witness, proposals, algorithm)(kernel)
    kernel.run_random(random.Random(seed))
    return outcome(run, kernel), kernel
