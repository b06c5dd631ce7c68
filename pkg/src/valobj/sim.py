"""Scenarios, seeded and exhaustive runs, and random workloads."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .applications import default_universe, hour_scale, make_spec, parse_spec_name
from .core import (
    ApplyResult,
    ConfigurationError,
    HistoryTrace,
    ObjectSpec,
    OperationRecord,
    OrderedOps,
    Policy,
    Uid,
    complete_history,
    drop_operations,
)
from .dlo import LedgerRecord, check_fabric, make_backend
from .kernel import Exploration, Kernel, Schedule, explore
from .regular import RegularNode
from .total import Sequencer, TotalNode, replay

IMPLS = ("regular", "total", "consensus")


@dataclass
class Scenario:
    """What to run: implementation, object, processes, and their workloads."""

    impl: str
    spec: str
    n: int = 3
    f: int = 0
    workload: Dict[int, List[OperationRecord]] = field(default_factory=dict)
    backend: str = "oracle"
    n_replicas: int = 3
    proposals: Tuple[Any, ...] = ()
    depth: int = 3

    def __post_init__(self) -> None:
        if self.impl not in IMPLS:
            raise ConfigurationError(f"unknown implementation {self.impl!r}")
        if self.n < 1 or self.f < 0:
            raise ConfigurationError("need n >= 1 and f >= 0")
        for pid, ops in self.workload.items():
            if not 1 <= pid <= self.n:
                raise ConfigurationError(f"workload for process {pid} outside 1..{self.n}")
            if any(op.issuer != pid for op in ops):
                raise ConfigurationError(f"process {pid} has an operation issued by someone else")
            if len({op.seq for op in ops}) != len(ops):
                raise ConfigurationError(f"process {pid} reuses a sequence number")

    def operations(self) -> List[OperationRecord]:
        return [op for pid in sorted(self.workload) for op in self.workload[pid]]


def number_workload(raw: Dict[int, Sequence[Tuple[str, tuple]]]) -> Dict[int, List[OperationRecord]]:
    """Turn ``{pid: [(kind, args), ...]}`` into operations numbered 1, 2, ... per process."""
    return {
        pid: [OperationRecord(kind, tuple(args), pid, n) for n, (kind, args) in enumerate(ops, start=1)]
        for pid, ops in raw.items()
    }


def bind_spec(text: str, invoked: Dict[Uid, int]) -> ObjectSpec:
    """The named spec, with punching's clock reading invocation ticks."""
    scale = hour_scale(text) if parse_spec_name(text)[0] == "punching" else 1
    return make_spec(text, now=lambda op: invoked[op.uid] // scale)


def spec_for_trace(text: str, trace: HistoryTrace) -> ObjectSpec:
    invoked = {uid: e.time for uid, e in trace.invocations().items()}
    return bind_spec(text, invoked)


@dataclass
class RunResult:
    """A finished run: the completed trace plus implementation state."""

    scenario: Scenario
    trace: HistoryTrace
    kernel: Kernel
    results: Dict[Uid, ApplyResult] = field(default_factory=dict)
    records: Tuple[LedgerRecord, ...] = ()
    sequences: Dict[int, OrderedOps] = field(default_factory=dict)
    ledger_ok: Dict[int, bool] = field(default_factory=dict)
    consensus: Any = None

    @property
    def stuck(self) -> List[str]:
        return self.kernel.stuck()

    @property
    def crashed(self) -> List[int]:
        return sorted(self.kernel.crashed)

    def summary(self) -> str:
        counts = Counter(e.payload.status.value for e in self.trace.responses().values())
        text = f"{len(self.trace.responses())} ops, {counts['ACK']} ACK"
        if counts["NACK"]:
            text += f", {counts['NACK']} NACK"
        return text


def _driver(kernel: Kernel, node: Any, ops: Sequence[OperationRecord], results: Dict[Uid, ApplyResult]):
    for op in ops:
        res = yield from node.apply(op)
        results[op.uid] = kernel.observe(res)


class _Setup:
    """Wires a scenario onto a fresh kernel and finishes the trace afterwards."""

    def __init__(self, scenario: Scenario, kernel: Kernel) -> None:
        self.scenario = scenario
        self.kernel = kernel
        self.invoked: Dict[Uid, int] = {}
        self.results: Dict[Uid, ApplyResult] = {}
        self.spec = bind_spec(scenario.spec, self.invoked)
        self.fabric = None
        self.sequencer = None
        self.nodes: Dict[int, Any] = {}
        self.consensus = None
        sc = scenario
        if sc.impl == "regular":
            if sc.backend == "replicated" and sc.f > (sc.n_replicas - 1) // 2:
                raise ConfigurationError(f"f={sc.f} crashes exceed what {sc.n_replicas} replicas tolerate")
            self.fabric = make_backend(sc.backend, sc.n_replicas, (sc.n_replicas - 1) // 2)(kernel, sc.n)
            handles = [self.fabric.handle(k) for k in range(1, sc.n + 1)]
            for pid in range(1, sc.n + 1):
                self.nodes[pid] = RegularNode(pid, handles, self.spec, kernel, self.invoked)
        elif sc.impl == "total":
            self.sequencer = Sequencer(kernel)
            for pid in range(1, sc.n + 1):
                self.nodes[pid] = TotalNode(pid, self.spec, self.sequencer, kernel, self.invoked)
        else:
            from .reduction import consensus_n, find_reduction_witness

            witness = find_reduction_witness(self.spec, default_universe(sc.spec, processes=sc.n), sc.depth)
            if witness is None:
                raise ConfigurationError(f"{sc.spec} has no reduction witness up to length {sc.depth}")
            proposals = sc.proposals or tuple(chr(ord("a") + k) for k in range(sc.n))
            self.consensus = consensus_n(kernel, witness, proposals)
        for pid in sorted(sc.workload):
            if sc.impl != "consensus" and sc.workload[pid]:
                kernel.spawn(_driver(kernel, self.nodes[pid], sc.workload[pid], self.results), f"p{pid}", owner=pid)

    def finish(self) -> RunResult:
        sc, k = self.scenario, self.kernel
        trace = k.trace
        out = RunResult(sc, trace, k, dict(self.results), consensus=self.consensus)
        if sc.impl == "regular":
            # RESPOND is logged once the append is durable; anything else pending is dropped
            trace = complete_history(trace, Policy.DROP)
            out.records = tuple(r for j in range(1, sc.n + 1) for r in self.fabric.contents(j))
            out.ledger_ok = check_fabric(self.fabric)
        elif sc.impl == "total":
            accepted, S = replay(self.spec, self.sequencer.log)
            pending = trace.pending()
            lost = [u for u in pending if u not in accepted]
            trace = complete_history(
                drop_operations(trace, lost), Policy.COMPLETE, {u: accepted[u] for u in pending if u in accepted}
            )
            out.sequences = {pid: node.S for pid, node in self.nodes.items() if pid not in k.crashed}
            out.sequences[0] = S
        out.trace = trace
        return out


def run(scenario: Scenario, schedule: Schedule = Schedule()) -> RunResult:
    """One seeded run to quiescence; the same inputs give the same trace."""
    schedule.check(scenario.n, scenario.f)
    kernel = Kernel(crash_plan=schedule.crash_plan)
    setup = _Setup(scenario, kernel)
    kernel.run_random(random.Random(schedule.seed))
    return setup.finish()


def explore_runs(scenario: Scenario, budget: int = 100_000, dedupe: bool = False) -> Exploration:
    """Every interleaving with up to ``scenario.f`` crashes; one RunResult per branch."""
    return explore(
        lambda kernel: _Setup(scenario, kernel),
        lambda setup, kernel, path: setup.finish(),
        max_crashes=scenario.f,
        budget=budget,
        dedupe=dedupe,
    )


# -- random workloads -----------------------------------------------------------

CORPUS_SPECS = ("punching", "crypto:n=3,ibalance=3", "doall:T=1,J=a|b", "versioned")


def random_workload(spec_text: str, n: int, rng: random.Random, max_ops: int = 8) -> Dict[int, List[OperationRecord]]:
    """Up to ``max_ops`` operations spread over ``n`` processes.

    Workloads include operations that some orders make invalid so NACK
    paths get exercised.
    """
    name, params = parse_spec_name(spec_text)
    total = rng.randint(1, max_ops)
    owners = sorted(rng.randint(1, n) for _ in range(total))
    raw: Dict[int, List[Tuple[str, tuple]]] = {pid: [] for pid in range(1, n + 1)}
    for pid in owners:
        mine = raw[pid]
        if name == "punching":
            inside = sum(1 for k, _ in mine if k == "punch-in") > sum(1 for k, _ in mine if k == "punch-out")
            if rng.random() < 0.15:
                inside = not inside  # out of turn
            mine.append(("punch-out", (pid,)) if inside else ("punch-in", (rng.randint(0, 3), pid)))
        elif name == "crypto":
            if rng.random() < 0.3:
                mine.append(("read", (rng.randint(1, n),)))
            else:
                k = rng.choice([a for a in range(1, n + 1) if a != pid] or [pid])
                mine.append(("transfer", (pid, k, rng.randint(1, 3))))
        elif name == "doall":
            jobs = params.get("J", "x").replace("..", "|").split("|")
            x = rng.choice(jobs)
            mine.append((rng.choice(["do", "do", "completed"]), (x, pid)))
        elif name == "versioned":
            if rng.random() < 0.35:
                mine.append(("read", ("x",)))
            else:
                mine.append(("write", (rng.randint(1, 3), "abcdefgh"[pid - 1], "x")))
        else:
            raise ConfigurationError(f"no workload generator for {name!r}")
    return number_workload({pid: ops for pid, ops in raw.items() if ops})


def corpus_scenario(impl: str, spec_text: str, seed: int, backend: str = "oracle", n: int = 3, f: int = 1) -> Tuple[Scenario, Schedule]:
    """A reproducible (scenario, schedule) pair for corpus sweeps."""
    rng = random.Random(f"workload:{impl}:{spec_text}:{seed}")
    workload = random_workload(spec_text, n, rng)
    scenario = Scenario(impl, spec_text, n=n, f=f, workload=workload, backend=backend)
    horizon = 6 * sum(len(v) for v in workload.values())
    return scenario, Schedule.seeded(seed, n, f, horizon)
