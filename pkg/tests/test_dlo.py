import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import linearizable_by_enumeration
from valobj.core import ConfigurationError, MalformedRunError, OperationRecord, VectorTimestamp
from valobj.dlo import (
    LedgerCall,
    LedgerRecord,
    OracleFabric,
    OracleLedger,
    ReplicatedFabric,
    check_fabric,
    check_ledger,
    check_linearizable,
    make_backend,
    replicated_backend,
)
from valobj.kernel import Kernel, explore


def drive(kernel, gen):
    """Run a ledger-call generator to completion on a fresh kernel."""
    task = kernel.spawn(gen, "t", owner=1)
    while not task.done:
        kernel.step(task)
    return task.result


def test_oracle_get_after_append():
    k = Kernel()
    fab = OracleFabric(k, 2)
    drive(k, fab.append(1, "r1", 1))
    assert drive(k, fab.get(1, 2)) == ("r1",)
    assert drive(k, fab.get(2, 1)) == ()


def test_oracle_non_owner_append_rejected():
    k = Kernel()
    fab = OracleFabric(k, 2)
    with pytest.raises(PermissionError):
        drive(k, fab.append(1, "r", 2))
    with pytest.raises(PermissionError):
        OracleLedger(1).append("r", 2)


def test_unknown_ledger_rejected():
    k = Kernel()
    with pytest.raises(ConfigurationError):
        drive(k, OracleFabric(k, 2).get(3, 1))


def test_oracle_on_durable_fires_at_append():
    k = Kernel()
    fab = OracleFabric(k, 1)
    fired = []
    drive(k, fab.handle(1).append("x", 1, on_durable=lambda: fired.append(fab.contents(1))))
    assert fired == [("x",)]


def test_check_ledger():
    op1 = OperationRecord("a", (), 2, 1)
    op2 = OperationRecord("b", (), 2, 2)
    good = [LedgerRecord(VectorTimestamp(2, (0, 0)), op1), LedgerRecord(VectorTimestamp(2, (3, 1)), op2)]
    check_ledger(2, good)
    with pytest.raises(MalformedRunError):
        check_ledger(1, good)
    with pytest.raises(MalformedRunError):
        check_ledger(2, good[::-1])


@pytest.mark.parametrize("replicas,f", [(3, 1), (5, 2), (1, 0), (4, 1)])
def test_replication_config_accepted(replicas, f):
    replicated_backend(replicas, f)
    ReplicatedFabric(Kernel(), 3, replicas, f)


@pytest.mark.parametrize("replicas,f", [(2, 1), (3, 2), (4, 2), (0, 0), (3, -1)])
def test_replication_config_rejected(replicas, f):
    with pytest.raises(ConfigurationError):
        replicated_backend(replicas, f)
    with pytest.raises(ConfigurationError):
        ReplicatedFabric(Kernel(), 3, replicas, f)


def test_make_backend():
    assert make_backend("oracle")(Kernel(), 2).backend == "oracle"
    assert make_backend("replicated", 5, 2)(Kernel(), 2).majority == 3
    with pytest.raises(ConfigurationError):
        make_backend("paxos")


def _client(fab, pid, rng, log):
    for n in range(rng.randint(1, 4)):
        yield
        if rng.random() < 0.5:
            yield from fab.append(pid, f"p{pid}.{n}", pid)
        else:
            log.append((yield from fab.get(rng.randint(1, fab.n), pid)))


@pytest.mark.parametrize("replicas,f", [(3, 1), (5, 2)])
def test_replicated_random_runs_linearizable(replicas, f):
    n = 3
    for seed in range(1000):
        rng = random.Random(seed)
        plan = [(pid, rng.randint(0, 12)) for pid in rng.sample(range(1, n + 1), rng.randint(0, f))]
        k = Kernel(crash_plan=plan)
        fab = ReplicatedFabric(k, n, replicas, f)
        for pid in range(1, n + 1):
            k.spawn(_client(fab, pid, random.Random(f"{seed}:{pid}"), []), f"c{pid}", owner=pid)
        k.run_random(rng)
        assert k.stuck() == [], seed
        assert all(check_fabric(fab).values()), seed


class Probe(list):
    """Test-side state; registered so deduplication keeps it apart."""

    def fingerprint(self):
        return tuple(self)


def _model(log):
    def build(kernel):
        fab = ReplicatedFabric(kernel, 3, 3, 1)
        durable = Probe()
        kernel.register(durable)

        def writer():
            yield
            yield from fab.append(1, "r1", 1, on_durable=lambda: durable.append(fab._tick))

        def reader():
            yield
            return (yield from fab.get(1, 2))

        kernel.spawn(writer(), "w", owner=1)
        kernel.spawn(reader(), "r", owner=2)
        return fab, durable

    def terminal(ctx, kernel, path):
        fab, durable = ctx
        log.append((fab, durable, kernel))
        return all(check_fabric(fab).values())

    return build, terminal


def test_replicated_model_check_one_crash():
    log = []
    build, terminal = _model(log)
    ex = explore(build, terminal, max_crashes=1)
    assert ex.complete and all(ex.outcomes)
    seen = set()
    for fab, durable, kernel in log:
        stored = sum(1 for rep in fab.replicas.values() if rep[1])
        assert bool(durable) == (stored >= 2)
        gets = [c for c in fab.calls if c.kind == "get" and c.response is not None]
        if durable:
            # once a majority holds the record every later get returns it
            assert all(c.value == ("r1",) for c in gets if c.invoke > durable[0])
            if 1 in kernel.crashed and any(c.invoke > durable[0] for c in gets):
                seen.add("crash after majority")
        if stored == 0:
            assert all(c.value == () for c in gets)
            if 1 in kernel.crashed and gets:
                seen.add("crash before any store")
    assert seen == {"crash after majority", "crash before any store"}


def test_replicated_reads_write_back():
    # A get that sees a lone replica's copy spreads it to a majority first.
    k = Kernel()
    fab = ReplicatedFabric(k, 3, 3, 1, notes=False)
    fab.replicas[3][1] = ("x",)
    fab.local[1] = ("x",)
    task = k.spawn(fab.get(1, 2), "g", owner=2)
    while not task.done:
        ready = k.ready()
        # starve replica 1 so replica 3 answers the read
        pick = [t for t in ready if not t.name.endswith("r1")] or ready
        k.step(pick[0])
    assert task.result == ("x",)
    assert sum(1 for rep in fab.replicas.values() if rep[1] == ("x",)) >= 2


def test_replicated_notes_in_trace():
    k = Kernel()
    fab = ReplicatedFabric(k, 1, 3, 1)
    task = k.spawn(fab.append(1, "x", 1), "a", owner=1)
    while k.ready():
        k.step(k.ready()[0])
    assert task.done
    assert any(n.text.startswith("#dlo r1 WRITE(1) L1 from p1") for n in k.trace.notes)


# -- linearizability checker --------------------------------------------------


def test_linearizable_examples():
    a = LedgerCall(1, 1, "append", 1, 2, "x")
    g_new = LedgerCall(1, 2, "get", 3, 4, ("x",))
    g_old = LedgerCall(1, 2, "get", 3, 4, ())
    assert check_linearizable([a, g_new])
    assert not check_linearizable([a, g_old])
    pending = LedgerCall(1, 1, "append", 1, None, "x")
    assert check_linearizable([pending, g_old]) and check_linearizable([pending, g_new])


@st.composite
def call_logs(draw):
    m = draw(st.integers(0, 5))
    stamps = draw(st.permutations(list(range(1, 2 * m + 1))))
    calls, appended = [], 0
    for n in range(m):
        t0, t1 = sorted(stamps[2 * n: 2 * n + 2])
        if draw(st.booleans()):
            appended += 1
            resp = None if draw(st.integers(0, 4)) == 0 else t1
            calls.append(LedgerCall(1, 1, "append", t0, resp, f"v{appended}"))
        else:
            size = draw(st.integers(0, 3))
            calls.append(LedgerCall(1, 2, "get", t0, t1, tuple(f"v{i}" for i in range(1, size + 1))))
    # the single writer issues its appends one at a time
    writes = [c for c in calls if c.kind == "append"]
    writes.sort(key=lambda c: c.invoke)
    for w, nxt in zip(writes, writes[1:]):
        if w.response is None or w.response > nxt.invoke:
            return [c for c in calls if c.kind == "get"]
    for n, w in enumerate(writes, start=1):
        w.value = f"v{n}"
    return calls


@settings(max_examples=300, deadline=None)
@given(call_logs())
def test_linearizable_matches_enumeration(calls):
    assert check_linearizable(calls) == linearizable_by_enumeration(calls)
