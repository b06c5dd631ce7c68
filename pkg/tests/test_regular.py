import pytest
from hypothesis import given, settings, strategies as st

from valobj.applications import punching_spec
from valobj.checkers import check_regular, check_total
from valobj.core import (
    ApplyResult,
    ConfigurationError,
    HistoryTrace,
    MalformedRunError,
    OperationRecord,
    Status,
    VectorTimestamp,
    real_time_precedes,
)
from valobj.dlo import LedgerRecord, OracleFabric
from valobj.kernel import Kernel, Schedule
from valobj.regular import (
    RegularNode,
    apply_regular,
    derive_partial_order,
    find_cycle,
    response_order_extension,
    timestamp_pairs,
)
from valobj.sim import CORPUS_SPECS, Scenario, corpus_scenario, explore_runs, run, spec_for_trace


def nodes(n, spec=None):
    k = Kernel()
    fab = OracleFabric(k, n)
    handles = [fab.handle(j) for j in range(1, n + 1)]
    spec = spec or punching_spec(now=lambda op: 0)
    return k, fab, [RegularNode(pid, handles, spec, k) for pid in range(1, n + 1)]


def finish(k, gen, owner=1):
    task = k.spawn(gen, "t", owner=owner)
    while not task.done:
        k.step(task)
    return task.result


def test_fresh_punch_in_appends_zero_timestamp():
    k, fab, ns = nodes(3)
    op = OperationRecord("punch-in", (9, 1), 1, 1)
    assert finish(k, apply_regular(ns[0], op)) == ApplyResult.ack(None)
    assert fab.contents(1) == (LedgerRecord(VectorTimestamp(1, (0, 0, 0)), op),)
    assert [e.kind.value for e in k.trace.events] == ["INVOKE", "RESPOND"]


def test_punch_out_first_is_nacked_and_not_recorded():
    k, fab, ns = nodes(2)
    op = OperationRecord("punch-out", (1,), 1, 1)
    assert finish(k, apply_regular(ns[0], op)).status is Status.NACK
    assert fab.contents(1) == ()
    assert k.trace.responses()[op.uid].payload == ApplyResult.nack()


def test_second_op_sees_first():
    k, fab, ns = nodes(2)
    a = OperationRecord("punch-in", (9, 2), 2, 1)
    b = OperationRecord("punch-in", (9, 1), 1, 1)
    finish(k, apply_regular(ns[1], a), owner=2)
    finish(k, apply_regular(ns[0], b))
    assert fab.contents(1)[0].ts == VectorTimestamp(1, (0, 1))


def test_node_checks_issuer_and_ledger_owner():
    k, fab, ns = nodes(2)
    with pytest.raises(ConfigurationError):
        finish(k, apply_regular(ns[0], OperationRecord("punch-in", (9, 2), 2, 1)))
    with pytest.raises(ConfigurationError):
        RegularNode(1, [fab.handle(2), fab.handle(1)], punching_spec(), k)


def test_exhaustive_concurrent_punch_ins():
    sc = Scenario("regular", "punching", n=2, workload={
        1: [OperationRecord("punch-in", (0, 1), 1, 1)],
        2: [OperationRecord("punch-in", (0, 2), 2, 1)],
    })
    ex = explore_runs(sc)
    assert ex.complete and ex.branches > 1
    seen = set()
    for r in ex.outcomes:
        assert r.summary() == "2 ops, 2 ACK"
        assert find_cycle(timestamp_pairs(r.records)) is None
        assert check_regular(r.trace, spec_for_trace("punching", r.trace)).passed
        seen.add(frozenset(timestamp_pairs(r.records)))
    # neither sees the other, or exactly one does; never both
    assert seen == {frozenset(), frozenset({((1, 1), (2, 1))}), frozenset({((2, 1), (1, 1))})}


@pytest.mark.parametrize("at", range(0, 9))
def test_crash_point_all_or_nothing(at):
    sc = Scenario("regular", "punching", n=3, f=1, workload={
        1: [OperationRecord("punch-in", (0, 1), 1, 1)],
        2: [OperationRecord("punch-in", (0, 2), 2, 1)],
    })
    r = run(sc, Schedule(seed=0, crash_plan=((1, at),)))
    assert not r.stuck
    responded = (1, 1) in r.trace.responses()
    recorded = any(rec.op.uid == (1, 1) for rec in r.records)
    assert responded == recorded
    assert check_regular(r.trace, spec_for_trace("punching", r.trace)).passed


def test_crash_after_append_keeps_the_op():
    sc = Scenario("regular", "punching", n=3, f=1, workload={1: [OperationRecord("punch-in", (0, 1), 1, 1)]})
    r = run(sc, Schedule(seed=0, crash_plan=((1, 6),)))
    assert r.crashed == [1]
    assert r.summary() == "1 ops, 1 ACK"
    r = run(sc, Schedule(seed=0, crash_plan=((1, 2),)))
    assert r.summary() == "0 ops, 0 ACK" and r.records == ()


def _rec(issuer, seq, counts, kind="x"):
    return LedgerRecord(VectorTimestamp(issuer, counts), OperationRecord(kind, (), issuer, seq))


def test_derive_partial_order():
    a = _rec(1, 1, (0, 0))
    b = _rec(2, 1, (1, 0))
    c = _rec(1, 2, (1, 1))
    order = derive_partial_order([c, b, a])
    assert [o.uid for o in order] == [(1, 1), (1, 2), (2, 1)]
    assert order.precedes(a.op, b.op) and order.precedes(b.op, c.op) and order.precedes(a.op, c.op)
    assert timestamp_pairs([a, b]) == [((1, 1), (2, 1))]
    with pytest.raises(MalformedRunError):
        derive_partial_order([a, a])


def test_find_cycle():
    assert find_cycle([(1, 2), (2, 3)]) is None
    assert find_cycle([(1, 2), (2, 3), (3, 1)]) == [1, 2, 3, 1]


def test_response_order_extension():
    a, b = _rec(1, 1, (0, 0)), _rec(2, 1, (0, 0))
    h = HistoryTrace()
    h.invoke(1, a.op)
    h.invoke(2, b.op)
    h.respond(3, b.op.uid, ApplyResult.ack(None))
    with pytest.raises(MalformedRunError):
        response_order_extension([a, b], h)
    h.respond(4, a.op.uid, ApplyResult.ack(None))
    assert [o.uid for o in response_order_extension([a, b], h)] == [(2, 1), (1, 1)]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(CORPUS_SPECS), st.integers(0, 10_000))
def test_timestamps_acyclic_and_contain_real_time(spec_text, seed):
    r = run(*corpus_scenario("regular", spec_text, seed))
    pairs = timestamp_pairs(r.records)
    assert find_cycle(pairs) is None
    order = derive_partial_order(r.records)
    acked = {u for u, e in r.trace.responses().items() if e.payload.ok}
    assert acked == {rec.op.uid for rec in r.records}
    for a in acked:
        for b in acked:
            if real_time_precedes(r.trace, a, b):
                assert order.precedes(order.by_uid(a), order.by_uid(b))
    assert check_regular(r.trace, spec_for_trace(spec_text, r.trace), certificate=order).explored == 1


def test_punching_response_order_is_a_total_certificate():
    for seed in range(100):
        r = run(*corpus_scenario("regular", "punching", seed))
        cert = response_order_extension(r.records, r.trace)
        report = check_total(r.trace, spec_for_trace("punching", r.trace), certificate=cert)
        assert report.passed and report.explored == 1
