"""Validated object specifications: punching, cryptocurrency, Do-All, versioned R/W.

Each factory returns an :class:`ObjectSpec` whose ``valid``/``execute`` follow
the object's pseudocode. ``make_spec`` builds one from a textual name such as
``crypto:n=3,ibalance=10`` or ``doall:T=3,J=a..e``.
"""

from __future__ import annotations

from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from .core import ConfigurationError, MalformedRunError, ObjectSpec, OperationRecord, OrderedOps

Clock = Callable[[OperationRecord], int]

# Bottom for ``max`` over an empty set of versions; below every version.
NO_VERSION = None


def _zero_clock(op: OperationRecord) -> int:
    return 0


# -- positive register (the introductory example) ----------------------------


def register_spec() -> ObjectSpec:
    """R/W register accepting only positive writes."""

    def valid(P: OrderedOps, op: OperationRecord, i: int) -> bool:
        if op.kind == "read":
            return True
        return op.kind == "write" and isinstance(op.args[0], int) and op.args[0] > 0

    def execute(P: OrderedOps, op: OperationRecord, i: int) -> Any:
        if op.kind == "write":
            return None
        writes = [x for x in P if x.kind == "write"]
        if not writes:
            return None
        if not P.is_total:
            writes = [w for w in writes if not any(P.precedes(w, v) for v in writes)]
            if len(writes) != 1:
                raise MalformedRunError("register read over unordered writes")
        return writes[-1].args[0]

    return ObjectSpec("register", valid, execute)


def trivial_spec() -> ObjectSpec:
    """Everything is valid; execute returns the number of preceding operations."""
    return ObjectSpec("trivial", lambda P, op, i: True, lambda P, op, i: len(P))


# -- punching system ----------------------------------------------------------


def punching_spec(now: Optional[Clock] = None) -> ObjectSpec:
    """punch-in(t, i) / punch-out(i), alternating per process.

    ``now`` maps a punch-out to the current time in hours; the simulator and
    checkers bind it to the operation's invocation tick.
    """
    clock = now or _zero_clock

    def valid(P: OrderedOps, op: OperationRecord, i: int) -> bool:
        if op.issuer != i:
            return False
        lop = P.last_by(i)
        if op.kind == "punch-out":
            return (
                len(op.args) == 1
                and op.args[0] == i
                and lop is not None
                and lop.kind == "punch-in"
                and lop.args[1] == i
            )
        if op.kind == "punch-in":
            return (
                len(op.args) == 2
                and op.args[1] == i
                and (lop is None or (lop.kind == "punch-out" and lop.args[0] == i))
            )
        return False

    def execute(P: OrderedOps, op: OperationRecord, i: int) -> Any:
        if op.kind != "punch-out":
            return None
        lop = P.last_by(i)
        if lop is None or lop.kind != "punch-in":
            return None
        return clock(op) - lop.args[0]

    return ObjectSpec("punching", valid, execute)


# -- cryptocurrency -----------------------------------------------------------


def _balance(P: OrderedOps, account: int, ibalance: int) -> int:
    incoming = sum(op.args[2] for op in P if op.kind == "transfer" and op.args[1] == account)
    outgoing = sum(op.args[2] for op in P if op.kind == "transfer" and op.args[0] == account)
    return ibalance + incoming - outgoing


def crypto_spec(n_accounts: int = 3, ibalance: int = 10) -> ObjectSpec:
    """transfer(i, k, x) / read(k) over ``n_accounts`` accounts.

    Signatures are modelled by the issuer identity check.
    """
    if ibalance < 0:
        raise ConfigurationError("ibalance must be non-negative")

    def valid(P: OrderedOps, op: OperationRecord, i: int) -> bool:
        if op.issuer != i:
            return False
        if op.kind == "read":
            return True
        if op.kind != "transfer" or len(op.args) != 3:
            return False
        j, _k, x = op.args
        if j != i or x <= 0:
            return False
        return _balance(P, i, ibalance) >= x

    def execute(P: OrderedOps, op: OperationRecord, i: int) -> Any:
        if op.kind == "read":
            return _balance(P, op.args[0], ibalance)
        return None

    return ObjectSpec("crypto", valid, execute, params={"n": n_accounts, "ibalance": ibalance})


# -- Do-All -------------------------------------------------------------------


def doall_spec(J: Iterable[Any] = ("x",), T: int = 3) -> ObjectSpec:
    """do(x, k) / completed(x, k) with redundancy threshold ``T``.

    ``do`` is accepted while at most ``T`` distinct processes have done the
    task, so up to ``T + 1`` performers can be admitted.
    """
    jobs = tuple(J)
    if T < 1 or not jobs:
        raise ConfigurationError("Do-All needs T >= 1 and a non-empty job set")

    def valid(P: OrderedOps, op: OperationRecord, i: int) -> bool:
        if op.issuer != i or len(op.args) != 2:
            return False
        x, k = op.args
        if op.kind == "completed":
            return i == k
        if op.kind == "do" and i == k:
            c = len({p.args[1] for p in P if p.kind == "do" and p.args[0] == x})
            return c <= T
        return False

    def execute(P: OrderedOps, op: OperationRecord, i: int) -> Any:
        if op.kind == "completed":
            return any(p.kind == "do" and p.args == op.args for p in P)
        return None

    return ObjectSpec("doall", valid, execute, params={"J": jobs, "T": T})


# -- versioned read/write -----------------------------------------------------


def _sort_key(v: Any) -> tuple:
    return (type(v).__name__, repr(v))


def versioned_spec() -> ObjectSpec:
    """write(ver, v, x) succeeds only above every earlier version on ``x``."""

    def ver_max(P: OrderedOps, x: Any) -> Any:
        versions = [p.args[0] for p in P if p.kind == "write" and p.args[2] == x]
        return max(versions) if versions else NO_VERSION

    def valid(P: OrderedOps, op: OperationRecord, i: int) -> bool:
        if op.issuer != i:
            return False
        if op.kind == "read":
            return True
        if op.kind != "write" or len(op.args) != 3:
            return False
        ver, _v, x = op.args
        top = ver_max(P, x)
        return top is NO_VERSION or ver > top

    def execute(P: OrderedOps, op: OperationRecord, i: int) -> Any:
        if op.kind != "read":
            return None
        x = op.args[0]
        top = ver_max(P, x)
        if top is NO_VERSION:
            return (None, None)
        values = sorted(
            {p.args[1] for p in P if p.kind == "write" and p.args[2] == x and p.args[0] == top},
            key=_sort_key,
        )
        # concurrent equal-version writes can coexist in a partial order
        return (top, values[0] if len(values) == 1 else tuple(values))

    return ObjectSpec("versioned", valid, execute)


# -- registry -----------------------------------------------------------------


def _parse_range(text: str) -> Tuple[Any, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        if lo.isdigit() and hi.isdigit():
            return tuple(range(int(lo), int(hi) + 1))
        if len(lo) == 1 and len(hi) == 1:
            return tuple(chr(c) for c in range(ord(lo), ord(hi) + 1))
        raise ConfigurationError(f"bad range {text!r}")
    return tuple(int(p) if p.isdigit() else p for p in text.split("|"))


def parse_spec_name(text: str) -> Tuple[str, Dict[str, str]]:
    """``"doall:T=3,J=a..e"`` -> ``("doall", {"T": "3", "J": "a..e"})``."""
    name, _, rest = text.strip().partition(":")
    params: Dict[str, str] = {}
    for item in filter(None, (p.strip() for p in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigurationError(f"parameter {item!r} needs key=value")
        params[key.strip()] = value.strip()
    return name.strip(), params


SPEC_NAMES = ("punching", "crypto", "doall", "versioned", "register", "trivial")


def make_spec(text: str, now: Optional[Clock] = None) -> ObjectSpec:
    name, params = parse_spec_name(text)
    try:
        if name == "punching":
            return punching_spec(now)
        if name == "crypto":
            return crypto_spec(int(params.get("n", 3)), int(params.get("ibalance", 10)))
        if name == "doall":
            return doall_spec(_parse_range(params.get("J", "x")), int(params.get("T", 3)))
        if name == "versioned":
            return versioned_spec()
        if name == "register":
            return register_spec()
        if name == "trivial":
            return trivial_spec()
    except ValueError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None
    raise ConfigurationError(f"unknown spec {name!r}; known: {', '.join(SPEC_NAMES)}")


def hour_scale(text: str) -> int:
    """Kernel ticks per punching hour (``punching:scale=N``, default 1)."""
    _, params = parse_spec_name(text)
    scale = int(params.get("scale", 1))
    if scale < 1:
        raise ConfigurationError("scale must be >= 1")
    return scale


def default_universe(text: str, processes: int = 2, copies: int = 2) -> List[OperationRecord]:
    """A small finite operation universe for property enumeration."""
    name, params = parse_spec_name(text)
    procs = range(1, processes + 1)
    shapes: List[Tuple[str, tuple, int]] = []
    if name == "punching":
        for i in procs:
            shapes += [("punch-in", (9, i), i), ("punch-out", (i,), i)]
    elif name == "crypto":
        amounts = _parse_range(params.get("amounts", "1"))
        for i in procs:
            for k in procs:
                if k != i:
                    shapes += [("transfer", (i, k, x), i) for x in amounts]
            shapes += [("read", (k,), i) for k in procs]
    elif name == "doall":
        for x in _parse_range(params.get("J", "x")):
            for i in procs:
                shapes += [("do", (x, i), i), ("completed", (x, i), i)]
    elif name == "versioned":
        values = "abcdefgh"
        for i in procs:
            for ver in (1, 2):
                shapes.append(("write", (ver, values[i - 1], "x"), i))
            shapes.append(("read", ("x",), i))
    elif name == "register":
        for i in procs:
            shapes += [("write", (i,), i), ("write", (-i,), i), ("read", (), i)]
    elif name == "trivial":
        for i in procs:
            shapes.append(("noop", (), i))
    else:
        raise ConfigurationError(f"unknown spec {name!r}")
    universe = []
    counters: Dict[int, int] = {}
    for _ in range(copies):
        for kind, args, issuer in shapes:
            counters[issuer] = counters.get(issuer, 0) + 1
            universe.append(OperationRecord(kind, args, issuer, counters[issuer]))
    return universe
