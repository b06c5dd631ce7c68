"""Line-oriented trace files.

    valobj-v1
    <time> <uid> <issuer> INVOKE kind(arg,...)
    <time> <uid> <issuer> RESPOND ACK(value) | NACK
    #... debugging notes (#dlo, #ab, ...)

Arguments and values are JSON literals; JSON arrays read back as tuples.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, Union

from .core import (
    ApplyResult,
    EventKind,
    HistoryEvent,
    HistoryTrace,
    OperationRecord,
    Status,
    TraceNote,
    format_uid,
    parse_uid,
)

HEADER = "valobj-v1"

_OP_RE = re.compile(r"^\s*([A-Za-z_][\w-]*)\((.*)\)\s*$", re.S)


class TraceParseError(ValueError):
    def __init__(self, message: str, line: int = 0) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _to_json(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_to_json(v) for v in value]
    return value


def _from_json(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_from_json(v) for v in value)
    return value


def format_value(value: Any) -> str:
    return json.dumps(_to_json(value), separators=(",", ":"), ensure_ascii=False)


def parse_value(text: str) -> Any:
    return _from_json(json.loads(text))


def format_op(op: OperationRecord) -> str:
    return f"{op.kind}({','.join(format_value(a) for a in op.args)})"


def parse_op_text(text: str) -> tuple:
    """``kind(args)`` -> ``(kind, args)``."""
    m = _OP_RE.match(text)
    if not m:
        raise ValueError(f"not an operation: {text!r}")
    kind, inner = m.groups()
    try:
        args = parse_value(f"[{inner}]") if inner.strip() else ()
    except json.JSONDecodeError as exc:
        raise ValueError(f"bad arguments in {text!r}: {exc.msg}") from None
    return kind, tuple(args)


def format_result(result: ApplyResult) -> str:
    if result.status is Status.NACK:
        return "NACK"
    return f"ACK({format_value(result.value)})"


def parse_result(text: str) -> ApplyResult:
    text = text.strip()
    if text == "NACK":
        return ApplyResult.nack()
    if text.startswith("ACK(") and text.endswith(")"):
        return ApplyResult.ack(parse_value(text[4:-1]))
    raise ValueError(f"not a result: {text!r}")


def format_event(e: HistoryEvent) -> str:
    if e.kind is EventKind.INVOKE:
        body = format_op(e.payload)
    else:
        body = format_result(e.payload)
    return f"{e.time} {format_uid(e.uid)} {e.issuer} {e.kind.value} {body}"


def dumps(trace: HistoryTrace) -> str:
    lines = [HEADER]
    for entry in trace.entries:
        lines.append(entry.text if isinstance(entry, TraceNote) else format_event(entry))
    return "\n".join(lines) + "\n"


def loads(text: str) -> HistoryTrace:
    lines = text.splitlines()
    if not lines or lines[0].strip() != HEADER:
        raise TraceParseError(f"missing {HEADER} header", 1)
    entries: list = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            entries.append(TraceNote(line))
            continue
        parts = line.split(" ", 4)
        if len(parts) != 5:
            raise TraceParseError("expected 5 fields", lineno)
        time_s, uid_s, issuer_s, kind_s, body = parts
        try:
            time, uid, issuer = int(time_s), parse_uid(uid_s), int(issuer_s)
            kind = EventKind(kind_s)
        except ValueError as exc:
            raise TraceParseError(str(exc), lineno) from None
        try:
            if kind is EventKind.INVOKE:
                op_kind, args = parse_op_text(body)
                payload: Union[OperationRecord, ApplyResult] = OperationRecord(
                    op_kind, args, uid[0], uid[1]
                )
            else:
                payload = parse_result(body)
        except ValueError as exc:
            raise TraceParseError(str(exc), lineno) from None
        entries.append(HistoryEvent(time, uid, issuer, kind, payload))
    return HistoryTrace(entries)


def write_trace(trace: HistoryTrace, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(trace), encoding="utf-8")


def read_trace(path: Union[str, Path]) -> HistoryTrace:
    return loads(Path(path).read_text(encoding="utf-8"))

