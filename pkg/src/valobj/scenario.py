"""Scenario files: a ``valobj-v1`` header line followed by a YAML mapping.

    valobj-v1
    impl: regular            # regular | total | consensus
    spec: punching:scale=2
    n: 3
    f: 1
    backend: oracle          # oracle | replicated (regular only)
    workload:
      1:
        - punch-in(9, 1)
        - punch-out(1)
    proposals: [a, b, c]     # consensus only
    schedule:
      seed: 7
      crash: [2@5]
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import yaml

from .core import ConfigurationError
from .kernel import Schedule, parse_crash
from .sim import Scenario, number_workload
from .traceio import HEADER, TraceParseError, parse_op_text

_KEYS = {"impl", "spec", "n", "f", "backend", "n_replicas", "workload", "proposals", "depth", "schedule"}


def _line(node: yaml.Node) -> int:
    # +2: one for 1-based numbering, one for the header line
    return node.start_mark.line + 2


def _scalar(node: yaml.Node, what: str) -> Any:
    if not isinstance(node, yaml.ScalarNode):
        raise TraceParseError(f"{what} must be a single value", _line(node))
    return yaml.safe_load(yaml.serialize(node))


def _int(node: yaml.Node, what: str) -> int:
    value = _scalar(node, what)
    if not isinstance(value, int) or isinstance(value, bool):
        raise TraceParseError(f"{what} must be an integer", _line(node))
    return value


def _items(node: yaml.Node, what: str) -> List[yaml.Node]:
    if isinstance(node, yaml.ScalarNode) and node.value in ("", "~", "null"):
        return []
    if not isinstance(node, yaml.SequenceNode):
        raise TraceParseError(f"{what} must be a list", _line(node))
    return node.value


def _workload(node: yaml.Node) -> Dict[int, List[Tuple[str, tuple]]]:
    if not isinstance(node, yaml.MappingNode):
        raise TraceParseError("workload must map process ids to operation lists", _line(node))
    raw: Dict[int, List[Tuple[str, tuple]]] = {}
    for key, value in node.value:
        pid = _int(key, "process id")
        ops = []
        for item in _items(value, f"workload of process {pid}"):
            text = str(_scalar(item, "operation"))
            try:
                ops.append(parse_op_text(text))
            except ValueError as exc:
                raise TraceParseError(str(exc), _line(item)) from None
        raw[pid] = ops
    return raw


def _schedule(node: yaml.Node) -> Schedule:
    if not isinstance(node, yaml.MappingNode):
        raise TraceParseError("schedule must be a mapping", _line(node))
    fields: Dict[str, Any] = {}
    for key, value in node.value:
        name = _scalar(key, "schedule key")
        if name == "seed":
            fields["seed"] = _int(value, "seed")
        elif name == "exhaustive":
            fields["exhaustive"] = bool(_scalar(value, "exhaustive"))
        elif name == "budget":
            fields["budget"] = _int(value, "budget")
        elif name == "crash":
            plan = []
            for item in _items(value, "crash"):
                try:
                    plan.append(parse_crash(str(_scalar(item, "crash point"))))
                except (ValueError, ConfigurationError) as exc:
                    raise TraceParseError(str(exc), _line(item)) from None
            fields["crash_plan"] = tuple(plan)
        else:
            raise TraceParseError(f"unknown schedule key {name!r}", _line(key))
    return Schedule(**fields)


def loads(text: str) -> Tuple[Scenario, Schedule]:
    lines = text.split("\n", 1)
    if not lines or lines[0].strip() != HEADER:
        raise TraceParseError(f"missing {HEADER} header", 1)
    body = lines[1] if len(lines) > 1 else ""
    try:
        root = yaml.compose(body)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise TraceParseError(exc.problem or "malformed YAML", (mark.line + 2) if mark else 0) from None
    if not isinstance(root, yaml.MappingNode):
        raise TraceParseError("scenario body must be a mapping", 2 if root is None else _line(root))

    fields: Dict[str, Any] = {}
    schedule = Schedule()
    first_line = {}
    for key, value in root.value:
        name = _scalar(key, "key")
        first_line[name] = _line(key)
        if name not in _KEYS:
            raise TraceParseError(f"unknown key {name!r}", _line(key))
        if name == "workload":
            fields["workload"] = number_workload(_workload(value))
        elif name == "schedule":
            schedule = _schedule(value)
        elif name == "proposals":
            fields["proposals"] = tuple(str(_scalar(v, "proposal")) for v in _items(value, "proposals"))
        elif name in ("n", "f", "n_replicas", "depth"):
            fields[name] = _int(value, name)
        else:
            fields[name] = str(_scalar(value, name))
    for required in ("impl", "spec"):
        if required not in fields:
            raise TraceParseError(f"missing required key {required!r}", 2)
    try:
        scenario = Scenario(**fields)
    except ConfigurationError as exc:
        msg = str(exc)
        key = "impl" if "implementation" in msg else "n" if msg.startswith("need n") else "workload"
        raise TraceParseError(msg, first_line.get(key, 2)) from None
    return scenario, schedule


def read_scenario(path: Union[str, Path]) -> Tuple[Scenario, Schedule]:
    return loads(Path(path).read_text(encoding="utf-8"))
