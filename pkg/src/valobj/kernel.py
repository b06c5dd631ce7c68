"""Deterministic discrete-event kernel.

Protocol code runs as generator tasks. The code between two ``yield``s is
one atomic step. A task yields ``None`` to stay runnable, or a zero-argument
predicate to block until the predicate holds. One step runs per tick; the
scheduler (seeded RNG or exhaustive enumeration) picks which runnable task
takes it.

Tasks have an owner process. When the owner crashes its tasks stop for good.
Ownerless tasks belong to reliable infrastructure and never crash. Daemon
tasks (message deliveries, delivery handlers, object tasks) neither count
toward process step indices nor keep a run alive.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Generator, Iterable, List, Optional, Sequence, Tuple

from .core import ConfigurationError, HistoryTrace

Step = Generator[Optional[Callable[[], bool]], None, Any]


class Task:
    __slots__ = ("tid", "name", "gen", "owner", "daemon", "wait", "done", "steps", "obs", "result")

    def __init__(self, tid: int, name: str, gen: Step, owner: Optional[int], daemon: bool) -> None:
        self.tid = tid
        self.name = name
        self.gen = gen
        self.owner = owner
        self.daemon = daemon
        self.wait: Optional[Callable[[], bool]] = None
        self.done = False
        self.steps = 0
        self.obs: list = []
        self.result: Any = None

    def __repr__(self) -> str:
        state = "done" if self.done else ("blocked" if self.wait else "ready")
        return f"<Task {self.name} {state} steps={self.steps}>"


class Kernel:
    def __init__(self, crash_plan: Iterable[Tuple[int, int]] = (), max_crashes: int = 0) -> None:
        self.now = 0
        self.tasks: List[Task] = []
        self.crashed: set = set()
        self.crash_log: List[Tuple[int, int]] = []
        self.crash_plan: Dict[int, int] = {}
        for pid, step in crash_plan:
            if pid in self.crash_plan:
                raise ConfigurationError(f"process {pid} crashes twice in the plan")
            self.crash_plan[pid] = step
        self.max_crashes = max_crashes
        self.proc_steps: Counter = Counter()
        self.current: Optional[Task] = None
        self.trace = HistoryTrace()
        self.components: list = []

    # -- setup -------------------------------------------------------------

    def spawn(
        self,
        gen: Step,
        name: str,
        owner: Optional[int] = None,
        daemon: bool = False,
        wait: Optional[Callable[[], bool]] = None,
    ) -> Task:
        task = Task(len(self.tasks), name, gen, owner, daemon)
        task.wait = wait
        self.tasks.append(task)
        return task

    def register(self, component: Any) -> None:
        """Add shared state that contributes to :meth:`fingerprint`."""
        self.components.append(component)

    def start(self) -> None:
        for pid in sorted(self.crash_plan):
            self._maybe_planned_crash(pid)

    # -- introspection -----------------------------------------------------

    def observe(self, value: Any) -> Any:
        """Record a value read from shared state by the running task."""
        if self.current is not None:
            self.current.obs.append(value)
        return value

    def note(self, text: str) -> None:
        self.trace.note(text)

    def alive(self, pid: Optional[int]) -> bool:
        return pid is None or pid not in self.crashed

    def runnable(self, task: Task) -> bool:
        if task.done or not self.alive(task.owner):
            return False
        return task.wait is None or bool(task.wait())

    def ready(self) -> List[Task]:
        return [t for t in self.tasks if self.runnable(t)]

    def busy_processes(self) -> List[int]:
        pids = {t.owner for t in self.tasks if not t.daemon and not t.done and t.owner is not None}
        return sorted(p for p in pids if p not in self.crashed)

    def options(self) -> list:
        opts: list = [("step", t) for t in self.ready()]
        if len(self.crash_log) < self.max_crashes and opts:
            opts += [("crash", pid) for pid in self.busy_processes()]
        return opts

    def stuck(self) -> List[str]:
        """Live protocol tasks that cannot finish."""
        return [t.name for t in self.tasks if not t.daemon and not t.done and self.alive(t.owner)]

    def fingerprint(self) -> tuple:
        keys = []
        for t in self.tasks:
            if not self.alive(t.owner) or (t.daemon and t.done):
                continue
            keys.append((t.name, t.done, t.steps, tuple(t.obs)))
        return (
            frozenset(Counter(keys).items()),
            frozenset(self.crashed),
            len(self.crash_log),
            tuple(c.fingerprint() for c in self.components),
        )

    # -- execution ---------------------------------------------------------

    def take(self, option: tuple) -> None:
        kind, arg = option
        if kind == "crash":
            self.crash(arg)
        else:
            self.step(arg)

    def step(self, task: Task) -> None:
        self.now += 1
        self.current = task
        task.wait = None
        try:
            task.wait = task.gen.send(None)
        except StopIteration as stop:
            task.done = True
            task.result = stop.value
        finally:
            self.current = None
        task.steps += 1
        if not task.daemon and task.owner is not None:
            self.proc_steps[task.owner] += 1
            self._maybe_planned_crash(task.owner)

    def crash(self, pid: int) -> None:
        if pid in self.crashed:
            return
        self.crashed.add(pid)
        self.crash_log.append((pid, self.proc_steps[pid]))

    def _maybe_planned_crash(self, pid: int) -> None:
        at = self.crash_plan.get(pid)
        if at is not None and self.proc_steps[pid] >= at:
            self.crash(pid)

    def run_random(self, rng: random.Random, max_steps: int = 1_000_000) -> None:
        self.start()
        for _ in range(max_steps):
            ready = self.ready()
            if not ready:
                return
            self.step(ready[rng.randrange(len(ready))])
        raise RuntimeError(f"run exceeded {max_steps} steps")

    def run_choices(self, choices: Sequence[int]) -> None:
        self.start()
        for c in choices:
            self.take(self.options()[c])


@dataclass(frozen=True)
class Schedule:
    """How to drive a run: a seed or exhaustive search, plus a crash plan."""

    seed: Optional[int] = 0
    exhaustive: bool = False
    budget: int = 100_000
    crash_plan: Tuple[Tuple[int, int], ...] = ()

    def check(self, n: int, f: int) -> None:
        if len(self.crash_plan) > f:
            raise ConfigurationError(f"crash plan has {len(self.crash_plan)} crashes, f={f}")
        for pid, step in self.crash_plan:
            if not 1 <= pid <= n or step < 0:
                raise ConfigurationError(f"bad crash point {pid}@{step}")

    @classmethod
    def seeded(cls, seed: int, n: int, f: int, horizon: int) -> "Schedule":
        """A seed plus a crash plan drawn from it: no crash half the time."""
        rng = random.Random(f"crash:{seed}")
        plan: list = []
        if f > 0 and rng.random() < 0.5:
            plan.append((rng.randint(1, n), rng.randint(0, max(horizon, 0))))
        return cls(seed=seed, crash_plan=tuple(plan))


def parse_crash(text: str) -> Tuple[int, int]:
    """``"2@5"`` (or ``"p2@5"``) -> ``(2, 5)``."""
    pid, at, step = text.strip().lstrip("p").partition("@")
    if not at:
        raise ConfigurationError(f"crash point {text!r} must look like p@step")
    return int(pid), int(step)


@dataclass
class Exploration:
    outcomes: list = field(default_factory=list)
    branches: int = 0
    pruned: int = 0
    complete: bool = True


def explore(
    build: Callable[[Kernel], Any],
    on_terminal: Callable[[Any, Kernel, Tuple[int, ...]], Any],
    max_crashes: int = 0,
    budget: int = 100_000,
    dedupe: bool = True,
) -> Exploration:
    """Enumerate every interleaving and crash placement by replayed DFS.

    ``build`` sets up a fresh kernel and returns a context object;
    ``on_terminal`` is called for each maximal run and its result collected.
    With ``dedupe`` the search skips states already expanded, keyed by
    :meth:`Kernel.fingerprint`.
    """
    result = Exploration()
    seen: set = set()
    stack: List[Tuple[int, ...]] = [()]
    while stack:
        if result.branches >= budget:
            result.complete = False
            break
        prefix = stack.pop()
        kernel = Kernel(max_crashes=max_crashes)
        ctx = build(kernel)
        kernel.run_choices(prefix)
        path = list(prefix)
        while True:
            opts = kernel.options()
            if dedupe:
                fp = kernel.fingerprint()
                if fp in seen:
                    result.pruned += 1
                    break
                seen.add(fp)
            if not opts:
                result.branches += 1
                result.outcomes.append(on_terminal(ctx, kernel, tuple(path)))
                break
            for alt in range(len(opts) - 1, 0, -1):
                stack.append(tuple(path) + (alt,))
            kernel.take(opts[0])
            path.append(0)
    return result
