"""Deterministic step scheduler, execution runner and schedule enumerator.

A run interleaves one enabled process step at a time according to a
schedule source (seeded random, round robin, or a scripted step list).
Identical inputs produce byte-identical histories.  The enumerator
explores every distinct interleaving of a micro workload up to a depth
bound, pruning convergent states.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from . import crypto
from .core import Config, EqualStampsDifferentValue, ProcessId, TaggedValue
from .protocol import ConcurrentFinalSets, ProcessMachine
from .registers import (
    LocalOp,
    ReadOp,
    RegisterBank,
    TraceEvent,
    WriteOp,
    bank_init,
    export_trace,
)


class StepLimitExhausted(Exception):
    """The step budget ran out before the workload completed.

    Carries the partial history so liveness failures can still be
    inspected by the safety checks.
    """

    def __init__(self, history: "ExecutionHistory"):
        super().__init__(f"step limit hit after {history.steps} steps")
        self.history = history


class BoundTooLarge(Exception):
    """Enumeration bound above the configured explosion threshold."""


@dataclass(frozen=True)
class HliEvent:
    process: ProcessId
    kind: str  # "invoke" | "response"
    op: str  # "read" | "write"
    value: TaggedValue | None
    step: int


class HistoryRecorder:
    def __init__(self):
        self._node: tuple | None = None  # persistent cons-list of events
        self.step = 0

    @property
    def events(self) -> list[HliEvent]:
        out = []
        node = self._node
        while node is not None:
            out.append(node[1])
            node = node[0]
        out.reverse()
        return out

    def invoke(self, pid: ProcessId, op: str, value=None):
        self._node = (self._node, HliEvent(pid, "invoke", op, value, self.step))

    def response(self, pid: ProcessId, op: str, value=None):
        self._node = (self._node, HliEvent(pid, "response", op, value, self.step))

    def clone(self) -> "HistoryRecorder":
        twin = HistoryRecorder()
        twin._node = self._node
        twin.step = self.step
        return twin


@dataclass
class ExecutionHistory:
    """Recorded high-level events plus the full register-operation trace."""

    cfg: Config
    u0: bytes
    hli_events: list[HliEvent]
    trace: list[TraceEvent]
    status: str = "completed"  # completed | step_limit | protocol_violation
    violation: str | None = None
    steps: int = 0
    sched_log: list[ProcessId] = field(default_factory=list)
    scheme: str = "keyed"
    key_seed: int = 0

    def keyring(self) -> crypto.KeyRing:
        """The key ring this run signed with (derivable, so checkers never
        need it passed alongside)."""
        return crypto.make_keyring(self.cfg, self.scheme, self.key_seed)

    def export_records(self) -> Iterator[str]:
        meta = {
            "n": self.cfg.n,
            "t": self.cfg.t,
            "status": self.status,
            "steps": self.steps,
            "violation": self.violation,
        }
        yield json.dumps({"run": meta}, sort_keys=True)
        for ev in self.hli_events:
            yield json.dumps(
                {
                    "event": ev.kind,
                    "op": ev.op,
                    "process": str(ev.process),
                    "step": ev.step,
                    "value": None if ev.value is None else str(ev.value),
                },
                sort_keys=True,
            )
        yield from export_trace(self.trace)

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.export_records():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


@dataclass(frozen=True)
class Workload:
    """Per-process high-level operations: payloads the writer writes and
    read counts per reader."""

    writes: tuple[bytes, ...] = ()
    reads: tuple[tuple[int, int], ...] = ()  # (reader index, read count)
    read_gap: int = 0

    @classmethod
    def make(
        cls,
        writes: Sequence[bytes] = (),
        reads: Mapping[int, int] | None = None,
        read_gap: int = 0,
    ) -> "Workload":
        pairs = tuple(sorted((reads or {}).items()))
        return cls(tuple(bytes(w) for w in writes), pairs, read_gap)

    def reads_for(self, index: int) -> int:
        for i, count in self.reads:
            if i == index:
                return count
        return 0


@dataclass(frozen=True)
class SeededRandom:
    seed: int
    fair: bool = True


@dataclass(frozen=True)
class RoundRobin:
    pass


@dataclass(frozen=True)
class Scripted:
    steps: tuple[str, ...]  # process names, e.g. "w", "r3"
    then: str = "round_robin"  # fallback after the script: round_robin | stop


Schedule = SeededRandom | RoundRobin | Scripted


class _Chooser:
    def choose(self, enabled: list[ProcessId]) -> ProcessId | None:
        raise NotImplementedError


class _RandomChooser(_Chooser):
    def __init__(self, spec: SeededRandom):
        self.rng = random.Random(spec.seed)
        self.fair = spec.fair
        self.round: list[ProcessId] = []

    def choose(self, enabled):
        if not self.fair:
            return enabled[self.rng.randrange(len(enabled))]
        # shuffled rounds: every process enabled at round start is
        # scheduled once before the next round begins
        while True:
            if not self.round:
                self.round = list(enabled)
                self.rng.shuffle(self.round)
            pid = self.round.pop()
            if pid in enabled:
                return pid


class _RoundRobinChooser(_Chooser):
    def __init__(self):
        self.order: list[ProcessId] = []
        self.cursor = 0

    def choose(self, enabled):
        if not self.order:
            self.order = sorted(set(enabled), key=ProcessId.sort_key)
        else:
            for pid in enabled:
                if pid not in self.order:
                    self.order = sorted(set(self.order) | set(enabled), key=ProcessId.sort_key)
                    break
        for _ in range(len(self.order)):
            pid = self.order[self.cursor % len(self.order)]
            self.cursor += 1
            if pid in enabled:
                return pid
        return None


class _ScriptedChooser(_Chooser):
    def __init__(self, spec: Scripted):
        self.steps = list(spec.steps)
        self.pos = 0
        self.fallback = _RoundRobinChooser() if spec.then == "round_robin" else None

    def choose(self, enabled):
        by_name = {str(pid): pid for pid in enabled}
        while self.pos < len(self.steps):
            name = self.steps[self.pos]
            self.pos += 1
            if name in by_name:
                return by_name[name]
            # scripted process currently disabled: skip the entry
        if self.fallback is not None:
            return self.fallback.choose(enabled)
        return None


def make_chooser(schedule: Schedule) -> _Chooser:
    if isinstance(schedule, SeededRandom):
        return _RandomChooser(schedule)
    if isinstance(schedule, RoundRobin):
        return _RoundRobinChooser()
    if isinstance(schedule, Scripted):
        return _ScriptedChooser(schedule)
    raise TypeError(f"unknown schedule {schedule!r}")


class Simulation:
    """Sole owner of all mutable state during a run."""

    def __init__(
        self,
        cfg: Config,
        machines: dict[ProcessId, ProcessMachine],
        bank: RegisterBank,
        recorder: HistoryRecorder | None = None,
    ):
        self.cfg = cfg
        self.machines = machines
        self.bank = bank
        self.recorder = recorder or HistoryRecorder()
        self.order = sorted(machines, key=ProcessId.sort_key)
        self.steps = 0
        self.status: str | None = None
        self.violation: str | None = None
        self._sched_node: tuple | None = None
        self.scheme = "keyed"
        self.key_seed = 0

    @property
    def sched_log(self) -> list[ProcessId]:
        out = []
        node = self._sched_node
        while node is not None:
            out.append(node[1])
            node = node[0]
        out.reverse()
        return out

    def enabled_pids(self) -> list[ProcessId]:
        return [pid for pid in self.order if self.machines[pid].enabled(self.bank)]

    def workload_complete(self) -> bool:
        return all(m.done() for m in self.machines.values())

    def step_process(self, pid: ProcessId) -> None:
        machine = self.machines[pid]
        self.bank.current_step = self.steps
        self.recorder.step = self.steps
        self._sched_node = (self._sched_node, pid)
        op = machine.next_op(self.bank)
        if isinstance(op, ReadOp):
            result = self.bank.read(op.reg, pid)
        elif isinstance(op, WriteOp):
            self.bank.write(op.reg, op.value, pid)
            result = None
        elif isinstance(op, LocalOp):
            result = None
        else:
            raise TypeError(f"machine {pid} produced {op!r}")
        try:
            machine.apply(self.bank, op, result, self.recorder)
        except ConcurrentFinalSets as exc:
            self.status = "protocol_violation"
            self.violation = f"concurrent_final_sets at {pid}: {exc}"
        except EqualStampsDifferentValue as exc:
            self.status = "protocol_violation"
            self.violation = f"equal_stamps_different_value at {pid}: {exc}"
        self.steps += 1

    def history(self, status: str) -> ExecutionHistory:
        return ExecutionHistory(
            cfg=self.cfg,
            u0=self.bank.u0,
            hli_events=list(self.recorder.events),
            trace=list(self.bank.trace),
            status=status,
            violation=self.violation,
            steps=self.steps,
            sched_log=list(self.sched_log),
            scheme=self.scheme,
            key_seed=self.key_seed,
        )

    def clone(self) -> "Simulation":
        twin = Simulation.__new__(Simulation)
        twin.cfg = self.cfg
        twin.machines = {pid: m.clone() for pid, m in self.machines.items()}
        twin.bank = self.bank.clone()
        twin.recorder = self.recorder.clone()
        twin.order = self.order
        twin.steps = self.steps
        twin.status = self.status
        twin.violation = self.violation
        twin._sched_node = self._sched_node
        twin.scheme = self.scheme
        twin.key_seed = self.key_seed
        return twin

    def state_key(self):
        # step indices are deliberately excluded: two prefixes reaching the
        # same machine/bank/event state have identical futures
        return (
            tuple(self.machines[pid].state_key(self.bank) for pid in self.order),
            self.bank.cells_key(),
            tuple(
                (str(e.process), e.kind, e.op, e.value) for e in self.recorder.events
            ),
            self.status,
        )


def run(
    cfg: Config,
    strategies,
    workload: Workload,
    schedule: Schedule,
    step_limit: int,
    *,
    u0: bytes = b"init",
    scheme: str = "keyed",
    key_seed: int = 0,
    settle_steps: int = 0,
    raise_on_limit: bool = True,
) -> ExecutionHistory:
    """Execute one deterministic run and return its complete history.

    Raises StepLimitExhausted (carrying the partial history) when the
    workload does not complete within step_limit; pass
    raise_on_limit=False to get the partial history back instead.
    """
    from . import adversary  # machines are strategy-built; import cycle avoided

    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    ring = crypto.make_keyring(cfg, scheme, key_seed)
    bank = bank_init(cfg, u0, ring)
    machines = adversary.build_machines(cfg, strategies, workload, ring, u0)
    sim = Simulation(cfg, machines, bank)
    sim.scheme = scheme
    sim.key_seed = key_seed
    chooser = make_chooser(schedule)
    settle_left = settle_steps
    while sim.steps < step_limit:
        if sim.status is not None:
            break
        if sim.workload_complete():
            if settle_left <= 0:
                break
            settle_left -= 1
        enabled = sim.enabled_pids()
        if not enabled:
            break
        pid = chooser.choose(enabled)
        if pid is None:
            break
        sim.step_process(pid)
    if sim.status is not None:
        status = sim.status
    elif sim.workload_complete():
        status = "completed"
    else:
        status = "step_limit"
    history = sim.history(status)
    if status == "step_limit" and raise_on_limit:
        raise StepLimitExhausted(history)
    return history


MAX_ENUM_DEPTH = 500


def enumerate_schedules(
    cfg: Config,
    workload: Workload,
    depth_bound: int,
    *,
    strategies=None,
    u0: bytes = b"init",
    scheme: str = "keyed",
    key_seed: int = 0,
    node_cap: int = 400_000,
    prune: bool = True,
) -> Iterator[ExecutionHistory]:
    """Yield the history of every distinct interleaving that completes the
    workload within depth_bound steps.

    Convergent prefixes (identical machine, register and event state) are
    pruned by default; the unpruned mode exists to cross-validate the
    pruner on micro cases.  Intended for n <= 4 and one or two operations
    per process.
    """
    from . import adversary

    if depth_bound > MAX_ENUM_DEPTH:
        raise BoundTooLarge(f"depth_bound {depth_bound} > {MAX_ENUM_DEPTH}")
    if strategies is None:
        strategies = adversary.StrategyAssignment()
    ring = crypto.make_keyring(cfg, scheme, key_seed)
    bank = bank_init(cfg, u0, ring)
    machines = adversary.build_machines(cfg, strategies, workload, ring, u0)
    root = Simulation(cfg, machines, bank)
    root.scheme = scheme
    root.key_seed = key_seed
    seen: set = set()
    yielded: set = set()
    stack = [root]
    visited = 0
    while stack:
        sim = stack.pop()
        if prune:
            key = sim.state_key()
            if key in seen:
                continue
            seen.add(key)
        visited += 1
        if visited > node_cap:
            raise BoundTooLarge(f"explored more than {node_cap} states")
        if sim.status is not None or sim.workload_complete():
            status = sim.status or "completed"
            if status == "completed":
                if prune:
                    yield sim.history(status)
                else:
                    key = sim.state_key()
                    if key not in yielded:
                        yielded.add(key)
                        yield sim.history(status)
            continue
        if sim.steps >= depth_bound:
            continue
        enabled = sim.enabled_pids()
        # clone for all but one choice; the popped sim carries the last
        for pid in reversed(enabled[1:]):
            child = sim.clone()
            child.step_process(pid)
            stack.append(child)
        if enabled:
            sim.step_process(enabled[0])
            stack.append(sim)


def fairness_violations(history: ExecutionHistory, window: int) -> list[int]:
    """Steps at which some always-enabled reader went a full window without
    being scheduled (empty means the schedule was fair for readers)."""
    readers = {
        ProcessId.reader(i) for i in history.cfg.reader_indices()
    }
    last_seen = {pid: -1 for pid in readers}
    bad: list[int] = []
    for step, pid in enumerate(history.sched_log):
        if pid in last_seen:
            last_seen[pid] = step
        for other, seen_at in last_seen.items():
            if step - seen_at > window:
                bad.append(step)
                last_seen[other] = step  # report once per lapse
    return bad
