"""Scripted Byzantine writer and reader strategies.

Adversaries are deterministic functions of their local observations, the
step counter and the scenario script; there is no hidden randomness, so
any run can be replayed from its seed and scenario alone.  Strategies
only ever touch registers their process legitimately owns, and forged
signatures never verify under another identity.

The scenario factories at the bottom assemble the named attack scripts:
the collaborating-reader construction that stabilizes a partial write,
its early-overwrite variant, the sub-threshold alternation attack and
the two-forger concurrent-quorum attack.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from . import protocol
from .core import Config, ProcessId, TaggedValue, WitnessEntry, WitnessSet, InformSet, WRITER
from .crypto import KeyRing, sign_entries
from .engine import RoundRobin, Scripted, Workload
from .registers import (
    DecodeError,
    Family,
    LocalOp,
    ReadOp,
    WriteOp,
    decode_value,
    encode_value,
    final_reg,
    init_reg,
    inform_reg,
    witness_reg,
)


# --- writer strategies -------------------------------------------------------

@dataclass(frozen=True)
class CorrectWriter:
    pass


@dataclass(frozen=True)
class SplitValue:
    """Write a different payload to different readers in one invocation."""

    assignment: tuple[tuple[int, bytes], ...]

    @classmethod
    def make(cls, assignment: dict[int, bytes]) -> "SplitValue":
        return cls(tuple(sorted(assignment.items())))


@dataclass(frozen=True)
class PartialQuorum:
    """Write the pending value to a subset of init registers only.

    ``targets`` holds one reader set per invocation (cycled); a repeated
    payload keeps its original counter so the value accumulates across
    invocations.
    """

    targets: tuple[frozenset[int], ...]

    @classmethod
    def make(cls, *target_sets) -> "PartialQuorum":
        return cls(tuple(frozenset(s) for s in target_sets))


@dataclass(frozen=True)
class MultiValueBurst:
    """Write several distinct values to every reader within one invocation."""

    values: tuple[bytes, ...]


@dataclass(frozen=True)
class OverwriteEarly:
    """Broadcast each value, idle briefly, and let the next invocation
    overwrite it before inform sets can form."""

    delay: int = 2


@dataclass(frozen=True)
class StaleCounter:
    """Reuse one fixed counter value for every write."""

    k: int = 1


@dataclass(frozen=True)
class ScriptedWriter:
    """Literal per-invocation register scripts: each invocation is a tuple
    of (reader index, TaggedValue) writes and integer idle-step counts."""

    scripts: tuple[tuple, ...]


# --- reader strategies -------------------------------------------------------

@dataclass(frozen=True)
class CorrectReader:
    pass


@dataclass(frozen=True)
class Silent:
    pass


@dataclass(frozen=True)
class FakeWitnessStamp:
    offset: int = 10


@dataclass(frozen=True)
class OutOfOrderWitness:
    pass


@dataclass(frozen=True)
class ForgeInformSet:
    pass


@dataclass(frozen=True)
class Equivocate:
    """Send per-peer payload variants in witness broadcasts."""

    values: tuple[tuple[int, bytes], ...]

    @classmethod
    def make(cls, values: dict[int, bytes]) -> "Equivocate":
        return cls(tuple(sorted(values.items())))


@dataclass(frozen=True)
class CollaborateStabilize:
    pass


@dataclass(frozen=True)
class AlternationDriver:
    """Alternate inflated witness stamps between two values (n <= 3t attack)."""

    value_a: TaggedValue
    value_b: TaggedValue
    period: int = 150
    cycles: int = 6
    initial_delay: int = 60


@dataclass(frozen=True)
class QuorumForger:
    """One half of a forged-concurrent-quorum pair (n <= 2t attack).

    Signs witness sets for both values, swaps signatures with the partner
    through its own inform register, then publishes its lead value's
    inform set across its final row.
    """

    partner: int
    lead_value: TaggedValue
    lead_stamps: tuple[tuple[int, int], ...]
    other_value: TaggedValue
    other_stamps: tuple[tuple[int, int], ...]


@dataclass
class StrategyAssignment:
    writer: object = field(default_factory=CorrectWriter)
    readers: dict[int, object] = field(default_factory=dict)

    def reader_strategy(self, i: int):
        return self.readers.get(i, CorrectReader())

    def byzantine_readers(self) -> frozenset[int]:
        return frozenset(
            i for i, s in self.readers.items() if not isinstance(s, CorrectReader)
        )


# --- Byzantine writer machine -------------------------------------------------

class ByzWriterMachine(protocol.ProcessMachine):
    """Executes one strategy-dictated op script per high-level write.

    Never blocks on acks: the invocation responds as soon as its script
    drains.
    """

    def __init__(self, cfg: Config, ring: KeyRing, strategy, writes):
        self.cfg = cfg
        self.ring = ring
        self.pid = WRITER
        self.strategy = strategy
        self.writes = [bytes(w) for w in writes]
        self.widx = 0
        self.c = 0
        self.value_k: dict[bytes, int] = {}
        self.invocation = 0
        self.script: list = []
        self.hli_value: TaggedValue | None = None
        self.started = False
        if self.widx < len(self.writes):
            self._build_script()

    def _broadcast(self, kv: TaggedValue) -> list:
        data = encode_value(Family.INIT, kv)
        return [WriteOp(init_reg(i), data) for i in self.cfg.reader_indices()]

    def _build_script(self):
        payload = self.writes[self.widx]
        s = self.strategy
        ops: list = []
        hli = None
        if isinstance(s, SplitValue):
            self.c += 1
            for i, p in s.assignment:
                ops.append(
                    WriteOp(init_reg(i), encode_value(Family.INIT, TaggedValue(self.c, p)))
                )
        elif isinstance(s, PartialQuorum):
            if payload not in self.value_k:
                self.c += 1
                self.value_k[payload] = self.c
            kv = TaggedValue(self.value_k[payload], payload)
            hli = kv
            targets = s.targets[self.invocation % len(s.targets)]
            data = encode_value(Family.INIT, kv)
            ops = [WriteOp(init_reg(i), data) for i in sorted(targets)]
        elif isinstance(s, MultiValueBurst):
            for v in s.values:
                self.c += 1
                ops.extend(self._broadcast(TaggedValue(self.c, v)))
        elif isinstance(s, OverwriteEarly):
            self.c += 1
            kv = TaggedValue(self.c, payload)
            hli = kv
            ops = self._broadcast(kv) + [LocalOp("overwrite-delay")] * s.delay
        elif isinstance(s, StaleCounter):
            kv = TaggedValue(s.k, payload)
            hli = kv
            ops = self._broadcast(kv)
        elif isinstance(s, ScriptedWriter):
            for item in s.scripts[self.invocation % len(s.scripts)]:
                if isinstance(item, int):
                    ops.extend([LocalOp("scripted-idle")] * item)
                else:
                    i, kv = item
                    ops.append(WriteOp(init_reg(i), encode_value(Family.INIT, kv)))
        else:
            raise TypeError(f"unknown writer strategy {s!r}")
        self.script = ops
        self.hli_value = hli
        self.started = False

    def enabled(self, bank) -> bool:
        return bool(self.script) or self.widx < len(self.writes)

    def done(self) -> bool:
        return not self.script and self.widx >= len(self.writes)

    def next_op(self, bank):
        return self.script[0]

    def apply(self, bank, op, result, recorder):
        if not self.started:
            recorder.invoke(self.pid, "write", self.hli_value)
            self.started = True
        self.script.pop(0)
        if not self.script:
            recorder.response(self.pid, "write", self.hli_value)
            self.widx += 1
            self.invocation += 1
            if self.widx < len(self.writes):
                self._build_script()

    def state_key(self, bank=None):
        return (
            "bw",
            self.widx,
            self.c,
            tuple(sorted(self.value_k.items())),
            self.invocation,
            tuple(self.script),
            self.started,
        )

    def clone(self):
        twin = copy.copy(self)
        twin.value_k = dict(self.value_k)
        twin.script = list(self.script)
        return twin


# --- reader strategy machines ---------------------------------------------

class SilentReader(protocol.ProcessMachine):
    """Takes steps forever but never touches a register."""

    def __init__(self, index: int):
        self.pid = ProcessId.reader(index)

    def enabled(self, bank):
        return True

    def done(self):
        return True

    def next_op(self, bank):
        return LocalOp("silent")

    def apply(self, bank, op, result, recorder):
        pass

    def state_key(self, bank=None):
        return ("silent", self.pid.index)


class FakeStampReader(protocol.ReaderMachine):
    """Correct behavior, but every witness stamp jumps by 1 + offset."""

    def __init__(self, cfg, ring, u0, index, offset: int):
        super().__init__(cfg, ring, u0, index)
        self.offset = offset

    def _stamp_bump(self):
        return 1 + self.offset

    def state_key(self, bank=None):
        return super().state_key(bank) + ("fake", self.offset)


class OutOfOrderReader(protocol.ReaderMachine):
    """Publishes a regressed stamp on every other witnessing event."""

    def _entry_for_peer(self, peer, entry):
        if entry.s % 2 == 1:
            return WitnessEntry(entry.value, max(0, entry.s - 2), entry.p)
        return entry

    def state_key(self, bank=None):
        return super().state_key(bank) + ("outoforder",)


class EquivocateReader(protocol.ReaderMachine):
    """Sends different payloads to different peers in witness broadcasts."""

    def __init__(self, cfg, ring, u0, index, values: dict[int, bytes]):
        super().__init__(cfg, ring, u0, index)
        self.per_peer = dict(values)

    def _entry_for_peer(self, peer, entry):
        payload = self.per_peer.get(peer)
        if payload is None:
            return entry
        return WitnessEntry(TaggedValue(entry.value.k, payload), entry.s, entry.p)

    def state_key(self, bank=None):
        return super().state_key(bank) + ("equivocate", tuple(sorted(self.per_peer.items())))


class CollaborateReader(protocol.ReaderMachine):
    """Adopts a peer-witnessed value as though it had been written to its
    own init register, then behaves correctly for it.

    The candidate comes from the lowest-index peer whose current entry
    carries a value this reader has not taken up yet (one of the many
    realizations the attack allows).
    """

    def __init__(self, cfg, ring, u0, index):
        super().__init__(cfg, ring, u0, index)
        self._candidate: TaggedValue | None = None

    def _after_collect(self):
        if self._candidate is not None:
            return
        for src in sorted(self.st.t_witness):
            if src == self.index:
                continue
            e = self.st.t_witness[src]
            if e.s > 0 and e.value != self.st.last_init:
                self._candidate = e.value
                return

    def _adopt_foreign_value(self):
        v = self._candidate
        self._candidate = None
        return v

    def state_key(self, bank=None):
        return super().state_key(bank) + ("collab", self._candidate)


class ForgeInformSetReader(protocol.ProcessMachine):
    """Cycles forged witness sets and inform sets whose member signatures
    claim other identities and therefore never verify."""

    def __init__(self, cfg: Config, index: int):
        self.cfg = cfg
        self.pid = ProcessId.reader(index)
        self.index = index
        self.cycle = 0
        self.queue: list = []

    def _forged(self) -> tuple[bytes, bytes]:
        value = TaggedValue(7, b"forged-%d" % self.cycle)
        entries = frozenset(
            WitnessEntry(value, 1000 + self.cycle, q)
            for q in list(self.cfg.reader_indices())[: self.cfg.quorum]
        )
        members = frozenset(
            WitnessSet(entries, signer=q, signature=b"not-a-signature-%d" % q)
            for q in list(self.cfg.reader_indices())[: self.cfg.quorum]
        )
        wset_bytes = encode_value(Family.INFORM, next(iter(members)))
        iset_bytes = encode_value(Family.FINAL, InformSet(members))
        return wset_bytes, iset_bytes

    def enabled(self, bank):
        return True

    def done(self):
        return True

    def next_op(self, bank):
        if not self.queue:
            wset_bytes, iset_bytes = self._forged()
            self.queue = (
                [WriteOp(inform_reg(self.index, i), wset_bytes) for i in self.cfg.reader_indices()]
                + [WriteOp(final_reg(self.index, i), iset_bytes) for i in self.cfg.reader_indices()]
                + [LocalOp("forge-pause")]
            )
        return self.queue[0]

    def apply(self, bank, op, result, recorder):
        self.queue.pop(0)
        if not self.queue:
            self.cycle += 1

    def state_key(self, bank=None):
        return ("forge", self.index, self.cycle, len(self.queue))


class AlternationReader(protocol.ProcessMachine):
    """Drives the n <= 3t alternation: pushes strictly increasing witness
    stamps for two values in turn, with no register write ever reaching a
    correct reader's init register in between."""

    def __init__(self, cfg: Config, index: int, spec: AlternationDriver):
        self.cfg = cfg
        self.pid = ProcessId.reader(index)
        self.index = index
        self.spec = spec
        self.j = 0
        self.wait = spec.initial_delay
        self.queue: list = []

    def enabled(self, bank):
        return True

    def done(self):
        return True

    def next_op(self, bank):
        if self.queue:
            return self.queue[0]
        return LocalOp("alternation-wait")

    def apply(self, bank, op, result, recorder):
        if self.queue:
            self.queue.pop(0)
            return
        if self.j >= self.spec.cycles:
            return
        if self.wait > 0:
            self.wait -= 1
            return
        value = self.spec.value_a if self.j % 2 == 0 else self.spec.value_b
        entry = WitnessEntry(value, self.j + 1, self.index)
        data = encode_value(Family.WITNESS, entry)
        self.queue = [
            WriteOp(witness_reg(self.index, i), data) for i in self.cfg.reader_indices()
        ]
        self.j += 1
        self.wait = self.spec.period

    def state_key(self, bank=None):
        return ("alternation", self.index, self.j, self.wait, len(self.queue))


class QuorumForgerReader(protocol.ProcessMachine):
    """One of two sub-threshold forgers fabricating concurrent quorums."""

    SEND, POLL, PUBLISH, IDLE = range(4)

    def __init__(self, cfg: Config, ring: KeyRing, index: int, spec: QuorumForger):
        self.cfg = cfg
        self.ring = ring
        self.pid = ProcessId.reader(index)
        self.index = index
        self.spec = spec
        self.lead_entries = frozenset(
            WitnessEntry(spec.lead_value, s, q) for q, s in spec.lead_stamps
        )
        self.other_entries = frozenset(
            WitnessEntry(spec.other_value, s, q) for q, s in spec.other_stamps
        )
        self.phase = self.SEND
        self.fi = 1
        self.partner_member: WitnessSet | None = None

    def enabled(self, bank):
        return True

    def done(self):
        return True

    def next_op(self, bank):
        if self.phase == self.SEND:
            wset = sign_entries(self.ring, self.index, self.other_entries)
            return WriteOp(
                inform_reg(self.index, self.spec.partner),
                encode_value(Family.INFORM, wset),
            )
        if self.phase == self.POLL:
            return ReadOp(inform_reg(self.spec.partner, self.index))
        if self.phase == self.PUBLISH:
            own = sign_entries(self.ring, self.index, self.lead_entries)
            iset = InformSet(frozenset({own, self.partner_member}))
            return WriteOp(
                final_reg(self.index, self.fi), encode_value(Family.FINAL, iset)
            )
        return LocalOp("forger-idle")

    def apply(self, bank, op, result, recorder):
        if self.phase == self.SEND:
            self.phase = self.POLL
        elif self.phase == self.POLL:
            try:
                wset = decode_value(Family.INFORM, result)
            except DecodeError:
                return
            if wset.signer == self.spec.partner and wset.entries == self.lead_entries:
                self.partner_member = wset
                self.phase = self.PUBLISH
                self.fi = 1
        elif self.phase == self.PUBLISH:
            self.fi += 1
            if self.fi > self.cfg.n:
                self.phase = self.IDLE

    def state_key(self, bank=None):
        return ("forger", self.index, self.phase, self.fi, self.partner_member)


# --- machine assembly --------------------------------------------------------

def build_machines(
    cfg: Config,
    strategies: StrategyAssignment,
    workload: Workload,
    ring: KeyRing,
    u0: bytes,
) -> dict[ProcessId, protocol.ProcessMachine]:
    machines: dict[ProcessId, protocol.ProcessMachine] = {}
    ws = strategies.writer
    if isinstance(ws, CorrectWriter):
        machines[WRITER] = protocol.WriterMachine(cfg, ring, workload.writes)
    else:
        machines[WRITER] = ByzWriterMachine(cfg, ring, ws, workload.writes)
    for i in cfg.reader_indices():
        strat = strategies.reader_strategy(i)
        reads = workload.reads_for(i)
        gap = workload.read_gap
        pid = ProcessId.reader(i)
        if isinstance(strat, CorrectReader):
            machines[pid] = protocol.ReaderMachine(cfg, ring, u0, i, reads, gap)
        elif isinstance(strat, Silent):
            machines[pid] = SilentReader(i)
        elif isinstance(strat, FakeWitnessStamp):
            machines[pid] = FakeStampReader(cfg, ring, u0, i, strat.offset)
        elif isinstance(strat, OutOfOrderWitness):
            machines[pid] = OutOfOrderReader(cfg, ring, u0, i)
        elif isinstance(strat, Equivocate):
            machines[pid] = EquivocateReader(cfg, ring, u0, i, dict(strat.values))
        elif isinstance(strat, ForgeInformSet):
            machines[pid] = ForgeInformSetReader(cfg, i)
        elif isinstance(strat, CollaborateStabilize):
            machines[pid] = CollaborateReader(cfg, ring, u0, i)
        elif isinstance(strat, AlternationDriver):
            machines[pid] = AlternationReader(cfg, i, strat)
        elif isinstance(strat, QuorumForger):
            machines[pid] = QuorumForgerReader(cfg, ring, i, strat)
        else:
            raise TypeError(f"unknown reader strategy {strat!r}")
    return machines


def byz_writer_step(machine, bank, recorder) -> None:
    """Drive one strategy-dictated writer step outside the engine."""
    _drive_one(machine, bank, recorder)


def byz_reader_step(machine, bank, recorder) -> None:
    """Drive one strategy-dictated reader step outside the engine."""
    _drive_one(machine, bank, recorder)


def _drive_one(machine, bank, recorder) -> None:
    op = machine.next_op(bank)
    if isinstance(op, ReadOp):
        result = bank.read(op.reg, machine.pid)
    elif isinstance(op, WriteOp):
        bank.write(op.reg, op.value, machine.pid)
        result = None
    else:
        result = None
    machine.apply(bank, op, result, recorder)


# --- scripted scenarios --------------------------------------------------------

@dataclass
class ScriptedScenario:
    """A fully pinned attack script: config, strategies, workload and
    schedule, plus the outcome it is expected to produce."""

    name: str
    cfg: Config
    u0: bytes
    strategies: StrategyAssignment
    workload: Workload
    schedule: object
    step_limit: int
    settle_steps: int = 0
    expected_status: str = "completed"
    expected_violations: tuple[str, ...] = ()
    notes: str = ""


def _pseudo_correct_parts(cfg: Config):
    """Shared shape of the partial-write scripts: the value goes to the
    first n-t readers across two invocations; the highest-index reader
    collaborates."""
    if cfg.n <= 2 * cfg.t:
        raise ValueError("the collaborating stabilization needs n > 2t")
    x = TaggedValue(1, b"x")
    targets = list(cfg.reader_indices())[: cfg.quorum]
    first, last = targets[:-1], targets[-1:]
    scripts = (
        tuple((i, x) for i in first),
        tuple((i, x) for i in last),
    )
    collaborator = cfg.n
    readers = {collaborator: CollaborateStabilize()}
    reading = {i: 2 for i in cfg.reader_indices() if i != collaborator}
    return x, scripts, readers, reading


def scenario_pseudo_correct(cfg: Config | None = None) -> ScriptedScenario:
    """A value written to only n-t init registers, split across two writes,
    stabilizes with a collaborating reader and is returned by a correct read."""
    cfg = cfg or Config(n=4, t=1, writer_byzantine=True)
    x, scripts, readers, reading = _pseudo_correct_parts(cfg)
    strategies = StrategyAssignment(
        writer=ScriptedWriter(scripts=scripts), readers=readers
    )
    workload = Workload.make(writes=[b"x", b"x"], reads=reading, read_gap=3)
    return ScriptedScenario(
        name="pseudo_correct_n4t1",
        cfg=cfg,
        u0=b"init",
        strategies=strategies,
        workload=workload,
        schedule=RoundRobin(),
        step_limit=20000,
        settle_steps=600,
        expected_status="completed",
        notes="partial write stabilized via collaborator; expect a pseudo-correct return of x",
    )


def scenario_pseudo_correct_overwrite(cfg: Config | None = None) -> ScriptedScenario:
    """Same partial write, but overwritten before any inform set can form:
    the partial value must never stabilize nor be returned."""
    cfg = cfg or Config(n=4, t=1, writer_byzantine=True)
    x, scripts, readers, reading = _pseudo_correct_parts(cfg)
    y = TaggedValue(2, b"y")
    overwrite = tuple((i, y) for i in cfg.reader_indices())
    scripts = scripts + (overwrite,)
    strategies = StrategyAssignment(
        writer=ScriptedWriter(scripts=scripts), readers=readers
    )
    workload = Workload.make(writes=[b"x", b"x", b"y"], reads=reading, read_gap=3)
    # every scripted register write lands before any reader steps
    writer_ops = sum(len(s) for s in scripts)
    schedule = Scripted(steps=("w",) * writer_ops, then="round_robin")
    return ScriptedScenario(
        name="pseudo_correct_overwrite_n4t1",
        cfg=cfg,
        u0=b"init",
        strategies=strategies,
        workload=workload,
        schedule=schedule,
        step_limit=20000,
        settle_steps=600,
        expected_status="completed",
        notes="early overwrite: x must never stabilize or be returned",
    )


def scenario_alternation() -> ScriptedScenario:
    """n=3, t=1: two values, each on n-t init registers; Byzantine stamps
    alone drive an unbounded alternation of stabilized returns."""
    cfg = Config(n=3, t=1, writer_byzantine=True)
    a = TaggedValue(1, b"va")
    b = TaggedValue(2, b"vb")
    writer = ScriptedWriter(
        scripts=(
            ((1, a), (3, a)),
            ((2, b), (3, b)),
        )
    )
    strategies = StrategyAssignment(
        writer=writer,
        readers={
            3: AlternationDriver(
                value_a=a, value_b=b, period=100, cycles=12, initial_delay=60
            )
        },
    )
    workload = Workload.make(writes=[b"va", b"vb"], reads={1: 14, 2: 14}, read_gap=2)
    return ScriptedScenario(
        name="alternation_n3t1",
        cfg=cfg,
        u0=b"init",
        strategies=strategies,
        workload=workload,
        schedule=RoundRobin(),
        step_limit=60000,
        settle_steps=1500,
        expected_status="completed",
        # fake later writes also break view consistency and the common read
        # order once the alternation swings back
        expected_violations=(
            "genuine_advance",
            "view_consistency",
            "total_ordering_reads",
        ),
        notes="alternating stabilizations driven solely by Byzantine stamps",
    )


def scenario_forged_quorum() -> ScriptedScenario:
    """n=4, t=2: two Byzantine readers fabricate validly signed quorums for
    two values with crossing stamps, yielding concurrent stabilized sets."""
    cfg = Config(n=4, t=2, writer_byzantine=False)
    a = TaggedValue(1, b"qa")
    b = TaggedValue(2, b"qb")
    stamps_a = ((3, 2), (4, 1))
    stamps_b = ((3, 1), (4, 2))
    strategies = StrategyAssignment(
        readers={
            3: QuorumForger(
                partner=4,
                lead_value=a,
                lead_stamps=stamps_a,
                other_value=b,
                other_stamps=stamps_b,
            ),
            4: QuorumForger(
                partner=3,
                lead_value=b,
                lead_stamps=stamps_b,
                other_value=a,
                other_stamps=stamps_a,
            ),
        }
    )
    workload = Workload.make(writes=[], reads={1: 2, 2: 2}, read_gap=2)
    return ScriptedScenario(
        name="forged_quorum_n4t2",
        cfg=cfg,
        u0=b"init",
        strategies=strategies,
        workload=workload,
        schedule=RoundRobin(),
        step_limit=20000,
        settle_steps=0,
        expected_status="protocol_violation",
        # the fabricated quorums also stabilize values no init register ever
        # held, which is the quorum-formation guarantee n>2t buys
        expected_violations=("total_order", "stabilized_classification"),
        notes="concurrent stabilized witness sets below the n>2t threshold",
    )


SCENARIO_SCRIPTS = {
    "pseudo_correct": scenario_pseudo_correct,
    "pseudo_correct_overwrite": scenario_pseudo_correct_overwrite,
    "alternation_n3t1": scenario_alternation,
    "forged_quorum_n4t2": scenario_forged_quorum,
}
