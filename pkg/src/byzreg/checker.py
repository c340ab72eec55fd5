"""Post-hoc verification of recorded runs.

Consumes a complete history and trace, detects which values stabilized
(reached a full final-register row with verified signatures), classifies
every written value, reconstructs the stabilization order and the full
timestamp chain, and verifies each correctness property.  Violations
carry a minimal witnessing description.

All functions are pure over the immutable run artifacts; nothing here is
checked online during a run.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

from . import crypto, registers
from .core import (
    CommonQuorumTooSmall,
    Config,
    EqualStampsDifferentValue,
    FullTimestamp,
    InformSet,
    InvalidInformSet,
    OrderVerdict,
    PartialTimestamp,
    ProcessId,
    TaggedValue,
    WitnessEntry,
    mapsto_compare,
    vec_compare,
    ws_of,
)
from .engine import ExecutionHistory, HliEvent
from .registers import DecodeError, Family, TraceEvent, decode_value, final_reg


class InvariantBroken(Exception):
    """The full-timestamp chain failed its strict-increase invariant."""


class NoLinearization(Exception):
    """The linearization construction hit a conflicting constraint.

    Unreachable when all prior checks pass; reaching it is a checker
    self-test failure.
    """


class Kind(Enum):
    CORRECT = "correct"
    POTENTIAL_PSEUDO_CORRECT = "potential_pseudo_correct"
    PSEUDO_CORRECT = "pseudo_correct"
    NEITHER = "neither"


@dataclass(frozen=True)
class StabilizationEvent:
    """A (value, witness core) pair that covered some process's final row."""

    value: TaggedValue
    inform_set: InformSet
    ws: frozenset[WitnessEntry]
    pt: PartialTimestamp
    step: int
    row_owner: int  # reader index whose row completed first

    def key(self):
        return (self.value, self.ws)


@dataclass
class ValueEvidence:
    init_registers: dict[int, list[int]] = field(default_factory=dict)
    byz_witnesses: set[int] = field(default_factory=set)
    hli_writes: list[int] = field(default_factory=list)


@dataclass
class WriteClassification:
    kinds: dict[TaggedValue, Kind]
    evidence: dict[TaggedValue, ValueEvidence]

    def kind_of(self, value: TaggedValue) -> Kind:
        return self.kinds.get(value, Kind.NEITHER)


@dataclass
class Verdict:
    status: str  # "pass" | "violation" | "skipped"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass(frozen=True)
class HliOp:
    process: ProcessId
    op: str  # "read" | "write"
    invoke_step: int
    response_step: int | None
    invoke_value: TaggedValue | None
    response_value: TaggedValue | None
    index: int  # position among this process's ops


def hli_ops(history: ExecutionHistory) -> list[HliOp]:
    """Pair invoke/response events into operations, per process."""
    open_ops: dict[ProcessId, HliEvent] = {}
    counters: dict[ProcessId, int] = {}
    ops: list[HliOp] = []
    for ev in history.hli_events:
        if ev.kind == "invoke":
            if ev.process in open_ops:
                raise ValueError(f"nested invoke at {ev.process}")
            open_ops[ev.process] = ev
        else:
            start = open_ops.pop(ev.process, None)
            if start is None:
                raise ValueError(f"response without invoke at {ev.process}")
            idx = counters.get(ev.process, 0)
            counters[ev.process] = idx + 1
            ops.append(
                HliOp(
                    process=ev.process,
                    op=ev.op,
                    invoke_step=start.step,
                    response_step=ev.step,
                    invoke_value=start.value,
                    response_value=ev.value,
                    index=idx,
                )
            )
    for pid, start in sorted(open_ops.items(), key=lambda kv: kv[0].sort_key()):
        idx = counters.get(pid, 0)
        counters[pid] = idx + 1
        ops.append(
            HliOp(
                process=pid,
                op=start.op,
                invoke_step=start.step,
                response_step=None,
                invoke_value=start.value,
                response_value=None,
                index=idx,
            )
        )
    return ops


def completed_reads(history: ExecutionHistory) -> list[HliOp]:
    return [
        o
        for o in hli_ops(history)
        if o.op == "read" and not o.process.is_writer and o.response_step is not None
    ]


def writer_writes(history: ExecutionHistory) -> list[HliOp]:
    return [o for o in hli_ops(history) if o.op == "write" and o.process.is_writer]


# --- stabilization detection -------------------------------------------------


def _scan_finals(
    trace: list[TraceEvent], cfg: Config, ring: crypto.KeyRing, u0: bytes
) -> tuple[list[StabilizationEvent], dict[int, list[tuple[int, StabilizationEvent]]]]:
    """Single pass over final-register writes.

    Returns the stabilization events in step order plus, per row owner,
    every validated final write (step, matching event or a fresh
    pseudo-event) for read attribution.
    """
    initial = registers.initial_inform_set(cfg, u0, ring)
    initial_ws = ws_of(initial, cfg)
    initial_value = TaggedValue(0, u0)

    # validation is a pure function of the cell bytes given one ring and
    # config, so the memo lives on the ring and survives across runs
    cache_attr = "_final_validation_cache"
    validated = getattr(ring, cache_attr, None)
    if validated is None:
        validated = {}
        object.__setattr__(ring, cache_attr, validated)

    def validate(data: bytes):
        key = (data, cfg)
        if key in validated:
            return validated[key]
        out = None
        try:
            iset = decode_value(Family.FINAL, data)
            core = ws_of(iset, cfg)
            if all(crypto.verify_witness_set(ring, m) for m in iset.members):
                value = next(iter(core)).value
                out = (value, core, iset)
        except (DecodeError, InvalidInformSet):
            out = None
        validated[key] = out
        return out

    initial_event = StabilizationEvent(
        value=initial_value,
        inform_set=initial,
        ws=initial_ws,
        pt=PartialTimestamp.from_mapping(cfg.n, {e.p: e.s for e in initial_ws}),
        step=0,
        row_owner=0,
    )
    key0 = initial_event.key()
    cells: dict = {}
    rows: dict[int, list] = {}
    for q in cfg.reader_indices():
        rows[q] = [final_reg(q, j) for j in cfg.reader_indices()]
        for reg in rows[q]:
            cells[reg] = key0

    events: list[StabilizationEvent] = [initial_event]
    seen = {key0}
    by_owner: dict[int, list[tuple[int, StabilizationEvent]]] = {
        q: [(-1, initial_event)] for q in cfg.reader_indices()
    }
    events_by_key = {key0: initial_event}

    for ev in trace:
        if ev.op != "write" or ev.reg.family is not Family.FINAL:
            continue
        out = validate(ev.value)
        owner = ev.reg.writer_end.index
        if out is None:
            cells[ev.reg] = None
            continue
        value, core, iset = out
        key = (value, core)
        cells[ev.reg] = key
        stab = events_by_key.get(key)
        if stab is None and all(cells[r] == key for r in rows[owner]):
            stab = StabilizationEvent(
                value=value,
                inform_set=iset,
                ws=core,
                pt=PartialTimestamp.from_mapping(cfg.n, {e.p: e.s for e in core}),
                step=ev.step,
                row_owner=owner,
            )
            events.append(stab)
            seen.add(key)
            events_by_key[key] = stab
        if stab is not None:
            log = by_owner[owner]
            if not log or log[-1][1] is not stab:
                log.append((ev.step, stab))
    return events, by_owner


def detect_stabilizations(
    trace: list[TraceEvent], cfg: Config, ring: crypto.KeyRing, u0: bytes
) -> list[StabilizationEvent]:
    """Every distinct (value, witness core) that covered a full final row,
    ordered by completion step; the bank initializer counts as the
    stabilization of the initial value at step 0."""
    events, _ = _scan_finals(trace, cfg, ring, u0)
    return events


# --- write classification ------------------------------------------------------


def classify_writes(
    history: ExecutionHistory,
    stabs: list[StabilizationEvent],
    cfg: Config,
    byz_readers: frozenset[int] = frozenset(),
) -> WriteClassification:
    """Sort every written value into correct / potential pseudo-correct /
    pseudo-correct / neither.

    Quorum evidence counts init registers that actually received the
    value plus Byzantine readers that witnessed it (their own registers
    cannot be audited, so their dated claims stand in, which is also what
    makes a collaborator-completed partial write a pseudo-correct one).
    """
    trace = history.trace
    u0 = history.u0
    initial_value = TaggedValue(0, u0)
    writes = writer_writes(history)

    def interval_of(step: int) -> int | None:
        for op in writes:
            end = op.response_step if op.response_step is not None else float("inf")
            if op.invoke_step <= step <= end:
                return op.index
        return None

    evidence: dict[TaggedValue, ValueEvidence] = {}
    init_events: list[tuple[int, int, TaggedValue]] = []  # (step, reader, value)
    ack_events: list[tuple[int, int, TaggedValue]] = []
    correct_stamps: dict[TaggedValue, dict[int, int]] = {}

    for ev in trace:
        if ev.op != "write":
            continue
        fam = ev.reg.family
        if fam is Family.INIT:
            try:
                v = decode_value(Family.INIT, ev.value)
            except DecodeError:
                continue
            reader = ev.reg.reader_end.index
            e = evidence.setdefault(v, ValueEvidence())
            e.init_registers.setdefault(reader, []).append(ev.step)
            idx = interval_of(ev.step)
            if idx is not None and idx not in e.hli_writes:
                e.hli_writes.append(idx)
            init_events.append((ev.step, reader, v))
        elif fam is Family.ACK and not ev.caller.is_writer:
            try:
                v = decode_value(Family.ACK, ev.value)
            except DecodeError:
                continue
            ack_events.append((ev.step, ev.caller.index, v))
        elif fam is Family.WITNESS:
            src = ev.caller.index if not ev.caller.is_writer else None
            if src is None:
                continue
            try:
                entry = decode_value(Family.WITNESS, ev.value)
            except DecodeError:
                continue
            if src in byz_readers:
                evidence.setdefault(entry.value, ValueEvidence()).byz_witnesses.add(src)
            else:
                stamps = correct_stamps.setdefault(entry.value, {})
                stamps[src] = max(stamps.get(src, 0), entry.s)

    stabilized = {s.value for s in stabs}
    values = set(evidence) | stabilized

    # a correct write puts one value on all n init registers within a single
    # high-level write and then awaits n-t fresh acks before responding
    correct_values: set[TaggedValue] = {initial_value}
    for op in writes:
        if op.response_step is None:
            continue
        ivs = [
            (step, reader, v)
            for step, reader, v in init_events
            if op.invoke_step <= step <= op.response_step
        ]
        if not ivs:
            continue
        vals = {v for _, _, v in ivs}
        if len(vals) != 1:
            continue
        v = next(iter(vals))
        covered = {reader for _, reader, _ in ivs}
        if covered != set(cfg.reader_indices()):
            continue
        first_step = min(step for step, _, _ in ivs)
        ackers = {
            reader
            for step, reader, av in ack_events
            if av == v and first_step < step <= op.response_step
        }
        if len(ackers) >= cfg.quorum:
            correct_values.add(v)

    def crosses_correct(v: TaggedValue) -> bool:
        sv = correct_stamps.get(v, {})
        for w in correct_values:
            if w == v or w == initial_value:
                continue
            sw = correct_stamps.get(w, {})
            shared = set(sv) & set(sw)
            lt = any(sv[i] < sw[i] for i in shared)
            gt = any(sv[i] > sw[i] for i in shared)
            if lt and gt:
                return True
        return False

    kinds: dict[TaggedValue, Kind] = {}
    for v in values:
        if v == initial_value or v in correct_values:
            kinds[v] = Kind.CORRECT
            continue
        e = evidence.get(v, ValueEvidence())
        quorum_indices = set(e.init_registers) | (e.byz_witnesses & byz_readers)
        if len(quorum_indices) >= cfg.quorum and not crosses_correct(v):
            kinds[v] = (
                Kind.PSEUDO_CORRECT if v in stabilized else Kind.POTENTIAL_PSEUDO_CORRECT
            )
        else:
            kinds[v] = Kind.NEITHER
    return WriteClassification(kinds=kinds, evidence=evidence)


# --- ordering checks -----------------------------------------------------------


def check_total_order(stabs: list[StabilizationEvent], cfg: Config) -> Verdict:
    """Every pair of stabilized witness cores must be comparable."""
    for i in range(len(stabs)):
        for j in range(i + 1, len(stabs)):
            a, b = stabs[i], stabs[j]
            try:
                verdict = mapsto_compare(a.ws, b.ws, cfg)
            except (CommonQuorumTooSmall, EqualStampsDifferentValue) as exc:
                return Verdict(
                    "violation",
                    f"{a.value} vs {b.value}: {type(exc).__name__}: {exc}",
                )
            if verdict is OrderVerdict.CONCURRENT:
                return Verdict(
                    "violation",
                    f"concurrent pair {a.value}{a.pt} vs {b.value}{b.pt}",
                )
    return Verdict("pass", f"{len(stabs)} stabilizations totally ordered")


def sort_stabilizations(
    stabs: list[StabilizationEvent], cfg: Config
) -> list[StabilizationEvent]:
    """Stabilization events in the order induced by their witness cores.

    Requires check_total_order to have passed.
    """
    def cmp(a: StabilizationEvent, b: StabilizationEvent) -> int:
        verdict = mapsto_compare(a.ws, b.ws, cfg)
        if verdict is OrderVerdict.BEFORE:
            return -1
        if verdict is OrderVerdict.AFTER:
            return 1
        if verdict is OrderVerdict.CONCURRENT:
            raise InvariantBroken(f"concurrent pair while sorting: {a.value} vs {b.value}")
        return 0

    return sorted(stabs, key=functools.cmp_to_key(cmp))


def build_full_timestamps(
    stabs: list[StabilizationEvent], cfg: Config
) -> tuple[list[FullTimestamp], list[StabilizationEvent]]:
    """Reconstruct the full n-vector chain from the ordered partial stamps.

    Present components are copied, absent ones inherited from the previous
    vector.  Events that add no new information (their merged vector
    equals the current one) are skipped: the common-witness Equal verdict
    is not transitive across coverage patterns, so re-stabilizations of
    one value collapse here instead.  The strict-increase invariant is
    asserted at every retained link; a failure raises InvariantBroken.
    """
    ordered = sort_stabilizations(stabs, cfg)
    chain: list[FullTimestamp] = []
    contributing: list[StabilizationEvent] = []
    current: list[int] | None = None
    for ev in ordered:
        stamps = ev.pt.mapping()
        base = current if current is not None else [0] * cfg.n
        nxt = [stamps.get(i + 1, base[i]) for i in range(cfg.n)]
        if current is None:
            chain.append(FullTimestamp(tuple(nxt)))
            contributing.append(ev)
            current = nxt
            continue
        verdict = vec_compare(FullTimestamp(tuple(current)), FullTimestamp(tuple(nxt)))
        if verdict is OrderVerdict.EQUAL:
            continue
        if verdict is not OrderVerdict.BEFORE:
            raise InvariantBroken(
                f"chain not strictly increasing: {tuple(current)} -> {tuple(nxt)} "
                f"({ev.value})"
            )
        chain.append(FullTimestamp(tuple(nxt)))
        contributing.append(ev)
        current = nxt
    return chain, contributing


def check_timestamp_isomorphism(stabs: list[StabilizationEvent], cfg: Config) -> Verdict:
    """The full-vector chain must be strictly increasing and mirror the
    stabilization order exactly."""
    try:
        chain, _ = build_full_timestamps(stabs, cfg)
    except InvariantBroken as exc:
        return Verdict("violation", str(exc))
    for i in range(len(chain)):
        for j in range(i + 1, len(chain)):
            if vec_compare(chain[i], chain[j]) is not OrderVerdict.BEFORE:
                return Verdict(
                    "violation", f"chain positions {i},{j} not ordered: {chain[i]} vs {chain[j]}"
                )
    return Verdict("pass", f"chain of {len(chain)} strictly increasing vectors")


def check_genuine_advance(
    stabs: list[StabilizationEvent], byz_readers: frozenset[int], cfg: Config
) -> Verdict:
    """Every step between stabilized writes of distinct values must raise
    some correct reader's component of the full timestamp.

    Consecutive chain entries carrying one value are a single write's
    evidence refreshing, not a new write, so only value changes are
    links.
    """
    try:
        chain, events = build_full_timestamps(stabs, cfg)
    except InvariantBroken as exc:
        return Verdict("violation", f"no chain: {exc}")
    correct = set(cfg.reader_indices()) - set(byz_readers)
    prev_vec = None
    prev_value = None
    for vec, ev in zip(chain, events):
        if prev_vec is not None and ev.value != prev_value:
            advancing = {i + 1 for i in range(cfg.n) if prev_vec.vec[i] < vec.vec[i]}
            if not advancing & correct:
                return Verdict(
                    "violation",
                    f"{prev_value} -> {ev.value} advanced only at Byzantine readers "
                    f"{sorted(advancing)}",
                )
        prev_vec, prev_value = vec, ev.value
    return Verdict("pass", "every value change advanced a correct reader's stamp")


# --- read-facing checks ----------------------------------------------------------


def _read_attribution(
    history: ExecutionHistory, cfg: Config, ring: crypto.KeyRing
) -> dict[tuple[ProcessId, int], StabilizationEvent]:
    """Map each completed correct read to the stabilization event behind the
    value it returned (the reader's latest validated final-row write)."""
    _, by_owner = _scan_finals(history.trace, cfg, ring, history.u0)
    out: dict[tuple[ProcessId, int], StabilizationEvent] = {}
    for read in completed_reads(history):
        owner = read.process.index
        log = by_owner.get(owner, [])
        chosen = None
        for step, stab in log:
            if step <= read.response_step:
                chosen = stab
            else:
                break
        if chosen is not None:
            out[(read.process, read.index)] = chosen
    return out


def check_register_linearizability(
    history: ExecutionHistory,
    stabs: list[StabilizationEvent],
    classification: WriteClassification,
    cfg: Config,
    ring: crypto.KeyRing,
) -> Verdict:
    """Reading-a-current-value plus no new-old inversions over completed
    correct reads, judged on high-level steps and stabilization steps."""
    u0 = history.u0
    v0 = TaggedValue(0, u0)
    reads = completed_reads(history)
    attribution = _read_attribution(history, cfg, ring)

    correct_write_ops = [
        op
        for op in writer_writes(history)
        if op.response_step is not None
        and op.invoke_value is not None
        and classification.kind_of(op.invoke_value) is Kind.CORRECT
    ]
    first_stab_of: dict[TaggedValue, StabilizationEvent] = {}
    for s in stabs:
        first_stab_of.setdefault(s.value, s)

    for read in reads:
        v = read.response_value
        stab = attribution.get((read.process, read.index))
        if v == v0:
            for s in stabs:
                if s.value != v0 and s.step < read.invoke_step:
                    return Verdict(
                        "violation",
                        f"read at {read.process} returned the initial value after "
                        f"{s.value} stabilized at step {s.step}",
                    )
            continue
        if stab is None or stab.value != v:
            return Verdict(
                "violation",
                f"read at {read.process} returned {v} with no matching final-row state",
            )
        if stab.step > read.response_step:
            return Verdict(
                "violation",
                f"read at {read.process} returned {v} before it stabilized",
            )
        preceding = [
            op for op in correct_write_ops if op.response_step < read.invoke_step
        ]
        if preceding:
            last = max(preceding, key=lambda op: op.response_step)
            w = last.invoke_value
            if w != v:
                w_stab = first_stab_of.get(w)
                if w_stab is None:
                    return Verdict(
                        "violation", f"correct write {w} completed without stabilizing"
                    )
                verdict = mapsto_compare(w_stab.ws, stab.ws, cfg)
                if verdict not in (OrderVerdict.BEFORE, OrderVerdict.EQUAL):
                    return Verdict(
                        "violation",
                        f"read at {read.process} returned {v}, older than the most "
                        f"recent preceding correct write {w}",
                    )

    for i in range(len(reads)):
        for j in range(len(reads)):
            if i == j:
                continue
            r1, r2 = reads[i], reads[j]
            if r1.response_step < r2.invoke_step:
                s1 = attribution.get((r1.process, r1.index))
                s2 = attribution.get((r2.process, r2.index))
                if s1 is None or s2 is None:
                    continue
                try:
                    verdict = mapsto_compare(s1.ws, s2.ws, cfg)
                except (CommonQuorumTooSmall, EqualStampsDifferentValue) as exc:
                    return Verdict(
                        "violation",
                        f"incomparable returns {r1.response_value} vs {r2.response_value}: {exc}",
                    )
                if verdict in (OrderVerdict.AFTER, OrderVerdict.CONCURRENT):
                    return Verdict(
                        "violation",
                        f"new-old inversion: {r1.process} returned {r1.response_value} "
                        f"before {r2.process} returned {r2.response_value}",
                    )
    return Verdict("pass", f"{len(reads)} reads current and inversion-free")


def check_view_consistency(history: ExecutionHistory, cfg: Config) -> Verdict:
    """After the final init write, once any correct read returns the final
    value every later-issued correct read must return it too."""
    u0 = history.u0
    last_value = TaggedValue(0, u0)
    for ev in history.trace:
        if ev.op == "write" and ev.reg.family is Family.INIT:
            try:
                last_value = decode_value(Family.INIT, ev.value)
            except DecodeError:
                return Verdict("pass", "final init write undecodable; proviso unmet")
    reads = completed_reads(history)
    returning = [r for r in reads if r.response_value == last_value]
    if not returning:
        return Verdict("pass", "no read returned the final value; vacuous")
    cutoff = min(r.response_step for r in returning)
    for r in reads:
        if r.invoke_step > cutoff and r.response_value != last_value:
            return Verdict(
                "violation",
                f"{r.process} returned {r.response_value} after {last_value} was "
                f"returned at step {cutoff}",
            )
    return Verdict("pass", f"all reads after step {cutoff} returned {last_value}")


def check_total_ordering_reads(history: ExecutionHistory) -> Verdict:
    """No two correct readers may see two values in opposite orders."""
    orders: dict[tuple, tuple[ProcessId, ProcessId]] = {}
    per_reader: dict[ProcessId, list[TaggedValue]] = {}
    for r in completed_reads(history):
        per_reader.setdefault(r.process, []).append(r.response_value)
    for pid, seq in sorted(per_reader.items(), key=lambda kv: kv[0].sort_key()):
        for i in range(len(seq)):
            for j in range(i + 1, len(seq)):
                a, b = seq[i], seq[j]
                if a == b:
                    continue
                key = (a.k, a.u, b.k, b.u)
                rev = (b.k, b.u, a.k, a.u)
                if rev in orders:
                    other = orders[rev][0]
                    return Verdict(
                        "violation",
                        f"{other} saw {b} before {a}; {pid} saw {a} before {b}",
                    )
                orders.setdefault(key, (pid, pid))
    return Verdict("pass", "common order across readers")


def check_write_stabilization(
    history: ExecutionHistory, stabs: list[StabilizationEvent]
) -> Verdict:
    """Every completed high-level write must stabilize before it responds.

    A claim about the correct write protocol: a Byzantine writer responds
    whenever its strategy says, so the check is vacuous for it.
    """
    if history.cfg.writer_byzantine:
        return Verdict("pass", "vacuous: Byzantine writer does not await stabilization")
    for op in writer_writes(history):
        if op.response_step is None or op.invoke_value is None:
            continue
        ok = any(
            s.value == op.invoke_value and s.step <= op.response_step for s in stabs
        )
        if not ok:
            return Verdict(
                "violation",
                f"write {op.invoke_value} responded at step {op.response_step} "
                f"without a prior stabilization",
            )
    return Verdict("pass", "completed writes stabilized before responding")


def check_stabilized_classification(
    stabs: list[StabilizationEvent], classification: WriteClassification
) -> Verdict:
    """Only correct and pseudo-correct values may stabilize."""
    for s in stabs:
        kind = classification.kind_of(s.value)
        if kind not in (Kind.CORRECT, Kind.PSEUDO_CORRECT):
            return Verdict(
                "violation", f"stabilized value {s.value} classified {kind.value}"
            )
    return Verdict("pass", "stabilized values all correct or pseudo-correct")


# --- linearization ---------------------------------------------------------------


@dataclass(frozen=True)
class SeqOp:
    kind: str  # "write" | "read"
    process: str
    value: TaggedValue
    inserted: bool = False


def build_byzantine_linearization(
    history: ExecutionHistory,
    stabs: list[StabilizationEvent],
    classification: WriteClassification,
    cfg: Config,
    ring: crypto.KeyRing,
) -> list[SeqOp]:
    """A sequential history: correct reads ordered by returned-value rank
    with per-reader order preserved, writes placed immediately before
    their first reader (real writes for a correct writer, inserted
    Byzantine writes otherwise), verified against the register's
    sequential specification and the run's real-time order."""
    u0 = history.u0
    v0 = TaggedValue(0, u0)
    ordered = sort_stabilizations(stabs, cfg)
    # ranks are value-level: re-stabilizations of one value are the same
    # write and may be adopted in either order among equal-comparing sets
    value_rank: dict[TaggedValue, int] = {}
    for ev in ordered:
        value_rank.setdefault(ev.value, len(value_rank))

    reads = completed_reads(history)

    def read_rank(read: HliOp) -> int:
        rank = value_rank.get(read.response_value)
        if rank is None:
            raise NoLinearization(
                f"read {read.process}#{read.index} returned unstabilized "
                f"{read.response_value}"
            )
        return rank

    reads_sorted = sorted(reads, key=lambda r: (read_rank(r), r.invoke_step))
    # per-reader local order must survive the sort
    positions: dict[ProcessId, list[int]] = {}
    for pos, r in enumerate(reads_sorted):
        positions.setdefault(r.process, []).append(r.index)
    for pid, idxs in positions.items():
        if idxs != sorted(idxs):
            raise NoLinearization(f"local order broken for {pid}: {idxs}")

    seq: list[tuple] = []  # (rank, tier, tiebreak, SeqOp, real_op)
    if not cfg.writer_byzantine:
        returned = {r.response_value for r in reads}
        for op in writer_writes(history):
            v = op.invoke_value
            if op.response_step is None and v not in returned:
                continue  # pending write nobody saw: removed
            if v not in value_rank:
                raise NoLinearization(f"correct write {v} never stabilized")
            seq.append((value_rank[v], 0, v.k, SeqOp("write", "w", v), op))
    else:
        inserted: set = set()
        for r in reads_sorted:
            v = r.response_value
            if v == v0 or v in inserted:
                continue
            inserted.add(v)
            seq.append((read_rank(r), 0, v.k, SeqOp("write", "w", v, inserted=True), None))
    for r in reads_sorted:
        seq.append(
            (read_rank(r), 1, r.invoke_step, SeqOp("read", str(r.process), r.response_value), r)
        )
    seq.sort(key=lambda item: item[:3])
    ops = [item[3] for item in seq]

    # sequential specification: every read returns the latest preceding write
    current = v0
    for op in ops:
        if op.kind == "write":
            current = op.value
        elif op.value != current:
            raise NoLinearization(
                f"sequential spec broken: read returned {op.value}, register held {current}"
            )

    # real-time order preserved for the real operations
    real = [(pos, item[4]) for pos, item in enumerate(seq) if item[4] is not None]
    for pos_a, op_a in real:
        for pos_b, op_b in real:
            if (
                op_a.response_step is not None
                and op_b.invoke_step > op_a.response_step
                and pos_b < pos_a
            ):
                raise NoLinearization(
                    f"real-time order broken between {op_a.process} and {op_b.process}"
                )
    return ops


def check_byzantine_linearization(
    history: ExecutionHistory,
    stabs: list[StabilizationEvent],
    classification: WriteClassification,
    cfg: Config,
    ring: crypto.KeyRing,
) -> Verdict:
    try:
        ops = build_byzantine_linearization(history, stabs, classification, cfg, ring)
    except NoLinearization as exc:
        return Verdict("violation", str(exc))
    return Verdict("pass", f"linearization of {len(ops)} operations")


# --- brute-force oracle -----------------------------------------------------------


def brute_force_linearizable(history: ExecutionHistory) -> bool:
    """Sequential-extension search over completed correct operations.

    Independent of the checker's construction: tries every real-time
    respecting permutation against the register's sequential
    specification.  Micro instances only.
    """
    v0 = TaggedValue(0, history.u0)
    ops = [
        o
        for o in hli_ops(history)
        if o.response_step is not None
    ]
    n = len(ops)
    if n == 0:
        return True

    def value_after(op: HliOp):
        return op.invoke_value if op.op == "write" else None

    seen_fail: set = set()

    def search(taken: frozenset, current: TaggedValue) -> bool:
        if len(taken) == n:
            return True
        key = (taken, current)
        if key in seen_fail:
            return False
        remaining = [i for i in range(n) if i not in taken]
        for i in remaining:
            op = ops[i]
            # op may go next only if no remaining op fully precedes it
            blocked = any(
                ops[j].response_step < op.invoke_step
                for j in remaining
                if j != i and ops[j].response_step is not None
            )
            if blocked:
                continue
            if op.op == "read" and op.response_value != current:
                continue
            nxt = op.invoke_value if op.op == "write" else current
            if search(taken | {i}, nxt):
                return True
        seen_fail.add(key)
        return False

    return search(frozenset(), v0)


# --- the full report -------------------------------------------------------------


PROPERTIES = (
    "substrate_atomicity",
    "total_order",
    "timestamp_isomorphism",
    "genuine_advance",
    "register_linearizability",
    "view_consistency",
    "total_ordering_reads",
    "write_stabilization",
    "stabilized_classification",
    "byzantine_linearization",
)


@dataclass
class CheckReport:
    cfg: Config
    verdicts: dict[str, Verdict]
    stabilizations: list[StabilizationEvent]
    chain: list[FullTimestamp]
    classification: WriteClassification
    status: str
    violation: str | None
    returned_values: frozenset[TaggedValue] = frozenset()

    def invisible_stabilizations(self) -> list[StabilizationEvent]:
        """Stabilized values that lost their race and were never returned
        (informational: they impose no check)."""
        return [
            s for s in self.stabilizations if s.value not in self.returned_values
        ]

    @property
    def all_pass(self) -> bool:
        return all(v.status == "pass" for v in self.verdicts.values())

    def violations(self) -> list[str]:
        return [name for name, v in self.verdicts.items() if v.status == "violation"]

    def register_count_line(self) -> str:
        n = self.cfg.n
        return f"registers: 3n^2+2n = {3 * n * n + 2 * n} at n={n}"

    def records(self):
        yield json.dumps(
            {
                "report": {
                    "n": self.cfg.n,
                    "t": self.cfg.t,
                    "status": self.status,
                    "violation": self.violation,
                    "registers": 3 * self.cfg.n**2 + 2 * self.cfg.n,
                }
            },
            sort_keys=True,
        )
        for name in PROPERTIES:
            v = self.verdicts[name]
            yield json.dumps(
                {"property": name, "status": v.status, "detail": v.detail},
                sort_keys=True,
            )
        for s in self.stabilizations:
            yield json.dumps(
                {
                    "stabilization": str(s.value),
                    "stamps": str(s.pt),
                    "step": s.step,
                    "row_owner": s.row_owner,
                    "returned": s.value in self.returned_values,
                },
                sort_keys=True,
            )
        for vec in self.chain:
            yield json.dumps({"full_timestamp": list(vec.vec)}, sort_keys=True)
        for value, kind in sorted(
            self.classification.kinds.items(), key=lambda kv: (kv[0].k, kv[0].u)
        ):
            yield json.dumps(
                {"value": str(value), "class": kind.value}, sort_keys=True
            )

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.records():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()


def run_all_checks(
    history: ExecutionHistory,
    byz_readers: frozenset[int] = frozenset(),
    ring: crypto.KeyRing | None = None,
) -> CheckReport:
    """Run every property check over one recorded run."""
    cfg = history.cfg
    u0 = history.u0
    if ring is None:
        ring = history.keyring()
    verdicts: dict[str, Verdict] = {}

    bad_reads = registers.atomicity_violations(cfg, u0, ring, history.trace)
    verdicts["substrate_atomicity"] = (
        Verdict("pass", f"{len(history.trace)} register events linearizable")
        if not bad_reads
        else Verdict("violation", f"{len(bad_reads)} stale reads, first at step {bad_reads[0].step}")
    )

    stabs = detect_stabilizations(history.trace, cfg, ring, u0)
    classification = classify_writes(history, stabs, cfg, byz_readers)

    total_order = check_total_order(stabs, cfg)
    verdicts["total_order"] = total_order
    if total_order.passed:
        verdicts["timestamp_isomorphism"] = check_timestamp_isomorphism(stabs, cfg)
        verdicts["genuine_advance"] = check_genuine_advance(stabs, byz_readers, cfg)
        verdicts["register_linearizability"] = check_register_linearizability(
            history, stabs, classification, cfg, ring
        )
    else:
        skipped = Verdict("skipped", "total order violated")
        verdicts["timestamp_isomorphism"] = skipped
        verdicts["genuine_advance"] = skipped
        verdicts["register_linearizability"] = skipped

    verdicts["view_consistency"] = check_view_consistency(history, cfg)
    verdicts["total_ordering_reads"] = check_total_ordering_reads(history)
    verdicts["write_stabilization"] = check_write_stabilization(history, stabs)
    verdicts["stabilized_classification"] = check_stabilized_classification(
        stabs, classification
    )

    prior_ok = all(
        verdicts[name].status == "pass"
        for name in PROPERTIES
        if name != "byzantine_linearization"
    )
    if prior_ok:
        verdicts["byzantine_linearization"] = check_byzantine_linearization(
            history, stabs, classification, cfg, ring
        )
    else:
        verdicts["byzantine_linearization"] = Verdict("skipped", "prior checks failed")

    chain: list[FullTimestamp] = []
    if total_order.passed and verdicts["timestamp_isomorphism"].passed:
        chain, _ = build_full_timestamps(stabs, cfg)

    returned = frozenset(r.response_value for r in completed_reads(history))
    return CheckReport(
        cfg=cfg,
        verdicts=verdicts,
        stabilizations=stabs,
        chain=chain,
        classification=classification,
        status=history.status,
        violation=history.violation,
        returned_values=returned,
    )
