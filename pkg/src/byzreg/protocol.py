"""Correct writer and reader state machines, plus find_latest.

Each machine is an explicit little program counter over register
operations: the engine asks for the next operation, performs it
atomically against the bank, and hands the result back.  All local
bookkeeping between register operations is folded into the step that
precedes it, so adversarial interleavings can split an iteration at
every point the asynchrony model allows.

The reader machine runs the helper loop forever.  A high-level read is
one full helper iteration: its invocation is the iteration's first step
and its response the iteration's last, returning the value last written
to the reader's ack register in that iteration (or the cached last ack
when the iteration wrote none).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Sequence

from . import crypto
from .core import (
    Config,
    InformSet,
    InvalidInformSet,
    OrderVerdict,
    ProcessId,
    TaggedValue,
    WitnessEntry,
    WitnessSet,
    WRITER,
    common_value,
    mapsto_compare,
    ws_of,
)
from .registers import (
    DecodeError,
    Family,
    ReadOp,
    RegisterBank,
    WriteOp,
    ack_reg,
    decode_value,
    encode_value,
    final_reg,
    init_reg,
    inform_reg,
    witness_reg,
)


class ConcurrentFinalSets(Exception):
    """find_latest met two incomparable inform sets.

    Unreachable when n > 2t with verified signatures; surfacing it is a
    checker-grade protocol violation, never a silent tie-break.
    """


@lru_cache(maxsize=16384)
def cached_ws_of(inform_set: InformSet, cfg: Config) -> frozenset[WitnessEntry]:
    """ws_of for already-validated sets (find_latest compares repeatedly)."""
    return ws_of(inform_set, cfg)


def find_latest(sets: Sequence[InformSet], cfg: Config) -> InformSet:
    """Survivor of pairwise common-witness elimination over inform sets.

    The earlier set of each comparable pair is discarded (on Equal, the
    second operand goes).  Every element must already pass ws_of.
    """
    if not sets:
        raise ValueError("find_latest needs at least one inform set")
    survivor = sets[0]
    for cand in sets[1:]:
        if cand == survivor:
            continue
        verdict = mapsto_compare(
            cached_ws_of(survivor, cfg), cached_ws_of(cand, cfg), cfg
        )
        if verdict is OrderVerdict.BEFORE:
            survivor = cand
        elif verdict is OrderVerdict.CONCURRENT:
            a = sorted((e.p, e.s) for e in cached_ws_of(survivor, cfg))
            b = sorted((e.p, e.s) for e in cached_ws_of(cand, cfg))
            raise ConcurrentFinalSets(f"stamps {a} vs {b}")
        # AFTER or EQUAL keeps the survivor
    return survivor


@dataclass
class WriterState:
    """Counter, pending value and ack progress of the writer."""

    c: int = 0
    pending: TaggedValue | None = None
    acked: set[int] = field(default_factory=set)

    @property
    def d(self) -> int:
        return len(self.acked)


@dataclass
class ReaderState:
    """Algorithm-local variables of one reader."""

    s: int
    last_init: TaggedValue
    t_witness: dict[int, WitnessEntry]
    t_inform: dict[int, WitnessSet | None]
    witness_set: WitnessSet
    inform_set: InformSet
    last_ack: TaggedValue
    suspected: set[int] = field(default_factory=set)


def initial_reader_state(cfg: Config, u0: bytes, ring: crypto.KeyRing, p: int) -> ReaderState:
    from .registers import initial_entry, initial_inform_set, initial_witness_set

    return ReaderState(
        s=0,
        last_init=TaggedValue(0, u0),
        t_witness={i: initial_entry(cfg, u0, i) for i in cfg.reader_indices()},
        t_inform={i: initial_witness_set(cfg, u0, ring, i) for i in cfg.reader_indices()},
        witness_set=initial_witness_set(cfg, u0, ring, p),
        inform_set=initial_inform_set(cfg, u0, ring),
        last_ack=TaggedValue(0, u0),
    )


class ProcessMachine:
    """One process driven by the engine, one atomic step at a time."""

    pid: ProcessId

    def enabled(self, bank: RegisterBank) -> bool:
        raise NotImplementedError

    def done(self) -> bool:
        """True when this process has no outstanding high-level workload."""
        raise NotImplementedError

    def next_op(self, bank: RegisterBank):
        raise NotImplementedError

    def apply(self, bank: RegisterBank, op, result, recorder) -> None:
        raise NotImplementedError

    def clone(self) -> "ProcessMachine":
        return copy.deepcopy(self)

    def state_key(self, bank: RegisterBank):
        raise NotImplementedError


# Writer phases
W_IDLE = 0
W_INIT = 1
W_POLL = 2


class WriterMachine(ProcessMachine):
    """The correct write protocol: broadcast to every init register in
    ascending order, then poll ack registers round-robin until n-t
    distinct readers have freshly acknowledged the pending value."""

    def __init__(self, cfg: Config, ring: crypto.KeyRing, writes: Sequence[bytes]):
        self.cfg = cfg
        self.ring = ring
        self.pid = WRITER
        self.writes = [bytes(w) for w in writes]
        self.widx = 0
        self.st = WriterState()
        self.phase = W_IDLE
        self.wi = 1
        self.poll_from = 1
        self.baseline: dict[int, int] = {}

    def enabled(self, bank):
        return self.phase != W_IDLE or self.widx < len(self.writes)

    def done(self):
        return self.phase == W_IDLE and self.widx >= len(self.writes)

    def _poll_target(self) -> int:
        n = self.cfg.n
        for off in range(n):
            i = (self.poll_from - 1 + off) % n + 1
            if i not in self.st.acked:
                return i
        return self.poll_from  # all acked; unreachable while polling

    def next_op(self, bank):
        if self.phase == W_IDLE:
            kv = TaggedValue(self.st.c + 1, self.writes[self.widx])
            return WriteOp(init_reg(1), encode_value(Family.INIT, kv))
        if self.phase == W_INIT:
            return WriteOp(init_reg(self.wi), encode_value(Family.INIT, self.st.pending))
        return ReadOp(ack_reg(self._poll_target()))

    def apply(self, bank, op, result, recorder):
        if self.phase == W_IDLE:
            # the first init write of a fresh high-level write happened
            # during this step
            self.st.c += 1
            self.st.pending = TaggedValue(self.st.c, self.writes[self.widx])
            self.st.acked = set()
            self.baseline = {
                i: bank.write_count(ack_reg(i)) for i in self.cfg.reader_indices()
            }
            recorder.invoke(self.pid, "write", self.st.pending)
            self.widx += 1
            self.wi = 2
            self.phase = W_INIT if self.cfg.n >= 2 else W_POLL
            if self.phase == W_POLL:
                self._maybe_finish(recorder)
            return
        if self.phase == W_INIT:
            self.wi += 1
            if self.wi > self.cfg.n:
                self.phase = W_POLL
                self.poll_from = 1
                self._maybe_finish(recorder)
            return
        # polling
        i = self._poll_target()
        self.poll_from = i % self.cfg.n + 1
        try:
            value = decode_value(Family.ACK, result)
        except DecodeError:
            value = None
        if (
            value == self.st.pending
            and bank.write_count(ack_reg(i)) > self.baseline[i]
        ):
            self.st.acked.add(i)
        self._maybe_finish(recorder)

    def _maybe_finish(self, recorder):
        if self.phase == W_POLL and self.st.d >= self.cfg.quorum:
            recorder.response(self.pid, "write", self.st.pending)
            self.st.pending = None
            self.phase = W_IDLE

    def state_key(self, bank):
        # absolute ack write counts are behaviorally irrelevant; only the
        # per-reader freshness deltas relative to the baseline matter
        if self.phase == W_POLL:
            fresh = tuple(
                bank.write_count(ack_reg(i)) > self.baseline[i]
                for i in self.cfg.reader_indices()
            )
        else:
            fresh = ()
        return (
            "w",
            self.phase,
            self.widx,
            self.st.c,
            self.st.pending,
            frozenset(self.st.acked),
            fresh,
            self.wi,
            self.poll_from,
        )

    def clone(self):
        twin = WriterMachine.__new__(type(self))
        twin.__dict__.update(self.__dict__)
        twin.st = WriterState(
            c=self.st.c, pending=self.st.pending, acked=set(self.st.acked)
        )
        twin.baseline = dict(self.baseline)
        return twin


# Reader phases, in helper-iteration order
R_INIT = 10  # read own init register
R_WWIT = 11  # broadcast new witness entry
R_CWIT = 12  # collect peers' witness entries
R_WINF = 13  # broadcast signed witness set
R_RINF = 14  # collect peers' signed witness sets
R_WFIN = 15  # broadcast freshly formed inform set
R_ACK1 = 16  # ack the formed value
R_RFIN = 17  # collect peers' final inform sets
R_WFIN2 = 18  # broadcast adopted inform set
R_ACK2 = 19  # ack the adopted value


def latest_quorum_group(
    t_witness: dict[int, WitnessEntry], cfg: Config
) -> tuple[TaggedValue, list[WitnessEntry]] | None:
    """The >= n-t latest entries sharing one tagged value, if any.

    Unique above the n > 2t threshold; below it the group with the
    highest stamp (then value) is picked so sub-threshold scenarios stay
    deterministic.
    """
    groups: dict[TaggedValue, list[WitnessEntry]] = {}
    for e in t_witness.values():
        groups.setdefault(e.value, []).append(e)
    best = None
    for v, entries in groups.items():
        if len(entries) < cfg.quorum:
            continue
        key = (len(entries), max(e.s for e in entries), v.k, v.u)
        if best is None or key > best[0]:
            best = (key, v, entries)
    if best is None:
        return None
    return best[1], best[2]


def form_inform_set(
    members: Sequence[WitnessSet], cfg: Config
) -> tuple[InformSet, TaggedValue] | None:
    """Assemble an inform set from collected witness sets, if a quorum of
    them shares a quorum of identical entries.

    Tries every quorum-sized member subset, keeps those whose common core
    validates, and greedily grows the member set while it stays valid.
    Deterministic: the largest member set wins, then the largest core,
    then the value.
    """
    return _form_inform_cached(frozenset(members), cfg)


@lru_cache(maxsize=8192)
def _form_inform_cached(
    member_set: frozenset[WitnessSet], cfg: Config
) -> tuple[InformSet, TaggedValue] | None:
    members = sorted(member_set, key=lambda m: m.signer)
    if len(members) < cfg.quorum:
        return None
    best = None
    for subset in combinations(members, cfg.quorum):
        try:
            ws_of(InformSet(frozenset(subset)), cfg)
        except InvalidInformSet:
            continue
        chosen = list(subset)
        chosen_signers = {m.signer for m in chosen}
        for m in members:
            if m.signer in chosen_signers:
                continue
            try:
                ws_of(InformSet(frozenset(chosen + [m])), cfg)
            except InvalidInformSet:
                continue
            chosen.append(m)
            chosen_signers.add(m.signer)
        iset = InformSet(frozenset(chosen))
        core = ws_of(iset, cfg)
        v = common_value(core)
        key = (len(chosen), len(core), v.k, v.u)
        if best is None or key > best[0]:
            best = (key, iset, v)
    if best is None:
        return None
    return best[1], best[2]


class ReaderMachine(ProcessMachine):
    """One reader: helper thread plus high-level read bookkeeping.

    Subclasses hook into witness stamping and publication to express
    Byzantine strategies without duplicating the phase structure.
    """

    def __init__(
        self,
        cfg: Config,
        ring: crypto.KeyRing,
        u0: bytes,
        index: int,
        reads: int = 0,
        read_gap: int = 0,
    ):
        self.cfg = cfg
        self.ring = ring
        self.index = index
        self.pid = ProcessId.reader(index)
        self.st = initial_reader_state(cfg, u0, ring, index)
        self.phase = R_INIT
        self.idx = 1  # per-phase register loop counter
        self.pending_entry: WitnessEntry | None = None
        self.form_value: TaggedValue | None = None
        self.z_list: list[InformSet] = []
        self.adopt_target: InformSet | None = None
        # high-level read workload
        self.reads_remaining = reads
        self.read_gap = read_gap
        self.gap_left = 0
        self.read_active = False
        # memoized validation of peer cells, keyed on raw bytes
        self._inform_cache: dict[bytes, WitnessSet | None] = {}
        self._final_cache: dict[bytes, InformSet | None] = {}
        self._sign_cache: dict[frozenset[WitnessEntry], WitnessSet] = {}

    # -- hooks for Byzantine subclasses --------------------------------

    def _stamp_bump(self) -> int:
        return 1

    def _entry_for_peer(self, peer: int, entry: WitnessEntry) -> WitnessEntry:
        return entry

    def _adopt_foreign_value(self) -> TaggedValue | None:
        """Value to treat as newly written when the init register did not
        change (collaborating strategies); None for correct readers."""
        return None

    def _after_collect(self) -> None:
        pass

    # -------------------------------------------------------------------

    def enabled(self, bank):
        return True  # the helper thread takes infinitely many steps

    def done(self):
        return self.reads_remaining == 0 and not self.read_active

    def _sign_entries(self, entries: frozenset[WitnessEntry]) -> WitnessSet:
        hit = self._sign_cache.get(entries)
        if hit is None:
            hit = crypto.sign_entries(self.ring, self.index, entries)
            self._sign_cache[entries] = hit
        return hit

    def next_op(self, bank):
        p, i = self.index, self.idx
        if self.phase == R_INIT:
            return ReadOp(init_reg(p))
        if self.phase == R_WWIT:
            entry = self._entry_for_peer(i, self.pending_entry)
            return WriteOp(witness_reg(p, i), encode_value(Family.WITNESS, entry))
        if self.phase == R_CWIT:
            return ReadOp(witness_reg(i, p))
        if self.phase == R_WINF:
            return WriteOp(
                inform_reg(p, i), encode_value(Family.INFORM, self.st.witness_set)
            )
        if self.phase == R_RINF:
            return ReadOp(inform_reg(i, p))
        if self.phase == R_WFIN:
            return WriteOp(
                final_reg(p, i), encode_value(Family.FINAL, self.st.inform_set)
            )
        if self.phase == R_ACK1:
            return WriteOp(ack_reg(p), encode_value(Family.ACK, self.form_value))
        if self.phase == R_RFIN:
            return ReadOp(final_reg(i, p))
        if self.phase == R_WFIN2:
            return WriteOp(
                final_reg(p, i), encode_value(Family.FINAL, self.adopt_target)
            )
        if self.phase == R_ACK2:
            value = common_value(cached_ws_of(self.adopt_target, self.cfg))
            return WriteOp(ack_reg(p), encode_value(Family.ACK, value))
        raise AssertionError(f"unknown phase {self.phase}")

    def apply(self, bank, op, result, recorder):
        handler = self._APPLY[self.phase]
        handler(self, bank, op, result, recorder)

    # -- iteration bookkeeping ------------------------------------------

    def _begin_iteration(self, recorder):
        if not self.read_active and self.reads_remaining > 0:
            if self.gap_left == 0:
                self.read_active = True
                recorder.invoke(self.pid, "read", None)
            else:
                self.gap_left -= 1

    def _end_iteration(self, recorder):
        if self.read_active:
            recorder.response(self.pid, "read", self.st.last_ack)
            self.read_active = False
            self.reads_remaining -= 1
            self.gap_left = self.read_gap
        self.phase = R_INIT
        self.idx = 1

    # -- phase handlers ---------------------------------------------------

    def _apply_init(self, bank, op, result, recorder):
        self._begin_iteration(recorder)
        st = self.st
        try:
            kv = decode_value(Family.INIT, result)
        except DecodeError:
            kv = None  # an unreadable init cell is treated as unchanged
        foreign = None
        if kv is not None and kv != st.last_init:
            st.s += self._stamp_bump()
            st.last_init = kv
            self.pending_entry = WitnessEntry(kv, st.s, self.index)
        else:
            foreign = self._adopt_foreign_value()
            if foreign is not None and foreign != st.last_init:
                st.s += self._stamp_bump()
                st.last_init = foreign
                self.pending_entry = WitnessEntry(foreign, st.s, self.index)
            else:
                self.pending_entry = None
        if self.pending_entry is not None:
            self.phase = R_WWIT
        else:
            self.phase = R_CWIT
        self.idx = 1

    def _apply_wwit(self, bank, op, result, recorder):
        self.idx += 1
        if self.idx > self.cfg.n:
            self.phase = R_CWIT
            self.idx = 1

    def _apply_cwit(self, bank, op, result, recorder):
        src = self.idx
        st = self.st
        entry = None
        try:
            entry = decode_value(Family.WITNESS, result)
        except DecodeError:
            st.suspected.add(src)
        if entry is not None:
            if entry.p != src:
                st.suspected.add(src)
            else:
                stored = st.t_witness[src]
                if entry.s > stored.s:
                    st.t_witness[src] = entry
                elif entry.s < stored.s or (
                    entry.s == stored.s and entry.value != stored.value
                ):
                    st.suspected.add(src)
        self.idx += 1
        if self.idx > self.cfg.n:
            self._after_collect()
            group = latest_quorum_group(st.t_witness, self.cfg)
            if group is not None:
                _, entries = group
                st.witness_set = self._sign_entries(frozenset(entries))
                self.phase = R_WINF
            else:
                self.phase = R_RFIN
                self.z_list = []
            self.idx = 1

    def _apply_winf(self, bank, op, result, recorder):
        self.idx += 1
        if self.idx > self.cfg.n:
            self.phase = R_RINF
            self.idx = 1

    def _validated_inform(self, src: int, data: bytes) -> WitnessSet | None:
        hit = self._inform_cache.get(data)
        if hit is None and data not in self._inform_cache:
            try:
                wset = decode_value(Family.INFORM, data)
            except DecodeError:
                wset = None
            if wset is not None and not crypto.verify_witness_set(self.ring, wset):
                wset = None
            self._inform_cache[data] = wset
            hit = wset
        if hit is not None and hit.signer != src:
            return None
        return hit

    def _apply_rinf(self, bank, op, result, recorder):
        src = self.idx
        st = self.st
        wset = self._validated_inform(src, result)
        if wset is None:
            st.suspected.add(src)
            st.t_inform[src] = None
        else:
            st.t_inform[src] = wset
        self.idx += 1
        if self.idx > self.cfg.n:
            members = [w for w in st.t_inform.values() if w is not None]
            formed = form_inform_set(members, self.cfg)
            if formed is not None:
                st.inform_set, self.form_value = formed
                self.phase = R_WFIN
            else:
                self.phase = R_RFIN
                self.z_list = []
            self.idx = 1

    def _apply_wfin(self, bank, op, result, recorder):
        self.idx += 1
        if self.idx > self.cfg.n:
            self.phase = R_ACK1

    def _apply_ack1(self, bank, op, result, recorder):
        self.st.last_ack = self.form_value
        self.phase = R_RFIN
        self.z_list = []
        self.idx = 1

    def _validated_final(self, data: bytes) -> InformSet | None:
        if data in self._final_cache:
            return self._final_cache[data]
        iset = None
        try:
            iset = decode_value(Family.FINAL, data)
        except DecodeError:
            iset = None
        if iset is not None:
            try:
                ws_of(iset, self.cfg)
            except InvalidInformSet:
                iset = None
        if iset is not None and not all(
            crypto.verify_witness_set(self.ring, m) for m in iset.members
        ):
            iset = None
        self._final_cache[data] = iset
        return iset

    def _apply_rfin(self, bank, op, result, recorder):
        src = self.idx
        iset = self._validated_final(result)
        if iset is None:
            self.st.suspected.add(src)
        else:
            self.z_list.append(iset)
        self.idx += 1
        if self.idx > self.cfg.n:
            latest = find_latest(self.z_list + [self.st.inform_set], self.cfg)
            if latest != self.st.inform_set:
                self.adopt_target = latest
                self.st.inform_set = latest
                self.phase = R_WFIN2
                self.idx = 1
            else:
                self._end_iteration(recorder)

    def _apply_wfin2(self, bank, op, result, recorder):
        self.idx += 1
        if self.idx > self.cfg.n:
            self.phase = R_ACK2

    def _apply_ack2(self, bank, op, result, recorder):
        self.st.last_ack = common_value(cached_ws_of(self.adopt_target, self.cfg))
        self.adopt_target = None
        self._end_iteration(recorder)

    _APPLY = {
        R_INIT: _apply_init,
        R_WWIT: _apply_wwit,
        R_CWIT: _apply_cwit,
        R_WINF: _apply_winf,
        R_RINF: _apply_rinf,
        R_WFIN: _apply_wfin,
        R_ACK1: _apply_ack1,
        R_RFIN: _apply_rfin,
        R_WFIN2: _apply_wfin2,
        R_ACK2: _apply_ack2,
    }

    def state_key(self, bank):
        st = self.st
        idxs = self.cfg.reader_indices()
        return (
            "r",
            self.index,
            self.phase,
            self.idx,
            st.s,
            st.last_init,
            tuple(st.t_witness[i] for i in idxs),
            tuple(st.t_inform[i] for i in idxs),
            st.witness_set,
            st.inform_set,
            st.last_ack,
            frozenset(st.suspected),
            self.pending_entry,
            self.form_value,
            tuple(self.z_list),
            self.adopt_target,
            self.reads_remaining,
            self.gap_left,
            self.read_active,
        )

    def clone(self):
        twin = ReaderMachine.__new__(type(self))
        d = twin.__dict__
        d.update(self.__dict__)
        st = self.st
        d["st"] = ReaderState(
            s=st.s,
            last_init=st.last_init,
            t_witness=dict(st.t_witness),
            t_inform=dict(st.t_inform),
            witness_set=st.witness_set,
            inform_set=st.inform_set,
            last_ack=st.last_ack,
            suspected=set(st.suspected),
        )
        d["z_list"] = list(self.z_list)
        # validation caches are pure maps from immutable bytes; share them
        return twin
