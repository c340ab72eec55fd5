"""Simulated SWSR atomic register substrate.

Five register families connect the writer and the readers: Init and Ack
between writer and each reader, and Witness/Inform/Final between every
reader pair (3n^2 + 2n registers total).  Each register is owned by one
writer process and one reader process and every access is checked.

Cell contents are stored as encoded bytes with a family-specific codec
so Byzantine strategies can write structurally invalid data; decoding
failures surface as protocol-level rejects, never substrate errors.
One register operation is one indivisible scheduler step, and every
operation lands in an append-only trace.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

from . import crypto
from .core import (
    Config,
    InformSet,
    ProcessId,
    TaggedValue,
    WitnessEntry,
    WitnessSet,
    WRITER,
)


class AccessViolation(Exception):
    """A process touched a register it does not own an end of."""


class UnknownRegister(Exception):
    """Register id not allocated in this bank."""


class DecodeError(Exception):
    """Cell bytes do not decode under the register family's codec."""


class Family(Enum):
    INIT = "init"
    ACK = "ack"
    WITNESS = "witness"
    INFORM = "inform"
    FINAL = "final"


@dataclass(frozen=True)
class RegisterId:
    family: Family
    writer_end: ProcessId
    reader_end: ProcessId

    def __post_init__(self):
        object.__setattr__(
            self, "_hash", hash((self.family, self.writer_end, self.reader_end))
        )

    def __hash__(self):
        return self._hash

    def __str__(self) -> str:
        return f"{self.family.value}[{self.writer_end}->{self.reader_end}]"

    def sort_key(self):
        return (self.family.value, self.writer_end.sort_key(), self.reader_end.sort_key())


_REG_CACHE: dict[tuple, RegisterId] = {}


def _interned(family: Family, w: ProcessId, r: ProcessId) -> RegisterId:
    key = (family, w, r)
    reg = _REG_CACHE.get(key)
    if reg is None:
        reg = RegisterId(family, w, r)
        _REG_CACHE[key] = reg
    return reg


def init_reg(i: int) -> RegisterId:
    return _interned(Family.INIT, WRITER, ProcessId.reader(i))


def ack_reg(i: int) -> RegisterId:
    return _interned(Family.ACK, ProcessId.reader(i), WRITER)


def witness_reg(i: int, j: int) -> RegisterId:
    return _interned(Family.WITNESS, ProcessId.reader(i), ProcessId.reader(j))


def inform_reg(i: int, j: int) -> RegisterId:
    return _interned(Family.INFORM, ProcessId.reader(i), ProcessId.reader(j))


def final_reg(i: int, j: int) -> RegisterId:
    return _interned(Family.FINAL, ProcessId.reader(i), ProcessId.reader(j))


# --- codecs -----------------------------------------------------------------
#
# Canonical JSON with hex payloads: stable across platforms, byte-exact for
# identical values, and strict on decode.

def _tagged_obj(v: TaggedValue):
    return {"k": v.k, "u": v.u.hex()}


def _obj_tagged(obj) -> TaggedValue:
    if not isinstance(obj, dict) or set(obj) != {"k", "u"}:
        raise DecodeError("bad tagged value shape")
    k, u = obj["k"], obj["u"]
    if not isinstance(k, int) or k < 0 or not isinstance(u, str):
        raise DecodeError("bad tagged value fields")
    try:
        payload = bytes.fromhex(u)
    except ValueError as exc:
        raise DecodeError("bad payload hex") from exc
    return TaggedValue(k, payload)


def _entry_obj(e: WitnessEntry):
    return {"v": _tagged_obj(e.value), "s": e.s, "p": e.p}


def _obj_entry(obj) -> WitnessEntry:
    if not isinstance(obj, dict) or set(obj) != {"v", "s", "p"}:
        raise DecodeError("bad witness entry shape")
    s, p = obj["s"], obj["p"]
    if not isinstance(s, int) or s < 0 or not isinstance(p, int) or p < 1:
        raise DecodeError("bad witness entry fields")
    return WitnessEntry(_obj_tagged(obj["v"]), s, p)


def _entry_key(e: WitnessEntry):
    return (e.p, e.s, e.value.k, e.value.u)


def _wset_obj(w: WitnessSet):
    return {
        "e": [_entry_obj(e) for e in sorted(w.entries, key=_entry_key)],
        "g": w.signer,
        "sig": w.signature.hex(),
    }


def _obj_wset(obj) -> WitnessSet:
    if not isinstance(obj, dict) or set(obj) != {"e", "g", "sig"}:
        raise DecodeError("bad witness set shape")
    entries_obj, signer, sig = obj["e"], obj["g"], obj["sig"]
    if not isinstance(entries_obj, list) or not isinstance(signer, int) or signer < 1:
        raise DecodeError("bad witness set fields")
    if not isinstance(sig, str):
        raise DecodeError("bad signature field")
    try:
        signature = bytes.fromhex(sig)
    except ValueError as exc:
        raise DecodeError("bad signature hex") from exc
    return WitnessSet(
        entries=frozenset(_obj_entry(e) for e in entries_obj),
        signer=signer,
        signature=signature,
    )


def _iset_obj(s: InformSet):
    members = sorted(s.members, key=lambda m: (m.signer, m.signature))
    return {"m": [_wset_obj(m) for m in members]}


def _obj_iset(obj) -> InformSet:
    if not isinstance(obj, dict) or set(obj) != {"m"}:
        raise DecodeError("bad inform set shape")
    if not isinstance(obj["m"], list):
        raise DecodeError("bad inform set members")
    return InformSet(members=frozenset(_obj_wset(m) for m in obj["m"]))


_ENCODERS = {
    Family.INIT: _tagged_obj,
    Family.ACK: _tagged_obj,
    Family.WITNESS: _entry_obj,
    Family.INFORM: _wset_obj,
    Family.FINAL: _iset_obj,
}

_DECODERS = {
    Family.INIT: _obj_tagged,
    Family.ACK: _obj_tagged,
    Family.WITNESS: _obj_entry,
    Family.INFORM: _obj_wset,
    Family.FINAL: _obj_iset,
}

# Identical values get rewritten constantly in steady state, so both
# directions are memoized; all encoded values are immutable.
_encode_cache: dict[tuple[Family, object], bytes] = {}
_decode_cache: dict[tuple[Family, bytes], object] = {}


def encode_value(family: Family, value) -> bytes:
    key = (family, value)
    hit = _encode_cache.get(key)
    if hit is None:
        obj = _ENCODERS[family](value)
        hit = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
        _encode_cache[key] = hit
    return hit


def decode_value(family: Family, data: bytes):
    key = (family, data)
    if key in _decode_cache:
        return _decode_cache[key]
    try:
        obj = json.loads(data.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError("cell bytes are not canonical JSON") from exc
    value = _DECODERS[family](obj)
    _decode_cache[key] = value
    return value


# --- operations a process can request ---------------------------------------

@dataclass(frozen=True)
class ReadOp:
    reg: RegisterId


@dataclass(frozen=True)
class WriteOp:
    reg: RegisterId
    value: bytes


@dataclass(frozen=True)
class LocalOp:
    """A step that touches no register (idling or local-only transitions)."""

    note: str = ""


@dataclass(frozen=True)
class TraceEvent:
    step: int
    op: str  # "read" | "write"
    reg: RegisterId
    caller: ProcessId
    value: bytes


def initial_entry(cfg: Config, u0: bytes, i: int) -> WitnessEntry:
    return WitnessEntry(TaggedValue(0, u0), 0, i)


def initial_entries(cfg: Config, u0: bytes) -> frozenset[WitnessEntry]:
    return frozenset(initial_entry(cfg, u0, k) for k in cfg.reader_indices())


def initial_witness_set(cfg: Config, u0: bytes, ring: crypto.KeyRing, i: int) -> WitnessSet:
    return crypto.sign_entries(ring, i, initial_entries(cfg, u0))


def initial_inform_set(cfg: Config, u0: bytes, ring: crypto.KeyRing) -> InformSet:
    members = frozenset(
        initial_witness_set(cfg, u0, ring, l) for l in cfg.reader_indices()
    )
    return InformSet(members=members)


class RegisterBank:
    """All 3n^2 + 2n registers plus their operation trace.

    The engine owns the bank during a run and sets ``current_step``
    before each operation; protocol code only goes through read/write.
    """

    def __init__(self, cfg: Config, u0: bytes, cells: dict[RegisterId, bytes]):
        self.cfg = cfg
        self.u0 = u0
        self._cells = cells
        self.write_counts: dict[RegisterId, int] = {r: 0 for r in cells}
        # persistent cons-list so clones share their common prefix
        self._trace_node: tuple | None = None
        self.current_step = 0

    @property
    def trace(self) -> list[TraceEvent]:
        out = []
        node = self._trace_node
        while node is not None:
            out.append(node[1])
            node = node[0]
        out.reverse()
        return out

    def register_ids(self) -> list[RegisterId]:
        return sorted(self._cells, key=RegisterId.sort_key)

    @property
    def register_count(self) -> int:
        return len(self._cells)

    def read(self, reg: RegisterId, caller: ProcessId) -> bytes:
        if reg not in self._cells:
            raise UnknownRegister(str(reg))
        if caller != reg.reader_end:
            raise AccessViolation(f"{caller} cannot read {reg}")
        value = self._cells[reg]
        self._trace_node = (
            self._trace_node,
            TraceEvent(self.current_step, "read", reg, caller, value),
        )
        return value

    def write(self, reg: RegisterId, value: bytes, caller: ProcessId) -> None:
        if reg not in self._cells:
            raise UnknownRegister(str(reg))
        if caller != reg.writer_end:
            raise AccessViolation(f"{caller} cannot write {reg}")
        if not isinstance(value, bytes):
            raise TypeError("register cells hold bytes")
        self._cells[reg] = value
        self.write_counts[reg] += 1
        self._trace_node = (
            self._trace_node,
            TraceEvent(self.current_step, "write", reg, caller, value),
        )

    def write_count(self, reg: RegisterId) -> int:
        if reg not in self._cells:
            raise UnknownRegister(str(reg))
        return self.write_counts[reg]

    def peek(self, reg: RegisterId) -> bytes:
        """Untraced inspection for checkers and tests, never protocol code."""
        return self._cells[reg]

    def clone(self) -> "RegisterBank":
        twin = RegisterBank.__new__(RegisterBank)
        twin.cfg = self.cfg
        twin.u0 = self.u0
        twin._cells = dict(self._cells)
        twin.write_counts = dict(self.write_counts)
        twin._trace_node = self._trace_node
        twin.current_step = self.current_step
        if hasattr(self, "_reg_order"):
            twin._reg_order = self._reg_order
        return twin

    def cells_key(self) -> tuple:
        """Stable snapshot of cell contents, for state hashing.

        Write counts are deliberately excluded: rewrites of identical
        bytes change no future behavior (the writer's freshness check is
        relative to its own baseline and enters the key as a flag).
        """
        return tuple(self._cells[r] for r in self._ordered_regs())

    def _ordered_regs(self) -> list[RegisterId]:
        cached = getattr(self, "_reg_order", None)
        if cached is None:
            cached = self.register_ids()
            self._reg_order = cached
        return cached


def bank_init(cfg: Config, u0: bytes, ring: crypto.KeyRing) -> RegisterBank:
    """Allocate and initialize all five register families.

    Init/Ack start at the initial tagged value; Witness at the owner's
    initial entry; Inform at the owner's signed initial witness set; and
    Final at the initial inform set over all n signers.
    """
    cells: dict[RegisterId, bytes] = {}
    init_tagged = encode_value(Family.INIT, TaggedValue(0, u0))
    for i in cfg.reader_indices():
        cells[init_reg(i)] = init_tagged
        cells[ack_reg(i)] = init_tagged
    iset = initial_inform_set(cfg, u0, ring)
    iset_bytes = encode_value(Family.FINAL, iset)
    for i in cfg.reader_indices():
        entry_bytes = encode_value(Family.WITNESS, initial_entry(cfg, u0, i))
        wset_bytes = encode_value(Family.INFORM, initial_witness_set(cfg, u0, ring, i))
        for j in cfg.reader_indices():
            cells[witness_reg(i, j)] = entry_bytes
            cells[inform_reg(i, j)] = wset_bytes
            cells[final_reg(i, j)] = iset_bytes
    return RegisterBank(cfg, u0, cells)


def swsr_read(bank: RegisterBank, reg: RegisterId, caller: ProcessId) -> bytes:
    return bank.read(reg, caller)


def swsr_write(bank: RegisterBank, reg: RegisterId, value: bytes, caller: ProcessId) -> None:
    bank.write(reg, value, caller)


def replay_trace(
    cfg: Config, u0: bytes, ring: crypto.KeyRing, trace: Iterable[TraceEvent]
) -> dict[RegisterId, bytes]:
    """Rebuild every cell's final value by replaying the trace over a fresh bank."""
    cells = dict(bank_init(cfg, u0, ring)._cells)
    for ev in trace:
        if ev.op == "write":
            cells[ev.reg] = ev.value
    return cells


def atomicity_violations(
    cfg: Config, u0: bytes, ring: crypto.KeyRing, trace: Iterable[TraceEvent]
) -> list[TraceEvent]:
    """Reads that did not return the latest preceding write (empty means linearizable).

    Trivial by construction for this substrate; asserted after runs as a
    plumbing check.
    """
    cells = dict(bank_init(cfg, u0, ring)._cells)
    bad = []
    for ev in trace:
        if ev.op == "write":
            cells[ev.reg] = ev.value
        elif ev.value != cells[ev.reg]:
            bad.append(ev)
    return bad


def export_trace(trace: Iterable[TraceEvent]):
    """Newline-delimited structured records with value digests."""
    for ev in trace:
        yield json.dumps(
            {
                "step": ev.step,
                "op": ev.op,
                "register": str(ev.reg),
                "caller": str(ev.caller),
                "value_digest": hashlib.sha256(ev.value).hexdigest()[:16],
            },
            sort_keys=True,
        )
