"""Pluggable signatures over witness-set payloads.

Two interchangeable schemes sit behind one interface: a keyed-digest
scheme (HMAC-SHA256, fast and reproducible for seeded runs) and Ed25519
for integration confidence.  All key material is derived from a master
seed so identical scenario configs produce identical artifacts.

The model grants unforgeability by assumption: adversary code only ever
signs under its own identity, and the tests pin the unforgeability
contract for both schemes.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from typing import Iterable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .core import Config, ProcessId, WitnessEntry, WitnessSet, WRITER


class UnknownProcess(Exception):
    """Signing was requested for a process with no key pair."""


def canonical_entries_payload(entries: Iterable[WitnessEntry]) -> bytes:
    """Canonical signing payload for a witness entry set.

    Entries are sorted by witness index (then stamp, then value) and
    packed with fixed-width integers so signature equality never depends
    on in-memory set order.
    """
    parts = []
    for e in sorted(entries, key=lambda e: (e.p, e.s, e.value.k, e.value.u)):
        parts.append(struct.pack(">IQQI", e.p, e.s, e.value.k, len(e.value.u)))
        parts.append(e.value.u)
    return b"".join(parts)


def _seed_material(seed: int, pid: ProcessId) -> bytes:
    return hashlib.sha256(f"byzreg/{seed}/{pid}".encode()).digest()


class KeyedDigestScheme:
    """Deterministic HMAC-SHA256 test scheme."""

    name = "keyed"

    def keypair(self, seed: int, pid: ProcessId) -> tuple[bytes, bytes]:
        secret = _seed_material(seed, pid)
        return secret, secret

    def sign(self, private: bytes, payload: bytes) -> bytes:
        return hmac.new(private, payload, hashlib.sha256).digest()

    def verify(self, public: bytes, payload: bytes, signature: bytes) -> bool:
        if not isinstance(signature, (bytes, bytearray)):
            return False
        expected = hmac.new(public, payload, hashlib.sha256).digest()
        return hmac.compare_digest(expected, bytes(signature))


class Ed25519Scheme:
    """Real asymmetric scheme; Ed25519 signatures are deterministic."""

    name = "ed25519"

    def keypair(self, seed: int, pid: ProcessId):
        private = Ed25519PrivateKey.from_private_bytes(_seed_material(seed, pid))
        return private, private.public_key()

    def sign(self, private: Ed25519PrivateKey, payload: bytes) -> bytes:
        return private.sign(payload)

    def verify(self, public: Ed25519PublicKey, payload: bytes, signature: bytes) -> bool:
        if not isinstance(signature, (bytes, bytearray)):
            return False
        try:
            public.verify(bytes(signature), payload)
            return True
        except InvalidSignature:
            return False


_SCHEMES = {
    KeyedDigestScheme.name: KeyedDigestScheme,
    Ed25519Scheme.name: Ed25519Scheme,
}


@dataclass
class KeyRing:
    """Per-process signing capability plus public verification material."""

    scheme_name: str
    _scheme: object = field(repr=False)
    _private: dict[ProcessId, object] = field(repr=False)
    _public: dict[ProcessId, object] = field(repr=False)

    def has(self, pid: ProcessId) -> bool:
        return pid in self._private

    def __deepcopy__(self, memo):
        # read-only after construction; safe to share across clones
        return self


_RING_CACHE: dict[tuple, KeyRing] = {}


def make_keyring(cfg: Config, scheme: str = "keyed", seed: int = 0) -> KeyRing:
    """Build a key ring covering the writer and every reader (Byzantine
    included).  Rings are memoized: they are read-only, and sharing one
    object lets verification caches keyed on it persist across runs."""
    key = (cfg, scheme, seed)
    cached = _RING_CACHE.get(key)
    if cached is not None:
        return cached
    if scheme not in _SCHEMES:
        raise ValueError(f"unknown signature scheme {scheme!r}")
    impl = _SCHEMES[scheme]()
    private: dict[ProcessId, object] = {}
    public: dict[ProcessId, object] = {}
    for pid in [WRITER] + [ProcessId.reader(i) for i in cfg.reader_indices()]:
        priv, pub = impl.keypair(seed, pid)
        private[pid] = priv
        public[pid] = pub
    ring = KeyRing(scheme_name=scheme, _scheme=impl, _private=private, _public=public)
    if len(_RING_CACHE) < 4096:
        _RING_CACHE[key] = ring
    return ring


def sign(ring: KeyRing, pid: ProcessId, payload: bytes) -> bytes:
    if pid not in ring._private:
        raise UnknownProcess(str(pid))
    return ring._scheme.sign(ring._private[pid], payload)


def verify(ring: KeyRing, pid: ProcessId, payload: bytes, signature: bytes) -> bool:
    if pid not in ring._public:
        return False
    return ring._scheme.verify(ring._public[pid], payload, signature)


def sign_entries(ring: KeyRing, signer: int, entries: Iterable[WitnessEntry]) -> WitnessSet:
    """Sign an entry set under a reader's identity, producing its witness set."""
    frozen = frozenset(entries)
    sig = sign(ring, ProcessId.reader(signer), canonical_entries_payload(frozen))
    return WitnessSet(entries=frozen, signer=signer, signature=sig)


def verify_witness_set(ring: KeyRing, wset: WitnessSet) -> bool:
    """Check a witness set's signature against its claimed signer."""
    if wset.signer < 1:
        return False
    return verify(
        ring,
        ProcessId.reader(wset.signer),
        canonical_entries_payload(wset.entries),
        wset.signature,
    )
