"""
Trusted-dealer correlated randomness

Both parties hold a DealerTape built from the same dealer seed. Every
request draws a fresh batch from a Philox stream keyed by (seed, kind,
batch index), builds the full correlation and keeps only the caller's
half, so two tapes that see the same request sequence stay in lockstep.
The dealer is a trust assumption standing in for a preprocessing
protocol; the interface is what a real one would implement.

Whoever knows the seed can rebuild both halves of every correlation, and
with them every masked opening. In a real deployment the seed stays with
the dealer, which ships each party only its own half. Passing the
same `run --dealer-seed` to both roles, as the CLI does, is a convenience
for local runs and tests and gives no privacy between the parties.

Tape file ("BUND"), little-endian:
    magic 4s | seed commitment 32s | kind count u8
    | per kind: code u8 | issued u64 | batches u64 | limit i64 (-1 = none)
"""

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Mapping, Optional, Set, Tuple

import numpy as np

from src.gc.labels import random_blocks
from src.gc.ot import OtCorrelation
from src.mpc.sharing import Party
from src.ring.modarith import add_mod, mul_mod, neg_mod, sub_mod
from src.utils.errors import (
    CorrelationError,
    CorrelationReuseError,
    FormatError,
    TapeExhaustedError,
)
from src.utils.logger import get_logger

logger = get_logger(__name__)

TAPE_MAGIC = b"BUND"
_HEADER = struct.Struct("<4s32sB")
_ENTRY = struct.Struct("<BQQq")


class CorrelationKind(str, Enum):
    TRIPLE = "triple"
    TRUNC_PAIR = "trunc_pair"
    OT = "ot"
    GC_MASK = "gc_mask"


_KIND_CODES = {kind: i for i, kind in enumerate(CorrelationKind)}
_KIND_BY_CODE = {i: kind for kind, i in _KIND_CODES.items()}


@dataclass(frozen=True)
class CorrelationTag:
    kind: CorrelationKind
    batch: int


@dataclass(frozen=True)
class BeaverTriple:
    """
    One party's shares of (a, b, c = a*b), plus a zero-sharing z used to
    give the second operand of a square an independent mask
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    z: np.ndarray
    modulus: int
    tag: CorrelationTag

    def __len__(self) -> int:
        return int(self.a.shape[0])


@dataclass(frozen=True)
class TruncPair:
    """Shares of r and r >> shift with r uniform in [0, p - 2*bound)"""

    r: np.ndarray
    r_high: np.ndarray
    shift: int
    bound: int
    modulus: int
    tag: CorrelationTag

    def __len__(self) -> int:
        return int(self.r.shape[0])


def seed_commitment(seed: int) -> bytes:
    return hashlib.sha256(b"blindseg-dealer" + int(seed).to_bytes(32, "little")).digest()


class DealerTape:
    """
    Per-party view of the dealer's correlations

    Args:
        seed: Dealer seed shared by both tapes
        party: Whose half this tape returns
        modulus: Share modulus (the plaintext modulus p)
        limits: Optional per-kind caps on issued elements
    """

    def __init__(
        self,
        seed: int,
        party: Party,
        modulus: int,
        limits: Optional[Mapping[CorrelationKind, int]] = None,
    ):
        self.seed = int(seed)
        self.party = party
        self.modulus = modulus
        self.limits: Dict[CorrelationKind, int] = dict(limits or {})
        self.issued: Dict[CorrelationKind, int] = {k: 0 for k in CorrelationKind}
        self.batches: Dict[CorrelationKind, int] = {k: 0 for k in CorrelationKind}
        self._consumed: Set[CorrelationTag] = set()

    @property
    def commitment(self) -> bytes:
        return seed_commitment(self.seed)

    def _stream(
        self, kind: CorrelationKind, count: int
    ) -> Tuple[np.random.Generator, CorrelationTag]:
        limit = self.limits.get(kind)
        if limit is not None and self.issued[kind] + count > limit:
            raise TapeExhaustedError(
                f"{kind.value} tape exhausted: {self.issued[kind]} issued, "
                f"{count} requested, limit {limit}"
            )
        tag = CorrelationTag(kind, self.batches[kind])
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(_KIND_CODES[kind], tag.batch))
        self.issued[kind] += count
        self.batches[kind] += 1
        return np.random.Generator(np.random.Philox(ss)), tag

    def consume(self, tag: CorrelationTag) -> None:
        """Mark a correlation as used; a second use aborts"""
        if tag in self._consumed:
            raise CorrelationReuseError(f"{tag.kind.value} batch {tag.batch} consumed twice")
        self._consumed.add(tag)

    def _uniform(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.integers(0, self.modulus, size=count, dtype=np.uint64)

    def _pick(self, alice: np.ndarray, bob: np.ndarray) -> np.ndarray:
        return alice if self.party is Party.ALICE else bob

    def triples(self, count: int) -> BeaverTriple:
        m = self.modulus
        rng, tag = self._stream(CorrelationKind.TRIPLE, count)
        a = self._uniform(rng, count)
        b = self._uniform(rng, count)
        c = mul_mod(a, b, m)
        a_bob, b_bob, c_bob, z_bob = (self._uniform(rng, count) for _ in range(4))
        return BeaverTriple(
            a=self._pick(sub_mod(a, a_bob, m), a_bob),
            b=self._pick(sub_mod(b, b_bob, m), b_bob),
            c=self._pick(sub_mod(c, c_bob, m), c_bob),
            z=self._pick(neg_mod(z_bob, m), z_bob),
            modulus=m,
            tag=tag,
        )

    def trunc_pairs(self, count: int, shift: int, bound: int) -> TruncPair:
        m = self.modulus
        if 2 * bound >= m or bound % (1 << shift):
            raise CorrelationError(f"Truncation bound {bound} unusable for shift {shift}")
        rng, tag = self._stream(CorrelationKind.TRUNC_PAIR, count)
        r = rng.integers(0, m - 2 * bound, size=count, dtype=np.uint64)
        r_high = r >> np.uint64(shift)
        r_bob = self._uniform(rng, count)
        rh_bob = self._uniform(rng, count)
        return TruncPair(
            r=self._pick(sub_mod(r, r_bob, m), r_bob),
            r_high=self._pick(sub_mod(r_high, rh_bob, m), rh_bob),
            shift=shift,
            bound=bound,
            modulus=m,
            tag=tag,
        )

    def ot(self, count: int) -> Tuple[OtCorrelation, CorrelationTag]:
        """Random-OT batch; Alice is the sender, Bob the receiver"""
        rng, tag = self._stream(CorrelationKind.OT, count)
        m0 = random_blocks(rng, count)
        m1 = random_blocks(rng, count)
        choice = rng.integers(0, 2, size=count, dtype=np.uint8)
        if self.party is Party.ALICE:
            return OtCorrelation(count, m0=m0, m1=m1), tag
        chosen = [y if c else x for x, y, c in zip(m0, m1, choice.tolist())]
        return OtCorrelation(count, choice=choice, chosen=chosen), tag

    def gc_masks(self, count: int) -> Tuple[Optional[np.ndarray], CorrelationTag]:
        """Bob's fresh reshare masks; Alice's tape only advances"""
        rng, tag = self._stream(CorrelationKind.GC_MASK, count)
        masks = self._uniform(rng, count)
        return (masks if self.party is Party.BOB else None), tag

    def dump(self) -> bytes:
        parts = [_HEADER.pack(TAPE_MAGIC, self.commitment, len(CorrelationKind))]
        for kind in CorrelationKind:
            parts.append(
                _ENTRY.pack(
                    _KIND_CODES[kind],
                    self.issued[kind],
                    self.batches[kind],
                    self.limits.get(kind, -1),
                )
            )
        return b"".join(parts)

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.dump())

    @classmethod
    def load(cls, path: Path, seed: int, party: Party, modulus: int) -> "DealerTape":
        """Restore counters and limits; the seed must match the stored commitment"""
        try:
            blob = Path(path).read_bytes()
        except OSError as e:
            raise FormatError(f"Cannot read tape file {path}: {e}") from e
        if len(blob) < _HEADER.size:
            raise FormatError("Truncated tape header")
        magic, commitment, count = _HEADER.unpack_from(blob, 0)
        if magic != TAPE_MAGIC:
            raise FormatError(f"Bad tape magic {magic!r}")
        if commitment != seed_commitment(seed):
            raise FormatError("Dealer seed does not match the tape commitment")
        if len(blob) != _HEADER.size + count * _ENTRY.size:
            raise FormatError("Tape file has the wrong length")
        tape = cls(seed, party, modulus)
        for i in range(count):
            code, issued, batches, limit = _ENTRY.unpack_from(blob, _HEADER.size + i * _ENTRY.size)
            if code not in _KIND_BY_CODE:
                raise FormatError(f"Unknown correlation kind code {code}")
            kind = _KIND_BY_CODE[code]
            tape.issued[kind] = issued
            tape.batches[kind] = batches
            if limit >= 0:
                tape.limits[kind] = limit
        return tape


def dealer_generate(
    kind: CorrelationKind, count: int, seed: int, modulus: int, **kwargs
) -> Tuple[object, object]:
    """Both parties' halves of one fresh batch (tests and the dealer self-check)"""
    out = []
    for party in (Party.ALICE, Party.BOB):
        tape = DealerTape(seed, party, modulus)
        if kind == CorrelationKind.TRIPLE:
            out.append(tape.triples(count))
        elif kind == CorrelationKind.TRUNC_PAIR:
            out.append(tape.trunc_pairs(count, kwargs["shift"], kwargs["bound"]))
        elif kind == CorrelationKind.OT:
            out.append(tape.ot(count)[0])
        else:
            out.append(tape.gc_masks(count)[0])
    return out[0], out[1]


def verify_triples(alice: BeaverTriple, bob: BeaverTriple) -> bool:
    """Dealer self-check: Rec(a) * Rec(b) == Rec(c) and Rec(z) == 0"""
    m = alice.modulus
    a = add_mod(alice.a, bob.a, m)
    b = add_mod(alice.b, bob.b, m)
    c = add_mod(alice.c, bob.c, m)
    z = add_mod(alice.z, bob.z, m)
    return bool(np.array_equal(mul_mod(a, b, m), c) and not z.any())
