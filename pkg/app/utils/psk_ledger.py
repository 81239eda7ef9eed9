"""
Pre-shared-key ledger: a finite pool of bits handed out once each, with an
allocation journal for audit.
"""
import logging
import uuid
from typing import List, Optional

import numpy as np
from sqlalchemy.orm import Session

from app.core.errors import DoubleAesAllocation, HoqsError, PoolExhausted, ValidationError
from app.models.ledger import LedgerAllocation
from app.schemas.ledger import Allocation, PskPurpose

logger = logging.getLogger(__name__)

AES_KEY_BITS = 256


def generate_pool(nbits: int, seed: int) -> np.ndarray:
    """Seeded pool of nbits uniformly random bits (simulation stand-in for a real PSK)"""
    if nbits < 1:
        raise ValidationError(f"Pool size must be positive, got {nbits}")
    return np.random.default_rng([seed, 0x5E5]).integers(0, 2, nbits, dtype=np.uint8)


def effective_keyspace_bits(n_obs: int, n_aes: int = AES_KEY_BITS) -> float:
    """Exponent (n_obs / 4)(n_aes + 2) of the effective key space an adversary searches"""
    if n_obs < 0 or n_aes < 0:
        raise ValidationError("n_obs and n_aes must be non-negative")
    return n_obs / 4 * (n_aes + 2)


class PskLedger:
    """
    Single-writer PSK pool. Every allocation advances the cursor; only the
    256-bit AES key is allocated once and then referenced across cycles.
    """

    def __init__(self, pool: np.ndarray, ledger_id: Optional[str] = None,
                 db: Optional[Session] = None):
        self.pool = np.asarray(pool, dtype=np.uint8)
        self.ledger_id = ledger_id or str(uuid.uuid4())
        self.db = db
        self.cursor = 0
        self.cycle_id = 0
        self.allocations: List[Allocation] = []
        self.fixed_aes_key: Optional[Allocation] = None

    @property
    def remaining(self) -> int:
        return int(self.pool.size - self.cursor)

    def begin_cycle(self, cycle_id: int) -> None:
        self.cycle_id = cycle_id

    def allocate(self, purpose: PskPurpose, nbits: int) -> np.ndarray:
        """
        Hand out the next nbits of the pool.

        Raises:
            PoolExhausted: fewer than nbits remain
            DoubleAesAllocation: the AES key was already allocated
        """
        purpose = PskPurpose(purpose)
        if nbits < 1:
            raise ValidationError(f"Allocation size must be positive, got {nbits}")
        if purpose == PskPurpose.AES_KEY:
            if self.fixed_aes_key is not None:
                raise DoubleAesAllocation("The AES key is allocated once per ledger")
            if nbits != AES_KEY_BITS:
                raise ValidationError(f"AES key allocations are {AES_KEY_BITS} bits")
        if nbits > self.remaining:
            raise PoolExhausted(f"Requested {nbits} bits, {self.remaining} remain")

        record = Allocation(purpose=purpose, offset=self.cursor, length=nbits,
                            cycle_id=self.cycle_id)
        self.allocations.append(record)
        self.cursor += nbits
        if purpose == PskPurpose.AES_KEY:
            self.fixed_aes_key = record
        self._journal(record)
        return self.pool[record.offset:record.end].copy()

    def aes_key(self) -> np.ndarray:
        """The fixed AES key, allocated on first use"""
        if self.fixed_aes_key is None:
            return self.allocate(PskPurpose.AES_KEY, AES_KEY_BITS)
        key = self.fixed_aes_key
        return self.pool[key.offset:key.end].copy()

    def consumed_bits(self, cycle_id: Optional[int] = None,
                      include_aes: bool = True) -> int:
        return sum(
            a.length for a in self.allocations
            if (cycle_id is None or a.cycle_id == cycle_id)
            and (include_aes or a.purpose != PskPurpose.AES_KEY)
        )

    def overlapping(self) -> List[tuple]:
        """Pairs of allocations sharing a bit (always empty for a healthy ledger)"""
        ordered = sorted(self.allocations, key=lambda a: a.offset)
        return [(a, b) for a, b in zip(ordered, ordered[1:]) if a.overlaps(b)]

    def _journal(self, record: Allocation) -> None:
        if self.db is None:
            return
        try:
            self.db.add(LedgerAllocation(
                ledger_id=self.ledger_id, cycle_id=record.cycle_id,
                purpose=record.purpose.value, offset=record.offset, length=record.length,
            ))
            self.db.commit()
        except Exception as e:
            self.db.rollback()
            logger.error(f"Failed to journal allocation: {e}")
            raise HoqsError(f"Ledger journal write failed: {str(e)}") from e

    def pool_bytes(self) -> bytes:
        return len(self.pool).to_bytes(8, "big") + np.packbits(self.pool).tobytes()

    def save(self, name: str) -> str:
        """Write the pool to artifact storage; allocations live in the journal"""
        from app.utils.storage import get_storage
        return get_storage().upload_file(self.pool_bytes(), name)

    @classmethod
    def from_pool_bytes(cls, data: bytes, **kwargs) -> "PskLedger":
        nbits = int.from_bytes(data[:8], "big")
        pool = np.unpackbits(np.frombuffer(data[8:], dtype=np.uint8))[:nbits]
        return cls(pool, **kwargs)

    @classmethod
    def load(cls, name: str, ledger_id: str, db: Session) -> "PskLedger":
        """
        Restore a ledger from its pool artifact and database journal.

        The cursor resumes after the last journaled allocation.
        """
        from app.utils.storage import get_storage
        ledger = cls.from_pool_bytes(get_storage().download_file(name), ledger_id=ledger_id,
                                     db=db)
        rows = (db.query(LedgerAllocation)
                .filter(LedgerAllocation.ledger_id == ledger_id)
                .order_by(LedgerAllocation.offset).all())
        for row in rows:
            record = Allocation.model_validate(row)
            ledger.allocations.append(record)
            if record.purpose == PskPurpose.AES_KEY:
                ledger.fixed_aes_key = record
            ledger.cursor = max(ledger.cursor, record.end)
            ledger.cycle_id = max(ledger.cycle_id, record.cycle_id)
        logger.info(f"Loaded ledger {ledger_id}: cursor={ledger.cursor}/{ledger.pool.size}")
        return ledger

    def advance_to(self, offset: int) -> None:
        """Skip unallocated bits up to offset (re-aligns the peers after an abort)"""
        if offset > self.pool.size:
            raise PoolExhausted(f"Cannot advance to {offset}, pool holds {self.pool.size} bits")
        self.cursor = max(self.cursor, offset)

    def mirror(self, ledger_id: Optional[str] = None) -> "PskLedger":
        """Independent copy of the current state (the peer's view of the same PSK)"""
        peer = PskLedger(self.pool.copy(), ledger_id=ledger_id)
        peer.cursor = self.cursor
        peer.cycle_id = self.cycle_id
        peer.allocations = list(self.allocations)
        peer.fixed_aes_key = self.fixed_aes_key
        return peer

    def __repr__(self):
        return f"<PskLedger {self.ledger_id} cursor={self.cursor}/{self.pool.size}>"
