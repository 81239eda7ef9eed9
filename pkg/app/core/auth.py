"""
Wegman-Carter message authentication over GF(2^61) with PSK key material
"""
import hmac
import logging
from functools import lru_cache
from typing import TYPE_CHECKING, Tuple

import galois
import numpy as np

from app.core.errors import AuthenticationFailure, ValidationError
from app.schemas.ledger import MacTag, PskPurpose

if TYPE_CHECKING:
    from app.utils.psk_ledger import PskLedger

logger = logging.getLogger(__name__)

FIELD_BITS = 61
BLOCK_BYTES = 7
KEY_BITS = 2 * FIELD_BITS


@lru_cache(maxsize=1)
def field() -> type:
    """GF(2^61) class (construction compiles the arithmetic once)"""
    return galois.GF(2 ** FIELD_BITS)


def bits_to_int(bits: np.ndarray) -> int:
    """Big-endian integer value of a 0/1 array"""
    bits = np.asarray(bits, dtype=np.uint8)
    return int("".join(map(str, bits.tolist())), 2) if bits.size else 0


def split_key(key: np.ndarray) -> Tuple[int, int]:
    """122 key bits -> (hash key, one-time pad), 61 bits each"""
    key = np.asarray(key, dtype=np.uint8)
    if key.size != KEY_BITS:
        raise ValidationError(f"Wegman-Carter keys are {KEY_BITS} bits, got {key.size}")
    return bits_to_int(key[:FIELD_BITS]), bits_to_int(key[FIELD_BITS:])


def poly_hash(hash_key: int, message: bytes) -> int:
    """
    Polynomial hash of 7-byte message blocks followed by a byte-length block,
    evaluated at the hash key and multiplied by it once more:
    h = m_1 k^(L+1) + ... + m_L k^2 + len k.
    """
    GF = field()
    blocks = [int.from_bytes(message[i:i + BLOCK_BYTES], "big")
              for i in range(0, len(message), BLOCK_BYTES)]
    blocks.append(len(message) % (1 << FIELD_BITS))
    poly = galois.Poly(GF(blocks + [0]), field=GF)
    return int(poly(GF(hash_key)))


def wc_mac(key: np.ndarray, message: bytes, key_offset: int = -1) -> MacTag:
    """
    Tag = poly_hash(key part 1, message) XOR key part 2.

    Args:
        key: 122 PSK bits (hash key then pad)
        message: Bytes to authenticate
        key_offset: Ledger offset of the key material, for audit

    Returns:
        61-bit MacTag
    """
    hash_key, pad = split_key(key)
    return MacTag(tag=poly_hash(hash_key, message) ^ pad, bits=FIELD_BITS, key_offset=key_offset)


def wc_verify(key: np.ndarray, message: bytes, tag: MacTag) -> bool:
    """Recompute the tag and compare in constant time"""
    expected = wc_mac(key, message)
    return hmac.compare_digest(expected.to_bytes(), tag.to_bytes())


class Authenticator:
    """
    Per-cycle MAC context of one party: a 61-bit hash key drawn once per cycle
    and a fresh 61-bit pad per tag. Both parties allocate in frame order, so
    their ledgers stay aligned.
    """

    def __init__(self, ledger: "PskLedger"):
        self.ledger = ledger
        self.hash_key: np.ndarray = np.zeros(0, dtype=np.uint8)
        self.tags_used = 0

    def begin_cycle(self) -> None:
        self.hash_key = self.ledger.allocate(PskPurpose.MAC_KEY, FIELD_BITS)
        self.tags_used = 0

    def _next_key(self) -> Tuple[np.ndarray, int]:
        if self.hash_key.size != FIELD_BITS:
            raise ValidationError("begin_cycle() must run before tagging")
        offset = self.ledger.cursor
        pad = self.ledger.allocate(PskPurpose.MAC_KEY, FIELD_BITS)
        self.tags_used += 1
        return np.concatenate([self.hash_key, pad]), offset

    def tag(self, message: bytes) -> MacTag:
        key, offset = self._next_key()
        return wc_mac(key, message, key_offset=offset)

    def verify(self, message: bytes, tag: MacTag) -> None:
        """
        Raises:
            AuthenticationFailure: the tag does not match
        """
        key, _ = self._next_key()
        if not wc_verify(key, message, tag):
            logger.warning("MAC verification failed")
            raise AuthenticationFailure("MAC tag mismatch")
