"""
Schemas for PSK allocations and MAC tags
"""
from enum import Enum

from pydantic import BaseModel, Field


class PskPurpose(str, Enum):
    IS_PAD = "is_pad"
    MAC_KEY = "mac_key"
    AES_KEY = "aes_key"


class Allocation(BaseModel):
    """A half-open interval [offset, offset + length) of the PSK pool"""
    purpose: PskPurpose
    offset: int = Field(ge=0)
    length: int = Field(gt=0)
    cycle_id: int = 0

    class Config:
        from_attributes = True

    @property
    def end(self) -> int:
        return self.offset + self.length

    def overlaps(self, other: "Allocation") -> bool:
        return self.offset < other.end and other.offset < self.end


class MacTag(BaseModel):
    """p-bit Wegman-Carter tag and the ledger offset of its one-time pad"""
    tag: int = Field(ge=0)
    bits: int = 61
    key_offset: int = -1

    def to_bytes(self) -> bytes:
        return self.tag.to_bytes((self.bits + 7) // 8, "big")

    @classmethod
    def from_bytes(cls, data: bytes, bits: int = 61, key_offset: int = -1) -> "MacTag":
        return cls(tag=int.from_bytes(data, "big"), bits=bits, key_offset=key_offset)
