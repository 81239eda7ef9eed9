"""
Schemas for instruction sequences, PQC key splits and the hybrid cascade
"""
import math
from enum import Enum
from typing import List, Set

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from app.core.errors import InsufficientKey, KeyReuseError, PadError

SID_BYTES = 15
NONCE_BYTES = 16
V_PRIME_BYTES = 15
PQC_KEY_BYTES = 16
TAG_BYTES = 16


class CipherTag(str, Enum):
    """Cascade primitives in their canonical order (OTP < AES < ASCON)"""
    OTP = "OTP"
    AES = "AES"
    ASCON = "ASCON"


CIPHER_ORDER = (CipherTag.OTP, CipherTag.AES, CipherTag.ASCON)


def gamma_for(n_obs: int) -> int:
    return math.ceil(n_obs / 2)


class InstructionSequence(BaseModel):
    """Secret order of cascade steps: gamma of each primitive, no two adjacent alike"""
    steps: List[CipherTag]
    n_obs: int = Field(ge=0)

    @field_validator("n_obs")
    @classmethod
    def validate_n_obs(cls, v: int) -> int:
        if v == 1:
            raise ValueError("n_obs = 1 is not a valid security strength")
        return v

    @model_validator(mode="after")
    def check_composition(self) -> "InstructionSequence":
        gamma = gamma_for(self.n_obs)
        if len(self.steps) != 3 * gamma:
            raise ValueError(f"Expected {3 * gamma} steps for n_obs={self.n_obs}")
        for tag in CIPHER_ORDER:
            if self.steps.count(tag) != gamma:
                raise ValueError(f"Expected {gamma} {tag.value} steps")
        if any(a == b for a, b in zip(self.steps, self.steps[1:])):
            raise ValueError("Adjacent steps must differ")
        return self

    @property
    def gamma(self) -> int:
        return gamma_for(self.n_obs)

    def count(self, tag: CipherTag) -> int:
        return self.steps.count(tag)

    def render(self) -> str:
        return ">".join(step.value for step in self.steps)

    def __str__(self):
        return self.render()


class SplitSecret(BaseModel):
    """256-bit KEM secret cut 128 / 120 / 8 bits"""
    pqc_key: bytes = Field(min_length=PQC_KEY_BYTES, max_length=PQC_KEY_BYTES)
    base_nonce_v_prime: bytes = Field(min_length=V_PRIME_BYTES, max_length=V_PRIME_BYTES)
    counter_seed: int = Field(ge=0, le=255)

    def to_bytes(self) -> bytes:
        return self.pqc_key + self.base_nonce_v_prime + bytes([self.counter_seed])


class CounterBlock(BaseModel):
    """Pre-image of one AES-CTR step: v XOR (sid || i)"""
    base_nonce_v: bytes = Field(min_length=NONCE_BYTES, max_length=NONCE_BYTES)
    sid: bytes = Field(min_length=SID_BYTES, max_length=SID_BYTES)
    counter_i: int = Field(ge=0, le=255)

    def block(self) -> bytes:
        pre = self.sid + bytes([self.counter_i])
        return bytes(a ^ b for a, b in zip(self.base_nonce_v, pre))


class CipherEnvelope(BaseModel):
    """
    Final ciphertext plus the trailer o'.

    Wire layout: [4B ct len][ct][15B sid][16B v][2B ad len][ad][1B pad_size]
    """
    final_ct: bytes
    sid: bytes = Field(min_length=SID_BYTES, max_length=SID_BYTES)
    base_nonce_v: bytes = Field(min_length=NONCE_BYTES, max_length=NONCE_BYTES)
    associated_data: bytes = b""
    pad_size: int = Field(ge=1, le=16)

    def to_bytes(self) -> bytes:
        return b"".join([
            len(self.final_ct).to_bytes(4, "big"),
            self.final_ct,
            self.sid,
            self.base_nonce_v,
            len(self.associated_data).to_bytes(2, "big"),
            self.associated_data,
            bytes([self.pad_size]),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "CipherEnvelope":
        """
        Parse the wire layout.

        Raises:
            PadError: truncated or over-long envelope, or an invalid pad size
        """
        def take(pos: int, size: int) -> bytes:
            if pos + size > len(data):
                raise PadError("Envelope truncated")
            return data[pos:pos + size]

        ct_len = int.from_bytes(take(0, 4), "big")
        pos = 4
        final_ct = take(pos, ct_len)
        pos += ct_len
        sid = take(pos, SID_BYTES)
        pos += SID_BYTES
        v = take(pos, NONCE_BYTES)
        pos += NONCE_BYTES
        ad_len = int.from_bytes(take(pos, 2), "big")
        pos += 2
        ad = take(pos, ad_len)
        pos += ad_len
        pad_size = take(pos, 1)[0]
        if pos + 1 != len(data):
            raise PadError("Trailing bytes after envelope")
        if not 1 <= pad_size <= 16:
            raise PadError(f"Invalid pad size {pad_size}")
        return cls(final_ct=final_ct, sid=sid, base_nonce_v=v, associated_data=ad,
                   pad_size=pad_size)

    @property
    def wire_size(self) -> int:
        return len(self.to_bytes())


class KeyBundle(BaseModel):
    """Key material of one cascade: gamma QKD keys, the PSK AES key and the KEM split"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    qkd_keys: List[np.ndarray]
    aes_key: bytes = Field(min_length=32, max_length=32)
    split: SplitSecret

    _used: Set[int] = PrivateAttr(default_factory=set)

    @field_validator("qkd_keys", mode="before")
    @classmethod
    def validate_keys(cls, v):
        return [np.asarray(k, dtype=np.uint8) for k in v]

    def check_sufficient(self, nbytes: int, otp_steps: int) -> None:
        """
        Raises:
            InsufficientKey: too few QKD keys, or one shorter than nbytes
        """
        if len(self.qkd_keys) < otp_steps:
            raise InsufficientKey(f"{otp_steps} OTP steps need {otp_steps} QKD keys, "
                                  f"got {len(self.qkd_keys)}")
        for idx, key in enumerate(self.qkd_keys[:otp_steps]):
            if key.size < 8 * nbytes:
                raise InsufficientKey(f"QKD key {idx} holds {key.size} bits, "
                                      f"{8 * nbytes} needed")

    def take_qkd_key(self, index: int) -> np.ndarray:
        """
        Raises:
            KeyReuseError: the key already served an OTP step
        """
        if index in self._used:
            raise KeyReuseError(f"QKD key {index} was already used")
        if index >= len(self.qkd_keys):
            raise InsufficientKey(f"No QKD key {index}")
        self._used.add(index)
        return self.qkd_keys[index]

    @property
    def used_keys(self) -> int:
        return len(self._used)


class SizeModel(BaseModel):
    """Ciphertext size after each cascade layer, in bits"""
    layers: List[str]
    sizes: List[int]

    @property
    def final_bits(self) -> int:
        return self.sizes[-1]
