"""
Schemas for simulated raw keys and QKD session outcomes
"""
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.schemas.security import OptimizationResult


class RawKeyPair(BaseModel):
    """Correlated sifted bits of Alice and Bob (stands in for the optical link)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alice_bits: np.ndarray
    bob_bits: np.ndarray
    true_qber: float = Field(ge=0.0, le=0.5)
    rng_seed: int

    @field_validator("alice_bits", "bob_bits", mode="before")
    @classmethod
    def validate_bits(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.uint8)
        if v.ndim != 1 or np.any(v > 1):
            raise ValueError("Bit strings must be 1-D arrays of 0/1")
        return v

    @model_validator(mode="after")
    def check_lengths(self) -> "RawKeyPair":
        if self.alice_bits.size != self.bob_bits.size:
            raise ValueError("Alice and Bob must hold the same number of bits")
        return self

    @property
    def size(self) -> int:
        return int(self.alice_bits.size)

    def mismatch_rate(self) -> float:
        return float(np.mean(self.alice_bits != self.bob_bits)) if self.size else 0.0


class SessionStatus(str, Enum):
    COMPLETED = "completed"
    ABORT_QBER = "abort_qber"
    ABORT_EC_DETECTABLE = "abort_ec_detectable"
    ABORT_VERIFY = "abort_verify"
    ABORT_INFEASIBLE = "abort_infeasible"


class SessionOutcome(BaseModel):
    """Result of one QKD post-processing session"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: SessionStatus
    alpha: float
    final_key: np.ndarray = Field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    peer_key: np.ndarray = Field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    report: Optional[OptimizationResult] = None
    leaked_bits: int = 0
    decoder_iterations: int = 0

    @model_validator(mode="after")
    def check_release(self) -> "SessionOutcome":
        released = self.final_key.size > 0 or self.peer_key.size > 0
        if released and self.status != SessionStatus.COMPLETED:
            raise ValueError("Key material may only be released by a completed session")
        if self.status != SessionStatus.ABORT_QBER and self.alpha > settings.QBER_THRESHOLD:
            raise ValueError("alpha above the threshold must abort the session")
        return self

    @property
    def completed(self) -> bool:
        return self.status == SessionStatus.COMPLETED

    @property
    def key_length(self) -> int:
        return int(self.final_key.size)
