"""
Schemas for protocol frames, cycle configuration and cycle/batch reports
"""
from enum import Enum, IntEnum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from app.core.config import settings
from app.core.errors import AbortReason
from app.schemas.security import (
    GridPreset,
    OptimizationResult,
    OptimizerConfig,
    PeType,
    SecurityParams,
)


class FrameType(IntEnum):
    IS_CT = 1
    SAMPLE_IDX = 2
    SYNDROME = 3
    VERIFY = 4
    PA_SEED = 5
    KEM_PK = 6
    KEM_CT = 7
    HE_ENV = 8
    MAC = 9
    ABORT = 10


class Frame(BaseModel):
    """type (1 byte) || length (4 bytes, big-endian) || payload"""
    type: FrameType
    payload: bytes = b""

    @property
    def length(self) -> int:
        return len(self.payload)


class Transport(str, Enum):
    IN_PROCESS = "inprocess"
    TCP = "tcp"


class CycleStatus(str, Enum):
    COMPLETED = "completed"
    ABORT_QBER = "abort_qber"
    ABORT_EC_DETECTABLE = "abort_ec_detectable"
    ABORT_VERIFY = "abort_verify"
    ABORT_INFEASIBLE = "abort_infeasible"
    ABORT_MAC = "abort_mac"
    ABORT_KEM = "abort_kem"
    ABORT_HE = "abort_he"
    ABORT_TIMEOUT = "abort_timeout"
    ABORT_PROTOCOL = "abort_protocol"
    ABORT_INSUFFICIENT_KEY = "abort_insufficient_key"

    @classmethod
    def from_reason(cls, reason: AbortReason) -> "CycleStatus":
        return cls(f"abort_{reason.name.lower()}")


class CycleConfig(BaseModel):
    """Everything both parties agree on before a cycle"""
    n_obs: int = Field(default=4, ge=0)
    qber: float = Field(default=0.0644, ge=0.0, le=0.5, description="Simulated channel QBER")
    s: int = Field(default_factory=lambda: settings.S_EXPONENT, ge=1)
    N: int = Field(default_factory=lambda: settings.CYCLE_RAW_BITS, gt=1)
    r: int = Field(default_factory=lambda: settings.CYCLE_SYNDROME_BITS, ge=1)
    pe_type: PeType = PeType.CP_EXACT
    grid: GridPreset = GridPreset.COARSE
    message: bytes = Field(default_factory=lambda: settings.SAMPLE_MESSAGE.encode("utf-8"))
    seed: int = 0
    cycle_id: int = Field(default=0, ge=0)
    transport: Transport = Transport.IN_PROCESS
    kem_parameter_set: str = Field(default_factory=lambda: settings.KEM_PARAMETER_SET)
    timeout_s: float = Field(default_factory=lambda: settings.CHANNEL_TIMEOUT_S, gt=0.0)

    @field_validator("n_obs")
    @classmethod
    def validate_n_obs(cls, v: int) -> int:
        if v == 1:
            raise ValueError("n_obs must lie in {0, 2, 3, 4, ...}")
        if v > settings.N_OBS_MAX:
            raise ValueError(f"n_obs must not exceed N_OBS_MAX={settings.N_OBS_MAX}")
        return v

    @property
    def gamma(self) -> int:
        return -(-self.n_obs // 2)

    def security_params(self) -> SecurityParams:
        return SecurityParams(s=self.s, N=self.N, r=self.r, p=settings.MAC_TAG_BITS,
                              q=settings.MAC_TAG_COUNT)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig.preset(self.security_params(), self.pe_type, self.grid)


class CycleReport(BaseModel):
    """Outcome and per-primitive timing of one hybrid cycle"""
    cycle_id: int
    n_obs: int
    status: CycleStatus
    abort_detail: str = ""
    qkd_time_s: float = 0.0
    pqc_time_s: float = 0.0
    he_time_s: float = 0.0
    total_time_s: float = 0.0
    alphas: List[float] = []
    session_lengths: List[int] = []
    results: List[OptimizationResult] = []
    qkd_bits_extracted: int = 0
    keys_match: bool = False
    message_ok: bool = False
    he_steps: int = 0
    ct_bytes: int = 0
    envelope_bytes: int = 0
    psk_bits_consumed: int = 0
    mac_tags: int = 0
    eps_auth: float = 0.0
    keyspace_bits: float = 0.0

    @property
    def completed(self) -> bool:
        return self.status == CycleStatus.COMPLETED

    @property
    def sessions(self) -> int:
        return len(self.alphas)


class BatchReport(BaseModel):
    """Aggregate over consecutive cycles"""
    n_obs: int
    qber: float
    cycles: int
    completed: int
    total_bits: int
    total_qkd_time_s: float
    key_rate: float = Field(description="Sum of extracted bits over sum of QKD processing time")
    qber_mean: Optional[float] = None
    qber_std: Optional[float] = None
    rates_per_bound: Dict[str, float] = {}
    mean_times: Dict[str, float] = {}
    reports: List[CycleReport] = []
