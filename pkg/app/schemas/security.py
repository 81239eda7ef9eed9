"""
Pydantic schemas for finite-key parameters, budgets and optimizer results
"""
from datetime import timedelta
from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from app.core.config import settings
from app.utils.finite_key_bounds import (
    budget_total,
    eps_auth,
    eps_ec_and_t,
    syndrome_floor,
    verification_bits,
)


class PeType(str, Enum):
    """Parameter-estimation bound used by the optimizer"""
    SERFLING = "serfling"
    CHERNOFF = "chernoff"
    CP_EXACT = "cp_exact"


class GridPreset(str, Enum):
    FULL = "full"
    COARSE = "coarse"


class SecurityParams(BaseModel):
    """Fixed-parameter tuple (s, N, n, p, q, r, t, delta) feeding every bound"""
    s: int = Field(default=6, ge=1, description="eps_QKD = 10^-s")
    N: int = Field(default=20000, gt=1, description="Raw key bits")
    n: Optional[int] = Field(default=None, description="Sampled bits, default floor(N/2)")
    p: int = Field(default=61, ge=1, description="MAC tag bits")
    q: int = Field(default=1, ge=1, description="MAC tag count")
    r: int = Field(default=5000, ge=1, description="Syndrome bits")
    t: Optional[int] = Field(default=None, description="Verification hash bits")
    delta: float = Field(default=0.0, description="QBER threshold, set to the computed alpha")
    r_prime_check: bool = False

    @field_validator("delta")
    @classmethod
    def validate_delta(cls, v: float) -> float:
        if not 0.0 <= v <= settings.QBER_THRESHOLD:
            raise ValueError(f"delta must lie in [0, {settings.QBER_THRESHOLD}], got {v}")
        return v

    @model_validator(mode="after")
    def fill_derived(self) -> "SecurityParams":
        if self.n is None:
            self.n = self.N // 2
        if not 0 < self.n < self.N:
            raise ValueError(f"Need 0 < n < N, got n={self.n}, N={self.N}")
        expected_t = verification_bits(self.s)
        if self.t is None:
            self.t = expected_t
        elif self.t != expected_t:
            raise ValueError(f"t must equal ceil((s+2) log2 10) = {expected_t}, got {self.t}")
        if self.r_prime_check and self.r < syndrome_floor(self.N, self.n, self.delta):
            raise ValueError(
                f"r={self.r} below 1.19 (N-n) h2(delta) = "
                f"{syndrome_floor(self.N, self.n, self.delta):.1f}"
            )
        return self

    @property
    def eps_qkd(self) -> float:
        return 10.0 ** (-self.s)

    @property
    def eps_auth(self) -> float:
        return eps_auth(self.q, self.p)

    @property
    def eps_ec(self) -> float:
        return eps_ec_and_t(self.s)[1]

    @property
    def key_bits(self) -> int:
        """Bits entering reconciliation and privacy amplification (N - n)"""
        return self.N - self.n


class EpsilonBudget(BaseModel):
    """The four failure probabilities and their composable sum"""
    eps_auth: float = Field(ge=0.0, le=1.0)
    eps_ec: float = Field(ge=0.0, le=1.0)
    eps_pa: float = Field(ge=0.0, le=1.0)
    eps_pe: float = Field(ge=0.0, le=1.0)
    eps_total: float = 0.0
    eps_qkd: float

    @model_validator(mode="after")
    def compose_total(self) -> "EpsilonBudget":
        self.eps_total = budget_total(self.eps_auth, self.eps_ec, self.eps_pa, self.eps_pe)
        return self

    def accepted(self, slack: float = 0.0) -> bool:
        return self.eps_total <= self.eps_qkd * (1.0 + slack)


class QberSymbols(BaseModel):
    """Error-rate symbols of one raw key and its sample/remainder split"""
    alpha: float = Field(ge=0.0, le=1.0, description="QBER on the n sampled bits")
    beta: float = Field(ge=0.0, le=1.0, description="QBER on the N - n remainder bits")
    gamma_tot: float = Field(ge=0.0, le=1.0, description="QBER on all N bits")
    K: int = Field(ge=0, description="Total errors")
    nu: Optional[float] = None
    mu: Optional[float] = None

    @model_validator(mode="after")
    def check_split(self) -> "QberSymbols":
        if self.nu is not None and not 0.0 < self.nu <= 0.5:
            raise ValueError(f"nu must lie in (0, 1/2], got {self.nu}")
        if self.mu is not None and (self.nu is None or not 0.0 < self.mu < self.nu):
            raise ValueError("mu must lie in (0, nu)")
        return self


class OptimizerConfig(BaseModel):
    """Grid-search configuration for the key-length optimizer"""
    params: SecurityParams
    pe_type: PeType = PeType.CP_EXACT
    nu_grid_points: int = Field(default_factory=lambda: settings.NU_GRID_POINTS, ge=2)
    mu_grid_points: int = Field(default_factory=lambda: settings.MU_GRID_POINTS, ge=2)
    nu_lo: float = Field(default_factory=lambda: settings.NU_LO, gt=0.0)
    mu_lo: float = Field(default_factory=lambda: settings.MU_LO, gt=0.0)
    slack: float = Field(default_factory=lambda: settings.BUDGET_SLACK, ge=0.0)
    rounding: str = "floor"
    workers: int = Field(default_factory=lambda: settings.OPTIMIZER_WORKERS, ge=1)
    chunk: int = Field(default_factory=lambda: settings.OPTIMIZER_CHUNK, ge=1)

    @field_validator("rounding")
    @classmethod
    def validate_rounding(cls, v: str) -> str:
        if v not in ("floor", "round"):
            raise ValueError("rounding must be 'floor' or 'round'")
        return v

    @classmethod
    def preset(cls, params: SecurityParams, pe_type: PeType,
               grid: GridPreset = GridPreset.FULL, **kwargs) -> "OptimizerConfig":
        """Config with the full or coarse grid resolution"""
        if grid == GridPreset.COARSE:
            kwargs.setdefault("nu_grid_points", settings.COARSE_NU_GRID_POINTS)
            kwargs.setdefault("mu_grid_points", settings.COARSE_MU_GRID_POINTS)
        return cls(params=params, pe_type=pe_type, **kwargs)

    def with_delta(self, delta: float) -> "OptimizerConfig":
        """Copy with the QBER threshold replaced (delta := alpha)"""
        params = self.params.model_copy(update={"delta": delta})
        return self.model_copy(update={"params": SecurityParams(**params.model_dump())})


class OptimizationResult(BaseModel):
    """Maximized key length with witnesses and the realized budget"""
    pe_type: PeType
    l_max: Optional[int] = None
    nu_star: Optional[float] = None
    mu_star: Optional[float] = None
    budget: EpsilonBudget
    grid_resolution: float
    elapsed: timedelta
    diagnostics: Dict[str, float] = {}

    @property
    def feasible(self) -> bool:
        return self.l_max is not None

    def key_rate(self, N: int) -> float:
        """l / N, zero when infeasible"""
        return (self.l_max or 0) / N
