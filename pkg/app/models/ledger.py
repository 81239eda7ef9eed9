"""
Database models for the PSK allocation journal and stored optimizer runs
"""
from sqlalchemy import Column, DateTime, Float, Integer, String
from sqlalchemy.sql import func
import uuid
from app.core.database import Base


class LedgerAllocation(Base):
    """One PSK allocation (audit journal row)"""
    __tablename__ = "ledger_allocations"

    id = Column(Integer, primary_key=True, autoincrement=True)
    ledger_id = Column(String, nullable=False, index=True)
    cycle_id = Column(Integer, nullable=False, default=0)

    # is_pad, mac_key, aes_key
    purpose = Column(String, nullable=False)
    offset = Column(Integer, nullable=False)
    length = Column(Integer, nullable=False)

    created_at = Column(DateTime(timezone=True), server_default=func.now())

    def __repr__(self):
        return (f"<LedgerAllocation {self.purpose} [{self.offset}, +{self.length}) "
                f"cycle {self.cycle_id}>")


class OptimizationRun(Base):
    """Stored key-length optimization (one CLI optimize/table1 row)"""
    __tablename__ = "optimization_runs"

    id = Column(String, primary_key=True, default=lambda: str(uuid.uuid4()))

    # Inputs
    pe_type = Column(String, nullable=False)
    s = Column(Integer, nullable=False)
    N = Column(Integer, nullable=False)
    n = Column(Integer, nullable=False)
    delta = Column(Float, nullable=False)
    nu_grid_points = Column(Integer, nullable=False)

    # Witnesses (null when infeasible)
    l_max = Column(Integer, nullable=True)
    nu_star = Column(Float, nullable=True)
    mu_star = Column(Float, nullable=True)

    # Budget
    eps_auth = Column(Float, nullable=False)
    eps_ec = Column(Float, nullable=False)
    eps_pe = Column(Float, nullable=False)
    eps_pa = Column(Float, nullable=False)
    eps_total = Column(Float, nullable=False)
    elapsed_s = Column(Float, nullable=False)

    created_at = Column(DateTime(timezone=True), server_default=func.now())

    def __repr__(self):
        return f"<OptimizationRun {self.pe_type} s={self.s} l={self.l_max} ({self.id})>"
