"""
Database configuration and session management
"""
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.ext.declarative import declarative_base
from app.core.config import settings


def make_engine(url: str) -> Engine:
    """Create an engine; SQLite connections may be shared across party threads"""
    return create_engine(
        url,
        connect_args={"check_same_thread": False} if "sqlite" in url else {}
    )


# Base class for models
Base = declarative_base()


def init_db(bind: Optional[Engine] = None):
    """Initialize database tables"""
    # Import models to register them with SQLAlchemy metadata before create_all
    from app.models import ledger  # noqa: F401
    Base.metadata.create_all(bind=bind or make_engine(settings.DATABASE_URL))
