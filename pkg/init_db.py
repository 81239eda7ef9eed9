#!/usr/bin/env python3
"""
Database initialization script.
Creates the PSK journal and optimizer-run tables for the configured database.
"""
import os
import sys
import logging
from dotenv import load_dotenv
from sqlalchemy import inspect

# Load environment variables from .env file
load_dotenv()

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def main():
    from app.core.database import init_db, make_engine

    database_url = os.getenv("DATABASE_URL", "sqlite:///./hoqs_plus.db")
    if database_url.startswith("postgres://"):
        database_url = database_url.replace("postgres://", "postgresql://", 1)

    try:
        host = database_url.split("@")[1] if "@" in database_url else database_url
        logger.info(f"Connecting to database: {host}")
        engine = make_engine(database_url)
        init_db(bind=engine)
        tables = inspect(engine).get_table_names()
        logger.info(f"Tables in database: {tables}")
    except Exception as e:
        logger.error(f"Error initializing database: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
