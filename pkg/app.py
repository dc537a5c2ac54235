import os
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import DeclarativeBase, sessionmaker

from errors import ConfigError

TOOL_VERSION = "0.1.0"
SCHEMA_VERSION = "1.0"
DEFAULT_SEED = 20240601

# Set up logging once for every entry point
logging.basicConfig(
    level=getattr(logging, os.environ.get("DEGENOP_LOG_LEVEL", "INFO").upper(), logging.INFO),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


class Base(DeclarativeBase):
    pass


def _int_env(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")


@dataclass(frozen=True)
class Settings:
    """Environment-level configuration; CLI flags override these values."""

    database_url: Optional[str]
    seed: int
    threads: int

    @classmethod
    def from_env(cls) -> "Settings":
        threads = _int_env("DEGENOP_THREADS", 1)
        if threads < 1:
            raise ConfigError(f"DEGENOP_THREADS must be positive, got {threads}")
        return cls(
            database_url=os.environ.get("DEGENOP_DATABASE_URL") or None,
            seed=_int_env("DEGENOP_SEED", DEFAULT_SEED),
            threads=threads,
        )

    def database_uri(self, out_dir) -> str:
        if self.database_url:
            return self.database_url
        return f"sqlite:///{Path(out_dir).resolve() / 'runs.db'}"


def make_session_factory(database_uri: str) -> sessionmaker:
    engine = create_engine(database_uri, pool_recycle=300, pool_pre_ping=True)
    # Import models and create tables
    import models  # noqa: F401
    Base.metadata.create_all(engine)
    logger.debug(f"run ledger ready at {engine.url!r}")
    return sessionmaker(bind=engine)
