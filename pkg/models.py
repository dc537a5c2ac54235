from datetime import datetime, timezone

from sqlalchemy import Column, DateTime, Float, Integer, String, Text

from app import Base


def _utcnow():
    return datetime.now(timezone.utc)


class RunRecord(Base):
    __tablename__ = "run_records"

    id = Column(Integer, primary_key=True)
    command = Column(String(32), nullable=False)
    config_hash = Column(String(64))
    tool_version = Column(String(32), nullable=False)
    exit_status = Column(Integer, nullable=False)
    runtime = Column(Float)  # seconds
    summary = Column(Text)  # JSON string of the run summary
    created_at = Column(DateTime, default=_utcnow)

    def __repr__(self):
        return f'<RunRecord {self.id} {self.command} exit={self.exit_status}>'
