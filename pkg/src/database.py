"""
Run ledger: one row per CLI run and one row per Picard iteration
"""
import logging
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional

from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger(__name__)

Base = declarative_base()

LEDGER_FILE = "ledger.db"


class RunModel(Base):
    """Model for one CLI run"""
    __tablename__ = "runs"

    run_id = Column(String, primary_key=True, index=True)
    subcommand = Column(String, index=True)
    status = Column(String, default="RUNNING")
    exit_code = Column(Integer, nullable=True)
    config = Column(JSON)
    timings = Column(JSON, nullable=True)
    message = Column(String, nullable=True)
    started_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
    finished_at = Column(DateTime, nullable=True)


class IterationLogModel(Base):
    """Model for the per-iteration convergence record of an invert run"""
    __tablename__ = "iteration_log"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(String, index=True)
    iteration = Column(Integer)
    weighted_increment = Column(Float)
    ratio = Column(Float, nullable=True)
    state_norm = Column(Float)


def ledger_url(output_dir: str, url: Optional[str] = None) -> str:
    if url:
        return url
    return f"sqlite:///{(Path(output_dir) / LEDGER_FILE).resolve().as_posix()}"


@lru_cache(maxsize=None)
def _session_factory(url: str):
    engine = create_engine(url, connect_args={"check_same_thread": False} if "sqlite" in url else {})
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def record_run_start(url: str, run_id: str, subcommand: str, config: Dict[str, Any]) -> str:
    """Insert the run with status RUNNING"""
    db = _session_factory(url)()
    try:
        run = RunModel(run_id=run_id, subcommand=subcommand, status="RUNNING", config=config)
        db.add(run)
        db.commit()
        return run.run_id
    finally:
        db.close()


def record_run_finish(url: str, run_id: str, status: str, exit_code: int,
                      timings: Dict[str, float], message: Optional[str] = None):
    """Close the run with its final status"""
    db = _session_factory(url)()
    try:
        run = db.query(RunModel).filter(RunModel.run_id == run_id).first()
        if run:
            run.status = status
            run.exit_code = exit_code
            run.timings = timings
            run.message = message
            run.finished_at = datetime.now(timezone.utc)
            db.commit()
        else:
            logger.warning(f"[LEDGER] run {run_id} not found")
    finally:
        db.close()


def log_iterations(url: str, run_id: str, increments: List[float],
                   ratios: List[Optional[float]], state_norms: List[float]):
    """Append one row per Picard iteration"""
    db = _session_factory(url)()
    try:
        for n, (increment, ratio, norm) in enumerate(zip(increments, ratios, state_norms), start=1):
            db.add(IterationLogModel(
                run_id=run_id,
                iteration=n,
                weighted_increment=increment,
                ratio=ratio,
                state_norm=norm,
            ))
        db.commit()
    finally:
        db.close()


def get_run(url: str, run_id: str) -> Optional[dict]:
    """Retrieve a run with its iteration log"""
    db = _session_factory(url)()
    try:
        run = db.query(RunModel).filter(RunModel.run_id == run_id).first()
        if not run:
            return None
        rows = (
            db.query(IterationLogModel)
            .filter(IterationLogModel.run_id == run_id)
            .order_by(IterationLogModel.iteration)
            .all()
        )
        return {
            "run_id": run.run_id,
            "subcommand": run.subcommand,
            "status": run.status,
            "exit_code": run.exit_code,
            "config": run.config,
            "timings": run.timings,
            "message": run.message,
            "iterations": [
                {
                    "iteration": row.iteration,
                    "weighted_increment": row.weighted_increment,
                    "ratio": row.ratio,
                    "state_norm": row.state_norm,
                }
                for row in rows
            ],
        }
    finally:
        db.close()
