"""
Database models for PlanStitch bench results and persisted plan-cache entries.
Uses SQLAlchemy; SQLite by default, any SQLAlchemy URL via DATABASE_URL.
"""

import logging
import os
from datetime import datetime
from dotenv import load_dotenv

# Load .env file
load_dotenv()
from typing import Optional
from sqlalchemy import (
    create_engine, Column, Integer, String, Float, Boolean,
    DateTime, Text, ForeignKey, JSON, Index, text
)
from sqlalchemy.orm import declarative_base, sessionmaker, relationship

logger = logging.getLogger(__name__)

Base = declarative_base()


class BenchRun(Base):
    """One bench invocation (a suite over a task x seed grid)."""
    __tablename__ = "bench_runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    name = Column(String(100), nullable=False, index=True)
    suite = Column(String(50), default="grid")  # grid, guidance, fast-replanning, eps, cache, amortization
    composer = Column(String(10), nullable=False)  # oc, dc, pc
    maze = Column(String(255), nullable=False)
    config = Column(JSON, nullable=True)  # RunConfig.model_dump()
    status = Column(String(20), default="queued")  # queued, running, done, failed
    summary = Column(JSON, nullable=True)  # BenchSummary.model_dump()
    created_at = Column(DateTime, default=datetime.utcnow)
    finished_at = Column(DateTime, nullable=True)

    # Relationships
    records = relationship("RunRecordRow", back_populates="bench", cascade="all, delete-orphan")


class RunRecordRow(Base):
    """One RunRecord emitted by the bench worker."""
    __tablename__ = "run_records"

    id = Column(Integer, primary_key=True, autoincrement=True)
    bench_id = Column(Integer, ForeignKey("bench_runs.id", ondelete="CASCADE"), nullable=False)
    cell = Column(String(100), default="default")
    task_id = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    composer = Column(String(10), nullable=False)
    success = Column(Boolean, nullable=False)
    wall_time = Column(Float, nullable=False)
    plan_steps = Column(Integer, nullable=True)
    expansions = Column(Integer, default=0)
    graph_edges = Column(Integer, nullable=True)
    cache_hit = Column(Boolean, nullable=True)
    error = Column(Text, nullable=True)

    # Relationships
    bench = relationship("BenchRun", back_populates="records")

    __table_args__ = (
        Index("idx_bench_cell_task_seed", "bench_id", "cell", "task_id", "seed"),
    )


class CachedPlan(Base):
    """Plan-cache entry; the plan is stored in the "t,x,y" text format."""
    __tablename__ = "cached_plans"

    id = Column(Integer, primary_key=True, autoincrement=True)
    maze_hash = Column(String(64), nullable=False, index=True)
    context = Column(String(100), nullable=False)
    start_x = Column(Float, nullable=False)
    start_y = Column(Float, nullable=False)
    goal_x = Column(Float, nullable=False)
    goal_y = Column(Float, nullable=False)
    plan_text = Column(Text, nullable=False)
    hits = Column(Integer, default=0)
    created_at = Column(DateTime, default=datetime.utcnow)


# ============================================================
# Database setup
# ============================================================

DATABASE_URL = os.environ.get("DATABASE_URL", "sqlite:///planstitch.db")

engine = None
SessionLocal = None


def create_db_engine(url: Optional[str] = None) -> bool:
    """Create the engine and session factory; returns False if the database is unreachable."""
    global engine, SessionLocal

    url = url or DATABASE_URL
    try:
        connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
        engine = create_engine(url, pool_pre_ping=True, connect_args=connect_args, echo=False)
        SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
        with engine.connect() as conn:
            conn.execute(text("SELECT 1"))
        logger.info(f"Database connected: {url.split('@')[-1]}")
        return True
    except Exception as e:
        logger.error(f"Database connection failed: {e}")
        engine = None
        SessionLocal = None
        return False


def init_db(url: Optional[str] = None) -> bool:
    """Create tables; safe to call repeatedly."""
    if not create_db_engine(url):
        logger.warning("Could not connect to database, results will only be written as files")
        return False
    Base.metadata.create_all(bind=engine)
    logger.info("Database initialized")
    return True


def get_db():
    """Get database session."""
    if SessionLocal is None:
        create_db_engine()
    if SessionLocal is None:
        raise RuntimeError("Database not available")
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
