"""
PlanStitch results service - main FastAPI application.
Serves bench results from the database, accepts batch bench submissions for
the background worker and streams emitted records over WebSocket.
"""

import asyncio
import logging
import time
from contextlib import asynccontextmanager
from typing import List, Optional

from fastapi import Depends, FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from sqlalchemy import text
from sqlalchemy.orm import Session

import models  # For accessing SessionLocal after init_db()
from bench import SUITES
from config import LOG_FORMAT, check_references, ConfigError
from models import BenchRun, RunRecordRow, get_db, init_db
from render_routes import router as maze_router
from schemas import BenchResponse, BenchSubmit, BenchSummary, RunRecord
from websocket_manager import connection_manager, handle_websocket_message
from worker import bench_worker

# Configure logging
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

SERVER_START_TIME = time.time()

# Event loop of the app; the worker thread schedules broadcasts onto it
_main_loop: Optional[asyncio.AbstractEventLoop] = None


def on_bench_record(bench_id: int, record: RunRecord):
    """Called from the worker thread for every emitted record."""
    if _main_loop is None or _main_loop.is_closed():
        return
    try:
        asyncio.run_coroutine_threadsafe(
            connection_manager.broadcast_record(bench_id, record.model_dump(mode="json")),
            _main_loop,
        )
    except Exception as e:
        logger.error(f"Error scheduling broadcast: {e}")


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Application lifespan handler."""
    global _main_loop

    logger.info("Starting PlanStitch results service...")
    _main_loop = asyncio.get_running_loop()

    db_connected = await _main_loop.run_in_executor(None, init_db)
    logger.info(f"Database connection result: {db_connected}")

    if db_connected:
        bench_worker.register_callback(on_bench_record)
        bench_worker.start()
    else:
        logger.error("Database not connected, bench worker will not start")

    yield

    logger.info("Shutting down PlanStitch results service...")
    try:
        bench_worker.unregister_callback(on_bench_record)
        bench_worker.stop()
    except Exception as e:
        logger.error(f"Error stopping bench worker: {e}")

    try:
        await connection_manager.close_all()
    except Exception as e:
        logger.error(f"Error closing WebSocket connections: {e}")

    logger.info("Shutdown complete")


app = FastAPI(
    title="PlanStitch",
    description="Results service for compositional plan-search benchmarks",
    version="1.0.0",
    lifespan=lifespan,
)

app.include_router(maze_router)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# ============== Health Check ==============

@app.get("/health")
async def health_check():
    """Worker, database and WebSocket status."""
    status = "ok"
    details = {"worker_running": bench_worker.running}

    try:
        if models.SessionLocal:
            db = models.SessionLocal()
            try:
                db.execute(text("SELECT 1"))
                details["database"] = "connected"
            finally:
                db.close()
        else:
            details["database"] = "not_initialized"
            status = "degraded"
    except Exception as e:
        details["database"] = f"error: {str(e)[:50]}"
        status = "degraded"

    details["websocket_connections"] = connection_manager.get_connection_count()
    details["uptime_seconds"] = int(time.time() - SERVER_START_TIME)

    return {"status": status, "timestamp": time.time(), "details": details}


# ============== WebSocket ==============

@app.websocket("/ws")
async def websocket_endpoint(websocket: WebSocket):
    """Streams RunRecords of subscribed benches."""
    await connection_manager.connect(websocket)
    try:
        while True:
            message = await websocket.receive_text()
            await handle_websocket_message(websocket, message)
    except WebSocketDisconnect:
        await connection_manager.disconnect(websocket)
    except Exception as e:
        logger.error(f"WebSocket error: {e}")
        await connection_manager.disconnect(websocket)


# ============== Bench Endpoints ==============

def _get_bench(db: Session, bench_id: int) -> BenchRun:
    bench = db.query(BenchRun).filter(BenchRun.id == bench_id).first()
    if bench is None:
        raise HTTPException(status_code=404, detail=f"Bench {bench_id} not found")
    return bench


@app.get("/api/benches", response_model=List[BenchResponse])
async def list_benches(
    status: Optional[str] = Query(None, description="queued, running, done or failed"),
    limit: int = Query(100, ge=1, le=1000),
    db: Session = Depends(get_db),
):
    query = db.query(BenchRun)
    if status:
        query = query.filter(BenchRun.status == status)
    return query.order_by(BenchRun.id.desc()).limit(limit).all()


@app.get("/api/benches/{bench_id}", response_model=BenchResponse)
async def get_bench(bench_id: int, db: Session = Depends(get_db)):
    return _get_bench(db, bench_id)


@app.get("/api/benches/{bench_id}/records", response_model=List[RunRecord])
async def get_bench_records(
    bench_id: int,
    cell: Optional[str] = Query(None, description="Only records of this cell"),
    db: Session = Depends(get_db),
):
    _get_bench(db, bench_id)
    query = db.query(RunRecordRow).filter(RunRecordRow.bench_id == bench_id)
    if cell:
        query = query.filter(RunRecordRow.cell == cell)
    rows = query.order_by(RunRecordRow.id).all()
    return [
        RunRecord(
            cell=r.cell, task_id=r.task_id, seed=r.seed, composer=r.composer, success=r.success,
            wall_time=r.wall_time, plan_steps=r.plan_steps, expansions=r.expansions,
            graph_edges=r.graph_edges, cache_hit=r.cache_hit, error=r.error,
        )
        for r in rows
    ]


@app.get("/api/benches/{bench_id}/summary", response_model=BenchSummary)
async def get_bench_summary(bench_id: int, db: Session = Depends(get_db)):
    bench = _get_bench(db, bench_id)
    if not bench.summary:
        raise HTTPException(status_code=409, detail=f"Bench {bench_id} is {bench.status}; no summary yet")
    return BenchSummary.model_validate(bench.summary)


@app.post("/api/benches", response_model=BenchResponse, status_code=201)
async def submit_bench(submission: BenchSubmit, db: Session = Depends(get_db)):
    """Queue a bench as a batch job for the background worker."""
    if submission.suite not in SUITES:
        raise HTTPException(status_code=422, detail=f"Unknown suite '{submission.suite}'; choose from {list(SUITES)}")
    cfg = submission.config
    try:
        check_references(cfg)
    except ConfigError as e:
        raise HTTPException(status_code=422, detail=str(e))

    bench = BenchRun(
        name=cfg.name,
        suite=submission.suite,
        composer=cfg.composer,
        maze=cfg.maze,
        config=cfg.model_dump(mode="json"),
        status="queued",
    )
    db.add(bench)
    db.commit()
    db.refresh(bench)

    bench_worker.submit(bench.id)
    logger.info(f"Bench {bench.id} submitted ({submission.suite}, {cfg.composer} on {cfg.maze})")
    return bench


if __name__ == "__main__":
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="PlanStitch results service")
    parser.add_argument("--host", default="0.0.0.0", help="Host to bind to")
    parser.add_argument("--port", type=int, default=8000, help="Port to bind to")
    parser.add_argument("--reload", action="store_true", help="Enable auto-reload")
    args = parser.parse_args()

    uvicorn.run("main:app", host=args.host, port=args.port, reload=args.reload, log_level="info")
