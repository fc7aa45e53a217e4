"""
Background worker for queued bench runs.
Runs in a separate thread, stores every RunRecord as it is emitted and
notifies registered callbacks (the WebSocket broadcaster).
"""

import logging
import queue
import threading
from datetime import datetime
from typing import Callable, Dict, Optional, Set

import models  # For accessing SessionLocal dynamically
from models import BenchRun, RunRecordRow
from schemas import RunConfig, RunRecord

logger = logging.getLogger(__name__)


class BenchNotFoundError(LookupError):
    pass


class BenchWorker:
    """Background worker that drains the bench queue one submission at a time."""

    def __init__(self, workers: int = 1):
        self._running = False
        self._thread: Optional[threading.Thread] = None
        self._queue: "queue.Queue[int]" = queue.Queue()
        self._workers = workers
        self._callbacks: Set[Callable] = set()
        self._lock = threading.Lock()
        self._progress: Dict[int, int] = {}

    def start(self):
        """Start the worker thread."""
        if self._running:
            return
        self._running = True
        self._thread = threading.Thread(target=self._run_loop, daemon=True)
        self._thread.start()
        logger.info(f"Bench worker started ({self._workers} grid workers)")

    def stop(self):
        """Stop the worker thread."""
        self._running = False
        if self._thread:
            self._thread.join(timeout=5)
        logger.info("Bench worker stopped")

    @property
    def running(self) -> bool:
        return self._running

    def register_callback(self, callback: Callable):
        """Register callback for emitted records."""
        with self._lock:
            self._callbacks.add(callback)

    def unregister_callback(self, callback: Callable):
        with self._lock:
            self._callbacks.discard(callback)

    def submit(self, bench_id: int):
        """Queue an already persisted BenchRun."""
        self._queue.put(bench_id)
        logger.info(f"Bench {bench_id} queued (queue size {self._queue.qsize()})")

    def get_progress(self) -> Dict[int, int]:
        """Records emitted so far per running or finished bench."""
        with self._lock:
            return dict(self._progress)

    def _run_loop(self):
        """Main loop; a failing bench is marked failed and the loop continues."""
        while self._running:
            try:
                bench_id = self._queue.get(timeout=0.5)
            except queue.Empty:
                continue
            try:
                self.process(bench_id)
            except BenchNotFoundError as e:
                logger.warning(str(e))
            except Exception as e:
                logger.error(f"Bench {bench_id} failed: {e}")
                self._set_status(bench_id, "failed")
            finally:
                self._queue.task_done()

    def process(self, bench_id: int, extra_sink: Optional[Callable] = None):
        """Run one queued bench synchronously; returns (records, summary).

        With the plan cache enabled the stored cache is loaded first and saved back after each cell.
        """
        from bench import run_ablation

        if models.SessionLocal is None:
            raise RuntimeError("Database not available")
        db = models.SessionLocal()
        try:
            bench = db.query(BenchRun).filter(BenchRun.id == bench_id).first()
            if bench is None:
                raise BenchNotFoundError(f"Bench {bench_id} not found")
            cfg = RunConfig.model_validate(bench.config or {})
            suite = bench.suite
            bench.status = "running"
            db.commit()
        finally:
            db.close()

        def sink(record: RunRecord):
            self._on_record(bench_id, record)
            if extra_sink is not None:
                extra_sink(record)

        records, summary = run_ablation(suite, cfg, self._workers, sink=sink,
                                       session_factory=models.SessionLocal)

        db = models.SessionLocal()
        try:
            bench = db.query(BenchRun).filter(BenchRun.id == bench_id).first()
            bench.summary = summary.model_dump()
            bench.status = "done"
            bench.finished_at = datetime.utcnow()
            db.commit()
        finally:
            db.close()
        logger.info(f"Bench {bench_id} done")
        return records, summary

    def _on_record(self, bench_id: int, record: RunRecord):
        self._save_record(bench_id, record)
        with self._lock:
            self._progress[bench_id] = self._progress.get(bench_id, 0) + 1
        self._notify_callbacks(bench_id, record)

    def _save_record(self, bench_id: int, record: RunRecord):
        if models.SessionLocal is None:
            return
        db = models.SessionLocal()
        try:
            db.add(RunRecordRow(bench_id=bench_id, **record.model_dump()))
            db.commit()
        except Exception as e:
            logger.error(f"Error saving record for bench {bench_id}: {e}")
            db.rollback()
        finally:
            db.close()

    def _set_status(self, bench_id: int, status: str):
        if models.SessionLocal is None:
            return
        db = models.SessionLocal()
        try:
            bench = db.query(BenchRun).filter(BenchRun.id == bench_id).first()
            if bench is not None:
                bench.status = status
                bench.finished_at = datetime.utcnow()
                db.commit()
        except Exception as e:
            logger.error(f"Error updating bench {bench_id}: {e}")
            db.rollback()
        finally:
            db.close()

    def _notify_callbacks(self, bench_id: int, record: RunRecord):
        """Notify all registered callbacks of one new record."""
        with self._lock:
            callbacks = list(self._callbacks)
        for callback in callbacks:
            try:
                callback(bench_id, record)
            except Exception as e:
                logger.error(f"Callback error: {e}")


# Global worker instance
bench_worker = BenchWorker()
