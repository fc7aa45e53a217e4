"""
WebSocket manager for streaming bench records.
Clients subscribe to bench ids (or to all benches) and receive every
RunRecord the bench worker emits for them.
"""

import asyncio
import json
import logging
from typing import Any, Dict, List, Set

from fastapi import WebSocket

logger = logging.getLogger(__name__)

ALL_BENCHES = "__all__"


class ConnectionManager:
    """Manages WebSocket connections and per-bench subscriptions."""

    def __init__(self):
        self._connections: Set[WebSocket] = set()
        # bench key -> websockets
        self._subscriptions: Dict[str, Set[WebSocket]] = {}
        # websocket -> bench keys
        self._client_subscriptions: Dict[WebSocket, Set[str]] = {}
        self._lock = asyncio.Lock()

    async def connect(self, websocket: WebSocket):
        await websocket.accept()
        async with self._lock:
            self._connections.add(websocket)
            self._client_subscriptions[websocket] = set()
        logger.info(f"Client connected. Total: {len(self._connections)}")

    async def disconnect(self, websocket: WebSocket):
        async with self._lock:
            self._connections.discard(websocket)
            for key in self._client_subscriptions.pop(websocket, set()):
                subscribers = self._subscriptions.get(key)
                if subscribers is not None:
                    subscribers.discard(websocket)
                    if not subscribers:
                        del self._subscriptions[key]
        logger.info(f"Client disconnected. Total: {len(self._connections)}")

    async def subscribe(self, websocket: WebSocket, bench_ids: List[int]):
        """Subscribe client to the records of the given benches."""
        async with self._lock:
            for bench_id in bench_ids:
                key = str(bench_id)
                self._subscriptions.setdefault(key, set()).add(websocket)
                if websocket in self._client_subscriptions:
                    self._client_subscriptions[websocket].add(key)
        logger.debug(f"Client subscribed to benches: {bench_ids}")

    async def unsubscribe(self, websocket: WebSocket, bench_ids: List[int]):
        async with self._lock:
            for bench_id in bench_ids:
                key = str(bench_id)
                subscribers = self._subscriptions.get(key)
                if subscribers is not None:
                    subscribers.discard(websocket)
                    if not subscribers:
                        del self._subscriptions[key]
                if websocket in self._client_subscriptions:
                    self._client_subscriptions[websocket].discard(key)
        logger.debug(f"Client unsubscribed from benches: {bench_ids}")

    async def subscribe_all(self, websocket: WebSocket):
        async with self._lock:
            self._subscriptions.setdefault(ALL_BENCHES, set()).add(websocket)
            if websocket in self._client_subscriptions:
                self._client_subscriptions[websocket].add(ALL_BENCHES)

    async def broadcast_record(self, bench_id: int, record: Dict[str, Any]):
        """Send one record to clients subscribed to its bench or to all benches."""
        async with self._lock:
            targets = set(self._subscriptions.get(str(bench_id), set()))
            targets |= self._subscriptions.get(ALL_BENCHES, set())
        if not targets:
            return

        message = json.dumps({"type": "record", "payload": {"bench_id": bench_id, "record": record}})
        disconnected = []
        for websocket in targets:
            try:
                await websocket.send_text(message)
            except Exception as e:
                logger.warning(f"Error sending to client: {e}")
                disconnected.append(websocket)

        for ws in disconnected:
            await self.disconnect(ws)

    async def send_personal(self, websocket: WebSocket, message: Dict):
        try:
            await websocket.send_text(json.dumps(message))
        except Exception as e:
            logger.warning(f"Error sending personal message: {e}")

    def get_connection_count(self) -> int:
        return len(self._connections)

    async def close_all(self):
        """Close all WebSocket connections gracefully."""
        async with self._lock:
            connections = list(self._connections)

        for websocket in connections:
            try:
                await websocket.close(code=1001, reason="Server shutting down")
            except Exception as e:
                logger.debug(f"Error closing websocket: {e}")

        async with self._lock:
            self._connections.clear()
            self._subscriptions.clear()
            self._client_subscriptions.clear()

        logger.info(f"Closed {len(connections)} WebSocket connections")


# Global connection manager
connection_manager = ConnectionManager()


def _bench_ids(payload: Dict[str, Any]) -> List[int]:
    ids = payload.get("benches", [])
    if not isinstance(ids, list):
        raise ValueError("'benches' must be a list of bench ids")
    return [int(i) for i in ids]


async def handle_websocket_message(websocket: WebSocket, message: str):
    """Handle one client message: subscribe, subscribe_all, unsubscribe or ping."""
    try:
        data = json.loads(message)
        msg_type = data.get("type", "")
        payload = data.get("payload", {}) or {}

        if msg_type == "subscribe":
            bench_ids = _bench_ids(payload)
            if bench_ids:
                await connection_manager.subscribe(websocket, bench_ids)
                from worker import bench_worker
                progress = bench_worker.get_progress()
                await connection_manager.send_personal(websocket, {
                    "type": "subscribed",
                    "payload": {
                        "benches": bench_ids,
                        "progress": {str(i): progress.get(i, 0) for i in bench_ids},
                    },
                })

        elif msg_type == "subscribe_all":
            await connection_manager.subscribe_all(websocket)
            await connection_manager.send_personal(websocket, {
                "type": "subscribed",
                "payload": {"all": True},
            })

        elif msg_type == "unsubscribe":
            bench_ids = _bench_ids(payload)
            if bench_ids:
                await connection_manager.unsubscribe(websocket, bench_ids)
                await connection_manager.send_personal(websocket, {
                    "type": "unsubscribed",
                    "payload": {"benches": bench_ids},
                })

        elif msg_type == "ping":
            await connection_manager.send_personal(websocket, {"type": "pong", "payload": {}})

        else:
            await connection_manager.send_personal(websocket, {
                "type": "error",
                "payload": {"message": f"Unknown message type: {msg_type}"},
            })

    except json.JSONDecodeError:
        await connection_manager.send_personal(websocket, {
            "type": "error",
            "payload": {"message": "Invalid JSON"},
        })
    except Exception as e:
        logger.error(f"Error handling WebSocket message: {e}")
        await connection_manager.send_personal(websocket, {
            "type": "error",
            "payload": {"message": str(e)},
        })
