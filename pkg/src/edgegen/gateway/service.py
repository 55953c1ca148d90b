"""HTTP/WebSocket API and the UDP/TCP ingest listeners.

The REST surface:
    GET  /nodes
    GET  /nodes/{id}/telemetry?from=&to=
    GET  /nodes/{id}/image/latest            (portable graymap)
    POST /generate                           -> {job_id}
    GET  /jobs/{id}
    GET  /generations/{id}/image             (PNG)
    WS   /stream                             {type: telemetry|image|job, payload}

Ingest listeners accept raw frames over UDP datagrams or 4-byte
length-prefixed frames over TCP. Slow WebSocket subscribers are evicted
rather than allowed to stall the fan-out.
"""
from __future__ import annotations

import asyncio
import json
import socket
import struct
import threading

from fastapi import FastAPI, HTTPException, Query, Response, WebSocket, WebSocketDisconnect
from pydantic import BaseModel

from ..errors import ConfigError, NotFoundError, PreconditionError, StorageError
from ..images import write_pgm
from .core import Gateway

WS_QUEUE_LIMIT = 512
LEN_PREFIX = ">I"


class GenerateBody(BaseModel):
    node_id: int
    style: str
    user_instruction: str = ""
    backend: str | None = None
    seed: int = 0


class _StreamHub:
    """Bridges gateway listener callbacks (worker threads) into per-socket
    asyncio queues; a full queue evicts its subscriber."""

    def __init__(self):
        self.loop: asyncio.AbstractEventLoop | None = None
        self._subscribers: set[asyncio.Queue] = set()
        self._lock = threading.Lock()

    def attach(self, loop: asyncio.AbstractEventLoop) -> None:
        self.loop = loop

    def subscribe(self) -> asyncio.Queue:
        q: asyncio.Queue = asyncio.Queue(maxsize=WS_QUEUE_LIMIT)
        with self._lock:
            self._subscribers.add(q)
        return q

    def unsubscribe(self, q: asyncio.Queue) -> None:
        with self._lock:
            self._subscribers.discard(q)

    def publish(self, kind: str, payload: dict) -> None:
        if self.loop is None:
            return
        message = json.dumps({"type": kind, "payload": payload})
        with self._lock:
            targets = list(self._subscribers)
        for q in targets:
            self.loop.call_soon_threadsafe(self._offer, q, message)

    def _offer(self, q: asyncio.Queue, message: str) -> None:
        try:
            q.put_nowait(message)
        except asyncio.QueueFull:
            self.unsubscribe(q)
            q.put_nowait(None)  # poison: the socket task closes itself


def create_app(gateway: Gateway, console_dir: str | None = None) -> FastAPI:
    from contextlib import asynccontextmanager

    hub = _StreamHub()

    @asynccontextmanager
    async def lifespan(_app):
        hub.attach(asyncio.get_running_loop())
        yield

    app = FastAPI(title="edgegen gateway", lifespan=lifespan)
    gateway.add_listener(hub.publish)
    app.state.gateway = gateway
    app.state.hub = hub

    @app.get("/nodes")
    def nodes():
        return gateway.node_list()

    @app.get("/nodes/{node_id}/telemetry")
    def telemetry(node_id: int,
                  t_from: float = Query(default=0.0, alias="from"),
                  t_to: float = Query(default=float("inf"), alias="to")):
        try:
            window = gateway.telemetry_window(node_id, t_from, t_to)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return [{"t": t, "reading": r.to_dict()} for t, r in window]

    @app.get("/jobs/{job_id}")
    def job(job_id: str):
        try:
            return gateway.job(job_id).public_dict()
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/generate")
    def generate(body: GenerateBody):
        try:
            job_id = gateway.submit_generation(
                node_id=body.node_id, style=body.style,
                user_instruction=body.user_instruction,
                backend_id=body.backend, seed=body.seed)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except PreconditionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {"job_id": job_id}

    @app.get("/generations/{job_id}/image")
    def generation_image(job_id: str):
        try:
            png = gateway.store.generation_png(job_id)
        except StorageError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=png, media_type="image/png")

    @app.get("/nodes/{node_id}/image/latest")
    def latest_image(node_id: int):
        try:
            img = gateway.latest_image(node_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except PreconditionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return Response(content=write_pgm(img),
                        media_type="image/x-portable-graymap")

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        q = hub.subscribe()
        try:
            while True:
                message = await q.get()
                if message is None:
                    break
                await ws.send_text(message)
        except WebSocketDisconnect:
            pass
        finally:
            hub.unsubscribe(q)

    if console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=console_dir, html=True),
                  name="console")

    return app


class UdpListener(threading.Thread):
    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0):
        super().__init__(name="udp-ingest", daemon=True)
        self.gateway = gateway
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 1 << 20)
        self.sock.bind((host, port))
        self.port = self.sock.getsockname()[1]
        self._running = True

    def run(self) -> None:
        while self._running:
            try:
                data, addr = self.sock.recvfrom(4096)
            except OSError:
                break
            self.gateway.ingest(data, addr)

    def stop(self) -> None:
        self._running = False
        self.sock.close()


class TcpListener(threading.Thread):
    """Accepts connections carrying 4-byte big-endian length-prefixed frames."""

    def __init__(self, gateway: Gateway, host: str = "127.0.0.1", port: int = 0):
        super().__init__(name="tcp-ingest", daemon=True)
        self.gateway = gateway
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(16)
        self.port = self.sock.getsockname()[1]
        self._running = True

    def run(self) -> None:
        while self._running:
            try:
                conn, addr = self.sock.accept()
            except OSError:
                break
            threading.Thread(target=self._serve_conn, args=(conn, addr),
                             daemon=True).start()

    def _serve_conn(self, conn: socket.socket, addr) -> None:
        try:
            buf = b""
            while True:
                while len(buf) < 4:
                    part = conn.recv(65536)
                    if not part:
                        return
                    buf += part
                (n,) = struct.unpack(LEN_PREFIX, buf[:4])
                buf = buf[4:]
                while len(buf) < n:
                    part = conn.recv(65536)
                    if not part:
                        return
                    buf += part
                self.gateway.ingest(buf[:n], addr)
                buf = buf[n:]
        finally:
            conn.close()

    def stop(self) -> None:
        self._running = False
        self.sock.close()


def serve(gateway: Gateway, host: str = "127.0.0.1", http_port: int = 8000,
          ingest_port: int = 0, console_dir: str | None = None) -> None:
    """Run listeners plus the HTTP/WS API; blocks until interrupted."""
    import uvicorn

    udp = UdpListener(gateway, host, ingest_port)
    tcp = TcpListener(gateway, host, udp.port if ingest_port == 0 else ingest_port)
    udp.start()
    tcp.start()
    app = create_app(gateway, console_dir=console_dir)
    ready = {"http": http_port, "ingest_udp": udp.port, "ingest_tcp": tcp.port}
    print("gateway ready " + json.dumps(ready), flush=True)
    try:
        uvicorn.run(app, host=host, port=http_port, log_level="warning")
    finally:
        udp.stop()
        tcp.stop()
        gateway.close()
