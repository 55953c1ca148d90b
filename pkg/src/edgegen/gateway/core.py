"""Gateway state machine: frame ingestion, per-node state, generation jobs.

Hostile input never raises out of ingest(); malformed frames only bump a
counter. Listener threads, API handlers and job workers share the state
under one lock with short critical sections. Jobs snapshot their inputs at
submit time, so telemetry arriving later never changes a running job.
"""
from __future__ import annotations

import queue
import threading
import time
import uuid
from dataclasses import dataclass, field

from ..errors import (
    ConfigError,
    EdgegenError,
    FramingError,
    NotFoundError,
    PreconditionError,
    ProtocolError,
)
from ..genbackend import GenerationResult, two_step_pipeline
from ..images import MonoImage, rgb_to_png
from ..prompting import LlmClientConfig, STYLE_PRESETS, SensorSummary, summarize
from ..protocol import (
    FRAME_IMAGE_CHUNK,
    FRAME_IMAGE_MANIFEST,
    FRAME_TELEMETRY,
    FRAME_TELEMETRY_EXT,
    ImageChunk,
    ImageManifest,
    Incomplete,
    PhysicalReading,
    decode_chunk,
    decode_manifest,
    parse_telemetry_frame,
    reassemble,
    to_physical,
    unframe,
)
from .store import SessionStore

DEFAULT_RING_CAPACITY = 4096

FRAME_TYPE_NAMES = {
    FRAME_TELEMETRY: "telemetry",
    FRAME_TELEMETRY_EXT: "telemetry",
    FRAME_IMAGE_MANIFEST: "manifest",
    FRAME_IMAGE_CHUNK: "chunk",
}


@dataclass
class _Assembly:
    manifest: ImageManifest | None = None
    chunks: dict[int, ImageChunk] = field(default_factory=dict)
    total_chunks: int | None = None


@dataclass
class NodeState:
    node_id: int
    last_seen: float = 0.0
    ring: list = field(default_factory=list)          # (idx, t, seq, PhysicalReading)
    assemblies: dict[int, _Assembly] = field(default_factory=dict)
    latest_image: MonoImage | None = None
    latest_image_id: int | None = None
    latest_image_at: float | None = None
    telemetry_count: int = 0


@dataclass
class GenerationJob:
    job_id: str
    node_id: int
    style: str
    user_instruction: str
    backend_id: str
    seed: int
    state: str = "queued"                 # queued -> running -> done | failed
    error: str | None = None
    submitted_at: float = 0.0
    finished_at: float | None = None
    snapshot_image: MonoImage | None = None
    snapshot_summary: SensorSummary | None = None
    result: GenerationResult | None = None

    def public_dict(self) -> dict:
        d = {
            "job_id": self.job_id,
            "node_id": self.node_id,
            "style": self.style,
            "user_instruction": self.user_instruction,
            "backend": self.backend_id,
            "seed": self.seed,
            "state": self.state,
            "submitted_at": self.submitted_at,
            "finished_at": self.finished_at,
        }
        if self.error:
            d["error"] = self.error
        if self.snapshot_summary is not None:
            d["inputs"] = {
                "summary": self.snapshot_summary.mean.to_dict(),
                "motion_level": self.snapshot_summary.motion_level.value,
                "window": list(self.snapshot_summary.window),
            }
        if self.result is not None:
            d["result"] = {
                "image_url": f"/generations/{self.job_id}/image",
                "width": int(self.result.image.shape[1]),
                "height": int(self.result.image.shape[0]),
                "backend": self.result.backend_id,
                "seed": self.result.seed,
                "control_mode": self.result.control_mode,
                "timings": self.result.stage_timings,
            }
            if self.result.prompts is not None:
                d["result"]["prompts"] = {
                    "positive": self.result.prompts.positive,
                    "negative": self.result.prompts.negative,
                    "provenance": self.result.prompts.provenance,
                }
        return d


class Gateway:
    def __init__(self, store: SessionStore, backends: dict | None = None,
                 default_backend: str = "stub",
                 llm: LlmClientConfig | None = None,
                 ring_capacity: int = DEFAULT_RING_CAPACITY,
                 workers: int = 1):
        from ..genbackend import StubBackend

        self.store = store
        self.backends = backends if backends is not None else {"stub": StubBackend()}
        if default_backend not in self.backends:
            raise ConfigError(f"default backend {default_backend!r} not configured")
        self.default_backend = default_backend
        self.llm = llm
        self.ring_capacity = ring_capacity
        self.malformed_count = 0
        self.nodes: dict[int, NodeState] = {}
        self.jobs: dict[str, GenerationJob] = {}
        self._lock = threading.Lock()
        self._listeners: list = []
        self._next_idx = 0
        self._job_queue: queue.Queue = queue.Queue()
        self._workers = [
            threading.Thread(target=self._worker_loop, name=f"genworker-{i}", daemon=True)
            for i in range(max(1, workers))
        ]
        self._closed = False
        self._replay_persisted()
        for w in self._workers:
            w.start()

    # --- startup replay ---

    def _replay_persisted(self) -> None:
        for rec in self.store.iter_telemetry():
            try:
                node = self.nodes.setdefault(rec["node"], NodeState(node_id=rec["node"]))
                reading = PhysicalReading.from_dict(rec["reading"])
                node.ring.append((rec["idx"], rec["t"], rec.get("seq", 0), reading))
                if len(node.ring) > self.ring_capacity:
                    node.ring.pop(0)
                node.telemetry_count += 1
                node.last_seen = max(node.last_seen, rec["t"])
                self._next_idx = max(self._next_idx, rec["idx"] + 1)
            except (KeyError, TypeError, ValueError):
                continue
        for node_id, (image_id, img, mtime) in self.store.latest_images().items():
            node = self.nodes.setdefault(node_id, NodeState(node_id=node_id))
            node.latest_image = img
            node.latest_image_id = image_id
            node.latest_image_at = mtime

    # --- events ---

    def add_listener(self, callback) -> None:
        """callback(kind: str, payload: dict); called from ingest/worker threads."""
        with self._lock:
            self._listeners.append(callback)

    def _emit(self, kind: str, payload: dict) -> None:
        with self._lock:
            listeners = list(self._listeners)
        for cb in listeners:
            try:
                cb(kind, payload)
            except Exception:
                pass

    # --- ingestion ---

    def ingest(self, data: bytes, source_addr=None) -> None:
        """Parse one frame and fold it into node state. Never raises."""
        now = time.time()
        try:
            wf = unframe(bytes(data))
        except FramingError:
            with self._lock:
                self.malformed_count += 1
            return

        kind = FRAME_TYPE_NAMES.get(wf.frame_type)
        if kind is None:
            with self._lock:
                self.malformed_count += 1
            return

        try:
            if kind == "telemetry":
                self._ingest_telemetry(wf, now, len(data))
            elif kind == "manifest":
                self._ingest_manifest(wf, now, len(data))
            else:
                self._ingest_chunk(wf, now, len(data))
        except (ProtocolError, EdgegenError):
            with self._lock:
                self.malformed_count += 1
        except Exception:
            with self._lock:
                self.malformed_count += 1

    def _node(self, node_id: int) -> NodeState:
        return self.nodes.setdefault(node_id, NodeState(node_id=node_id))

    def _ingest_telemetry(self, wf, now: float, nbytes: int) -> None:
        rec = parse_telemetry_frame(wf)
        reading = to_physical(rec)
        with self._lock:
            node = self._node(wf.node_id)
            idx = self._next_idx
            self._next_idx += 1
            node.ring.append((idx, now, wf.seq, reading))
            if len(node.ring) > self.ring_capacity:
                node.ring.pop(0)
            node.telemetry_count += 1
            node.last_seen = now
        self.store.append_telemetry({
            "idx": idx, "t": now, "node": wf.node_id, "seq": wf.seq,
            "reading": reading.to_dict(), "bytes": nbytes,
        })
        self.store.append_frame_event(
            {"t": now, "type": "telemetry", "node": wf.node_id, "bytes": nbytes})
        self._emit("telemetry", {
            "node_id": wf.node_id, "t": now, "seq": wf.seq, "idx": idx,
            "reading": reading.to_dict(),
        })

    def _ingest_manifest(self, wf, now: float, nbytes: int) -> None:
        manifest = decode_manifest(wf.payload)
        with self._lock:
            node = self._node(wf.node_id)
            asm = node.assemblies.setdefault(manifest.image_id, _Assembly())
            if asm.total_chunks is not None and asm.total_chunks != manifest.total_chunks:
                del node.assemblies[manifest.image_id]
                raise ProtocolError("manifest conflicts with buffered chunks")
            asm.manifest = manifest
            asm.total_chunks = manifest.total_chunks
            node.last_seen = now
        self.store.append_frame_event(
            {"t": now, "type": "manifest", "node": wf.node_id, "bytes": nbytes})
        self._try_complete(wf.node_id, manifest.image_id, now)

    def _ingest_chunk(self, wf, now: float, nbytes: int) -> None:
        chunk = decode_chunk(wf.payload)
        with self._lock:
            node = self._node(wf.node_id)
            asm = node.assemblies.setdefault(chunk.image_id, _Assembly())
            if asm.total_chunks is None:
                asm.total_chunks = chunk.total_chunks
            elif asm.total_chunks != chunk.total_chunks:
                del node.assemblies[chunk.image_id]
                raise ProtocolError("chunk total_chunks conflicts with assembly")
            prev = asm.chunks.get(chunk.chunk_index)
            if prev is not None and prev.pixel_bytes != chunk.pixel_bytes:
                del node.assemblies[chunk.image_id]
                raise ProtocolError("duplicate chunk with differing bytes")
            asm.chunks[chunk.chunk_index] = chunk
            node.last_seen = now
        self.store.append_frame_event(
            {"t": now, "type": "chunk", "node": wf.node_id, "bytes": nbytes})
        self._try_complete(wf.node_id, chunk.image_id, now)

    def _try_complete(self, node_id: int, image_id: int, now: float) -> None:
        with self._lock:
            node = self._node(node_id)
            asm = node.assemblies.get(image_id)
            if (asm is None or asm.manifest is None
                    or len(asm.chunks) < (asm.total_chunks or 1)):
                return
            result = reassemble(asm.manifest, list(asm.chunks.values()))
            if isinstance(result, Incomplete):
                return
            del node.assemblies[image_id]
            node.latest_image = result
            node.latest_image_id = image_id
            node.latest_image_at = now
        self.store.save_image(node_id, image_id, result)
        self._emit("image", {
            "node_id": node_id, "image_id": image_id, "t": now,
            "width": result.width, "height": result.height,
        })

    # --- queries ---

    def node_list(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "node_id": n.node_id,
                    "last_seen": n.last_seen,
                    "telemetry_count": n.telemetry_count,
                    "has_image": n.latest_image is not None,
                }
                for n in sorted(self.nodes.values(), key=lambda s: s.node_id)
            ]

    def telemetry_window(self, node_id: int, t_from: float, t_to: float
                         ) -> list[tuple[float, PhysicalReading]]:
        """Sorted slice of persisted log plus ring, deduplicated by record index."""
        with self._lock:
            if node_id not in self.nodes:
                raise NotFoundError(f"unknown node {node_id}")
            ring = list(self.nodes[node_id].ring)
        ring_idx = {entry[0] for entry in ring}
        merged = {}
        for rec in self.store.iter_telemetry():
            if rec.get("node") != node_id or rec["idx"] in ring_idx:
                continue
            if t_from <= rec["t"] <= t_to:
                merged[rec["idx"]] = (rec["t"], PhysicalReading.from_dict(rec["reading"]))
        for idx, t, _seq, reading in ring:
            if t_from <= t <= t_to:
                merged[idx] = (t, reading)
        return [merged[i] for i in sorted(merged)]

    def latest_image(self, node_id: int) -> MonoImage:
        with self._lock:
            node = self.nodes.get(node_id)
            if node is None:
                raise NotFoundError(f"unknown node {node_id}")
            if node.latest_image is None:
                raise PreconditionError(f"node {node_id} has no image yet")
            return node.latest_image

    # --- generation jobs ---

    def submit_generation(self, node_id: int, style: str, user_instruction: str = "",
                          backend_id: str | None = None, seed: int = 0) -> str:
        if style not in STYLE_PRESETS:
            raise ConfigError(f"unknown style {style!r}")
        backend_id = backend_id or self.default_backend
        if backend_id not in self.backends:
            raise ConfigError(f"unknown backend {backend_id!r}")
        with self._lock:
            node = self.nodes.get(node_id)
            if node is None:
                raise NotFoundError(f"unknown node {node_id}")
            if node.latest_image is None:
                raise PreconditionError(f"node {node_id} has no image yet")
            if not node.ring:
                raise PreconditionError(f"node {node_id} has no telemetry yet")
            snapshot_image = node.latest_image
            window = [(t, reading) for _, t, _seq, reading in node.ring]
        snapshot_summary = summarize(window)
        job = GenerationJob(
            job_id=uuid.uuid4().hex[:12],
            node_id=node_id,
            style=style,
            user_instruction=user_instruction,
            backend_id=backend_id,
            seed=seed,
            submitted_at=time.time(),
            snapshot_image=snapshot_image,
            snapshot_summary=snapshot_summary,
        )
        with self._lock:
            self.jobs[job.job_id] = job
        self._emit("job", job.public_dict())
        self._job_queue.put(job.job_id)
        return job.job_id

    def job(self, job_id: str) -> GenerationJob:
        with self._lock:
            job = self.jobs.get(job_id)
        if job is None:
            raise NotFoundError(f"unknown job {job_id!r}")
        return job

    def _worker_loop(self) -> None:
        while True:
            job_id = self._job_queue.get()
            if job_id is None:
                return
            with self._lock:
                job = self.jobs.get(job_id)
                if job is None:
                    continue
                job.state = "running"
            self._emit("job", job.public_dict())
            try:
                result = two_step_pipeline(
                    mono=job.snapshot_image,
                    summary=job.snapshot_summary,
                    style=job.style,
                    user_instruction=job.user_instruction,
                    backend=self.backends[job.backend_id],
                    seed=job.seed,
                    llm=self.llm,
                )
                png = rgb_to_png(result.image)
                meta = {
                    "job_id": job.job_id,
                    "node_id": job.node_id,
                    "style": job.style,
                    "seed": job.seed,
                    "backend": result.backend_id,
                    "control_mode": result.control_mode,
                    "timings": result.stage_timings,
                    "summary": job.snapshot_summary.mean.to_dict(),
                }
                if result.prompts is not None:
                    meta["prompts"] = {"positive": result.prompts.positive,
                                       "negative": result.prompts.negative}
                self.store.save_generation(job.job_id, png, meta)
                with self._lock:
                    job.result = result
                    job.state = "done"
                    job.finished_at = time.time()
            except Exception as exc:
                with self._lock:
                    job.state = "failed"
                    job.error = str(exc)
                    job.finished_at = time.time()
            self._emit("job", job.public_dict())

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for _ in self._workers:
            self._job_queue.put(None)
        for w in self._workers:
            w.join(timeout=5.0)
        self.store.close()
