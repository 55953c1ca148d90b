"""Append-only session persistence.

Layout under `<root>/<session>/`:
    telemetry.log   one JSON object per line, replayed on startup
    frames.log      one JSON object per accepted wire frame (accounting)
    images/<node>-<image_id>.pgm
    generations/<job_id>.png and <job_id>.meta

Log writes flush per line so a killed process loses at most the line being
written; replay tolerates a truncated final line.
"""
from __future__ import annotations

import json
import os
import threading

from ..errors import StorageError
from ..images import MonoImage, load_pgm, save_pgm


class SessionStore:
    def __init__(self, root: str, session: str = "default"):
        self.root = root
        self.session = session
        self._write_lock = threading.Lock()
        self.dir = os.path.join(root, session)
        self.images_dir = os.path.join(self.dir, "images")
        self.generations_dir = os.path.join(self.dir, "generations")
        for d in (self.dir, self.images_dir, self.generations_dir):
            os.makedirs(d, exist_ok=True)
        try:
            self._telemetry_f = open(os.path.join(self.dir, "telemetry.log"),
                                     "a", encoding="utf-8")
            self._frames_f = open(os.path.join(self.dir, "frames.log"),
                                  "a", encoding="utf-8")
        except OSError as exc:
            raise StorageError(f"cannot open session logs in {self.dir!r}: {exc}") from exc

    # --- append paths ---

    def append_telemetry(self, record: dict) -> None:
        line = json.dumps(record, separators=(",", ":")) + "\n"
        with self._write_lock:
            self._telemetry_f.write(line)
            self._telemetry_f.flush()

    def append_frame_event(self, event: dict) -> None:
        line = json.dumps(event, separators=(",", ":")) + "\n"
        with self._write_lock:
            self._frames_f.write(line)
            self._frames_f.flush()

    def save_image(self, node_id: int, image_id: int, img: MonoImage) -> str:
        path = os.path.join(self.images_dir, f"{node_id}-{image_id}.pgm")
        save_pgm(img, path)
        return path

    def save_generation(self, job_id: str, png: bytes, meta: dict) -> str:
        png_path = os.path.join(self.generations_dir, f"{job_id}.png")
        with open(png_path, "wb") as f:
            f.write(png)
        with open(os.path.join(self.generations_dir, f"{job_id}.meta"),
                  "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2)
        return png_path

    # --- read paths ---

    def iter_telemetry(self):
        """Replay all persisted telemetry records in append order."""
        path = os.path.join(self.dir, "telemetry.log")
        if not os.path.exists(path):
            return
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError:
                    continue  # torn final line from a killed writer

    def latest_images(self) -> dict[int, tuple[int, MonoImage, float]]:
        """Most recent persisted image per node: node -> (image_id, img, mtime)."""
        out: dict[int, tuple[int, MonoImage, float]] = {}
        if not os.path.isdir(self.images_dir):
            return out
        for name in os.listdir(self.images_dir):
            if not name.endswith(".pgm") or "-" not in name:
                continue
            stem = name[:-4]
            node_s, _, img_s = stem.partition("-")
            try:
                node_id, image_id = int(node_s), int(img_s)
            except ValueError:
                continue
            path = os.path.join(self.images_dir, name)
            mtime = os.path.getmtime(path)
            if node_id not in out or mtime >= out[node_id][2]:
                try:
                    out[node_id] = (image_id, load_pgm(path), mtime)
                except Exception:
                    continue
        return out

    def generation_png(self, job_id: str) -> bytes:
        path = os.path.join(self.generations_dir, f"{job_id}.png")
        try:
            with open(path, "rb") as f:
                return f.read()
        except OSError as exc:
            raise StorageError(f"no generation image for {job_id!r}: {exc}") from exc

    def generation_meta(self, job_id: str) -> dict:
        path = os.path.join(self.generations_dir, f"{job_id}.meta")
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"no generation metadata for {job_id!r}: {exc}") from exc

    def close(self) -> None:
        self._telemetry_f.close()
        self._frames_f.close()
