"""Bundled mock HTTP server honoring the generation and prompt contracts.

Stands in for a real diffusion/LLM service in integration tests and demos:
POST /v1/generate returns a deterministic PNG at the requested size derived
from the seed and control image; POST /v1/prompt echoes a canned prompt
pair built from the submitted sensor text.

Run standalone:  python -m edgegen.mockgen [--port N]
"""
from __future__ import annotations

import argparse
import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .images import png_to_rgb, rgb_to_png


def _generate_png(body: dict) -> bytes:
    w = int(body.get("width", 968))
    h = int(body.get("height", 728))
    seed = int(body.get("seed", 0))
    base = np.zeros((h, w, 3), dtype=np.uint8)
    base[:, :, 0] = (seed * 37) % 256
    base[:, :, 1] = (seed * 101) % 256
    base[:, :, 2] = (seed * 197) % 256
    control_b64 = body.get("control_image")
    if control_b64:
        control = png_to_rgb(base64.b64decode(control_b64))
        if control.shape == base.shape:
            base = ((base.astype(np.int64) + control.astype(np.int64)) // 2
                    ).astype(np.uint8)
    return rgb_to_png(base)


class MockHandler(BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        return json.loads(self.rfile.read(length) or b"{}")

    def _send_json(self, obj: dict, status: int = 200) -> None:
        data = json.dumps(obj).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        try:
            body = self._read_json()
        except (ValueError, OSError):
            self._send_json({"error": "bad request body"}, status=400)
            return
        if self.path == "/v1/generate":
            png = _generate_png(body)
            self._send_json({"image": base64.b64encode(png).decode()})
        elif self.path == "/v1/prompt":
            sensor_text = body.get("sensor_text", "")
            style = body.get("style", "realistic")
            instruction = body.get("user_instruction") or "a faithful scene"
            self._send_json({
                "positive": f"{style} rendering, {instruction}, conditions: {sensor_text}",
                "negative": "low quality, artifacts, deformed",
            })
        else:
            self._send_json({"error": f"unknown path {self.path}"}, status=404)


class MockServer:
    """Context-manager wrapper used by tests: serves on an ephemeral port."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.httpd = ThreadingHTTPServer((host, port), MockHandler)
        self.port = self.httpd.server_address[1]
        self.url = f"http://{host}:{self.port}"
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="mock generation/LLM server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7860)
    args = parser.parse_args(argv)
    httpd = ThreadingHTTPServer((args.host, args.port), MockHandler)
    print(f"mock server on http://{args.host}:{httpd.server_address[1]}", flush=True)
    httpd.serve_forever()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
