"""Mock remote scorer speaking the gateway wire protocol.

Serves ``POST /v1/score`` and ``POST /v1/qa`` from either a constant score
or a score file keyed back to items by edited-image bytes (the protocol
carries no item ids, so images are the only stable key). Used as a test
fixture and runnable standalone:

    python -m tiebench.mock_scorer --port 8701 --constant 50
    python -m tiebench.mock_scorer --port 8701 --manifest m.jsonl --scores s.jsonl
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Optional

__all__ = ["MockScorerServer", "score_lookup_from_files"]


def _hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def score_lookup_from_files(manifest_path: str | Path, scores_path: str | Path):
    """Build (score_fn, qa_fn) that replay a score file, keying requests to
    items via the sha256 of the edited image bytes."""
    from .dataset import load_manifest
    from .gateway import load_score_file

    manifest_path = Path(manifest_path)
    items = load_manifest(manifest_path, check_images=False)
    base = manifest_path.parent
    digest_to_item: dict[str, str] = {}
    for item in items:
        ref = Path(item.edited_image)
        resolved = ref if ref.is_absolute() else base / ref
        digest_to_item[_hash_bytes(resolved.read_bytes())] = item.item_id

    run = load_score_file(scores_path)

    def _item_for(request: dict) -> str:
        digest = _hash_bytes(base64.b64decode(request["edited_image"]))
        if digest not in digest_to_item:
            raise KeyError("edited image does not match any manifest item")
        return digest_to_item[digest]

    def score_fn(request: dict) -> float:
        return run.predictions[(_item_for(request), request["dimension"])]

    def qa_fn(request: dict) -> bool:
        return run.qa_predictions[_item_for(request)]

    return score_fn, qa_fn


class MockScorerServer:
    """In-process HTTP scorer for tests and local runs.

    ``fail_first`` makes the first N requests return ``fail_status`` before
    behaving normally (exercises the gateway's retry path).
    """

    def __init__(
        self,
        score_fn: Optional[Callable[[dict], float]] = None,
        qa_fn: Optional[Callable[[dict], bool]] = None,
        *,
        host: str = "127.0.0.1",
        port: int = 0,
        fail_first: int = 0,
        fail_status: int = 500,
    ):
        self.score_fn = score_fn or (lambda request: 50.0)
        self.qa_fn = qa_fn or (lambda request: True)
        self.request_count = 0
        self._fail_remaining = fail_first
        self._fail_status = fail_status
        self._lock = threading.Lock()

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    request = json.loads(self.rfile.read(length))
                except json.JSONDecodeError:
                    self._reply(400, {"error": "bad json"})
                    return
                with server._lock:
                    server.request_count += 1
                    if server._fail_remaining > 0:
                        server._fail_remaining -= 1
                        self._reply(server._fail_status, {"error": "induced failure"})
                        return
                try:
                    if self.path == "/v1/score":
                        self._reply(
                            200,
                            {"score": server.score_fn(request), "latency_ms": 0.0},
                        )
                    elif self.path == "/v1/qa":
                        self._reply(
                            200,
                            {"answer": server.qa_fn(request), "latency_ms": 0.0},
                        )
                    else:
                        self._reply(404, {"error": "unknown path"})
                except Exception as exc:
                    self._reply(500, {"error": str(exc)})

            def _reply(self, status: int, obj: dict):
                body = json.dumps(obj).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockScorerServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockScorerServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Run a mock scorer service.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8701)
    parser.add_argument("--constant", type=float, default=50.0,
                        help="constant score when no score file is given")
    parser.add_argument("--manifest", help="manifest to key items by edited image")
    parser.add_argument("--scores", help="score file to replay")
    args = parser.parse_args(argv)

    if args.manifest and args.scores:
        score_fn, qa_fn = score_lookup_from_files(args.manifest, args.scores)
    else:
        score_fn, qa_fn = (lambda request: args.constant), (lambda request: True)

    server = MockScorerServer(score_fn, qa_fn, host=args.host, port=args.port)
    print(f"mock scorer listening on {server.url}", flush=True)
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._httpd.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
