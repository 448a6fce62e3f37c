"""Local classify endpoint: ``POST /classify`` with ``{"text": ...}``.

The submitted text is classified as-is (no cleaning).  Texts below the
cleaning word floor still get an answer, flagged with a warning.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .clean import MIN_WORDS
from .pipeline import ModelArtifact, load_artifact

log = logging.getLogger(__name__)

BELOW_FLOOR = "below cleaning floor"
MAX_BODY = 1 << 20


class Classifier:
    """Holds the artifact once loaded; requests made before that get 503."""

    def __init__(self):
        self.artifact: ModelArtifact | None = None
        self.error: str | None = None
        self._ready = threading.Event()

    def load(self, directory) -> None:
        try:
            self.artifact = load_artifact(directory)
        except Exception as exc:  # reported to clients as 503
            self.error = str(exc)
            log.error("could not load artifact %s: %s", directory, exc)
        finally:
            self._ready.set()

    def wait(self, timeout: float | None = None) -> bool:
        return self._ready.wait(timeout)

    def classify(self, text: str) -> dict:
        art = self.artifact
        probs = art.predict_proba_texts([text])[0]
        warnings = []
        if len(text.split()) < MIN_WORDS:
            warnings.append(BELOW_FLOOR)
        return {
            "probabilities": [round(float(p), 6) for p in probs],
            "labels": [int(i) for i in np.flatnonzero(probs >= art.config.threshold)],
            "warnings": warnings,
        }


def _handler(classifier: Classifier):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            log.debug("%s - " + fmt, self.address_string(), *args)

        def _reply(self, status: int, body: dict) -> None:
            raw = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def do_GET(self):
            if self.path == "/health":
                ready = classifier.artifact is not None
                self._reply(200 if ready else 503, {"ready": ready})
            else:
                self._reply(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/classify":
                self._reply(404, {"error": "not found"})
                return
            if classifier.artifact is None:
                self._reply(503, {"error": classifier.error or "model is loading"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY:
                self._reply(413, {"error": "payload too large"})
                return
            body = self.rfile.read(length) if length else b""
            try:
                obj = json.loads(body) if body else {}
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._reply(400, {"error": "body is not valid JSON"})
                return
            text = obj.get("text") if isinstance(obj, dict) else None
            if not isinstance(text, str) or not text.strip():
                self._reply(400, {"error": "empty payload: send {\"text\": \"...\"}"})
                return
            self._reply(200, classifier.classify(text))

    return Handler


def make_server(artifact_dir, host: str = "127.0.0.1", port: int = 8080,
                background_load: bool = True) -> tuple[ThreadingHTTPServer, Classifier]:
    """Bind the server and start loading the artifact; call ``serve_forever`` on the result."""
    classifier = Classifier()
    server = ThreadingHTTPServer((host, port), _handler(classifier))
    server.daemon_threads = True
    if background_load:
        threading.Thread(target=classifier.load, args=(artifact_dir,), daemon=True).start()
    else:
        classifier.load(artifact_dir)
    return server, classifier
