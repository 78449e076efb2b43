"""Offline chat endpoint that answers from recorded transcripts.

A transcript file is JSON::

    {"transcripts": {"<request digest or agent id>": "<reply text>"},
     "default": "<reply when nothing matches>",
     "delay_secs": 0}

Lookup order is the request digest, then the agent named in the system
prompt, then the default reply.
"""

from __future__ import annotations

import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .llm import request_digest

_AGENT_RE = re.compile(r"You are (\w+),")


class MockTranscriptServer:
    def __init__(self, transcripts: dict[str, str] | None = None, default: str = "", delay_secs: float = 0.0):
        self.transcripts = dict(transcripts or {})
        self.default = default
        self.delay_secs = delay_secs
        self.requests: list[dict] = []
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @classmethod
    def from_file(cls, path) -> "MockTranscriptServer":
        doc = json.loads(Path(path).read_text())
        return cls(doc.get("transcripts", {}), doc.get("default", ""), float(doc.get("delay_secs", 0)))

    def reply_for(self, request: dict) -> str:
        messages = request.get("messages", [])
        digest = request_digest(messages)
        if digest in self.transcripts:
            return self.transcripts[digest]
        m = _AGENT_RE.search(messages[0]["content"]) if messages else None
        if m and m.group(1) in self.transcripts:
            return self.transcripts[m.group(1)]
        return self.default

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/api/chat"

    def start(self) -> "MockTranscriptServer":
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                request = json.loads(body or b"{}")
                outer.requests.append(request)
                if outer.delay_secs:
                    time.sleep(outer.delay_secs)
                payload = json.dumps({"message": {"role": "assistant", "content": outer.reply_for(request)}}).encode()
                try:
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                except (BrokenPipeError, ConnectionResetError):
                    pass  # the client gave up (timeout test)

            def log_message(self, *args):
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
