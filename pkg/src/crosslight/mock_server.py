"""Tiny in-process chat-completions server for tests and offline demos.

Serves POST /v1/chat/completions. By default it answers with the scripted
engine (so a full episode can run over real HTTP without a model); a handler
override, a canned response list, or an artificial delay can be installed to
exercise client behaviour (timeouts, garbage output, transport failures).
"""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class MockChatServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 responder=None, delay_s: float = 0.0):
        self.delay_s = delay_s
        self.responder = responder or self._scripted_responder
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except json.JSONDecodeError:
                    self.send_error(400, "bad json")
                    return
                with outer._lock:
                    outer.requests.append({
                        "path": self.path,
                        "headers": dict(self.headers),
                        "body": body,
                    })
                if outer.delay_s:
                    time.sleep(outer.delay_s)
                if self.path != "/v1/chat/completions":
                    self.send_error(404, "unknown path")
                    return
                try:
                    content = outer.responder(body)
                except Exception as e:  # surface as a server error
                    self.send_error(500, str(e))
                    return
                payload = json.dumps({
                    "id": "mock-1",
                    "object": "chat.completion",
                    "model": body.get("model", "mock"),
                    "choices": [{
                        "index": 0,
                        "message": {"role": "assistant", "content": content},
                        "finish_reason": "stop",
                    }],
                }).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):  # quiet
                pass

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @staticmethod
    def _scripted_responder(body: dict) -> str:
        from .backends import BackendError, extract_json, scripted_respond
        prompt = body["messages"][-1]["content"]
        role = _role_from_prompt(prompt)
        try:
            facts = extract_json(prompt)
        except Exception as e:
            raise BackendError(f"no facts in prompt: {e}") from e
        return scripted_respond(role, facts)

    @property
    def base_url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockChatServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def _role_from_prompt(prompt: str) -> str:
    head = prompt.splitlines()[0].lower() if prompt else ""
    if "observer" in head:
        return "scene"
    if "mode selector" in head:
        return "mode_selector"
    if "phase-analysis" in head:
        return "phase"
    if "signal-planning" in head:
        return "plan"
    if "rule-verification" in head:
        return "check"
    return "plan"


def main() -> None:
    import argparse

    parser = argparse.ArgumentParser(description="Run the mock chat server")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8808)
    args = parser.parse_args()
    server = MockChatServer(args.host, args.port).start()
    print(f"mock chat server listening on {server.base_url}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
