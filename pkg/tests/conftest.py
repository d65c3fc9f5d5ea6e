from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable

import pytest


class StubEndpoint:
    """Local HTTP endpoint implementing the generator wire contract for tests."""

    def __init__(self, handler: Callable[[dict[str, Any]], tuple[int, Any]]):
        self.requests: list[dict[str, Any]] = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8"))
                outer.requests.append(body)
                status, payload = handler(body)
                data = (
                    payload.encode("utf-8")
                    if isinstance(payload, str)
                    else json.dumps(payload, ensure_ascii=False).encode("utf-8")
                )
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, fmt: str, *args: Any) -> None:
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_endpoint():
    endpoints: list[StubEndpoint] = []

    def make(handler: Callable[[dict[str, Any]], tuple[int, Any]]) -> StubEndpoint:
        ep = StubEndpoint(handler)
        endpoints.append(ep)
        return ep

    yield make
    for ep in endpoints:
        ep.close()


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_criterion_" not in report.nodeid:
        return
    tail = report.nodeid.split("::")[-1].removeprefix("test_criterion_")
    number, _, rest = tail.partition("_")
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] criterion {int(number)} ({rest.replace('_', ' ')}): {status}")
