import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from polarpipe.corpus import Politician, PoliticianRegistry


class ChatServer:
    """Local OpenAI-style endpoint replaying scripted replies.

    ``replies`` is consumed one entry per request; an int entry is sent as
    that HTTP status with an empty body, a str as the message content.
    When the script runs out ``default`` is returned.
    """

    def __init__(self, replies=(), default="neutral"):
        self.replies = list(replies)
        self.default = default
        self.requests = []
        self.lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                with server.lock:
                    server.requests.append({"path": self.path, "headers": dict(self.headers), "body": body})
                    reply = server.replies.pop(0) if server.replies else server.default
                if isinstance(reply, int):
                    self.send_response(reply)
                    self.end_headers()
                    return
                payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": reply}}]})
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(payload.encode())

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def chat_server():
    servers = []

    def make(replies=(), default="neutral"):
        s = ChatServer(replies, default).__enter__()
        servers.append(s)
        return s

    yield make
    for s in servers:
        s.__exit__()


@pytest.fixture
def registry():
    return PoliticianRegistry([
        Politician("anna_s", "Anna", "S", "left", True),
        Politician("bo_s", "Bo", "S", "left", True),
        Politician("cia_v", "Cia", "V", "left", True),
        Politician("dan_m", "Dan", "M", "right", True),
        Politician("eva_sd", "Eva", "SD", "right", False),
    ])


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    from polarpipe.synthetic import write_fixture

    d = tmp_path_factory.mktemp("fixture")
    write_fixture(d)
    return d


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; ``passed`` is None for a skipped criterion."""

    def record(name, passed, detail=""):
        request.config.stash.setdefault(ACCEPTANCE, []).append((name, passed, detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(ACCEPTANCE, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in rows:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"{status}  {name}: {detail}")
