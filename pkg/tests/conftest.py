import json
import random
import threading
import time
from pathlib import Path

import httpx
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())


@pytest.fixture
def fixtures_dir():
    return FIXTURES


class ScriptedEndpoint:
    """In-process OpenAI-compatible endpoint for httpx.MockTransport.

    ``script`` maps a request to reply text; ``failures`` is a list of HTTP
    status codes returned (in order) before the script is consulted.
    """

    def __init__(self, script=None, failures=(), latency=(0.0, 0.0), seed=0):
        self.script = script or echo_script
        self.failures = list(failures)
        self.latency = latency
        self.rng = random.Random(seed)
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.requests: list[dict] = []
        self.statuses: list[int] = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        with self.lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            delay = self.rng.uniform(*self.latency)
        try:
            time.sleep(delay)
            body = json.loads(request.content)
            with self.lock:
                self.requests.append({"url": str(request.url), "headers": dict(request.headers), "body": body})
                if self.failures:
                    status = self.failures.pop(0)
                    self.statuses.append(status)
                    return httpx.Response(status, json={"error": "scripted"})
                self.statuses.append(200)
            reply = self.script(body["messages"][-1]["content"])
            return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": reply}}]})
        finally:
            with self.lock:
                self.in_flight -= 1

    def client(self):
        return httpx.Client(transport=httpx.MockTransport(self))


def bullet_lines(content: str) -> list[str]:
    return [ln.split(". ", 1)[1] for ln in content.splitlines() if ln[:1].isdigit() and ". " in ln]


def echo_script(content: str) -> str:
    """Outline requests get three numbered bullets; text requests echo their input."""
    if "numbered bullet points" in content:
        return "1. Alpha bullet here.\n2. Beta bullet here.\n3. Gamma bullet here."
    return content


def segment_marker_script(content: str) -> str:
    if "numbered bullet points" in content:
        return "1. A\n2. B\n3. C"
    if "{so_far}" not in content and "Article so far" in content:
        bullet = content.rstrip().splitlines()[-1]
        return f"SEGMENT({bullet})"
    return "WHOLE"
