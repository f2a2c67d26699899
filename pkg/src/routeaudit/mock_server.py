"""Local chat-completions server for offline runs and client contract tests.

Vision requests (those carrying an image part) are answered from a canned
fixture. In ``pixel-probe`` mode the server looks at the basemap colours
right next to the red route pixels and fills the yes/no slots of a response
template picked by image digest; in ``canned`` mode it returns one of a
fixed list of texts. Text-only requests are treated as extraction calls and
answered by a keyword matcher.

Every request is counted so tests can assert on concurrency and retries.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_FIXTURE = "mock_responses.json"

# default StyleSheet colours
_ROUTE = (255, 0, 0)
_PROBE_COLORS = {
    "q1": [(0xAA, 0xD3, 0xDF)],
    "q2": [(0x70, 0x70, 0x70)],
    "q3": [(0xDD, 0xDD, 0xE8), (0xB0, 0xB0, 0xC8)],
    "q4": [(0xAD, 0xD1, 0x9E)],
}

_PROSE = {
    "q1": ("The route crosses a stretch of water.", "There is no water body along the route."),
    "q2": ("It goes over a railway line.", "No railway crossing is visible."),
    "q3": ("It passes through a pedestrian area.", "It does not pass through any pedestrian area."),
    "q4": ("It also runs through a park.", "No park or forest is traversed."),
}


def load_fixture(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("routeaudit.data").joinpath(DEFAULT_FIXTURE).read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def pixel_probe(png: bytes, radius: int = 3) -> dict[str, bool]:
    """Which basemap classes touch the red route within ``radius`` pixels."""
    from PIL import Image

    arr = np.asarray(Image.open(io.BytesIO(png)).convert("RGB")).astype(np.int16)
    route = np.all(arr == _ROUTE, axis=2)
    ys, xs = np.nonzero(route)
    if len(ys) == 0:
        return {q: False for q in _PROBE_COLORS}
    # work on the route's bounding box plus a margin of ``radius``
    y0, y1 = max(ys.min() - radius, 0), ys.max() + radius + 1
    x0, x1 = max(xs.min() - radius, 0), xs.max() + radius + 1
    arr, route = arr[y0:y1, x0:x1], route[y0:y1, x0:x1]
    pad = np.pad(route, radius)
    h, w = route.shape
    near = np.zeros_like(route)
    for dy in range(2 * radius + 1):
        for dx in range(2 * radius + 1):
            near |= pad[dy:dy + h, dx:dx + w]
    out = {}
    for q, colors in _PROBE_COLORS.items():
        hit = False
        for c in colors:
            hit |= bool(np.any(np.all(arr[near] == c, axis=1)))
        out[q] = hit
    return out


def fill_template(template: str, answers: dict[str, bool]) -> str:
    text = template
    for q, val in answers.items():
        text = text.replace("{" + q + "}", "yes" if val else "no")
        text = text.replace("{" + q + "_prose}", _PROSE[q][0 if val else 1])
    return text


_NEGATION = re.compile(
    r"\b(no|not|none|never|neither|nor|without|avoid(?:s|ed)?|doesn'?t|does not|isn'?t|is not|"
    r"cannot|can't|didn'?t|free of|clear of)\b",
    re.I,
)
_KEYWORDS = {
    "q1": r"water|river|lake|pond|canal|stream|tank|creek",
    "q2": r"rail|railway|train|track|level crossing",
    "q3": r"pedestrian|footpath|walkway|foot ?way|sidewalk|plaza|promenade",
    "q4": r"park|forest|garden|wood|woods|green ?space|trees",
}


def keyword_extract(text: str) -> dict[str, str] | None:
    """Crude rule-based stand-in for an extraction model.

    Splits the text into clauses, takes the last clause mentioning each topic
    (later clauses tend to correct earlier ones: "there is a lake, but the
    route never crosses water") and reads a negation word as "no". Returns
    None unless all four topics are covered.
    """
    clauses = [c.strip() for c in re.split(r"[.;\n!?]|,\s*(?:and|but)\b|\bbut\b", text) if c.strip()]
    out: dict[str, str] = {}
    for q, pat in _KEYWORDS.items():
        for c in clauses:
            if re.search(rf"\b(?:{pat})", c, re.I):
                out[q] = "no" if _NEGATION.search(c) else "yes"
    return out if len(out) == 4 else None


def _extract_payload(prompt: str) -> str:
    m = re.search(r"<<<\n?(.*?)\n?>>>", prompt, re.S)
    return m.group(1) if m else prompt


class MockChatServer:
    """Threaded chat-completions server bound to 127.0.0.1 on a free port.

    ``script`` is a list of per-request behaviours consumed in arrival order;
    each entry is an int status code or a dict ``{"status", "delay", "body"}``.
    Once exhausted every request succeeds. ``delay`` applies to all requests.
    """

    def __init__(
        self,
        fixture: dict | None = None,
        script: list | None = None,
        delay: float = 0.0,
        extractor_replies: list[str] | None = None,
        port: int = 0,
    ):
        self.port = port
        self.fixture = fixture if fixture is not None else load_fixture()
        self.script = list(script or [])
        self.delay = delay
        self.extractor_replies = list(extractor_replies) if extractor_replies is not None else None
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.requests: list[dict] = []
        self.intervals: list[tuple[float, float]] = []
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        assert self._httpd is not None
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> "MockChatServer":
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_POST(self):
                t0 = time.perf_counter()
                with server.lock:
                    server.in_flight += 1
                    server.max_in_flight = max(server.max_in_flight, server.in_flight)
                try:
                    length = int(self.headers.get("Content-Length") or 0)
                    raw = self.rfile.read(length)
                    status, body, delay = server._respond(self.path, raw)
                    if delay:
                        time.sleep(delay)
                    data = body.encode()
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except (BrokenPipeError, ConnectionResetError):
                    pass
                finally:
                    with server.lock:
                        server.in_flight -= 1
                        server.intervals.append((t0, time.perf_counter()))

        self._httpd = ThreadingHTTPServer(("127.0.0.1", self.port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    def _completion(self, model: str, text: str) -> str:
        return json.dumps(
            {
                "id": "mock-" + hashlib.sha256(text.encode()).hexdigest()[:12],
                "object": "chat.completion",
                "model": model,
                "choices": [
                    {"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}
                ],
            }
        )

    def _respond(self, path: str, raw: bytes) -> tuple[int, str, float]:
        with self.lock:
            step = self.script.pop(0) if self.script else None
            self.requests.append({"path": path, "size": len(raw)})
        delay = self.delay
        if isinstance(step, int):
            step = {"status": step}
        if step:
            delay = step.get("delay", delay)
            status = step.get("status", 200)
            if status != 200 or "body" in step:
                return status, step.get("body", json.dumps({"error": f"scripted {status}"})), delay
        if not path.rstrip("/").endswith("/chat/completions"):
            return 404, json.dumps({"error": "not found"}), 0.0
        try:
            req = json.loads(raw)
            content = req["messages"][-1]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            return 400, json.dumps({"error": "bad request"}), 0.0
        model = req.get("model", "mock")
        if isinstance(content, str):
            parts = [{"type": "text", "text": content}]
        else:
            parts = content
        prompt = "".join(p.get("text", "") for p in parts if p.get("type") == "text")
        images = [p for p in parts if p.get("type") == "image_url"]
        if images:
            url = images[0]["image_url"]["url"]
            png = base64.b64decode(url.split(",", 1)[1])
            text = self._vision(png)
        else:
            text = self._extract(prompt)
        return 200, self._completion(model, text), delay

    def _vision(self, png: bytes) -> str:
        vis = self.fixture.get("vision", {})
        digest = hashlib.sha256(png).hexdigest()
        pinned = vis.get("by_image_sha256", {})
        if digest in pinned:
            return pinned[digest]
        pick = int(digest[:8], 16)
        if vis.get("mode", "canned") == "pixel-probe":
            answers = pixel_probe(png, int(vis.get("probe_radius_px", 3)))
            templates = vis["templates"]
            return fill_template(templates[pick % len(templates)], answers)
        responses = vis.get("responses") or ['{"q1": "no", "q2": "no", "q3": "no", "q4": "no"}']
        return responses[pick % len(responses)]

    def _extract(self, prompt: str) -> str:
        if self.extractor_replies is not None:
            with self.lock:
                if self.extractor_replies:
                    return self.extractor_replies.pop(0)
            return "I could not comply."
        found = keyword_extract(_extract_payload(prompt))
        if found is None:
            return "I am unable to determine the answers from this text."
        return json.dumps(found)


def main(argv: list[str] | None = None) -> None:
    import argparse

    ap = argparse.ArgumentParser(description="serve the canned chat-completions mock")
    ap.add_argument("--fixture", default=None)
    ap.add_argument("--port", type=int, default=0)
    args = ap.parse_args(argv)
    srv = MockChatServer(load_fixture(args.fixture), port=args.port).start()
    print(srv.url, flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        srv.stop()


if __name__ == "__main__":
    main()
