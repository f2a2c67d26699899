"""Chat-completions client for vision models, with retries and a bounded batch runner."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import httpx

from .errors import EndpointError, EndpointUnreachable, HttpError, Timeout

log = logging.getLogger(__name__)

PROMPT_VERSION = "v1"

QUESTIONS = {
    "q1": "Does any of the routes cross a water body ?",
    "q2": "Does it pass through a railway-crossing / railway line ?",
    "q3": "Does it pass through pedestrian area ?",
    "q4": "Does the route pass through a park or forested area ?",
}

MAX_IMAGE_BYTES = 10 * 1024 * 1024


def build_prompt() -> str:
    """All four questions in one request, answered as a fixed JSON object."""
    lines = [
        "You are auditing a delivery route drawn in red on a map image.",
        "The map uses standard OpenStreetMap colours: water is light blue, parks and forests are green,",
        "pedestrian areas are pale grey-violet, railways are grey hatched double lines, roads are white.",
        "Answer each question about the red route:",
    ]
    lines += [f"{k}: {q}" for k, q in QUESTIONS.items()]
    lines += [
        "Reply with only this JSON object, using \"yes\" or \"no\" for every value:",
        '{"q1": "yes|no", "q2": "yes|no", "q3": "yes|no", "q4": "yes|no"}',
    ]
    return "\n".join(lines)


def build_question_prompt(key: str) -> str:
    """Single-question variant for the one-question-per-request mode."""
    return (
        "You are auditing a delivery route drawn in red on a map image.\n"
        f"{key}: {QUESTIONS[key]}\n"
        f'Reply with only this JSON object: {{"{key}": "yes|no"}}'
    )


def prompt_digest(prompt: str | None = None) -> str:
    text = build_prompt() if prompt is None else prompt
    return hashlib.sha256(f"{PROMPT_VERSION}\n{text}".encode()).hexdigest()


@dataclass(frozen=True)
class ModelEndpoint:
    base_url: str
    model: str
    api_key: str | None = None
    temperature: float = 0.0
    top_k: int | None = 1
    max_tokens: int = 512
    timeout: float = 120.0
    max_retries: int = 3
    backoff_base: float = 1.0
    params_b: float | None = None  # parameter count in billions, reporting only
    api_key_env: str | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def key(self) -> str | None:
        if self.api_key:
            return self.api_key
        if self.api_key_env:
            return os.environ.get(self.api_key_env)
        return None

    def to_public_json(self) -> dict:
        d = asdict(self)
        d.pop("api_key")
        return d


@dataclass(frozen=True)
class RawResponse:
    leg_id: str
    model: str
    text: str
    latency_s: float
    attempts: int
    timestamp: str

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ErrorRecord:
    leg_id: str
    model: str
    error: str
    message: str
    attempts: int
    status: int | None = None

    def to_json(self) -> dict:
        return {"error_record": True, **asdict(self)}


def _image_png(image) -> bytes:
    if isinstance(image, (bytes, bytearray)):
        return bytes(image)
    if isinstance(image, (str, Path)):
        return Path(image).read_bytes()
    return image.png_bytes()


def _payload(ep: ModelEndpoint, prompt: str, png: bytes | None) -> dict:
    content: list[dict] = [{"type": "text", "text": prompt}]
    if png is not None:
        url = "data:image/png;base64," + base64.b64encode(png).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": url}})
    body = {
        "model": ep.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": ep.temperature,
        "max_tokens": ep.max_tokens,
        "stream": False,
    }
    if ep.top_k is not None:
        body["top_k"] = ep.top_k
    return body


def _headers(ep: ModelEndpoint) -> dict:
    h = {"Content-Type": "application/json"}
    key = ep.key()
    if key:
        h["Authorization"] = f"Bearer {key}"
    return h


def chat(
    ep: ModelEndpoint,
    prompt: str,
    png: bytes | None = None,
    client: httpx.Client | None = None,
) -> tuple[str, float, int]:
    """POST one chat completion; returns (text, latency seconds, attempts).

    Transport errors, timeouts and 5xx responses are retried with
    exponential backoff (``backoff_base`` * 1, 2, 4, ...). 4xx fails at once.
    Latency covers only the final, successful attempt.
    """
    url = ep.base_url.rstrip("/") + "/chat/completions"
    body = _payload(ep, prompt, png)
    own = client is None
    http = client or httpx.Client()
    last: EndpointError | None = None
    attempts = 0
    try:
        for attempt in range(ep.max_retries + 1):
            if attempt:
                time.sleep(ep.backoff_base * 2 ** (attempt - 1))
            attempts += 1
            t0 = time.perf_counter()
            try:
                resp = http.post(url, json=body, headers=_headers(ep), timeout=ep.timeout)
            except httpx.TimeoutException as exc:
                last = Timeout(f"{url}: timed out after {ep.timeout}s ({exc.__class__.__name__})")
                continue
            except httpx.TransportError as exc:
                last = EndpointUnreachable(f"{url}: {exc}")
                continue
            latency = time.perf_counter() - t0
            if resp.status_code >= 500:
                last = HttpError(resp.status_code, resp.text)
                continue
            if resp.status_code >= 400:
                err = HttpError(resp.status_code, resp.text)
                err.attempts = attempts
                raise err
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                err = HttpError(resp.status_code, f"malformed completion body: {exc}")
                err.attempts = attempts
                raise err from exc
            if isinstance(text, list):  # content-part form
                text = "".join(p.get("text", "") for p in text if isinstance(p, dict))
            return str(text), max(latency, 1e-9), attempts
    finally:
        if own:
            http.close()
    assert last is not None
    last.attempts = attempts
    raise last


def evaluate_leg(
    ep: ModelEndpoint,
    image,
    prompt: str | None = None,
    leg_id: str = "",
    client: httpx.Client | None = None,
) -> RawResponse:
    """Send one leg image with the question prompt and record the raw answer."""
    png = _image_png(image)
    if len(png) > MAX_IMAGE_BYTES:
        raise ValueError(f"image is {len(png)} bytes, limit {MAX_IMAGE_BYTES}")
    text, latency, attempts = chat(ep, prompt or build_prompt(), png, client)
    ts = datetime.now(timezone.utc).isoformat()
    return RawResponse(leg_id, ep.model, text, latency, attempts, ts)


def evaluate_leg_per_question(
    ep: ModelEndpoint, image, leg_id: str = "", client: httpx.Client | None = None
) -> RawResponse:
    """One request per question; answers are merged into a single JSON text."""
    png = _image_png(image)
    answers = {}
    total_latency = 0.0
    total_attempts = 0
    for key in QUESTIONS:
        text, latency, attempts = chat(ep, build_question_prompt(key), png, client)
        answers[key] = text
        total_latency += latency
        total_attempts += attempts
    merged = json.dumps(answers)
    ts = datetime.now(timezone.utc).isoformat()
    return RawResponse(leg_id, ep.model, merged, total_latency, total_attempts, ts)


def _error_record(ep: ModelEndpoint, leg_id: str, exc: Exception) -> ErrorRecord:
    return ErrorRecord(
        leg_id,
        ep.model,
        type(exc).__name__,
        str(exc),
        getattr(exc, "attempts", 1),
        getattr(exc, "status", None),
    )


def batch_evaluate(
    ep: ModelEndpoint,
    items: Sequence[tuple[str, object]],
    parallelism: int = 1,
    prompt: str | None = None,
    per_question: bool = False,
    transcript: str | Path | None = None,
) -> list[RawResponse | ErrorRecord]:
    """Evaluate ``(leg_id, image)`` pairs with at most ``parallelism`` requests in flight.

    Results come back in input order. Failures are returned inline as
    ErrorRecord and never stop the batch.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    prompt = prompt or build_prompt()
    results: list[RawResponse | ErrorRecord | None] = [None] * len(items)
    lock = threading.Lock()
    limits = httpx.Limits(max_connections=parallelism, max_keepalive_connections=parallelism)

    with httpx.Client(limits=limits) as client:

        def run(i: int) -> None:
            leg_id, image = items[i]
            try:
                if per_question:
                    res = evaluate_leg_per_question(ep, image, leg_id, client)
                else:
                    res = evaluate_leg(ep, image, prompt, leg_id, client)
            except (EndpointError, OSError, ValueError) as exc:
                log.warning("leg %s on %s failed: %s", leg_id, ep.model, exc)
                res = _error_record(ep, leg_id, exc)
            with lock:
                results[i] = res

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(run, range(len(items))))

    out = [r for r in results if r is not None]
    if transcript is not None:
        with open(transcript, "a", encoding="utf-8") as fh:
            for r in out:
                fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    return out


def latency_stats(results: Sequence[RawResponse | ErrorRecord]) -> dict:
    """Mean and population standard deviation over successful calls only."""
    ok = [r.latency_s for r in results if isinstance(r, RawResponse)]
    return {
        "n_success": len(ok),
        "n_failure": sum(isinstance(r, ErrorRecord) for r in results),
        "mean_s": statistics.fmean(ok) if ok else None,
        "std_s": statistics.pstdev(ok) if ok else None,
    }


def load_responses(text: str) -> list[RawResponse | ErrorRecord]:
    out: list[RawResponse | ErrorRecord] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        if d.pop("error_record", False):
            out.append(ErrorRecord(**d))
        else:
            out.append(RawResponse(**d))
    return out
