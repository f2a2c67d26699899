"""Turn raw model text into four booleans, falling back to an extraction model."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Mapping

from .errors import EndpointError, ExtractionFailed, ParseFailure
from .llm_client import ModelEndpoint, RawResponse, chat

KEYS = ("q1", "q2", "q3", "q4")
DIRECT = "direct-parse"
EXTRACTED = "llm-extracted"

_TRUE = {"yes", "true", "y", "1"}
_FALSE = {"no", "false", "n", "0"}


class _Unrecognized:
    def __repr__(self) -> str:
        return "Unrecognized"

    def __bool__(self) -> bool:
        raise TypeError("Unrecognized has no truth value")


Unrecognized = _Unrecognized()


def normalize_answer(token) -> bool | _Unrecognized:
    """yes/true/y/1 -> True, no/false/n/0 -> False (case-insensitive), else Unrecognized."""
    if isinstance(token, bool):
        return token
    if isinstance(token, int) and token in (0, 1):
        return bool(token)
    if not isinstance(token, str):
        return Unrecognized
    t = token.strip().strip(".,;:!*\"'`").strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    return Unrecognized


def _lenient(value) -> bool | _Unrecognized:
    """Accept values like "Yes - it crosses a lake" by reading the leading word."""
    v = normalize_answer(value)
    if v is not Unrecognized or not isinstance(value, str):
        return v
    m = re.match(r"\s*\**\s*([A-Za-z]+|[01])\b", value)
    return normalize_answer(m.group(1)) if m else Unrecognized


@dataclass(frozen=True)
class Verdict:
    leg_id: str
    q1: bool
    q2: bool
    q3: bool
    q4: bool
    source: str
    raw_digest: str

    @property
    def answers(self) -> tuple[bool, bool, bool, bool]:
        return (self.q1, self.q2, self.q3, self.q4)

    def to_json(self) -> dict:
        return {
            "leg_id": self.leg_id,
            "q1": self.q1,
            "q2": self.q2,
            "q3": self.q3,
            "q4": self.q4,
            "source": self.source,
            "raw_digest": self.raw_digest,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Verdict":
        return cls(d["leg_id"], *(bool(d[k]) for k in KEYS), d["source"], d["raw_digest"])


def raw_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


_KEY_ALIASES = re.compile(r"^\s*(?:q|question)?[\s_\-]*([1-4])\s*$", re.I)


def _answers_from_mapping(obj) -> dict[str, bool] | None:
    if not isinstance(obj, dict):
        return None
    # some models nest the answers one level down, e.g. {"answers": {...}}
    if len(obj) == 1:
        (inner,) = obj.values()
        if isinstance(inner, dict):
            nested = _answers_from_mapping(inner)
            if nested is not None:
                return nested
    out: dict[str, bool] = {}
    for k, v in obj.items():
        m = _KEY_ALIASES.match(str(k))
        if not m:
            continue
        key = f"q{m.group(1)}"
        if isinstance(v, dict):
            v = v.get("answer", v.get("value"))
        val = _lenient(v)
        if val is Unrecognized:
            return None
        if key in out and out[key] != val:
            return None
        out[key] = val
    return out if len(out) == 4 else None


def _strict_json(text: str) -> dict[str, bool] | None:
    try:
        return _answers_from_mapping(json.loads(text))
    except (ValueError, TypeError):
        return None


_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.S)


def _fenced_json(text: str) -> dict[str, bool] | None:
    for m in _FENCE.finditer(text):
        got = _strict_json(m.group(1).strip())
        if got is not None:
            return got
    # bare object somewhere in prose
    for m in re.finditer(r"\{[^{}]*\}", text, re.S):
        got = _strict_json(m.group(0))
        if got is not None:
            return got
    return None


_KV = re.compile(
    r"(?:\bq(?:uestion)?\s*[_\-#]?\s*([1-4])\b)\s*[\"'*|]*\s*[:=)|\-–—]*\s*[\"'*]*\s*"
    r"(yes|no|true|false|y|n)\b",
    re.I,
)


def _kv_scan(text: str) -> dict[str, bool] | None:
    out: dict[str, bool] = {}
    for m in _KV.finditer(text):
        key = f"q{m.group(1)}"
        val = normalize_answer(m.group(2))
        if key in out and out[key] != val:
            return None
        out[key] = val
    return out if len(out) == 4 else None


PARSERS = (("strict-json", _strict_json), ("fenced-json", _fenced_json), ("key-value", _kv_scan))


def parse_answers(text: str) -> dict[str, bool]:
    """Run the parser chain; raises ParseFailure unless one yields all four answers."""
    if not isinstance(text, str):
        raise ParseFailure("response text is not a string")
    for _, parser in PARSERS:
        got = parser(text)
        if got is not None:
            return got
    raise ParseFailure("no parser found all four answers")


def parse_structured(r: RawResponse, source: str = DIRECT) -> Verdict:
    """Verdict from a raw response: strict JSON, fenced JSON, then key-value scan."""
    try:
        a = parse_answers(r.text)
    except ParseFailure:
        raise
    except Exception as exc:  # the chain must never leak anything but ParseFailure
        raise ParseFailure(f"parser error: {exc}") from exc
    return Verdict(r.leg_id, a["q1"], a["q2"], a["q3"], a["q4"], source, raw_digest(r.text))


EXTRACTION_PROMPT = (
    "Below is a model's answer to four yes/no questions about a delivery route:\n"
    "q1: does it cross a water body; q2: does it cross a railway line;\n"
    "q3: does it pass through a pedestrian area; q4: does it pass through a park or forest.\n"
    "Read the answer and reply with only this JSON object, values \"yes\" or \"no\":\n"
    '{"q1": "yes|no", "q2": "yes|no", "q3": "yes|no", "q4": "yes|no"}\n'
    "Answer text:\n<<<\n{text}\n>>>"
)


def build_extraction_prompt(text: str) -> str:
    return EXTRACTION_PROMPT.replace("{text}", text)


def extract_with_model(ep: ModelEndpoint, r: RawResponse, attempts: int = 2) -> Verdict:
    """Ask a text model to restate ``r`` as JSON and parse that.

    The extractor gets ``attempts`` tries; if none parses, ExtractionFailed.
    Endpoint errors propagate.
    """
    prompt = build_extraction_prompt(r.text)
    for _ in range(attempts):
        text, _, _ = chat(ep, prompt)
        try:
            a = parse_answers(text)
        except ParseFailure:
            continue
        return Verdict(r.leg_id, a["q1"], a["q2"], a["q3"], a["q4"], EXTRACTED, raw_digest(r.text))
    raise ExtractionFailed(f"{r.leg_id}: extractor output unparseable after {attempts} tries")


def to_verdict(r: RawResponse, extractor: ModelEndpoint | None) -> Verdict | None:
    """Direct parse first, extractor second; None marks the leg unanswered."""
    try:
        return parse_structured(r)
    except ParseFailure:
        pass
    if extractor is None:
        return None
    try:
        return extract_with_model(extractor, r)
    except (ExtractionFailed, EndpointError):
        return None


def dump_verdicts(verdicts) -> str:
    return "".join(json.dumps(v.to_json(), sort_keys=True) + "\n" for v in verdicts)


def load_verdicts(text: str) -> list[Verdict]:
    return [Verdict.from_json(json.loads(l)) for l in text.splitlines() if l.strip()]


def dump_verdict_map(verdicts: Mapping[str, Verdict | None]) -> str:
    """JSON lines in leg order; unanswered legs are written as ``{"leg_id", "unanswered": true}``."""
    lines = []
    for leg_id, v in verdicts.items():
        doc = {"leg_id": leg_id, "unanswered": True} if v is None else v.to_json()
        lines.append(json.dumps(doc, sort_keys=True) + "\n")
    return "".join(lines)


def load_verdict_map(text: str) -> dict[str, Verdict | None]:
    out: dict[str, Verdict | None] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out[d["leg_id"]] = None if d.get("unanswered") else Verdict.from_json(d)
    return out
