"""Adherence extraction from prescription + note pairs via a chat-completion backend.

Round one asks for a label in a strict line-oriented reply; round two feeds
that answer back and asks the model to double-check it. ``MockBackend`` applies
a fixed phrase table so the whole pipeline runs offline and deterministically.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .labels import NONADHERENCE_TYPES, AdherenceLabel, LabelInvariantError

log = logging.getLogger(__name__)

NOTE_OPEN = "<<<NOTE"
NOTE_CLOSE = "NOTE>>>"
PRESCRIPTION_OPEN = "<<<PRESCRIPTION"
PRESCRIPTION_CLOSE = "PRESCRIPTION>>>"
PREVIOUS_OPEN = "<<<PREVIOUS_ANSWER"
PREVIOUS_CLOSE = "PREVIOUS_ANSWER>>>"

SYSTEM_PROMPT = (
    "You are a clinical documentation reviewer. You read primary care notes and "
    "decide whether the patient took a prescribed hypertension medication as instructed."
)

TYPE_DESCRIPTIONS = {
    "missed": "the patient missed doses, stopped, or never started the medication",
    "different_dose": "the patient took a different dosage than prescribed",
    "different_medication": "the patient took a different medication than prescribed",
    "different_timing": "the patient took the medication at a different time than instructed",
}

REPLY_FORMAT = """\
Answer with exactly these lines and nothing else:
NON_ADHERENT: yes or no
TYPES: comma-separated categories from the list above, or none
EVIDENCE: one verbatim excerpt copied from the note (repeat this line per excerpt), or EVIDENCE: none"""


class ExtractionError(RuntimeError):
    pass


class ExtractionFailedError(ExtractionError):
    """Backend reply could not be turned into a valid label."""

    def __init__(self, message: str, raw_reply: str):
        super().__init__(message)
        self.raw_reply = raw_reply


class TransientBackendError(ExtractionError):
    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class VerificationFailedError(ExtractionError):
    """Second-round reply was unusable; ``first_label`` is the round-one answer."""

    def __init__(self, message: str, first_label: AdherenceLabel, raw_reply: str):
        super().__init__(message)
        self.first_label = first_label
        self.raw_reply = raw_reply


class BackendTransportError(Exception):
    """Raised by backends for network errors and rate limits (retryable)."""


@dataclass(frozen=True)
class ExtractionRequest:
    prescription_text: str
    note_text: str
    pair_id: str = ""

    def __post_init__(self):
        if not self.note_text.strip():
            raise ValueError("note_text must be nonempty")


class ChatBackend(Protocol):
    source: str

    def complete(self, system: str, user: str) -> str: ...


def render_prompt(request: ExtractionRequest) -> str:
    if not request.prescription_text.strip():
        raise ValueError("prescription_text must be nonempty")
    categories = "\n".join(f"- {k}: {v}" for k, v in TYPE_DESCRIPTIONS.items())
    return (
        "Below are the hypertension prescriptions recorded at a patient's first visit "
        "and the clinical note written at the patient's next visit.\n\n"
        f"{PRESCRIPTION_OPEN}\n{request.prescription_text.strip()}\n{PRESCRIPTION_CLOSE}\n\n"
        f"{NOTE_OPEN}\n{request.note_text}\n{NOTE_CLOSE}\n\n"
        "Tasks:\n"
        "(a) Decide whether the note documents non-adherence to the prescribed medication.\n"
        "(b) If so, report every applicable non-adherence category:\n"
        f"{categories}\n"
        "(c) Copy the sentences of the note that support your answer verbatim.\n"
        "Report only what the note states; if nothing indicates non-adherence, answer no.\n\n"
        f"{REPLY_FORMAT}\n"
    )


def render_verification_prompt(request: ExtractionRequest, first_reply: str) -> str:
    return (
        render_prompt(request)
        + f"\nA previous review produced this answer:\n{PREVIOUS_OPEN}\n{first_reply.strip()}\n"
        f"{PREVIOUS_CLOSE}\n\n"
        "Double-check the previous answer against the note. Correct it if any part is "
        "unsupported by the note, otherwise repeat it. Use the same answer format.\n"
    )


def format_reply(label: AdherenceLabel) -> str:
    lines = [
        f"NON_ADHERENT: {'yes' if label.non_adherent else 'no'}",
        f"TYPES: {', '.join(label.types) if label.types else 'none'}",
    ]
    if label.evidence:
        lines += [f"EVIDENCE: {e}" for e in label.evidence]
    else:
        lines.append("EVIDENCE: none")
    return "\n".join(lines)


_KEY = re.compile(r"^\s*(NON_ADHERENT|TYPES|EVIDENCE)\s*:\s*(.*?)\s*$")


def parse_reply(reply: str, note_text: str, source: str = "llm") -> AdherenceLabel:
    """Parse the key-value reply; evidence must occur verbatim in the note."""
    flag = None
    types: list[str] = []
    evidence: list[str] = []
    saw_types = False
    for line in reply.splitlines():
        if not line.strip():
            continue
        m = _KEY.match(line)
        if not m:
            raise ExtractionFailedError(f"unexpected reply line: {line!r}", reply)
        key, value = m.groups()
        if key == "NON_ADHERENT":
            if flag is not None:
                raise ExtractionFailedError("NON_ADHERENT given twice", reply)
            v = value.lower()
            if v not in ("yes", "no"):
                raise ExtractionFailedError(f"NON_ADHERENT must be yes/no, got {value!r}", reply)
            flag = v == "yes"
        elif key == "TYPES":
            saw_types = True
            if value.lower() != "none" and value:
                types += [t.strip().lower() for t in value.split(",") if t.strip()]
        else:
            excerpt = value.strip().strip('"')
            if excerpt.lower() != "none" and excerpt:
                evidence.append(excerpt)
    if flag is None or not saw_types:
        raise ExtractionFailedError("reply lacks NON_ADHERENT or TYPES line", reply)
    bad = [t for t in types if t not in NONADHERENCE_TYPES]
    if bad:
        raise ExtractionFailedError(f"unknown non-adherence types {bad}", reply)
    if flag and not types:
        raise ExtractionFailedError("non-adherent reply names no type", reply)
    try:
        label = AdherenceLabel(flag, tuple(types), tuple(evidence), source=source)
        label.check_evidence(note_text)
    except LabelInvariantError as exc:
        raise ExtractionFailedError(str(exc), reply) from exc
    return label


def _between(text: str, open_tag: str, close_tag: str) -> str | None:
    i = text.find(open_tag)
    j = text.find(close_tag, i + len(open_tag)) if i >= 0 else -1
    if i < 0 or j < 0:
        return None
    return text[i + len(open_tag): j].strip("\n")


# phrase -> type; first matching sentence is the evidence excerpt
MOCK_RULES: tuple[tuple[str, str], ...] = (
    ("ran out", "missed"),
    ("did not refill", "missed"),
    ("didn't refill", "missed"),
    ("stopped taking", "missed"),
    ("missed doses", "missed"),
    ("forgot to take", "missed"),
    ("not picked up", "missed"),
    ("took half", "different_dose"),
    ("doubled the dose", "different_dose"),
    ("taking a lower dose", "different_dose"),
    ("switched to", "different_medication"),
    ("takes it at night instead", "different_timing"),
    ("takes it in the evening instead", "different_timing"),
)

_SENTENCE = re.compile(r"[^.!?\n]+[.!?]?")


def mock_label(note_text: str) -> AdherenceLabel:
    """Label a note with the fixed phrase table (default: adherent)."""
    lowered = note_text.lower()
    types: list[str] = []
    evidence: list[str] = []
    for phrase, kind in MOCK_RULES:
        pos = lowered.find(phrase)
        if pos < 0:
            continue
        if kind not in types:
            types.append(kind)
        for m in _SENTENCE.finditer(note_text):
            if m.start() <= pos < m.end():
                sentence = m.group().strip()
                if sentence not in evidence:
                    evidence.append(sentence)
                break
    if not types:
        return AdherenceLabel(False, source="mock")
    return AdherenceLabel(True, tuple(types), tuple(evidence), source="mock")


class MockBackend:
    """Offline backend answering from ``MOCK_RULES``.

    ``planted`` maps a note substring to a round-one reply, which lets tests plant
    a wrong first answer that the second round then corrects. ``second_round``
    optionally overrides every round-two reply.
    """

    source = "mock"

    def __init__(self, planted: dict[str, str] | None = None, second_round: str | None = None):
        self.planted = dict(planted or {})
        self.second_round = second_round
        self.calls: list[str] = []

    def complete(self, system: str, user: str) -> str:
        self.calls.append(user)
        note = _between(user, NOTE_OPEN, NOTE_CLOSE)
        if note is None:
            return "I could not find the note."
        is_verification = PREVIOUS_OPEN in user
        if is_verification and self.second_round is not None:
            return self.second_round
        if not is_verification:
            for key, reply in self.planted.items():
                if key in note:
                    return reply
        return format_reply(mock_label(note))


class ScriptedBackend:
    """Returns canned replies in order; an ``Exception`` instance in the script is raised."""

    source = "mock"

    def __init__(self, replies: Sequence[str | Exception]):
        self.replies = list(replies)
        self.calls: list[str] = []

    def complete(self, system: str, user: str) -> str:
        self.calls.append(user)
        if not self.replies:
            raise AssertionError("scripted backend exhausted")
        r = self.replies.pop(0)
        if isinstance(r, Exception):
            raise r
        return r


@dataclass
class HttpChatBackend:
    """OpenAI-compatible chat-completion endpoint (POST {base_url}/chat/completions)."""

    base_url: str
    model: str
    token_env: str = "NONADHERENCE_API_TOKEN"
    temperature: float = 0.0
    timeout: float = 60.0
    source: str = "llm"

    def payload(self, system: str, user: str) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }

    def complete(self, system: str, user: str) -> str:
        import httpx

        token = os.environ.get(self.token_env)
        if not token:
            raise ExtractionError(f"environment variable {self.token_env} is not set")
        try:
            resp = httpx.post(
                self.base_url.rstrip("/") + "/chat/completions",
                json=self.payload(system, user),
                headers={"Authorization": f"Bearer {token}"},
                timeout=self.timeout,
            )
        except httpx.TransportError as exc:
            raise BackendTransportError(str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise BackendTransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ExtractionError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ExtractionFailedError("unexpected response body", resp.text) from exc


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    initial_backoff: float = 1.0
    sleep: Callable[[float], None] = time.sleep


def _call(backend: ChatBackend, user: str, retry: RetryPolicy) -> str:
    delay = retry.initial_backoff
    for attempt in range(1, retry.attempts + 1):
        try:
            return backend.complete(SYSTEM_PROMPT, user)
        except BackendTransportError as exc:
            if attempt == retry.attempts:
                raise TransientBackendError(
                    f"backend unavailable after {attempt} attempts: {exc}", attempt
                ) from exc
            log.warning("backend error (%s); retrying in %.1fs", exc, delay)
            retry.sleep(delay)
            delay *= 2
    raise AssertionError("unreachable")


REPAIR_NOTE = (
    "\nYour previous reply did not follow the required answer format or quoted text "
    "that is not in the note. Reply again using exactly the required lines.\n"
)


def _ask(backend: ChatBackend, user: str, note: str, retry: RetryPolicy) -> tuple[AdherenceLabel, str]:
    raw = _call(backend, user, retry)
    try:
        return parse_reply(raw, note, backend.source), raw
    except ExtractionFailedError:
        log.info("malformed reply, sending one repair request")
    raw2 = _call(backend, user + REPAIR_NOTE, retry)
    return parse_reply(raw2, note, backend.source), raw2


def extract_adherence(
    request: ExtractionRequest, backend: ChatBackend, retry: RetryPolicy = RetryPolicy()
) -> AdherenceLabel:
    return _ask(backend, render_prompt(request), request.note_text, retry)[0]


def verify_round_two(
    request: ExtractionRequest,
    first_label: AdherenceLabel,
    backend: ChatBackend,
    retry: RetryPolicy = RetryPolicy(),
) -> AdherenceLabel:
    user = render_verification_prompt(request, format_reply(first_label))
    try:
        return _ask(backend, user, request.note_text, retry)[0]
    except ExtractionFailedError as exc:
        raise VerificationFailedError(str(exc), first_label, exc.raw_reply) from exc


@dataclass(frozen=True)
class ExtractionResult:
    pair_id: str
    label: AdherenceLabel | None
    first_label: AdherenceLabel | None = None
    raw_replies: tuple[str, ...] = ()
    verification_failed: bool = False
    error: str | None = None


def run_extraction_one(
    request: ExtractionRequest, backend: ChatBackend, retry: RetryPolicy = RetryPolicy()
) -> ExtractionResult:
    """Both rounds for one request, failures captured in the result."""
    try:
        first, raw1 = _ask(backend, render_prompt(request), request.note_text, retry)
    except (ExtractionFailedError, TransientBackendError) as exc:
        raw = getattr(exc, "raw_reply", "")
        return ExtractionResult(request.pair_id, None, raw_replies=(raw,) if raw else (), error=str(exc))
    user2 = render_verification_prompt(request, format_reply(first))
    try:
        final, raw2 = _ask(backend, user2, request.note_text, retry)
    except ExtractionFailedError as exc:
        return ExtractionResult(
            request.pair_id, first, first, (raw1, exc.raw_reply), verification_failed=True, error=str(exc)
        )
    except TransientBackendError as exc:
        return ExtractionResult(request.pair_id, first, first, (raw1,), verification_failed=True, error=str(exc))
    return ExtractionResult(request.pair_id, final, first, (raw1, raw2))


def run_extraction(
    requests: Iterable[ExtractionRequest],
    backend: ChatBackend,
    max_in_flight: int = 4,
    retry: RetryPolicy = RetryPolicy(),
) -> dict[str, ExtractionResult]:
    """Extract labels for many requests with bounded concurrency; keyed by pair_id."""
    requests = list(requests)
    ids = [r.pair_id for r in requests]
    if len(set(ids)) != len(ids):
        raise ValueError("pair_id values must be unique")
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        results = list(pool.map(lambda r: run_extraction_one(r, backend, retry), requests))
    return {r.pair_id: r for r in sorted(results, key=lambda r: r.pair_id)}


def _label_json(label: AdherenceLabel | None):
    if label is None:
        return None
    return {"non_adherent": label.non_adherent, "types": list(label.types),
            "evidence": list(label.evidence), "source": label.source}


def write_results(results: dict[str, ExtractionResult], path: str | Path) -> None:
    """One JSON object per line, sorted by pair_id, raw replies kept for audit."""
    with open(path, "w") as fh:
        for pid in sorted(results):
            r = results[pid]
            fh.write(json.dumps({
                "pair_id": r.pair_id,
                "label": _label_json(r.label),
                "first_label": _label_json(r.first_label),
                "raw_replies": list(r.raw_replies),
                "verification_failed": r.verification_failed,
                "error": r.error,
            }, sort_keys=True) + "\n")


def read_results(path: str | Path) -> dict[str, ExtractionResult]:
    def lab(d):
        return None if d is None else AdherenceLabel(
            d["non_adherent"], tuple(d["types"]), tuple(d["evidence"]), d["source"])

    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out[d["pair_id"]] = ExtractionResult(
                d["pair_id"], lab(d["label"]), lab(d["first_label"]), tuple(d["raw_replies"]),
                d["verification_failed"], d["error"],
            )
    return out


@dataclass(frozen=True)
class ValidationMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.total if self.total else None

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None


def score_against_annotations(
    predicted: Sequence[AdherenceLabel], gold: Sequence[AdherenceLabel]
) -> ValidationMetrics:
    """Confusion counts with non-adherence as the positive class; inputs aligned by position."""
    if len(predicted) != len(gold):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(gold)} gold labels")
    tp = fp = fn = tn = 0
    for p, g in zip(predicted, gold):
        if p.non_adherent and g.non_adherent:
            tp += 1
        elif p.non_adherent:
            fp += 1
        elif g.non_adherent:
            fn += 1
        else:
            tn += 1
    return ValidationMetrics(tp, fp, fn, tn)


# Known disagreement: pauses around hospitalization are flagged by models but
# annotated as adherent by physicians. Kept as a tag for review, not resolved.
KNOWN_DISAGREEMENT_PATTERNS = ("hospitaliz", "restarted")


def known_disagreement(note_text: str) -> bool:
    low = note_text.lower()
    return all(p in low for p in KNOWN_DISAGREEMENT_PATTERNS)
