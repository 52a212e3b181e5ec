from __future__ import annotations

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonadherence import extraction as ex
from nonadherence.labels import NONADHERENCE_TYPES, AdherenceLabel

NO_SLEEP = ex.RetryPolicy(attempts=3, initial_backoff=1.0, sleep=lambda s: None)


def req(note, rx="lisinopril 10 mg daily", pid="p"):
    return ex.ExtractionRequest(rx, note, pid)


# --- prompts ------------------------------------------------------------------

def test_prompt_contains_note_and_categories():
    r = req("Patient stopped lisinopril last month.")
    text = ex.render_prompt(r)
    assert "Patient stopped lisinopril last month." in text
    assert "lisinopril 10 mg daily" in text
    for t in NONADHERENCE_TYPES:
        assert t in text
    assert "NON_ADHERENT:" in text and "EVIDENCE:" in text
    assert ex.render_prompt(r) == text


def test_prompt_rejects_empty_prescription_and_note():
    with pytest.raises(ValueError):
        ex.render_prompt(req("fine", rx="  "))
    with pytest.raises(ValueError):
        req("   ")


# --- reply parsing ------------------------------------------------------------

def test_parse_reply_round_trip():
    note = "BP high. Patient ran out of pills and did not refill."
    lab = AdherenceLabel(True, ("missed",), ("Patient ran out of pills and did not refill.",), "llm")
    assert ex.parse_reply(ex.format_reply(lab), note) == lab
    assert ex.parse_reply("NON_ADHERENT: no\nTYPES: none\nEVIDENCE: none", note) == AdherenceLabel(False, source="llm")


@pytest.mark.parametrize("reply", [
    "yes",
    "NON_ADHERENT: maybe\nTYPES: none",
    "NON_ADHERENT: yes\nTYPES: none\nEVIDENCE: ran out",
    "NON_ADHERENT: yes\nTYPES: forgot\nEVIDENCE: ran out",
    "NON_ADHERENT: no\nTYPES: missed\nEVIDENCE: none",
    "NON_ADHERENT: yes\nTYPES: missed\nEVIDENCE: not in the note",
    "NON_ADHERENT: yes\nNON_ADHERENT: no\nTYPES: missed",
    "TYPES: missed",
])
def test_parse_reply_rejects(reply):
    with pytest.raises(ex.ExtractionFailedError) as info:
        ex.parse_reply(reply, "Patient ran out of pills.")
    assert info.value.raw_reply == reply


# --- mock backend -------------------------------------------------------------

@pytest.mark.parametrize("note,types", [
    ("Patient ran out of pills and did not refill.", ("missed",)),
    ("Taking amlodipine 5mg daily as prescribed.", ()),
    ("She took half the tablet to avoid dizziness.", ("different_dose",)),
    ("He switched to losartan on his own. Takes it at night instead of morning.",
     ("different_medication", "different_timing")),
])
def test_mock_extraction(note, types):
    lab = ex.extract_adherence(req(note), ex.MockBackend(), NO_SLEEP)
    assert lab.non_adherent == bool(types)
    assert lab.types == types
    assert lab.source == "mock"
    lab.check_evidence(note)


def test_mock_deterministic():
    note = "Patient ran out of pills."
    a = ex.run_extraction([req(note, pid="a"), req("ok", pid="b")], ex.MockBackend())
    b = ex.run_extraction([req("ok", pid="b"), req(note, pid="a")], ex.MockBackend(), max_in_flight=1)
    assert a == b and list(a) == ["a", "b"]


# --- two rounds ---------------------------------------------------------------

def test_verification_confirms_fixed_point():
    r = req("Patient ran out of pills.")
    first = ex.extract_adherence(r, ex.MockBackend(), NO_SLEEP)
    assert ex.verify_round_two(r, first, ex.MockBackend(), NO_SLEEP) == first


def test_verification_corrects_planted_false_positive():
    note = "Taking amlodipine daily as prescribed."
    planted = {note: "NON_ADHERENT: yes\nTYPES: missed\nEVIDENCE: Taking amlodipine daily as prescribed."}
    res = ex.run_extraction_one(req(note), ex.MockBackend(planted), NO_SLEEP)
    assert res.first_label.non_adherent is True
    assert res.label.non_adherent is False
    assert not res.verification_failed


def test_malformed_second_round_keeps_first_label():
    note = "Patient ran out of pills."
    backend = ex.MockBackend(second_round="garbage")
    res = ex.run_extraction_one(req(note), backend, NO_SLEEP)
    assert res.verification_failed and res.label == res.first_label
    assert res.label.types == ("missed",)
    assert res.raw_replies[-1] == "garbage"
    with pytest.raises(ex.VerificationFailedError) as info:
        ex.verify_round_two(req(note), res.first_label, ex.MockBackend(second_round="garbage"), NO_SLEEP)
    assert info.value.first_label == res.first_label


def test_one_repair_retry_then_failure():
    good = "NON_ADHERENT: no\nTYPES: none\nEVIDENCE: none"
    backend = ex.ScriptedBackend(["junk", good])
    assert ex.extract_adherence(req("fine"), backend, NO_SLEEP).non_adherent is False
    assert ex.REPAIR_NOTE in backend.calls[1]
    with pytest.raises(ex.ExtractionFailedError) as info:
        ex.extract_adherence(req("fine"), ex.ScriptedBackend(["junk", "more junk"]), NO_SLEEP)
    assert info.value.raw_reply == "more junk"


def test_transport_retries_with_backoff():
    sleeps = []
    policy = ex.RetryPolicy(attempts=3, initial_backoff=1.0, sleep=sleeps.append)
    good = "NON_ADHERENT: no\nTYPES: none\nEVIDENCE: none"
    backend = ex.ScriptedBackend([ex.BackendTransportError("503"), ex.BackendTransportError("429"), good])
    assert ex.extract_adherence(req("fine"), backend, policy).non_adherent is False
    assert sleeps == [1.0, 2.0]
    err = ex.BackendTransportError("down")
    with pytest.raises(ex.TransientBackendError) as info:
        ex.extract_adherence(req("fine"), ex.ScriptedBackend([err, err, err]), policy)
    assert info.value.attempts == 3


def test_results_round_trip(tmp_path):
    note = "Patient ran out of pills."
    results = ex.run_extraction([req(note, pid="x"), req("All good.", pid="y")], ex.MockBackend())
    ex.write_results(results, tmp_path / "r.jsonl")
    assert ex.read_results(tmp_path / "r.jsonl") == results


def test_duplicate_pair_ids_rejected():
    with pytest.raises(ValueError):
        ex.run_extraction([req("a", pid="x"), req("b", pid="x")], ex.MockBackend())


# --- http backend -------------------------------------------------------------

def test_http_backend_wire_format(monkeypatch):
    seen = {}

    def fake_post(url, json, headers, timeout):
        seen.update(url=url, json=json, headers=headers)
        body = {"choices": [{"message": {"content": "NON_ADHERENT: no\nTYPES: none\nEVIDENCE: none"}}]}
        return httpx.Response(200, json=body)

    monkeypatch.setenv("TEST_TOKEN", "secret")
    monkeypatch.setattr(httpx, "post", fake_post)
    backend = ex.HttpChatBackend("https://example.invalid/v1/", "some-model", token_env="TEST_TOKEN")
    lab = ex.extract_adherence(req("fine"), backend, NO_SLEEP)
    assert lab == AdherenceLabel(False, source="llm")
    assert seen["url"] == "https://example.invalid/v1/chat/completions"
    assert seen["headers"]["Authorization"] == "Bearer secret"
    assert seen["json"]["temperature"] == 0.0
    assert [m["role"] for m in seen["json"]["messages"]] == ["system", "user"]


def test_http_backend_rate_limit_is_transient(monkeypatch):
    monkeypatch.setenv("TEST_TOKEN", "secret")
    monkeypatch.setattr(httpx, "post", lambda *a, **k: httpx.Response(429))
    backend = ex.HttpChatBackend("https://example.invalid", "m", token_env="TEST_TOKEN")
    with pytest.raises(ex.TransientBackendError):
        ex.extract_adherence(req("fine"), backend, NO_SLEEP)


def test_http_backend_needs_token(monkeypatch):
    monkeypatch.delenv("TEST_TOKEN", raising=False)
    with pytest.raises(ex.ExtractionError):
        ex.HttpChatBackend("https://example.invalid", "m", token_env="TEST_TOKEN").complete("s", "u")


# --- scoring ------------------------------------------------------------------

Y = AdherenceLabel(True, ("missed",))
N = AdherenceLabel(False)


def test_validation_metrics_example():
    pred = [Y] * 46 + [Y] * 4 + [N] * 4 + [N] * 46
    gold = [Y] * 46 + [N] * 4 + [Y] * 4 + [N] * 46
    m = ex.score_against_annotations(pred, gold)
    assert (m.tp, m.fp, m.fn, m.tn) == (46, 4, 4, 46)
    assert m.accuracy == m.precision == m.recall == 0.92


def test_validation_metrics_edges():
    assert ex.score_against_annotations([Y, N], [Y, N]).accuracy == 1.0
    m = ex.score_against_annotations([N] * 50, [Y] * 25 + [N] * 25)
    assert (m.accuracy, m.recall, m.precision) == (0.5, 0.0, None)
    with pytest.raises(ValueError):
        ex.score_against_annotations([N], [])


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_validation_metric_identities(tp, fp, fn, tn):
    m = ex.ValidationMetrics(tp, fp, fn, tn)
    n = tp + fp + fn + tn
    assert m.accuracy == ((tp + tn) / n if n else None)
    assert m.precision == (tp / (tp + fp) if tp + fp else None)
    assert m.recall == (tp / (tp + fn) if tp + fn else None)


def test_known_disagreement_tag():
    assert ex.known_disagreement("Restarted medication after hospitalization last week.")
    assert not ex.known_disagreement("Restarted walking program.")
