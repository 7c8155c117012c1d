from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

import vulnqa.backends as backends
from conftest import FIG_DESCRIPTION, make_record
from vulnqa.backends import (
    BackendConfig,
    FailureKind,
    LlmResponse,
    ProviderKind,
    ProviderStatusError,
    ReplayMiss,
    TranscriptStore,
    TransportError,
    billed_cost_microusd,
    complete,
    default_backend_configs,
    extractor_complete,
    transcript_key,
)
from vulnqa.corpus import to_chunk
from vulnqa.prompting import DEFAULT_TEMPLATE, assemble


@pytest.fixture(autouse=True)
def no_sleep(monkeypatch):
    sleeps: list[float] = []
    monkeypatch.setattr(backends, "_sleep", sleeps.append)
    return sleeps


def remote_config(**overrides) -> BackendConfig:
    defaults = dict(
        backend_id="fake-remote",
        provider_kind=ProviderKind.OPENAI_COMPATIBLE,
        model_name="fake-model",
        endpoint_url="http://127.0.0.1:1/never",
        api_key_env_var="FAKE_API_KEY",
        context_window_tokens=128_000,
        price_per_1m_input=0.15,
        price_per_1m_output=0.60,
    )
    defaults.update(overrides)
    return BackendConfig(**defaults)


def fig_prompt(fig_record, question: str):
    return assemble(DEFAULT_TEMPLATE, [to_chunk(fig_record)], question)


class TestDefaults:
    def test_reference_model_parameters(self):
        configs = default_backend_configs()
        gpt = configs["gpt-4o-mini"]
        assert gpt.context_window_tokens == 128_000
        assert (gpt.price_per_1m_input, gpt.price_per_1m_output) == (0.15, 0.60)
        gemini = configs["gemini-1.5-pro"]
        assert gemini.context_window_tokens == 1_000_000
        assert (gemini.price_per_1m_input, gemini.price_per_1m_output) == (1.25, 5.00)
        llama = configs["llama-3"]
        assert llama.context_window_tokens == 8_192
        assert (llama.price_per_1m_input, llama.price_per_1m_output) == (0.0, 0.0)
        assert configs["extractor"].provider_kind is ProviderKind.EXTRACTOR
        assert configs["replay"].provider_kind is ProviderKind.REPLAY

    def test_window_and_prices_validity(self):
        for config in default_backend_configs().values():
            assert config.context_window_tokens > 0
            assert config.price_per_1m_input >= 0
            assert config.price_per_1m_output >= 0


class TestContextOverflow:
    def test_overflow_before_any_network_traffic(self, fig_record):
        def exploding_transport(config, prompt_text, api_key):
            raise AssertionError("transport must not be called on overflow")

        prompt = fig_prompt(fig_record, "What is the base score of CVE-2023-0017?")
        prompt.token_estimate = 9_000
        config = default_backend_configs()["llama-3"]
        response = complete(config, prompt, transport=exploding_transport)
        assert response.failure is FailureKind.CONTEXT_OVERFLOW
        assert response.text == ""

    def test_no_overflow_within_window(self, fig_record, monkeypatch):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        prompt = fig_prompt(fig_record, "What is the base score of CVE-2023-0017?")

        def ok_transport(config, prompt_text, api_key):
            return "9.8", 100, 3

        response = complete(remote_config(), prompt, transport=ok_transport)
        assert response.failure is None
        assert response.text == "9.8"


class TestExtractor:
    @pytest.mark.parametrize(
        "question,expected",
        [
            ("What is the published date of CVE-2023-0017?", "2023-01-10T04:15Z"),
            ("What is the description of CVE-2023-0017?", FIG_DESCRIPTION),
            ("What is the exploitability score of CVE-2023-0017?", "3.9"),
            ("What is the impact score of CVE-2023-0017?", "5.9"),
            ("What is the base score of CVE-2023-0017?", "9.8"),
        ],
    )
    def test_answers_exact_field_values(self, fig_record, question, expected):
        response = extractor_complete(fig_prompt(fig_record, question))
        assert response.text == expected
        assert response.failure is None

    def test_empty_context_gives_empty_text(self):
        prompt = assemble(DEFAULT_TEMPLATE, [], "What is the base score of CVE-2023-0017?")
        assert extractor_complete(prompt).text == ""

    def test_cve_not_in_context_gives_empty_text(self, fig_record):
        response = extractor_complete(fig_prompt(fig_record, "What is the base score of CVE-2019-1111?"))
        assert response.text == ""

    def test_unrecognized_field_gives_empty_text(self, fig_record):
        response = extractor_complete(fig_prompt(fig_record, "What is the attack vector of CVE-2023-0017?"))
        assert response.text == ""

    def test_integral_score_rendered_shortest(self):
        from conftest import make_cvss

        record = make_record(cvss=make_cvss(base_score=10.0, exploitability_score=3.9, impact_score=6.0))
        response = extractor_complete(
            assemble(DEFAULT_TEMPLATE, [to_chunk(record)], f"What is the base score of {record.cve_id}?")
        )
        assert response.text == "10"

    def test_picks_correct_record_among_several(self, fixture_corpus):
        chunks = [to_chunk(r) for r in fixture_corpus.records[:5]]
        target = fixture_corpus.records[3]
        prompt = assemble(DEFAULT_TEMPLATE, chunks, f"What is the published date of {target.cve_id}?")
        assert extractor_complete(prompt).text == target.published_date

    def test_token_accounting(self, fig_record):
        prompt = fig_prompt(fig_record, "What is the base score of CVE-2023-0017?")
        response = extractor_complete(prompt)
        assert response.input_tokens == prompt.token_estimate
        assert response.output_tokens == 1  # "9.8" is 3 bytes

    def test_deterministic_output(self, fig_record):
        prompt = fig_prompt(fig_record, "What is the impact score of CVE-2023-0017?")
        a = extractor_complete(prompt)
        b = extractor_complete(prompt)
        assert (a.text, a.input_tokens, a.output_tokens, a.failure) == (
            b.text, b.input_tokens, b.output_tokens, b.failure,
        )

    def test_latency_recorded(self, fig_record):
        response = extractor_complete(fig_prompt(fig_record, "What is the base score of CVE-2023-0017?"))
        assert response.latency >= 0.0


class TestRetryPolicy:
    def test_transient_transport_failure_then_success(self, fig_record, monkeypatch, no_sleep):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        attempts = []

        def flaky(config, prompt_text, api_key):
            attempts.append(1)
            if len(attempts) < 3:
                raise TransportError("connection reset")
            return "answer", None, None

        response = complete(remote_config(), fig_prompt(fig_record, "q?"), transport=flaky)
        assert response.failure is None
        assert response.text == "answer"
        assert len(attempts) == 3
        assert no_sleep == [1.0, 2.0]  # exponential backoff between attempts

    def test_timeout_exhausts_retries(self, fig_record, monkeypatch, no_sleep):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        attempts = []

        def always_timeout(config, prompt_text, api_key):
            attempts.append(1)
            raise TimeoutError("deadline")

        response = complete(remote_config(max_retries=3), fig_prompt(fig_record, "q?"), transport=always_timeout)
        assert response.failure is FailureKind.TIMEOUT
        assert len(attempts) == 4  # initial try plus three retries
        assert no_sleep == [1.0, 2.0, 4.0]

    def test_4xx_never_retried(self, fig_record, monkeypatch, no_sleep):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        attempts = []

        def unauthorized(config, prompt_text, api_key):
            attempts.append(1)
            raise ProviderStatusError(401, "bad key")

        response = complete(remote_config(), fig_prompt(fig_record, "q?"), transport=unauthorized)
        assert response.failure is FailureKind.PROVIDER_ERROR
        assert len(attempts) == 1
        assert no_sleep == []

    def test_5xx_is_retried(self, fig_record, monkeypatch):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        attempts = []

        def overloaded(config, prompt_text, api_key):
            attempts.append(1)
            if len(attempts) == 1:
                raise ProviderStatusError(503, "busy")
            return "recovered", None, None

        response = complete(remote_config(), fig_prompt(fig_record, "q?"), transport=overloaded)
        assert response.failure is None
        assert len(attempts) == 2

    def test_missing_api_key_is_provider_error_without_transport(self, fig_record, monkeypatch):
        monkeypatch.delenv("FAKE_API_KEY", raising=False)

        def exploding(config, prompt_text, api_key):
            raise AssertionError("must not be called")

        response = complete(remote_config(), fig_prompt(fig_record, "q?"), transport=exploding)
        assert response.failure is FailureKind.PROVIDER_ERROR

    def test_provider_usage_preferred_over_estimator(self, fig_record, monkeypatch):
        monkeypatch.setenv("FAKE_API_KEY", "k")

        def with_usage(config, prompt_text, api_key):
            return "text", 1234, 56

        response = complete(remote_config(), fig_prompt(fig_record, "q?"), transport=with_usage)
        assert (response.input_tokens, response.output_tokens) == (1234, 56)

    def test_estimator_fallback_without_usage(self, fig_record, monkeypatch):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        prompt = fig_prompt(fig_record, "q?")

        def without_usage(config, prompt_text, api_key):
            return "12345678", None, None

        response = complete(remote_config(), prompt, transport=without_usage)
        assert response.input_tokens == prompt.token_estimate
        assert response.output_tokens == 2


class TestTranscripts:
    def test_record_then_replay_round_trip(self):
        store = TranscriptStore()
        key = transcript_key("backend-a", "prompt text")
        original = LlmResponse(text="recorded", input_tokens=10, output_tokens=2, latency=0.5)
        store.record(key, original)
        assert store.replay(key) == original

    def test_replay_unknown_key_raises(self):
        with pytest.raises(ReplayMiss):
            TranscriptStore().replay("nope")

    def test_record_idempotent_for_identical_payloads(self):
        store = TranscriptStore()
        key = transcript_key("b", "p")
        response = LlmResponse(text="x")
        store.record(key, response, recorded_at="2024-01-01T00:00:00+00:00")
        store.record(key, response, recorded_at="2024-01-02T00:00:00+00:00")
        assert len(store) == 1

    def test_changed_payload_replaces(self):
        store = TranscriptStore()
        key = transcript_key("b", "p")
        store.record(key, LlmResponse(text="first"))
        store.record(key, LlmResponse(text="second"))
        assert store.replay(key).text == "second"

    def test_key_deterministic_and_distinct(self):
        assert transcript_key("b", "p") == transcript_key("b", "p")
        assert transcript_key("b", "p") != transcript_key("b2", "p")
        assert transcript_key("b", "p") != transcript_key("b", "p2")

    def test_save_load_round_trip(self, tmp_path):
        store = TranscriptStore()
        store.record(transcript_key("b", "p1"), LlmResponse(text="one", input_tokens=5))
        store.record(
            transcript_key("b", "p2"),
            LlmResponse(text="", failure=FailureKind.TIMEOUT, latency=1.5),
        )
        path = tmp_path / "transcripts.json"
        store.save(path, backend_id="b")
        loaded = TranscriptStore.load(path)
        assert len(loaded) == 2
        assert loaded.replay(transcript_key("b", "p1")) == store.replay(transcript_key("b", "p1"))
        assert loaded.replay(transcript_key("b", "p2")).failure is FailureKind.TIMEOUT

    def test_load_rejects_unknown_version(self, tmp_path):
        path = tmp_path / "t.json"
        path.write_text('{"format_version": 99, "entries": []}')
        with pytest.raises(ValueError):
            TranscriptStore.load(path)

    def test_replay_backend_returns_recorded_bytes(self, fig_record):
        prompt = fig_prompt(fig_record, "What is the base score of CVE-2023-0017?")
        store = TranscriptStore()
        config = BackendConfig(backend_id="replay", provider_kind=ProviderKind.REPLAY)
        recorded = LlmResponse(text="the recorded answer ☃", input_tokens=7, output_tokens=3)
        store.record(transcript_key("replay", prompt.text), recorded)
        response = complete(config, prompt, store=store)
        assert response == recorded

    def test_replay_miss_surfaces_as_failure_not_exception(self, fig_record):
        prompt = fig_prompt(fig_record, "unrecorded question?")
        config = BackendConfig(backend_id="replay", provider_kind=ProviderKind.REPLAY)
        response = complete(config, prompt, store=TranscriptStore())
        assert response.failure is FailureKind.PROVIDER_ERROR

    def test_complete_records_into_store(self, fig_record):
        prompt = fig_prompt(fig_record, "What is the impact score of CVE-2023-0017?")
        store = TranscriptStore()
        extractor = BackendConfig(backend_id="extractor", provider_kind=ProviderKind.EXTRACTOR)
        live = complete(extractor, prompt, store=store)
        replayed = complete(
            BackendConfig(backend_id="extractor", provider_kind=ProviderKind.REPLAY),
            prompt,
            store=store,
        )
        assert replayed == live
        assert replayed.text == "5.9"


class TestCost:
    def test_formula(self):
        config = remote_config(price_per_1m_input=0.15, price_per_1m_output=0.60)
        response = LlmResponse(text="x", input_tokens=1_000_000, output_tokens=500_000)
        # 1M input tokens at $0.15/1M plus 0.5M output at $0.60/1M, in microusd.
        assert billed_cost_microusd(response, config) == pytest.approx(150_000 + 300_000)

    def test_nonnegative_and_zero_for_free_model(self):
        llama = default_backend_configs()["llama-3"]
        response = LlmResponse(text="x", input_tokens=10_000, output_tokens=10_000)
        assert billed_cost_microusd(response, llama) == 0.0


class TestConcurrencyCeiling:
    def test_at_most_four_concurrent_transport_calls(self, fig_record, monkeypatch):
        monkeypatch.setenv("FAKE_API_KEY", "k")
        config = remote_config(backend_id="ceiling-test", max_concurrency=4)
        active = 0
        peak = 0
        lock = threading.Lock()

        def slow(config, prompt_text, api_key):
            nonlocal active, peak
            with lock:
                active += 1
                peak = max(peak, active)
            time.sleep(0.05)
            with lock:
                active -= 1
            return "ok", None, None

        prompt = fig_prompt(fig_record, "q?")
        with ThreadPoolExecutor(max_workers=10) as pool:
            results = list(pool.map(lambda _: complete(config, prompt, transport=slow), range(10)))
        assert all(r.text == "ok" for r in results)
        assert peak <= 4
