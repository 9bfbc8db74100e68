import numpy as np
import pytest
import requests
from hypothesis import given, settings
from hypothesis import strategies as st

from oracle import embed_ref, fnv1a64_ref
from promptloop.engine import EngineConfig
from promptloop.errors import (
    BackendUnavailableError,
    ConfigError,
    EmptyResponseError,
    ProtocolError,
)
from promptloop.gateway import (
    FAILURE_MARKER,
    BackendDescriptor,
    ChatExchange,
    HttpBackend,
    MockBackend,
    fnv1a64,
)
from promptloop.roles import DEFAULT_ROLE_PARAMS, ModelRole, SamplingParams


def exchange(role=ModelRole.ACTOR, text="Schreib einen Brief"):
    return ChatExchange(role=role, system_prompt="sys", messages=(("user", text),))


PARAMS = DEFAULT_ROLE_PARAMS[ModelRole.ACTOR]


class TestChatExchange:
    def test_requires_messages(self):
        with pytest.raises(ValueError):
            ChatExchange(role=ModelRole.ACTOR, system_prompt="", messages=())

    def test_last_speaker_must_be_user(self):
        with pytest.raises(ValueError):
            ChatExchange(
                role=ModelRole.ACTOR,
                system_prompt="",
                messages=(("user", "a"), ("assistant", "b")),
            )

    def test_unknown_speaker_rejected(self):
        with pytest.raises(ValueError):
            ChatExchange(role=ModelRole.ACTOR, system_prompt="", messages=(("system", "a"),))


class TestMockChat:
    def test_scripted_queue_pop(self):
        backend = MockBackend(BackendDescriptor(), {ModelRole.ACTOR: ["Befund A"]})
        assert backend.chat(exchange(), PARAMS) == "Befund A"

    def test_fallback_echoes_last_user_message(self):
        backend = MockBackend(BackendDescriptor())
        assert backend.chat(exchange(), PARAMS) == "ECHO: Schreib einen Brief"

    def test_queues_are_per_role(self):
        backend = MockBackend(BackendDescriptor(), {ModelRole.SUMMARIZER: ["kurz"]})
        assert backend.chat(exchange(), PARAMS) == "ECHO: Schreib einen Brief"
        assert backend.chat(exchange(role=ModelRole.SUMMARIZER), PARAMS) == "kurz"

    def test_failure_marker_raises(self):
        backend = MockBackend(BackendDescriptor(), {ModelRole.ACTOR: [FAILURE_MARKER, "ok"]})
        with pytest.raises(BackendUnavailableError):
            backend.chat(exchange(), PARAMS)
        assert backend.chat(exchange(), PARAMS) == "ok"

    def test_empty_completion_raises(self):
        backend = MockBackend(BackendDescriptor(), {ModelRole.ACTOR: [""]})
        with pytest.raises(EmptyResponseError):
            backend.chat(exchange(), PARAMS)

    def test_repeat_calls_deterministic(self):
        first = MockBackend(BackendDescriptor(), {ModelRole.ACTOR: ["a", "b"]})
        second = MockBackend(BackendDescriptor(), {ModelRole.ACTOR: ["a", "b"]})
        seq1 = [first.chat(exchange(), PARAMS) for _ in range(3)]
        seq2 = [second.chat(exchange(), PARAMS) for _ in range(3)]
        assert seq1 == seq2 == ["a", "b", "ECHO: Schreib einen Brief"]

    def test_advance_skips_consumed_items(self):
        backend = MockBackend(BackendDescriptor(), {ModelRole.ACTOR: ["a", "b", "c"]})
        backend.advance(ModelRole.ACTOR, 2)
        assert backend.chat(exchange(), PARAMS) == "c"
        backend.advance(ModelRole.ACTOR, 5)  # over-advance past the end is a no-op
        assert backend.chat(exchange(), PARAMS).startswith("ECHO: ")


class TestMockEmbedding:
    def test_single_bigram_lands_in_fnv_bucket(self):
        backend = MockBackend(BackendDescriptor(mock_embedding_dim=8))
        [vec] = backend.embed(["ab"])
        bucket = fnv1a64_ref(b"ab") % 8
        assert vec[bucket] == 1.0
        assert np.count_nonzero(vec) == 1
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)

    def test_empty_text_embeds_to_zero_vector(self):
        backend = MockBackend(BackendDescriptor(mock_embedding_dim=16))
        [vec] = backend.embed([""])
        assert vec.shape == (16,)
        assert not vec.any()

    def test_single_byte_text_embeds_to_zero_vector(self):
        backend = MockBackend(BackendDescriptor())
        [vec] = backend.embed(["x"])
        assert not vec.any()

    def test_identical_texts_identical_vectors(self):
        backend = MockBackend(BackendDescriptor())
        u, v = backend.embed(["x", "x"])
        assert np.array_equal(u, v)

    def test_order_preserved_and_one_vector_per_text(self):
        backend = MockBackend(BackendDescriptor())
        vectors = backend.embed(["ab", "cd", "ab"])
        assert len(vectors) == 3
        assert np.array_equal(vectors[0], vectors[2])
        assert not np.array_equal(vectors[0], vectors[1])

    def test_empty_batch_rejected(self):
        backend = MockBackend(BackendDescriptor())
        with pytest.raises(ValueError):
            backend.embed([])

    def test_fnv_matches_reference(self):
        for data in (b"", b"a", b"ab", "Entlassung".encode(), bytes(range(256))):
            assert fnv1a64(data) == fnv1a64_ref(data)

    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=40), st.sampled_from([4, 8, 64]))
    def test_embedding_matches_independent_oracle(self, text, dim):
        backend = MockBackend(BackendDescriptor(mock_embedding_dim=dim))
        [vec] = backend.embed([text])
        expected = embed_ref(text, dim)
        assert vec == pytest.approx(expected, abs=1e-12)
        raw_is_zero = len(text.encode("utf-8")) < 2
        if not raw_is_zero:
            assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)


class FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        if isinstance(self._payload, Exception):
            raise self._payload
        return self._payload


class FakeSession:
    """Records requests and serves queued responses or exceptions."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.requests = []

    def post(self, url, json=None, timeout=None):
        self.requests.append({"url": url, "json": json, "timeout": timeout})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item

    def get(self, url, timeout=None):
        self.requests.append({"url": url, "timeout": timeout})
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def http_descriptor(**overrides):
    defaults = dict(kind="http", base_url="http://localhost:11434", retry_backoff=0.0)
    defaults.update(overrides)
    return BackendDescriptor(**defaults)


class TestHttpChat:
    def test_request_body_carries_role_options(self):
        session = FakeSession([FakeResponse({"message": {"content": "Plan"}})])
        backend = HttpBackend(http_descriptor(), session)
        params = DEFAULT_ROLE_PARAMS[ModelRole.PROMPTING]
        out = backend.chat(exchange(role=ModelRole.PROMPTING, text="Aufgabe"), params)
        assert out == "Plan"
        request = session.requests[0]
        assert request["url"].endswith("/api/chat")
        body = request["json"]
        assert body["options"] == {"temperature": 0.5, "top_k": 40, "top_p": 0.85, "seed": 42}
        assert body["model"] == "llama3.1"
        assert body["stream"] is False
        assert body["messages"][0] == {"role": "system", "content": "sys"}
        assert body["messages"][-1] == {"role": "user", "content": "Aufgabe"}

    def test_empty_completion_raises(self):
        session = FakeSession([FakeResponse({"message": {"content": ""}})])
        backend = HttpBackend(http_descriptor(), session)
        with pytest.raises(EmptyResponseError):
            backend.chat(exchange(), PARAMS)

    def test_missing_content_is_protocol_error(self):
        session = FakeSession([FakeResponse({"message": {}})])
        backend = HttpBackend(http_descriptor(), session)
        with pytest.raises(ProtocolError):
            backend.chat(exchange(), PARAMS)

    def test_retry_bound_is_max_retries_plus_one(self):
        failures = [requests.ConnectionError("down")] * 10
        session = FakeSession(failures)
        backend = HttpBackend(http_descriptor(max_retries=2), session)
        with pytest.raises(BackendUnavailableError):
            backend.chat(exchange(), PARAMS)
        assert len(session.requests) == 3

    def test_transient_failure_then_success(self):
        session = FakeSession(
            [requests.ConnectionError("down"), FakeResponse({"message": {"content": "ok"}})]
        )
        backend = HttpBackend(http_descriptor(max_retries=1), session)
        assert backend.chat(exchange(), PARAMS) == "ok"
        assert len(session.requests) == 2


class TestHttpEmbed:
    def test_embed_posts_model_and_input(self):
        session = FakeSession([FakeResponse({"embeddings": [[1.0, 0.0], [0.0, 1.0]]})])
        backend = HttpBackend(http_descriptor(), session)
        vectors = backend.embed(["a", "b"])
        request = session.requests[0]
        assert request["url"].endswith("/api/embed")
        assert request["json"] == {"model": "jina-embeddings-v2-base-de", "input": ["a", "b"]}
        assert [v.tolist() for v in vectors] == [[1.0, 0.0], [0.0, 1.0]]

    def test_batch_dimension_mismatch_is_protocol_error(self):
        session = FakeSession([FakeResponse({"embeddings": [[1.0, 0.0], [0.0, 1.0, 0.5]]})])
        backend = HttpBackend(http_descriptor(), session)
        with pytest.raises(ProtocolError):
            backend.embed(["a", "b"])

    def test_wrong_count_is_protocol_error(self):
        session = FakeSession([FakeResponse({"embeddings": [[1.0, 0.0]]})])
        backend = HttpBackend(http_descriptor(), session)
        with pytest.raises(ProtocolError):
            backend.embed(["a", "b"])


class TestHealthCheck:
    def test_mock_reports_ok(self, mock_backend):
        report = mock_backend.health_check()
        assert report.status == "ok"
        assert report.kind == "mock"

    def test_http_unreachable_reports_cause(self):
        session = FakeSession([requests.ConnectionError("refused")])
        backend = HttpBackend(http_descriptor(), session)
        report = backend.health_check()
        assert report.status == "unavailable"
        assert "refused" in report.cause

    def test_http_reachable_echoes_model_name(self):
        session = FakeSession([FakeResponse({"models": []})])
        backend = HttpBackend(http_descriptor(model_name="llama3.1"), session)
        report = backend.health_check()
        assert report.status == "ok"
        assert report.model_name == "llama3.1"


class TestDescriptor:
    def test_http_requires_base_url(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(kind="http")

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(kind="grpc")

    def test_sampling_params_validation(self):
        with pytest.raises(ValueError):
            SamplingParams(temperature=-0.1, top_k=5, top_p=0.5)
        with pytest.raises(ValueError):
            SamplingParams(temperature=0.1, top_k=0, top_p=0.5)
        with pytest.raises(ValueError):
            SamplingParams(temperature=0.1, top_k=5, top_p=0.0)
        with pytest.raises(ValueError):
            SamplingParams(temperature=0.1, top_k=5, top_p=1.2)


class TestRoleParamsTotality:
    def test_defaults_cover_every_role(self):
        assert set(DEFAULT_ROLE_PARAMS) == set(ModelRole)
        EngineConfig().validate()

    def test_missing_role_rejected(self):
        params = dict(DEFAULT_ROLE_PARAMS)
        del params[ModelRole.MUTATOR]
        with pytest.raises(ConfigError):
            EngineConfig(role_params=params).validate()
