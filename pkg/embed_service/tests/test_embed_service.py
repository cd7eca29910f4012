"""Request handling: validation, status codes, and the audio-length cap."""

import base64
import dataclasses

import numpy as np
import pytest

from embed_service import EmbedApp, ServiceConfig


def _wav_b64(n=1600, value=0.1):
    samples = np.full(n, value, dtype="<f4")
    return base64.b64encode(samples.tobytes()).decode("ascii")


class TestServiceConfig:
    def test_defaults_validate(self):
        config = ServiceConfig()
        assert config.device == "cpu"
        assert config.max_audio_seconds == 30.0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"device": "tpu"},
            {"port": -1},
            {"port": 70000},
            {"max_audio_seconds": 0.0},
            {"max_audio_seconds": -2.0},
            {"model_id": ""},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            ServiceConfig(**kwargs)

    def test_frozen(self):
        config = ServiceConfig()
        with pytest.raises(dataclasses.FrozenInstanceError):
            config.port = 9999


class TestInfo:
    def test_reports_the_loaded_model(self, app, embedder):
        status, body = app.handle("GET", "/v1/info", None)
        assert status == 200
        assert body == {
            "embedding_dim": embedder.embedding_dim,
            "sample_rate": embedder.sample_rate,
            "model_id": embedder.model_id,
        }


class TestNotReady:
    def test_every_route_answers_503_before_attach(self):
        cold = EmbedApp(max_audio_seconds=30.0)
        routes = [
            ("GET", "/v1/info", None),
            ("POST", "/v1/embed/text", {"texts": ["x"]}),
            ("POST", "/v1/embed/audio", {}),
        ]
        for method, path, payload in routes:
            status, body = cold.handle(method, path, payload)
            assert status == 503
            assert "warming up" in body["error"]


class TestRouting:
    def test_unknown_path(self, app):
        status, body = app.handle("GET", "/v2/info", None)
        assert status == 400
        assert "unsupported route" in body["error"]

    def test_method_mismatch(self, app):
        assert app.handle("POST", "/v1/info", {})[0] == 400
        assert app.handle("GET", "/v1/embed/text", None)[0] == 400
        assert app.handle("GET", "/v1/embed/audio", None)[0] == 400


class TestTextValidation:
    @pytest.mark.parametrize(
        "payload",
        [
            None,
            [],
            {},
            {"texts": "not a list"},
            {"texts": ["ok", 3]},
            {"texts": []},
        ],
    )
    def test_rejected_with_400(self, app, payload):
        status, body = app.handle("POST", "/v1/embed/text", payload)
        assert status == 400
        assert isinstance(body["error"], str) and body["error"]

    def test_valid_request_shape(self, app, embedder):
        status, body = app.handle("POST", "/v1/embed/text", {"texts": ["a", "b"]})
        assert status == 200
        assert len(body["embeddings"]) == 2
        assert all(len(row) == embedder.embedding_dim for row in body["embeddings"])


class TestAudioValidation:
    @pytest.mark.parametrize(
        "payload",
        [
            None,
            {},
            {"audio_b64": _wav_b64()},
            {"audio_b64": _wav_b64(), "sample_rate": 0},
            {"audio_b64": _wav_b64(), "sample_rate": -5},
            {"audio_b64": _wav_b64(), "sample_rate": True},
            {"audio_b64": _wav_b64(), "sample_rate": 16000.0},
            {"audio_b64": _wav_b64(), "sample_rate": "16000"},
            {"sample_rate": 16000},
            {"audio_b64": 12, "sample_rate": 16000},
            {"audio_b64": "@@not base64@@", "sample_rate": 16000},
            {"audio_b64": "", "sample_rate": 16000},
        ],
    )
    def test_rejected_with_400(self, app, payload):
        status, body = app.handle("POST", "/v1/embed/audio", payload)
        assert status == 400
        assert isinstance(body["error"], str) and body["error"]

    def test_byte_count_must_be_float32_aligned(self, app):
        ragged = base64.b64encode(b"\x00" * 6).decode("ascii")
        status, body = app.handle(
            "POST", "/v1/embed/audio", {"audio_b64": ragged, "sample_rate": 16000}
        )
        assert status == 400
        assert "multiple of 4" in body["error"]

    def test_non_finite_samples_rejected(self, app):
        samples = np.array([0.1, np.nan, 0.2], dtype="<f4")
        payload = {
            "audio_b64": base64.b64encode(samples.tobytes()).decode("ascii"),
            "sample_rate": 16000,
        }
        status, body = app.handle("POST", "/v1/embed/audio", payload)
        assert status == 400
        assert "non-finite" in body["error"]

    def test_valid_request_shape(self, app, embedder):
        payload = {"audio_b64": _wav_b64(), "sample_rate": 16000}
        status, body = app.handle("POST", "/v1/embed/audio", payload)
        assert status == 200
        assert len(body["embedding"]) == embedder.embedding_dim


class TestLengthCap:
    def test_over_cap_rejected_and_message_names_the_limit(self, embedder):
        capped = EmbedApp(max_audio_seconds=1.0)
        capped.attach(embedder)
        payload = {"audio_b64": _wav_b64(n=32000), "sample_rate": 16000}
        status, body = capped.handle("POST", "/v1/embed/audio", payload)
        assert status == 400
        assert "2.0 s" in body["error"]
        assert "at most 1 s" in body["error"]

    def test_exactly_at_cap_accepted(self, embedder):
        capped = EmbedApp(max_audio_seconds=1.0)
        capped.attach(embedder)
        payload = {"audio_b64": _wav_b64(n=16000), "sample_rate": 16000}
        status, _ = capped.handle("POST", "/v1/embed/audio", payload)
        assert status == 200

    def test_cap_uses_the_stated_rate(self, embedder):
        # same byte count, higher rate: shorter clip, now under the cap
        capped = EmbedApp(max_audio_seconds=1.0)
        capped.attach(embedder)
        payload = {"audio_b64": _wav_b64(n=32000), "sample_rate": 48000}
        status, _ = capped.handle("POST", "/v1/embed/audio", payload)
        assert status == 200


class _ExplodingEmbedder:
    embedding_dim = 512
    sample_rate = 48000
    model_id = "boom"

    def embed_texts(self, texts):
        raise RuntimeError("weights corrupted")

    def embed_audio(self, samples, sample_rate):
        raise RuntimeError("weights corrupted")


class TestInferenceFailure:
    def _broken_app(self):
        broken = EmbedApp(max_audio_seconds=30.0)
        broken.attach(_ExplodingEmbedder())
        return broken

    def test_text_failure_is_500(self):
        status, body = self._broken_app().handle(
            "POST", "/v1/embed/text", {"texts": ["x"]}
        )
        assert status == 500
        assert "text inference failed" in body["error"]
        assert "weights corrupted" in body["error"]

    def test_audio_failure_is_500(self):
        payload = {"audio_b64": _wav_b64(), "sample_rate": 16000}
        status, body = self._broken_app().handle("POST", "/v1/embed/audio", payload)
        assert status == 500
        assert "audio inference failed" in body["error"]

    def test_validation_still_runs_before_inference(self):
        # a broken model must not turn bad requests into 500s
        status, _ = self._broken_app().handle("POST", "/v1/embed/text", {"texts": []})
        assert status == 400


class TestDeterminism:
    def test_same_audio_request_same_body(self, app):
        payload = {"audio_b64": _wav_b64(n=4800, value=0.25), "sample_rate": 16000}
        first = app.handle("POST", "/v1/embed/audio", payload)
        second = app.handle("POST", "/v1/embed/audio", payload)
        assert first == second

    def test_embeddings_are_not_renormalized_by_the_service(self, app, embedder):
        # the service must return the model's vectors untouched
        payload = {"audio_b64": _wav_b64(n=4800, value=0.25), "sample_rate": 16000}
        _, body = app.handle("POST", "/v1/embed/audio", payload)
        direct = embedder.embed_audio(np.full(4800, 0.25), 16000)
        np.testing.assert_array_equal(np.asarray(body["embedding"]), direct)
