"""Scoring layer: embeddings, cosine objective, prompt cache, conditioning."""

import numpy as np
import pytest

from fxsearcher.audio import AudioBuffer
from fxsearcher.backends import BackendInfo, BuiltinTestBackend
from fxsearcher.scoring import (
    DEFAULT_GUIDE_PROMPT,
    Embedding,
    PromptPair,
    ScoreBreakdown,
    Scorer,
    cosine_similarity,
    embed_audio,
    embed_prompts,
    embed_text,
    score,
)

from wavegen import noise


class TestEmbedding:
    def test_basic_properties(self):
        e = Embedding([3.0, 4.0])
        assert e.dim == 2
        assert e.norm == pytest.approx(5.0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Embedding([])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Embedding([1.0, np.nan])

    def test_rejects_zero_vector(self):
        with pytest.raises(ValueError):
            Embedding([0.0, 0.0, 0.0])

    def test_values_read_only(self):
        e = Embedding([1.0, 2.0])
        with pytest.raises(ValueError):
            e.values[0] = 9.0


class TestCosine:
    def test_self_similarity(self):
        e = Embedding([0.2, -0.7, 1.1])
        assert cosine_similarity(e, e) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity(Embedding([1.0, 0.0]), Embedding([0.0, 1.0])) == 0.0

    def test_hand_value(self):
        got = cosine_similarity(Embedding([1.0, 0.0]), Embedding([1.0, 1.0]))
        assert got == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity(Embedding([1.0, 0.0]), Embedding([1.0, 0.0, 0.0]))

    def test_scale_invariance(self, rng):
        a = Embedding(rng.standard_normal(16))
        b = Embedding(rng.standard_normal(16))
        base = cosine_similarity(a, b)
        scaled = cosine_similarity(Embedding(37.5 * np.asarray(a.values)), b)
        assert abs(scaled - base) < 1e-9

    def test_clipped_to_unit_interval(self):
        # norms of nearly-parallel vectors can round the ratio past 1.0
        v = Embedding([0.1] * 7)
        w = Embedding([0.1 + 1e-17] * 7)
        assert -1.0 <= cosine_similarity(v, w) <= 1.0
        assert cosine_similarity(v, v) <= 1.0


class TestScoreBreakdown:
    def test_from_parts(self):
        b = ScoreBreakdown.from_parts(0.5, 0.2)
        assert b.s_final == pytest.approx(0.3)

    def test_invariant_enforced(self):
        with pytest.raises(ValueError):
            ScoreBreakdown(s_target=0.5, s_guide=0.2, s_final=0.4)

    def test_to_dict(self):
        d = ScoreBreakdown.from_parts(0.5, 0.2).to_dict()
        assert set(d) == {"s_target", "s_guide", "s_final"}


class TestPromptPair:
    def test_default_guide_prompt(self):
        pair = PromptPair("a bright sound")
        assert pair.guide_prompt == (
            "A harsh, distorted, muddy, unclear, oversaturated, unpleasant sound."
        )
        assert pair.guide_prompt == DEFAULT_GUIDE_PROMPT
        assert pair.guide_enabled

    def test_empty_target_rejected(self):
        with pytest.raises(ValueError):
            PromptPair("   ")


class _CountingBackend:
    def __init__(self):
        self.inner = BuiltinTestBackend()
        self.text_calls = 0
        self.audio_calls = 0

    def info(self):
        return self.inner.info()

    def embed_texts(self, texts):
        self.text_calls += 1
        return self.inner.embed_texts(texts)

    def embed_audio(self, samples, sample_rate):
        self.audio_calls += 1
        return self.inner.embed_audio(samples, sample_rate)


class TestEmbedText:
    def test_cache_hit_skips_backend(self):
        backend = _CountingBackend()
        first = embed_text("a warm sound", backend)
        second = embed_text("a warm sound", backend)
        assert backend.text_calls == 1
        np.testing.assert_array_equal(first.values, second.values)

    def test_distinct_prompts_each_hit_backend(self):
        backend = _CountingBackend()
        embed_text("one sound", backend)
        embed_text("another sound", backend)
        assert backend.text_calls == 2

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            embed_text("", BuiltinTestBackend())


class TestEmbedAudio:
    def test_rate_mismatch_names_both_rates(self):
        buf = AudioBuffer(np.ones(441), 44100)
        with pytest.raises(ValueError) as err:
            embed_audio(buf, BuiltinTestBackend())
        assert "48000" in str(err.value) and "44100" in str(err.value)

    def test_stereo_rejected(self):
        buf = AudioBuffer(np.ones((2, 480)), 48000)
        with pytest.raises(ValueError):
            embed_audio(buf, BuiltinTestBackend())

    def test_not_cached(self):
        backend = _CountingBackend()
        buf = AudioBuffer(np.ones(480), 48000)
        embed_audio(buf, backend)
        embed_audio(buf, backend)
        assert backend.audio_calls == 2


class TestScore:
    def test_final_is_target_minus_guide(self):
        backend = BuiltinTestBackend()
        prompts = embed_prompts(PromptPair("a bright crisp sound"), backend)
        buf = noise(0.1, 48000, seed=2)
        got = score(buf, prompts, backend)
        assert got.s_final == got.s_target - got.s_guide
        assert got.s_guide != 0.0

    def test_guide_disabled_zeroes_guide(self):
        backend = BuiltinTestBackend()
        prompts = embed_prompts(
            PromptPair("a bright crisp sound", guide_enabled=False), backend
        )
        got = score(noise(0.1, 48000, seed=2), prompts, backend)
        assert got.s_guide == 0.0
        assert got.s_final == got.s_target

    def test_deterministic(self):
        backend = BuiltinTestBackend()
        prompts = embed_prompts(PromptPair("a deep sound"), backend)
        buf = noise(0.1, 48000, seed=3)
        assert score(buf, prompts, backend) == score(buf, prompts, backend)


class _FlakyBackend:
    """Violates the determinism contract on purpose."""

    def __init__(self):
        self.inner = BuiltinTestBackend()
        self.n = 0

    def info(self):
        return self.inner.info()

    def embed_texts(self, texts):
        return self.inner.embed_texts(texts)

    def embed_audio(self, samples, sample_rate):
        self.n += 1
        vec = self.inner.embed_audio(samples, sample_rate)
        return vec + 1e-3 * self.n


class TestScorer:
    def test_conditions_to_backend_rate(self):
        scorer = Scorer(BuiltinTestBackend(), PromptPair("a clean sound"))
        buf = noise(0.2, 44100, seed=4, channels=2)
        breakdown = scorer.score_audio(buf)
        assert breakdown.s_final == breakdown.s_target - breakdown.s_guide

    def test_native_rate_passthrough_deterministic(self):
        scorer = Scorer(BuiltinTestBackend(), PromptPair("a clean sound"))
        buf = noise(0.2, 48000, seed=5)
        assert scorer.score_audio(buf) == scorer.score_audio(buf)

    def test_flaky_backend_warns(self):
        scorer = Scorer(_FlakyBackend(), PromptPair("a clean sound"))
        buf = noise(0.1, 48000, seed=6)
        scorer.score_audio(buf)
        with pytest.warns(RuntimeWarning):
            scorer.score_audio(buf)


def test_builtin_backend_dim_matches_embedding(rng):
    info = BuiltinTestBackend().info()
    emb = embed_text("echo", BuiltinTestBackend())
    assert emb.dim == info.embedding_dim
