"""The optimization objective: dual-prompt embedding similarity.

A candidate's transformed audio is embedded next to two text prompts.
The score to maximize is s_final = s_target - s_guide, where s_target
rewards similarity to the user's description and s_guide penalizes
similarity to a fixed description of processing artifacts. Disabling
the guide pins s_guide to 0.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer, downmix_mono, resample
from .backends import BackendInfo

DEFAULT_GUIDE_PROMPT = (
    "A harsh, distorted, muddy, unclear, oversaturated, unpleasant sound."
)

# Two scores for the same audio differing by more than this means the
# backend broke its determinism contract; we warn rather than abort.
_FLAKY_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Embedding:
    """A finite, nonzero vector from the backend's embedding space."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.size == 0 or not np.all(np.isfinite(values)):
            raise ValueError("embedding must be a non-empty finite vector")
        norm = float(np.linalg.norm(values))
        if norm == 0.0:
            raise ValueError("zero embedding vector")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class ScoreBreakdown:
    """s_target and s_guide are cosines in [-1, 1]; s_final their difference."""

    s_target: float
    s_guide: float
    s_final: float

    @classmethod
    def from_parts(cls, s_target: float, s_guide: float) -> "ScoreBreakdown":
        return cls(float(s_target), float(s_guide), float(s_target) - float(s_guide))

    def __post_init__(self):
        if self.s_final != self.s_target - self.s_guide:
            raise ValueError("s_final must equal s_target - s_guide")

    def to_dict(self) -> dict:
        return {"s_target": self.s_target, "s_guide": self.s_guide, "s_final": self.s_final}


@dataclass(frozen=True)
class PromptPair:
    """Target text to move toward; guide text to move away from."""

    target_prompt: str
    guide_prompt: str = DEFAULT_GUIDE_PROMPT
    guide_enabled: bool = True

    def __post_init__(self):
        if not isinstance(self.target_prompt, str) or not self.target_prompt.strip():
            raise ValueError("target_prompt must be non-empty text")
        if not isinstance(self.guide_prompt, str) or not self.guide_prompt.strip():
            raise ValueError("guide_prompt must be non-empty text")


@dataclass(frozen=True)
class EmbeddedPrompts:
    """Prompt embeddings, computed once per run (they never change mid-loop)."""

    target: Embedding
    guide: Embedding | None
    guide_enabled: bool


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise ValueError(f"embedding dimensions differ: {a.dim} vs {b.dim}")
    value = float(a.values @ b.values) / (a.norm * b.norm)
    return float(np.clip(value, -1.0, 1.0))


# prompt -> Embedding, keyed per backend object; inference on text is
# loop-invariant so one request per distinct prompt per process suffices
_text_cache_lock = threading.Lock()
_text_cache: dict = {}


def _cache_for(backend) -> dict:
    key = id(backend)
    with _text_cache_lock:
        cache = _text_cache.get(key)
        if cache is None:
            # hold a reference so id() cannot be recycled behind our back
            cache = {"_backend": backend}
            _text_cache[key] = cache
        return cache


def embed_text(prompt: str, backend) -> Embedding:
    """Embed a prompt, serving repeats from a process-lifetime cache."""
    if not isinstance(prompt, str) or not prompt.strip():
        raise ValueError("prompt must be non-empty text")
    cache = _cache_for(backend)
    with _text_cache_lock:
        hit = cache.get(prompt)
    if hit is not None:
        return hit
    vec = backend.embed_texts([prompt])[0]
    emb = Embedding(vec)
    with _text_cache_lock:
        cache[prompt] = emb
    return emb


def embed_audio(audio: AudioBuffer, backend) -> Embedding:
    """Embed mono audio already at the backend's advertised rate. Not cached."""
    info: BackendInfo = backend.info()
    if audio.channels != 1:
        raise ValueError(f"backend expects mono audio, got {audio.channels} channels")
    if audio.sample_rate != info.sample_rate:
        raise ValueError(
            f"backend expects sample rate {info.sample_rate}, got {audio.sample_rate}"
        )
    return Embedding(backend.embed_audio(audio.samples[0], audio.sample_rate))


def embed_prompts(prompts: PromptPair, backend) -> EmbeddedPrompts:
    target = embed_text(prompts.target_prompt, backend)
    guide = embed_text(prompts.guide_prompt, backend) if prompts.guide_enabled else None
    return EmbeddedPrompts(target=target, guide=guide, guide_enabled=prompts.guide_enabled)


def score(audio: AudioBuffer, prompts: EmbeddedPrompts, backend) -> ScoreBreakdown:
    """Score one candidate's audio against the precomputed prompt embeddings."""
    audio_emb = embed_audio(audio, backend)
    s_target = cosine_similarity(audio_emb, prompts.target)
    s_guide = cosine_similarity(audio_emb, prompts.guide) if prompts.guide_enabled else 0.0
    return ScoreBreakdown.from_parts(s_target, s_guide)


class Scorer:
    """Bundles backend, prompt embeddings, and audio conditioning.

    Candidate audio arrives at its native rate and channel count; it is
    resampled and downmixed here to meet the backend's requirements.
    Repeat scores of byte-identical audio are checked against each other
    to surface nondeterministic backends.
    """

    def __init__(self, backend, prompts: PromptPair):
        self.backend = backend
        self.prompts = prompts
        self.info = backend.info()
        self.embedded = embed_prompts(prompts, backend)
        self._seen: dict = {}
        self._seen_order: list = []
        self._lock = threading.Lock()

    def condition(self, buf: AudioBuffer) -> AudioBuffer:
        return resample(downmix_mono(buf), self.info.sample_rate)

    def _check_flaky(self, conditioned: AudioBuffer, breakdown: ScoreBreakdown):
        key = hash(conditioned.samples.tobytes())
        with self._lock:
            previous = self._seen.get(key)
            if previous is None:
                if len(self._seen_order) >= 256:
                    self._seen.pop(self._seen_order.pop(0), None)
                self._seen[key] = breakdown.s_final
                self._seen_order.append(key)
        if previous is not None and abs(previous - breakdown.s_final) > _FLAKY_TOLERANCE:
            warnings.warn(
                "embedding backend returned different scores for identical audio "
                f"({previous:.8f} vs {breakdown.s_final:.8f}); it violates its "
                "determinism contract",
                RuntimeWarning,
                stacklevel=3,
            )

    def score_audio(self, buf: AudioBuffer) -> ScoreBreakdown:
        conditioned = self.condition(buf)
        breakdown = score(conditioned, self.embedded, self.backend)
        self._check_flaky(conditioned, breakdown)
        return breakdown
