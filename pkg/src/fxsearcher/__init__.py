"""Text-driven audio transformation.

Describe the sound you want; a Gaussian-process search tunes a chain of
six audio effects until an embedding model agrees the audio matches the
description (and stays away from a guide prompt describing processing
artifacts).
"""

__version__ = "0.1.0"

from .audio import AudioBuffer, downmix_mono, load_wav, resample, save_wav
from .backends import BackendInfo, BuiltinTestBackend, HttpBackend, handle_request
from .effects import (
    apply_bitcrush,
    apply_chain,
    apply_delay,
    apply_distortion,
    apply_equalizer,
    apply_pitch_shift,
    apply_reverb,
)
from .errors import (
    BackendProtocolError,
    BackendTransportError,
    CorruptFileError,
    FxSearcherError,
    GpFitError,
    OptimizationAborted,
    ParamValidationError,
    UnsupportedFormatError,
)
from .gp import GpModel, fit_gp
from .params import (
    ALL_STAGES,
    EQ_BAND_HZ,
    NUM_PARAMS,
    FxParams,
    decode_params,
    encode_params,
    neutral_params,
)
from .pipeline import RunArtifacts, RunConfig, run_optimization
from .samples import speech_clip
from .scoring import (
    DEFAULT_GUIDE_PROMPT,
    Embedding,
    EmbeddedPrompts,
    PromptPair,
    ScoreBreakdown,
    Scorer,
    cosine_similarity,
    embed_audio,
    embed_prompts,
    embed_text,
    score,
)
from .search import (
    Observation,
    SearchConfig,
    SearchResult,
    expected_improvement,
    optimize,
    propose_next,
)

__all__ = [
    "__version__",
    "AudioBuffer", "downmix_mono", "load_wav", "resample", "save_wav",
    "BackendInfo", "BuiltinTestBackend", "HttpBackend", "handle_request",
    "apply_bitcrush", "apply_chain", "apply_delay", "apply_distortion",
    "apply_equalizer", "apply_pitch_shift", "apply_reverb",
    "FxSearcherError", "UnsupportedFormatError", "CorruptFileError",
    "ParamValidationError", "BackendTransportError", "BackendProtocolError",
    "GpFitError", "OptimizationAborted",
    "GpModel", "fit_gp",
    "ALL_STAGES", "EQ_BAND_HZ", "NUM_PARAMS", "FxParams",
    "decode_params", "encode_params", "neutral_params",
    "RunArtifacts", "RunConfig", "run_optimization",
    "speech_clip",
    "DEFAULT_GUIDE_PROMPT", "Embedding", "EmbeddedPrompts", "PromptPair",
    "ScoreBreakdown", "Scorer", "cosine_similarity", "embed_audio",
    "embed_prompts", "embed_text", "score",
    "Observation", "SearchConfig", "SearchResult",
    "expected_improvement", "optimize", "propose_next",
]
