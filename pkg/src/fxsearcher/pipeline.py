"""End-to-end run: load audio, search parameters, write artifacts.

Five files land in the output directory:

* transformed.wav - the best candidate's audio, float-32
* params.json    - the winning parameter set
* trace.csv      - per-evaluation scores (deterministic for a seed)
* trace.json     - sidecar with every evaluated parameter vector
* run.json       - resolved configuration and outcome summary
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .audio import load_wav, save_wav
from .backends import BuiltinTestBackend, HttpBackend
from .effects import apply_chain
from .params import ALL_STAGES, decode_params, validate_stages
from .scoring import DEFAULT_GUIDE_PROMPT, PromptPair, Scorer
from .search import (
    SearchConfig,
    SearchResult,
    optimize,
    write_trace_csv,
    write_trace_json,
)

RUN_SCHEMA_VERSION = 1
BUILTIN_BACKEND_NAME = "builtin-test"


@dataclass(frozen=True)
class RunConfig:
    input_path: str
    output_dir: str
    target_prompt: str
    guide_prompt: str = DEFAULT_GUIDE_PROMPT
    guide_enabled: bool = True
    backend: str = BUILTIN_BACKEND_NAME  # URL or the builtin marker
    enabled_stages: tuple = ALL_STAGES
    search: SearchConfig = field(default_factory=SearchConfig)

    def __post_init__(self):
        object.__setattr__(self, "enabled_stages", validate_stages(self.enabled_stages))
        # constructing the pair validates both prompt strings
        PromptPair(self.target_prompt, self.guide_prompt, self.guide_enabled)

    def to_dict(self) -> dict:
        return {
            "schema_version": RUN_SCHEMA_VERSION,
            "input_path": str(self.input_path),
            "output_dir": str(self.output_dir),
            "target_prompt": self.target_prompt,
            "guide_prompt": self.guide_prompt,
            "guide_enabled": self.guide_enabled,
            "backend": self.backend,
            "enabled_stages": list(self.enabled_stages),
            "search": self.search.to_dict(),
        }


@dataclass(frozen=True)
class RunArtifacts:
    result: SearchResult
    output_dir: str
    transformed_path: str
    params_path: str
    trace_csv_path: str
    trace_json_path: str
    run_json_path: str


def make_backend(name_or_url: str):
    if name_or_url == BUILTIN_BACKEND_NAME:
        return BuiltinTestBackend()
    return HttpBackend(name_or_url)


def run_optimization(config: RunConfig) -> RunArtifacts:
    """Execute the search described by config and write all artifacts."""
    backend = make_backend(config.backend)
    backend.info()  # probe reachability before touching audio

    source = load_wav(config.input_path)
    prompts = PromptPair(
        target_prompt=config.target_prompt,
        guide_prompt=config.guide_prompt,
        guide_enabled=config.guide_enabled,
    )
    scorer = Scorer(backend, prompts)

    def objective(unit_vector):
        params = decode_params(unit_vector)
        transformed = apply_chain(source, params, config.enabled_stages)
        return scorer.score_audio(transformed)

    result = optimize(objective, config.search)

    os.makedirs(config.output_dir, exist_ok=True)
    best_params = decode_params(result.best_x)
    transformed = apply_chain(source, best_params, config.enabled_stages)

    transformed_path = os.path.join(config.output_dir, "transformed.wav")
    params_path = os.path.join(config.output_dir, "params.json")
    trace_csv_path = os.path.join(config.output_dir, "trace.csv")
    trace_json_path = os.path.join(config.output_dir, "trace.json")
    run_json_path = os.path.join(config.output_dir, "run.json")

    save_wav(transformed, transformed_path)
    with open(params_path, "w", encoding="utf-8") as fh:
        json.dump(best_params.to_dict(), fh, indent=2)
        fh.write("\n")
    write_trace_csv(trace_csv_path, result.trace)
    write_trace_json(trace_json_path, result.trace)

    run_payload = {
        "schema_version": RUN_SCHEMA_VERSION,
        "package_version": __version__,
        "config": config.to_dict(),
        "seed": config.search.seed,
        "backend_model_id": backend.info().model_id,
        "stop_reason": result.stop_reason,
        "n_evaluations": result.n_evaluations,
        "n_failures": result.n_failures,
        "best_iteration": int(result.trace[_best_index(result)].iteration),
        "best_score": result.best_score.to_dict(),
    }
    with open(run_json_path, "w", encoding="utf-8") as fh:
        json.dump(run_payload, fh, indent=2)
        fh.write("\n")

    return RunArtifacts(
        result=result,
        output_dir=config.output_dir,
        transformed_path=transformed_path,
        params_path=params_path,
        trace_csv_path=trace_csv_path,
        trace_json_path=trace_json_path,
        run_json_path=run_json_path,
    )


def _best_index(result: SearchResult) -> int:
    finals = [obs.score.s_final for obs in result.trace]
    return int(np.argmax(finals))
