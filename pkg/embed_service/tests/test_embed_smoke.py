"""Full pipeline over the live service: tune a chain on the bundled clip.

One real end-to-end run: the optimizer talks to the HTTP service for
every score, and the tuned chain has to beat leaving the audio alone.
"""

import json

from fxsearcher.audio import load_wav
from fxsearcher.backends import HttpBackend
from fxsearcher.effects import apply_chain
from fxsearcher.params import neutral_params
from fxsearcher.pipeline import RunConfig, run_optimization
from fxsearcher.scoring import PromptPair, Scorer
from fxsearcher.search import SearchConfig

PROMPT = "a voice with heavy echo in a large hall"


class TestEndToEnd:
    def test_search_beats_the_neutral_chain(self, base_url, speech_wav, tmp_path):
        config = RunConfig(
            input_path=str(speech_wav),
            output_dir=str(tmp_path / "run"),
            target_prompt=PROMPT,
            backend=base_url,
            search=SearchConfig(max_iterations=24, init_samples=8, seed=5),
        )
        artifacts = run_optimization(config)
        result = artifacts.result
        assert result.n_evaluations <= 100

        scorer = Scorer(HttpBackend(base_url), PromptPair(target_prompt=PROMPT))
        neutral = scorer.score_audio(
            apply_chain(load_wav(str(speech_wav)), neutral_params())
        )
        assert result.best_score.s_final > neutral.s_final

        with open(artifacts.run_json_path, encoding="utf-8") as fh:
            run_payload = json.load(fh)
        assert run_payload["backend_model_id"].endswith("untrained-fallback")
        assert run_payload["n_evaluations"] == len(result.trace)
