"""CLAP checkpoint wrapper: loading, preprocessing, embedding.

Everything the service reports about itself (embedding size, expected
sample rate, model identity) is read from the loaded checkpoint's own
configuration; nothing is hard-coded here.

When the pretrained checkpoint cannot be fetched (air-gapped machines,
CI sandboxes) the loader falls back to a randomly initialized model of
the same architecture with a fixed weight seed. That mode is useless
for real audio search but keeps the full service stack exercisable; the
reported model_id carries an explicit suffix so nobody mistakes the
fallback for the real checkpoint.
"""

from __future__ import annotations

import math
import sys

import numpy as np
import torch
from scipy.signal import resample_poly
from transformers import AutoTokenizer, ClapConfig, ClapFeatureExtractor, ClapModel

DEFAULT_MODEL_ID = "laion/clap-htsat-fused"
UNTRAINED_SUFFIX = "+untrained-fallback"

# fallback byte-level tokenizer: RoBERTa-style specials, then raw bytes
_BOS_ID = 0
_PAD_ID = 1
_EOS_ID = 2
_BYTE_OFFSET = 4


def _as_embedding(output) -> torch.Tensor:
    # transformers switched get_*_features from a bare tensor to a
    # ModelOutput; accept either
    return output.pooler_output if hasattr(output, "pooler_output") else output


class ClapEmbedder:
    """Deterministic inference front end over one loaded CLAP model."""

    def __init__(self, model, feature_extractor, tokenizer, model_id: str, device):
        self.model = model.eval().to(device)
        self.feature_extractor = feature_extractor
        self.tokenizer = tokenizer  # None = byte-level fallback
        self.model_id = str(model_id)
        self.device = device
        for p in self.model.parameters():
            p.requires_grad_(False)

    @property
    def embedding_dim(self) -> int:
        return int(self.model.config.projection_dim)

    @property
    def sample_rate(self) -> int:
        return int(self.feature_extractor.sampling_rate)

    @property
    def window_samples(self) -> int:
        """The model's native receptive window, in samples."""
        return int(round(self.feature_extractor.max_length_s * self.sample_rate))

    def _encode_texts(self, texts):
        if self.tokenizer is not None:
            batch = self.tokenizer(
                list(texts), padding=True, truncation=True, return_tensors="pt"
            )
            return batch["input_ids"], batch["attention_mask"]
        # UTF-8 bytes shifted past the special ids, truncated to the
        # text encoder's position table
        limit = int(self.model.config.text_config.max_position_embeddings) - 4
        rows = []
        for text in texts:
            payload = list(text.encode("utf-8"))[:limit]
            rows.append([_BOS_ID] + [_BYTE_OFFSET + b for b in payload] + [_EOS_ID])
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), _PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(rows), width), dtype=torch.long)
        for i, row in enumerate(rows):
            ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
            mask[i, : len(row)] = 1
        return ids, mask

    def embed_texts(self, texts) -> np.ndarray:
        ids, mask = self._encode_texts(texts)
        with torch.no_grad():
            out = self.model.get_text_features(
                input_ids=ids.to(self.device), attention_mask=mask.to(self.device)
            )
        return _as_embedding(out).cpu().double().numpy()

    def embed_audio(self, samples: np.ndarray, sample_rate: int) -> np.ndarray:
        x = np.asarray(samples, dtype=np.float64).ravel()
        if sample_rate != self.sample_rate:
            g = math.gcd(int(sample_rate), self.sample_rate)
            x = resample_poly(x, self.sample_rate // g, int(sample_rate) // g)
        # the extractor's own long-audio handling randomly crops; crop
        # deterministically to the window center instead, so identical
        # payloads always embed identically
        if x.size > self.window_samples:
            start = (x.size - self.window_samples) // 2
            x = x[start : start + self.window_samples]
        features = self.feature_extractor(
            x, sampling_rate=self.sample_rate, return_tensors="pt"
        )
        kwargs = {"input_features": features["input_features"].to(self.device)}
        if "is_longer" in features:
            kwargs["is_longer"] = features["is_longer"].to(self.device)
        with torch.no_grad():
            out = self.model.get_audio_features(**kwargs)
        return _as_embedding(out).cpu().double().numpy()[0]


def _resolve_device(name: str):
    if name == "cpu":
        return torch.device("cpu")
    if name == "gpu":
        if not torch.cuda.is_available():
            raise RuntimeError("device 'gpu' requested but CUDA is not available")
        return torch.device("cuda")
    raise ValueError(f"device must be 'cpu' or 'gpu', got {name!r}")


def load_embedder(
    model_id: str = DEFAULT_MODEL_ID,
    device: str = "cpu",
    prefer_pretrained: bool = True,
    fallback_seed: int = 0,
) -> ClapEmbedder:
    """Load the checkpoint, or build the seeded untrained fallback."""
    dev = _resolve_device(device)
    if prefer_pretrained:
        try:
            model = ClapModel.from_pretrained(model_id)
            extractor = ClapFeatureExtractor.from_pretrained(model_id)
            tokenizer = AutoTokenizer.from_pretrained(model_id)
            return ClapEmbedder(model, extractor, tokenizer, model_id, dev)
        except Exception as exc:
            print(
                f"warning: cannot load pretrained {model_id!r} "
                f"({type(exc).__name__}); serving untrained fallback weights",
                file=sys.stderr,
            )
    torch.manual_seed(fallback_seed)
    model = ClapModel(ClapConfig())
    extractor = ClapFeatureExtractor(truncation="rand_trunc")
    return ClapEmbedder(model, extractor, None, model_id + UNTRAINED_SUFFIX, dev)
