"""Model backends: anything that can answer "given these token ids, what is
the log-probability of every possible next token".

Two implementations:

* HFCausalBackend -- a causal-LM transformer checkpoint (local path or hub
  id). Inference runs in eval mode under no_grad, one context at a time, so
  responses are deterministic and independent of batch composition.
* NGramBackend -- a saved fuselm n-gram model, used as a conformance shim:
  the served distributions must match local computation bit-for-bit up to
  transport rounding.
"""

from __future__ import annotations

from typing import List, Sequence

import numpy as np


class ContextOverflow(Exception):
    """Context longer than the model's positional budget."""

    def __init__(self, length: int, limit: int):
        super().__init__(f"context of {length} tokens exceeds the limit of {limit}")
        self.length = length
        self.limit = limit


class BadTokenId(Exception):
    def __init__(self, token: int, vocab_size: int):
        super().__init__(f"token id {token} out of range for vocab of {vocab_size}")


class HFCausalBackend:
    """Serves a transformers causal-LM checkpoint on a fixed device."""

    def __init__(self, model_id: str, device: str = "cpu"):
        import torch
        from transformers import AutoModelForCausalLM

        self._torch = torch
        self.model = AutoModelForCausalLM.from_pretrained(model_id)
        self.model.eval()
        self.device = torch.device(device)
        self.model.to(self.device)
        config = self.model.config
        self.model_id = model_id
        self.vocab_size = int(config.vocab_size)
        self.max_context = int(
            getattr(config, "n_positions", None)
            or getattr(config, "max_position_embeddings", None)
            or 1024
        )
        bos = getattr(config, "bos_token_id", None)
        self.bos_token_id = int(bos) if bos is not None else 0

    def next_logprobs(self, contexts: Sequence[Sequence[int]]) -> List[List[float]]:
        torch = self._torch
        rows = []
        for ctx in contexts:
            ids = [int(t) for t in ctx]
            for t in ids:
                if t < 0 or t >= self.vocab_size:
                    raise BadTokenId(t, self.vocab_size)
            if len(ids) > self.max_context:
                raise ContextOverflow(len(ids), self.max_context)
            if not ids:
                ids = [self.bos_token_id]  # unconditional prediction
            with torch.no_grad():
                inp = torch.tensor([ids], dtype=torch.long, device=self.device)
                logits = self.model(inp).logits[0, -1, : self.vocab_size]
                logprobs = torch.log_softmax(logits.double(), dim=-1)
            rows.append(logprobs.cpu().numpy().tolist())
        return rows


class NGramBackend:
    """Conformance shim over a saved fuselm n-gram model file."""

    def __init__(self, model_path: str):
        from fuselm.ngram import load_ngram

        self.lm = load_ngram(model_path)
        self.model_id = f"ngram:{self.lm.name}"
        self.vocab_size = self.lm.vocab_size
        self.max_context = 1_000_000  # n-grams only look at a bounded suffix

    def next_logprobs(self, contexts: Sequence[Sequence[int]]) -> List[List[float]]:
        for ctx in contexts:
            for t in ctx:
                if t < 0 or int(t) >= self.vocab_size:
                    raise BadTokenId(int(t), self.vocab_size)
        if not contexts:
            return []
        dists = self.lm.dists_for_contexts([list(map(int, c)) for c in contexts])
        return np.log(dists).tolist()


def load_backend(model_id: str, model_type: str = "auto", device: str = "cpu"):
    if model_type == "auto":
        model_type = "ngram" if model_id.endswith(".ngm") else "hf"
    if model_type == "hf":
        return HFCausalBackend(model_id, device=device)
    if model_type == "ngram":
        return NGramBackend(model_id)
    raise ValueError(f"unknown model type {model_type!r}")
