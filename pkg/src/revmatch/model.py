"""Text-in, vector-out wrapper around the encoder weights."""

from __future__ import annotations

import numpy as np

from . import encoder as enc
from .encoder import EncoderWeights
from .tokenizer import Vocabulary, encode, pad_batch


class FactorModel:
    """Embeds texts as ``g(text | factor)``.

    With ``instructed=False`` the factor argument is ignored and every text
    gets the single factor-agnostic embedding.
    """

    def __init__(self, weights: EncoderWeights, vocab: Vocabulary, instructed: bool = True,
                 normalize: bool = False, batch_size: int = 64):
        if len(vocab) != weights.config.vocab_size:
            raise ValueError(
                f"vocabulary has {len(vocab)} entries, weights expect {weights.config.vocab_size}")
        self.weights = weights
        self.vocab = vocab
        self.instructed = instructed
        self.normalize = normalize
        self.batch_size = batch_size
        self._instr_cache: dict[str, list] = {}

    @property
    def dim(self) -> int:
        return self.weights.config.hidden_dim

    def instruction_states(self, factor: str):
        # depends only on the instruction, so computed once per factor
        if factor not in self._instr_cache:
            cfg = self.weights.config
            seq = encode(enc.INSTRUCTIONS[factor], self.vocab, cfg.max_instruction_len, pad=False)
            self._instr_cache[factor] = enc.encode_instruction(
                seq.ids, self.weights.tensors(), cfg)
        return self._instr_cache[factor]

    def embed(self, texts: list[str], factor: str | None) -> np.ndarray:
        cfg = self.weights.config
        out = np.zeros((len(texts), cfg.hidden_dim))
        if not texts:
            return out
        p = self.weights.tensors()
        states = None
        if self.instructed and factor is not None:
            states = self.instruction_states(factor)
        seqs = [encode(t, self.vocab, cfg.max_paper_len, pad=False) for t in texts]
        for lo in range(0, len(seqs), self.batch_size):
            ids, mask = pad_batch(seqs[lo: lo + self.batch_size])
            if states is None:
                emb = enc.encode_paper_uninstructed(ids, mask, p, cfg)
            else:
                emb = enc.encode_paper(ids, mask, states, p, cfg)
            out[lo: lo + len(ids)] = emb.data
        if self.normalize:
            out /= np.maximum(np.linalg.norm(out, axis=1, keepdims=True), 1e-12)
        return out
