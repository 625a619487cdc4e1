"""Optimization loop over factor-homogeneous batches."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .. import autodiff as ad
from .. import encoder as enc
from ..encoder import EncoderConfig, EncoderWeights
from ..tokenizer import TokenSequence, Vocabulary, encode, pad_batch
from .objective import batch_contrastive_loss
from .optim import AdamState, adamw_step, clip_grad_norm, linear_warmup_decay
from .samples import Batch, TrainingSample, assemble_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    peak_lr: float = 3e-4
    weight_decay: float = 0.01
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    hard_negatives_per_sample: int = 1
    in_batch_negatives: bool = True
    warmup_fraction: float = 0.1
    max_grad_norm: float = 1.0
    max_samples_per_factor: int | None = None
    init_std: float = 0.02
    seed: int = 0


@dataclass
class TrainResult:
    weights: EncoderWeights
    history: list[tuple[int, str, float]] = field(default_factory=list)
    steps: int = 0
    seconds: float = 0.0

    def epoch_losses(self, factor: str) -> list[float]:
        return [loss for _, f, loss in self.history if f == factor]

    def write_history(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "factor", "mean_loss"])
            for epoch, factor, loss in self.history:
                w.writerow([epoch, factor, repr(loss)])


class TokenCache:
    def __init__(self, texts: Mapping[str, str], vocab: Vocabulary, max_len: int):
        self.texts, self.vocab, self.max_len = texts, vocab, max_len
        self._seqs: dict[str, TokenSequence] = {}

    def __getitem__(self, key: str) -> TokenSequence:
        seq = self._seqs.get(key)
        if seq is None:
            seq = encode(self.texts[key], self.vocab, self.max_len, pad=False)
            self._seqs[key] = seq
        return seq


def interleave(per_factor: Mapping[str, list], order: Sequence[str]) -> list:
    """Round-robin over factors until every factor's list is exhausted."""
    out = []
    longest = max((len(v) for v in per_factor.values()), default=0)
    for i in range(longest):
        for f in order:
            batches = per_factor.get(f, [])
            if i < len(batches):
                out.append(batches[i])
    return out


def _truncate(samples: list[TrainingSample], k: int) -> list[TrainingSample]:
    return [s if len(s.negatives) <= k else
            TrainingSample(s.factor, s.anchor, s.positive, s.negatives[:k]) for s in samples]


def batch_loss(batch: Batch, p: dict, cfg: EncoderConfig, tokens: TokenCache,
               instr_ids: np.ndarray | None) -> ad.Tensor:
    """Forward pass for one batch; returns the mean contrastive loss."""
    keys = list(dict.fromkeys(batch.anchors + batch.positives + batch.hard))
    slot = {k: i for i, k in enumerate(keys)}
    ids, mask = pad_batch([tokens[k] for k in keys])
    if instr_ids is None:
        emb = enc.encode_paper_uninstructed(ids, mask, p, cfg)
    else:
        states = enc.encode_instruction(instr_ids, p, cfg)
        emb = enc.encode_paper(ids, mask, states, p, cfg)
    a = emb[np.array([slot[k] for k in batch.anchors])]
    pos = emb[np.array([slot[k] for k in batch.positives])]
    hard = emb[np.array([slot[k] for k in batch.hard])] if batch.hard else None
    return batch_contrastive_loss(a, pos, hard, batch.hard_owner, batch.in_batch_mask)


def train(config: TrainConfig, datasets: Mapping[str, list[TrainingSample]],
          texts: Mapping[str, str], vocab: Vocabulary, encoder_config: EncoderConfig,
          instructed: bool = True, weights: EncoderWeights | None = None,
          on_epoch: Callable[[int, dict[str, float]], None] | None = None) -> TrainResult:
    """Minimize the summed contrastive loss over all factor datasets.

    Batches hold a single factor (one instruction context) and are visited
    round-robin across factors. ``instructed=False`` trains the plain paper
    encoder on the same data.
    """
    factors = [f for f in (*enc.FACTORS, *sorted(datasets)) if datasets.get(f)]
    factors = list(dict.fromkeys(factors))
    if not factors:
        raise ValueError("no non-empty factor dataset")
    rng = np.random.default_rng(config.seed)
    if weights is None:
        weights = EncoderWeights.initialize(encoder_config, seed=config.seed,
                                            init_std=config.init_std)
    data = {}
    for f in factors:
        samples = _truncate(list(datasets[f]), config.hard_negatives_per_sample)
        if config.max_samples_per_factor and len(samples) > config.max_samples_per_factor:
            keep = np.sort(rng.choice(len(samples), config.max_samples_per_factor, replace=False))
            samples = [samples[i] for i in keep]
        data[f] = samples

    tokens = TokenCache(texts, vocab, encoder_config.max_paper_len)
    instr_ids = {}
    for f in factors:
        seq = encode(enc.INSTRUCTIONS[f], vocab, encoder_config.max_instruction_len, pad=False)
        instr_ids[f] = seq.ids if instructed else None

    bs = config.batch_size
    per_epoch = sum(-(-len(s) // bs) for s in data.values())
    total_steps = per_epoch * config.epochs
    state = AdamState()
    result = TrainResult(weights)
    start = time.perf_counter()
    step = 0
    for epoch in range(1, config.epochs + 1):
        batches = {}
        for f in factors:
            order = rng.permutation(len(data[f]))
            chunks = [order[i: i + bs] for i in range(0, len(order), bs)]
            batches[f] = [assemble_batch([data[f][j] for j in c], config.in_batch_negatives)
                          for c in chunks]
        sums = {f: 0.0 for f in factors}
        counts = {f: 0 for f in factors}
        for batch in interleave(batches, factors):
            p = weights.tensors(requires_grad=True)
            loss = batch_loss(batch, p, encoder_config, tokens, instr_ids[batch.factor])
            grads = ad.backward(loss, p.values())
            clip_grad_norm(grads, config.max_grad_norm)
            lr = linear_warmup_decay(step, total_steps, config.peak_lr, config.warmup_fraction)
            adamw_step(weights.params, grads, state, lr, config.adam_betas, config.adam_eps,
                       config.weight_decay)
            sums[batch.factor] += loss.item()
            counts[batch.factor] += 1
            step += 1
        means = {f: sums[f] / counts[f] for f in factors if counts[f]}
        for f, m in means.items():
            result.history.append((epoch, f, m))
        log.info("epoch %d: %s", epoch, " ".join(f"{f}={m:.4f}" for f, m in means.items()))
        if on_epoch is not None:
            on_epoch(epoch, means)
    result.steps = step
    result.seconds = time.perf_counter() - start
    return result
