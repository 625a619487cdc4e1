"""Contrastive pre-training: data builders, objective, optimizer, loop."""

from .objective import batch_contrastive_loss, contrastive_loss
from .optim import AdamState, NonFiniteGradientError, adamw_step, clip_grad_norm, linear_warmup_decay
from .samples import (Batch, MixedFactorError, SampleReport, TrainingSample, assemble_batch,
                      build_citation_samples, build_semantic_samples, build_topic_samples,
                      citation_triplets, topic_positive_pairs)
from .synthetic import SyntheticCorpus, SyntheticCorpusSpec, generate_synthetic_corpus
from .trainer import TrainConfig, TrainResult, train

__all__ = [
    "AdamState", "Batch", "MixedFactorError", "NonFiniteGradientError", "SampleReport",
    "SyntheticCorpus", "SyntheticCorpusSpec", "TrainConfig", "TrainResult", "TrainingSample",
    "adamw_step", "assemble_batch", "batch_contrastive_loss", "build_citation_samples",
    "build_semantic_samples", "build_topic_samples", "citation_triplets", "clip_grad_norm",
    "contrastive_loss", "generate_synthetic_corpus", "linear_warmup_decay",
    "topic_positive_pairs", "train",
]
