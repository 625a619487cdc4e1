"""End-to-end helpers shared by the CLI and the benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import CorpusRecord, Reviewer, SearchQuery, citation_graph
from .encoder import INSTRUCTIONS, EncoderConfig
from .evaluation import build_probe_tasks
from .matching import (AblationVariant, ChainConfig, EmbeddingCache, ProfileFilters,
                       ReviewerScore, build_profiles, rank_reviewers)
from .model import FactorModel
from .pretraining import (TrainConfig, TrainResult, build_citation_samples,
                          build_semantic_samples, build_topic_samples, train)
from .tokenizer import Vocabulary, build_vocab


@dataclass
class TrainingData:
    datasets: dict[str, list]
    texts: dict[str, str]
    vocab: Vocabulary


def training_texts(papers: Sequence[CorpusRecord], search_log: Sequence[SearchQuery],
                   extra: Sequence[CorpusRecord] = ()) -> dict[str, str]:
    texts = {p.id: p.text for p in papers}
    texts.update({p.id: p.text for p in extra})
    texts.update({q.query_id: q.query for q in search_log})
    return texts


def prepare_training(papers: Sequence[CorpusRecord], search_log: Sequence[SearchQuery],
                     seed: int = 0, extra: Sequence[CorpusRecord] = ()) -> TrainingData:
    """Vocabulary plus the three factor datasets.

    ``extra`` papers (e.g. submissions) only contribute vocabulary.
    """
    texts = training_texts(papers, search_log, extra)
    vocab = build_vocab([*texts.values(), *INSTRUCTIONS.values()])
    known = {p.id for p in papers}
    log = [SearchQuery(q.query_id, q.query, [(d, s) for d, s in q.results if d in known])
           for q in search_log]
    rng = np.random.default_rng(seed)
    semantic, _ = build_semantic_samples(log, 1, rng)
    topic = build_topic_samples(papers, hard_negatives=1, rng=rng)
    citation = build_citation_samples(citation_graph(papers))
    return TrainingData({"semantic": semantic, "topic": topic, "citation": citation},
                        texts, vocab)


def train_model(data: TrainingData, train_cfg: TrainConfig, encoder_cfg: EncoderConfig,
                instructed: bool = True) -> TrainResult:
    return train(train_cfg, data.datasets, data.texts, data.vocab, encoder_cfg,
                 instructed=instructed)


def rank_submissions(submissions: Sequence[CorpusRecord], reviewers: Sequence[Reviewer],
                     corpus: dict[str, CorpusRecord], model: FactorModel,
                     chain: ChainConfig, variant: AblationVariant,
                     filters: ProfileFilters = ProfileFilters(),
                     reference_year: int | None = None,
                     cache: EmbeddingCache | None = None) -> dict[str, list[ReviewerScore]]:
    profiles = build_profiles(reviewers, corpus, filters, reference_year)
    cache = cache if cache is not None else EmbeddingCache(model)
    return {p.id: rank_reviewers(p, profiles, cache, chain, variant) for p in submissions}


def rank_all_variants(submissions, reviewers, corpus, model: FactorModel,
                      plain_model: FactorModel, chain: ChainConfig,
                      filters: ProfileFilters = ProfileFilters(),
                      reference_year: int | None = None
                      ) -> dict[str, dict[str, list[ReviewerScore]]]:
    """Rankings for every ablation variant, sharing embeddings between them."""
    cache, plain_cache = EmbeddingCache(model), EmbeddingCache(plain_model)
    out = {}
    for v in AblationVariant:
        c = plain_cache if v is AblationVariant.NO_INSTRUCTION else cache
        out[v.value] = rank_submissions(submissions, reviewers, corpus, model, chain, v,
                                        filters, reference_year, c)
    return out


def fine_field_names(records: Sequence[CorpusRecord], min_layer: int = 3) -> list[str]:
    return sorted({name for r in records for name in r.fine_fields(min_layer)})


def probe_tasks(papers: Sequence[CorpusRecord], queries: Sequence[CorpusRecord],
                reviewers: Sequence[Reviewer] = (), seed: int = 0):
    """Probe tasks for ``queries`` drawn against ``papers``.

    Citation distractors come from reviewer profiles when given, otherwise
    from the whole corpus.
    """
    corpus = {p.id: p for p in papers}
    corpus.update({q.id: q for q in queries})
    if reviewers:
        pool = sorted({pid for r in reviewers for pid in r.paper_ids if pid in corpus})
    else:
        pool = sorted(p.id for p in papers)
    return build_probe_tasks(queries, corpus, fine_field_names([*papers, *queries]), pool, seed)
