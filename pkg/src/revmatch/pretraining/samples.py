"""Factor-tagged training samples and batch assembly."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..corpus import CorpusRecord, SearchQuery
from ..encoder import CITATION, SEMANTIC, TOPIC

FINE_LAYER = 3
TOPIC_PAIR_CAP = 10


@dataclass(frozen=True)
class TrainingSample:
    factor: str
    anchor: str
    positive: str
    negatives: tuple[str, ...] = ()


@dataclass
class SampleReport:
    samples: int = 0
    skipped: int = 0
    skipped_ids: list[str] = field(default_factory=list)


def _pick(rng: np.random.Generator | None, pool: Sequence[str], k: int | None) -> tuple[str, ...]:
    if k is None or len(pool) <= k:
        return tuple(pool)
    if rng is None:
        return tuple(pool[:k])
    idx = np.sort(rng.choice(len(pool), size=k, replace=False))
    return tuple(pool[i] for i in idx)


def build_semantic_samples(search_log: Iterable[SearchQuery], hard_negatives: int | None = None,
                           rng: np.random.Generator | None = None
                           ) -> tuple[list[TrainingSample], SampleReport]:
    """One sample per clicked (non-zero score) document.

    Hard negatives come from the zero-score documents of the same result
    list. Queries without any click are skipped and counted in the report.
    """
    samples, report = [], SampleReport()
    for q in search_log:
        clicked = [d for d, s in q.results if s > 0]
        unclicked = [d for d, s in q.results if s == 0]
        if not clicked:
            report.skipped += 1
            report.skipped_ids.append(q.query_id)
            continue
        for doc in clicked:
            samples.append(TrainingSample(SEMANTIC, q.query_id, doc,
                                          _pick(rng, unclicked, hard_negatives)))
    report.samples = len(samples)
    return samples, report


def topic_positive_pairs(papers: Sequence[CorpusRecord], min_layer: int = FINE_LAYER
                         ) -> dict[str, list[str]]:
    """For each paper, the papers sharing a field at ``min_layer`` or deeper."""
    by_field: dict[str, set[str]] = defaultdict(set)
    for p in papers:
        for name in p.fine_fields(min_layer):
            by_field[name].add(p.id)
    out = {}
    for p in papers:
        partners = set()
        for name in p.fine_fields(min_layer):
            partners |= by_field[name]
        partners.discard(p.id)
        out[p.id] = sorted(partners)
    return out


def build_topic_samples(papers: Sequence[CorpusRecord], max_pairs_per_paper: int | None = TOPIC_PAIR_CAP,
                        hard_negatives: int | None = 1, rng: np.random.Generator | None = None,
                        min_layer: int = FINE_LAYER) -> list[TrainingSample]:
    """Pairs sharing a fine-grained field; hard negatives share only the venue."""
    fine = {p.id: p.fine_fields(min_layer) for p in papers}
    by_venue: dict[str | None, list[str]] = defaultdict(list)
    for p in papers:
        by_venue[p.venue].append(p.id)
    pairs = topic_positive_pairs(papers, min_layer)
    samples = []
    for p in papers:
        partners = list(_pick(rng, pairs[p.id], max_pairs_per_paper))
        if not partners:
            continue
        venue_pool = [] if p.venue is None else [
            q for q in by_venue[p.venue] if q != p.id and not (fine[q] & fine[p.id])]
        for q in partners:
            samples.append(TrainingSample(TOPIC, p.id, q, _pick(rng, venue_pool, hard_negatives)))
    return samples


def citation_triplets(graph: Mapping[str, Iterable[str]]) -> list[tuple[str, str, str]]:
    """All (p, q+, q-) with p -> q+, q+ -> q-, p not -> q-, and q- != p."""
    cites = {p: set(qs) for p, qs in graph.items()}
    out = []
    for p in sorted(cites):
        for pos in sorted(cites[p]):
            for neg in sorted(cites.get(pos, ())):
                if neg != p and neg not in cites[p]:
                    out.append((p, pos, neg))
    return out


def build_citation_samples(graph: Mapping[str, Iterable[str]]) -> list[TrainingSample]:
    return [TrainingSample(CITATION, p, pos, (neg,)) for p, pos, neg in citation_triplets(graph)]


class MixedFactorError(ValueError):
    pass


@dataclass
class Batch:
    factor: str
    anchors: list[str]
    positives: list[str]
    hard: list[str]              # flattened hard negatives
    hard_owner: np.ndarray       # anchor index of each hard negative
    in_batch_mask: np.ndarray    # (n, n) bool: positive j is a negative for anchor i

    def negatives(self, i: int) -> list[str]:
        own = [h for h, o in zip(self.hard, self.hard_owner) if o == i]
        return own + [self.positives[j] for j in np.flatnonzero(self.in_batch_mask[i])]


def assemble_batch(samples: Sequence[TrainingSample], in_batch_negatives: bool = True) -> Batch:
    """Each anchor's negatives: its hard negatives plus the other positives.

    Another anchor's positive is skipped when it is the same document as this
    anchor's own positive or the anchor itself (it would be a false negative).
    """
    if not samples:
        raise ValueError("empty batch")
    factors = {s.factor for s in samples}
    if len(factors) != 1:
        raise MixedFactorError(f"batch mixes factors {sorted(factors)}")
    n = len(samples)
    positives = [s.positive for s in samples]
    anchors = [s.anchor for s in samples]
    mask = np.zeros((n, n), bool)
    if in_batch_negatives:
        pos_arr = np.array(positives, dtype=object)
        for i in range(n):
            mask[i] = (pos_arr != positives[i]) & (pos_arr != anchors[i])
    hard, owner = [], []
    for i, s in enumerate(samples):
        hard.extend(s.negatives)
        owner.extend([i] * len(s.negatives))
    return Batch(samples[0].factor, anchors, positives, hard,
                 np.asarray(owner, dtype=np.int64), mask)
