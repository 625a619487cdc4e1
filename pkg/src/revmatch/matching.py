"""Publication profiles and the semantic -> topic -> citation cascade.

Scores are raw inner products of factor-aware embeddings. The cascade keeps
the top semantic matches among all profile papers, re-ranks those by topic,
adds citation scores to the final survivors and sums per reviewer. The
ablation variants reuse the same machinery with the cascade switched off
or with a single factor.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CorpusRecord, DataError
from .encoder import CITATION, FACTORS, SEMANTIC, TOPIC
from .tokenizer import split_words

log = logging.getLogger(__name__)

NEG_INF = -math.inf


class AblationVariant(str, Enum):
    COF = "cof"                        # S -> T -> S+T+C
    NO_INSTRUCTION = "no_instruction"
    S = "s"
    T = "t"
    C = "c"
    S_PLUS_T_PLUS_C = "s+t+c"
    S_T_C = "s->t->c"

    @property
    def cascaded(self) -> bool:
        return self in (AblationVariant.COF, AblationVariant.NO_INSTRUCTION, AblationVariant.S_T_C)

    @property
    def summed_factors(self) -> tuple[str, ...]:
        return {
            AblationVariant.S: (SEMANTIC,),
            AblationVariant.T: (TOPIC,),
            AblationVariant.C: (CITATION,),
            AblationVariant.S_T_C: (CITATION,),
        }.get(self, FACTORS)


ALL_VARIANTS = tuple(AblationVariant)


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

AUTHOR_RANKS = ("any", "first", "last", "first_or_last")


@dataclass(frozen=True)
class ProfileFilters:
    years_back: int | None = None
    venues: frozenset[str] | None = None
    author_rank: str = "any"

    def __post_init__(self):
        if self.author_rank not in AUTHOR_RANKS:
            raise ValueError(f"author_rank must be one of {AUTHOR_RANKS}, got {self.author_rank!r}")


@dataclass
class ReviewerProfile:
    reviewer_id: str
    papers: list[CorpusRecord] = field(default_factory=list)

    @property
    def paper_ids(self) -> list[str]:
        return [p.id for p in self.papers]


def _rank_ok(paper: CorpusRecord, reviewer_id: str, rule: str) -> bool:
    if rule == "any":
        return True
    if reviewer_id not in paper.authors:
        return False
    first = paper.authors[0] == reviewer_id
    last = paper.authors[-1] == reviewer_id
    return {"first": first, "last": last, "first_or_last": first or last}[rule]


def build_profile(reviewer_id: str, papers: Iterable[CorpusRecord],
                  filters: ProfileFilters = ProfileFilters(),
                  reference_year: int | None = None) -> ReviewerProfile:
    """Apply every active filter; order by (year desc, id).

    The time-span filter keeps ``reference_year - years_back <= year <
    reference_year``; papers without a year are dropped while it is active.
    """
    if filters.years_back is not None and reference_year is None:
        raise ValueError("years_back filter needs a reference_year")
    kept: dict[str, CorpusRecord] = {}
    for p in papers:
        if p.id in kept:
            continue
        if filters.years_back is not None:
            if p.year is None or not reference_year - filters.years_back <= p.year < reference_year:
                continue
        if filters.venues is not None and p.venue not in filters.venues:
            continue
        if not _rank_ok(p, reviewer_id, filters.author_rank):
            continue
        kept[p.id] = p
    ordered = sorted(kept.values(), key=lambda p: (-(p.year or 0), p.id))
    return ReviewerProfile(reviewer_id, ordered)


def build_profiles(reviewers, corpus: Mapping[str, CorpusRecord],
                   filters: ProfileFilters = ProfileFilters(),
                   reference_year: int | None = None) -> list[ReviewerProfile]:
    out = []
    for r in reviewers:
        missing = [pid for pid in r.paper_ids if pid not in corpus]
        if missing:
            log.warning("reviewer %s: %d profile papers not in corpus", r.reviewer_id, len(missing))
        out.append(build_profile(r.reviewer_id, (corpus[i] for i in r.paper_ids if i in corpus),
                                 filters, reference_year))
    return out


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------

class EmbeddingCache:
    """Lazily embeds papers per factor and memoizes the vectors.

    ``model`` needs ``embed(texts, factor) -> ndarray``. Vectors can also be
    preloaded (e.g. from an embedding store) with :meth:`put`.
    """

    def __init__(self, model=None):
        self.model = model
        self._vecs: dict[str, dict[str, np.ndarray]] = {}

    def put(self, factor: str, ids: Sequence[str], vectors: np.ndarray) -> None:
        table = self._vecs.setdefault(factor, {})
        for pid, vec in zip(ids, vectors):
            table[pid] = np.asarray(vec, dtype=np.float64)

    def get(self, factor: str, papers: Sequence[CorpusRecord]) -> np.ndarray:
        table = self._vecs.setdefault(factor, {})
        todo = [p for p in dict((p.id, p) for p in papers).values() if p.id not in table]
        if todo:
            if self.model is None:
                raise KeyError(f"no {factor} embedding for {todo[0].id!r} and no model to compute it")
            vecs = self.model.embed([p.text for p in todo], factor)
            for p, v in zip(todo, vecs):
                table[p.id] = v
        if not papers:
            return np.zeros((0, 0))
        return np.stack([table[p.id] for p in papers])


def scores_against(query: CorpusRecord, papers: Sequence[CorpusRecord], cache: EmbeddingCache,
                   factor: str) -> np.ndarray:
    if not papers:
        return np.zeros(0)
    q = cache.get(factor, [query])[0]
    # row-wise reduction: a paper's score does not depend on the rest of the pool
    return (cache.get(factor, papers) * q).sum(axis=1)


# ---------------------------------------------------------------------------
# cascade
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainConfig:
    """How many papers survive each pruning stage.

    A float in (0, 1] is a fraction of the stage input; an int >= 1 is an
    absolute count. The ``*_min`` floors keep small pools non-empty.
    """
    stage1_keep: float | int = 0.01
    stage1_min: int = 10
    stage2_keep: float | int = 0.5
    stage2_min: int = 5
    normalize_factors: bool = False

    def __post_init__(self):
        for keep in (self.stage1_keep, self.stage2_keep):
            if isinstance(keep, float) and not 0 < keep <= 1:
                raise ValueError(f"fractional keep must be in (0, 1], got {keep}")
            if isinstance(keep, int) and keep < 1:
                raise ValueError(f"absolute keep must be >= 1, got {keep}")


def keep_count(n: int, keep: float | int, minimum: int = 1) -> int:
    if n == 0:
        return 0
    if isinstance(keep, float):
        count = math.floor(keep * n + 1e-9)
    else:
        count = int(keep)
    return min(n, max(count, minimum, 1))


@dataclass
class StageResult:
    survivors: list[str]                             # ranked by this stage's factor
    scores: dict[str, dict[str, float]] = field(default_factory=dict)
    papers: dict[str, CorpusRecord] = field(default_factory=dict, repr=False)


def top_ids(ids: Sequence[str], values: np.ndarray, count: int) -> list[str]:
    """Highest scores first, ties by id ascending."""
    order = sorted(range(len(ids)), key=lambda i: (-values[i], ids[i]))
    return [ids[i] for i in order[:count]]


def profile_union(profiles: Iterable[ReviewerProfile]) -> dict[str, CorpusRecord]:
    union: dict[str, CorpusRecord] = {}
    for prof in profiles:
        for p in prof.papers:
            union.setdefault(p.id, p)
    return dict(sorted(union.items()))


def _score_stage(p: CorpusRecord, pool: dict[str, CorpusRecord], prior_scores, factor: str,
                 cache: EmbeddingCache, count: int | None) -> StageResult:
    ids = list(pool)
    vals = scores_against(p, list(pool.values()), cache, factor)
    scores = {pid: dict(prior_scores.get(pid, {})) for pid in ids}
    for pid, v in zip(ids, vals):
        scores[pid][factor] = float(v)
    keep = top_ids(ids, vals, len(ids) if count is None else count)
    return StageResult(keep, {pid: scores[pid] for pid in keep}, {pid: pool[pid] for pid in keep})


def stage_semantic(p: CorpusRecord, profiles: Sequence[ReviewerProfile], cache: EmbeddingCache,
                   config: ChainConfig) -> StageResult:
    union = profile_union(profiles)
    if not union:
        log.warning("no profile papers to score for %s", p.id)
        return StageResult([])
    return _score_stage(p, union, {}, SEMANTIC, cache,
                        keep_count(len(union), config.stage1_keep, config.stage1_min))


def stage_topic(p: CorpusRecord, prior: StageResult, cache: EmbeddingCache,
                config: ChainConfig) -> StageResult:
    if not prior.survivors:
        raise ValueError("topic stage needs a non-empty semantic stage")
    return _score_stage(p, prior.papers, prior.scores, TOPIC, cache,
                        keep_count(len(prior.survivors), config.stage2_keep, config.stage2_min))


def stage_citation(p: CorpusRecord, prior: StageResult, cache: EmbeddingCache) -> StageResult:
    res = _score_stage(p, prior.papers, prior.scores, CITATION, cache, None)
    res.survivors = list(prior.survivors)  # no pruning; keep the topic order
    return res


def score_all(p: CorpusRecord, profiles: Sequence[ReviewerProfile], cache: EmbeddingCache,
              factors: Sequence[str]) -> StageResult:
    """Flat scoring of every profile paper (no pruning)."""
    union = profile_union(profiles)
    res = StageResult(list(union), {pid: {} for pid in union}, union)
    for f in factors:
        vals = scores_against(p, list(union.values()), cache, f)
        for pid, v in zip(union, vals):
            res.scores[pid][f] = float(v)
    return res


def _normalized(scores: dict[str, dict[str, float]], factors) -> dict[str, dict[str, float]]:
    out = {pid: dict(s) for pid, s in scores.items()}
    for f in factors:
        vals = np.array([s[f] for s in scores.values()])
        if vals.size == 0:
            continue
        mu, sd = vals.mean(), vals.std()
        for pid in out:
            out[pid][f] = (out[pid][f] - mu) / (sd if sd > 0 else 1.0)
    return out


@dataclass(frozen=True)
class ReviewerScore:
    reviewer_id: str
    total: float
    semantic: float = 0.0
    topic: float = 0.0
    citation: float = 0.0
    papers: int = 0


def aggregate_reviewer_scores(stage: StageResult, profiles: Sequence[ReviewerProfile],
                              variant: AblationVariant, normalize: bool = False
                              ) -> dict[str, ReviewerScore]:
    """Sum per-paper factor scores over each reviewer's surviving papers.

    Reviewers with no surviving paper get ``-inf``.
    """
    variant = AblationVariant(variant)
    factors = variant.summed_factors
    scores = _normalized(stage.scores, factors) if normalize else stage.scores
    survivors = set(stage.survivors)
    out = {}
    for prof in profiles:
        parts = {f: 0.0 for f in FACTORS}
        total, n = 0.0, 0
        for pid in prof.paper_ids:
            if pid not in survivors:
                continue
            s = scores[pid]
            n += 1
            for f in factors:
                parts[f] += s[f]
                total += s[f]
        out[prof.reviewer_id] = ReviewerScore(
            prof.reviewer_id, total if n else NEG_INF,
            parts[SEMANTIC], parts[TOPIC], parts[CITATION], n)
    return out


def order_reviewers(scores: Mapping[str, ReviewerScore]) -> list[ReviewerScore]:
    """Descending total, ties (including ``-inf``) by reviewer id."""
    return sorted(scores.values(), key=lambda s: (-s.total, s.reviewer_id))


def run_cascade(p: CorpusRecord, profiles: Sequence[ReviewerProfile], cache: EmbeddingCache,
                config: ChainConfig) -> StageResult:
    s1 = stage_semantic(p, profiles, cache, config)
    if not s1.survivors:
        return s1
    return stage_citation(p, stage_topic(p, s1, cache, config), cache)


def rank_reviewers(p: CorpusRecord, profiles: Sequence[ReviewerProfile], cache: EmbeddingCache,
                   config: ChainConfig = ChainConfig(),
                   variant: AblationVariant = AblationVariant.COF) -> list[ReviewerScore]:
    """Rank every reviewer for submission ``p`` under one variant.

    For ``NO_INSTRUCTION`` pass a cache backed by the factor-agnostic model;
    its single embedding stands in for all three factors.
    """
    variant = AblationVariant(variant)
    if variant.cascaded:
        stage = run_cascade(p, profiles, cache, config)
    else:
        stage = score_all(p, profiles, cache, variant.summed_factors)
    return order_reviewers(aggregate_reviewer_scores(stage, profiles, variant,
                                                     config.normalize_factors))


# ---------------------------------------------------------------------------
# flat baselines
# ---------------------------------------------------------------------------

def aggregate_topk_mean(paper_scores: Sequence[float], k: int = 3) -> float:
    """Mean of the ``k`` largest scores (all of them if fewer)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(paper_scores) == 0:
        return NEG_INF
    top = sorted(paper_scores, reverse=True)[:k]
    return float(sum(top) / len(top))


def rank_reviewers_topk(p: CorpusRecord, profiles: Sequence[ReviewerProfile],
                        cache: EmbeddingCache, factor: str | None = SEMANTIC,
                        k: int = 3) -> list[ReviewerScore]:
    """Single-embedding baseline: per reviewer, mean of the top-k paper scores."""
    union = profile_union(profiles)
    vals = dict(zip(union, scores_against(p, list(union.values()), cache, factor)))
    out = {prof.reviewer_id: ReviewerScore(
        prof.reviewer_id, aggregate_topk_mean([float(vals[i]) for i in prof.paper_ids], k),
        papers=len(prof.papers)) for prof in profiles}
    return order_reviewers(out)


@dataclass
class TfIdfStats:
    num_docs: int
    doc_freq: Counter

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "TfIdfStats":
        df: Counter = Counter()
        n = 0
        for t in texts:
            df.update(set(split_words(t)))
            n += 1
        return cls(n, df)

    def idf(self, word: str) -> float:
        return math.log(self.num_docs / max(1, self.doc_freq.get(word, 0))) if self.num_docs else 0.0

    def vector(self, text: str) -> dict[str, float]:
        tf = Counter(split_words(text))
        return {w: c * self.idf(w) for w, c in tf.items()}


def tpms_score(p: CorpusRecord, profile: ReviewerProfile, stats: TfIdfStats) -> float:
    """tf-idf dot product between the submission and the concatenated profile."""
    if not profile.papers:
        return 0.0
    vp = stats.vector(p.text)
    vr = stats.vector(" ".join(q.text for q in profile.papers))
    return float(sum(w * vr[t] for t, w in vp.items() if t in vr))


def rank_reviewers_tpms(p: CorpusRecord, profiles: Sequence[ReviewerProfile],
                        stats: TfIdfStats) -> list[ReviewerScore]:
    out = {}
    for prof in profiles:
        s = tpms_score(p, prof, stats)
        out[prof.reviewer_id] = ReviewerScore(prof.reviewer_id, s, semantic=s,
                                              papers=len(prof.papers))
    return order_reviewers(out)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

RANKING_COLUMNS = ("paper_id", "reviewer_id", "rank", "f_total", "f_semantic", "f_topic",
                   "f_citation", "variant")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_rankings(path, rankings: Mapping[str, Sequence[ReviewerScore]], variant: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANKING_COLUMNS)
        for pid in sorted(rankings):
            for rank, s in enumerate(rankings[pid], 1):
                w.writerow([pid, s.reviewer_id, rank, _fmt(s.total), _fmt(s.semantic),
                            _fmt(s.topic), _fmt(s.citation), variant])


def read_rankings(path) -> dict[str, list[str]]:
    """Paper id -> reviewer ids in rank order."""
    rows: dict[str, list[tuple[int, str]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RANKING_COLUMNS[:3]) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}:1: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                rank = int(row["rank"])
            except (TypeError, ValueError):
                raise DataError(f"{path}:{lineno}: bad 'rank' value {row['rank']!r}") from None
            rows.setdefault(row["paper_id"], []).append((rank, row["reviewer_id"]))
    return {pid: [r for _, r in sorted(v)] for pid, v in rows.items()}
