"""Ranking metrics, factor probes, rating helpers and the two-tailed Z-test."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import CorpusRecord, Judgment
from .encoder import CITATION, SEMANTIC, TOPIC_CLASSIFICATION

log = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.2, 0.4, 0.7)
PROBE_CANDIDATES = 100
PROBE_INSTRUCTION = {"semantic": SEMANTIC, "topic": TOPIC_CLASSIFICATION, "citation": CITATION}
PRIMARY_METRICS = ("soft_p@5", "soft_p@10", "hard_p@5", "hard_p@10")


# ---------------------------------------------------------------------------
# per-paper precision variants
# ---------------------------------------------------------------------------

def restrict_ranking(ranked: Sequence[str], scores: Mapping[str, int]) -> list[str]:
    """Keep judged reviewers in ranked order; judged-but-unranked ones go last by id."""
    seen = [r for r in dict.fromkeys(ranked) if r in scores]
    missing = sorted(set(scores) - set(seen))
    return seen + missing


def precision_at_k(ranked: Sequence[str], scores: Mapping[str, int], k: int,
                   mode: str = "soft") -> float:
    """Fraction of the top ``k`` judged reviewers that are relevant.

    Soft counts scores >= 2, hard counts scores == 3. The denominator is
    always ``k`` even when fewer than ``k`` reviewers are judged.
    """
    if mode not in ("soft", "hard"):
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
    top = restrict_ranking(ranked, scores)
    if len(top) < k:
        log.warning("only %d judged reviewers for P@%d; dividing by %d anyway", len(top), k, k)
    cut = 2 if mode == "soft" else 3
    return sum(scores[r] >= cut for r in top[:k]) / k


def precision_at_k_liu(ranked: Sequence[str], scores: Mapping[str, int], k: int) -> float:
    """Graded variant: summed scores of the top ``k`` over ``3k``."""
    top = restrict_ranking(ranked, scores)
    if len(top) < k:
        log.warning("only %d judged reviewers for P@%d", len(top), k)
    return sum(scores[r] for r in top[:k]) / (3 * k)


def precision_at_k_anjum(ranked: Sequence[str], scores: Mapping[str, int], k: int) -> float:
    """Soft precision with denominator ``min(k, |judged|)``."""
    top = restrict_ranking(ranked, scores)
    depth = min(k, len(top))
    if depth == 0:
        return 0.0
    return sum(scores[r] >= 2 for r in top[:depth]) / depth


# ---------------------------------------------------------------------------
# dataset-level report
# ---------------------------------------------------------------------------

@dataclass
class MetricReport:
    values: dict[str, float]
    per_paper: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def average(self) -> float:
        return float(np.mean([self.values[m] for m in PRIMARY_METRICS]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name, value in self.values.items():
            w.writerow([name, f"{value:.6f}"])
        w.writerow(["average", f"{self.average:.6f}"])
        return buf.getvalue()

    def format_table(self) -> str:
        width = max(len(n) for n in [*self.values, "average"])
        lines = [f"{name:<{width}}  {100 * v:6.2f}" for name, v in self.values.items()]
        lines.append(f"{'average':<{width}}  {100 * self.average:6.2f}")
        return "\n".join(lines)


def group_judgments(judgments: Iterable[Judgment]) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = defaultdict(dict)
    for j in judgments:
        out[j.paper_id][j.reviewer_id] = j.score
    return dict(out)


def evaluate_rankings(rankings: Mapping[str, Sequence[str]], judgments: Iterable[Judgment],
                      ks: Sequence[int] = (5, 10)) -> MetricReport:
    """Average every precision variant over the judged papers."""
    judged = group_judgments(judgments)
    per_paper = {}
    for pid in sorted(judged):
        scores = judged[pid]
        ranked = rankings.get(pid, [])
        row = {}
        for k in ks:
            row[f"soft_p@{k}"] = precision_at_k(ranked, scores, k, "soft")
            row[f"hard_p@{k}"] = precision_at_k(ranked, scores, k, "hard")
            row[f"liu_p@{k}"] = precision_at_k_liu(ranked, scores, k)
            row[f"anjum_p@{k}"] = precision_at_k_anjum(ranked, scores, k)
        per_paper[pid] = row
    names = [f"{kind}_p@{k}" for kind in ("soft", "hard", "liu", "anjum") for k in ks]
    values = {n: float(np.mean([r[n] for r in per_paper.values()])) if per_paper else 0.0
              for n in names}
    return MetricReport(values, per_paper)


# ---------------------------------------------------------------------------
# factor probes
# ---------------------------------------------------------------------------

@dataclass
class ProbeTask:
    query: str
    candidates: list[str]
    relevant: int
    kind: str

    def __post_init__(self):
        if len(self.candidates) != PROBE_CANDIDATES:
            raise ValueError(f"probe needs {PROBE_CANDIDATES} candidates, got {len(self.candidates)}")
        if not 0 <= self.relevant < len(self.candidates):
            raise ValueError("relevant index out of range")
        if self.kind not in PROBE_INSTRUCTION:
            raise ValueError(f"unknown probe kind {self.kind!r}")


def rank_of_relevant(scores: np.ndarray, relevant: int) -> int:
    """1-based rank; ties with the relevant candidate resolve by index."""
    scores = np.asarray(scores)
    s = scores[relevant]
    ahead = np.sum(scores > s) + np.sum(scores[:relevant] == s)
    return int(ahead) + 1


def mean_rank_from_scores(tasks: Sequence[ProbeTask], scores: Sequence[np.ndarray]
                          ) -> dict[str, float]:
    ranks: dict[str, list[int]] = defaultdict(list)
    for task, sc in zip(tasks, scores):
        ranks[task.kind].append(rank_of_relevant(sc, task.relevant))
    return {kind: float(np.mean(r)) for kind, r in ranks.items()}


def mean_rank_probe(model, tasks: Sequence[ProbeTask]) -> dict[str, float]:
    """Mean rank of the relevant candidate per probe kind.

    Query and candidates are embedded under the probe's instruction and
    scored by inner product.
    """
    scores: list[np.ndarray | None] = [None] * len(tasks)
    by_kind: dict[str, list[int]] = defaultdict(list)
    for i, t in enumerate(tasks):
        by_kind[t.kind].append(i)
    for kind, idx in by_kind.items():
        texts = list(dict.fromkeys(
            s for i in idx for s in (tasks[i].query, *tasks[i].candidates)))
        slot = {t: j for j, t in enumerate(texts)}
        emb = model.embed(texts, PROBE_INSTRUCTION[kind])
        for i in idx:
            q = emb[slot[tasks[i].query]]
            c = emb[[slot[t] for t in tasks[i].candidates]]
            scores[i] = c @ q
    return mean_rank_from_scores(tasks, scores)


def build_probe_tasks(queries: Sequence[CorpusRecord], corpus: Mapping[str, CorpusRecord],
                      field_names: Sequence[str], citation_pool: Sequence[str], seed: int = 0,
                      min_layer: int = 3) -> list[ProbeTask]:
    """Title-to-abstract, field tagging and cited-paper tasks for each query paper.

    Papers lacking what a probe needs (fields, references, enough
    distractors) get no task of that kind.
    """
    rng = np.random.default_rng(seed)
    n_neg = PROBE_CANDIDATES - 1
    abstracts = [r for r in corpus.values() if r.abstract]
    tasks = []
    for p in queries:
        others = [r.abstract for r in abstracts if r.id != p.id and r.abstract != p.abstract]
        if p.abstract and len(others) >= n_neg:
            neg = [others[i] for i in rng.choice(len(others), n_neg, replace=False)]
            tasks.append(_place(p.title, p.abstract, neg, "semantic", rng))

        own = sorted(p.fine_fields(min_layer))
        foreign = [f for f in field_names if f not in set(own)]
        if own and len(foreign) >= n_neg:
            rel = own[rng.integers(len(own))]
            neg = [foreign[i] for i in rng.choice(len(foreign), n_neg, replace=False)]
            tasks.append(_place(p.text, rel, neg, "topic", rng))

        cited = [c for c in p.references if c in corpus]
        uncited = [c for c in citation_pool if c not in set(p.references) and c != p.id]
        if cited and len(uncited) >= n_neg:
            rel = corpus[cited[rng.integers(len(cited))]].text
            neg = [corpus[uncited[i]].text for i in rng.choice(len(uncited), n_neg, replace=False)]
            tasks.append(_place(p.text, rel, neg, "citation", rng))
    return tasks


def _place(query, relevant, negatives, kind, rng) -> ProbeTask:
    pos = int(rng.integers(PROBE_CANDIDATES))
    cands = list(negatives)
    cands.insert(pos, relevant)
    return ProbeTask(query, cands, pos, kind)


# ---------------------------------------------------------------------------
# ratings and significance
# ---------------------------------------------------------------------------

def jaccard_to_rating(aspects_p: set, aspects_r: set,
                      thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> int:
    """Bin the Jaccard similarity of two aspect sets into a 0-3 rating."""
    t = tuple(thresholds)
    if len(t) != 3 or not 0 < t[0] < t[1] < t[2] <= 1:
        raise ValueError(f"thresholds must be 3 strictly ascending values in (0, 1], got {t}")
    union = set(aspects_p) | set(aspects_r)
    j = len(set(aspects_p) & set(aspects_r)) / len(union) if union else 0.0
    return sum(j >= cut for cut in t)


def aggregate_annotations(ratings: Sequence[int]) -> int:
    """Mean rating rounded half-up."""
    if not ratings:
        raise ValueError("no ratings to aggregate")
    total, n = sum(ratings), len(ratings)
    return (2 * total + n) // (2 * n)


@dataclass(frozen=True)
class ZTestResult:
    z: float
    p_value: float

    def marker(self) -> str:
        return "**" if self.p_value < 0.01 else "*" if self.p_value < 0.05 else ""


def z_test(runs_a: Sequence[float], runs_b: Sequence[float]) -> ZTestResult:
    """Two-tailed Z-test on the means of two run lists (sample variances)."""
    a, b = np.asarray(runs_a, float), np.asarray(runs_b, float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each run list needs at least 2 values")
    diff = a.mean() - b.mean()
    se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    if se == 0.0:
        return ZTestResult(0.0, 1.0) if diff == 0 else ZTestResult(math.copysign(math.inf, diff), 0.0)
    z = diff / se
    return ZTestResult(z, math.erfc(abs(z) / math.sqrt(2.0)))
