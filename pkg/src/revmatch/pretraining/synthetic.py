"""Seeded synthetic scholarly corpus for desk-scale runs.

Fields form a tree (layer 1 at the roots). Every field owns a handful of
pseudo-words; a paper's text mixes the words of its leaf fields, their
ancestors and a shared background pool, so papers sharing fine-grained
fields overlap lexically. Citations favour papers with the same leaf,
search queries are built from titles, and reviewer judgments come from the
overlap between a submission's fields and a reviewer's home fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import count

import numpy as np

from ..corpus import CorpusRecord, FieldTag, Judgment, Reviewer, SearchQuery

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    num_fields: int = 4            # root fields
    depth: int = 4                 # hierarchy layers; fine-grained = layer >= 3
    branching: int = 3
    num_papers: int = 2000
    num_queries: int = 600
    citation_density: float = 5.0  # mean references per paper
    vocab_size: int = 1200         # distinct generated words
    num_authors: int = 320
    num_submissions: int = 60
    judged_per_submission: int = 20
    min_reviewer_papers: int = 3
    title_len: int = 8
    abstract_len: int = 40
    rating_thresholds: tuple[float, float, float] = (0.2, 0.4, 0.7)
    seed: int = 0

    def __post_init__(self):
        if self.depth < 3:
            raise ValueError("depth must be >= 3 so that fine-grained fields exist")


@dataclass
class FieldNode:
    name: str
    layer: int
    parent: int | None
    words: list[str]
    children: list[int] = field(default_factory=list)


@dataclass
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    fields: list[FieldNode]
    papers: list[CorpusRecord]          # reviewers' prior work / pre-training corpus
    submissions: list[CorpusRecord]
    search_log: list[SearchQuery]
    reviewers: list[Reviewer]
    judgments: list[Judgment]
    author_fields: dict[str, list[int]]  # author id -> home leaf indices

    @property
    def fine_field_names(self) -> list[str]:
        return [f.name for f in self.fields if f.layer >= 3]

    def texts(self) -> dict[str, str]:
        out = {p.id: p.text for p in self.papers}
        out.update({s.id: s.text for s in self.submissions})
        out.update({q.query_id: q.query for q in self.search_log})
        return out


def _word_pool(rng: np.random.Generator, n: int) -> list[str]:
    words, seen = [], set()
    while len(words) < n:
        syll = rng.integers(2, 4)
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(syll))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _build_tree(spec: SyntheticCorpusSpec, rng) -> list[FieldNode]:
    sizes = [spec.num_fields * spec.branching ** k for k in range(spec.depth)]
    n_nodes = sum(sizes)
    per_node = max(3, int(0.8 * spec.vocab_size) // n_nodes)
    pool = _word_pool(rng, spec.vocab_size if spec.vocab_size > per_node * n_nodes
                      else per_node * n_nodes + 50)
    nodes: list[FieldNode] = []
    it = iter(pool)
    frontier = [None] * spec.num_fields
    for layer in range(1, spec.depth + 1):
        nxt = []
        for parent in frontier:
            words = [next(it) for _ in range(per_node)]
            nodes.append(FieldNode(" ".join(words[:2]), layer, parent, words))
            idx = len(nodes) - 1
            if parent is not None:
                nodes[parent].children.append(idx)
            nxt.extend([idx] * spec.branching)
        frontier = nxt
    background = list(it)
    nodes.append(FieldNode("", 0, None, background))  # background pool, last entry
    return nodes


def _ancestors(nodes: list[FieldNode], idx: int) -> list[int]:
    chain = []
    while idx is not None:
        chain.append(idx)
        idx = nodes[idx].parent
    return chain  # leaf first


# share of tokens drawn from the leaf, its ancestors (deepest first), and background
_LEAF_W, _ANCESTOR_W, _BACKGROUND_W = 0.4, (0.2, 0.1, 0.05, 0.02), 0.25


def _sample_text(nodes, leaves, length, rng) -> str:
    background = nodes[-1].words
    sources, weights = [], []
    share = 1.0 / len(leaves)
    for leaf in leaves:
        chain = _ancestors(nodes, leaf)
        sources.append(nodes[leaf].words)
        weights.append(_LEAF_W * share)
        for k, anc in enumerate(chain[1:]):
            sources.append(nodes[anc].words)
            weights.append(_ANCESTOR_W[min(k, len(_ANCESTOR_W) - 1)] * share)
    sources.append(background)
    weights.append(_BACKGROUND_W)
    w = np.asarray(weights) / np.sum(weights)
    picks = rng.choice(len(sources), size=length, p=w)
    return " ".join(sources[s][rng.integers(len(sources[s]))] for s in picks)


def _paper_fields(nodes, leaves) -> list[FieldTag]:
    seen, tags = set(), []
    for leaf in leaves:
        for idx in reversed(_ancestors(nodes, leaf)):
            if idx not in seen:
                seen.add(idx)
                tags.append(FieldTag(nodes[idx].name, nodes[idx].layer))
    return tags


def _rating(a: set, b: set, thresholds) -> int:
    from ..evaluation import jaccard_to_rating
    return jaccard_to_rating(a, b, thresholds)


def generate_synthetic_corpus(spec: SyntheticCorpusSpec) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    nodes = _build_tree(spec, rng)
    leaves = [i for i, n in enumerate(nodes) if n.layer == spec.depth]
    parent_of = {i: nodes[i].parent for i in leaves}
    layer2 = [i for i, n in enumerate(nodes) if n.layer == 2]
    venue_of_l2 = {idx: f"venue-{k:02d}" for k, idx in enumerate(layer2)}
    venues = list(venue_of_l2.values())

    # authors with one or two home leaves (second one usually a sibling)
    author_fields: dict[str, list[int]] = {}
    for a in range(spec.num_authors):
        home = [leaves[rng.integers(len(leaves))]]
        if rng.random() < 0.5:
            siblings = nodes[parent_of[home[0]]].children
            second = siblings[rng.integers(len(siblings))] if rng.random() < 0.6 \
                else leaves[rng.integers(len(leaves))]
            if second != home[0]:
                home.append(second)
        author_fields[f"a{a:04d}"] = home
    authors = list(author_fields)
    by_leaf: dict[int, list[str]] = {}
    for a, home in author_fields.items():
        for leaf in home:
            by_leaf.setdefault(leaf, []).append(a)
    by_l3: dict[int, list[str]] = {}
    for leaf, names in by_leaf.items():
        by_l3.setdefault(parent_of[leaf], []).extend(names)

    def make_paper(pid: str, year: int) -> tuple[CorpusRecord, list[int]]:
        first = authors[rng.integers(len(authors))]
        home = author_fields[first]
        paper_leaves = [home[rng.integers(len(home))]]
        if rng.random() < 0.25:
            extra = leaves[rng.integers(len(leaves))]
            if extra not in paper_leaves:
                paper_leaves.append(extra)
        team = [first]
        for _ in range(rng.integers(0, 3)):
            pool = by_l3.get(parent_of[paper_leaves[0]], authors) if rng.random() < 0.7 else authors
            cand = pool[rng.integers(len(pool))]
            if cand not in team:
                team.append(cand)
        l2 = _ancestors(nodes, paper_leaves[0])[-2]
        venue = venue_of_l2[l2] if rng.random() < 0.8 else venues[rng.integers(len(venues))]
        rec = CorpusRecord(
            id=pid,
            title=_sample_text(nodes, paper_leaves, spec.title_len, rng),
            abstract=_sample_text(nodes, paper_leaves, spec.abstract_len, rng),
            year=year, venue=venue, authors=team, fields=_paper_fields(nodes, paper_leaves))
        return rec, paper_leaves

    papers, paper_leaves = [], []
    years = np.sort(rng.integers(2000, 2020, size=spec.num_papers))
    for k in range(spec.num_papers):
        rec, pl = make_paper(f"p{k:05d}", int(years[k]))
        papers.append(rec)
        paper_leaves.append(pl)
    subs, sub_leaves = [], []
    for k in range(spec.num_submissions):
        rec, pl = make_paper(f"s{k:04d}", 2020)
        subs.append(rec)
        sub_leaves.append(pl)

    # citations: earlier papers, biased toward the same leaf / same layer-3 field
    leaf_index: dict[int, list[int]] = {}
    l3_index: dict[int, list[int]] = {}
    for k, pl in enumerate(paper_leaves):
        leaf_index.setdefault(pl[0], []).append(k)
        l3_index.setdefault(parent_of[pl[0]], []).append(k)

    def cite(pl: list[int], limit: int) -> list[str]:
        n_refs = rng.poisson(spec.citation_density)
        refs: list[str] = []
        for _ in range(n_refs):
            r = rng.random()
            pool = leaf_index.get(pl[0], []) if r < 0.7 else (
                l3_index.get(parent_of[pl[0]], []) if r < 0.9 else range(limit))
            pool = [j for j in pool if j < limit]
            if not pool:
                continue
            ref = papers[pool[rng.integers(len(pool))]].id
            if ref not in refs:
                refs.append(ref)
        return refs

    for k, (rec, pl) in enumerate(zip(papers, paper_leaves)):
        rec.references = cite(pl, k)
    for rec, pl in zip(subs, sub_leaves):
        rec.references = cite(pl, len(papers))

    # search log: title-derived queries over result lists with click scores
    l2_index: dict[int, list[int]] = {}
    for k, pl in enumerate(paper_leaves):
        l2_index.setdefault(_ancestors(nodes, pl[0])[-2], []).append(k)
    queries = []
    for qn in range(spec.num_queries):
        src = int(rng.integers(len(papers)))
        title_words = papers[src].title.split()
        pick = rng.choice(len(title_words), size=min(4, len(title_words)), replace=False)
        text = " ".join(title_words[i] for i in sorted(pick))
        results = [(papers[src].id, int(rng.integers(1, 15)))]
        same_leaf = [j for j in leaf_index[paper_leaves[src][0]] if j != src]
        if same_leaf and rng.random() < 0.5:
            results.append((papers[same_leaf[rng.integers(len(same_leaf))]].id,
                            int(rng.integers(1, 5))))
        shown = [j for j in l2_index[_ancestors(nodes, paper_leaves[src][0])[-2]]
                 if paper_leaves[j][0] != paper_leaves[src][0]]
        for j in rng.permutation(len(shown))[:4]:
            results.append((papers[shown[j]].id, 0))
        order = rng.permutation(len(results))
        queries.append(SearchQuery(f"q{qn:05d}", text, [results[i] for i in order]))

    # reviewers: authors with enough prior papers
    written: dict[str, list[str]] = {}
    for rec in papers:
        for a in rec.authors:
            written.setdefault(a, []).append(rec.id)
    reviewers = [Reviewer(a, tuple(written[a])) for a in authors
                 if len(written.get(a, ())) >= spec.min_reviewer_papers]

    def fine(leaf_list) -> set[str]:
        out = set()
        for leaf in leaf_list:
            out.update(nodes[i].name for i in _ancestors(nodes, leaf) if nodes[i].layer >= 3)
        return out

    judgments = []
    for rec, pl in zip(subs, sub_leaves):
        target = fine(pl)
        scored = [(r.reviewer_id, _rating(target, fine(author_fields[r.reviewer_id]),
                                          spec.rating_thresholds)) for r in reviewers]
        relevant = [s for s in scored if s[1] > 0]
        others = [s for s in scored if s[1] == 0]
        half = spec.judged_per_submission // 2
        chosen = [relevant[i] for i in rng.permutation(len(relevant))[:half]]
        rest = spec.judged_per_submission - len(chosen)
        chosen += [others[i] for i in rng.permutation(len(others))[:rest]]
        judgments.extend(Judgment(rec.id, rid, score) for rid, score in sorted(chosen))

    return SyntheticCorpus(spec, nodes[:-1], papers, subs, queries, reviewers, judgments,
                           author_fields)
