import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from revmatch.corpus import CorpusRecord, FieldTag, Judgment
from revmatch.evaluation import (ProbeTask, aggregate_annotations, build_probe_tasks,
                                 evaluate_rankings, jaccard_to_rating, mean_rank_from_scores,
                                 mean_rank_probe, precision_at_k, precision_at_k_anjum,
                                 precision_at_k_liu, rank_of_relevant, z_test)


def judged(scores):
    ranked = [f"r{i}" for i in range(len(scores))]
    return ranked, dict(zip(ranked, scores))


# -- precision --------------------------------------------------------------

def test_all_relevant():
    r, s = judged([3, 3, 3, 3, 3])
    assert precision_at_k(r, s, 5, "soft") == 1.0 == precision_at_k(r, s, 5, "hard")
    assert precision_at_k_liu(r, s, 5) == 1.0


def test_mixed_fixture():
    r, s = judged([3, 2, 1, 0, 3])
    assert precision_at_k(r, s, 5, "soft") == pytest.approx(0.6, abs=0)
    assert precision_at_k(r, s, 5, "hard") == pytest.approx(0.4, abs=0)
    assert precision_at_k_liu(r, s, 5) == 9 / 15 == 0.6


def test_liu_all_zero():
    r, s = judged([0] * 6)
    assert precision_at_k_liu(r, s, 5) == 0.0


def test_anjum_short_list_denominator():
    r, s = judged([2, 2, 2])
    assert precision_at_k_anjum(r, s, 5) == 1.0
    assert precision_at_k(r, s, 5, "soft") == pytest.approx(0.6)


def test_anjum_long_list():
    r, s = judged([2, 2, 0, 0, 0, 3, 3, 3, 3, 3])
    assert precision_at_k_anjum(r, s, 5) == 0.4


def test_unjudged_reviewers_are_skipped_and_missing_appended():
    scores = {"a": 3, "b": 0, "c": 2}
    assert precision_at_k(["x", "b", "y", "a"], scores, 2, "soft") == 0.5
    # "c" was never ranked; it is appended last so P@3 still sees it
    assert precision_at_k(["b", "a"], scores, 3, "soft") == pytest.approx(2 / 3)


def test_bad_mode_rejected():
    with pytest.raises(ValueError):
        precision_at_k([], {}, 5, "medium")


@given(st.lists(st.integers(0, 3), min_size=5, max_size=15), st.sampled_from([5, 10]))
def test_anjum_equals_soft_when_enough_judged(scores, k):
    r, s = judged(scores)
    if len(scores) >= k:
        assert precision_at_k_anjum(r, s, k) == pytest.approx(precision_at_k(r, s, k, "soft"))
    assert precision_at_k(r, s, k, "hard") <= precision_at_k(r, s, k, "soft")


def test_evaluate_rankings_report():
    js = [Judgment("p", f"r{i}", s) for i, s in enumerate([3, 2, 1, 0, 3])]
    rep = evaluate_rankings({"p": [f"r{i}" for i in range(5)]}, js)
    assert rep.values["soft_p@5"] == pytest.approx(0.6)
    assert rep.values["hard_p@10"] == pytest.approx(0.2)
    assert rep.average == pytest.approx((0.6 + 0.3 + 0.4 + 0.2) / 4)
    assert rep.to_csv().startswith("metric,value\n")
    assert "soft_p@5" in rep.format_table()


# -- probes -----------------------------------------------------------------

def task(relevant, kind="semantic"):
    return ProbeTask("q", [f"c{i}" for i in range(100)], relevant, kind)


def test_probe_requires_100_candidates():
    with pytest.raises(ValueError, match="100"):
        ProbeTask("q", ["a"], 0, "semantic")


def test_perfect_scorer_mean_rank_one():
    tasks = [task(i) for i in (0, 50, 99)]
    scores = [np.where(np.arange(100) == t.relevant, 1.0, 0.0) for t in tasks]
    assert mean_rank_from_scores(tasks, scores) == {"semantic": 1.0}


def test_random_scorer_mean_rank_near_50_5():
    rng = np.random.default_rng(0)
    tasks = [task(int(rng.integers(100))) for _ in range(4000)]
    mr = mean_rank_from_scores(tasks, [rng.random(100) for _ in tasks])["semantic"]
    assert abs(mr - 50.5) < 1.5


def test_hand_built_probe_set():
    tasks = [task(0, "topic"), task(5, "topic"), task(1, "citation")]
    s0 = np.zeros(100); s0[[0, 3, 4]] = [1.0, 2.0, 3.0]           # rank 3
    s1 = np.zeros(100); s1[5] = -1.0                              # below 99 zeros -> 100
    s2 = np.ones(100)                                             # tie: one lower index ahead -> 2
    assert mean_rank_from_scores(tasks, [s0, s1, s2]) == {"topic": 51.5, "citation": 2.0}
    assert rank_of_relevant(s2, 1) == 2


class WordModel:
    """Bag-of-words vectors; ignores the instruction."""

    def __init__(self, words):
        self.words = {w: i for i, w in enumerate(sorted(words))}

    def embed(self, texts, factor):
        out = np.zeros((len(texts), len(self.words)))
        for r, t in enumerate(texts):
            for w in t.split():
                out[r, self.words[w]] += 1
        return out


def test_mean_rank_probe_with_model():
    words = [f"w{i}" for i in range(100)]
    tasks = [ProbeTask(words[i], words, i, "semantic") for i in (3, 70)]
    assert mean_rank_probe(WordModel(words), tasks) == {"semantic": 1.0}


def test_build_probe_tasks_kinds_and_validity():
    fields = [f"f{i}" for i in range(120)]
    corpus = {}
    for i in range(130):
        corpus[f"p{i}"] = CorpusRecord(f"p{i}", f"title {i}", f"abstract {i}",
                                       fields=[FieldTag(fields[i % 120], 3)],
                                       references=[f"p{(i + 1) % 130}"])
    tasks = build_probe_tasks([corpus["p0"], corpus["p1"]], corpus, fields, sorted(corpus), seed=1)
    assert sorted(t.kind for t in tasks) == ["citation"] * 2 + ["semantic"] * 2 + ["topic"] * 2
    for t in tasks:
        assert len(set(t.candidates)) == 100
        if t.kind == "topic":
            assert t.candidates[t.relevant] == fields[int(t.query.split()[1]) % 120]


# -- ratings and significance -----------------------------------------------

def test_jaccard_ratings():
    assert jaccard_to_rating({"a", "b"}, {"a", "b"}) == 3
    assert jaccard_to_rating({"a"}, {"b"}) == 0
    assert jaccard_to_rating({"a", "b"}, {"a", "c", "d"}) == 1   # 1/4 = 0.25
    with pytest.raises(ValueError):
        jaccard_to_rating({"a"}, {"a"}, (0.5, 0.4, 0.7))


@pytest.mark.parametrize("ratings, expect", [([3] * 5, 3), ([2, 3, 3, 2, 2], 2), ([1, 2], 2),
                                             ([0, 1], 1), ([0, 0, 1], 0)])
def test_aggregate_annotations(ratings, expect):
    assert aggregate_annotations(ratings) == expect


def test_z_test_identical_lists():
    r = z_test([0.5, 0.4, 0.6], [0.5, 0.4, 0.6])
    assert r.p_value == 1.0 and r.marker() == ""


def test_z_test_separated_fixture():
    a, b = [0.49, 0.50, 0.51], [0.39, 0.40, 0.41]
    r = z_test(a, b)
    z = 0.1 / math.sqrt(0.01 ** 2 / 3 + 0.01 ** 2 / 3)
    assert abs(r.z - z) < 1e-9
    assert abs(r.p_value - 2 * norm.sf(z)) < 1e-6
    assert r.marker() == "**"


def test_z_test_markers():
    assert z_test([0.0, 1.0, 2.0], [0.5, 1.5, 2.5]).marker() == ""
    r = z_test([1.0, 1.2, 1.1, 1.0], [0.0, 0.3, 0.1, 0.6])
    assert r.p_value < 0.01 and r.marker() == "**"


def test_z_test_zero_variance_different_means():
    assert z_test([1.0, 1.0], [0.0, 0.0]).p_value == 0.0
