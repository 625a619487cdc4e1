"""Property tests for invariants listed per module."""
import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from revmatch import autodiff as ad
from revmatch import encoder as enc
from revmatch.autodiff import Tensor
from revmatch.encoder import EncoderWeights
from revmatch.evaluation import precision_at_k, precision_at_k_liu
from revmatch.matching import (ChainConfig, EmbeddingCache, profile_union, stage_semantic,
                               stage_topic)
from revmatch.pretraining import contrastive_loss
from revmatch.tokenizer import CLS_ID, UNK_ID, build_vocab, decode, encode

from conftest import toy_config
from test_matching import HashModel, make_instance

finite = st.floats(-10, 10, allow_nan=False)
SEEDS = st.integers(0, 2 ** 32 - 1)


@settings(max_examples=50, deadline=None)
@given(SEEDS, st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_matmul_associative(seed, m, k, n, p):
    rng = np.random.default_rng(seed)
    a, b, c = (Tensor(rng.normal(size=s)) for s in ((m, k), (k, n), (n, p)))
    np.testing.assert_allclose(((a @ b) @ c).data, (a @ (b @ c)).data, rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 9)), elements=finite))
def test_softmax_rows_are_distributions(x):
    s = ad.softmax_rows(Tensor(x)).data
    assert np.all((s >= 0) & (s <= 1))
    np.testing.assert_allclose(s.sum(axis=1), 1.0, rtol=0, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 9)), elements=finite))
def test_layer_norm_standardizes(x):
    assume(x.var(axis=1).min() > 1e-4)  # eps must be negligible next to the variance
    d = x.shape[1]
    y = ad.layer_norm(Tensor(x), Tensor(np.ones(d)), Tensor(np.zeros(d)), eps=1e-12).data
    assert np.all(np.abs(y.mean(axis=1)) < 1e-9)
    np.testing.assert_allclose(y.var(axis=1), 1.0, rtol=0, atol=1e-6)


words = st.text("abcdefg ,.", min_size=0, max_size=40)


@settings(max_examples=50, deadline=None)
@given(st.lists(words, min_size=1, max_size=5), words, st.integers(3, 20))
def test_encode_decode_reencode(corpus, text, max_len):
    vocab = build_vocab(corpus)
    seq = encode(text, vocab, max_len)
    assert seq.ids[0] == CLS_ID and len(seq.ids) <= max_len
    assert max(seq.ids) < len(vocab)
    known = [t for t in decode(seq, vocab) if vocab.id_of(t) != UNK_ID]
    again = encode(" ".join(known), vocab, max_len)
    assert decode(again, vocab) == known
    body = [i for i in seq.ids[1: seq.attention_length - 1] if i != UNK_ID]
    assert list(again.ids[1: again.attention_length - 1]) == body


def test_single_weight_set_serves_both_encoders():
    cfg = toy_config()
    w = EncoderWeights.initialize(cfg, seed=1, init_std=0.3)
    ids, mask = np.array([[2, 5, 6, 3]]), np.ones((1, 4), bool)
    instr = np.array([7, 8])

    def run():
        p = w.tensors()
        states = enc.encode_instruction(instr, p, cfg)
        return states[-1].data.copy(), enc.encode_paper(ids, mask, states, p, cfg).data.copy()

    i0, e0 = run()
    w.params["layer0.w_v"] += 0.1
    i1, e1 = run()
    assert not np.allclose(i0, i1) and not np.allclose(e0, e1)


@settings(max_examples=50, deadline=None)
@given(SEEDS, st.integers(0, 6), st.floats(0.01, 3.0))
def test_loss_nonnegative_and_monotone_in_positive_score(seed, T, bump):
    rng = np.random.default_rng(seed)
    a, pos = rng.normal(size=4), rng.normal(size=4)
    negs = [rng.normal(size=4) for _ in range(T)]
    base = contrastive_loss(a, pos, negs).item()
    assert base >= 0 and (base == 0) == (T == 0)
    if T:
        # moving the positive along the anchor raises a.q+ by bump*|a|^2
        assert contrastive_loss(a, pos + bump * a, negs).item() < base


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.05, 0.3, 1.0, 3]), st.sampled_from([0.5, 1.0, 2]))
def test_stage_survivors_nest(seed, keep1, keep2):
    sub, _, profiles = make_instance(seed)
    cache = EmbeddingCache(HashModel(salt=seed))
    cfg = ChainConfig(stage1_keep=keep1, stage1_min=1, stage2_keep=keep2, stage2_min=1)
    union = set(profile_union(profiles))
    s = stage_semantic(sub, profiles, cache, cfg)
    if not union:
        return
    t = stage_topic(sub, s, cache, cfg)
    assert s.survivors and t.survivors
    assert set(t.survivors) <= set(s.survivors) <= union
    assert all(np.isfinite(v) for sc in t.scores.values() for v in sc.values())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=15), st.permutations(list(range(15))),
       st.sampled_from([1, 5, 10]))
def test_precision_bounds(scores, perm, k):
    judged = {f"r{i}": s for i, s in enumerate(scores)}
    ranked = [f"r{i}" for i in perm]
    soft, hard = precision_at_k(ranked, judged, k, "soft"), precision_at_k(ranked, judged, k, "hard")
    assert 0 <= hard <= soft <= 1
    assert 0 <= precision_at_k_liu(ranked, judged, k) <= 1
