import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from revmatch import autodiff as ad  # noqa: E402
from revmatch import encoder as enc  # noqa: E402
from revmatch.encoder import EncoderConfig, EncoderWeights  # noqa: E402
from revmatch.pretraining import assemble_batch, batch_contrastive_loss  # noqa: E402
from revmatch.pretraining.samples import TrainingSample  # noqa: E402


def toy_config(vocab=12, layers=2, d=8, heads=2, ffn=16, a_max=6, b_max=8):
    return EncoderConfig(vocab_size=vocab, num_layers=layers, hidden_dim=d, num_heads=heads,
                         ffn_dim=ffn, max_instruction_len=a_max, max_paper_len=b_max)


class ToyProblem:
    """A random batch of the full contrastive objective on a tiny encoder."""

    def __init__(self, seed: int, instructed: bool = True):
        rng = np.random.default_rng(seed)
        heads = int(rng.choice([1, 2, 4]))
        self.cfg = toy_config(d=8, heads=heads, ffn=int(rng.choice([8, 16])))
        self.weights = EncoderWeights.initialize(self.cfg, seed=seed, init_std=0.4)
        for name, v in self.weights.params.items():
            if v.ndim == 1:  # make biases and norms non-trivial too
                v += rng.normal(0, 0.2, v.shape)
        n = int(rng.integers(2, 4))
        docs = [f"d{i}" for i in range(2 * n + 2)]
        self.samples = [TrainingSample("semantic", docs[i], docs[n + i], (docs[-1 - (i % 2)],))
                        for i in range(n)]
        self.lengths = {k: int(rng.integers(2, self.cfg.max_paper_len + 1)) for k in docs}
        self.tokens = {k: rng.integers(4, self.cfg.vocab_size, self.lengths[k]) for k in docs}
        self.instr = rng.integers(4, self.cfg.vocab_size, int(rng.integers(1, 5)))
        self.instructed = instructed
        self.batch = assemble_batch(self.samples, in_batch_negatives=True)

    def _ids(self, keys):
        width = max(self.lengths[k] for k in keys)
        ids = np.zeros((len(keys), width), np.int64)
        mask = np.zeros((len(keys), width), bool)
        for i, k in enumerate(keys):
            ids[i, :self.lengths[k]] = self.tokens[k]
            mask[i, :self.lengths[k]] = True
        return ids, mask

    def loss(self, p):
        b = self.batch
        keys = list(dict.fromkeys(b.anchors + b.positives + b.hard))
        slot = {k: i for i, k in enumerate(keys)}
        ids, mask = self._ids(keys)
        if self.instructed:
            states = enc.encode_instruction(self.instr, p, self.cfg)
            emb = enc.encode_paper(ids, mask, states, p, self.cfg)
        else:
            emb = enc.encode_paper_uninstructed(ids, mask, p, self.cfg)
        pick = lambda ks: emb[np.array([slot[k] for k in ks])]  # noqa: E731
        return batch_contrastive_loss(pick(b.anchors), pick(b.positives), pick(b.hard),
                                      b.hard_owner, b.in_batch_mask)

    def value(self, params: dict) -> float:
        p = {k: ad.Tensor(v, name=k) for k, v in params.items()}
        return self.loss(p).item()

    def analytic(self) -> dict:
        p = self.weights.tensors(requires_grad=True)
        return ad.backward(self.loss(p), p.values())


def gradient_check(problem: ToyProblem, entries_per_param: int = 4, h: float = 1e-5,
                   seed: int = 0) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Relative error per entry is |a - n| / max(|a|, |n|); entries where both
    are below 1e-7 are compared on absolute error instead, since their ratio
    is dominated by rounding.
    """
    rng = np.random.default_rng(seed)
    grads = problem.analytic()
    params = problem.weights.params
    worst = 0.0
    for name, value in params.items():
        flat = value.reshape(-1)
        picks = rng.choice(flat.size, min(entries_per_param, flat.size), replace=False)
        for j in picks:
            orig = flat[j]
            flat[j] = orig + h
            up = problem.value(params)
            flat[j] = orig - h
            down = problem.value(params)
            flat[j] = orig
            num = (up - down) / (2 * h)
            ana = grads[name].reshape(-1)[j]
            scale = max(abs(ana), abs(num))
            err = abs(ana - num) / scale if scale > 1e-7 else abs(ana - num)
            worst = max(worst, err)
    return worst


@pytest.fixture
def toy_problem():
    return ToyProblem(0)
