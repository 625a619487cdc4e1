"""Instruction encoder and instruction-guided paper encoder.

Both encoders share one parameter set. The instruction stack is a plain
Transformer encoder; the paper stack reads, at every layer, the keys and
values of the instruction's states at that same depth (queries come from
paper tokens only). The paper embedding is the final ``[CLS]`` state.

All forward functions take batched inputs: token ids ``(n, len)`` and a
boolean key mask of the same shape.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .tokenizer import INSTRUCTION_MAX_LEN, PAPER_MAX_LEN

SEMANTIC, TOPIC, CITATION = "semantic", "topic", "citation"
TOPIC_CLASSIFICATION = "topic_classification"
FACTORS = (SEMANTIC, TOPIC, CITATION)

INSTRUCTIONS = {
    SEMANTIC: "Retrieve a scientific paper that is relevant to the query.",
    TOPIC: "Find a pair of papers that one paper shares similar scientific topic "
           "classes with the other paper.",
    CITATION: "Retrieve a scientific paper that is cited by the query.",
    TOPIC_CLASSIFICATION: "Tag a scientific paper with relevant scientific topic classes.",
}

CHECKPOINT_MAGIC = b"COFW"
CHECKPOINT_VERSION = 1
NUM_SEGMENTS = 2


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 2
    hidden_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 256
    max_instruction_len: int = INSTRUCTION_MAX_LEN
    max_paper_len: int = PAPER_MAX_LEN
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden_dim % self.num_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def max_positions(self) -> int:
        return max(self.max_instruction_len, self.max_paper_len)


def parameter_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in checkpoint order."""
    d, f = cfg.hidden_dim, cfg.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "token_emb": (cfg.vocab_size, d),
        "position_emb": (cfg.max_positions, d),
        "segment_emb": (NUM_SEGMENTS, d),
    }
    for l in range(cfg.num_layers):
        shapes.update({
            f"layer{l}.w_q": (d, d),
            f"layer{l}.w_k": (d, d),
            f"layer{l}.w_v": (d, d),
            f"layer{l}.w_o": (d, d),
            f"layer{l}.b_o": (d,),
            f"layer{l}.ln1.gamma": (d,),
            f"layer{l}.ln1.beta": (d,),
            f"layer{l}.ffn.w1": (d, f),
            f"layer{l}.ffn.b1": (f,),
            f"layer{l}.ffn.w2": (f, d),
            f"layer{l}.ffn.b2": (d,),
            f"layer{l}.ln2.gamma": (d,),
            f"layer{l}.ln2.beta": (d,),
        })
    return shapes


class EncoderWeights:
    """The single parameter set behind both encoders and every factor."""

    def __init__(self, config: EncoderConfig, params: dict[str, np.ndarray]):
        expected = parameter_shapes(config)
        if list(params) != list(expected):
            raise ValueError("parameter names/order do not match the config")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: EncoderConfig, seed: int = 0, init_std: float = 0.02,
                   dtype=np.float64) -> "EncoderWeights":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in parameter_shapes(config).items():
            if name.endswith("gamma"):
                params[name] = np.ones(shape, dtype=dtype)
            elif len(shape) == 1:
                params[name] = np.zeros(shape, dtype=dtype)
            else:
                params[name] = rng.normal(0.0, init_std, size=shape).astype(dtype)
        return cls(config, params)

    def copy(self) -> "EncoderWeights":
        return EncoderWeights(self.config, {k: v.copy() for k, v in self.params.items()})

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad, name=k, dtype=v.dtype)
                for k, v in self.params.items()}

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())

    def save(self, path) -> None:
        """Binary checkpoint: magic, version, config, then float32 LE params."""
        cfg = self.config
        header = CHECKPOINT_MAGIC + struct.pack(
            "<IIIIIIIId", CHECKPOINT_VERSION, cfg.vocab_size, cfg.num_layers, cfg.hidden_dim,
            cfg.num_heads, cfg.ffn_dim, cfg.max_instruction_len, cfg.max_paper_len, cfg.ln_eps)
        with open(path, "wb") as fh:
            fh.write(header)
            for value in self.params.values():
                fh.write(np.ascontiguousarray(value, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, dtype=np.float64) -> "EncoderWeights":
        raw = Path(path).read_bytes()
        if raw[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a weight checkpoint (bad magic {raw[:4]!r})")
        head = struct.Struct("<IIIIIIIId")
        version, vocab, layers, d, heads, ffn, a_max, b_max, eps = head.unpack_from(raw, 4)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        cfg = EncoderConfig(vocab_size=vocab, num_layers=layers, hidden_dim=d, num_heads=heads,
                            ffn_dim=ffn, max_instruction_len=a_max, max_paper_len=b_max,
                            ln_eps=eps)
        offset = 4 + head.size
        params = {}
        for name, shape in parameter_shapes(cfg).items():
            count = int(np.prod(shape))
            chunk = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
            params[name] = chunk.reshape(shape).astype(dtype)
            offset += 4 * count
        if offset != len(raw):
            raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
        return cls(cfg, params)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def _key_mask_add(mask: np.ndarray) -> np.ndarray:
    # (n, S) -> (n, 1, 1, S)
    return np.where(mask, 0.0, ad.MASK_VALUE)[:, None, None, :]


def embed_inputs(ids: np.ndarray, p: dict[str, Tensor]) -> Tensor:
    """Token + segment + position embeddings, shape ``(n, len, d)``."""
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    length = ids.shape[1]
    if length > p["position_emb"].shape[0]:
        raise ValueError(
            f"sequence length {length} exceeds position table {p['position_emb'].shape[0]}")
    tok = ad.embedding(p["token_emb"], ids)
    pos = p["position_emb"][:length]
    seg = p["segment_emb"][0:1]
    return tok + pos + seg


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    n, s, d = x.shape
    return x.reshape(n, s, num_heads, d // num_heads).transpose(0, 2, 1, 3)


def _attend(q_in: Tensor, k_proj: Tensor, v_proj: Tensor, key_mask: np.ndarray,
            p: dict[str, Tensor], layer: int, num_heads: int) -> Tensor:
    n, length, d = q_in.shape
    head_dim = d // num_heads
    q = _split_heads(q_in @ p[f"layer{layer}.w_q"], num_heads)
    k = _split_heads(k_proj, num_heads).transpose(0, 1, 3, 2)
    v = _split_heads(v_proj, num_heads)
    scores = (q @ k) * (1.0 / math.sqrt(head_dim))
    attn = ad.softmax_rows(scores, _key_mask_add(key_mask))
    return (attn @ v).transpose(0, 2, 1, 3).reshape(n, length, d)


def mha(H: Tensor, mask: np.ndarray, p: dict[str, Tensor], layer: int,
        num_heads: int) -> Tensor:
    """Self-attention; heads concatenated (no output projection)."""
    k = H @ p[f"layer{layer}.w_k"]
    v = H @ p[f"layer{layer}.w_v"]
    return _attend(H, k, v, mask, p, layer, num_heads)


def mha_asymmetric(H_p: Tensor, mask_p: np.ndarray, H_i: Tensor, mask_i: np.ndarray,
                   p: dict[str, Tensor], layer: int, num_heads: int) -> Tensor:
    """Paper queries attend over instruction states followed by paper states.

    ``H_i`` has shape ``(1, A, d)`` and is shared by the whole batch.
    """
    n = H_p.shape[0]
    A = H_i.shape[1]
    w_k, w_v = p[f"layer{layer}.w_k"], p[f"layer{layer}.w_v"]
    k_p, v_p = H_p @ w_k, H_p @ w_v
    d = H_p.shape[2]
    k_i = ad.broadcast_to(H_i @ w_k, (n, A, d))
    v_i = ad.broadcast_to(H_i @ w_v, (n, A, d))
    k = ad.concat([k_i, k_p], axis=1)
    v = ad.concat([v_i, v_p], axis=1)
    mask = np.concatenate([np.broadcast_to(np.asarray(mask_i, bool).reshape(1, A), (n, A)),
                           mask_p], axis=1)
    return _attend(H_p, k, v, mask, p, layer, num_heads)


def _sublayers(H: Tensor, attn: Tensor, p: dict[str, Tensor], layer: int,
               eps: float) -> Tensor:
    pre = f"layer{layer}."
    h = ad.layer_norm(H + attn @ p[pre + "w_o"] + p[pre + "b_o"],
                      p[pre + "ln1.gamma"], p[pre + "ln1.beta"], eps)
    ffn = ad.gelu(h @ p[pre + "ffn.w1"] + p[pre + "ffn.b1"]) @ p[pre + "ffn.w2"] + p[pre + "ffn.b2"]
    return ad.layer_norm(h + ffn, p[pre + "ln2.gamma"], p[pre + "ln2.beta"], eps)


def encode_instruction(ids: np.ndarray, p: dict[str, Tensor], config: EncoderConfig,
                       mask: np.ndarray | None = None) -> list[Tensor]:
    """States ``H^(0) .. H^(L)`` of one instruction, each ``(1, A, d)``."""
    ids = np.asarray(ids, dtype=np.int64).reshape(1, -1)
    if ids.shape[1] > config.max_instruction_len:
        raise ValueError(
            f"instruction length {ids.shape[1]} exceeds {config.max_instruction_len}")
    mask = np.ones(ids.shape, bool) if mask is None else np.asarray(mask, bool).reshape(1, -1)
    H = embed_inputs(ids, p)
    states = [H]
    for layer in range(config.num_layers):
        H = _sublayers(H, mha(H, mask, p, layer, config.num_heads), p, layer, config.ln_eps)
        states.append(H)
    return states


def empty_instruction(config: EncoderConfig) -> list[Tensor]:
    return [Tensor(np.zeros((1, 0, config.hidden_dim)))
            for _ in range(config.num_layers + 1)]


def encode_paper_states(ids: np.ndarray, mask: np.ndarray, instr_states: list[Tensor] | None,
                        p: dict[str, Tensor], config: EncoderConfig,
                        instr_mask: np.ndarray | None = None) -> list[Tensor]:
    """All paper-stack layer states ``(n, B, d)``."""
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    mask = np.atleast_2d(np.asarray(mask, bool))
    if ids.shape[1] > config.max_paper_len:
        raise ValueError(f"paper length {ids.shape[1]} exceeds {config.max_paper_len}")
    if instr_states is not None and len(instr_states) != config.num_layers + 1:
        raise ValueError(
            f"instruction states have {len(instr_states) - 1} layers, "
            f"encoder has {config.num_layers}")
    H = embed_inputs(ids, p)
    states = [H]
    for layer in range(config.num_layers):
        if instr_states is None:
            attn = mha(H, mask, p, layer, config.num_heads)
        else:
            H_i = instr_states[layer]
            m_i = np.ones(H_i.shape[1], bool) if instr_mask is None else instr_mask
            attn = mha_asymmetric(H, mask, H_i, m_i, p, layer, config.num_heads)
        H = _sublayers(H, attn, p, layer, config.ln_eps)
        states.append(H)
    return states


def encode_paper(ids: np.ndarray, mask: np.ndarray, instr_states: list[Tensor],
                 p: dict[str, Tensor], config: EncoderConfig,
                 instr_mask: np.ndarray | None = None) -> Tensor:
    """Final ``[CLS]`` state of each paper under an instruction: ``(n, d)``."""
    states = encode_paper_states(ids, mask, instr_states, p, config, instr_mask)
    return states[-1][:, 0, :]


def encode_paper_uninstructed(ids: np.ndarray, mask: np.ndarray, p: dict[str, Tensor],
                              config: EncoderConfig) -> Tensor:
    return encode_paper_states(ids, mask, None, p, config)[-1][:, 0, :]


def config_fields() -> list[str]:
    return [f.name for f in fields(EncoderConfig)]
