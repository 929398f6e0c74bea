"""Attention-based attribute encoder.

A bidirectional single-layer LSTM reads the token-vector sequence and
emits one hidden state per position (forward and backward halves
concatenated). The hidden states are scored against a learned attention
vector, softmaxed, and smoothed toward the uniform weight ``1/l`` by a
coefficient ``rho`` in [0, 1]; the attribute embedding is the weighted
average of the raw token vectors under those smoothed weights.

Two implementations share the parameter arrays: plain-numpy functions
for single sequences (inference, introspection) and a batched
graph-recording path used during training
(:func:`encode_sequences_tape`). Gate order in the packed LSTM weight
matrices is input, forget, cell, output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data_model import AttributeValue
from .text_embedding import EmbeddingTable

PARAM_NAMES = ("wx_f", "wh_f", "b_f", "wx_b", "wh_b", "b_b", "attn")


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class AttentionalEncoder:
    """Per-attribute encoder parameters plus its smoothing coefficient."""

    dim: int
    hidden: int
    smoothing_rho: float
    max_tokens: int = 64
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.smoothing_rho <= 1.0:
            raise ValueError("smoothing_rho must lie in [0, 1]")

    @classmethod
    def initialize(
        cls,
        dim: int,
        hidden: int,
        smoothing_rho: float,
        rng: np.random.Generator,
        max_tokens: int = 64,
    ) -> "AttentionalEncoder":
        k = 1.0 / np.sqrt(hidden)
        params = {
            "wx_f": rng.uniform(-k, k, size=(dim, 4 * hidden)),
            "wh_f": rng.uniform(-k, k, size=(hidden, 4 * hidden)),
            "b_f": rng.uniform(-k, k, size=(4 * hidden,)),
            "wx_b": rng.uniform(-k, k, size=(dim, 4 * hidden)),
            "wh_b": rng.uniform(-k, k, size=(hidden, 4 * hidden)),
            "b_b": rng.uniform(-k, k, size=(4 * hidden,)),
            "attn": rng.uniform(-k, k, size=(2 * hidden,)),
        }
        return cls(dim, hidden, smoothing_rho, max_tokens, params)


def _lstm_pass(
    vectors: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray, hidden: int
) -> np.ndarray:
    """Run one direction over (l, d) inputs; returns (l, hidden) states."""
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    states = np.empty((len(vectors), hidden))
    for k, v in enumerate(vectors):
        z = v @ wx + h @ wh + b
        i = _stable_sigmoid(z[:hidden])
        f = _stable_sigmoid(z[hidden : 2 * hidden])
        g = np.tanh(z[2 * hidden : 3 * hidden])
        o = _stable_sigmoid(z[3 * hidden :])
        c = f * c + i * g
        h = o * np.tanh(c)
        states[k] = h
    return states


def seq_encode(encoder: AttentionalEncoder, token_vectors: np.ndarray) -> np.ndarray:
    """Hidden state per position: forward and backward halves concatenated."""
    vectors = np.asarray(token_vectors, dtype=np.float64)
    if vectors.ndim != 2 or len(vectors) < 1:
        raise ValueError("expected a non-empty (l, d) sequence")
    p = encoder.params
    fwd = _lstm_pass(vectors, p["wx_f"], p["wh_f"], p["b_f"], encoder.hidden)
    bwd = _lstm_pass(vectors[::-1], p["wx_b"], p["wh_b"], p["b_b"], encoder.hidden)[::-1]
    return np.concatenate([fwd, bwd], axis=1)


def attention_weights(encoder: AttentionalEncoder, hidden_states: np.ndarray) -> np.ndarray:
    """Smoothed attention weights; always positive and summing to one."""
    scores = hidden_states @ encoder.params["attn"]
    scores = scores - scores.max()
    e = np.exp(scores)
    alpha = e / e.sum()
    l = len(scores)
    rho = encoder.smoothing_rho
    return rho * alpha + (1.0 - rho) / l


def encode_attribute(
    encoder: AttentionalEncoder, table: EmbeddingTable, value: AttributeValue
) -> np.ndarray | None:
    """Attribute embedding, or None for a missing value."""
    if value.is_missing:
        return None
    tokens = value.tokens[: encoder.max_tokens]
    vectors = np.stack([table.embed(t) for t in tokens])
    states = seq_encode(encoder, vectors)
    beta = attention_weights(encoder, states)
    return beta @ vectors


def token_attention(
    encoder: AttentionalEncoder, table: EmbeddingTable, value: AttributeValue
) -> list[tuple[str, float]]:
    """(token, weight) pairs for introspection; empty for missing values."""
    if value.is_missing:
        return []
    tokens = value.tokens[: encoder.max_tokens]
    vectors = np.stack([table.embed(t) for t in tokens])
    beta = attention_weights(encoder, seq_encode(encoder, vectors))
    return list(zip(tokens, (float(b) for b in beta)))


# ---------------------------------------------------------------------------
# Batched, graph-recording path used by the trainer.
# ---------------------------------------------------------------------------


@dataclass
class PreparedSequence:
    """A token sequence resolved to embedding-table bucket ids.

    Tokens covered by a pretrained map contribute a constant vector in
    ``const`` and an empty bucket array; hashed tokens do the opposite.
    """

    bucket_ids: list[np.ndarray]
    const: np.ndarray | None  # (l, d) pretrained contributions, or None

    @property
    def length(self) -> int:
        return len(self.bucket_ids)


def prepare_sequence(
    table: EmbeddingTable, value: AttributeValue, max_tokens: int
) -> PreparedSequence | None:
    if value.is_missing:
        return None
    tokens = value.tokens[:max_tokens]
    ids: list[np.ndarray] = []
    const: np.ndarray | None = None
    empty = np.empty(0, dtype=np.int64)
    for k, tok in enumerate(tokens):
        vec = table.pretrained.get(tok) if table.pretrained else None
        if vec is not None:
            if const is None:
                const = np.zeros((len(tokens), table.dim))
            const[k] = vec
            ids.append(empty)
        else:
            ids.append(table.bucket_ids(tok))
    return PreparedSequence(ids, const)


def encoder_tensors(encoder: AttentionalEncoder, requires_grad: bool) -> dict[str, ad.Tensor]:
    """Tensors sharing memory with the encoder's parameter arrays."""
    out = {}
    for name in PARAM_NAMES:
        t = ad.Tensor(encoder.params[name], requires_grad=requires_grad)
        out[name] = t
    return out


def encode_sequences_tape(
    emb: ad.Tensor,
    enc: dict[str, ad.Tensor],
    rho: float,
    hidden: int,
    seqs: list[PreparedSequence],
) -> ad.Tensor:
    """Encode a batch of sequences on the tape; returns (n_seqs, d).

    Sequences are grouped by length so each group runs as dense
    batched matmuls without masking.
    """
    by_len: dict[int, list[int]] = {}
    for idx, s in enumerate(seqs):
        by_len.setdefault(s.length, []).append(idx)

    outputs: list[ad.Tensor] = []
    order: list[int] = []
    dim = emb.data.shape[1]
    attn_col = ad.reshape(enc["attn"], (2 * hidden, 1))
    for length in sorted(by_len):
        members = by_len[length]
        order.extend(members)
        n = len(members)
        id_arrays: list[np.ndarray] = []
        const = np.zeros((n, length, dim))
        has_const = False
        for row, idx in enumerate(members):
            s = seqs[idx]
            id_arrays.extend(s.bucket_ids)
            if s.const is not None:
                const[row] = s.const
                has_const = True
        indices = (
            np.concatenate(id_arrays) if id_arrays else np.empty(0, dtype=np.int64)
        )
        offsets = np.zeros(n * length + 1, dtype=np.int64)
        np.cumsum([len(a) for a in id_arrays], out=offsets[1:])
        flat = ad.embedding_bag(emb, indices, offsets)
        if has_const:
            flat = ad.add(flat, const.reshape(n * length, dim))
        v3 = ad.reshape(flat, (n, length, dim))
        v_steps = [v3[:, k, :] for k in range(length)]

        h_f = _lstm_tape(v_steps, enc["wx_f"], enc["wh_f"], enc["b_f"], hidden, n)
        h_b = _lstm_tape(v_steps[::-1], enc["wx_b"], enc["wh_b"], enc["b_b"], hidden, n)[::-1]

        score_cols = [
            ad.matmul(ad.concat([h_f[k], h_b[k]], axis=1), attn_col)
            for k in range(length)
        ]
        scores = score_cols[0] if length == 1 else ad.concat(score_cols, axis=1)
        alpha = ad.softmax(scores, axis=1)
        beta = ad.add_const(ad.scale(alpha, rho), (1.0 - rho) / length)
        acc = ad.mul(beta[:, 0:1], v_steps[0])
        for k in range(1, length):
            acc = ad.add(acc, ad.mul(beta[:, k : k + 1], v_steps[k]))
        outputs.append(acc)

    stacked = outputs[0] if len(outputs) == 1 else ad.concat(outputs, axis=0)
    inverse = np.empty(len(order), dtype=np.int64)
    inverse[np.array(order, dtype=np.int64)] = np.arange(len(order))
    if np.array_equal(inverse, np.arange(len(order))):
        return stacked
    return ad.take_rows(stacked, inverse)


def _lstm_tape(
    v_steps: list[ad.Tensor],
    wx: ad.Tensor,
    wh: ad.Tensor,
    b: ad.Tensor,
    hidden: int,
    batch: int,
) -> list[ad.Tensor]:
    h = ad.Tensor(np.zeros((batch, hidden)))
    c = ad.Tensor(np.zeros((batch, hidden)))
    states: list[ad.Tensor] = []
    for v in v_steps:
        z = ad.add(ad.add(ad.matmul(v, wx), ad.matmul(h, wh)), b)
        i = ad.sigmoid(z[:, :hidden])
        f = ad.sigmoid(z[:, hidden : 2 * hidden])
        g = ad.tanh(z[:, 2 * hidden : 3 * hidden])
        o = ad.sigmoid(z[:, 3 * hidden :])
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        states.append(h)
    return states
