"""End-to-end training of encoders and signature weights.

Signatures are learned one at a time. While signature ``s`` trains, only
the attributes still marked usable receive gradient updates, and after
each optimizer step the signature's weight vector is projected back to
the nonnegative unit sphere supported on the usable set. When ``s``
finishes, the attributes it uses (weights above a small numeric cutoff)
are removed from the usable set, which makes the supports of successive
signatures disjoint by construction. Training stops when the usable set
empties or the signature budget is reached.

Each positive pair is scored against freshly sampled irrelevant records:
the loss is the negative mean log-probability of picking the positive
pair out of the ``2|U| + 1`` pairs formed with the sampled records.
Records on which the current signature is inapplicable (all positively
weighted attributes missing) are dropped: dropped negatives shrink the
denominator, a dropped endpoint removes its pair from the batch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data_model import Dataset, LabelSet, Record
from .encoder import (
    AttentionalEncoder,
    PreparedSequence,
    encode_sequences_tape,
    encoder_tensors,
    prepare_sequence,
)
from .signatures import SignatureModel, SignatureWeights, cosine, prune_support
from .text_embedding import EmbeddingTable

logger = logging.getLogger(__name__)

_NORM_GUARD = 1e-30  # keeps zero-norm signatures from poisoning the graph


@dataclass
class TrainingConfig:
    """All knobs for one training run; persisted with the model."""

    iterations: int = 2000  # steps per signature
    max_signatures: int | None = None  # None: one per attribute
    negatives: int = 10  # irrelevant records sampled per pair
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    temperature: float = 1.0
    seed: int = 0
    embedding_dim: int = 64
    hidden_size: int = 64
    bucket_count: int = 2**16
    ngram_min: int = 3
    ngram_max: int = 5
    max_tokens: int = 64
    primary_attribute: str | None = None  # attention-smoothing rho 1; others 0
    rho_overrides: dict[str, float] = field(default_factory=dict)
    log_every: int = 100

    def validate(self) -> None:
        if self.iterations <= 0 or self.batch_size <= 0 or self.negatives <= 0:
            raise ValueError("iterations, batch_size, and negatives must be positive")
        if self.max_signatures is not None and self.max_signatures <= 0:
            raise ValueError("max_signatures must be positive when set")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not (0 <= self.adam_betas[0] < 1 and 0 <= self.adam_betas[1] < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.embedding_dim <= 0 or self.hidden_size <= 0:
            raise ValueError("embedding_dim and hidden_size must be positive")
        if self.ngram_min > self.ngram_max:
            raise ValueError("ngram_min must not exceed ngram_max")

    def rho_for(self, attribute: str, schema: Sequence[str]) -> float:
        if attribute in self.rho_overrides:
            return float(self.rho_overrides[attribute])
        primary = self.primary_attribute if self.primary_attribute is not None else schema[0]
        return 1.0 if attribute == primary else 0.0

    def snapshot(self) -> dict:
        out = asdict(self)
        out["adam_betas"] = list(self.adam_betas)
        return out


def selection_probability(
    pos_cos: float, neg_cos: Sequence[float], tau: float = 1.0
) -> float:
    """Probability that the positive pair wins the softmax over all pairs.

    Scores are cosines divided by the temperature; with no negatives the
    probability is exactly 1.
    """
    scores = np.concatenate(([pos_cos], np.asarray(neg_cos, dtype=np.float64))) / tau
    m = scores.max()
    return float(np.exp(scores[0] - m) / np.exp(scores - m).sum())


def project_weights(w: np.ndarray, usable: Sequence[int]) -> np.ndarray:
    """Project onto the nonnegative unit sphere supported on ``usable``.

    Entries outside the usable set are zeroed, negatives are clamped,
    and the result is L2-normalized; if everything clamps to zero the
    weight restarts uniform over the usable set.
    """
    usable = sorted(usable)
    if not usable:
        raise ValueError("usable attribute set is empty")
    out = np.zeros_like(np.asarray(w, dtype=np.float64))
    idx = np.array(usable, dtype=np.int64)
    out[idx] = np.maximum(np.asarray(w, dtype=np.float64)[idx], 0.0)
    peak = out.max()
    if peak == 0.0:
        out[idx] = 1.0
        peak = 1.0
    out = out / peak  # pre-scale so squaring cannot underflow
    return out / np.linalg.norm(out)


def sample_negatives(
    n: int, i: int, j: int, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform sample of ``k`` record indices from [0, n) without
    replacement, excluding ``i`` and ``j``."""
    if n - 2 < k:
        raise ValueError(f"need at least {k + 2} records to sample from, have {n}")
    lo, hi = (i, j) if i < j else (j, i)
    draw = rng.choice(n - 2, size=k, replace=False)
    draw = draw + (draw >= lo)
    draw = draw + (draw >= hi)
    return draw


class Adam:
    """Adam with bias-corrected moments; updates parameter data in place."""

    def __init__(self, params: list[ad.Tensor], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class SignatureTrainer:
    """Holds the in-training state: parameter tensors, caches, rng streams."""

    def __init__(
        self,
        dataset: Dataset,
        labels: LabelSet,
        config: TrainingConfig,
        table: EmbeddingTable | None = None,
    ):
        config.validate()
        if len(labels) < config.batch_size:
            raise ValueError(
                f"need at least batch_size={config.batch_size} labels, have {len(labels)}"
            )
        self.dataset = dataset
        self.config = config
        self.records: list[Record] = list(dataset.all_records())
        self.n = len(self.records)
        if self.n - 2 < config.negatives:
            raise ValueError(
                f"need at least negatives+2={config.negatives + 2} records, have {self.n}"
            )
        self.index_of = {r.record_id: k for k, r in enumerate(self.records)}
        self.pairs = [
            (self.index_of[a], self.index_of[b]) for a, b in labels.sorted_pairs()
        ]
        self.m = len(dataset.schema)
        self.presence = np.array(
            [[not v.is_missing for v in r.attributes] for r in self.records],
            dtype=bool,
        )

        seq = np.random.SeedSequence(config.seed)
        s_table, s_enc, s_batch, s_neg = seq.spawn(4)
        if table is None:
            table = EmbeddingTable(
                dim=config.embedding_dim,
                bucket_count=config.bucket_count,
                ngram_range=(config.ngram_min, config.ngram_max),
                seed=int(s_table.generate_state(1)[0]),
                trainable=True,
            )
        self.table = table
        enc_rng = np.random.Generator(np.random.PCG64(s_enc))
        self.encoders = [
            AttentionalEncoder.initialize(
                table.dim,
                config.hidden_size,
                config.rho_for(name, dataset.schema),
                enc_rng,
                max_tokens=config.max_tokens,
            )
            for name in dataset.schema
        ]
        self.rng_batch = np.random.Generator(np.random.PCG64(s_batch))
        self.rng_neg = np.random.Generator(np.random.PCG64(s_neg))

        self.emb_t = ad.Tensor(self.table.rows, requires_grad=self.table.trainable)
        self.enc_t = [encoder_tensors(e, requires_grad=True) for e in self.encoders]
        # (record, attribute) -> PreparedSequence, filled lazily
        self._prepared: dict[tuple[int, int], PreparedSequence] = {}

    def prepared(self, rec_idx: int, attr: int) -> PreparedSequence:
        key = (rec_idx, attr)
        got = self._prepared.get(key)
        if got is None:
            got = prepare_sequence(
                self.table,
                self.records[rec_idx].attributes[attr],
                self.config.max_tokens,
            )
            self._prepared[key] = got
        return got

    def applicable(self, rec_idx: int, active: np.ndarray) -> bool:
        """True when some positively weighted attribute is present."""
        return bool(self.presence[rec_idx, active].any())

    def batch_loss(
        self,
        w_t: ad.Tensor,
        usable: Sequence[int],
        pair_idx: list[tuple[int, int]],
        negatives: list[np.ndarray],
    ) -> tuple[ad.Tensor | None, int]:
        """Tape loss for one minibatch; None when the batch filters empty."""
        active = np.array(
            [j for j in usable if w_t.data[j] > 0.0], dtype=np.int64
        )
        if active.size == 0:
            return None, 0
        kept_pairs: list[tuple[int, int]] = []
        kept_negs: list[list[int]] = []
        for (a, b), negs in zip(pair_idx, negatives):
            if not (self.applicable(a, active) and self.applicable(b, active)):
                continue
            kept_pairs.append((a, b))
            kept_negs.append([u for u in negs if self.applicable(u, active)])
        if not kept_pairs:
            return None, 0

        needed: list[int] = []
        pos_of: dict[int, int] = {}
        for (a, b), negs in zip(kept_pairs, kept_negs):
            for r in (a, b, *negs):
                if r not in pos_of:
                    pos_of[r] = len(needed)
                    needed.append(r)

        sig = self._signatures_tape(w_t, usable, needed)
        sq = ad.tsum(ad.mul(sig, sig), axis=1, keepdims=True)
        norm = ad.sqrt(ad.add_const(sq, _NORM_GUARD))
        unit = ad.div(sig, norm)

        ia = np.array([pos_of[a] for a, _ in kept_pairs], dtype=np.int64)
        ib = np.array([pos_of[b] for _, b in kept_pairs], dtype=np.int64)
        cos_pos = ad.tsum(
            ad.mul(ad.take_rows(unit, ia), ad.take_rows(unit, ib)), axis=1
        )

        q_rows: list[int] = []
        u_rows: list[int] = []
        counts: list[int] = []
        for (a, b), negs in zip(kept_pairs, kept_negs):
            counts.append(len(negs))
            for u in negs:
                q_rows.extend((pos_of[a], pos_of[b]))
                u_rows.extend((pos_of[u], pos_of[u]))
        if q_rows:
            cos_neg = ad.tsum(
                ad.mul(
                    ad.take_rows(unit, np.array(q_rows, dtype=np.int64)),
                    ad.take_rows(unit, np.array(u_rows, dtype=np.int64)),
                ),
                axis=1,
            )
        else:
            cos_neg = None

        tau = self.config.temperature
        flat_offsets = np.zeros(len(counts) + 1, dtype=np.int64)
        np.cumsum(np.array(counts) * 2, out=flat_offsets[1:])
        by_count: dict[int, list[int]] = {}
        for p, c in enumerate(counts):
            by_count.setdefault(c, []).append(p)

        total: ad.Tensor | None = None
        for c, members in sorted(by_count.items()):
            sel = np.array(members, dtype=np.int64)
            pos_c = ad.reshape(ad.take_rows(ad.reshape(cos_pos, (-1, 1)), sel), (-1, 1))
            if c == 0:
                contrib = ad.scale(ad.tsum(pos_c), 0.0)  # log P = 0 exactly
            else:
                idx = np.stack(
                    [np.arange(flat_offsets[p], flat_offsets[p + 1]) for p in members]
                )
                neg_c = ad.take_rows(ad.reshape(cos_neg, (-1, 1)), idx.reshape(-1))
                neg_c = ad.reshape(neg_c, (len(members), 2 * c))
                scores = ad.scale(ad.concat([pos_c, neg_c], axis=1), 1.0 / tau)
                lse = ad.logsumexp(scores, axis=1)
                contrib = ad.sub(ad.tsum(ad.scale(pos_c, 1.0 / tau)), ad.tsum(lse))
            total = contrib if total is None else ad.add(total, contrib)
        loss = ad.scale(total, -1.0 / len(kept_pairs))
        return loss, len(kept_pairs)

    def _signatures_tape(
        self, w_t: ad.Tensor, usable: Sequence[int], rec_idx: list[int]
    ) -> ad.Tensor:
        """Signature vectors (len(rec_idx), d) under the current weights."""
        n_out = len(rec_idx)
        total: ad.Tensor | None = None
        for j in sorted(usable):
            rows = [k for k, r in enumerate(rec_idx) if self.presence[r, j]]
            if not rows:
                continue
            seqs = [self.prepared(rec_idx[k], j) for k in rows]
            encoded = encode_sequences_tape(
                self.emb_t,
                self.enc_t[j],
                self.encoders[j].smoothing_rho,
                self.config.hidden_size,
                seqs,
            )
            weighted = ad.mul(encoded, ad.reshape(w_t[j], (1, 1)))
            part = ad.scatter_rows(weighted, np.array(rows, dtype=np.int64), n_out)
            total = part if total is None else ad.add(total, part)
        if total is None:
            raise ValueError("no applicable attribute among the requested records")
        return total

    def signature_parameters(self, usable: Sequence[int], w_t: ad.Tensor) -> list[ad.Tensor]:
        params: list[ad.Tensor] = [w_t]
        for j in sorted(usable):
            params.extend(self.enc_t[j][name] for name in self.enc_t[j])
        if self.table.trainable:
            params.append(self.emb_t)
        return params

    def train(self) -> SignatureModel:
        cfg = self.config
        max_s = cfg.max_signatures if cfg.max_signatures is not None else self.m
        usable = set(range(self.m))
        rows: list[np.ndarray] = []
        for s in range(1, max_s + 1):
            w0 = project_weights(np.ones(self.m), sorted(usable))
            w_t = ad.Tensor(w0.copy(), requires_grad=True)
            params = self.signature_parameters(usable, w_t)
            opt = Adam(params, cfg.learning_rate, cfg.adam_betas, cfg.adam_eps)
            for t in range(1, cfg.iterations + 1):
                chosen = self.rng_batch.choice(
                    len(self.pairs), size=cfg.batch_size, replace=False
                )
                batch = [self.pairs[c] for c in chosen]
                negs = [
                    sample_negatives(self.n, a, b, cfg.negatives, self.rng_neg)
                    for a, b in batch
                ]
                loss, used = self.batch_loss(w_t, sorted(usable), batch, negs)
                if loss is None:
                    logger.warning(
                        "signature=%d step=%d skipped: batch empty after filtering", s, t
                    )
                    continue
                opt.zero_grad()
                ad.backward(loss)
                opt.step()
                w_t.data[...] = project_weights(w_t.data, sorted(usable))
                if t % cfg.log_every == 0 or t == cfg.iterations:
                    logger.info(
                        "signature=%d step=%d loss=%.6f pairs=%d usable=%d",
                        s,
                        t,
                        float(loss.data),
                        used,
                        len(usable),
                    )
            row = prune_support(w_t.data)
            rows.append(row)
            support = {int(j) for j in np.nonzero(row > 0)[0]}
            usable -= support
            logger.info(
                "signature=%d done support=%s remaining=%s",
                s,
                sorted(support),
                sorted(usable),
            )
            if not usable:
                break
        weights = SignatureWeights(np.stack(rows))
        return SignatureModel(
            schema=tuple(self.dataset.schema),
            table=self.table,
            encoders=self.encoders,
            weights=weights,
            seq_cell="lstm",
            config_snapshot=self.config.snapshot(),
        )


def train(
    dataset: Dataset,
    labels: LabelSet,
    config: TrainingConfig,
    table: EmbeddingTable | None = None,
) -> SignatureModel:
    """Learn encoders and signature weights from positive labels."""
    return SignatureTrainer(dataset, labels, config, table).train()


def minibatch_loss(
    model: SignatureModel,
    pairs: list[tuple[str, str]],
    negatives: list[list[str]],
    s: int,
    dataset: Dataset,
    tau: float = 1.0,
) -> float:
    """Negative mean log selection probability for signature ``s``.

    Evaluated on a finished model; pairs whose signature is missing on
    either side are dropped, as are inapplicable negatives. Raises when
    everything filters out.
    """
    vectors: dict[str, np.ndarray | None] = {}

    def sig(rid: str) -> np.ndarray | None:
        if rid not in vectors:
            vectors[rid] = model.signature_vectors(dataset.get(rid))[s]
        return vectors[rid]

    logs: list[float] = []
    for (a, b), negs in zip(pairs, negatives):
        fa, fb = sig(a), sig(b)
        if fa is None or fb is None:
            continue
        neg_scores: list[float] = []
        for u in negs:
            fu = sig(u)
            if fu is None:
                continue
            neg_scores.append(cosine(fa, fu))
            neg_scores.append(cosine(fb, fu))
        p = selection_probability(cosine(fa, fb), neg_scores, tau)
        logs.append(math.log(p))
    if not logs:
        raise ValueError("batch empty after applicability filtering")
    return -sum(logs) / len(logs)
