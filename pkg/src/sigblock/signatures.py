"""Tuple signatures and the max-cosine tuple similarity.

A signature is a nonnegative, unit-norm weighting over attributes; the
signature vector of a record is the weighted sum of its non-missing
attribute embeddings and is missing when no positively-weighted
attribute is present. Records are compared by the maximum cosine over
their signature pairs, with missing or zero-norm signatures scoring
zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, Record
from .encoder import AttentionalEncoder, encode_attribute
from .text_embedding import EmbeddingTable

SUPPORT_EPS = 1e-3


@dataclass
class SignatureWeights:
    """Rows of attribute weights, one per signature; supports are disjoint
    after sequential training."""

    matrix: np.ndarray  # (S, m) nonnegative, unit-norm rows

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("weight matrix must be (S, m)")

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    def support(self, s: int) -> tuple[int, ...]:
        return tuple(int(j) for j in np.nonzero(self.matrix[s] > 0)[0])


def prune_support(row: np.ndarray, eps: float = SUPPORT_EPS) -> np.ndarray:
    """Zero entries at or below ``eps`` and renormalize to unit L2 norm."""
    out = np.where(row > eps, row, 0.0)
    peak = out.max()
    if peak <= 0.0:
        raise ValueError("pruning removed every entry of a signature row")
    out = out / peak  # pre-scale so squaring cannot underflow
    return out / np.linalg.norm(out)


def compute_signature(
    weights_row: np.ndarray, attribute_embeddings: list[np.ndarray | None]
) -> np.ndarray | None:
    """Weighted sum over non-missing attributes; None when nothing applies."""
    acc: np.ndarray | None = None
    for w, g in zip(weights_row, attribute_embeddings):
        if g is None or w == 0.0:
            continue
        acc = w * g if acc is None else acc + w * g
    return acc


def cosine(f: np.ndarray | None, g: np.ndarray | None) -> float:
    """Cosine similarity; zero when either side is missing or zero-norm."""
    if f is None or g is None:
        return 0.0
    nf = np.linalg.norm(f)
    ng = np.linalg.norm(g)
    if nf == 0.0 or ng == 0.0:
        return 0.0
    return float(np.dot(f, g) / (nf * ng))


@dataclass
class SignatureModel:
    """Everything needed to map records to signature vectors.

    ``seq_cell`` records the gated-cell flavor used by the encoders so
    persisted models are self-describing.
    """

    schema: tuple[str, ...]
    table: EmbeddingTable
    encoders: list[AttentionalEncoder]
    weights: SignatureWeights
    seq_cell: str = "lstm"
    config_snapshot: dict = field(default_factory=dict)

    @property
    def num_signatures(self) -> int:
        return self.weights.count

    def attribute_embeddings(self, record: Record) -> list[np.ndarray | None]:
        return [
            encode_attribute(enc, self.table, value)
            for enc, value in zip(self.encoders, record.attributes)
        ]

    def signature_vectors(self, record: Record) -> list[np.ndarray | None]:
        embeddings = self.attribute_embeddings(record)
        return [
            compute_signature(self.weights.matrix[s], embeddings)
            for s in range(self.weights.count)
        ]

    def tuple_similarity(self, x: Record, y: Record) -> float:
        """Maximum cosine over aligned signature pairs."""
        fx = self.signature_vectors(x)
        fy = self.signature_vectors(y)
        return max(cosine(a, b) for a, b in zip(fx, fy))

    def validate_schema(self, dataset: Dataset) -> None:
        if tuple(dataset.schema) != tuple(self.schema):
            missing = [a for a in self.schema if a not in dataset.schema]
            extra = [a for a in dataset.schema if a not in self.schema]
            raise ValueError(
                "dataset schema does not match model schema"
                f" (model-only: {missing}, dataset-only: {extra})"
            )
