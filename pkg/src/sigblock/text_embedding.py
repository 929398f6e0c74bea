"""Token embeddings from hashed character n-grams.

A token is wrapped in ``<`` ``>`` boundary markers and decomposed into
character n-grams; each n-gram is hashed (64-bit FNV-1a) into a fixed
bucket table and the token vector is the sum of the bucket rows. Every
string therefore maps to a finite vector, with no out-of-vocabulary
sentinel, and near-identical spellings share most of their rows.

Optionally a table can carry pretrained word vectors loaded from a text
file; mapped tokens return their pretrained vector unchanged while
unseen tokens fall back to the hashed n-gram sum.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: str, seed: int = 0) -> int:
    """64-bit FNV-1a over the UTF-8 bytes, mixed with a fixed seed."""
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for byte in data.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def ngrams(token: str, min_n: int, max_n: int) -> list[str]:
    """Boundary-marked character n-grams plus the whole wrapped token.

    The wrapped token is appended once; duplicates (for tokens shorter
    than ``min_n``) are dropped while preserving first-seen order.
    """
    if min_n > max_n:
        raise ValueError(f"min_n={min_n} exceeds max_n={max_n}")
    wrapped = f"<{token}>"
    out: list[str] = []
    seen: set[str] = set()
    for n in range(min_n, max_n + 1):
        for i in range(len(wrapped) - n + 1):
            gram = wrapped[i : i + n]
            if gram not in seen:
                seen.add(gram)
                out.append(gram)
    if wrapped not in seen:
        out.append(wrapped)
    return out


class EmbeddingTable:
    """Hashed n-gram bucket rows with an optional pretrained token map."""

    def __init__(
        self,
        dim: int,
        bucket_count: int = 2**16,
        ngram_range: tuple[int, int] = (3, 5),
        seed: int = 0,
        trainable: bool = True,
        pretrained: dict[str, np.ndarray] | None = None,
        rows: np.ndarray | None = None,
    ):
        if dim <= 0:
            raise ValueError("dim must be positive")
        if bucket_count & (bucket_count - 1) != 0 or bucket_count <= 0:
            raise ValueError("bucket_count must be a power of two")
        self.dim = dim
        self.bucket_count = bucket_count
        self.ngram_range = ngram_range
        self.seed = seed
        self.trainable = trainable
        self.pretrained = pretrained or {}
        if rows is None:
            rng = np.random.Generator(np.random.PCG64(seed))
            rows = rng.uniform(-1.0 / dim, 1.0 / dim, size=(bucket_count, dim))
        self.rows = np.asarray(rows, dtype=np.float64)
        if self.rows.shape != (bucket_count, dim):
            raise ValueError(
                f"rows shape {self.rows.shape} != ({bucket_count}, {dim})"
            )
        self._bucket_cache: dict[str, np.ndarray] = {}

    def bucket_ids(self, token: str) -> np.ndarray:
        """Bucket index per n-gram of the token (cached per token string)."""
        ids = self._bucket_cache.get(token)
        if ids is None:
            mask = self.bucket_count - 1
            ids = np.array(
                [fnv1a64(g, self.seed) & mask for g in ngrams(token, *self.ngram_range)],
                dtype=np.int64,
            )
            self._bucket_cache[token] = ids
        return ids

    def embed(self, token: str) -> np.ndarray:
        """d-vector for a token: pretrained if mapped, else hashed n-gram sum."""
        vec = self.pretrained.get(token)
        if vec is not None:
            return vec
        return self.rows[self.bucket_ids(token)].sum(axis=0)


def load_pretrained(
    path: str | Path,
    bucket_count: int = 2**16,
    ngram_range: tuple[int, int] = (3, 5),
    seed: int = 0,
) -> EmbeddingTable:
    """Load ``token v1 .. vd`` lines into a frozen table with hashed fallback.

    The dimension is fixed by the first line; a line with a different
    float count raises with its line number. Out-of-vocabulary tokens
    still embed through the (untrained, frozen) hashed rows.
    """
    path = Path(path)
    pretrained: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                if line.strip() == "":
                    continue
                raise ValueError(f"{path}: line {lineno}: expected token and floats")
            token = parts[0]
            try:
                vec = np.array([float(x) for x in parts[1:] if x != ""], dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric vector entry") from None
            if dim is None:
                dim = len(vec)
                if dim == 0:
                    raise ValueError(f"{path}: line {lineno}: empty vector")
            elif len(vec) != dim:
                raise ValueError(
                    f"{path}: line {lineno}: dimension {len(vec)} != {dim}"
                )
            pretrained[token] = vec
    if dim is None:
        raise ValueError(f"{path}: no vectors")
    return EmbeddingTable(
        dim=dim,
        bucket_count=bucket_count,
        ngram_range=ngram_range,
        seed=seed,
        trainable=False,
        pretrained=pretrained,
    )
