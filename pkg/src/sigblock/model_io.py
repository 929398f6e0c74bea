"""Binary persistence for trained signature models.

The file is self-describing and round-trips byte-identically through
load followed by save. All floats are little-endian 32-bit. Layout::

    magic  6 bytes  b"SBMDL1"
    u16    version (currently 1)
    u32    attribute count m, then per attribute: u16 name length,
           UTF-8 name
    u32    dim, u32 bucket_count, u16 ngram_min, u16 ngram_max,
    u64    embedding seed, u8 trainable flag
    f32 x  bucket_count * dim embedding rows (row-major)
    u32    pretrained token count, then per token: u16 length, UTF-8
           token, dim x f32 vector
    u32    hidden units, u32 max tokens, u8 cell kind (1 = LSTM)
    per attribute: f32 attention-smoothing rho, then the seven
           parameter blocks (wx_f, wh_f, b_f, wx_b, wh_b, b_b, attn)
           as f32, shapes implied by dim and hidden
    u32    signature count S, then S * m f32 weight matrix (row-major)
    u32    JSON length, UTF-8 JSON training-config snapshot
           (keys sorted)

A version or magic mismatch fails loudly; nothing is reinterpreted.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import PARAM_NAMES, AttentionalEncoder
from .signatures import SignatureModel, SignatureWeights
from .text_embedding import EmbeddingTable

_MAGIC = b"SBMDL1"
_VERSION = 1
_CELL_KINDS = {"lstm": 1}
_CELL_NAMES = {v: k for k, v in _CELL_KINDS.items()}


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode("utf-8")


def _param_shapes(dim: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "wx_f": (dim, 4 * hidden),
        "wh_f": (hidden, 4 * hidden),
        "b_f": (4 * hidden,),
        "wx_b": (dim, 4 * hidden),
        "wh_b": (hidden, 4 * hidden),
        "b_b": (4 * hidden,),
        "attn": (2 * hidden,),
    }


def save_model(model: SignatureModel, path: str | Path) -> None:
    table = model.table
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<H", _VERSION))
        fh.write(struct.pack("<I", len(model.schema)))
        for name in model.schema:
            _write_str(fh, name)
        fh.write(
            struct.pack(
                "<IIHH",
                table.dim,
                table.bucket_count,
                table.ngram_range[0],
                table.ngram_range[1],
            )
        )
        fh.write(struct.pack("<QB", table.seed, int(table.trainable)))
        fh.write(table.rows.astype("<f4").tobytes())
        fh.write(struct.pack("<I", len(table.pretrained)))
        for token, vec in table.pretrained.items():
            _write_str(fh, token)
            fh.write(np.asarray(vec).astype("<f4").tobytes())
        hidden = model.encoders[0].hidden
        max_tokens = model.encoders[0].max_tokens
        fh.write(struct.pack("<IIB", hidden, max_tokens, _CELL_KINDS[model.seq_cell]))
        for enc in model.encoders:
            fh.write(struct.pack("<f", enc.smoothing_rho))
            for pname in PARAM_NAMES:
                fh.write(enc.params[pname].astype("<f4").tobytes())
        W = model.weights.matrix
        fh.write(struct.pack("<I", W.shape[0]))
        fh.write(W.astype("<f4").tobytes())
        blob = json.dumps(model.config_snapshot, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def _read_f32(fh, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    return (
        np.frombuffer(fh.read(4 * count), dtype="<f4")
        .astype(np.float64)
        .reshape(shape)
    )


def load_model(path: str | Path) -> SignatureModel:
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a model file (magic {magic!r})")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != _VERSION:
            raise ValueError(
                f"{path}: unsupported model version {version} (want {_VERSION})"
            )
        (m,) = struct.unpack("<I", fh.read(4))
        schema = tuple(_read_str(fh) for _ in range(m))
        dim, buckets, nmin, nmax = struct.unpack("<IIHH", fh.read(12))
        seed, trainable = struct.unpack("<QB", fh.read(9))
        rows = _read_f32(fh, (buckets, dim))
        (n_pre,) = struct.unpack("<I", fh.read(4))
        pretrained: dict[str, np.ndarray] = {}
        for _ in range(n_pre):
            token = _read_str(fh)
            pretrained[token] = _read_f32(fh, (dim,))
        table = EmbeddingTable(
            dim=dim,
            bucket_count=buckets,
            ngram_range=(nmin, nmax),
            seed=seed,
            trainable=bool(trainable),
            pretrained=pretrained,
            rows=rows,
        )
        hidden, max_tokens, cell = struct.unpack("<IIB", fh.read(9))
        if cell not in _CELL_NAMES:
            raise ValueError(f"{path}: unknown sequence cell kind {cell}")
        shapes = _param_shapes(dim, hidden)
        encoders = []
        for _ in range(m):
            (rho,) = struct.unpack("<f", fh.read(4))
            params = {p: _read_f32(fh, shapes[p]) for p in PARAM_NAMES}
            encoders.append(
                AttentionalEncoder(dim, hidden, float(rho), max_tokens, params)
            )
        (S,) = struct.unpack("<I", fh.read(4))
        W = _read_f32(fh, (S, m))
        (blob_len,) = struct.unpack("<I", fh.read(4))
        snapshot = json.loads(fh.read(blob_len).decode("utf-8"))
    return SignatureModel(
        schema=schema,
        table=table,
        encoders=encoders,
        weights=SignatureWeights(W),
        seq_cell=_CELL_NAMES[cell],
        config_snapshot=snapshot,
    )
