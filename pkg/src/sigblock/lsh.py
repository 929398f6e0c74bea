"""Cross-polytope LSH over unit vectors for sublinear cosine search.

A hash maps a unit vector to the signed standard-basis vector nearest
to its random rotation: rotate, take the coordinate of largest
magnitude, keep its sign. Each table composes ``hashes_per_table``
such hashes into one bucket key (AND-composition); a query probes its
own bucket in every table plus, per table, the ``multiprobe``
next-closest buckets obtained by flipping the hash component whose
winner margin is smallest to its runner-up axis. Candidates are then
re-ranked by exact cosine, so results are always a subset of a
brute-force scan at the same threshold.

Vectors are zero-padded to a power-of-two dimension before rotation,
which leaves cosines unchanged.

Index file layout (all integers little-endian)::

    magic  6 bytes  b"XPLSH1"
    u16    version (currently 1)
    u32    dim, u32 dim_padded, u32 tables, u32 hashes_per_table
    u32    multiprobe, u64 seed, u32 n_entries, u32 max_results (0 = auto)
    f32 x  tables * hashes_per_table * dim_padded^2   rotation matrices,
           row-major, table-major
    per entry: u16 id-length, UTF-8 id bytes, u32 signature_id,
           dim x f32 unit vector
    per table: u32 n_buckets, then per bucket: hashes_per_table x i32
           key components, u32 count, count x u32 entry indices
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

UNIT_TOL = 1e-6
_MAGIC = b"XPLSH1"
_VERSION = 1


def next_pow2(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with sign correction."""
    return random_rotations(dim, 1, rng)[0]


def random_rotations(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """(count, dim, dim) stack of independent random orthogonal matrices."""
    gauss = rng.standard_normal((count, dim, dim))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.einsum("kii->ki", r))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def pad_to(v: np.ndarray, dim_padded: int) -> np.ndarray:
    if v.shape[-1] == dim_padded:
        return v
    pad_width = [(0, 0)] * (v.ndim - 1) + [(0, dim_padded - v.shape[-1])]
    return np.pad(v, pad_width)


def hash_one(rotation: np.ndarray, v: np.ndarray) -> int:
    """Signed index of the rotated vector's dominant axis: +/-1..+/-d.

    Ties go to the smallest axis index, positive sign first; the zero
    vector has no dominant axis and is rejected.
    """
    u = rotation @ v
    mag = np.abs(u)
    j = int(np.argmax(mag))
    if mag[j] == 0.0:
        raise ValueError("cannot hash a zero vector")
    return (j + 1) if u[j] >= 0.0 else -(j + 1)


def _signed_top2(u: np.ndarray) -> tuple[int, int, float]:
    """(best, runner-up) signed axes and their score gap for one rotation."""
    mag = np.abs(u)
    j1 = int(np.argmax(mag))
    c1 = (j1 + 1) if u[j1] >= 0.0 else -(j1 + 1)
    if len(u) == 1:
        return c1, -c1, 2.0 * mag[j1]
    mag2 = mag.copy()
    mag2[j1] = -np.inf
    j2 = int(np.argmax(mag2))
    c2 = (j2 + 1) if u[j2] >= 0.0 else -(j2 + 1)
    return c1, c2, float(mag[j1] - mag[j2])


@dataclass
class LshParams:
    tables: int = 10  # K independent tables
    hashes_per_table: int = 2  # B composed hashes per bucket key
    multiprobe: int = 1  # extra buckets probed per table
    seed: int = 0
    max_results: int | None = None  # None: max(1000, floor(sqrt(n_indexed)))

    def validate(self) -> None:
        if self.tables <= 0 or self.hashes_per_table <= 0:
            raise ValueError("tables and hashes_per_table must be positive")
        if self.multiprobe < 0:
            raise ValueError("multiprobe must be nonnegative")
        if self.max_results is not None and self.max_results <= 0:
            raise ValueError("max_results must be positive when set")


@dataclass
class LshTheoryParams:
    """Threshold pair mapped to the Euclidean guarantee parameters."""

    theta: float
    theta_prime: float

    def __post_init__(self):
        if not (-1.0 < self.theta_prime < self.theta < 1.0):
            raise ValueError("need -1 < theta_prime < theta < 1")

    @property
    def rho(self) -> float:
        return rho_exponent(self.theta, self.theta_prime)

    @property
    def euclid_r(self) -> float:
        return cosine_to_euclidean(self.theta)

    @property
    def factor_c(self) -> float:
        return approx_factor(self.theta, self.theta_prime)

    @property
    def failure_bound(self) -> float:
        return 1.0 / 3.0 + 1.0 / np.e


def rho_exponent(theta: float, theta_prime: float) -> float:
    """Query-time exponent for the (theta, theta_prime) guarantee.

    The vanishing correction term of the underlying bound is reported
    as zero.
    """
    if not (-1.0 < theta_prime < theta < 1.0):
        raise ValueError("need -1 < theta_prime < theta < 1")
    return (1.0 - theta) / (1.0 - theta_prime) * (1.0 + theta_prime) / (1.0 + theta)


def cosine_to_euclidean(theta: float) -> float:
    """Distance between unit vectors at cosine ``theta``."""
    if not (-1.0 < theta <= 1.0):
        raise ValueError("theta must lie in (-1, 1]")
    return float(np.sqrt(max(2.0 - 2.0 * theta, 0.0)))


def approx_factor(theta: float, theta_prime: float) -> float:
    if not (-1.0 < theta_prime < theta < 1.0):
        raise ValueError("need -1 < theta_prime < theta < 1")
    return float(np.sqrt((1.0 - theta_prime) / (1.0 - theta)))


class LshIndex:
    """Immutable multi-table index over unit vectors tagged (id, signature)."""

    def __init__(
        self,
        dim: int,
        params: LshParams,
        rotations: np.ndarray,
        entries: list[tuple[str, int]],
        vectors: np.ndarray,
        tables: list[dict[tuple[int, ...], list[int]]],
    ):
        self.dim = dim
        self.dim_padded = rotations.shape[-1]
        self.params = params
        self.rotations = rotations  # (tables, hashes_per_table, dp, dp)
        self.entries = entries
        self.vectors = vectors  # (n, dim) unit rows
        self.tables = tables

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def default_max_results(self) -> int:
        if self.params.max_results is not None:
            return self.params.max_results
        return max(1000, int(np.sqrt(len(self.entries)))) if self.entries else 1000

    @classmethod
    def build(
        cls,
        items: Iterable[tuple[str, int, np.ndarray]],
        dim: int,
        params: LshParams | None = None,
    ) -> "LshIndex":
        """Index (record_id, signature_id, unit vector) triples."""
        params = params or LshParams()
        params.validate()
        entries: list[tuple[str, int]] = []
        seen: set[tuple[str, int]] = set()
        vec_rows: list[np.ndarray] = []
        for rid, sig, vec in items:
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dim,):
                raise ValueError(f"vector for {rid!r} has shape {vec.shape}, want ({dim},)")
            if abs(np.linalg.norm(vec) - 1.0) > UNIT_TOL:
                raise ValueError(f"vector for id {rid!r} is not unit norm")
            key = (rid, sig)
            if key in seen:
                raise ValueError(f"duplicate entry ({rid!r}, {sig})")
            seen.add(key)
            entries.append(key)
            vec_rows.append(vec)
        dp = next_pow2(dim)
        rng = np.random.Generator(np.random.PCG64(params.seed))
        rotations = random_rotations(dp, params.tables * params.hashes_per_table, rng)
        rotations = rotations.reshape(params.tables, params.hashes_per_table, dp, dp)
        vectors = (
            np.stack(vec_rows) if vec_rows else np.zeros((0, dim), dtype=np.float64)
        )
        tables: list[dict[tuple[int, ...], list[int]]] = []
        if len(entries) == 0:
            tables = [dict() for _ in range(params.tables)]
            return cls(dim, params, rotations, entries, vectors, tables)
        padded = pad_to(vectors, dp)
        for k in range(params.tables):
            comps = np.empty((len(entries), params.hashes_per_table), dtype=np.int64)
            for b in range(params.hashes_per_table):
                u = padded @ rotations[k, b].T
                j = np.argmax(np.abs(u), axis=1)
                sign = np.where(u[np.arange(len(u)), j] >= 0.0, 1, -1)
                comps[:, b] = sign * (j + 1)
            table: dict[tuple[int, ...], list[int]] = {}
            for idx in range(len(entries)):
                key = tuple(int(c) for c in comps[idx])
                table.setdefault(key, []).append(idx)
            tables.append(table)
        return cls(dim, params, rotations, entries, vectors, tables)

    def _probe_keys(self, q_padded: np.ndarray) -> list[list[tuple[int, ...]]]:
        """Primary bucket key plus multiprobe alternatives, per table."""
        out: list[list[tuple[int, ...]]] = []
        for k in range(self.params.tables):
            best: list[int] = []
            second: list[int] = []
            gaps: list[float] = []
            for b in range(self.params.hashes_per_table):
                c1, c2, gap = _signed_top2(self.rotations[k, b] @ q_padded)
                best.append(c1)
                second.append(c2)
                gaps.append(gap)
            keys = [tuple(best)]
            order = np.argsort(gaps, kind="stable")
            for b in order[: self.params.multiprobe]:
                alt = list(best)
                alt[b] = second[b]
                keys.append(tuple(alt))
            out.append(keys)
        return out

    def query(
        self,
        q: np.ndarray,
        theta: float,
        max_results: int | None = None,
        signature: int | None = None,
    ) -> list[tuple[str, int, float]]:
        """(record_id, signature_id, cosine) hits with cosine >= theta.

        Candidates are the union of the probed buckets across all
        tables, re-ranked by exact cosine and truncated to the
        ``max_results`` best. When the index mixes several signatures,
        pass ``signature`` to restrict hits to one of them.
        """
        q = np.asarray(q, dtype=np.float64)
        if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
            raise ValueError("query vector is not unit norm")
        if max_results is None:
            max_results = self.default_max_results
        qp = pad_to(q, self.dim_padded)
        cand: set[int] = set()
        for k, keys in enumerate(self._probe_keys(qp)):
            table = self.tables[k]
            for key in keys:
                bucket = table.get(key)
                if bucket:
                    cand.update(bucket)
        if not cand:
            return []
        idx = np.fromiter(cand, dtype=np.int64, count=len(cand))
        idx.sort()
        if signature is not None:
            mask = np.array([self.entries[i][1] == signature for i in idx])
            idx = idx[mask]
            if idx.size == 0:
                return []
        cos = self.vectors[idx] @ q
        keep = cos >= theta
        hits = [
            (self.entries[i][0], self.entries[i][1], float(c))
            for i, c in zip(idx[keep], cos[keep])
        ]
        hits.sort(key=lambda h: (-h[2], h[0], h[1]))
        return hits[:max_results]

    # -- persistence ---------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<H", _VERSION))
            fh.write(
                struct.pack(
                    "<IIII",
                    self.dim,
                    self.dim_padded,
                    self.params.tables,
                    self.params.hashes_per_table,
                )
            )
            fh.write(struct.pack("<IQ", self.params.multiprobe, self.params.seed))
            fh.write(
                struct.pack(
                    "<II",
                    len(self.entries),
                    0 if self.params.max_results is None else self.params.max_results,
                )
            )
            fh.write(self.rotations.astype("<f4").tobytes())
            for (rid, sig), vec in zip(self.entries, self.vectors):
                raw = rid.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", sig))
                fh.write(vec.astype("<f4").tobytes())
            for table in self.tables:
                fh.write(struct.pack("<I", len(table)))
                for key, bucket in table.items():
                    fh.write(struct.pack(f"<{len(key)}i", *key))
                    fh.write(struct.pack("<I", len(bucket)))
                    fh.write(struct.pack(f"<{len(bucket)}I", *bucket))

    @classmethod
    def load(cls, path: str | Path) -> "LshIndex":
        with open(path, "rb") as fh:
            magic = fh.read(6)
            if magic != _MAGIC:
                raise ValueError(f"{path}: not an index file (magic {magic!r})")
            (version,) = struct.unpack("<H", fh.read(2))
            if version != _VERSION:
                raise ValueError(
                    f"{path}: unsupported index version {version} (want {_VERSION})"
                )
            dim, dp, tables_n, hashes = struct.unpack("<IIII", fh.read(16))
            multiprobe, seed = struct.unpack("<IQ", fh.read(12))
            n_entries, max_results = struct.unpack("<II", fh.read(8))
            params = LshParams(
                tables=tables_n,
                hashes_per_table=hashes,
                multiprobe=multiprobe,
                seed=seed,
                max_results=max_results or None,
            )
            count = tables_n * hashes * dp * dp
            rotations = np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float64)
            rotations = rotations.reshape(tables_n, hashes, dp, dp)
            entries: list[tuple[str, int]] = []
            vectors = np.empty((n_entries, dim), dtype=np.float64)
            for i in range(n_entries):
                (id_len,) = struct.unpack("<H", fh.read(2))
                rid = fh.read(id_len).decode("utf-8")
                (sig,) = struct.unpack("<I", fh.read(4))
                entries.append((rid, sig))
                vectors[i] = np.frombuffer(fh.read(4 * dim), dtype="<f4")
            tables: list[dict[tuple[int, ...], list[int]]] = []
            for _ in range(tables_n):
                (n_buckets,) = struct.unpack("<I", fh.read(4))
                table: dict[tuple[int, ...], list[int]] = {}
                for _ in range(n_buckets):
                    key = struct.unpack(f"<{hashes}i", fh.read(4 * hashes))
                    (cnt,) = struct.unpack("<I", fh.read(4))
                    bucket = list(struct.unpack(f"<{cnt}I", fh.read(4 * cnt)))
                    table[key] = bucket
                tables.append(table)
        return cls(dim, params, rotations, entries, vectors, tables)
