"""Candidate-pair generation by signature-wise nearest-neighbor search.

For every signature, all records carrying that signature are indexed
(the larger table in bipartite mode) and every record of the query
side retrieves its neighbors above the cosine threshold; the union of
the per-signature pair sets, deduplicated and canonicalized, is the
candidate set. A brute-force variant computes the exact max-cosine
similarity for every pair and serves as the recall oracle for the
hashed path.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data_model import Dataset, Record, canonical_pair
from .encoder import encode_sequences_tape, encoder_tensors, prepare_sequence
from .lsh import LshIndex, LshParams
from .signatures import SignatureModel


@dataclass(frozen=True)
class CandidateSet:
    """Canonical record-id pairs, optionally annotated with the best
    (signature, cosine) that produced each pair."""

    pairs: frozenset[tuple[str, str]]
    provenance: dict[tuple[str, str], tuple[int, float]] | None = None

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return canonical_pair(*pair) in self.pairs

    def sorted_pairs(self) -> list[tuple[str, str]]:
        return sorted(self.pairs)


def signature_matrix(
    model: SignatureModel, records: list[Record]
) -> tuple[np.ndarray, np.ndarray]:
    """Signature vectors for many records at once.

    Returns ``(vectors, present)`` with shapes (n, S, d) and (n, S);
    rows of absent signatures are zero. Uses the batched encoder path
    without gradient recording.
    """
    n = len(records)
    m = len(model.schema)
    dim = model.table.dim
    weights = model.weights.matrix
    S = weights.shape[0]
    emb_t = ad.Tensor(model.table.rows)
    attr_emb = np.zeros((n, m, dim))
    present = np.zeros((n, m), dtype=bool)
    for j in range(m):
        enc = model.encoders[j]
        enc_t = encoder_tensors(enc, requires_grad=False)
        rows: list[int] = []
        seqs = []
        for i, rec in enumerate(records):
            prep = prepare_sequence(model.table, rec.attributes[j], enc.max_tokens)
            if prep is None:
                continue
            rows.append(i)
            seqs.append(prep)
        if not rows:
            continue
        encoded = encode_sequences_tape(
            emb_t, enc_t, enc.smoothing_rho, enc.hidden, seqs
        )
        attr_emb[np.array(rows), j] = encoded.data
        present[np.array(rows), j] = True

    sig = np.einsum("sj,njd->nsd", weights, attr_emb * present[:, :, None])
    sig_present = (present[:, None, :] & (weights > 0)[None, :, :]).any(axis=2)
    return sig, sig_present


def _normalized(
    sig: np.ndarray, sig_present: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(sig, axis=2)
    ok = sig_present & (norms > 0)
    out = np.zeros_like(sig)
    np.divide(sig, norms[:, :, None], out=out, where=ok[:, :, None])
    return out, ok


def block(
    dataset: Dataset,
    model: SignatureModel,
    theta: float,
    lsh_params: LshParams | None = None,
    keep_provenance: bool = True,
    workers: int = 1,
) -> CandidateSet:
    """Hashed nearest-neighbor blocking over all signatures.

    ``workers`` fans the per-record queries out over a thread pool; the
    index is immutable during queries and results merge in record
    order, so any worker count produces identical output.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    model.validate_schema(dataset)
    lsh_params = lsh_params or LshParams()

    if dataset.is_bipartite:
        big, small = dataset.tables
        if len(big) < len(small):
            big, small = small, big
        index_records = list(big)
        query_records = list(small)
    else:
        index_records = list(dataset.all_records())
        query_records = index_records

    idx_sig, idx_ok = _normalized(*signature_matrix(model, index_records))
    if dataset.is_bipartite:
        q_sig, q_ok = _normalized(*signature_matrix(model, query_records))
    else:
        q_sig, q_ok = idx_sig, idx_ok

    S = model.num_signatures
    max_results = max(1000, int(np.sqrt(len(index_records))))
    if lsh_params.max_results is not None:
        max_results = lsh_params.max_results
    best: dict[tuple[str, str], tuple[int, float]] = {}
    for s in range(S):
        items = [
            (rec.record_id, s, idx_sig[i, s])
            for i, rec in enumerate(index_records)
            if idx_ok[i, s]
        ]
        if not items:
            continue
        index = LshIndex.build(items, model.table.dim, lsh_params)
        queries = [
            (rec.record_id, q_sig[i, s])
            for i, rec in enumerate(query_records)
            if q_ok[i, s]
        ]

        def run_query(entry):
            rid, vec = entry
            return rid, index.query(vec, theta, max_results)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(run_query, queries))
        else:
            results = [run_query(q) for q in queries]
        for query_id, hits in results:
            for rid, _, cos in hits:
                if rid == query_id:
                    continue
                pair = canonical_pair(query_id, rid)
                prev = best.get(pair)
                if prev is None or cos > prev[1]:
                    best[pair] = (s, cos)
    provenance = best if keep_provenance else None
    return CandidateSet(frozenset(best), provenance)


def block_brute_force(
    dataset: Dataset, model: SignatureModel, theta: float, chunk: int = 512
) -> CandidateSet:
    """Exact max-cosine blocking; the oracle the hashed path is judged by."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    model.validate_schema(dataset)
    if dataset.is_bipartite:
        index_records = list(dataset.tables[0])
        query_records = list(dataset.tables[1])
        idx_sig, idx_ok = _normalized(*signature_matrix(model, index_records))
        q_sig, q_ok = _normalized(*signature_matrix(model, query_records))
    else:
        index_records = list(dataset.all_records())
        query_records = index_records
        idx_sig, idx_ok = _normalized(*signature_matrix(model, index_records))
        q_sig, q_ok = idx_sig, idx_ok

    S = model.num_signatures
    best: dict[tuple[str, str], tuple[int, float]] = {}
    ids_index = [r.record_id for r in index_records]
    ids_query = [r.record_id for r in query_records]
    for s in range(S):
        I = idx_sig[:, s]  # (n_i, d)
        for lo in range(0, len(query_records), chunk):
            hi = min(lo + chunk, len(query_records))
            cos = q_sig[lo:hi, s] @ I.T
            cos *= q_ok[lo:hi, s][:, None]
            cos *= idx_ok[:, s][None, :]
            qi, ii = np.nonzero(cos >= theta)
            for a, b in zip(qi, ii):
                rid_q = ids_query[lo + a]
                rid_i = ids_index[b]
                if rid_q == rid_i:
                    continue
                pair = canonical_pair(rid_q, rid_i)
                c = float(cos[a, b])
                prev = best.get(pair)
                if prev is None or c > prev[1]:
                    best[pair] = (s, c)
    return CandidateSet(frozenset(best), best)


def pe_ratio(candidates: CandidateSet, dataset: Dataset) -> float:
    """Candidate pairs per record."""
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    return len(candidates.pairs) / dataset.n


def write_candidates(
    candidates: CandidateSet, path: str | Path, with_provenance: bool | None = None
) -> None:
    """Sorted candidate CSV; provenance columns written when available."""
    if with_provenance is None:
        with_provenance = candidates.provenance is not None
    if with_provenance and candidates.provenance is None:
        raise ValueError("candidate set carries no provenance")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if with_provenance:
            writer.writerow(["id_a", "id_b", "signature_id", "cosine"])
            for a, b in candidates.sorted_pairs():
                s, cos = candidates.provenance[(a, b)]
                writer.writerow([a, b, s, repr(cos)])
        else:
            writer.writerow(["id_a", "id_b"])
            for a, b in candidates.sorted_pairs():
                writer.writerow([a, b])


def read_candidates(path: str | Path) -> CandidateSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["id_a", "id_b"]:
        raise ValueError(f"{path}: expected candidate CSV with id_a,id_b header")
    has_prov = len(rows[0]) >= 4
    pairs: set[tuple[str, str]] = set()
    provenance: dict[tuple[str, str], tuple[int, float]] = {}
    for row in rows[1:]:
        pair = canonical_pair(row[0], row[1])
        pairs.add(pair)
        if has_prov and len(row) >= 4:
            provenance[pair] = (int(row[2]), float(row[3]))
    return CandidateSet(frozenset(pairs), provenance if has_prov else None)
