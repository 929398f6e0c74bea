"""Splits, metrics, synthetic corpora, and multi-run reporting.

Splitting keeps every connected group of labeled records on one side:
the label graph's components are shuffled and assigned to the training
side until it holds the requested fraction of label pairs. The training
record set adds a slice of the unlabeled records; all remaining records
go to the test side along with the test-label records.

The synthetic generator builds entities from pseudo-word templates and
corrupts each duplicate independently: character-level typos, dropped
tokens, blanked attributes, value swaps between a designated confusable
attribute pair, and bracketed version strings appended to the primary
attribute. The primary attribute is never blanked. Ground truth is the
set of all within-entity pairs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .blocking import CandidateSet
from .data_model import (
    AttributeValue,
    Dataset,
    LabelSet,
    Record,
    Table,
    canonical_pair,
)

_SYLLABLES = (
    "ba be bi bo bu da de di do du fa fe fi fo fu ga ge gi go gu "
    "ka ke ki ko ku la le li lo lu ma me mi mo mu na ne ni no nu "
    "pa pe pi po pu ra re ri ro ru sa se si so su ta te ti to tu "
    "va ve vi vo vu za ze zi zo zu"
).split()

_VERSION_SUFFIXES = (
    ("[", "remix", "]"),
    ("(", "live", ")"),
    ("[", "remastered", "]"),
    ("(", "deluxe", "edition", ")"),
    ("[", "radio", "edit", "]"),
)


@dataclass
class SplitSpec:
    train_fraction: float = 0.8
    repeats: int = 5
    seed: int = 0
    unlabeled_train_fraction: float = 0.2

    def validate(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not 0.0 <= self.unlabeled_train_fraction <= 1.0:
            raise ValueError("unlabeled_train_fraction must lie in [0, 1]")


@dataclass
class Split:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    train_labels: LabelSet
    test_labels: LabelSet


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        parent = self.parent
        if x not in parent:
            parent[x] = x
            return x
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def label_components(labels: LabelSet) -> list[list[str]]:
    """Connected components of the label graph, each sorted, ordered by
    smallest member."""
    uf = _UnionFind()
    for a, b in labels.sorted_pairs():
        uf.union(a, b)
    groups: dict[str, list[str]] = {}
    for rid in sorted(labels.record_ids()):
        groups.setdefault(uf.find(rid), []).append(rid)
    return sorted(groups.values(), key=lambda g: g[0])


def split(labels: LabelSet, dataset: Dataset, spec: SplitSpec) -> list[Split]:
    """Independent component-level train/test splits, one per repeat."""
    spec.validate()
    components = label_components(labels)
    pair_count: dict[int, int] = {}
    comp_of: dict[str, int] = {}
    for k, comp in enumerate(components):
        for rid in comp:
            comp_of[rid] = k
        pair_count[k] = 0
    for a, _b in labels.sorted_pairs():
        pair_count[comp_of[a]] += 1
    labeled_ids = labels.record_ids()
    unlabeled = sorted(
        r.record_id for r in dataset.all_records() if r.record_id not in labeled_ids
    )
    total_pairs = len(labels)
    seq = np.random.SeedSequence(spec.seed)
    out: list[Split] = []
    for child in seq.spawn(spec.repeats):
        rng = np.random.Generator(np.random.PCG64(child))
        order = rng.permutation(len(components))
        train_comps: set[int] = set()
        covered = 0
        for k in order:
            if covered >= spec.train_fraction * total_pairs:
                break
            train_comps.add(int(k))
            covered += pair_count[int(k)]
        train_pairs = frozenset(
            p for p in labels.pairs if comp_of[p[0]] in train_comps
        )
        test_pairs = labels.pairs - train_pairs
        train_ids = sorted(
            {rid for p in train_pairs for rid in p}
        )
        n_extra = int(round(spec.unlabeled_train_fraction * len(unlabeled)))
        extra_idx = rng.choice(len(unlabeled), size=n_extra, replace=False) if n_extra else []
        extra = sorted(unlabeled[int(i)] for i in extra_idx)
        train_all = tuple(sorted(set(train_ids) | set(extra)))
        test_label_ids = {rid for p in test_pairs for rid in p}
        leftover = set(unlabeled) - set(extra)
        test_all = tuple(sorted(test_label_ids | leftover))
        out.append(
            Split(
                train_ids=train_all,
                test_ids=test_all,
                train_labels=LabelSet(train_pairs),
                test_labels=LabelSet(frozenset(test_pairs)),
            )
        )
    return out


def recall(candidates: CandidateSet, test_labels: LabelSet) -> float:
    """Fraction of test label pairs present among the candidates."""
    if len(test_labels) == 0:
        raise ValueError("test label set is empty")
    hit = sum(1 for p in test_labels.pairs if p in candidates.pairs)
    return hit / len(test_labels)


@dataclass
class SynthSpec:
    entity_count: int
    duplicates_per_entity: int = 2
    regime: str = "dirty"  # clean | dirty | unstructured
    typo_rate: float = 0.0
    token_drop_rate: float = 0.0
    missing_attr_rate: float = 0.0
    attr_swap_rate: float = 0.0
    version_suffix_rate: float = 0.0

    def validate(self) -> None:
        if self.entity_count < 1 or self.duplicates_per_entity < 0:
            raise ValueError("entity_count >= 1 and duplicates_per_entity >= 0 required")
        if self.regime not in ("clean", "dirty", "unstructured"):
            raise ValueError(f"unknown regime {self.regime!r}")
        for name in (
            "typo_rate",
            "token_drop_rate",
            "missing_attr_rate",
            "attr_swap_rate",
            "version_suffix_rate",
        ):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


_SCHEMA = ("title", "album", "composer", "writer")
_CONFUSABLE = (2, 3)  # composer <-> writer
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _make_word(rng: np.random.Generator) -> str:
    n = int(rng.integers(2, 5))
    return "".join(_SYLLABLES[int(i)] for i in rng.integers(0, len(_SYLLABLES), n))


def _make_vocab(rng: np.random.Generator, size: int) -> list[str]:
    vocab: list[str] = []
    seen: set[str] = set()
    while len(vocab) < size:
        w = _make_word(rng)
        if w not in seen:
            seen.add(w)
            vocab.append(w)
    return vocab


def _phrase(rng: np.random.Generator, vocab: list[str], lo: int, hi: int) -> tuple[str, ...]:
    n = int(rng.integers(lo, hi + 1))
    return tuple(vocab[int(i)] for i in rng.integers(0, len(vocab), n))


def _typo(token: str, rng: np.random.Generator) -> str:
    ops = ["sub", "ins"] + (["del", "swap"] if len(token) >= 2 else [])
    op = ops[int(rng.integers(0, len(ops)))]
    i = int(rng.integers(0, len(token)))
    if op == "sub":
        old = token[i]
        choices = [c for c in _LETTERS if c != old]
        return token[:i] + choices[int(rng.integers(0, len(choices)))] + token[i + 1 :]
    if op == "ins":
        c = _LETTERS[int(rng.integers(0, len(_LETTERS)))]
        return token[:i] + c + token[i:]
    if op == "del":
        return token[:i] + token[i + 1 :]
    j = min(i, len(token) - 2)
    return token[:j] + token[j + 1] + token[j] + token[j + 2 :]


def _corrupt(
    attrs: list[tuple[str, ...]], spec: SynthSpec, rng: np.random.Generator
) -> list[tuple[str, ...]]:
    out = [tuple(a) for a in attrs]
    a, b = _CONFUSABLE
    if rng.random() < spec.attr_swap_rate:
        out[a], out[b] = out[b], out[a]
    for j in range(1, len(out)):  # the primary attribute is never blanked
        if out[j] and rng.random() < spec.missing_attr_rate:
            out[j] = ()
    for j, tokens in enumerate(out):
        if not tokens:
            continue
        tokens = list(tokens)
        if rng.random() < spec.typo_rate:
            k = int(rng.integers(0, len(tokens)))
            tokens[k] = _typo(tokens[k], rng)
        if len(tokens) >= 2 and rng.random() < spec.token_drop_rate:
            del tokens[int(rng.integers(0, len(tokens)))]
        out[j] = tuple(tokens)
    if out[0] and rng.random() < spec.version_suffix_rate:
        suffix = _VERSION_SUFFIXES[int(rng.integers(0, len(_VERSION_SUFFIXES)))]
        out[0] = out[0] + suffix
    return out


def synthesize(spec: SynthSpec, seed: int = 0) -> tuple[Dataset, LabelSet]:
    """Entity records plus duplicates; labels are all within-entity pairs."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    vocab = _make_vocab(rng, max(200, spec.entity_count // 3))
    first = _make_vocab(rng, 120)
    last = _make_vocab(rng, 200)
    name_pool = max(20, spec.entity_count // 20)
    names = [
        f"{first[int(rng.integers(0, len(first)))]} {last[int(rng.integers(0, len(last)))]}"
        for _ in range(name_pool)
    ]
    records: list[Record] = []
    pairs: list[tuple[str, str]] = []
    width = len(str(max(spec.entity_count - 1, 1)))
    for e in range(spec.entity_count):
        title = _phrase(rng, vocab, 3, 6)
        album = _phrase(rng, vocab, 2, 4)
        composer = tuple(names[int(rng.integers(0, len(names)))].split())
        writer: tuple[str, ...] = ()
        if rng.random() < 0.1:
            writer = tuple(names[int(rng.integers(0, len(names)))].split())
        base = [title, album, composer, writer]
        member_ids: list[str] = []
        for c in range(spec.duplicates_per_entity + 1):
            rid = f"e{e:0{width}d}-{c}"
            member_ids.append(rid)
            attrs = base if c == 0 else _corrupt(base, spec, rng)
            if spec.regime == "unstructured":
                flat = tuple(tok for a in attrs for tok in a)
                values = (AttributeValue(flat),)
            else:
                values = tuple(AttributeValue(a) for a in attrs)
            records.append(Record(rid, values))
        for x in range(len(member_ids)):
            for y in range(x + 1, len(member_ids)):
                pairs.append(canonical_pair(member_ids[x], member_ids[y]))
    schema = ("text",) if spec.regime == "unstructured" else _SCHEMA
    dataset = Dataset(schema, (Table(records),))
    return dataset, LabelSet(frozenset(pairs))


@dataclass
class RunRecord:
    method: str
    dataset: str
    regime: str
    repeat: int
    recall: float
    pe_ratio: float
    wall_time_s: float


def metrics_csv(runs: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["method", "dataset", "regime", "repeat", "recall", "pe_ratio", "wall_time_s"]
    )
    for r in sorted(runs, key=lambda r: (r.method, r.dataset, r.repeat)):
        writer.writerow(
            [r.method, r.dataset, r.regime, r.repeat, repr(r.recall), repr(r.pe_ratio), repr(r.wall_time_s)]
        )
    return buf.getvalue()


def summary_table(runs: Sequence[RunRecord]) -> str:
    """Aligned per-method means (and spreads) over repeats."""
    if not runs:
        raise ValueError("no runs to report")
    by_method: dict[str, list[RunRecord]] = {}
    for r in runs:
        by_method.setdefault(r.method, []).append(r)
    rows = []
    for method in sorted(by_method):
        group = by_method[method]
        recalls = [g.recall for g in group]
        pes = [g.pe_ratio for g in group]
        rows.append(
            (
                method,
                float(np.mean(recalls)),
                float(np.std(recalls)),
                float(np.mean(pes)),
                float(np.std(pes)),
                float(np.mean([g.wall_time_s for g in group])),
                len(group),
            )
        )
    w = max(len("method"), max(len(r[0]) for r in rows))
    lines = [
        f"{'method':<{w}}  {'recall':>8}  {'rec_sd':>8}  {'pe_ratio':>10}  "
        f"{'pe_sd':>8}  {'wall_s':>8}  {'runs':>4}"
    ]
    for method, rec, rec_sd, pe, pe_sd, wall, n in rows:
        lines.append(
            f"{method:<{w}}  {rec:8.4f}  {rec_sd:8.4f}  {pe:10.3f}  "
            f"{pe_sd:8.3f}  {wall:8.2f}  {n:4d}"
        )
    return "\n".join(lines) + "\n"
