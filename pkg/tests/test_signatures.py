"""Signature combination and the max-cosine tuple similarity."""

import numpy as np
import pytest

from sigblock.data_model import AttributeValue, Record
from sigblock.encoder import AttentionalEncoder
from sigblock.signatures import (
    SignatureModel,
    SignatureWeights,
    compute_signature,
    cosine,
    prune_support,
)
from sigblock.text_embedding import EmbeddingTable


class TestComputeSignature:
    def test_all_missing_gives_none(self):
        assert compute_signature(np.array([0.6, 0.8]), [None, None]) is None

    def test_one_hot_passthrough(self):
        g1 = np.array([1.0, 2.0])
        got = compute_signature(np.array([1.0, 0.0]), [g1, None])
        np.testing.assert_allclose(got, g1)

    def test_weighted_combination(self):
        got = compute_signature(
            np.array([0.6, 0.8, 0.0]),
            [np.array([1.0, 0.0]), np.array([0.0, 1.0]), None],
        )
        np.testing.assert_allclose(got, [0.6, 0.8])

    def test_zero_weight_on_only_present_attribute_is_missing(self):
        got = compute_signature(np.array([0.0, 1.0]), [np.array([1.0, 1.0]), None])
        assert got is None


class TestCosine:
    def test_identical(self):
        assert cosine(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0

    def test_orthogonal(self):
        assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0

    def test_missing_side_is_zero(self):
        assert cosine(None, np.array([1.0, 0.0])) == 0.0
        assert cosine(np.array([1.0, 0.0]), None) == 0.0

    def test_zero_norm_is_zero(self):
        assert cosine(np.zeros(3), np.ones(3)) == 0.0

    def test_scale_invariance(self, rng):
        a = rng.standard_normal(5)
        b = rng.standard_normal(5)
        assert abs(cosine(a, b) - cosine(3.7 * a, b)) < 1e-12

    def test_range(self, rng):
        for _ in range(100):
            a, b = rng.standard_normal(4), rng.standard_normal(4)
            assert -1.0 - 1e-12 <= cosine(a, b) <= 1.0 + 1e-12


class TestPruneSupport:
    def test_small_entries_dropped_and_renormalized(self):
        row = np.array([0.9995, 5e-4, 0.02])
        pruned = prune_support(row, eps=1e-3)
        assert pruned[1] == 0.0
        assert abs(np.linalg.norm(pruned) - 1.0) < 1e-12

    def test_all_pruned_raises(self):
        with pytest.raises(ValueError):
            prune_support(np.array([1e-4, 1e-5]), eps=1e-3)


def tiny_model(schema, weights, rho=0.0, seed=0):
    rng = np.random.default_rng(seed)
    dim, hidden = 8, 4
    table = EmbeddingTable(dim=dim, bucket_count=64, seed=seed)
    encoders = [
        AttentionalEncoder.initialize(dim, hidden, rho, rng) for _ in schema
    ]
    return SignatureModel(
        schema=tuple(schema),
        table=table,
        encoders=encoders,
        weights=SignatureWeights(np.asarray(weights, dtype=np.float64)),
    )


def record(rid, *texts):
    return Record(
        rid, tuple(AttributeValue(tuple(t.split()) if t else ()) for t in texts)
    )


class TestTupleSimilarity:
    def test_self_similarity_is_one(self):
        model = tiny_model(["title", "album"], [[1.0, 0.0], [0.0, 1.0]])
        x = record("a", "me and mrs. jones", "")
        assert abs(model.tuple_similarity(x, x) - 1.0) < 1e-12

    def test_all_signatures_missing_is_zero(self):
        model = tiny_model(["title", "album"], [[1.0, 0.0], [0.0, 1.0]])
        x = record("a", "", "")
        y = record("b", "something", "else")
        assert model.tuple_similarity(x, y) == 0.0

    def test_symmetry(self, rng):
        model = tiny_model(["title", "album"], [[0.6, 0.8]])
        x = record("a", "me and mrs. jones", "call me irresponsible")
        y = record("b", "me and mrs. jones remix", "")
        assert abs(model.tuple_similarity(x, y) - model.tuple_similarity(y, x)) < 1e-12

    def test_extra_signature_only_increases(self):
        one = tiny_model(["title", "album"], [[1.0, 0.0]])
        two = tiny_model(["title", "album"], [[1.0, 0.0], [0.0, 1.0]])
        x = record("a", "me and mrs. jones", "call me irresponsible")
        y = record("b", "blowing in the wind", "call me irresponsible")
        assert two.tuple_similarity(x, y) >= one.tuple_similarity(x, y) - 1e-12

    def test_multi_signature_bridging_scenario(self):
        # Three records of one song: x1 has only the title, x3 has a
        # variant title; two signatures bridge x2 to both while the
        # (x1, x3) pair stays below a high threshold.
        model = tiny_model(
            ["title", "album", "composer"],
            [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8]],
        )
        x1 = record("x1", "me and mrs. jones", "", "")
        x2 = record("x2", "me and mrs. jones", "call me irresponsible", "michael buble")
        x3 = record("x3", "me & mrs.", "call me irresponsible", "michael buble")
        theta = 0.95
        s12 = model.tuple_similarity(x1, x2)
        s23 = model.tuple_similarity(x2, x3)
        s13 = model.tuple_similarity(x1, x3)
        assert s12 > theta  # identical titles under signature 1
        assert s23 > theta  # identical album+composer under signature 2
        assert s13 < theta  # no shared full aspect
