"""Cross-polytope hashing, index behavior, theory formulas, persistence."""

import math

import numpy as np
import pytest

from sigblock.lsh import (
    LshIndex,
    LshParams,
    LshTheoryParams,
    approx_factor,
    cosine_to_euclidean,
    hash_one,
    next_pow2,
    pad_to,
    random_rotation,
    random_rotations,
    rho_exponent,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_units(n, d, rng):
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestHashOne:
    def test_identity_fixed_point(self):
        e3 = np.zeros(4)
        e3[2] = 1.0
        assert hash_one(np.eye(4), e3) == 3

    def test_negative_axis(self):
        v = np.zeros(4)
        v[0] = -1.0
        assert hash_one(np.eye(4), v) == -1

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            hash_one(np.eye(4), np.zeros(4))

    def test_tie_breaks_smallest_index_positive_first(self):
        v = unit([1.0, 1.0, 0.0])
        assert hash_one(np.eye(3), v) == 1
        v = unit([0.0, -1.0, 1.0])  # equal magnitude, index 1 first
        assert hash_one(np.eye(3), v) == -2

    def test_identical_always_collide_antipodal_never(self, rng):
        for _ in range(200):
            rot = random_rotation(8, rng)
            v = random_units(1, 8, rng)[0]
            assert hash_one(rot, v) == hash_one(rot, v)
            assert hash_one(rot, v) == -hash_one(rot, -v)


class TestRotations:
    def test_orthogonal(self, rng):
        rots = random_rotations(16, 5, rng)
        for r in rots:
            np.testing.assert_allclose(r @ r.T, np.eye(16), atol=1e-6)

    def test_next_pow2(self):
        assert next_pow2(1) == 1
        assert next_pow2(3) == 4
        assert next_pow2(64) == 64
        assert next_pow2(65) == 128

    def test_pad_preserves_cosine(self, rng):
        a, b = random_units(2, 6, rng)
        pa, pb = pad_to(a, 8), pad_to(b, 8)
        assert abs(a @ b - pa @ pb) < 1e-12

    def test_collision_probability_decreases_with_angle(self, rng):
        # Small-scale version of the monotonicity property.
        n = 20000
        d = 8
        rots = random_rotations(d, n, rng)
        x = np.zeros(d)
        x[0] = 1.0
        rates = []
        for phi in (0.0, math.pi / 6, math.pi / 3, math.pi / 2):
            y = np.zeros(d)
            y[0], y[1] = math.cos(phi), math.sin(phi)
            ux, uy = rots @ x, rots @ y
            jx = np.argmax(np.abs(ux), axis=1)
            jy = np.argmax(np.abs(uy), axis=1)
            sx = ux[np.arange(n), jx] >= 0
            sy = uy[np.arange(n), jy] >= 0
            rates.append(float(np.mean((jx == jy) & (sx == sy))))
        assert rates[0] == 1.0
        assert rates[0] > rates[1] > rates[2] > rates[3]


class TestTheory:
    def test_rho_paper_operating_point(self):
        # 0.2593... corresponds to the reported n^(1/3.86) query time
        got = rho_exponent(0.8, 0.4)
        assert abs(got - 7.0 / 27.0) < 1e-12
        assert abs(got - 0.2593) < 0.0003
        assert abs(1.0 / got - 3.857) < 0.01

    def test_rho_limit_to_one(self):
        assert abs(rho_exponent(0.5, 0.5 - 1e-9) - 1.0) < 1e-6

    def test_rho_half_zero(self):
        assert abs(rho_exponent(0.5, 0.0) - 1.0 / 3.0) < 1e-12

    def test_rho_rejects_bad_ordering(self):
        with pytest.raises(ValueError):
            rho_exponent(0.4, 0.8)
        with pytest.raises(ValueError):
            rho_exponent(1.0, 0.4)

    def test_euclidean_mapping(self):
        assert cosine_to_euclidean(1.0) == 0.0
        assert abs(cosine_to_euclidean(0.8) - math.sqrt(0.4)) < 1e-12
        assert abs(approx_factor(0.8, 0.4) - math.sqrt(3.0)) < 1e-12

    def test_theory_params_bundle(self):
        params = LshTheoryParams(0.8, 0.4)
        assert abs(params.rho - 7.0 / 27.0) < 1e-12
        assert abs(params.euclid_r - math.sqrt(0.4)) < 1e-12
        assert abs(params.factor_c - math.sqrt(3.0)) < 1e-12
        assert params.failure_bound < 0.702
        with pytest.raises(ValueError):
            LshTheoryParams(0.4, 0.8)


class TestIndex:
    def test_empty_input(self):
        index = LshIndex.build([], dim=8, params=LshParams(tables=4))
        assert len(index) == 0
        assert len(index.tables) == 4
        assert all(len(t) == 0 for t in index.tables)

    def test_duplicate_entry_rejected(self, rng):
        v = random_units(1, 8, rng)[0]
        with pytest.raises(ValueError, match="duplicate"):
            LshIndex.build([("a", 0, v), ("a", 0, v)], dim=8)

    def test_non_unit_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            LshIndex.build([("a", 0, np.ones(8))], dim=8)

    def test_total_stored_entries(self, rng):
        n = 500
        vecs = random_units(n, 16, rng)
        index = LshIndex.build(
            [(f"v{i}", 0, vecs[i]) for i in range(n)], dim=16, params=LshParams(seed=3)
        )
        total = sum(len(b) for t in index.tables for b in t.values())
        assert total == n * index.params.tables

    def test_self_retrieval_deterministic(self, rng):
        vecs = random_units(50, 16, rng)
        index = LshIndex.build(
            [(f"v{i:02d}", 0, vecs[i]) for i in range(50)], dim=16
        )
        for i in range(50):
            hits = index.query(vecs[i], theta=0.99)
            assert any(rid == f"v{i:02d}" and c >= 0.999999 for rid, _, c in hits)

    def test_near_orthogonal_points_rarely_retrieved(self, rng):
        vecs = random_units(400, 64, rng)
        index = LshIndex.build(
            [(f"v{i}", 0, vecs[i]) for i in range(400)], dim=64
        )
        hits = 0
        for i in range(100):
            got = index.query(vecs[i], theta=0.8)
            hits += sum(1 for rid, _, _ in got if rid != f"v{i}")
        assert hits == 0  # random 64-dim pairs essentially never reach 0.8

    def test_results_subset_of_brute_force(self, rng):
        n, d = 800, 16
        vecs = random_units(n, d, rng)
        index = LshIndex.build([(f"v{i:03d}", 0, vecs[i]) for i in range(n)], dim=d)
        theta = 0.7
        for i in range(40):
            got = {rid for rid, _, _ in index.query(vecs[i], theta)}
            exact = {f"v{j:03d}" for j in range(n) if vecs[i] @ vecs[j] >= theta}
            assert got <= exact

    def test_max_results_truncates_to_best(self, rng):
        base = random_units(1, 16, rng)[0]
        items = []
        for i in range(20):
            w = rng.standard_normal(16)
            w -= (w @ base) * base
            w = unit(w)
            psi = 0.05 + 0.01 * i
            items.append((f"v{i:02d}", 0, math.cos(psi) * base + math.sin(psi) * w))
        index = LshIndex.build(items, dim=16)
        got = index.query(base, theta=0.5, max_results=5)
        assert len(got) == 5
        cosines = [c for _, _, c in got]
        assert cosines == sorted(cosines, reverse=True)
        assert got[0][0] == "v00"

    def test_signature_filter(self, rng):
        v = random_units(1, 8, rng)[0]
        index = LshIndex.build([("a", 0, v), ("b", 1, v)], dim=8)
        got = index.query(v, 0.5, signature=1)
        assert [rid for rid, _, _ in got] == ["b"]

    def test_multiprobe_improves_single_table_capture(self, rng):
        # With one table and one composed hash, probing the runner-up
        # bucket can only add candidates.
        n, d = 2000, 16
        vecs = random_units(n, d, rng)
        twins = []
        for i in range(300):
            w = rng.standard_normal(d)
            w -= (w @ vecs[i]) * vecs[i]
            w = unit(w)
            psi = math.acos(0.88)
            twins.append(math.cos(psi) * vecs[i] + math.sin(psi) * w)
        items = [(f"v{i:04d}", 0, vecs[i]) for i in range(n)]
        p0 = LshParams(tables=1, hashes_per_table=1, multiprobe=0, seed=5)
        p1 = LshParams(tables=1, hashes_per_table=1, multiprobe=1, seed=5)
        i0 = LshIndex.build(items, dim=d, params=p0)
        i1 = LshIndex.build(items, dim=d, params=p1)
        hits0 = sum(
            any(rid == f"v{i:04d}" for rid, _, _ in i0.query(unit(t), 0.8))
            for i, t in enumerate(twins)
        )
        hits1 = sum(
            any(rid == f"v{i:04d}" for rid, _, _ in i1.query(unit(t), 0.8))
            for i, t in enumerate(twins)
        )
        assert hits1 > hits0

    def test_build_deterministic(self, rng):
        vecs = random_units(100, 8, rng)
        items = [(f"v{i}", 0, vecs[i]) for i in range(100)]
        a = LshIndex.build(items, dim=8, params=LshParams(seed=9))
        b = LshIndex.build(items, dim=8, params=LshParams(seed=9))
        assert a.tables == b.tables
        np.testing.assert_array_equal(a.rotations, b.rotations)


class TestPersistence:
    def test_round_trip_preserves_queries(self, rng, tmp_path):
        vecs = random_units(200, 12, rng)
        items = [(f"rec-{i:03d}", i % 3, vecs[i]) for i in range(200)]
        index = LshIndex.build(items, dim=12, params=LshParams(seed=4))
        path = tmp_path / "index.bin"
        index.save(path)
        loaded = LshIndex.load(path)
        assert loaded.entries == index.entries
        assert loaded.tables == index.tables
        assert loaded.params == index.params
        q = vecs[7]
        got = loaded.query(q, 0.9)
        assert any(rid == "rec-007" for rid, _, _ in got)

    def test_save_load_save_byte_identical(self, rng, tmp_path):
        vecs = random_units(50, 8, rng)
        items = [(f"v{i}", 0, vecs[i]) for i in range(50)]
        index = LshIndex.build(items, dim=8)
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        index.save(p1)
        LshIndex.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic_fails_loudly(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTANINDEX")
        with pytest.raises(ValueError, match="magic"):
            LshIndex.load(path)

    def test_version_mismatch_fails_loudly(self, rng, tmp_path):
        vecs = random_units(3, 8, rng)
        index = LshIndex.build([(f"v{i}", 0, vecs[i]) for i in range(3)], dim=8)
        path = tmp_path / "index.bin"
        index.save(path)
        raw = bytearray(path.read_bytes())
        raw[6:8] = (99).to_bytes(2, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            LshIndex.load(path)
