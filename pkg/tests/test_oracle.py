import numpy as np
import pytest

from vecset import (
    ConflictError,
    ExactSearcher,
    InvalidInputError,
    SearchHit,
    SimParams,
    VectorSet,
    oracle_top_u,
    set_similarity,
)
from vecset.oracle import rank

from conftest import naive_top_u, random_sets


class TestOracleExamples:
    def test_self_match(self, unit_params):
        A = VectorSet(5, [[0.3, 0.9]])
        assert oracle_top_u(A, [A], 1, unit_params) == [SearchHit(5, pytest.approx(1.0))]

    def test_self_match_multi_member(self, unit_params):
        # the avg term of a set against itself is below 1 unless members are parallel
        A = VectorSet(5, [[1, 0], [0, 1]])
        hits = oracle_top_u(A, [A, VectorSet(6, [[1, 1]])], 1, unit_params)
        assert hits[0].set_id == 5
        assert hits[0].score == pytest.approx((1 + 0.5) / 2)

    def test_two_candidates(self, unit_params):
        A = VectorSet(0, [[1, 0]])
        V1, V2 = VectorSet(1, [[0, 1]]), VectorSet(2, [[1, 0], [0, 1]])
        hits = oracle_top_u(A, [V1, V2], 2, unit_params)
        assert [h.set_id for h in hits] == [2, 1]
        np.testing.assert_allclose([h.score for h in hits], [0.75, 0.0], atol=1e-12)

    def test_u_larger_than_database(self, rng):
        p = SimParams(1, 1, 4, 3)
        db = random_sets(rng, 7, 4, (1, 3))
        hits = oracle_top_u(VectorSet(99, rng.standard_normal((2, 4))), db, 50, p)
        assert sorted(h.set_id for h in hits) == list(range(7))


class TestOracleProperties:
    def test_matches_scalar_rescan(self, rng):
        p = SimParams(0.6, 1.4, 5, 4)
        db = random_sets(rng, 40, 5, (1, 4))
        searcher = ExactSearcher(db, p)
        for q in range(5):
            A = VectorSet(1000 + q, rng.standard_normal((int(rng.integers(1, 5)), 5)))
            hits = searcher.top_u(A, 10)
            want = naive_top_u(A, db, 10, 0.6, 1.4)
            assert [h.set_id for h in hits] == [sid for _, sid in want]
            np.testing.assert_allclose([h.score for h in hits], [s for s, _ in want], atol=1e-9)

    def test_top1_is_max(self, rng):
        p = SimParams(1, 1, 3, 3)
        db = random_sets(rng, 30, 3, (1, 3))
        A = VectorSet(100, rng.standard_normal((2, 3)))
        best = max(set_similarity(A, V, p) for V in db)
        assert oracle_top_u(A, db, 1, p)[0].score == pytest.approx(best, abs=1e-12)

    def test_ties_by_ascending_id(self, unit_params):
        A = VectorSet(0, [[1, 0]])
        db = [VectorSet(sid, [[0, 1]]) for sid in (9, 3, 7)] + [VectorSet(5, [[1, 0]])]
        hits = oracle_top_u(A, db, 4, unit_params)
        assert [h.set_id for h in hits] == [5, 3, 7, 9]

    def test_deterministic(self, rng):
        p = SimParams(1, 1, 4, 2)
        db = random_sets(rng, 25, 4, (1, 2))
        A = VectorSet(500, rng.standard_normal((2, 4)))
        assert oracle_top_u(A, db, 8, p) == oracle_top_u(A, list(reversed(db)), 8, p)

    def test_scores_cover_database(self, rng):
        p = SimParams(1, 1, 4, 3)
        db = random_sets(rng, 12, 4, (1, 3))
        ids, scores = ExactSearcher(db, p).scores(VectorSet(50, rng.standard_normal((1, 4))))
        assert sorted(ids.tolist()) == list(range(12))
        assert np.all((scores >= -1) & (scores <= 1))


class TestOracleErrors:
    def test_empty_database(self, unit_params):
        with pytest.raises(InvalidInputError):
            oracle_top_u(VectorSet(0, [[1, 0]]), [], 1, unit_params)

    def test_bad_u(self, unit_params):
        with pytest.raises(InvalidInputError):
            oracle_top_u(VectorSet(0, [[1, 0]]), [VectorSet(1, [[1, 0]])], 0, unit_params)

    def test_duplicate_ids(self, unit_params):
        with pytest.raises(ConflictError):
            ExactSearcher([VectorSet(1, [[1, 0]]), VectorSet(1, [[0, 1]])], unit_params)

    def test_wrong_dimension(self, unit_params):
        with pytest.raises(InvalidInputError):
            ExactSearcher([VectorSet(1, [[1, 0, 0]])], unit_params)


class TestRank:
    def test_keeps_ties_at_cutoff(self):
        hits = rank(np.array([4, 2, 8, 1]), np.array([0.5, 0.9, 0.5, 0.5]), 2)
        assert hits == [SearchHit(2, 0.9), SearchHit(1, 0.5)]

    def test_short_input(self):
        assert rank(np.array([3]), np.array([0.1]), 5) == [SearchHit(3, 0.1)]
