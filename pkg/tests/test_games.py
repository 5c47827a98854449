import itertools
import math

import numpy as np
import pytest

from groupshapley.games import (
    Game,
    IntersectionSizeGame,
    RegressionGame,
    SIZE_UTILITIES,
    SOUGame,
    SizeOnlyGame,
    UnsupportedGameError,
    augment_with_null,
    game_from_config,
    load_regression_csv,
    sou_generate,
)


def brute_force_sv(game, i):
    """Direct weighted-marginal enumeration, the slow reference."""
    n = game.n
    others = [j for j in range(n) if j != i]
    total = 0.0
    for r in range(n):
        for S in itertools.combinations(others, r):
            w = (math.factorial(r) * math.factorial(n - r - 1)
                 / math.factorial(n))
            total += w * (game.evaluate(list(S) + [i]) - game.evaluate(list(S)))
    return total


class TestEvaluate:
    def test_size_only(self):
        g = SizeOnlyGame(4, lambda s: float(s))
        assert g.evaluate([0, 2]) == 2.0

    def test_unanimity_met(self):
        g = SOUGame(3, [[0, 1]], [1.0])
        assert g.evaluate([0, 1, 2]) == 1.0

    def test_unanimity_unmet(self):
        g = SOUGame(3, [[0, 1]], [1.0])
        assert g.evaluate([0]) == 0.0

    def test_out_of_range(self):
        g = SizeOnlyGame(4, lambda s: float(s))
        with pytest.raises(ValueError):
            g.evaluate([0, 4])
        with pytest.raises(ValueError):
            g.evaluate([-1])

    def test_duplicates_forbidden(self):
        g = SizeOnlyGame(4, lambda s: float(s))
        with pytest.raises(ValueError):
            g.evaluate([1, 1])

    def test_counter_exactness(self):
        g = SOUGame(3, [[0, 1]], [1.0])
        for k in range(1, 6):
            g.evaluate([0])
            assert g.eval_counter == k
        g.evaluate_masks(np.zeros((7, 3), dtype=bool))
        assert g.eval_counter == 12

    def test_purity(self):
        g = sou_generate(6, 15, 42)
        a = g.evaluate([0, 3, 5])
        b = g.evaluate([0, 3, 5])
        assert a == b

    def test_batch_matches_scalar(self):
        g = sou_generate(7, 25, 9)
        rng = np.random.default_rng(1)
        masks = rng.random((40, 7)) < 0.5
        batch = g.evaluate_masks(masks)
        for m, v in zip(masks, batch):
            # scalar and batch paths sum the coefficients in different
            # orders, so agreement is to rounding, not bitwise
            assert g.evaluate_mask(m) == pytest.approx(v, abs=1e-12)


class TestSouGenerate:
    def test_single_subset_ranges(self):
        g = sou_generate(4, 1, 123)
        assert 1 <= len(g.subsets[0]) <= 4
        assert 0.0 <= g.coefficients[0] <= 0.75

    def test_benchmark_scale_configuration(self):
        g = sou_generate(64, 64 * 64, 5)
        assert len(g.subsets) == 64 * 64
        assert all(1 <= len(a) <= 64 for a in g.subsets)

    def test_determinism(self):
        a = sou_generate(10, 30, 77)
        b = sou_generate(10, 30, 77)
        assert all((x == y).all() for x, y in zip(a.subsets, b.subsets))
        assert (a.coefficients == b.coefficients).all()

    def test_coefficient_is_mean_weight(self):
        g = sou_generate(9, 40, 3)
        for a, alpha in zip(g.subsets, g.coefficients):
            assert alpha == pytest.approx(np.mean((a % 4) / 4), abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            sou_generate(1, 5, 0)
        with pytest.raises(ValueError):
            sou_generate(5, 0, 0)


class TestSouClosedForm:
    def test_two_member_unanimity(self):
        g = SOUGame(3, [[0, 1]], [1.0])
        assert g.exact_shapley(0) == 0.5
        assert g.exact_shapley(2) == 0.0

    def test_two_subsets(self):
        g = SOUGame(2, [[0], [0, 1]], [0.5, 1.0])
        assert g.exact_shapley(0) == pytest.approx(1.0)
        assert brute_force_sv(g, 0) == pytest.approx(1.0, abs=1e-12)

    def test_against_brute_force(self):
        g = sou_generate(6, 12, 31)
        closed = g.exact_shapley_vector()
        for i in range(6):
            assert brute_force_sv(g, i) == pytest.approx(closed[i], abs=1e-12)
            assert g.exact_shapley(i) == pytest.approx(closed[i], abs=1e-15)

    def test_null_player(self):
        g = SOUGame(5, [[0, 1], [2]], [2.0, 1.0])
        assert g.exact_shapley(4) == 0.0

    def test_index_out_of_range(self):
        g = SOUGame(3, [[0]], [1.0])
        with pytest.raises(ValueError):
            g.exact_shapley(3)

    def test_subset_validation(self):
        with pytest.raises(ValueError):
            SOUGame(3, [[]], [1.0])
        with pytest.raises(ValueError):
            SOUGame(3, [[0, 0]], [1.0])
        with pytest.raises(ValueError):
            SOUGame(3, [[3]], [1.0])
        with pytest.raises(ValueError):
            SOUGame(3, [[0]], [1.0, 2.0])


class TestAugmentation:
    def test_unsupported_game(self):
        g = sou_generate(5, 5, 0)
        with pytest.raises(UnsupportedGameError):
            augment_with_null(g, 3)

    def test_noop_above_threshold(self):
        g = SizeOnlyGame(6, lambda s: float(s) ** 2)
        wrapped = augment_with_null(g, 3, rng=np.random.default_rng(0))
        assert wrapped.evaluate([0, 1, 2, 4]) == 16.0

    def test_padding_below_threshold(self):
        g = SizeOnlyGame(6, lambda s: float(s) ** 2)
        wrapped = augment_with_null(g, 3, rng=np.random.default_rng(0))
        assert wrapped.evaluate([0]) == 9.0  # padded up to 3 items

    def test_threshold_boundary(self):
        g = SizeOnlyGame(6, lambda s: float(s))
        wrapped = augment_with_null(g, 1, rng=np.random.default_rng(0))
        assert wrapped.evaluate([]) == 1.0
        assert wrapped.evaluate([2]) == 1.0

    def test_b_larger_than_n_allowed(self):
        g = SizeOnlyGame(4, lambda s: float(s))
        wrapped = augment_with_null(g, 7, rng=np.random.default_rng(0))
        assert wrapped.evaluate([0, 1, 2, 3]) == 7.0

    def test_regression_empty_set_self_consistent(self):
        game = _toy_regression()
        means = []
        for seed in (1, 2):
            wrapped = augment_with_null(
                game, 6, null_sampler=game.default_null_sampler,
                rng=np.random.default_rng(seed),
            )
            vals = [wrapped.evaluate([]) for _ in range(150)]
            means.append((np.mean(vals), np.std(vals, ddof=1) / math.sqrt(len(vals))))
        (m1, se1), (m2, se2) = means
        assert np.isfinite(m1)
        assert abs(m1 - m2) < 4 * math.hypot(se1, se2)


def _toy_regression(n=20, p=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = np.array([1.0, -2.0, 0.5])
    y = X @ beta + 0.1 * rng.normal(size=n)
    Xt = rng.normal(size=(15, p))
    yt = Xt @ beta + 0.1 * rng.normal(size=15)
    return RegressionGame(X, y, Xt, yt, lam=0.01)


class TestRegressionGame:
    def test_empty_set_is_null_utility(self):
        g = _toy_regression()
        assert g.evaluate([]) == g.null_utility
        assert g.null_utility == -float(np.var(g.y_test))

    def test_small_coalition_fallback(self):
        g = _toy_regression()
        assert g.evaluate([0, 1]) == g.null_utility  # 2 rows < 3 predictors

    def test_full_fit_beats_null(self):
        g = _toy_regression()
        assert g.evaluate(range(20)) > g.null_utility

    def test_validation(self):
        with pytest.raises(ValueError):
            RegressionGame(np.zeros((4, 2)), np.zeros(4), np.zeros((3, 2)),
                           np.zeros(3), lam=-1.0)


class TestLoadRegressionCsv:
    def _write(self, tmp_path, text):
        path = tmp_path / "data.csv"
        path.write_text(text)
        return path

    def test_split_arithmetic(self, tmp_path):
        path = self._write(tmp_path, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n1,1,2\n")
        g = load_regression_csv(path, 0.5, 0.01, seed=0)
        assert g.n == 2
        assert len(g.y_test) == 2

    def test_constant_response(self, tmp_path):
        path = self._write(tmp_path, "a,y\n1,5\n2,5\n3,5\n4,5\n")
        g = load_regression_csv(path, 0.5, 0.01, seed=0)
        assert g.null_utility == 0.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_regression_csv(tmp_path / "nope.csv", 0.5, 0.01, seed=0)

    def test_non_numeric_cell(self, tmp_path):
        path = self._write(tmp_path, "a,y\n1,2\nx,3\n4,5\n6,7\n")
        with pytest.raises(ValueError, match="non-numeric"):
            load_regression_csv(path, 0.5, 0.01, seed=0)

    def test_ragged_row(self, tmp_path):
        path = self._write(tmp_path, "a,b,y\n1,2,3\n4,5\n")
        with pytest.raises(ValueError, match="columns"):
            load_regression_csv(path, 0.5, 0.01, seed=0)

    def test_too_few_rows(self, tmp_path):
        path = self._write(tmp_path, "a,y\n1,2\n3,4\n")
        with pytest.raises(ValueError, match="2 rows"):
            load_regression_csv(path, 0.4, 0.01, seed=0)

    def test_deterministic_split(self, tmp_path):
        rows = "\n".join(f"{i},{i % 3},{2 * i}" for i in range(12))
        path = self._write(tmp_path, "a,b,y\n" + rows + "\n")
        g1 = load_regression_csv(path, 0.25, 0.01, seed=9)
        g2 = load_regression_csv(path, 0.25, 0.01, seed=9)
        assert (g1.X_train == g2.X_train).all()
        assert (g1.y_test == g2.y_test).all()


class TestSerialization:
    def test_sou_round_trip(self):
        g = sou_generate(8, 10, 55)
        g2 = game_from_config(g.to_config())
        assert (g2.coefficients == g.coefficients).all()

    def test_explicit_sou_round_trip(self):
        g = SOUGame(4, [[0, 2]], [1.5])
        g2 = game_from_config(g.to_config())
        assert g2.evaluate([0, 2]) == 1.5

    def test_size_only_round_trip(self):
        g = SizeOnlyGame(5, SIZE_UTILITIES["cubic"], name="cubic")
        g2 = game_from_config(g.to_config())
        assert g2.evaluate([0, 1]) == 8.0

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            game_from_config({"type": "banzhaf"})


class TestIntersectionSizeGame:
    def test_profile_evaluation(self):
        g = IntersectionSizeGame(6, [0, 1, 2], lambda s1, s: 10 * s1 + s)
        assert g.evaluate([0, 3]) == 12.0
        assert g.evaluate([0, 1, 4, 5]) == 24.0


def test_base_game_is_abstract():
    g = Game(3)
    with pytest.raises(NotImplementedError):
        g.evaluate([0])
