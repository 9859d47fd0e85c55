import json
import math

import numpy as np
import pytest

from entrospect import kernels
from entrospect.errors import DataError
from entrospect.forest import (
    ForestModel,
    ForestParams,
    LabeledInstance,
    Tree,
    hybrid_scores,
    hybrid_suspiciousness,
    label_lines,
    load_model,
    rank_lines,
    save_model,
    train_forest,
    undersample,
    write_ranked_csv,
)
from entrospect.kernels import pure


def make_instances(X, y, r_buggy=1.0, r_clean=0.0):
    return [
        LabeledInstance(
            key=(f"f{i // 100}.java", i % 100 + 1),
            relevance=r_buggy if label else r_clean,
            features=np.asarray(row, dtype=np.float64),
        )
        for i, (row, label) in enumerate(zip(X, y))
    ]


class TestLabeling:
    def test_buggy_get_high_relevance(self):
        universe = [("a", 1), ("a", 2)]
        labeled = label_lines(universe, {("a", 1)}, 1.0, 0.0)
        assert [inst.relevance for inst in labeled] == [1.0, 0.0]

    def test_no_buggy_lines(self):
        labeled = label_lines([("a", 1)], set(), 1.0, 0.0)
        assert [inst.relevance for inst in labeled] == [0.0]

    def test_all_buggy(self):
        labeled = label_lines([("a", 1), ("a", 2)], {("a", 1), ("a", 2)}, 1.0, 0.0)
        assert [inst.relevance for inst in labeled] == [1.0, 1.0]

    def test_offenders_reported(self):
        with pytest.raises(DataError, match="ghost:9"):
            label_lines([("a", 1)], {("ghost", 9)}, 1.0, 0.0)

    def test_relevance_order_enforced(self):
        with pytest.raises(ValueError):
            label_lines([("a", 1)], set(), 0.0, 1.0)


class TestUndersample:
    def _instances(self, n_buggy, n_clean):
        insts = []
        for i in range(n_buggy + n_clean):
            insts.append(
                LabeledInstance(
                    key=("f", i + 1),
                    relevance=1.0 if i < n_buggy else 0.0,
                )
            )
        return insts

    def test_ratio_applied(self):
        sampled = undersample(self._instances(10, 1000), 10.0, seed=1)
        assert sum(1 for s in sampled if s.relevance == 1.0) == 10
        assert sum(1 for s in sampled if s.relevance == 0.0) == 100

    def test_capped_at_available(self):
        sampled = undersample(self._instances(10, 50), 10.0, seed=1)
        assert len(sampled) == 60

    def test_deterministic(self):
        a = undersample(self._instances(5, 500), 4.0, seed=9)
        b = undersample(self._instances(5, 500), 4.0, seed=9)
        assert [inst.key for inst in a] == [inst.key for inst in b]
        c = undersample(self._instances(5, 500), 4.0, seed=10)
        assert [inst.key for inst in a] != [inst.key for inst in c]

    def test_preserves_original_order(self):
        sampled = undersample(self._instances(5, 500), 4.0, seed=9)
        keys = [inst.key for inst in sampled]
        assert keys == sorted(keys, key=lambda k: k[1])

    def test_ceil_rounding(self):
        sampled = undersample(self._instances(3, 500), 2.5, seed=0)
        assert sum(1 for s in sampled if s.relevance == 0.0) == math.ceil(2.5 * 3)

    def test_no_positive_class(self):
        with pytest.raises(DataError, match="no positive class"):
            undersample(self._instances(0, 10), 10.0, seed=1)


def _separable(n=80, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 1))
    y = (X[:, 0] > 0).astype(int)
    return X, y


class TestTraining:
    def test_separable_data_reaches_purity(self):
        X, y = _separable()
        instances = make_instances(X, y)
        model = train_forest(instances, ForestParams(trees=5, master_seed=3), ["x"])
        probs = model.positive_probabilities(X)
        # every leaf is pure on its bootstrap sample
        assert set(np.unique(probs)) <= {0.0, 1.0}
        # away from the class boundary the ensemble is unanimous; bootstrap
        # may misplace points hugging the boundary itself
        margin = np.abs(X[:, 0]) > 0.1
        predictions = probs.mean(axis=0)
        assert np.all((predictions[margin] > 0.5) == (y[margin] == 1))

    def test_determinism(self):
        X, y = _separable(seed=5)
        instances = make_instances(X, y)
        params = ForestParams(trees=4, master_seed=77)
        a = train_forest(instances, params, ["x"])
        b = train_forest(instances, params, ["x"])
        for ta, tb in zip(a.trees, b.trees):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert np.array_equal(ta.value, tb.value)
        c = train_forest(instances, ForestParams(trees=4, master_seed=78), ["x"])
        assert any(
            not np.array_equal(ta.threshold, tc.threshold)
            for ta, tc in zip(a.trees, c.trees)
        )

    def test_single_class_rejected(self):
        X, _ = _separable()
        instances = make_instances(X, np.zeros(len(X), dtype=int))
        with pytest.raises(DataError, match="two relevance classes"):
            train_forest(instances, ForestParams(trees=2), ["x"])

    def test_importances_normalized(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(120, 6))
        y = (X[:, 2] > 0.3).astype(int)
        model = train_forest(
            make_instances(X, y),
            ForestParams(trees=10, feature_subset=2, master_seed=1),
            [f"f{i}" for i in range(6)],
        )
        assert model.feature_importances.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(model.feature_importances >= 0.0)
        assert np.argmax(model.feature_importances) == 2

    def test_noise_importances_stay_near_uniform(self):
        # Monte-Carlo oracle: with permuted labels no feature should stand out.
        n_features = 28
        cap = 3.0 / n_features
        for seed in range(30):
            rng = np.random.default_rng(1000 + seed)
            X = rng.normal(size=(200, n_features))
            y = np.zeros(200, dtype=int)
            y[:100] = 1
            rng.shuffle(y)
            model = train_forest(
                make_instances(X, y),
                ForestParams(trees=30, feature_subset=6, master_seed=seed),
                [f"f{i}" for i in range(n_features)],
            )
            assert float(model.feature_importances.max()) < cap, seed

    def test_max_depth_and_min_leaf_respected(self):
        X, y = _separable(n=200, seed=8)
        instances = make_instances(X, y)
        shallow = train_forest(
            instances, ForestParams(trees=3, max_depth=1, master_seed=0), ["x"]
        )
        for tree in shallow.trees:
            internal = tree.feature >= 0
            assert internal.sum() <= 1
        chunky = train_forest(
            instances, ForestParams(trees=3, min_leaf=30, master_seed=0), ["x"]
        )
        for tree in chunky.trees:
            # every leaf carries at least min_leaf bootstrap rows: with n=200
            # and min_leaf=30 a tree cannot have more than 6 leaves
            assert (tree.feature < 0).sum() <= 200 // 30


def _manual_model(leaf_values, feature_names=("x",)):
    trees = []
    for value in leaf_values:
        trees.append(
            Tree(
                feature=np.asarray([-1], dtype=np.int32),
                threshold=np.asarray([0.0]),
                left=np.asarray([-1], dtype=np.int32),
                right=np.asarray([-1], dtype=np.int32),
                value=np.asarray([value], dtype=np.float64),
            )
        )
    importances = np.full(len(feature_names), 1.0 / len(feature_names))
    return ForestModel(
        params=ForestParams(trees=len(trees)),
        feature_names=tuple(feature_names),
        trees=trees,
        feature_importances=importances,
    )


class TestScoring:
    def test_single_tree_probability_passthrough(self):
        model = _manual_model([0.7])
        assert hybrid_suspiciousness(model, np.asarray([0.0]), 1.0, 0.0) == pytest.approx(0.7)

    def test_ensemble_average(self):
        model = _manual_model([0.6, 0.8])
        assert hybrid_suspiciousness(model, np.asarray([0.0]), 1.0, 0.0) == pytest.approx(0.7)

    def test_zero_probability_yields_clean_relevance(self):
        model = _manual_model([0.0])
        assert hybrid_suspiciousness(model, np.asarray([0.0]), 2.0, -3.0) == -3.0

    def test_scores_bounded_by_relevances(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(150, 3))
        y = (X[:, 0] + 0.3 * rng.normal(size=150) > 0).astype(int)
        model = train_forest(
            make_instances(X, y, r_buggy=2.0, r_clean=0.5),
            ForestParams(trees=10, master_seed=2),
            ["a", "b", "c"],
        )
        scores = hybrid_scores(model, X, 2.0, 0.5)
        assert np.all(scores >= 0.5 - 1e-12)
        assert np.all(scores <= 2.0 + 1e-12)

    def test_identical_trees_equal_single_tree(self):
        X, y = _separable(seed=6)
        instances = make_instances(X, y)
        single = train_forest(instances, ForestParams(trees=1, master_seed=5), ["x"])
        tripled = ForestModel(
            params=single.params,
            feature_names=single.feature_names,
            trees=single.trees * 3,
            feature_importances=single.feature_importances,
        )
        a = hybrid_scores(single, X)
        b = hybrid_scores(tripled, X)
        assert np.allclose(a, b, atol=1e-12)

    def test_rank_invariant_under_affine_relabeling(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(120, 4))
        y = (X[:, 1] - 0.5 * X[:, 2] + 0.4 * rng.normal(size=120) > 0).astype(int)
        names = ["a", "b", "c", "d"]
        params = ForestParams(trees=8, master_seed=21)
        base = train_forest(make_instances(X, y, 1.0, 0.0), params, names)
        shifted = train_forest(make_instances(X, y, 7.0, 3.0), params, names)
        keys = [(f"f", i) for i in range(len(X))]
        rank_a = rank_lines(list(zip(keys, hybrid_scores(base, X, 1.0, 0.0).tolist())))
        rank_b = rank_lines(list(zip(keys, hybrid_scores(shifted, X, 7.0, 3.0).tolist())))
        assert rank_a.keys() == rank_b.keys()

    def test_feature_length_mismatch_rejected(self):
        model = _manual_model([0.5], feature_names=("a", "b"))
        with pytest.raises(DataError):
            hybrid_suspiciousness(model, np.asarray([1.0]))


class TestRanking:
    def test_descending_scores(self):
        report = rank_lines([(("a", 1), 0.1), (("a", 2), 0.9)])
        assert report.keys() == [("a", 2), ("a", 1)]
        assert [rank for rank, _k, _s in report.entries] == [1, 2]

    def test_tie_break_file_then_line(self):
        report = rank_lines([(("b", 1), 0.5), (("a", 2), 0.5), (("a", 1), 0.5)])
        assert report.keys() == [("a", 1), ("a", 2), ("b", 1)]

    def test_input_permutation_irrelevant(self):
        scored = [(("a", i), s) for i, s in enumerate([0.3, 0.9, 0.9, 0.1])]
        a = rank_lines(scored)
        b = rank_lines(list(reversed(scored)))
        assert a.entries == b.entries

    def test_duplicate_keys_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            rank_lines([(("a", 1), 0.5), (("a", 1), 0.6)])


class TestPersistence:
    def test_round_trip_scores_identical(self, tmp_path):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(100, 5))
        y = (X[:, 0] > 0).astype(int)
        names = [f"f{i}" for i in range(5)]
        model = train_forest(
            make_instances(X, y), ForestParams(trees=6, master_seed=10), names
        )
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.feature_names == tuple(names)
        assert np.array_equal(
            hybrid_scores(model, X), hybrid_scores(loaded, X)
        )
        assert np.array_equal(model.feature_importances, loaded.feature_importances)

    def test_ranked_csv_headers(self, tmp_path):
        model = _manual_model([0.5], feature_names=("a", "b", "c", "d"))
        report = rank_lines([(("f", 1), 0.9), (("f", 2), 0.2)])
        out = tmp_path / "ranked.csv"
        write_ranked_csv(out, report, model)
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# top_features: ")
        assert lines[1] == "rank,file,line_no,HySusp"
        assert lines[2].startswith("1,f,1,")

    def test_load_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format": "nope"}))
        with pytest.raises(DataError):
            load_model(path)


class TestKernels:
    def _inputs(self, seed, n=150, f=7):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, f))
        X[:, : f // 2] = np.round(X[:, : f // 2])  # plenty of ties
        y = (rng.random(n) < 0.35).astype(np.uint8)
        rows = rng.integers(0, n, size=n, dtype=np.int64)
        return X, y, rows

    def test_pure_build_predict_roundtrip(self):
        X, y, rows = self._inputs(0)
        out = pure.build_tree(X, y, rows, 3, 1, -1, 1234)
        feature, threshold, left, right, value, importance = out
        assert feature.shape == threshold.shape == value.shape
        assert importance.shape == (X.shape[1],)
        preds = pure.predict_tree(feature, threshold, left, right, value, X)
        assert np.all((preds >= 0.0) & (preds <= 1.0))

    @pytest.mark.skipif(
        kernels.IMPLEMENTATION != "compiled", reason="compiled kernels not built"
    )
    def test_compiled_matches_pure_bit_for_bit(self):
        from entrospect.kernels import _speedups

        for seed in range(12):
            X, y, rows = self._inputs(seed)
            for min_leaf, depth in ((1, -1), (5, -1), (1, 3)):
                a = pure.build_tree(X, y, rows, 3, min_leaf, depth, seed * 77 + 5)
                b = _speedups.build_tree(X, y, rows, 3, min_leaf, depth, seed * 77 + 5)
                for arr_a, arr_b in zip(a, b):
                    assert np.array_equal(arr_a, arr_b)
                preds_a = pure.predict_tree(*a[:5], X)
                preds_b = _speedups.predict_tree(*b[:5], X)
                assert np.array_equal(preds_a, preds_b)
