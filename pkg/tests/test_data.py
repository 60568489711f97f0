import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from offbandit import (
    DataError,
    Dataset,
    FeatureSchema,
    PreprocessStats,
    accel_magnitude,
    binarize_rewards,
    export_csv,
    ingest_csv,
    kfold_split,
    load_dataset,
    scale_features,
    split_multi_action,
)
from offbandit.synth import SynthConfig, generate


def small_schema():
    return FeatureSchema(
        names=("mood", "at_home"),
        kinds=("continuous", "binary"),
        arm_names=("s1", "s2", "s3"),
    )


class TestFeatureSchema:
    def test_rejects_duplicate_names(self):
        with pytest.raises(DataError):
            FeatureSchema(("a", "a"), ("binary", "binary"), ("x", "y"))

    def test_rejects_kind_length_mismatch(self):
        with pytest.raises(DataError):
            FeatureSchema(("a", "b"), ("binary",), ("x", "y"))

    def test_rejects_single_arm(self):
        with pytest.raises(DataError):
            FeatureSchema(("a",), ("binary",), ("x",))

    def test_rejects_unknown_kind(self):
        with pytest.raises(DataError):
            FeatureSchema(("a",), ("ordinal",), ("x", "y"))

    def test_unknown_arm_label_is_named(self):
        with pytest.raises(DataError, match="s9"):
            small_schema().arm_index("s9")

    def test_json_round_trip(self):
        schema = small_schema()
        assert FeatureSchema.from_json_dict(schema.to_json_dict()) == schema


class TestAccelMagnitude:
    def test_three_four_zero(self):
        assert accel_magnitude(3, 0, 4) == pytest.approx(5 / 3)

    def test_zero(self):
        assert accel_magnitude(0, 0, 0) == 0.0

    def test_unit_diagonal(self):
        assert accel_magnitude(1, 1, 1) == pytest.approx(math.sqrt(3) / 3)

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            accel_magnitude(float("nan"), 0, 0)

    @given(
        st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100),
        st.permutations([0, 1, 2]),
        st.tuples(st.sampled_from([-1, 1]), st.sampled_from([-1, 1]), st.sampled_from([-1, 1])),
    )
    def test_invariant_under_signed_axis_permutations(self, x, y, z, perm, signs):
        """All 48 signed permutations of the axes give the same magnitude."""
        v = [x, y, z]
        permuted = [signs[i] * v[perm[i]] for i in range(3)]
        assert accel_magnitude(*permuted) == pytest.approx(accel_magnitude(x, y, z))


class TestSplitMultiAction:
    def test_pair_shares_effectiveness(self):
        out = split_multi_action(np.array([0.5, 1.0]), [1, 3], 6.0)
        assert len(out) == 2
        assert [s.action for s in out] == [1, 3]
        assert all(s.effectiveness_raw == 6.0 for s in out)

    def test_singleton_is_identity(self):
        out = split_multi_action(np.array([0.5]), [2], 4.0)
        assert len(out) == 1 and out[0].action == 2

    def test_empty_set_rejected(self):
        with pytest.raises(DataError):
            split_multi_action(np.array([0.5]), [], 4.0)

    def test_effectiveness_mass_scales_with_set_size(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            size = int(rng.integers(1, 5))
            eff = float(rng.uniform(0, 10))
            out = split_multi_action(np.zeros(1), list(range(size)), eff)
            assert sum(s.effectiveness_raw for s in out) == pytest.approx(size * eff)

    def test_counting_oracle_on_generated_corpus(self):
        """Total samples after expansion equals the sum of per-record multiplicities."""
        rng = np.random.default_rng(7)
        n_records = 4886
        doubles = set(rng.choice(n_records, size=1373, replace=False).tolist())
        total = 0
        for i in range(n_records):
            arms = [0, 1] if i in doubles else [0]
            total += len(split_multi_action(np.zeros(2), arms, 5.0))
        assert total == 6259


class TestBinarizeRewards:
    def make(self, eff):
        eff = np.asarray(eff, dtype=float)
        n = len(eff)
        return Dataset(
            schema=small_schema(),
            contexts=np.zeros((n, 2)),
            actions=np.zeros(n, dtype=int),
            effectiveness=eff,
        )

    def test_strict_threshold_sends_ties_to_zero(self):
        out = binarize_rewards(self.make([3, 5, 7]))
        assert out.stats.grand_mean == 5.0
        np.testing.assert_array_equal(out.rewards, [0, 0, 1])

    def test_all_equal_gives_all_zero(self):
        out = binarize_rewards(self.make([4, 4, 4, 4]))
        assert out.rewards.sum() == 0

    def test_fraction_matches_count_oracle(self):
        rng = np.random.default_rng(11)
        eff = rng.uniform(0, 10, 10_000)
        out = binarize_rewards(self.make(eff))
        expected = float((eff > eff.mean()).sum()) / len(eff)
        assert out.rewards.mean() == pytest.approx(expected, abs=0)

    def test_idempotent_with_stored_grand_mean(self):
        once = binarize_rewards(self.make([1, 2, 9]))
        twice = binarize_rewards(once)
        assert twice.stats.grand_mean == once.stats.grand_mean
        np.testing.assert_array_equal(twice.rewards, once.rewards)

    def test_stored_grand_mean_wins_over_recomputation(self):
        ds = self.make([1, 2, 9])
        ds = Dataset(
            schema=ds.schema, contexts=ds.contexts, actions=ds.actions,
            effectiveness=ds.effectiveness, stats=PreprocessStats(grand_mean=8.5),
        )
        out = binarize_rewards(ds)
        np.testing.assert_array_equal(out.rewards, [0, 0, 1])

    def test_requires_effectiveness(self):
        ds = Dataset(
            schema=small_schema(),
            contexts=np.zeros((2, 2)),
            actions=np.zeros(2, dtype=int),
            rewards=np.array([0.0, 1.0]),
        )
        with pytest.raises(DataError):
            binarize_rewards(ds)


class TestScaleFeatures:
    def make(self, col):
        col = np.asarray(col, dtype=float)
        contexts = np.column_stack([col, np.ones(len(col))])
        return Dataset(schema=small_schema(), contexts=contexts,
                       actions=np.zeros(len(col), dtype=int))

    def test_min_max_arithmetic(self):
        out = scale_features(self.make([2, 4, 6]))
        np.testing.assert_allclose(out.contexts[:, 0], [0.0, 0.5, 1.0])
        assert out.stats.feature_min["mood"] == 2.0
        assert out.stats.feature_max["mood"] == 6.0

    def test_constant_column_maps_to_zero(self):
        out = scale_features(self.make([5, 5]))
        np.testing.assert_array_equal(out.contexts[:, 0], [0.0, 0.0])

    def test_binary_column_untouched(self):
        ds = self.make([2, 4, 6])
        out = scale_features(ds)
        np.testing.assert_array_equal(out.contexts[:, 1], ds.contexts[:, 1])

    def test_train_stats_applied_to_held_out_with_clamping(self):
        train = scale_features(self.make([2, 4, 6]))
        test = scale_features(self.make([0, 4, 10]), stats=train.stats)
        np.testing.assert_allclose(test.contexts[:, 0], [0.0, 0.5, 1.0])

    def test_output_in_unit_interval(self):
        rng = np.random.default_rng(3)
        out = scale_features(self.make(rng.normal(0, 50, 200)))
        assert out.contexts[:, 0].min() >= 0.0
        assert out.contexts[:, 0].max() <= 1.0


class TestKFoldSplit:
    def make(self, n):
        return Dataset(schema=small_schema(), contexts=np.arange(2 * n, dtype=float).reshape(n, 2),
                       actions=np.zeros(n, dtype=int))

    def test_five_disjoint_folds_of_two(self):
        pairs = kfold_split(self.make(10), 5, seed=0)
        assert len(pairs) == 5
        seen = []
        for train, test in pairs:
            assert test.n_samples == 2
            assert train.n_samples == 8
            seen.extend(test.contexts[:, 0].tolist())
        assert sorted(seen) == sorted(self.make(10).contexts[:, 0].tolist())

    def test_same_seed_identical(self):
        a = kfold_split(self.make(10), 5, seed=42)
        b = kfold_split(self.make(10), 5, seed=42)
        for (ta, sa), (tb, sb) in zip(a, b):
            np.testing.assert_array_equal(ta.contexts, tb.contexts)
            np.testing.assert_array_equal(sa.contexts, sb.contexts)

    def test_fold_sizes_differ_by_at_most_one(self):
        pairs = kfold_split(self.make(11), 3, seed=1)
        sizes = sorted(test.n_samples for _, test in pairs)
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == 11

    def test_k_larger_than_t_rejected(self):
        with pytest.raises(DataError):
            kfold_split(self.make(3), 4, seed=0)


class TestIngestCsv:
    def write(self, tmp_path, text):
        path = tmp_path / "raw.csv"
        path.write_text(text)
        return path

    def test_rows_without_effectiveness_are_dropped(self, tmp_path):
        path = self.write(
            tmp_path,
            "mood,at_home,action,effectiveness\n"
            "0.2,1,s1,5\n"
            "0.4,0,s2,\n"
            "0.6,1,s3,7\n",
        )
        ds = ingest_csv(path, small_schema())
        assert ds.n_samples == 2
        np.testing.assert_array_equal(ds.actions, [0, 2])

    def test_unknown_arm_label_is_named(self, tmp_path):
        path = self.write(
            tmp_path,
            "mood,at_home,action,effectiveness\n0.2,1,s9,5\n",
        )
        with pytest.raises(DataError, match="s9"):
            ingest_csv(path, small_schema())

    def test_malformed_row_names_row_number(self, tmp_path):
        path = self.write(
            tmp_path,
            "mood,at_home,action,effectiveness\n0.2,1,s1,5\nnope,1,s1,5\n",
        )
        with pytest.raises(DataError, match="row 3"):
            ingest_csv(path, small_schema())

    def test_multi_action_cell_expands(self, tmp_path):
        path = self.write(
            tmp_path,
            "mood,at_home,action,effectiveness\n0.2,1,s1;s3,6\n",
        )
        ds = ingest_csv(path, small_schema())
        assert ds.n_samples == 2
        np.testing.assert_array_equal(ds.actions, [0, 2])
        np.testing.assert_array_equal(ds.effectiveness, [6.0, 6.0])

    def test_missing_continuous_filled_with_mean(self, tmp_path):
        path = self.write(
            tmp_path,
            "mood,at_home,action,effectiveness\n"
            "0.2,1,s1,5\n,1,s2,6\n0.6,0,s1,7\n",
        )
        ds = ingest_csv(path, small_schema())
        assert ds.contexts[1, 0] == pytest.approx(0.4)
        assert ds.stats.fill_values["mood"] == pytest.approx(0.4)
        assert ds.missing_mask[1, 0] and not ds.missing_mask[0, 0]

    def test_missing_binary_filled_with_mode(self, tmp_path):
        path = self.write(
            tmp_path,
            "mood,at_home,action,effectiveness\n"
            "0.1,1,s1,5\n0.2,1,s2,6\n0.3,,s1,7\n0.4,0,s2,4\n",
        )
        ds = ingest_csv(path, small_schema())
        assert ds.contexts[2, 1] == 1.0

    def test_missing_column_rejected(self, tmp_path):
        path = self.write(tmp_path, "mood,action,effectiveness\n0.2,s1,5\n")
        with pytest.raises(DataError, match="at_home"):
            ingest_csv(path, small_schema())

    def test_all_rows_dropped_is_an_error(self, tmp_path):
        path = self.write(tmp_path, "mood,at_home,action,effectiveness\n0.2,1,s1,\n")
        with pytest.raises(DataError):
            ingest_csv(path, small_schema())

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            ingest_csv(tmp_path / "absent.csv", small_schema())


class TestExportRoundTrip:
    def test_synthetic_export_round_trips_identically(self, tmp_path):
        """Write-then-read equality on a full-size synthetic dataset."""
        ds, _ = generate(SynthConfig(n_samples=6259, n_arms=10, n_features=12, seed=99))
        path = tmp_path / "synth.csv"
        export_csv(ds, path)
        back = load_dataset(path)
        assert back.schema == ds.schema
        np.testing.assert_array_equal(back.contexts, ds.contexts)
        np.testing.assert_array_equal(back.actions, ds.actions)
        np.testing.assert_array_equal(back.rewards, ds.rewards)

    def test_effectiveness_and_stats_round_trip(self, tmp_path):
        schema = small_schema()
        ds = Dataset(
            schema=schema,
            contexts=np.array([[0.25, 1.0], [0.75, 0.0]]),
            actions=np.array([0, 2]),
            effectiveness=np.array([3.0, 8.0]),
        )
        ds = binarize_rewards(ds)
        path = tmp_path / "d.csv"
        export_csv(ds, path)
        back = load_dataset(path)
        assert back.stats.grand_mean == ds.stats.grand_mean
        np.testing.assert_array_equal(back.effectiveness, ds.effectiveness)
        np.testing.assert_array_equal(back.rewards, ds.rewards)


class TestDatasetValidation:
    def test_action_out_of_range(self):
        with pytest.raises(DataError):
            Dataset(schema=small_schema(), contexts=np.zeros((1, 2)), actions=np.array([5]))

    def test_non_binary_rewards_rejected(self):
        with pytest.raises(DataError):
            Dataset(schema=small_schema(), contexts=np.zeros((1, 2)),
                    actions=np.array([0]), rewards=np.array([0.5]))

    def test_effectiveness_range_enforced(self):
        with pytest.raises(DataError):
            Dataset(schema=small_schema(), contexts=np.zeros((1, 2)),
                    actions=np.array([0]), effectiveness=np.array([11.0]))

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            Dataset(schema=small_schema(), contexts=np.zeros((0, 2)),
                    actions=np.zeros(0, dtype=int))

    def test_samples_view_matches_columns(self):
        ds = Dataset(
            schema=small_schema(),
            contexts=np.array([[0.1, 1.0], [0.9, 0.0]]),
            actions=np.array([0, 1]),
            rewards=np.array([1.0, 0.0]),
        )
        samples = ds.samples
        assert len(samples) == 2
        assert samples[1].action == 1 and samples[1].reward == 0.0
        back = Dataset.from_samples(ds.schema, samples)
        np.testing.assert_array_equal(back.contexts, ds.contexts)
