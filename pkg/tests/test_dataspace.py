import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otmix.dataspace import (
    Bernoulli,
    DataSource,
    Dataset,
    MixingRatio,
    MixtureSpec,
    Permutation,
    apportion,
    compose,
    corrupt_labels,
    read_dataset_csv,
    sample_pilot,
    strip_labels,
    write_dataset_csv,
)
from otmix.errors import (
    EmptySampleError,
    InsufficientDataError,
    ModeError,
    SizeError,
    ValidationError,
)
from otmix.transport import CostSpec, cost_matrix, exact_ot

from conftest import random_dataset


def oracle_largest_remainder(budget, p):
    """Independent hand-coded apportionment for cross-checking."""
    quotas = [budget * x for x in p]
    floors = [int(q) for q in quotas]
    counts = floors[:]
    remainder = budget - sum(floors)
    fracs = sorted(range(len(p)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in fracs[:remainder]:
        counts[i] += 1
    return counts


class TestMixingRatio:
    def test_valid(self):
        r = MixingRatio((0.5, 0.3, 0.2))
        assert r.m == 3
        assert np.allclose(r.array, [0.5, 0.3, 0.2])

    @pytest.mark.parametrize("bad", [(0.5, 0.6), (-0.1, 1.1), (0.5, 0.5, 0.1)])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            MixingRatio(bad)

    def test_uniform_on_simplex(self):
        for m in range(1, 8):
            r = MixingRatio.uniform(m)
            assert abs(sum(r.p) - 1.0) <= 1e-9


class TestApportion:
    def test_thirds_tie_break(self):
        counts = apportion(10, MixingRatio((1 / 3, 1 / 3, 1 / 3)))
        assert counts.tolist() == [4, 3, 3]

    def test_hand_executed_case(self):
        # floors (3,2,1) leave one unit; source 0 has the largest fraction 0.5
        counts = apportion(7, MixingRatio((0.5, 0.3, 0.2)))
        assert counts.tolist() == [4, 2, 1]
        assert counts.tolist() == oracle_largest_remainder(7, (0.5, 0.3, 0.2))

    @given(
        budget=st.integers(min_value=1, max_value=500),
        weights=st.lists(st.integers(min_value=0, max_value=100), min_size=1, max_size=6).filter(
            lambda w: sum(w) > 0
        ),
    )
    @settings(max_examples=200, deadline=None)
    def test_budget_exact(self, budget, weights):
        total = sum(weights)
        ratio = MixingRatio(tuple(w / total for w in weights))
        counts = apportion(budget, ratio)
        assert counts.sum() == budget
        assert (counts >= 0).all()

    def test_permutation_equivariance_distinct_fractions(self, rng):
        p = (0.47, 0.31, 0.22)
        budget = 13
        base = apportion(budget, MixingRatio(p)).tolist()
        perm = [2, 0, 1]
        permuted = apportion(budget, MixingRatio(tuple(p[i] for i in perm))).tolist()
        assert permuted == [base[i] for i in perm]


class TestSamplePilot:
    def test_permutation_full_size_returns_everything(self):
        full = random_dataset(0, 10, num_classes=3)
        src = DataSource(full=full, pilot_size=10)
        out = sample_pilot(src, Permutation(), seed=5)
        assert out.n == 10
        assert sorted(map(tuple, out.features)) == sorted(map(tuple, full.features))
        assert not np.array_equal(out.features, full.features)  # order permuted

    def test_bernoulli_rate_one_keeps_all(self):
        full = random_dataset(1, 25, num_classes=2)
        out = sample_pilot(DataSource(full, 5), Bernoulli(1.0), seed=9)
        assert out.n == 25
        np.testing.assert_array_equal(out.features, full.features)

    def test_seed_variation_monte_carlo(self):
        # two seeds should essentially never give the same 100-point subset
        full = random_dataset(2, 1000)
        src = DataSource(full, 100)
        distinct = 0
        for pair in range(100):
            a = sample_pilot(src, Permutation(), seed=2 * pair)
            b = sample_pilot(src, Permutation(), seed=2 * pair + 1)
            sa = set(map(tuple, a.features))
            sb = set(map(tuple, b.features))
            if sa ^ sb:
                distinct += 1
        assert distinct >= 99

    def test_pilot_too_large(self):
        full = random_dataset(3, 5)
        with pytest.raises(SizeError):
            DataSource(full, 6)
        src = DataSource(full, 5)
        assert sample_pilot(src, Permutation(), seed=0).n == 5

    def test_bernoulli_empty_sample(self):
        full = random_dataset(4, 3)
        with pytest.raises(EmptySampleError):
            sample_pilot(DataSource(full, 1), Bernoulli(1e-9), seed=11)

    def test_deterministic(self):
        full = random_dataset(5, 50, num_classes=4)
        src = DataSource(full, 20)
        a = sample_pilot(src, Permutation(), seed=7)
        b = sample_pilot(src, Permutation(), seed=7)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestCompose:
    def _sources(self, sizes, seed=0):
        return [random_dataset(seed + i, n, num_classes=2) for i, n in enumerate(sizes)]

    def test_degenerate_vertex(self):
        sources = self._sources([60, 60, 60])
        spec = MixtureSpec(budget=50, ratio=MixingRatio((1.0, 0.0, 0.0)), seed=3)
        out = compose(sources, spec)
        assert out.n == 50
        assert set(out.source_index.tolist()) == {0}
        pool = set(map(tuple, sources[0].features))
        assert all(tuple(x) in pool for x in out.features)

    def test_budget_exact_property(self):
        sources = self._sources([100, 100, 100, 100])
        for seed in range(5):
            rng = np.random.default_rng(seed)
            v = rng.random(4)
            spec = MixtureSpec(budget=37, ratio=MixingRatio(tuple(v / v.sum())), seed=seed)
            assert compose(sources, spec).n == 37

    def test_metadata_attached(self):
        sources = self._sources([30, 30])
        ratio = MixingRatio((0.5, 0.5))
        out = compose(sources, MixtureSpec(budget=10, ratio=ratio, seed=1))
        assert out.ratio == ratio
        assert np.bincount(out.source_index).tolist() == [5, 5]

    def test_insufficient_data_names_source(self):
        sources = self._sources([100, 3])
        spec = MixtureSpec(budget=50, ratio=MixingRatio((0.5, 0.5)), seed=0)
        with pytest.raises(InsufficientDataError) as err:
            compose(sources, spec)
        assert err.value.source_index == 1
        assert "source 1" in str(err.value)

    def test_purity(self):
        sources = self._sources([40, 40, 40])
        spec = MixtureSpec(budget=30, ratio=MixingRatio((0.2, 0.5, 0.3)), seed=9)
        a = compose(sources, spec)
        b = compose(sources, spec)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.source_index, b.source_index)

    def test_without_replacement(self):
        sources = self._sources([20])
        out = compose(sources, MixtureSpec(budget=20, ratio=MixingRatio((1.0,)), seed=2))
        assert len(set(map(tuple, out.features))) == 20


class TestCorruptLabels:
    def test_fraction_zero_identity(self):
        data = random_dataset(6, 40, num_classes=4)
        out = corrupt_labels(data, 0.0, 4, seed=0)
        np.testing.assert_array_equal(out.labels, data.labels)
        np.testing.assert_array_equal(out.features, data.features)

    def test_fraction_one_binary_complement(self):
        data = random_dataset(7, 30, num_classes=2)
        out = corrupt_labels(data, 1.0, 2, seed=0)
        np.testing.assert_array_equal(out.labels, 1 - data.labels)

    def test_exact_count_differs(self):
        data = random_dataset(8, 100, num_classes=5)
        out = corrupt_labels(data, 0.25, 5, seed=3)
        assert int((out.labels != data.labels).sum()) == 25

    def test_features_preserved(self):
        data = random_dataset(9, 50, num_classes=3)
        out = corrupt_labels(data, 0.5, 3, seed=1)
        assert out.features is data.features

    def test_unlabeled_mode_error(self):
        data = random_dataset(10, 10)
        with pytest.raises(ModeError):
            corrupt_labels(data, 0.5, 2, seed=0)


class TestStripLabels:
    def test_projection(self):
        data = random_dataset(11, 20, num_classes=3)
        out = strip_labels(data)
        assert out.labels is None
        assert out.features is data.features

    def test_idempotent(self):
        data = random_dataset(12, 10)
        assert strip_labels(data) is data

    def test_feature_only_transport_equals_stripped(self):
        a = random_dataset(13, 6, num_classes=2)
        b = random_dataset(14, 7, num_classes=2)
        spec = CostSpec(feature_metric="sqeuclidean", label_weight=0.0)
        np.testing.assert_array_equal(
            cost_matrix(strip_labels(a), strip_labels(b), spec), cost_matrix(a, b, spec)
        )
        assert exact_ot(strip_labels(a), strip_labels(b), spec).cost == pytest.approx(
            exact_ot(a, b, spec).cost, abs=1e-12
        )


class TestCsvRoundTrip:
    def test_labeled_round_trip(self, tmp_path):
        data = random_dataset(15, 12, num_classes=3)
        path = tmp_path / "d.csv"
        write_dataset_csv(data, path)
        back = read_dataset_csv(path)
        np.testing.assert_array_equal(back.features, data.features)
        np.testing.assert_array_equal(back.labels, data.labels)

    def test_unlabeled_round_trip(self, tmp_path):
        data = random_dataset(16, 8)
        path = tmp_path / "u.csv"
        write_dataset_csv(data, path)
        back = read_dataset_csv(path)
        assert back.labels is None
        np.testing.assert_array_equal(back.features, data.features)

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,f0,f1\n0,1.0,2.0\n1,3.0\n")
        with pytest.raises(ValidationError):
            read_dataset_csv(path)

    def test_header_required(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("x,y\n1,2\n")
        with pytest.raises(ValidationError):
            read_dataset_csv(path)


class TestDatasetInvariants:
    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            Dataset(features=np.zeros((0, 2)))

    def test_label_length_checked(self):
        with pytest.raises(ValidationError):
            Dataset(features=np.zeros((3, 2)), labels=np.array([0, 1]))

    def test_negative_labels_rejected(self):
        with pytest.raises(ValidationError):
            Dataset(features=np.zeros((2, 2)), labels=np.array([0, -1]))
