import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puac.errors import DegeneratePrior, StructuralViolation
from puac.types import (
    AggregatedPriors,
    Bag,
    ClassLabel,
    LabeledSet,
    PriorMatrix,
    PuacDataset,
    RunConfig,
    SourceBag,
    aggregate_priors,
    make_rng,
    validate_priors,
)

STD = [[1, 0, 0], [0.5, 0.5, 0], [0.2, 0.3, 0.5]]


class TestLabels:
    def test_ordinal_encoding(self):
        assert [int(c) for c in ClassLabel] == [1, 2, 3]
        assert ClassLabel.from_tag("a") is ClassLabel.A
        assert ClassLabel.N.tag == "n"
        assert ClassLabel.from_index(0) is ClassLabel.P

    def test_source_distinct_from_label(self):
        assert len(SourceBag) == 3
        assert SourceBag.AUG.index == 2
        assert SourceBag.POS != ClassLabel.P


class TestValidatePriors:
    def test_standard_matrix_is_valid(self):
        theta = validate_priors(STD)
        assert isinstance(theta, PriorMatrix)
        assert theta.u_p == 0.5 and theta.a_a == 0.5

    def test_unlabeled_row_with_augmented_mass(self):
        with pytest.raises(StructuralViolation, match="unl"):
            validate_priors([[1, 0, 0], [0.5, 0.5, 0.1], [0.2, 0.3, 0.5]])

    def test_positive_row_must_be_pure(self):
        with pytest.raises(StructuralViolation):
            validate_priors([[0.9, 0.1, 0], [0.5, 0.5, 0], [0.2, 0.3, 0.5]])

    def test_negative_entry(self):
        with pytest.raises(StructuralViolation):
            validate_priors([[1, 0, 0], [1.2, -0.2, 0], [0.2, 0.3, 0.5]])

    def test_row_sum_off(self):
        with pytest.raises(StructuralViolation):
            validate_priors([[1, 0, 0], [0.5, 0.5, 0], [0.2, 0.3, 0.6]])

    def test_degenerate_augmented(self):
        with pytest.raises(DegeneratePrior):
            validate_priors([[1, 0, 0], [0.5, 0.5, 0], [0.5, 0.5, 0]])

    def test_degenerate_unlabeled(self):
        with pytest.raises(DegeneratePrior):
            validate_priors([[1, 0, 0], [1, 0, 0], [0.2, 0.3, 0.5]])

    def test_degenerate_allowed_on_request(self):
        assert validate_priors([[1, 0, 0], [1, 0, 0], [0.2, 0.3, 0.5]], allow_degenerate=True).is_degenerate

    def test_wrong_shape(self):
        with pytest.raises(StructuralViolation):
            validate_priors([[1, 0], [0, 1]])

    def test_rows_renormalized_exactly(self):
        theta = validate_priors([[1, 0, 0], [0.3 + 1e-12, 0.7, 0], [0.1, 0.2, 0.7 - 1e-12]])
        assert sum(theta.rows[1]) == 1.0
        assert sum(theta.rows[2]) == 1.0

    @settings(max_examples=200, deadline=None)
    @given(
        u_p=st.floats(0.0, 0.95),
        a_p=st.floats(0.0, 0.5),
        a_n=st.floats(0.0, 0.45),
    )
    def test_idempotent(self, u_p, a_p, a_n):
        raw = [[1, 0, 0], [u_p, 1 - u_p, 0], [a_p, a_n, 1 - a_p - a_n]]
        once = validate_priors(raw)
        assert validate_priors(once.rows) == once


class TestAggregate:
    def test_standard_equal_counts(self):
        pi = aggregate_priors(validate_priors(STD), 1000, 1000, 1000)
        np.testing.assert_allclose(pi.array, [1.7 / 3, 0.8 / 3, 0.5 / 3], atol=1e-12)
        np.testing.assert_allclose(pi.array, [0.5667, 0.2667, 0.1667], atol=5e-5)

    def test_pure_bags(self):
        theta = validate_priors([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
        pi = aggregate_priors(theta, 7, 7, 7)
        np.testing.assert_allclose(pi.array, [1 / 3] * 3, atol=1e-15)

    def test_counts_must_be_positive(self):
        with pytest.raises(ValueError):
            aggregate_priors(validate_priors(STD), 10, 0, 0)

    @settings(max_examples=200, deadline=None)
    @given(
        u_p=st.floats(0.0, 0.95),
        a_p=st.floats(0.0, 0.5),
        a_n=st.floats(0.0, 0.45),
        counts=st.tuples(*[st.integers(1, 10**6)] * 3),
    )
    def test_sums_to_one(self, u_p, a_p, a_n, counts):
        theta = validate_priors([[1, 0, 0], [u_p, 1 - u_p, 0], [a_p, a_n, 1 - a_p - a_n]])
        pi = aggregate_priors(theta, *counts)
        assert abs(pi.array.sum() - 1.0) <= 1e-12
        assert np.all(pi.array >= 0)

    def test_invalid_aggregated(self):
        with pytest.raises(ValueError):
            AggregatedPriors(0.5, 0.5, 0.1)
        with pytest.raises(ValueError):
            AggregatedPriors(1.1, -0.1, 0.0)


class TestDataset:
    def test_source_checked(self):
        x = np.zeros((2, 2))
        with pytest.raises(ValueError):
            PuacDataset(Bag(x, SourceBag.UNL), Bag(x, SourceBag.UNL), Bag(x, SourceBag.AUG))

    def test_dimension_checked(self):
        from puac.errors import DimensionMismatch

        with pytest.raises(DimensionMismatch):
            PuacDataset(Bag(np.zeros((2, 2)), SourceBag.POS), Bag(np.zeros((2, 3)), SourceBag.UNL), Bag(np.zeros((2, 2)), SourceBag.AUG))

    def test_counts_and_dim(self):
        ds = PuacDataset(
            Bag(np.zeros((2, 4)), SourceBag.POS),
            Bag(np.zeros((3, 4)), SourceBag.UNL),
            Bag(np.zeros((5, 4)), SourceBag.AUG),
            LabeledSet(np.zeros((3, 4)), np.array([1, 2, 3])),
        )
        assert ds.counts == (2, 3, 5)
        assert ds.dim == 4
        np.testing.assert_array_equal(ds.test.class_counts(), [1, 1, 1])

    def test_labels_validated(self):
        with pytest.raises(ValueError):
            LabeledSet(np.zeros((2, 1)), np.array([1, 4]))


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.output_dim == 3
        assert RunConfig(loss_kind="ordinal").output_dim == 1

    @pytest.mark.parametrize(
        "kw", [{"loss_kind": "hinge"}, {"model_kind": "cnn"}, {"rho": 1.0}, {"eps": 0.0}, {"batch_size": 0}]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            RunConfig(**kw)


class TestRng:
    def test_streams_reproducible(self):
        a = make_rng(5, "datagen", "pos").random(4)
        b = make_rng(5, "datagen", "pos").random(4)
        np.testing.assert_array_equal(a, b)

    def test_streams_independent(self):
        a = make_rng(5, "datagen", "pos").random(4)
        assert not np.array_equal(a, make_rng(5, "datagen", "unl").random(4))
        assert not np.array_equal(a, make_rng(6, "datagen", "pos").random(4))
