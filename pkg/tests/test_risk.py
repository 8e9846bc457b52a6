import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puac.errors import DegeneratePrior, DimensionMismatch, EmptyBag, MissingClass
from puac.models import Scorer, init_scorer
from puac.risk import (
    RewriteCoefficients,
    corrected_loss,
    empirical_puac_risk,
    rewrite_coefficients,
    supervised_risk,
)
from puac.types import (
    AggregatedPriors,
    Bag,
    LabeledSet,
    PuacDataset,
    SourceBag,
    aggregate_priors,
    validate_priors,
)

from conftest import central_difference, rel_error

STD = validate_priors([[1, 0, 0], [0.5, 0.5, 0], [0.2, 0.3, 0.5]])
SUPERVISED = validate_priors([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
PI_STD = aggregate_priors(STD, 1, 1, 1)


def _zero_model(d=2, out=3):
    return Scorer("linear", d, out, (np.zeros((out, d)), np.zeros(out)))


class TestCoefficients:
    def test_supervised_case_collapses(self):
        pi = AggregatedPriors(0.2, 0.3, 0.5)
        c = rewrite_coefficients(SUPERVISED, pi)
        np.testing.assert_allclose(c.matrix, np.diag([0.2, 0.3, 0.5]), atol=0)

    def test_pure_augmented_bag_has_no_cross_terms(self):
        theta = validate_priors([[1, 0, 0], [0.5, 0.5, 0], [0, 0, 1]])
        c = rewrite_coefficients(theta, aggregate_priors(theta, 1, 1, 1))
        assert c.alpha_a == 0.0
        assert c.beta_a == 0.0

    def test_standard_values_by_hand(self):
        c = rewrite_coefficients(STD, PI_STD)
        pp, pn, pa = 1.7 / 3, 0.8 / 3, 0.5 / 3
        expected = [[pp, -pn, 0.2 * pa], [0, 2 * pn, -1.2 * pa], [0, 0, 2 * pa]]
        np.testing.assert_allclose(c.matrix, expected, rtol=1e-14)

    def test_each_bag_row_sums_to_one_third(self):
        # sum_c w[s, c] equals the bag's share of the pooled sample for equal counts
        np.testing.assert_allclose(rewrite_coefficients(STD, PI_STD).matrix.sum(axis=1), [1 / 3] * 3, rtol=1e-14)

    def test_degenerate(self):
        theta = validate_priors([[1, 0, 0], [0.5, 0.5, 0], [0.5, 0.5, 0]], allow_degenerate=True)
        with pytest.raises(DegeneratePrior):
            rewrite_coefficients(theta, aggregate_priors(theta, 1, 1, 1))

    @settings(max_examples=200, deadline=None)
    @given(u_p=st.floats(0, 0.95), a_p=st.floats(0, 0.5), a_n=st.floats(0, 0.45))
    def test_sign_invariants(self, u_p, a_p, a_n):
        theta = validate_priors([[1, 0, 0], [u_p, 1 - u_p, 0], [a_p, a_n, 1 - a_p - a_n]])
        c = rewrite_coefficients(theta, aggregate_priors(theta, 3, 2, 5))
        assert c.beta_p == c.gamma_p == c.gamma_n == 0.0
        assert c.gamma_a > 0 and c.beta_n > 0
        assert c.alpha_n <= 0 and c.beta_a <= 0

    def test_round_trip_helpers(self):
        c = rewrite_coefficients(STD, PI_STD)
        assert RewriteCoefficients.from_matrix(c.matrix) == c
        assert c.to_dict()["gamma_a"] == c.gamma_a
        np.testing.assert_array_equal(c.weights(SourceBag.UNL), c.matrix[1])


class TestCorrectedLoss:
    def test_aug_bag_single_term(self):
        c = rewrite_coefficients(STD, PI_STD)
        f = np.array([0.3, -0.7, 1.1])
        v, _ = corrected_loss(SourceBag.AUG, f, c)
        expected = c.gamma_a * ((1 - 1.1) ** 2 + (1 + 0.3) ** 2 + (1 - 0.7) ** 2)
        assert v == pytest.approx(expected, rel=1e-14)

    def test_supervised_unlabeled_zero_scores(self):
        c = rewrite_coefficients(SUPERVISED, PI_STD)
        assert corrected_loss(SourceBag.UNL, np.zeros(3), c)[0] == pytest.approx(3 * PI_STD.n, rel=1e-15)

    def test_ordinal_exact_hit(self):
        c = rewrite_coefficients(SUPERVISED, PI_STD)
        assert corrected_loss(SourceBag.POS, 1.0, c, "ordinal") == (0.0, pytest.approx(np.zeros(1)))

    def test_can_be_negative(self):
        c = rewrite_coefficients(STD, PI_STD)
        v, _ = corrected_loss(SourceBag.UNL, np.array([-1.0, 1.0, -1.0]), c)
        assert v < 0

    def test_dimension_mismatch(self):
        c = rewrite_coefficients(STD, PI_STD)
        with pytest.raises(DimensionMismatch):
            corrected_loss(SourceBag.POS, np.zeros((4, 2)), c)


def _pure_dataset(rng, n=(40, 50, 60), d=2):
    return PuacDataset(
        Bag(rng.normal(size=(n[0], d)), SourceBag.POS, np.full(n[0], 1)),
        Bag(rng.normal(1, 1, size=(n[1], d)), SourceBag.UNL, np.full(n[1], 2)),
        Bag(rng.normal(-1, 1, size=(n[2], d)), SourceBag.AUG, np.full(n[2], 3)),
    )


def _pooled(data):
    return LabeledSet(np.concatenate([b.x for b in data.bags]), np.concatenate([b.labels for b in data.bags]))


class TestEmpiricalRisk:
    def test_supervised_reduction(self):
        rng = np.random.default_rng(0)
        data = _pure_dataset(rng)
        pi = aggregate_priors(SUPERVISED, *data.counts)
        c = rewrite_coefficients(SUPERVISED, pi)
        for kind, out in (("ovr", 3), ("ordinal", 1)):
            m = init_scorer("mlp", 2, out, rng, 5)
            r, _ = empirical_puac_risk(m, data, c, kind)
            assert abs(r - supervised_risk(m, _pooled(data), pi, kind)) <= 1e-12

    def test_constant_model(self, small_benchmark):
        c = rewrite_coefficients(STD, PI_STD)
        r, _ = empirical_puac_risk(_zero_model(), small_benchmark, c)
        assert r == pytest.approx(3 * c.matrix.sum(), rel=1e-14)
        assert r == pytest.approx(3.0, rel=1e-14)

    def test_linear_in_coefficients(self, small_benchmark):
        c = rewrite_coefficients(STD, PI_STD)
        m = init_scorer("mlp", 2, 3, np.random.default_rng(1), 4)
        r1, g1 = empirical_puac_risk(m, small_benchmark, c)
        r2, g2 = empirical_puac_risk(m, small_benchmark, c.scaled(2.5))
        assert r2 == pytest.approx(2.5 * r1, rel=1e-13)
        np.testing.assert_allclose(g2, 2.5 * g1, rtol=1e-12, atol=1e-14)

    @pytest.mark.parametrize("kind,out", [("ovr", 3), ("ordinal", 1)])
    def test_gradient_finite_difference(self, small_benchmark, kind, out):
        c = rewrite_coefficients(STD, PI_STD)
        rng = np.random.default_rng(2)
        m = init_scorer("mlp", 2, out, rng, 4)
        r, g = empirical_puac_risk(m, small_benchmark, c, kind)
        fd = central_difference(lambda p: empirical_puac_risk(m.with_flat(p), small_benchmark, c, kind, need_grad=False)[0], m.flat())
        assert rel_error(g, fd) <= 1e-5

    def test_minibatch_is_unbiased(self, small_benchmark):
        c = rewrite_coefficients(STD, PI_STD)
        m = init_scorer("linear", 2, 3, np.random.default_rng(3))
        full, _ = empirical_puac_risk(m, small_benchmark, c, need_grad=False)
        rng = np.random.default_rng(4)
        draws = np.array(
            [empirical_puac_risk(m, small_benchmark, c, need_grad=False, batch_size=32, rng=rng)[0] for _ in range(3000)]
        )
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - full) < 4 * se

    def test_empty_bag(self):
        x = np.zeros((0, 2))
        data = PuacDataset(Bag(np.zeros((3, 2)), SourceBag.POS), Bag(x, SourceBag.UNL), Bag(np.zeros((3, 2)), SourceBag.AUG))
        with pytest.raises(EmptyBag):
            empirical_puac_risk(_zero_model(), data, rewrite_coefficients(STD, PI_STD))

    def test_bag_order_fixed(self, small_benchmark):
        c = rewrite_coefficients(STD, PI_STD)
        m = init_scorer("mlp", 2, 3, np.random.default_rng(5), 4)
        a = empirical_puac_risk(m, small_benchmark, c)
        b = empirical_puac_risk(m, small_benchmark, c)
        assert a[0] == b[0] and np.array_equal(a[1], b[1])


class TestSupervisedRisk:
    def test_one_sample_per_class(self):
        labeled = LabeledSet(np.zeros((3, 2)), np.array([1, 2, 3]))
        assert supervised_risk(_zero_model(), labeled, PI_STD) == pytest.approx(3.0, rel=1e-15)

    def test_positive_prior_only(self):
        rng = np.random.default_rng(6)
        labeled = LabeledSet(rng.normal(size=(9, 2)), np.repeat([1, 2, 3], 3))
        m = init_scorer("linear", 2, 3, rng)
        r = supervised_risk(m, labeled, AggregatedPriors(1.0, 0.0, 0.0))
        pos = LabeledSet(labeled.x[:3], labeled.y[:3])
        scores = m.score(pos.x)
        expected = np.mean((1 - scores[:, 0]) ** 2 + (1 + scores[:, 1]) ** 2 + (1 + scores[:, 2]) ** 2)
        assert r == pytest.approx(expected, rel=1e-13)

    def test_missing_class(self):
        with pytest.raises(MissingClass):
            supervised_risk(_zero_model(), LabeledSet(np.zeros((2, 2)), np.array([1, 2])), PI_STD)
