import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multirem.model import (
    EventDataset,
    Message,
    ModelConfig,
    SimulationDesign,
    inclusion_probability,
    marginal_covariance,
    mean_suitability,
    potential_receivers,
    simulate_dataset,
    simulate_event,
    simulate_receiver_sets,
    with_intercept,
)


class TestMeanSuitability:
    def test_all_zero(self):
        assert mean_suitability(
            np.zeros(3), np.zeros(3), 0.0, np.zeros(1), np.zeros(1), np.zeros(1)
        ) == 0.0

    def test_hand_case(self):
        # 0.25 + 0.25 - 4.5 + 1 * (0.5 + 0.2) = -3.3
        value = mean_suitability(
            beta=np.array([0.25, 0.0, 0.25]),
            x=np.array([1.0, 0.0, 1.0]),
            b_r=-4.5,
            u_r=np.array([1.0]),
            v_s=np.array([0.5]),
            w_si=np.array([0.2]),
        )
        assert value == pytest.approx(-3.3, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mean_suitability(np.zeros(2), np.zeros(3), 0.0,
                             np.zeros(1), np.zeros(1), np.zeros(1))
        with pytest.raises(ValueError):
            mean_suitability(np.zeros(2), np.zeros(2), 0.0,
                             np.zeros(1), np.zeros(2), np.zeros(1))

    @given(
        scale=st.floats(-3.0, 3.0),
        b_r=st.floats(-5.0, 5.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_superposition(self, scale, b_r):
        local = np.random.default_rng(0)
        beta = local.standard_normal(3)
        x = local.standard_normal(3)
        u, v, w = local.standard_normal((3, 2))
        base = mean_suitability(beta, x, 0.0, u, v, w)
        # linear in beta and additive in b_r
        assert mean_suitability(scale * beta, x, b_r, u, v, w) == pytest.approx(
            scale * mean_suitability(beta, x, 0.0, u, np.zeros(2), np.zeros(2))
            + b_r + float(u @ (v + w)), rel=1e-9, abs=1e-9,
        )
        # linear in v_s
        doubled = mean_suitability(beta, x, 0.0, u, 2 * v, w)
        assert doubled - base == pytest.approx(float(u @ v), rel=1e-9, abs=1e-9)


class TestSimulateEvent:
    def test_receiver_set_never_empty_and_argmax_included(self, rng):
        for _ in range(200):
            theta = rng.normal(scale=2.0, size=4)
            z, c, receivers = simulate_event(0, theta, 0.0, 0.4, rng)
            assert len(receivers) >= 1
            slots = potential_receivers(0, 5)
            assert int(slots[np.argmax(z)]) in receivers
            assert c < z.max()

    def test_mean_size_matches_independent_oracle(self, rng):
        n = 10**6
        theta = np.zeros((n, 3))
        _, c, y = simulate_receiver_sets(theta, 0.0, 0.4, rng)
        sizes = y.sum(axis=1)

        # independent re-implementation of the generative recipe
        oracle_rng = np.random.default_rng(99)
        zo = oracle_rng.standard_normal((n, 3))
        zmax = zo.max(axis=1)
        u = oracle_rng.uniform(size=n)
        from scipy.special import ndtr, ndtri
        co = 0.4 * ndtri(u * ndtr(zmax / 0.4))
        oracle_sizes = (zo > co[:, None]).sum(axis=1)

        se = np.sqrt(sizes.var() / n + oracle_sizes.var() / n)
        assert abs(sizes.mean() - oracle_sizes.mean()) < 3 * se

    def test_invalid_sigma(self, rng):
        with pytest.raises(ValueError):
            simulate_event(0, np.zeros(3), 0.0, 0.0, rng)


class TestInclusionProbability:
    def test_equal_scores_give_one(self):
        assert inclusion_probability(0.7, 0.7, 0.0, 0.4) == pytest.approx(1.0)

    def test_vanishes_for_deeply_negative_scores(self):
        assert inclusion_probability(-80.0, 0.5, 0.0, 0.4) == pytest.approx(0.0, abs=1e-300)
        # log-space evaluation keeps scores far past Phi's underflow point alive
        assert 0 < inclusion_probability(-14.0, 0.5, 0.0, 0.4) < 1e-200

    def test_reference_value(self):
        # Phi(-0.75)/Phi(1.25), frozen from mpmath
        assert inclusion_probability(-0.3, 0.5, 0.0, 0.4) == pytest.approx(
            0.25339888748733842, rel=1e-12
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            inclusion_probability(1.0, 0.5, 0.0, 0.4)
        with pytest.raises(ValueError):
            inclusion_probability(0.0, 0.5, 0.0, -1.0)

    def test_empirical_frequency_matches(self, rng):
        z = np.array([-0.3, 0.1, 0.5])
        n = 10**5
        from multirem.numerics import truncated_normal
        c = truncated_normal(np.zeros(n), 0.4, -np.inf, z.max(), rng)
        for zi in z:
            freq = np.mean(zi > c)
            p = inclusion_probability(zi, z.max(), 0.0, 0.4)
            se = np.sqrt(p * (1 - p) / n)
            assert abs(freq - p) < 3 * max(se, 1e-4)


class TestMarginalCovariance:
    def test_q0_identity(self):
        np.testing.assert_array_equal(marginal_covariance(np.zeros((4, 0))), np.eye(4))

    def test_hand_case(self):
        u = np.array([[1.0], [-1.0]])
        np.testing.assert_array_equal(
            marginal_covariance(u), np.array([[2.0, -1.0], [-1.0, 2.0]])
        )

    def test_diagonal_is_one_plus_squared_norm(self, rng):
        u = rng.standard_normal((5, 3))
        cov = marginal_covariance(u)
        np.testing.assert_allclose(np.diag(cov), 1 + (u ** 2).sum(axis=1))
        np.testing.assert_allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_monte_carlo_marginalization(self, rng):
        u = rng.standard_normal((4, 2)) * 0.8
        fixed_mean = rng.standard_normal(4)
        n = 10**5
        w = rng.standard_normal((n, 2))
        z = fixed_mean + w @ u.T + rng.standard_normal((n, 4))
        emp = np.cov(z.T)
        np.testing.assert_allclose(emp, marginal_covariance(u), atol=0.05)


class TestSimulateDataset:
    def test_reference_design_shapes(self, rng):
        design = SimulationDesign()
        assert design.n_actors == 50
        assert design.beta == (0.25, 0.0, 0.25)
        assert design.mu_b == -4.5
        assert design.sigma_b2 == 0.25
        assert design.sigma_c2 == 0.16
        assert design.message_rate == 40.0
        dataset, truth = simulate_dataset(
            SimulationDesign(n_actors=10, message_rate=2.0), rng
        )
        assert dataset.n_covariates == 3
        assert truth.U.shape == (10, 1)
        truth.validate(dataset)

    def test_degenerate_rate_allows_empty(self):
        design = SimulationDesign(n_actors=2, message_rate=1e-4, Q=0, beta=())
        dataset, _ = simulate_dataset(design, np.random.default_rng(0))
        assert dataset.n_messages == 0

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            SimulationDesign(message_rate=0.0)
        with pytest.raises(ValueError):
            SimulationDesign(message_rate=-3.0)

    def test_fixed_seed_is_bit_identical(self):
        design = SimulationDesign(n_actors=6, message_rate=3.0)
        d1, t1 = simulate_dataset(design, np.random.default_rng(42))
        d2, t2 = simulate_dataset(design, np.random.default_rng(42))
        assert d1.n_messages == d2.n_messages
        for m1, m2 in zip(d1.messages, d2.messages):
            assert m1.sender == m2.sender
            assert m1.receivers == m2.receivers
            np.testing.assert_array_equal(m1.covariates, m2.covariates)
        np.testing.assert_array_equal(t1.z, t2.z)

    def test_all_receiver_sets_non_empty(self, rng):
        dataset, _ = simulate_dataset(
            SimulationDesign(n_actors=12, message_rate=5.0, mu_b=-2.0), rng
        )
        for m in dataset.messages:
            assert len(m.receivers) >= 1


class TestEventDataset:
    def test_invariant_enforcement(self, rng):
        cov = rng.standard_normal((3, 1))
        with pytest.raises(ValueError):
            EventDataset(4, (Message(0, frozenset(), cov),), 1)
        with pytest.raises(ValueError):
            EventDataset(4, (Message(0, frozenset({0, 1}), cov),), 1)
        with pytest.raises(ValueError):
            EventDataset(4, (Message(0, frozenset({1}), cov),), 2)
        with pytest.raises(ValueError):
            EventDataset(4, (Message(5, frozenset({1}), cov),), 1)

    def test_receiver_indicator_alignment(self):
        cov = np.zeros((3, 0))
        ds = EventDataset(4, (Message(2, frozenset({0, 3}), cov),), 0)
        # potential receivers of sender 2 are [0, 1, 3]
        np.testing.assert_array_equal(
            ds.receiver_indicator(0), np.array([True, False, True])
        )

    def test_with_intercept(self, rng):
        ds, _ = simulate_dataset(SimulationDesign(n_actors=5, message_rate=2.0), rng)
        augmented = with_intercept(ds)
        assert augmented.n_covariates == ds.n_covariates + 1
        for before, after in zip(ds.messages, augmented.messages):
            np.testing.assert_array_equal(after.covariates[:, 0], 1.0)
            np.testing.assert_array_equal(after.covariates[:, 1:], before.covariates)
            assert after.receivers == before.receivers
