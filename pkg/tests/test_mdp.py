import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from targetnet_lab import (
    InvalidInputError,
    Mdp,
    NoStationaryDistributionError,
    Policy,
    build_transition_matrix,
    exact_q_pi,
    exact_q_star,
    is_ergodic,
    make_baird,
    make_kolter,
    make_random_mdp,
    reward_rate_and_differential_q,
    sample_transition,
    stationary_distribution,
)
from targetnet_lab.environments import SOLID
from targetnet_lab.mdp import sample_index, state_value_reduction


def self_loop(r=1.0, gamma=0.5, n_actions=1):
    return Mdp(np.ones((1, n_actions, 1)), np.full((1, n_actions), r), gamma)


class TestMdpValidation:
    def test_rejects_rows_not_summing_to_one(self):
        with pytest.raises(InvalidInputError):
            Mdp(np.array([[[0.5, 0.4]], [[0.5, 0.5]]]), np.zeros((2, 1)))

    def test_rejects_negative_probability(self):
        with pytest.raises(InvalidInputError):
            Mdp(np.array([[[1.5, -0.5]], [[0.5, 0.5]]]), np.zeros((2, 1)))

    def test_rejects_bad_gamma(self):
        with pytest.raises(InvalidInputError):
            self_loop(gamma=1.0)

    def test_policy_rows_must_be_stochastic(self):
        with pytest.raises(InvalidInputError):
            Policy(np.array([[0.6, 0.6]]))

    def test_arrays_are_read_only(self):
        mdp = self_loop()
        with pytest.raises(ValueError):
            mdp.p[0, 0, 0] = 0.0


class TestTransitionMatrix:
    def test_kolter_chain(self):
        k = make_kolter()
        np.testing.assert_allclose(build_transition_matrix(k.mdp, k.pi), [[0.5, 0.5], [0.5, 0.5]])

    def test_self_loop(self):
        np.testing.assert_array_equal(build_transition_matrix(self_loop(), Policy(np.ones((1, 1)))), [[1.0]])

    def test_baird_solid_target_goes_to_s7_solid(self):
        b = make_baird("control")
        P = build_transition_matrix(b.mdp, b.pi_target)
        expected = np.zeros(14)
        expected[6 * 2 + SOLID] = 1.0
        for s in range(7):
            np.testing.assert_array_equal(P[s * 2 + SOLID], expected)
        dashed = np.zeros(14)
        dashed[[2 * s + SOLID for s in range(6)]] = 1 / 6
        np.testing.assert_allclose(P[1 - SOLID], dashed, atol=1e-15)

    def test_entries_are_product_of_kernel_and_policy(self):
        mdp, _ = make_random_mdp(3, 3, 2, 2)
        pi = Policy(np.random.default_rng(0).dirichlet(np.ones(2), size=3))
        P = build_transition_matrix(mdp, pi)
        for s, a, s2, a2 in itertools.product(range(3), range(2), range(3), range(2)):
            assert P[s * 2 + a, s2 * 2 + a2] == pytest.approx(mdp.p[s, a, s2] * pi.table[s2, a2], abs=1e-15)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            build_transition_matrix(self_loop(), Policy.uniform(2, 1))


class TestStationaryDistribution:
    def test_symmetric(self):
        np.testing.assert_allclose(stationary_distribution(np.full((2, 2), 0.5)), [0.5, 0.5], atol=1e-12)

    def test_two_state_by_hand(self):
        np.testing.assert_allclose(stationary_distribution(np.array([[0.9, 0.1], [0.2, 0.8]])),
                                   [2 / 3, 1 / 3], atol=1e-12)

    def test_baird_state_chain_under_mu0(self):
        b = make_baird("control")
        p_mu = np.einsum("sa,sat->st", b.mu0.table, b.mdp.p)
        d = stationary_distribution(p_mu)
        np.testing.assert_allclose(d, [1 / 42] * 6 + [6 / 7], atol=1e-12)

    def test_reducible_chain_raises(self):
        with pytest.raises(NoStationaryDistributionError):
            stationary_distribution(np.eye(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 3))
    def test_left_fixed_point(self, seed, S, A):
        mdp, _ = make_random_mdp(seed, S, A, 2, mixing=0.05)
        P = build_transition_matrix(mdp, Policy.uniform(S, A))
        d = stationary_distribution(P)
        assert np.abs(d @ P - d).max() <= 1e-10
        assert (d >= 0).all() and d.sum() == pytest.approx(1.0, abs=1e-12)


class TestErgodicity:
    @pytest.mark.parametrize("P, expected", [
        (np.full((2, 2), 0.5), True),
        (np.eye(2), False),
        (np.array([[0.0, 1.0], [1.0, 0.0]]), False),
        (np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.0, 0.5]]), True),
    ])
    def test_cases(self, P, expected):
        assert is_ergodic(P) is expected

    def test_random_mdps_are_ergodic_under_uniform_policy(self):
        for seed in range(100):
            mdp, _ = make_random_mdp(seed, 4, 2, 2, mixing=0.05)
            assert is_ergodic(build_transition_matrix(mdp, Policy.uniform(4, 2)))


class TestExactValues:
    def test_geometric_series(self):
        np.testing.assert_allclose(exact_q_pi(self_loop(1.0, 0.5), Policy(np.ones((1, 1)))), [2.0])

    def test_kolter_values(self):
        k = make_kolter()
        np.testing.assert_allclose(exact_q_pi(k.mdp, k.pi), [1.0, 1.05], atol=1e-12)

    def test_q_pi_matches_monte_carlo(self):
        mdp, _ = make_random_mdp(11, 4, 2, 2, gamma=0.5)
        pi = Policy.uniform(4, 2)
        q = exact_q_pi(mdp, pi)
        rng = np.random.default_rng(5)
        n, horizon = 100_000, 40
        s = np.zeros(n, dtype=int)
        a = np.zeros(n, dtype=int)
        ret = np.zeros(n)
        disc = 1.0
        for _ in range(horizon):
            ret += disc * mdp.r[s, a]
            s = sample_index(mdp.p[s, a], rng.random(n))
            a = sample_index(pi.table[s], rng.random(n))
            disc *= 0.5
        se = ret.std() / np.sqrt(n)
        assert abs(ret.mean() - q[0]) <= 3 * se

    def test_q_pi_residual(self):
        mdp, _ = make_random_mdp(2, 5, 3, 2)
        pi = Policy.uniform(5, 3)
        q = exact_q_pi(mdp, pi)
        P = build_transition_matrix(mdp, pi)
        assert np.abs(q - mdp.r_vec - 0.9 * P @ q).max() <= 1e-10

    def test_q_star_zero_rewards(self):
        np.testing.assert_array_equal(exact_q_star(make_baird("control").mdp), np.zeros(14))

    def test_q_star_two_actions(self):
        mdp = Mdp(np.ones((1, 2, 1)), np.array([[1.0, 0.0]]), 0.5)
        np.testing.assert_allclose(exact_q_star(mdp), [2.0, 1.0], atol=1e-12)

    def test_q_star_matches_policy_enumeration(self):
        mdp, _ = make_random_mdp(4, 3, 2, 2, gamma=0.8)
        best = np.full(6, -np.inf)
        for acts in itertools.product(range(2), repeat=3):
            best = np.maximum(best, exact_q_pi(mdp, Policy.deterministic(np.array(acts), 2)))
        np.testing.assert_allclose(exact_q_star(mdp), best, atol=1e-10)


class TestDifferentialValues:
    def test_constant_reward(self):
        mdp = Mdp(make_kolter().mdp.p, np.full((2, 1), 3.0))
        rate, q = reward_rate_and_differential_q(mdp, Policy(np.ones((2, 1))))
        assert rate == pytest.approx(3.0)
        np.testing.assert_allclose(q, 0.0, atol=1e-12)

    def test_two_state_rate(self):
        mdp = Mdp(np.array([[[0.9, 0.1]], [[0.2, 0.8]]]), np.array([[1.0], [0.0]]))
        rate, _ = reward_rate_and_differential_q(mdp, Policy(np.ones((2, 1))))
        assert rate == pytest.approx(2 / 3, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_residual_and_normalization(self, seed):
        mdp, _ = make_random_mdp(seed, 4, 2, 2, gamma=None)
        pi = Policy.uniform(4, 2)
        rate, q = reward_rate_and_differential_q(mdp, pi)
        P = build_transition_matrix(mdp, pi)
        assert np.abs(q - (mdp.r_vec - rate + P @ q)).max() <= 1e-10
        assert abs(stationary_distribution(P) @ q) <= 1e-10

    def test_on_policy_stationarity(self):
        mdp, _ = make_random_mdp(8, 4, 2, 2)
        P = build_transition_matrix(mdp, Policy.uniform(4, 2))
        d = stationary_distribution(P)
        assert np.linalg.norm(d @ (P - np.eye(8))) <= 1e-10

    def test_non_ergodic_raises(self):
        mdp = Mdp(np.eye(2)[:, None, :], np.zeros((2, 1)))
        with pytest.raises(NoStationaryDistributionError):
            reward_rate_and_differential_q(mdp, Policy(np.ones((2, 1))))


class TestSampling:
    def test_deterministic_row(self):
        mdp = Mdp(np.array([[[0.0, 1.0]], [[1.0, 0.0]]]), np.array([[2.0], [0.0]]))
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert sample_transition(mdp, 0, 0, rng) == (2.0, 1)

    def test_baird_solid_goes_to_s7(self):
        b = make_baird()
        rng = np.random.default_rng(1)
        assert all(sample_transition(b.mdp, s, SOLID, rng)[1] == 6 for s in range(7))

    def test_empirical_frequencies(self):
        mdp, _ = make_random_mdp(9, 4, 2, 2)
        rng = np.random.default_rng(2)
        n = 100_000
        counts = np.bincount([sample_transition(mdp, 1, 1, rng)[1] for _ in range(n)], minlength=4)
        p = mdp.p[1, 1]
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma + 1)

    def test_reproducible(self):
        mdp, _ = make_random_mdp(9, 4, 2, 2)
        a = [sample_transition(mdp, 0, 0, np.random.default_rng(3))[1] for _ in range(5)]
        b = [sample_transition(mdp, 0, 0, np.random.default_rng(3))[1] for _ in range(5)]
        assert a == b


class TestStateValueReduction:
    def test_baird_reduction(self):
        b = make_baird()
        reduced, d = state_value_reduction(b.mdp, b.pi_target, b.mu0)
        assert reduced.n_actions == 1
        np.testing.assert_allclose(reduced.p[:, 0, 6], 1.0)
        np.testing.assert_allclose(d, [1 / 42] * 6 + [6 / 7], atol=1e-12)
