import numpy as np
import pytest

from targetnet_lab import InvalidInputError, Policy, build_transition_matrix, stationary_distribution
from targetnet_lab.environments import (
    DASHED,
    SOLID,
    baird_state_features,
    make_baird,
    make_kolter,
    make_random_mdp,
)
from targetnet_lab.oracles import build_evaluation_operators, evaluation_fixed_point_discounted


class TestBaird:
    def test_state_features(self):
        X = baird_state_features()
        np.testing.assert_array_equal(X[0], [2, 0, 0, 0, 0, 0, 0, 1])
        np.testing.assert_array_equal(X[6], [0, 0, 0, 0, 0, 0, 1, 2])

    def test_initial_weights(self):
        b = make_baird()
        np.testing.assert_array_equal(b.w0, [1, 1, 1, 1, 1, 1, 10, 1])
        assert make_baird("control").w0.shape == (15,)

    def test_control_features_interleaved(self):
        b = make_baird("control")
        X = b.X.X
        np.testing.assert_array_equal(X[2 * 0 + SOLID, :8], baird_state_features()[0])
        np.testing.assert_array_equal(X[2 * 3 + DASHED, 8:], np.eye(7)[3])
        np.testing.assert_array_equal(X[2 * 3 + DASHED, :8], 0.0)

    def test_zero_rewards_and_gamma(self):
        b = make_baird()
        assert b.mdp.gamma == 0.99
        np.testing.assert_array_equal(b.mdp.r, 0.0)

    @pytest.mark.parametrize("behavior, solid", [("mostly-solid", 6 / 7), ("mostly-dashed", 1 / 7)])
    def test_behaviors(self, behavior, solid):
        b = make_baird(behavior=behavior)
        np.testing.assert_allclose(b.mu0.table[:, SOLID], solid)

    def test_target_is_solid(self):
        np.testing.assert_array_equal(make_baird().pi_target.table[:, SOLID], 1.0)

    def test_bad_mode(self):
        with pytest.raises(InvalidInputError):
            make_baird("planning")


class TestKolter:
    def test_values(self):
        k = make_kolter()
        np.testing.assert_allclose(k.X.X.ravel(), [1.0, 1.06])
        np.testing.assert_allclose(k.v_pi, [1.0, 1.05])
        np.testing.assert_allclose(k.d, [0.5, 0.5])

    def test_fixed_points_at_uniform_weighting(self):
        k = make_kolter()
        ops = build_evaluation_operators(k.mdp, k.X, k.pi, k.pi, d=k.d)
        assert ops.A[0, 0] == pytest.approx(0.011509, abs=1e-6)
        w0 = evaluation_fixed_point_discounted(ops, 0.0)
        w10 = evaluation_fixed_point_discounted(ops, 10.0)
        assert w0[0] == pytest.approx(0.98249, abs=1e-5)
        assert w10[0] == pytest.approx(0.0011294, abs=1e-7)

    def test_with_d1(self):
        np.testing.assert_allclose(make_kolter().with_d1(0.3).d, [0.3, 0.7])

    @pytest.mark.parametrize("kw", [{"epsilon": 0.0}, {"d1": 0.0}, {"d1": 1.0}, {"gamma": 1.0}])
    def test_rejects(self, kw):
        with pytest.raises(InvalidInputError):
            make_kolter(**kw)


class TestRandomMdp:
    def test_reproducible(self):
        a, Xa = make_random_mdp(3, 4, 2, 3)
        b, Xb = make_random_mdp(3, 4, 2, 3)
        np.testing.assert_array_equal(a.p, b.p)
        np.testing.assert_array_equal(Xa.X, Xb.X)

    def test_shapes_and_mixing(self):
        mdp, X = make_random_mdp(0, 5, 3, 2, mixing=0.2)
        assert mdp.p.shape == (5, 3, 5)
        assert X.shape == (15, 2)
        assert mdp.p.min() >= 0.2 / 5 - 1e-12

    def test_average_reward_instance(self):
        mdp, _ = make_random_mdp(0, 3, 2, 2, gamma=None)
        assert mdp.gamma is None

    def test_centered_and_scaled(self):
        _, X = make_random_mdp(1, 4, 2, 3, center=True, feature_norm=0.5)
        np.testing.assert_allclose(X.X.mean(axis=0), 0.0, atol=1e-12)
        assert X.norm == pytest.approx(0.5)

    def test_ergodic_under_any_full_support_policy(self):
        mdp, _ = make_random_mdp(7, 4, 2, 2)
        pi = Policy(np.tile([0.99, 0.01], (4, 1)))
        d = stationary_distribution(build_transition_matrix(mdp, pi))
        assert d.min() > 0
