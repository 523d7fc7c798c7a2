import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from targetnet_lab import InvalidInputError, SingularSystemError
from targetnet_lab.environments import baird_control_features_display, baird_state_features
from targetnet_lab.features import (
    FeatureMatrix,
    center_features,
    check_rank,
    projection_matrix,
    scale_to_norm,
    spectral_norm,
    weighted_operator_norm,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


class TestRank:
    def test_baird_state_features_are_wide(self):
        rep = check_rank(baird_state_features())
        assert not rep.full_rank
        assert rep.sigma_min == 0.0

    def test_baird_control_features_rank(self):
        X = baird_control_features_display()
        assert X.shape == (14, 15)
        assert np.linalg.matrix_rank(X) == 14
        assert not check_rank(X).full_rank

    def test_identity_is_full_rank(self):
        rep = check_rank(np.eye(3))
        assert rep.full_rank
        assert rep.sigma_min == pytest.approx(1.0)

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            FeatureMatrix(np.zeros((0, 2)))

    def test_read_only(self):
        fm = FeatureMatrix(np.eye(2))
        with pytest.raises(ValueError):
            fm.X[0, 0] = 3.0


class TestNorms:
    def test_spectral_norm_diagonal(self):
        assert spectral_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)

    def test_weighted_norm_of_stochastic_matrix_with_stationary_weights(self):
        # ||P||_D = 1 for a reversible chain under its stationary law
        P = np.array([[0.9, 0.1], [0.2, 0.8]])
        d = np.array([2 / 3, 1 / 3])
        assert weighted_operator_norm(P, d) == pytest.approx(1.0, abs=1e-12)

    def test_weighted_norm_uniform_is_plain_norm(self):
        rng = np.random.default_rng(0)
        P = rng.random((4, 4))
        assert weighted_operator_norm(P, np.full(4, 0.25)) == pytest.approx(spectral_norm(P))

    def test_weighted_norm_rejects_zero_weight(self):
        with pytest.raises(InvalidInputError):
            weighted_operator_norm(np.eye(2), [1.0, 0.0])

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, (4, 3), elements=finite), st.floats(0.1, 10))
    def test_scale_to_norm(self, X, c):
        if spectral_norm(X) < 1e-6:
            return
        assert scale_to_norm(X, c).norm == pytest.approx(c, rel=1e-10)


class TestCentering:
    @settings(max_examples=40, deadline=None)
    @given(arrays(float, (5, 2), elements=finite), st.integers(0, 1000))
    def test_weighted_mean_is_zero(self, X, seed):
        d = np.random.default_rng(seed).dirichlet(np.ones(5))
        Xc = center_features(X, d).X
        np.testing.assert_allclose(d @ Xc, 0.0, atol=1e-12)


class TestProjection:
    def test_idempotent_and_self_adjoint(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((6, 2))
        d = rng.dirichlet(np.ones(6))
        Pi = projection_matrix(X, d)
        np.testing.assert_allclose(Pi @ Pi, Pi, atol=1e-12)
        np.testing.assert_allclose(Pi @ X, X, atol=1e-12)
        D = np.diag(d)
        np.testing.assert_allclose(D @ Pi, (D @ Pi).T, atol=1e-12)

    def test_ridge_shrinks(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((6, 2))
        d = np.full(6, 1 / 6)
        v = rng.standard_normal(6)
        D = np.sqrt(d)
        plain = np.linalg.norm(D * (projection_matrix(X, d) @ v))
        ridge = np.linalg.norm(D * (projection_matrix(X, d, eta=1.0) @ v))
        assert ridge < plain

    def test_rank_deficient_without_ridge_raises(self):
        with pytest.raises(SingularSystemError):
            projection_matrix(baird_state_features(), np.full(7, 1 / 7))

    def test_rank_deficient_with_ridge_is_fine(self):
        Pi = projection_matrix(baird_state_features(), np.full(7, 1 / 7), eta=0.1)
        assert np.isfinite(Pi).all()
