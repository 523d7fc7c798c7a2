import numpy as np
import pytest

from targetnet_lab import InvalidInputError, dump_mdp, load_mdp, make_baird, make_kolter, make_random_mdp
from targetnet_lab.errors import ConfigError
from targetnet_lab.features import as_matrix
from targetnet_lab.harness.config import load_config
from targetnet_lab.harness.problems import build_problem
from targetnet_lab.harness.simulate import run


class TestRoundTrip:
    @pytest.mark.parametrize("seed", range(3))
    def test_random_is_exact(self, seed):
        mdp, fm = make_random_mdp(seed, 4, 3, 2, gamma=0.95)
        back, X, meta = load_mdp(dump_mdp(mdp, fm, {"seed": seed}))
        np.testing.assert_array_equal(back.p, mdp.p)
        np.testing.assert_array_equal(back.r, mdp.r)
        np.testing.assert_array_equal(X.X, fm.X)
        assert back.gamma == 0.95 and meta == {"seed": seed}

    def test_kolter_state_features(self):
        k = make_kolter(d1=0.3)
        back, X, _ = load_mdp(dump_mdp(k.mdp, k.X))
        np.testing.assert_array_equal(X.X, as_matrix(k.X))
        assert back.gamma == k.mdp.gamma

    def test_average_reward_gamma(self):
        mdp, _ = make_random_mdp(1, 3, 2, 2, gamma=None)
        back, X, meta = load_mdp(dump_mdp(mdp))
        assert back.gamma is None and X is None and meta == {}

    def test_baird_control(self):
        b = make_baird("control")
        back, X, _ = load_mdp(dump_mdp(b.mdp, b.X))
        np.testing.assert_array_equal(back.p, b.mdp.p)
        assert X.shape[0] == 14


class TestRejection:
    def test_wrong_format(self):
        with pytest.raises(InvalidInputError):
            load_mdp("format: other/1\n")

    def test_malformed_yaml(self):
        with pytest.raises(InvalidInputError):
            load_mdp("format: [\n")

    def test_shape_mismatch(self):
        mdp, _ = make_random_mdp(0, 3, 2, 2)
        text = dump_mdp(mdp).replace("n_states: 3", "n_states: 4")
        with pytest.raises(InvalidInputError):
            load_mdp(text)

    def test_bad_feature_rows(self):
        mdp, _ = make_random_mdp(0, 3, 2, 2)
        with pytest.raises(InvalidInputError):
            load_mdp(dump_mdp(mdp, np.ones((5, 2))))


CONFIG = """environment: {name: file, path: chain.mdp.yaml}
algorithm: {name: alg1_q_eval, alpha: 0.05, beta: 0.05}
horizon: 400
replications: 2
sweep: {eta: [0.0, 1.0]}
"""


class TestFileEnvironment:
    @classmethod
    def write(cls, tmp_path, seed=0):
        mdp, fm = make_random_mdp(seed, 4, 2, 3)
        (tmp_path / "chain.mdp.yaml").write_text(dump_mdp(mdp, fm))
        (tmp_path / "exp.yaml").write_text(CONFIG)
        return load_config(tmp_path / "exp.yaml"), mdp, fm

    def test_matches_random_environment(self, tmp_path):
        cfg, mdp, fm = self.write(tmp_path)
        prob = build_problem(*cfg.point_settings(0.0, "", ""))
        ref = build_problem({"name": "random", "seed": 0, "n_states": 4, "n_actions": 2, "feature_dim": 3},
                            cfg.algorithm)
        np.testing.assert_array_equal(prob.X, ref.X)
        np.testing.assert_array_equal(prob.q_ref, ref.q_ref)

    def test_runs(self, tmp_path):
        cfg, _, _ = self.write(tmp_path)
        results = run(cfg)
        assert [pr.eta for pr in results] == [0.0, 1.0]
        assert all(r.termination == "completed" for pr in results for r in pr.runs)

    def test_fingerprint_follows_content_not_location(self, tmp_path):
        for sub in "abc":
            (tmp_path / sub).mkdir()
        a, _, _ = self.write(tmp_path / "a")
        b, _, _ = self.write(tmp_path / "b")
        c, _, _ = self.write(tmp_path / "c", seed=1)
        assert a.fingerprint() == b.fingerprint() != c.fingerprint()

    def test_missing_file(self, tmp_path):
        (tmp_path / "exp.yaml").write_text(CONFIG)
        with pytest.raises(ConfigError):
            build_problem(*load_config(tmp_path / "exp.yaml").point_settings(0.0, "", ""))

    def test_state_features_rejected(self, tmp_path):
        mdp, _ = make_random_mdp(0, 4, 2, 3)
        (tmp_path / "chain.mdp.yaml").write_text(dump_mdp(mdp, np.ones((4, 1))))
        (tmp_path / "exp.yaml").write_text(CONFIG)
        with pytest.raises(ConfigError):
            build_problem(*load_config(tmp_path / "exp.yaml").point_settings(0.0, "", ""))
