import numpy as np
import pytest
from scipy import special

from calibrl.bandit import (
    BanditAgent,
    DatasetBandit,
    LinUcbArmState,
    SyntheticBeta,
    SyntheticLinear,
    SyntheticNonlinear,
    make_agent,
    nonlinear_classification,
    run_bandit,
    run_trial,
)
from calibrl.forecast import RngStream
from calibrl.recalibration import IdentityRecalibrator, IsotonicRecalibrator


class TestPrediction:
    def test_prior(self):
        f = BanditAgent(2, 3).predict_reward(0, [1, 0, 0])
        assert (f.mu, f.sigma) == (0.0, 1.0)

    def test_one_observation(self):
        ag = BanditAgent(1, 3)
        ag.update(0, [1, 0, 0], 1.0)
        f = ag.predict_reward(0, [1, 0, 0])
        assert f.mu == pytest.approx(0.5) and f.sigma == pytest.approx(np.sqrt(0.5))

    def test_width_shrinks(self, rng):
        arm = LinUcbArmState(3)
        x = np.array([1.0, 0.5, -0.2])
        probes = rng.normal(size=(20, 3))
        prev = np.array([arm.predict(p)[1] for p in probes])
        for _ in range(5):
            arm.observe(x, 0.3)
            cur = np.array([arm.predict(p)[1] for p in probes])
            assert np.all(cur <= prev + 1e-15)
            prev = cur

    def test_accumulation(self):
        ag = BanditAgent(2, 2, lam=0.5)
        for _ in range(7):
            ag.update(1, [1, 0], 2.0)
        assert ag.arms[1].A[0, 0] == 7.5 and ag.arms[1].b.tolist() == [14.0, 0.0]
        assert len(ag.history[1]) == ag.arms[1].pulls == 7 and ag.history[0] == []

    def test_updates_commute(self, rng):
        xs, rs = rng.normal(size=(2, 3)), rng.normal(size=2)
        a, b = LinUcbArmState(3), LinUcbArmState(3)
        a.observe(xs[0], rs[0]); a.observe(xs[1], rs[1])
        b.observe(xs[1], rs[1]); b.observe(xs[0], rs[0])
        np.testing.assert_allclose(a.A, b.A, atol=1e-14)
        np.testing.assert_allclose(a.b, b.b, atol=1e-14)

    def test_stays_positive_definite(self, rng):
        arm = LinUcbArmState(4, lam=1e-3)
        for x in rng.normal(size=(2000, 4)) * rng.uniform(0, 100, (2000, 1)):
            arm.observe(x, 1.0)
        assert np.linalg.eigvalsh(arm.A).min() >= 1e-3 - 1e-9


class TestSelection:
    def test_tie_breaks_low(self):
        assert BanditAgent(3, 2).select_arm_ucb([1, 1]) == 0

    def test_dominant_mean(self):
        ag = BanditAgent(3, 2)
        ag.update(2, [1, 0], 1.0)
        ag.update(1, [1, 0], 0.0)
        ag.update(0, [1, 0], 0.0)
        assert ag.select_arm_ucb([1, 0]) == 2

    def test_scripted_trace(self):
        xs = np.array([[1, 0.2], [1, -0.5], [1, 0.9], [1, 0.1], [1, -0.3]])
        pay = lambda a, x: [0.2, 0.6][a] + [0.5, -0.4][a] * x[1]
        ag = BanditAgent(2, 2, alpha=0.8)
        A = [np.eye(2), np.eye(2)]
        b = [np.zeros(2), np.zeros(2)]
        for x in xs:
            scores = []
            for k in range(2):
                Ai = np.linalg.inv(A[k])
                scores.append(x @ Ai @ b[k] + 0.8 * np.sqrt(x @ Ai @ x))
            want = int(np.argmax(scores))
            assert ag.select_arm_ucb(x) == want
            np.testing.assert_allclose(ag.ucb_scores(x), scores, atol=1e-12)
            r = pay(want, x)
            ag.update(want, x, r)
            A[want] += np.outer(x, x)
            b[want] += r * x

    def test_isolation(self, rng):
        ag = BanditAgent(2, 3)
        x = rng.normal(size=3)
        before = ag.ucb_scores(x)[0]
        ag.update(1, rng.normal(size=3), 5.0)
        assert ag.ucb_scores(x)[0] == before

    def test_identity_recalibrators_match(self, rng):
        env = SyntheticLinear.random(rng, 3, 4)
        real = env.realize(rng, 300)
        plain = BanditAgent(3, 4)
        cal = BanditAgent(3, 4, calibrated=True, warmup=1, refresh=1)
        for k in range(3):
            cal.set_recalibrator(k, IdentityRecalibrator())
        for t in range(300):
            x = real.contexts[t]
            a = plain.select(x)
            assert cal.select(x) == a
            plain.update(a, x, real.rewards[t, a])
            cal.arms[a].observe(x, real.rewards[t, a])

    def test_warmup_falls_back(self, rng):
        ag = BanditAgent(2, 2, calibrated=True, warmup=50)
        for _ in range(10):
            ag.update(0, rng.normal(size=2), rng.normal())
        assert ag.recalibrators == [None, None]
        x = rng.normal(size=2)
        assert ag.select(x) == ag.select_arm_ucb(x)

    def test_recalibrator_lifts_underpredicted_arm(self):
        ag = BanditAgent(2, 1, alpha=1.0, calibrated=True)
        for _ in range(3):
            ag.update(0, [1.0], 1.0)
            ag.update(1, [1.0], 0.9)
        x = [1.0]
        assert ag.select_arm_ucb(x) == 0
        # arm 1 has paid more than predicted: the raw forecast's CDF is too high
        # at its own quantiles, so R pushes levels down and the q_alpha quantile up
        r = IsotonicRecalibrator((0.5, 0.99), (0.2, 0.9))
        ag.set_recalibrator(1, r)
        q = r.inverse(ag.q_alpha)
        assert q == 0.99
        mu, sd = ag.arms[1].predict(np.array(x))
        assert ag.calibrated_scores(x)[1] == pytest.approx(mu + sd * special.ndtri(q))
        assert ag.select_arm_calibrated(x) == 1

    def test_refit_schedule(self, rng):
        ag = BanditAgent(1, 2, calibrated=True, warmup=30, refresh=25)
        fits = []
        for n in range(1, 81):
            ag.update(0, rng.normal(size=2), rng.normal())
            if ag.recalibrators[0] is not None and (not fits or ag.recalibrators[0] is not fits[-1][1]):
                fits.append((n, ag.recalibrators[0]))
        assert [n for n, _ in fits] == [30, 55, 80]


class TestEnvironments:
    def test_oracle_hits_baseline(self, rng):
        env = SyntheticNonlinear.random(rng)
        lg = run_trial(env, {"kind": "oracle"}, 100, 0, 0)
        real = env.realize(RngStream(0, stream=0).child(0).generator, 100)
        assert lg.arms.tolist() == np.argmax(real.expected, axis=1).tolist()
        np.testing.assert_array_equal(lg.optimal, real.expected.max(axis=1))

    def test_random_on_dataset(self):
        X, y = nonlinear_classification(np.random.default_rng(0), n=3000, n_arms=4)
        y = np.random.default_rng(1).integers(0, 4, 3000)
        env = DatasetBandit.from_arrays(X, y)
        _, s = run_bandit(env, {"kind": "random"}, 2000, 1, seed=5)
        assert abs(s["mean_cum_reward"] - 500) < 3 * np.sqrt(2000 * 0.25 * 0.75)

    def test_dataset_too_short(self):
        env = DatasetBandit.from_arrays(np.zeros((5, 2)), [0, 1, 0, 1, 0])
        with pytest.raises(ValueError, match="fewer than the horizon"):
            run_bandit(env, {"kind": "linucb"}, 10, 1, seed=0)

    def test_dataset_standardised(self, rng):
        env = DatasetBandit.from_arrays(rng.normal(5, 3, (100, 2)), rng.integers(0, 3, 100))
        np.testing.assert_allclose(env.features[:, 1:].mean(axis=0), 0, atol=1e-12)
        assert env.d == 3 and env.n_arms <= 3

    def test_beta_rewards_bounded(self, rng):
        env = SyntheticBeta.random(rng)
        real = env.realize(rng, 500)
        assert np.all((real.rewards >= 0) & (real.rewards <= 1))
        assert np.all((real.expected > 0) & (real.expected < 1))

    def test_linucb_near_optimal(self):
        env = SyntheticLinear.random(np.random.default_rng(7))
        _, s = run_bandit(env, {"kind": "linucb"}, 2000, 3, seed=0)
        assert s["mean_cum_reward"] >= 0.97 * s["optimal"]

    def test_run_log_shape(self, rng):
        lg = run_trial(SyntheticLinear.random(rng), {"kind": "callinucb"}, 50, 3, 2)
        assert len(lg.to_rows()) == 50 and lg.trial == 2

    def test_unknown_agent(self):
        with pytest.raises(ValueError):
            make_agent({"kind": "thompson"}, 2, 2)
