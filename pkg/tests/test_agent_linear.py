import math

import mpmath as mp
import numpy as np
import pytest

from privrl import _accel
from privrl.agent_linear import (
    LsviUcbBatch,
    batch_count,
    linear_q_table,
    lsvi_act,
    lsvi_params,
    lsvi_scores,
)
from privrl.agent_mixture import ROLE_ENV
from privrl.envs import LinearEncoding, greedy_policy, make_env, optimal_values
from privrl.errors import InvalidBudget, NotPositiveDefinite
from privrl.linalg_core import min_eigenvalue, psd_solve

mp.mp.dps = 50


def reference_lsvi(mdp, par, K, seed):
    """Non-private batched LSVI-UCB: refit every stage at the scheduled boundaries."""
    enc = LinearEncoding(mdp)
    phi, H, d = enc.features, mdp.H, enc.d
    lam_eye = par.lam * np.eye(d)
    gram = np.zeros((H, d, d))
    lam_t = np.broadcast_to(lam_eye, (H, d, d)).copy()
    w = np.zeros((H, d))
    states = np.zeros((K, H + 1), dtype=np.int64)
    actions = np.zeros((K, H), dtype=np.int64)
    q = np.stack([linear_q_table(phi, lam_t[h], w[h], par.beta, float(H)) for h in range(H)])
    rng = np.random.default_rng((seed, ROLE_ENV))
    updates = set(par.update_episodes)
    trace = []
    for k in range(1, K + 1):
        s = mdp.sample_initial(rng)
        states[k - 1, 0] = s
        for h in range(H):
            a = int(np.argmax(q[h, s]))
            s, _ = mdp.step(s, a, h, rng)
            actions[k - 1, h] = a
            states[k - 1, h + 1] = s
            x = phi[states[k - 1, h], a]
            gram[h] += np.outer(x, x)
        trace.append((tuple(states[k - 1]), q.copy()))
        if k in updates:
            v_next = np.zeros(enc.S)
            for h in range(H - 1, -1, -1):
                s_h, a_h = states[:k, h], actions[:k, h]
                feats = phi[s_h, a_h]
                y = mdp.rewards[h, s_h, a_h] + v_next[states[:k, h + 1]]
                lam_t[h] = lam_eye + gram[h]
                w[h] = psd_solve(lam_t[h], feats.T @ y)
                q[h] = linear_q_table(phi, lam_t[h], w[h], par.beta, float(H))
                v_next = q[h].max(axis=1)
    return trace


def run_agent(mdp, par, seed):
    agent = LsviUcbBatch(mdp, par, seed)
    rng = np.random.default_rng((seed, ROLE_ENV))
    logs, tables = [], []
    for _ in range(par.K):
        tables.append(agent.q.copy())
        logs.append(agent.episode(rng))
    return agent, logs, tables


def high_precision_params(K, H, d, eps, delta, p):
    eps, delta, p = mp.mpf(eps), mp.mpf(delta), mp.mpf(p)
    B = int(mp.ceil((K * eps) ** mp.mpf("0.4") / (mp.mpf(d) ** mp.mpf("0.6") * mp.mpf(H) ** mp.mpf("0.2"))))
    B = min(max(B, 1), K)
    B0 = int(mp.ceil(mp.log(B, 2) + 1))
    lam = mp.mpf(d)
    logsq = mp.log(32 * H * B0 * B / delta) ** 2
    s_lam = 128 / eps * mp.sqrt(B * H * B0) * logsq
    s_u = 128 / eps * H * mp.sqrt(H * B) * logsq
    ups = s_lam * B0 * (4 * mp.sqrt(d) + 2 * mp.log(6 * K * H / p))
    c_k = d * ups
    c_j = s_u * (mp.sqrt(d) + 2 * mp.sqrt(mp.log(6 * K * H * d / p)))
    u_k = max(mp.mpf(1), 2 * H * mp.sqrt(d * K / (lam + c_k)) + c_j / (lam + c_k))
    chi = 24**2 * 18 * mp.mpf(K) ** 2 * d * u_k * H / p
    beta = 24 * H * mp.sqrt(d * (lam + c_k)) * mp.log(chi)
    return dict(B=B, B0=B0, sigma_lambda=s_lam, sigma_u=s_u, upsilon=ups, c_k=c_k, c_j=c_j, U_K=u_k,
                chi=chi, beta=beta)


class TestParams:
    def test_batch_example(self):
        par = lsvi_params(100, 5, 4, 1.0, 0.1, 0.1)
        assert float((mp.mpf(100) ** mp.mpf("0.4")) / (4 ** mp.mpf("0.6") * 5 ** mp.mpf("0.2"))) == pytest.approx(
            1.9905, abs=1e-4)
        assert par.B == 2
        assert par.batch_starts == [1, 51]
        assert par.update_episodes == [50]

    def test_non_batched(self):
        par = lsvi_params(40, 3, 4, 0.5, 0.1, 0.1, "non_batched")
        assert par.B == 40
        assert par.B0 == math.ceil(math.log2(40) + 1)
        assert par.batch_starts == list(range(1, 41))

    def test_pure_example(self):
        assert batch_count(64, 0.5, 2, 2, "pure_jdp") == 2
        par = lsvi_params(64, 2, 2, 0.5, 0.0, 0.1, "pure_jdp")
        assert par.B == 2 and par.delta == 0.0 and par.dist == "laplace"

    def test_batches_never_exceed_episodes(self):
        assert lsvi_params(3, 1, 1, 1.0, 0.1, 0.1).B <= 3

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_high_precision(self, seed):
        rng = np.random.default_rng(seed)
        K, H, d = int(rng.integers(1, 4097)), int(rng.integers(1, 9)), int(rng.integers(1, 17))
        eps, delta, p = float(rng.uniform(0.05, 0.99)), float(rng.uniform(0.01, 0.99)), float(rng.uniform(0.01, 0.99))
        par = lsvi_params(K, H, d, eps, delta, p)
        ref = high_precision_params(K, H, d, eps, delta, p)
        assert (par.B, par.B0) == (ref["B"], ref["B0"])
        for key in ("sigma_lambda", "sigma_u", "upsilon", "c_k", "c_j", "U_K", "chi", "beta"):
            assert getattr(par, key) == pytest.approx(float(ref[key]), rel=1e-10), key
            assert getattr(par, key) > 0

    def test_invariants(self):
        par = lsvi_params(500, 4, 6, 0.7, 0.2, 0.05)
        assert par.lam == 6 and par.c_k == pytest.approx(6 * par.upsilon)
        assert par.shift == par.c_k + par.upsilon

    @pytest.mark.parametrize("eps,delta,variant", [(1.0, 0.0, "approx_jdp"), (1.2, 0.1, "approx_jdp"),
                                                   (0.0, 0.0, "pure_jdp"), (0.5, 1.0, "non_batched")])
    def test_invalid_budget(self, eps, delta, variant):
        with pytest.raises(InvalidBudget):
            lsvi_params(10, 2, 2, eps, delta, 0.1, variant)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            lsvi_params(0, 2, 2, 1.0, 0.1, 0.1)
        with pytest.raises(ValueError):
            lsvi_params(10, 2, 2, 1.0, 0.1, 1.0)
        with pytest.raises(ValueError):
            lsvi_params(10, 2, 2, 1.0, 0.1, 0.1, "dynamic")

    def test_scaled_recomputes_width(self):
        par = lsvi_params(200, 3, 4, 1.0, 0.1, 0.1)
        small = par.scaled(0.02)
        assert small.sigma_lambda == pytest.approx(0.02 * par.sigma_lambda)
        assert small.c_k == pytest.approx(0.02 * par.c_k)
        assert small.beta < par.beta
        assert small.scaled(1.0).beta == pytest.approx(par.beta, rel=1e-14)
        assert small.to_dict()["scale_override"] == 0.02

    def test_none_regime_has_no_noise(self):
        par = lsvi_params(100, 3, 4, 1.0, 0.1, 0.1, regime="none")
        assert par.sigma_lambda == par.sigma_u == par.upsilon == par.c_k == par.c_j == 0.0
        assert par.B == lsvi_params(100, 3, 4, 1.0, 0.1, 0.1).B


class TestAct:
    def test_larger_bonus_wins(self):
        phi = np.array([[1.0, 0.0], [0.5, 0.0]])
        lam = 2.0 * np.eye(2)
        scores = lsvi_scores(phi, lam, np.zeros(2), 3.0, 5)
        np.testing.assert_allclose(scores, [3 / math.sqrt(2), 1.5 / math.sqrt(2)])
        assert int(np.argmax(scores)) == 0

    def test_ties_to_lowest_index(self):
        q = np.zeros((1, 1, 3))
        assert lsvi_act(q, 0, 0) == 0

    def test_scores_clipped(self):
        assert lsvi_scores(np.eye(2), np.eye(2), np.array([-5.0, 9.0]), 0.0, 4).tolist() == [0.0, 4.0]

    def test_oracle_weights_give_optimal_actions(self, small_mdp):
        enc = LinearEncoding(small_mdp)
        v_star, q_star = optimal_values(small_mdp)
        for h in range(small_mdp.H):
            w = enc.theta[h] + enc.mu[h].T @ v_star[h + 1]
            q = linear_q_table(enc.features, np.eye(enc.d), w, 0.0, float(small_mdp.H))
            np.testing.assert_array_equal(greedy_policy(q), greedy_policy(q_star[h]))

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            linear_q_table(np.eye(2).reshape(1, 2, 2), -np.eye(2), np.zeros(2), 1.0, 2.0)

    @pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")
    def test_backends_agree(self, small_mdp):
        enc = LinearEncoding(small_mdp)
        rng = np.random.default_rng(0)
        m = rng.standard_normal((enc.d, enc.d))
        lam = m @ m.T + np.eye(enc.d)
        w = rng.standard_normal(enc.d)
        a = _accel.numba_impl.linear_q_table(enc.features, lam, w, 0.8, 3.0)
        b = _accel.numpy_impl.linear_q_table(enc.features, lam, w, 0.8, 3.0)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestBatchedAgent:
    def test_zero_noise_matches_reference(self, small_mdp):
        par = lsvi_params(120, small_mdp.H, small_mdp.S * small_mdp.A, 1.0, 0.1, 0.1, regime="none")
        agent, logs, tables = run_agent(small_mdp, par, seed=2)
        ref = reference_lsvi(small_mdp, par, 120, seed=2)
        for (visited, q_ref), q_agent in zip(ref, tables):
            assert np.array_equal(q_agent, q_ref)
        assert [tuple(s) for s in agent.states] == [v for v, _ in ref]

    def test_batch_structure(self):
        mdp = make_env("riverswim-like", 2, 2, 5, 0)
        par = lsvi_params(100, 5, 4, 1.0, 0.1, 0.1)
        agent, logs, tables = run_agent(mdp, par, seed=0)
        assert len(agent.output_log) == par.B == 2
        assert [log.batch for log in logs] == [0] * 50 + [1] * 50
        for k in range(1, 100):
            if k != 50:
                assert np.array_equal(tables[k], tables[k - 1])
        assert not np.array_equal(agent.output_log[0][0], agent.output_log[1][0])

    def test_summand_norm_premise(self, small_mdp):
        par = lsvi_params(60, small_mdp.H, small_mdp.S * small_mdp.A, 1.0, 0.1, 0.1, "non_batched")
        agent, _, _ = run_agent(small_mdp, par, seed=1)
        assert 0 < agent.max_summand_norm <= small_mdp.H + 1

    def test_good_event_consequences(self, small_mdp):
        H, d = small_mdp.H, small_mdp.S * small_mdp.A
        par = lsvi_params(80, H, d, 1.0, 0.1, 0.1, "non_batched")
        agent = LsviUcbBatch(small_mdp, par, seed=3)
        rng = np.random.default_rng((3, ROLE_ENV))
        _, q_star = optimal_values(small_mdp)
        checked = 0
        for _ in range(par.K):
            log = agent.episode(rng)
            if agent.good_event and agent.b > 0:
                checked += 1
                assert agent.max_weight_norm <= par.U_K
                for h in range(H):
                    assert min_eigenvalue(agent.lam_tilde[h]) >= par.lam + par.c_k
                assert np.all(agent.q >= q_star - 1e-8)
            assert log.bonus_sum <= H * H
        assert checked > 0

    def test_regret_decomposition(self, small_mdp):
        from privrl.harness import config_from_dict, run_seed

        cfg = config_from_dict({"env": {"family": "random-dense", "S": 3, "A": 2, "H": 3, "seed": 11},
                                "agent": {"algorithm": "lsvi_ucb_batch", "regime": "jdp", "p": 0.1,
                                          "scale_override": 0.05},
                                "K": 150, "seeds": [0]})
        rec = run_seed(cfg, 0)
        cum_bonus = np.cumsum(rec.extras["bonus_sum"])
        k = np.arange(1, 151)
        bound = 2 * np.sqrt(2 * k * 27 * math.log(3 / 0.1)) + cum_bonus
        assert all(rec.coverage)
        assert np.all(np.array(rec.cum_regret) <= bound)

    def test_params_must_match_env(self, small_mdp):
        par = lsvi_params(10, 2, 6, 1.0, 0.1, 0.1)
        with pytest.raises(ValueError):
            LsviUcbBatch(small_mdp, par, seed=0)

    def test_noise_is_seeded(self, small_mdp):
        par = lsvi_params(30, 3, 6, 1.0, 0.1, 0.1)
        a = LsviUcbBatch(small_mdp, par, seed=9)
        b = LsviUcbBatch(small_mdp, par, seed=9)
        c = LsviUcbBatch(small_mdp, par, seed=10)
        assert np.array_equal(a.eta, b.eta) and not np.array_equal(a.eta, c.eta)
        assert a.eta.shape == (par.B, 3, 6)
