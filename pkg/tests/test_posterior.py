import math

import numpy as np
import pytest

from spreadchan.channel import ChannelRealization, sample_channel
from spreadchan.link import circulant_apply, transmit
from spreadchan.posterior import (
    AUTO_EXACT_LIMIT,
    Chain,
    EnumerationBudgetError,
    Hypothesis,
    _likelihood_tables,
    exact_posterior,
    hypothesis_count,
    mcmc_posterior,
    mmse_at,
    normalize_log_weights,
    posterior_mean,
)
from spreadchan.prooflab import build_swap_partition
from spreadchan.signals import SpreadSignal, gen_signal


class TestExactPosterior:
    def test_zero_snr_uniform(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        y = np.random.default_rng(5).standard_normal(16)
        post = exact_posterior(y, sig, 0.0, 2)
        assert np.allclose(post.hhat, 0.0, atol=1e-12)
        assert np.allclose(post.weights, post.weights[0])

    def test_weights_normalized(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        ch = sample_channel(16, 2, seed=3)
        y = transmit(sig, ch, 1.0, noise_seed=5).received
        post = exact_posterior(y, sig, 1.0, 2)
        assert abs(post.weights.sum() - 1.0) <= 1e-12

    def test_shift_invariance_of_normalization(self):
        lw = np.random.default_rng(0).uniform(-500, -400, 97)
        w1, _ = normalize_log_weights(lw)
        w2, _ = normalize_log_weights(lw + 123.456)
        assert np.max(np.abs(w1 - w2)) <= 1e-12

    def test_high_snr_concentration(self):
        # noiseless, snr=1e4: the true single-tap hypothesis dominates
        sig = gen_signal("iid_binary", 16, seed=7)
        ch = sample_channel(16, 1, seed=40)
        obs = transmit(sig, ch, 1e4, noise=np.zeros(16))
        post = exact_posterior(obs.received, sig, 1e4, 1)
        assert np.linalg.norm(post.hhat - ch.to_vector()) <= 1e-3

    def test_hand_computed_twelve_hypotheses(self):
        # independent 12-term oracle: explicit loops, no shared machinery
        sig = SpreadSignal(np.array([1.0, -1.0, -1.0, 1.0, -1.0, 1.0]),
                           "iid_binary", 6)
        y = np.array([0.3, -1.1, 0.4, 2.0, -0.7, 0.25])
        snr = 0.8
        x = sig.samples
        num = np.zeros(6)
        den = 0.0
        entries = []
        for pos in range(6):
            for g in (-1.0, 1.0):
                xh = np.array([sum(x[(n - k) % 6] * (g if k == pos else 0.0)
                                   for k in range(6)) for n in range(6)])
                entries.append((pos, g, -0.5 * np.sum((y - math.sqrt(snr) * xh) ** 2)))
        peak = max(lw for _, _, lw in entries)
        for pos, g, lw in entries:
            w = math.exp(lw - peak)
            den += w
            num[pos] += w * g
        post = exact_posterior(y, sig, snr, 1)
        assert np.max(np.abs(post.hhat - num / den)) <= 1e-12

    def test_budget_error_mentions_sampler(self):
        sig = gen_signal("iid_binary", 64, seed=1)
        with pytest.raises(EnumerationBudgetError, match="mcmc_posterior"):
            exact_posterior(np.zeros(64), sig, 1.0, 8)

    def test_posterior_mean_norm_bounded(self):
        # convexity: mean of unit-norm rademacher hypotheses has norm <= 1
        sig = gen_signal("iid_binary", 16, seed=7)
        for t in range(10):
            ch = sample_channel(16, 2, seed=[60, t])
            y = transmit(sig, ch, 0.7, noise_seed=[61, t]).received
            post = exact_posterior(y, sig, 0.7, 2)
            assert np.linalg.norm(post.hhat) <= 1.0 + 1e-9

    def test_scalar_channel(self):
        # degenerate K_c = 1: two hypotheses, analytic tanh posterior mean
        sig = SpreadSignal(np.array([1.0]), "iid_binary", 1)
        y = np.array([0.8])
        snr = 2.0
        post = exact_posterior(y, sig, snr, 1)
        assert np.isclose(post.hhat[0], math.tanh(math.sqrt(snr) * y[0]))


class TestMcmcPosterior:
    def test_zero_snr_unit_acceptance(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        y = np.random.default_rng(1).standard_normal(16)
        post = mcmc_posterior(y, sig, 0.0, 2, chains=2, samples=3000, seed=1)
        assert post.acceptance_rate == 1.0
        assert np.max(np.abs(post.hhat)) < 0.05

    def test_matches_exact(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        ch = sample_channel(16, 2, seed=3)
        obs = transmit(sig, ch, 1.0, noise_seed=101)
        ref = exact_posterior(obs.received, sig, 1.0, 2)
        post = mcmc_posterior(obs.received, sig, 1.0, 2, chains=4,
                              samples=12_000, burnin=2000, seed=11)
        assert np.max(np.abs(post.hhat - ref.hhat)) <= 0.02

    def test_detailed_balance_flow(self):
        # brute-force transition counting between a fixed tap-move pair
        sig = gen_signal("iid_binary", 16, seed=7)
        ch = sample_channel(16, 2, seed=3)
        obs = transmit(sig, ch, 0.3, noise_seed=5)
        cc, r = _likelihood_tables(obs.received, sig)
        chain = Chain(16, cc, r, 0.3, 2, "rademacher", np.random.default_rng(0))
        s = 1 / math.sqrt(2)
        state_a = (np.array([2, 9]), np.array([s, -s]))
        state_b = (np.array([5, 9]), np.array([s, -s]))
        chain.set_state(*state_a)
        lw_a = chain.loglik
        chain.set_state(*state_b)
        lw_b = chain.loglik

        def hits(source, target):
            count = 0
            n = 100_000
            for _ in range(n):
                chain.set_state(*source)
                chain.step()
                order = np.argsort(chain.support)
                if (np.array_equal(np.sort(chain.support), target[0])
                        and np.allclose(np.asarray(chain.gains)[order], target[1])):
                    count += 1
            return count, n

        n_ab, n = hits(state_a, state_b)
        n_ba, _ = hits(state_b, state_a)
        w_a = math.exp(lw_a - max(lw_a, lw_b))
        w_b = math.exp(lw_b - max(lw_a, lw_b))
        p_ab, p_ba = n_ab / n, n_ba / n
        diff = w_a * p_ab - w_b * p_ba
        se = math.sqrt(w_a ** 2 * p_ab * (1 - p_ab) / n
                       + w_b ** 2 * p_ba * (1 - p_ba) / n)
        assert abs(diff) <= 3.0 * se

    def test_incremental_loglik_consistent(self):
        sig = gen_signal("iid_binary", 32, seed=2)
        ch = sample_channel(32, 4, seed=3)
        obs = transmit(sig, ch, 0.8, noise_seed=4)
        cc, r = _likelihood_tables(obs.received, sig)
        chain = Chain(32, cc, r, 0.8, 4, "rademacher", np.random.default_rng(5))
        for _ in range(5000):
            chain.step()
        assert abs(chain.loglik - chain.loglik_full()) <= 1e-8

    def test_requires_two_chains(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        with pytest.raises(ValueError):
            mcmc_posterior(np.zeros(16), sig, 1.0, 2, chains=1)

    def test_convergence_flag_semantics(self):
        sig = gen_signal("iid_binary", 64, seed=1)
        ch = sample_channel(64, 8, seed=2)
        obs = transmit(sig, ch, 2.0, noise_seed=3)
        tight = mcmc_posterior(obs.received, sig, 2.0, 8, chains=2,
                               samples=200, seed=4, gap_tol=1e-9)
        loose = mcmc_posterior(obs.received, sig, 2.0, 8, chains=2,
                               samples=200, seed=4, gap_tol=10.0)
        assert tight.converged is False
        assert loose.converged is True
        assert tight.chain_gap == loose.chain_gap

    def test_tap_moves_trace_swap_groups(self):
        # the sampler's single tap moves reach exactly the states a swap
        # group is built from: every group member is one move from its
        # anchor (two-position difference)
        groups = build_swap_partition(12, 2, 0, seed=1)
        for group in groups:
            anchor = set(group.anchor)
            for member in group.members:
                diff = anchor.symmetric_difference(member)
                assert len(diff) in (0, 2)

    def test_bounded_uniform_sampler_runs(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        ch = sample_channel(16, 2, "bounded_uniform", seed=3)
        obs = transmit(sig, ch, 0.5, noise_seed=5)
        ref = exact_posterior(obs.received, sig, 0.5, 2, "bounded_uniform")
        post = mcmc_posterior(obs.received, sig, 0.5, 2, "bounded_uniform",
                              chains=2, samples=20_000, burnin=2000, seed=9)
        assert np.max(np.abs(post.hhat - ref.hhat)) <= 0.05


class TestMmse:
    def test_zero_snr_identity_small(self):
        # mmse(0) = K_c for +-1 signals: Hhat = 0 and E||x H||^2 = K_c
        sig = gen_signal("iid_binary", 16, seed=[30, 16])
        est, se = mmse_at(sig, 0.0, 4, 150, seed=[31, 16], method="exact")
        assert abs(est - 16.0) <= 3.0 * se

    def test_high_snr_small(self):
        sig = gen_signal("iid_binary", 16, seed=33)
        est, _ = mmse_at(sig, 1e3, 1, 60, seed=41, method="exact")
        assert est <= 0.05 * 16

    def test_monotone_in_snr(self):
        sig = gen_signal("iid_binary", 16, seed=33)
        points = [mmse_at(sig, s, 2, 200, seed=34, method="exact")
                  for s in (0.0, 0.5, 1.0, 2.0, 4.0)]
        for (e1, s1), (e2, s2) in zip(points, points[1:]):
            assert e2 <= e1 + 3.0 * math.hypot(s1, s2)

    def test_bounded_by_mmse_at_zero(self):
        sig = gen_signal("iid_binary", 16, seed=33)
        e0, s0 = mmse_at(sig, 0.0, 2, 200, seed=35, method="exact")
        e1, s1 = mmse_at(sig, 1.0, 2, 200, seed=35, method="exact")
        assert e1 <= e0 + 3.0 * math.hypot(s0, s1)

    def test_orthogonality_principle(self):
        # E<x(H - Hhat), x Hhat> = 0 for the exact conditional mean
        sig = gen_signal("iid_binary", 16, seed=33)
        vals = []
        for t in range(300):
            ch = sample_channel(16, 2, seed=[35, t, 1])
            obs = transmit(sig, ch, 1.0, noise_seed=[35, t, 2])
            post = exact_posterior(obs.received, sig, 1.0, 2)
            xh = circulant_apply(sig, ch.to_vector())
            xhat = circulant_apply(sig, post.hhat)
            vals.append(float((xh - xhat) @ xhat))
        vals = np.array(vals)
        assert abs(vals.mean()) <= 3.0 * vals.std(ddof=1) / math.sqrt(len(vals))

    def test_auto_dispatch(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        y = np.random.default_rng(1).standard_normal(16)
        assert posterior_mean(y, sig, 0.5, 2, method="auto").mode == "exact"
        assert hypothesis_count(64, 8, "rademacher") > AUTO_EXACT_LIMIT
        sig64 = gen_signal("iid_binary", 64, seed=8)
        y64 = np.random.default_rng(2).standard_normal(64)
        post = posterior_mean(y64, sig64, 0.5, 8, method="auto",
                              samples=500, chains=2)
        assert post.mode == "mcmc"

    def test_trials_validated(self):
        sig = gen_signal("iid_binary", 16, seed=7)
        with pytest.raises(ValueError):
            mmse_at(sig, 0.0, 2, 0, seed=1)


class TestHypothesis:
    def test_structural_validation(self):
        with pytest.raises(ValueError):
            Hypothesis(support=np.array([1, 1]), gains=np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            Hypothesis(support=np.array([1, 2]), gains=np.array([0.5]))

    def test_dense_vector(self):
        hyp = Hypothesis(support=np.array([3, 5]), gains=np.array([0.5, -0.5]))
        v = hyp.to_vector(8)
        assert v[3] == 0.5 and v[5] == -0.5 and np.count_nonzero(v) == 2
