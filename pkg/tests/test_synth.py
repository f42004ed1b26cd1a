import itertools
import math

import numpy as np
import pytest

from slate_ope.core import AlphaWeights, make_alpha_weights
from slate_ope.policy import UniformPolicy, make_behavior_policy
from slate_ope.synth import (
    SyntheticEnv,
    generate_dataset,
    make_synthetic_env,
    sigmoid,
    true_policy_value,
)


def manual_env(n_actions=2, dim=2, slate_size=2, structure="independence",
               interaction="additive", theta=None, bias=None, W=None, alpha=None,
               scale=1.0):
    """Environment with hand-chosen parameters for arithmetic checks."""
    theta = np.zeros((n_actions, dim)) if theta is None else np.asarray(theta, dtype=float)
    bias = np.zeros(n_actions) if bias is None else np.asarray(bias, dtype=float)
    W = np.zeros((n_actions, n_actions)) if W is None else np.asarray(W, dtype=float)
    alpha = make_alpha_weights("uniform", slate_size) if alpha is None else alpha
    return SyntheticEnv(
        dim=dim, n_actions=n_actions, slate_size=slate_size, alpha=alpha,
        base_theta=theta, base_bias=bias, reward_structure=structure,
        interaction_kind=interaction, interaction_matrix=W, interaction_scale=scale,
    )


class TestBaseReward:
    def test_zero_parameters(self):
        assert manual_env().base_reward(np.zeros(2), 0) == 0.0

    def test_dot_product(self):
        env = manual_env(dim=5, theta=[[1, 0, 0, 0, 0], [0, 0, 0, 0, 0]], bias=[1.0, 0.0])
        assert env.base_reward(np.array([2.0, 0, 0, 0, 0]), 0) == 3.0

    def test_out_of_range_action(self):
        with pytest.raises(IndexError):
            manual_env().base_reward(np.zeros(2), 2)

    def test_generated_parameters_standard_normal(self):
        env = make_synthetic_env(slate_size=2, n_actions=100, dim=1000, rng=np.random.default_rng(0))
        draws = env.base_theta.ravel()
        assert abs(draws.mean()) < 3 / math.sqrt(draws.size)
        assert abs(draws.var() - 1.0) < 3 * math.sqrt(2.0 / draws.size)


class TestInteractionTerm:
    def test_independence_is_zero(self):
        env = manual_env(structure="independence", W=np.ones((2, 2)))
        assert env.interaction_term(np.zeros(2), (0, 1), 1) == 0.0

    def test_decay_weight(self):
        # Slots 2 and 4 (1-based) sit two apart: damping factor 1/3.
        env = manual_env(slate_size=4, structure="cascade", interaction="decay",
                         theta=[[1, 0], [0, 0]], bias=[0.0, 0.0],
                         alpha=make_alpha_weights("uniform", 4))
        x = np.array([2.0, 0.0])
        # prefix slots 0..2 contribute -q~_k/(|k-3|+1); isolate slot 1 via action choice
        term = env.interaction_term(x, (1, 0, 1, 1), 3)
        # contributions: k=0 (action 1, base 0), k=1 (action 0, base 2, decay 1/3), k=2 (action 1, base 0)
        assert term == pytest.approx(-2.0 / 3.0, abs=1e-12)

    def test_standard_additive_single_term(self):
        env = manual_env(structure="standard", W=[[0.0, 0.4], [0.4, 0.0]])
        assert env.interaction_term(np.zeros(2), (0, 1), 0) == pytest.approx(0.4)

    def test_interaction_scale(self):
        env = manual_env(structure="standard", W=[[0.0, 0.4], [0.4, 0.0]], scale=2.5)
        assert env.interaction_term(np.zeros(2), (0, 1), 0) == pytest.approx(1.0)

    def test_rejects_asymmetric_matrix(self):
        with pytest.raises(ValueError):
            manual_env(W=[[0.0, 1.0], [0.5, 0.0]])


class TestSlotMeanReward:
    def test_zero_base_independence(self):
        assert manual_env().slot_mean_reward(np.zeros(2), (0, 1), 0) == 0.5

    def test_cascade_ignores_later_slots(self):
        env = make_synthetic_env(slate_size=3, n_actions=3, reward_structure="cascade",
                                 rng=np.random.default_rng(1))
        x = np.random.default_rng(2).standard_normal(5)
        a = env.slot_mean_reward(x, (1, 2, 0), 1)
        b = env.slot_mean_reward(x, (1, 2, 2), 1)
        assert a == b

    def test_decay_cascade_formula(self):
        # Both base rewards 1; slot 2 of 2 sees sigmoid(1 - 1/2 * 1).
        env = manual_env(structure="cascade", interaction="decay", bias=[1.0, 1.0])
        assert env.slot_mean_reward(np.zeros(2), (0, 1), 1) == pytest.approx(
            sigmoid(np.array(0.5)), abs=1e-12
        )

    def test_cascade_invariance_exhaustive(self):
        env = make_synthetic_env(slate_size=3, n_actions=3, reward_structure="cascade",
                                 rng=np.random.default_rng(3))
        x = np.random.default_rng(4).standard_normal(5)
        for l in range(3):
            for prefix in itertools.product(range(3), repeat=l + 1):
                values = {
                    env.slot_mean_reward(x, prefix + tail, l)
                    for tail in itertools.product(range(3), repeat=3 - l - 1)
                }
                assert len(values) == 1

    def test_independence_depends_only_on_own_slot(self):
        env = make_synthetic_env(slate_size=3, n_actions=3, reward_structure="independence",
                                 rng=np.random.default_rng(5))
        x = np.random.default_rng(6).standard_normal(5)
        assert env.slot_mean_reward(x, (0, 1, 2), 1) == env.slot_mean_reward(x, (2, 1, 0), 1)

    def test_standard_additive_swap_symmetry(self):
        # W symmetric: swapping the two slots of an L=2 standard slate swaps
        # the slot means but leaves the interaction symmetric.
        env = make_synthetic_env(slate_size=2, n_actions=3, reward_structure="standard",
                                 rng=np.random.default_rng(7))
        x = np.random.default_rng(8).standard_normal(5)
        f01 = env.interaction_term(x, (0, 1), 0)
        f10 = env.interaction_term(x, (1, 0), 1)
        assert f01 == pytest.approx(f10, abs=1e-12)

    def test_values_in_open_unit_interval(self):
        env = make_synthetic_env(slate_size=4, n_actions=4, reward_structure="standard",
                                 rng=np.random.default_rng(9))
        rng = np.random.default_rng(10)
        for _ in range(20):
            x = rng.standard_normal(5)
            slate = tuple(rng.integers(0, 4, size=4))
            q = env.slot_mean_rewards(x, slate)
            assert np.all((q > 0) & (q < 1))

    def test_matrix_path_matches_scalar_path(self):
        for structure in ("standard", "cascade", "independence"):
            for kind in ("additive", "decay"):
                env = make_synthetic_env(slate_size=3, n_actions=3, reward_structure=structure,
                                         interaction_kind=kind, rng=np.random.default_rng(11))
                rng = np.random.default_rng(12)
                contexts = rng.standard_normal((6, 5))
                slates = rng.integers(0, 3, size=(6, 3))
                batch = env.slot_mean_reward_matrix(contexts, slates)
                for i in range(6):
                    np.testing.assert_allclose(
                        batch[i], env.slot_mean_rewards(contexts[i], tuple(slates[i])), atol=1e-12
                    )


class TestSampling:
    def test_degenerate_bernoulli(self):
        high = manual_env(bias=[40.0, 40.0])
        low = manual_env(bias=[-40.0, -40.0])
        rng = np.random.default_rng(0)
        assert high.sample_rewards(np.zeros(2), (0, 1), rng).tolist() == [1.0, 1.0]
        assert low.sample_rewards(np.zeros(2), (0, 1), rng).tolist() == [0.0, 0.0]

    def test_reward_mean_matches_probability(self):
        env = manual_env(bias=[0.8, -0.3])
        q = env.slot_mean_rewards(np.zeros(2), (0, 1))
        rng = np.random.default_rng(1)
        n = 10**5
        draws = np.array([env.sample_rewards(np.zeros(2), (0, 1), rng) for _ in range(n)])
        for l in range(2):
            sigma = math.sqrt(q[l] * (1 - q[l]) / n)
            assert abs(draws[:, l].mean() - q[l]) < 3 * sigma

    def test_contexts_reproducible_and_standard_normal(self):
        env = make_synthetic_env(slate_size=2, rng=np.random.default_rng(2))
        assert env.dim == 5
        a = env.sample_contexts(100, np.random.default_rng(3))
        b = env.sample_contexts(100, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)
        big = env.sample_contexts(10**5, np.random.default_rng(4))
        assert np.all(np.abs(big.mean(axis=0)) < 3 / math.sqrt(big.shape[0]))


class TestGenerateDataset:
    def test_rejects_nonpositive_n(self):
        env = make_synthetic_env(slate_size=2, rng=np.random.default_rng(0))
        pol = UniformPolicy(5, 2)
        with pytest.raises(ValueError):
            generate_dataset(env, pol, 0, np.random.default_rng(0))

    def test_propensities_in_unit_interval(self):
        env = make_synthetic_env(slate_size=3, rng=np.random.default_rng(1))
        pol = make_behavior_policy(5, 5, 3, np.random.default_rng(2))
        ds = generate_dataset(env, pol, 200, np.random.default_rng(3))
        assert np.all((ds.propensities > 0) & (ds.propensities < 1))

    def test_uniform_policy_slate_frequencies(self):
        env = make_synthetic_env(slate_size=2, n_actions=2, rng=np.random.default_rng(4))
        ds = generate_dataset(env, UniformPolicy(2, 2), 10**5, np.random.default_rng(5))
        sigma = math.sqrt(0.25 * 0.75 / ds.n)
        for slate in itertools.product(range(2), repeat=2):
            freq = np.mean(np.all(ds.slates == slate, axis=1))
            assert abs(freq - 0.25) < 3 * sigma

    def test_shape_mismatch_rejected(self):
        env = make_synthetic_env(slate_size=2, rng=np.random.default_rng(6))
        with pytest.raises(ValueError):
            generate_dataset(env, UniformPolicy(5, 3), 10, np.random.default_rng(7))


def naive_policy_value(env, policy, contexts):
    """Slow direct enumeration used as an oracle for the vectorized paths."""
    alpha = env.alpha.values
    total = 0.0
    for x in contexts:
        for slate in itertools.product(range(env.n_actions), repeat=env.slate_size):
            p = policy.slate_pmf(x, slate)
            total += p * float(alpha @ env.slot_mean_rewards(x, slate))
    return total / contexts.shape[0]


class TestTruePolicyValue:
    def test_single_action(self):
        env = manual_env(n_actions=1, bias=[0.7], W=np.zeros((1, 1)), structure="cascade")
        contexts = np.zeros((1, 2))
        expected = 2 * sigmoid(np.array(0.7))
        assert true_policy_value(env, UniformPolicy(1, 2), contexts) == pytest.approx(float(expected), abs=1e-12)

    def test_independence_uniform_closed_form(self):
        env = manual_env(bias=[0.4, -0.2])
        contexts = np.random.default_rng(0).standard_normal((10, 2))
        base = env.base_reward_matrix(contexts)
        expected = np.mean(sigmoid(base).mean(axis=1)) * 2
        assert true_policy_value(env, UniformPolicy(2, 2), contexts) == pytest.approx(float(expected), abs=1e-12)

    def test_vectorized_paths_match_naive_enumeration(self):
        rng = np.random.default_rng(1)
        contexts = rng.standard_normal((4, 5))
        pol = make_behavior_policy(5, 3, 3, rng)
        for structure in ("standard", "cascade", "independence"):
            for kind in ("additive", "decay"):
                env = make_synthetic_env(slate_size=3, n_actions=3, reward_structure=structure,
                                         interaction_kind=kind, rng=np.random.default_rng(2))
                fast = true_policy_value(env, pol, contexts, mode="exact")
                slow = naive_policy_value(env, pol, contexts)
                assert fast == pytest.approx(slow, abs=1e-10), (structure, kind)

    def test_exact_vs_monte_carlo(self):
        env = make_synthetic_env(slate_size=3, n_actions=4, reward_structure="cascade",
                                 rng=np.random.default_rng(3))
        pol = make_behavior_policy(5, 4, 3, np.random.default_rng(4))
        contexts = np.random.default_rng(5).standard_normal((20, 5))
        exact = true_policy_value(env, pol, contexts, mode="exact")
        mc = true_policy_value(env, pol, contexts, mode="monte_carlo", mc_samples=10**5,
                               rng=np.random.default_rng(6))
        # slot rewards bounded by 1: SE of the slate mean is below L/2/sqrt(m)
        assert abs(exact - mc) < 3 * 1.5 / math.sqrt(10**5 * 20)

    def test_enumeration_limit_enforced(self):
        env = make_synthetic_env(slate_size=10, n_actions=5, rng=np.random.default_rng(7))
        with pytest.raises(ValueError):
            true_policy_value(env, UniformPolicy(5, 10), np.zeros((1, 5)), mode="exact")

    def test_non_factorizable_policy_path(self):
        from slate_ope.policy import LinearScorer, PlackettLucePolicy
        rng = np.random.default_rng(8)
        env = make_synthetic_env(slate_size=2, n_actions=3, reward_structure="standard",
                                 rng=rng)
        pol = PlackettLucePolicy(LinearScorer(rng.standard_normal((3, 5)), rng.standard_normal(3)), slate_size=2)
        contexts = rng.standard_normal((3, 5))
        alpha = env.alpha.values
        expected = 0.0
        for x in contexts:
            for slate in itertools.permutations(range(3), 2):
                expected += pol.slate_pmf(x, slate) * float(alpha @ env.slot_mean_rewards(x, slate))
        expected /= 3
        assert true_policy_value(env, pol, contexts) == pytest.approx(expected, abs=1e-10)
