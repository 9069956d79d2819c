#!/usr/bin/env python3
"""
Tests for Robust Nash-Iteration, NE verification and the robust diameter bound.
"""

import sys

import numpy as np

import sample_games
from errors import InvalidPolicy, MaxRoundsExceeded
from game_model import JointPolicy, build_game, single_agent_mdp
from harness import run_suite
from nash_iteration import (
    discount_for_epsilon,
    robust_diameter_upper,
    robust_nash_iteration_avg,
    robust_nash_iteration_discounted,
    solve_stage_games,
    stage_payoffs,
    verify_ne,
    verify_ne_discounted,
)
from oracles import min_hitting_diameter
from robust_dp import robust_optimal_control, robust_policy_eval
from support_functions import Divergence


def test_single_agent_matches_optimal_control():
    game = build_game(sample_games.random_mdp(states=4, actions=3, theta=0.05, seed=3))
    result = robust_nash_iteration_avg(game, tol=1e-9)
    assert result.converged and result.span <= 1e-9
    gb, _ = robust_optimal_control(single_agent_mdp(game), tol=1e-10)
    assert abs(result.gains[0] - gb.gain) < 1e-6
    achieved = robust_policy_eval(single_agent_mdp(game), result.policy.policy_of(0), tol=1e-10)
    assert abs(achieved.gain - gb.gain) < 1e-6


def test_periodic_chain_settles_with_damping():
    game = build_game(sample_games.swap_chain())
    gb, _ = robust_optimal_control(single_agent_mdp(game), tol=1e-10)
    result = robust_nash_iteration_avg(game, tol=1e-9, max_rounds=2000)
    assert result.converged
    assert abs(result.gains[0] - gb.gain) <= 2e-9
    assert abs(result.gains[0] - 0.5) < 1e-9
    # the undamped iteration keeps swapping the relative values
    try:
        robust_nash_iteration_avg(game, tol=1e-9, max_rounds=50, damping=1.0)
        raise AssertionError("undamped iteration converged on a periodic chain")
    except MaxRoundsExceeded as e:
        assert e.span_trace[-1] == 1.0


def test_bimatrix_supports_are_tracked():
    game = build_game(sample_games.random_two_agent_game("general", states=3, seed=4))
    Q = stage_payoffs(game, np.zeros((2, game.num_states)))
    supports = {}
    policy, counts = solve_stage_games(game, Q, supports=supports)
    assert counts == {"general_bimatrix": 3}
    assert sorted(supports) == [0, 1, 2]
    recorded = dict(supports)
    again, _ = solve_stage_games(game, Q, supports=supports)
    assert supports == recorded
    for agent in range(2):
        assert np.array_equal(again.policy_of(agent), policy.policy_of(agent))


def test_constant_game_converges_immediately():
    game = build_game(sample_games.constant_game(0.3, agents=2, states=3, actions=2))
    result = robust_nash_iteration_avg(game)
    assert result.rounds <= 2
    assert np.allclose(result.gains, 0.3, atol=1e-12)
    assert np.allclose(result.raw_gains, 0.3, atol=1e-12)
    assert result.oracle_histogram == {"global_optimal": 3 * result.rounds}
    assert not result.heuristic_oracle


def test_zero_sum_output_is_equilibrium():
    game = build_game(sample_games.random_two_agent_game("zero_sum", theta=0.0, divergence=Divergence.SINGLETON, seed=11))
    result = robust_nash_iteration_avg(game, tol=1e-9)
    assert result.converged
    assert set(result.oracle_histogram) == {"saddle_point"}
    check = verify_ne(game, result.policy, tol=1e-10)
    assert check.epsilon <= 1e-4, check.gaps
    # zero-sum after normalization: the gains add up to a constant
    assert abs(check.gains.sum() - result.gains.sum()) < 1e-6


def test_common_payoff_robust_game_is_equilibrium():
    game = build_game(sample_games.random_two_agent_game("common", theta=0.05, seed=12))
    result = robust_nash_iteration_avg(game, tol=1e-9)
    assert result.converged and not result.heuristic_oracle
    assert np.allclose(result.gains[0], result.gains[1])
    assert verify_ne(game, result.policy, tol=1e-10).epsilon <= 1e-4


def test_dominant_action_is_found_and_verified():
    game = build_game(sample_games.dominant_action_game(advantage=0.4, states=2, seed=6))
    result = robust_nash_iteration_avg(game, tol=1e-9)
    assert np.allclose(result.policy.policy_of(0)[:, 1], 1.0)
    assert result.heuristic_oracle
    assert verify_ne(game, result.policy, tol=1e-10).epsilon <= 1e-6

    agent1 = result.policy.policy_of(1)
    wrong = JointPolicy.full([np.tile([1.0, 0.0], (2, 1)), agent1])
    check = verify_ne(game, wrong, tol=1e-10)
    assert abs(check.gaps[0] - 0.4) < 1e-6


def test_span_trace_and_anchoring():
    game = build_game(sample_games.random_two_agent_game("common", states=4, theta=0.1, seed=2))
    seen = []
    result = robust_nash_iteration_avg(game, tol=1e-8, post_hook=lambda rnd, policy, span: seen.append((rnd, span)))
    assert [r for r, _ in seen] == list(range(1, result.rounds + 1))
    assert [s for _, s in seen] == result.span_trace
    assert result.span_trace[-1] <= 1e-8
    assert np.all(result.biases[:, 0] == 0.0)
    # h + g reproduces one more round of backups up to tol
    Q = stage_payoffs(game, result.biases)
    joint = np.ones((game.num_states, game.num_joint_actions))
    for agent in range(2):
        joint *= result.policy.policy_of(agent)[:, game.joint_actions[:, agent]]
    backup = np.einsum("sj,nsj->ns", joint, Q)
    assert np.max(np.abs(backup - result.biases - result.gains[:, None])) <= 1e-8


def test_round_cap_returns_partial_result():
    game = build_game(sample_games.random_two_agent_game("general", seed=4))
    try:
        robust_nash_iteration_avg(game, tol=1e-14, max_rounds=2)
        raise AssertionError("MaxRoundsExceeded not raised")
    except MaxRoundsExceeded as e:
        assert len(e.span_trace) == 2
        assert not e.result.converged and e.result.rounds == 2


def test_discounted_gamma_zero_is_one_round():
    game = build_game(sample_games.random_two_agent_game("common", seed=5))
    result = robust_nash_iteration_discounted(game, 0.0)
    assert result.rounds == 1 and result.converged
    best = game.rewards[0].max(axis=1)
    assert np.allclose(result.values[0], best)


def test_discounted_zero_sum_is_equilibrium():
    game = build_game(sample_games.random_two_agent_game("zero_sum", theta=0.0, divergence=Divergence.SINGLETON, seed=13))
    result = robust_nash_iteration_discounted(game, 0.9, tol=1e-9)
    assert result.converged and result.gamma == 0.9
    check = verify_ne_discounted(game, result.policy, 0.9, tol=1e-10)
    assert check.epsilon <= 1e-6, check.gaps


def test_vanishing_discount_single_agent():
    game = build_game(sample_games.random_mdp(states=4, actions=2, theta=0.05, seed=8))
    average = robust_nash_iteration_avg(game, tol=1e-9)
    gaps = []
    for gamma in (0.8, 0.95, 0.99):
        result = robust_nash_iteration_discounted(game, gamma, tol=1e-8)
        gaps.append(np.max(np.abs((1 - gamma) * result.values[0] - average.gains[0])))
    assert gaps[0] > gaps[1] > gaps[2]


def test_diameter_of_simple_chains():
    assert abs(robust_diameter_upper(build_game(sample_games.swap_chain())) - 1.0) < 1e-9
    assert abs(robust_diameter_upper(build_game(sample_games.lazy_chain(0.5))) - 2.0) < 1e-6


def test_diameter_matches_nominal_enumeration():
    for seed in range(3):
        game = build_game(sample_games.random_mdp(states=3, actions=2, theta=0.0, divergence=Divergence.SINGLETON, seed=seed))
        assert abs(robust_diameter_upper(game) - min_hitting_diameter(game.nominal)) < 1e-6
        robust = game.model_copy(update={"theta": 0.1, "divergence": Divergence.KL})
        assert robust_diameter_upper(robust) >= min_hitting_diameter(game.nominal) - 1e-9


def test_discount_for_epsilon():
    assert abs(discount_for_epsilon(10.0, 0.5) - 0.95) < 1e-15
    assert discount_for_epsilon(2.0, 5.0) == 0.0
    for diameter, epsilon in [(10.0, 0.0), (0.5, 0.1)]:
        try:
            discount_for_epsilon(diameter, epsilon)
            raise AssertionError("invalid arguments accepted")
        except InvalidPolicy:
            pass


def main():
    tests = [
        test_single_agent_matches_optimal_control,
        test_periodic_chain_settles_with_damping,
        test_bimatrix_supports_are_tracked,
        test_constant_game_converges_immediately,
        test_zero_sum_output_is_equilibrium,
        test_common_payoff_robust_game_is_equilibrium,
        test_dominant_action_is_found_and_verified,
        test_span_trace_and_anchoring,
        test_round_cap_returns_partial_result,
        test_discounted_gamma_zero_is_one_round,
        test_discounted_zero_sum_is_equilibrium,
        test_vanishing_discount_single_agent,
        test_diameter_of_simple_chains,
        test_diameter_matches_nominal_enumeration,
        test_discount_for_epsilon,
    ]
    return run_suite("Nash-iteration tests", tests)


if __name__ == "__main__":
    sys.exit(main())
