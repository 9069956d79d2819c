#!/usr/bin/env python3
"""
Tests for game construction, reward normalization, policies and induced MDPs.
"""

import itertools
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

import sample_games
from errors import DimensionMismatch, InvalidPolicy, InvalidUncertaintySet, NonStochasticRow
from game_model import (
    JointPolicy,
    build_game,
    check_irreducibility,
    induce_mdp,
    joint_probabilities,
    load_game,
    load_policy,
    marginal_reward,
    save_game,
    save_policy,
)
from harness import run_suite
from oracles import grid_support_value
from support_functions import Divergence, UncertaintySet, sigma


def _spec(**overrides):
    spec = {
        "agents": 1,
        "states": 2,
        "actions_per_agent": [1],
        "rewards": [[[0.0], [1.0]]],
        "nominal": [[[0.0, 1.0]], [[1.0, 0.0]]],
        "theta": 0.0,
        "divergence": "singleton",
    }
    spec.update(overrides)
    return spec


def test_build_game_keeps_normalized_rewards():
    game = build_game(_spec())
    assert np.array_equal(game.rewards, [[[0.0], [1.0]]])
    assert game.reward_map.scale == 1.0 and game.reward_map.offset == 0.0


def test_rewards_rescaled_and_recoverable():
    game = build_game(_spec(rewards=[[[-2.0], [2.0]]]))
    assert np.allclose(game.rewards, [[[0.0], [1.0]]])
    assert game.reward_map.scale == 4.0 and game.reward_map.offset == -2.0
    # (r + 2) / 4 maps back exactly
    assert abs(game.reward_map.to_raw_gain(0.25) - (-1.0)) < 1e-10
    assert np.allclose(game.raw_rewards, [[[-2.0], [2.0]]], atol=1e-10)


def test_constant_rewards_outside_unit_interval():
    game = build_game(_spec(rewards=[[[3.0], [3.0]]]))
    assert np.allclose(game.rewards, 0.5)
    assert abs(game.reward_map.to_raw_gain(0.5) - 3.0) < 1e-12


def test_validation_errors():
    cases = [
        (_spec(nominal=[[[0.6, 0.5]], [[1.0, 0.0]]]), NonStochasticRow),
        (_spec(theta=-0.1, divergence="kl"), InvalidUncertaintySet),
        (_spec(theta=0.1, divergence="singleton"), InvalidUncertaintySet),
        (_spec(rewards=[[[0.0, 1.0], [1.0, 0.0]]]), DimensionMismatch),
        (_spec(actions_per_agent=[1, 1]), DimensionMismatch),
    ]
    for spec, error in cases:
        try:
            build_game(spec)
            raise AssertionError(f"{error.__name__} not raised")
        except error:
            pass


def test_induced_reward_deterministic_and_uniform():
    game = build_game(sample_games.random_two_agent_game("general", states=3, actions=2, seed=9))
    det = JointPolicy(agents=(1,), probs=(np.tile([0.0, 1.0], (3, 1)),))
    mdp = induce_mdp(game, 0, det)
    # agent 0 plays a, agent 1 fixed at action 1 -> joint index 2a + 1
    assert np.allclose(mdp.rewards, game.rewards[0][:, [1, 3]])

    uniform = JointPolicy(agents=(1,), probs=(np.full((3, 2), 0.5),))
    mdp = induce_mdp(game, 0, uniform)
    expected = 0.5 * (game.rewards[0][:, [0, 2]] + game.rewards[0][:, [1, 3]])
    assert np.allclose(mdp.rewards, expected, atol=1e-15)


def test_induced_support_is_weighted_sum_of_balls():
    game = build_game(sample_games.random_two_agent_game("general", states=3, actions=2, theta=0.05, seed=4))
    rng = np.random.default_rng(0)
    others = JointPolicy(agents=(1,), probs=(rng.dirichlet(np.ones(2), size=3),))
    mdp = induce_mdp(game, 0, others)
    V = rng.normal(size=3)
    induced = mdp.support(V)
    for s, a in itertools.product(range(3), range(2)):
        direct, grid = 0.0, 0.0
        for b in range(2):
            j = 2 * a + b
            weight = others.probs[0][s, b]
            uset = UncertaintySet(kind=Divergence.KL, nominal=game.nominal[s, j], radius=0.05)
            direct += weight * sigma(uset, V).value
            grid += weight * grid_support_value("kl", game.nominal[s, j], 0.05, V, density=200)
        assert abs(induced[s, a] - direct) < 1e-10
        assert abs(induced[s, a] - grid) < 1e-3


def test_induce_rejects_wrong_agents():
    game = build_game(sample_games.random_two_agent_game(seed=1))
    try:
        induce_mdp(game, 2, JointPolicy(agents=(1,), probs=(np.full((3, 2), 0.5),)))
        raise AssertionError("out-of-range agent accepted")
    except InvalidPolicy:
        pass
    try:
        induce_mdp(game, 0, JointPolicy(agents=(0,), probs=(np.full((3, 2), 0.5),)))
        raise AssertionError("policy covering the wrong agent accepted")
    except InvalidPolicy:
        pass


def test_marginal_reward_matches_direct_sum():
    game = build_game(sample_games.random_two_agent_game("general", states=2, actions=2, seed=7))
    rng = np.random.default_rng(1)
    policy = JointPolicy.full(rng.dirichlet(np.ones(2), size=2) for _ in range(2))
    r = marginal_reward(game, policy, 1)
    for s in range(2):
        direct = sum(
            policy.probs[0][s, a] * policy.probs[1][s, b] * game.rewards[1][s, 2 * a + b]
            for a in range(2)
            for b in range(2)
        )
        assert abs(r[s] - direct) < 1e-12
    assert np.allclose(joint_probabilities(game, policy).sum(axis=1), 1.0)


def test_marginal_reward_constant_and_deterministic():
    game = build_game(sample_games.constant_game(0.3))
    assert np.allclose(marginal_reward(game, JointPolicy.uniform(game), 0), 0.3)
    game = build_game(sample_games.random_two_agent_game(seed=2))
    policy = JointPolicy.deterministic(game, [[1, 0, 1], [0, 0, 1]])
    r = marginal_reward(game, policy, 0)
    assert np.allclose(r, [game.rewards[0][0, 2], game.rewards[0][1, 0], game.rewards[0][2, 3]])


def test_invalid_policy_rejected():
    game = build_game(sample_games.random_two_agent_game(seed=3))
    bad = JointPolicy.full([np.full((3, 2), 0.6), np.full((3, 2), 0.5)])
    try:
        bad.validate_for(game)
        raise AssertionError("non-stochastic policy accepted")
    except InvalidPolicy:
        pass


def test_irreducibility_check():
    game = build_game(sample_games.random_two_agent_game(seed=0))
    report = check_irreducibility(game)
    assert report.irreducible and report.exhaustive and report.checked == 4**3

    # action 1 keeps state 0 absorbing
    reducible = build_game({
        "agents": 1, "states": 2, "actions_per_agent": [2],
        "rewards": [[[0.0, 0.0], [1.0, 1.0]]],
        "nominal": [[[0.5, 0.5], [1.0, 0.0]], [[0.5, 0.5], [0.5, 0.5]]],
    })
    report = check_irreducibility(reducible)
    assert not report.irreducible
    assert report.witness[0] == 1

    sampled = check_irreducibility(build_game(sample_games.random_mdp(states=8, actions=3)), samples=16)
    assert sampled.irreducible and not sampled.exhaustive and sampled.checked == 16


def test_game_and_policy_files_round_trip():
    game = build_game(sample_games.random_two_agent_game(seed=5))
    policy = JointPolicy.uniform(game)
    with tempfile.TemporaryDirectory() as tmp:
        save_game(game, Path(tmp) / "game.json")
        save_policy(policy, Path(tmp) / "policy.json")
        loaded = load_game(Path(tmp) / "game.json")
        assert np.allclose(loaded.rewards, game.rewards)
        assert np.allclose(loaded.nominal, game.nominal)
        assert loaded.divergence == game.divergence
        again = load_policy(Path(tmp) / "policy.json", loaded)
        assert all(np.array_equal(a, b) for a, b in zip(again.probs, policy.probs))

        with open(Path(tmp) / "bad.json", "w") as f:
            json.dump({"agents": [[[0.7, 0.7]] * 3, [[0.5, 0.5]] * 3]}, f)
        try:
            load_policy(Path(tmp) / "bad.json", loaded)
            raise AssertionError("invalid policy file accepted")
        except InvalidPolicy:
            pass


def main():
    tests = [
        test_build_game_keeps_normalized_rewards,
        test_rewards_rescaled_and_recoverable,
        test_constant_rewards_outside_unit_interval,
        test_validation_errors,
        test_induced_reward_deterministic_and_uniform,
        test_induced_support_is_weighted_sum_of_balls,
        test_induce_rejects_wrong_agents,
        test_marginal_reward_matches_direct_sum,
        test_marginal_reward_constant_and_deterministic,
        test_invalid_policy_rejected,
        test_irreducibility_check,
        test_game_and_policy_files_round_trip,
    ]
    return run_suite("game model tests", tests)


if __name__ == "__main__":
    sys.exit(main())
