#!/usr/bin/env python3
"""
Sample game descriptions for tests and the quick start.
Writes a small library of canonical games and policies as JSON files.
"""

import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from game_model import GameDescription, JointPolicy, build_game, save_policy
from support_functions import Divergence


def _description(rewards, nominal, theta=0.0, divergence=Divergence.SINGLETON, actions=None) -> GameDescription:
    rewards = np.asarray(rewards, dtype=float)
    nominal = np.asarray(nominal, dtype=float)
    N, S, _ = rewards.shape
    return GameDescription(
        agents=N,
        states=S,
        actions_per_agent=list(actions or [nominal.shape[1]]),
        rewards=rewards.tolist(),
        nominal=nominal.tolist(),
        theta=theta,
        divergence=divergence if theta > 0 else Divergence.SINGLETON,
    )


def swap_chain(rewards=(0.0, 1.0)) -> GameDescription:
    """One agent, one action, deterministic swap between two states."""
    nominal = [[[0.0, 1.0]], [[1.0, 0.0]]]
    return _description([[[rewards[0]], [rewards[1]]]], nominal)


def lazy_chain(stay: float = 0.5, rewards=(0.0, 1.0)) -> GameDescription:
    nominal = [[[stay, 1.0 - stay]], [[1.0 - stay, stay]]]
    return _description([[[rewards[0]], [rewards[1]]]], nominal)


def random_kernel(rng: np.random.Generator, states: int, joint_actions: int) -> np.ndarray:
    """Dense (all-positive) rows, so every policy gives an irreducible aperiodic chain."""
    return rng.dirichlet(np.ones(states), size=(states, joint_actions))


def random_mdp(
    states: int = 3,
    actions: int = 2,
    theta: float = 0.05,
    divergence: Divergence = Divergence.KL,
    seed: int = 0,
) -> GameDescription:
    rng = np.random.default_rng(seed)
    rewards = rng.uniform(0.0, 1.0, size=(1, states, actions))
    return _description(rewards, random_kernel(rng, states, actions), theta, divergence)


def random_two_agent_game(
    kind: str = "general",
    states: int = 3,
    actions: int = 2,
    theta: float = 0.05,
    divergence: Divergence = Divergence.KL,
    seed: int = 0,
) -> GameDescription:
    """kind: 'zero_sum' (r_2 = -r_1), 'common' (r_2 = r_1) or 'general'."""
    rng = np.random.default_rng(seed)
    J = actions * actions
    r1 = rng.uniform(-1.0, 1.0, size=(states, J))
    if kind == "zero_sum":
        r2 = -r1
    elif kind == "common":
        r2 = r1.copy()
    elif kind == "general":
        r2 = rng.uniform(-1.0, 1.0, size=(states, J))
    else:
        raise ValueError(f"unknown game kind {kind!r}")
    return _description(np.stack([r1, r2]), random_kernel(rng, states, J), theta, divergence, [actions, actions])


def constant_game(value: float = 0.3, agents: int = 2, states: int = 3, actions: int = 2, theta: float = 0.05, seed: int = 0) -> GameDescription:
    rng = np.random.default_rng(seed)
    J = actions**agents
    rewards = np.full((agents, states, J), value)
    return _description(rewards, random_kernel(rng, states, J), theta, Divergence.KL, [actions] * agents)


def dominant_action_game(advantage: float = 0.4, states: int = 2, theta: float = 0.0, seed: int = 0) -> GameDescription:
    """Agent 0 earns `advantage` more with action 1 whatever happens; transitions ignore actions."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 1.0 - advantage, size=(states, 2))  # indexed by agent 1's action
    r0 = np.stack([base[:, 0], base[:, 1], base[:, 0] + advantage, base[:, 1] + advantage], axis=1)
    r1 = rng.uniform(0.0, 1.0, size=(states, 4))
    row = rng.dirichlet(np.ones(states), size=states)
    nominal = np.repeat(row[:, None, :], 4, axis=1)
    return _description(np.stack([r0, r1]), nominal, theta, Divergence.KL, [2, 2])


class SampleGameWriter:
    """Writes the sample library to a directory."""

    def __init__(self, directory: str):
        self.directory = Path(directory)

    def games(self) -> Dict[str, GameDescription]:
        return {
            "swap_chain": swap_chain(),
            "lazy_chain": lazy_chain(),
            "random_mdp_kl": random_mdp(seed=1),
            "random_mdp_l1": random_mdp(divergence=Divergence.L1, theta=0.2, seed=2),
            "zero_sum_kl": random_two_agent_game("zero_sum", seed=3),
            "common_payoff_kl": random_two_agent_game("common", seed=4),
            "general_sum_kl": random_two_agent_game("general", seed=5),
            "dominant_action": dominant_action_game(seed=6),
        }

    def write_all(self, names: Optional[List[str]] = None) -> List[Path]:
        self.directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, description in self.games().items():
            if names and name not in names:
                continue
            path = self.directory / f"{name}.json"
            with open(path, "w") as f:
                json.dump(description.model_dump(mode="json"), f, indent=2)
            written.append(path)
            print(f"✅ Wrote {path}")
            game = build_game(description)
            uniform = self.directory / f"{name}_uniform_policy.json"
            save_policy(JointPolicy.uniform(game), uniform)
            written.append(uniform)
        return written


def main() -> int:
    directory = sys.argv[1] if len(sys.argv) > 1 else "sample_games"
    print(f"🚀 Writing sample games to {directory}")
    paths = SampleGameWriter(directory).write_all()
    print(f"📊 {len(paths)} files written")
    return 0


if __name__ == "__main__":
    sys.exit(main())
