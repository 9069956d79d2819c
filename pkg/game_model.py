"""
Data model for distributionally robust Markov games.

A game stores N agents, S states, per-agent action counts, per-agent rewards
over (state, joint action) and one nominal transition row per (state, joint
action). Joint actions are flattened row-major in agent order. The uncertainty
set is (s,a)-rectangular: one ball of the same kind and radius around every
nominal row.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from absl import logging
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.sparse.csgraph import connected_components

import config
from errors import DimensionMismatch, InvalidPolicy, InvalidUncertaintySet, NonStochasticRow
from support_functions import ROW_SUM_TOL, Divergence, UncertaintySet, support_batch

POLICY_TOL = 1e-12


# Pydantic models matching the game and policy file formats
class GameDescription(BaseModel):
    """Self-describing game file. rewards[i][s][a_joint], nominal[s][a_joint][s']."""

    agents: int = Field(ge=1)
    states: int = Field(ge=2)
    actions_per_agent: List[int]
    rewards: List[List[List[float]]]
    nominal: List[List[List[float]]]
    theta: float = 0.0
    divergence: Divergence = Divergence.SINGLETON

    @field_validator("actions_per_agent")
    @classmethod
    def _positive_actions(cls, value):
        if any(a < 1 for a in value):
            raise DimensionMismatch(f"every agent needs at least one action, got {value}")
        return value


class PolicyFile(BaseModel):
    """Per agent -> per state -> probability list."""

    agents: List[List[List[float]]]


class AffineMap(BaseModel):
    """raw = scale * normalized + offset."""

    model_config = ConfigDict(frozen=True)

    scale: float = 1.0
    offset: float = 0.0

    def to_raw(self, normalized):
        return self.scale * np.asarray(normalized) + self.offset

    def to_raw_gain(self, gain: float) -> float:
        return float(self.scale * gain + self.offset)


class JointPolicy(BaseModel):
    """Product policy: one (S, A_i) stochastic matrix per listed agent."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    agents: Tuple[int, ...]
    probs: Tuple[np.ndarray, ...]

    @field_validator("probs", mode="before")
    @classmethod
    def _as_arrays(cls, value):
        return tuple(np.asarray(p, dtype=float) for p in value)

    @classmethod
    def full(cls, probs) -> "JointPolicy":
        probs = tuple(probs)
        return cls(agents=tuple(range(len(probs))), probs=probs)

    @classmethod
    def uniform(cls, game: "MarkovGame") -> "JointPolicy":
        return cls.full(np.full((game.num_states, n), 1.0 / n) for n in game.actions_per_agent)

    @classmethod
    def deterministic(cls, game: "MarkovGame", actions) -> "JointPolicy":
        """actions[i][s] is agent i's action at state s."""
        return cls.full(one_hot(np.asarray(a, dtype=int), n) for a, n in zip(actions, game.actions_per_agent))

    def policy_of(self, agent: int) -> np.ndarray:
        return self.probs[self.agents.index(agent)]

    def without(self, agent: int) -> "JointPolicy":
        keep = [k for k, a in enumerate(self.agents) if a != agent]
        return JointPolicy(agents=tuple(self.agents[k] for k in keep), probs=tuple(self.probs[k] for k in keep))

    def validate_for(self, game: "MarkovGame", agents: Optional[Tuple[int, ...]] = None) -> None:
        expected = tuple(range(game.num_agents)) if agents is None else agents
        if tuple(sorted(self.agents)) != tuple(sorted(expected)):
            raise InvalidPolicy(f"policy covers agents {self.agents}, expected {expected}")
        for agent, p in zip(self.agents, self.probs):
            check_policy_matrix(p, game.num_states, game.actions_per_agent[agent], f"agent {agent}")

    def to_file(self) -> PolicyFile:
        return PolicyFile(agents=[p.tolist() for p in self.probs])


def one_hot(actions: np.ndarray, num_actions: int) -> np.ndarray:
    out = np.zeros((actions.size, num_actions))
    out[np.arange(actions.size), actions] = 1.0
    return out


def check_policy_matrix(p: np.ndarray, num_states: int, num_actions: int, what: str = "policy") -> None:
    if p.shape != (num_states, num_actions):
        raise InvalidPolicy(f"{what} has shape {p.shape}, expected {(num_states, num_actions)}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise InvalidPolicy(f"{what} has negative or non-finite probabilities")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > POLICY_TOL):
        raise InvalidPolicy(f"{what} rows sum to {sums}, not 1")


class MarkovGame(BaseModel):
    """Validated game with rewards normalized to [0, 1]."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    num_agents: int
    num_states: int
    actions_per_agent: Tuple[int, ...]
    rewards: np.ndarray  # (N, S, J), normalized
    nominal: np.ndarray  # (S, J, S)
    divergence: Divergence
    theta: float
    reward_map: AffineMap = AffineMap()

    @property
    def num_joint_actions(self) -> int:
        return int(np.prod(self.actions_per_agent))

    @property
    def joint_actions(self) -> np.ndarray:
        """(J, N) table of per-agent actions for every flattened joint index."""
        grid = np.unravel_index(np.arange(self.num_joint_actions), self.actions_per_agent)
        return np.stack(grid, axis=1)

    @property
    def raw_rewards(self) -> np.ndarray:
        return self.reward_map.to_raw(self.rewards)

    def uncertainty_set(self, state: int, joint_action: int) -> UncertaintySet:
        return UncertaintySet(kind=self.divergence, nominal=self.nominal[state, joint_action], radius=self.theta)

    def support(self, V: np.ndarray, maximize: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """sigma of every (s, joint a) ball at V: values (S, J) and extremal rows (S, J, S)."""
        S, J = self.num_states, self.num_joint_actions
        values, extremal, _ = support_batch(
            self.divergence, self.nominal.reshape(S * J, S), self.theta, np.asarray(V, dtype=float), maximize
        )
        return values.reshape(S, J), extremal.reshape(S, J, S)

    def with_theta(self, theta: float) -> "MarkovGame":
        """Same game with a different radius; theta=0 is the non-robust game."""
        if theta < 0:
            raise InvalidUncertaintySet(f"theta must be nonnegative, got {theta}")
        kind = self.divergence if theta > 0 else Divergence.SINGLETON
        return self.model_copy(update={"theta": float(theta), "divergence": kind})

    def to_description(self) -> GameDescription:
        return GameDescription(
            agents=self.num_agents,
            states=self.num_states,
            actions_per_agent=list(self.actions_per_agent),
            rewards=self.raw_rewards.tolist(),
            nominal=self.nominal.tolist(),
            theta=self.theta,
            divergence=self.divergence,
        )


class InducedRobustMDP(BaseModel):
    """Single-agent robust MDP seen by `agent` when the others are fixed.

    weights[s, a_i, j] is the probability the others play the rest of joint
    action j given agent i plays a_i, and zero when j's agent-i component is
    not a_i. Rectangularity makes the induced support function the
    weights-average of the joint-action support functions.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    game: MarkovGame
    agent: int
    weights: np.ndarray  # (S, A_i, J)
    rewards: np.ndarray  # (S, A_i), normalized

    @property
    def num_states(self) -> int:
        return self.game.num_states

    @property
    def num_actions(self) -> int:
        return self.game.actions_per_agent[self.agent]

    def support(self, V: np.ndarray, maximize: bool = False) -> np.ndarray:
        values, _ = self.game.support(V, maximize)
        return np.einsum("saj,sj->sa", self.weights, values)

    def support_kernels(self, V: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Induced sigma values (S, A_i) and minimizing kernels (S, A_i, S)."""
        values, extremal = self.game.support(V)
        return (
            np.einsum("saj,sj->sa", self.weights, values),
            np.einsum("saj,sjt->sat", self.weights, extremal),
        )

    def nominal_kernels(self) -> np.ndarray:
        return np.einsum("saj,sjt->sat", self.weights, self.game.nominal)


def build_game(spec: Union[GameDescription, Dict]) -> MarkovGame:
    """Validate a game description and normalize its rewards to [0, 1].

    Rewards already inside [0, 1] are kept as they are. Otherwise every agent's
    rewards go through the same affine map [lo, hi] -> [0, 1], which keeps best
    responses and equilibria unchanged.
    """
    if not isinstance(spec, GameDescription):
        spec = GameDescription(**spec)

    N, S = spec.agents, spec.states
    if len(spec.actions_per_agent) != N:
        raise DimensionMismatch(f"actions_per_agent lists {len(spec.actions_per_agent)} agents, expected {N}")
    J = int(np.prod(spec.actions_per_agent))

    rewards = np.asarray(spec.rewards, dtype=float)
    nominal = np.asarray(spec.nominal, dtype=float)
    if rewards.shape != (N, S, J):
        raise DimensionMismatch(f"rewards have shape {rewards.shape}, expected {(N, S, J)}")
    if nominal.shape != (S, J, S):
        raise DimensionMismatch(f"nominal kernel has shape {nominal.shape}, expected {(S, J, S)}")
    if not np.all(np.isfinite(rewards)):
        raise DimensionMismatch("rewards must be finite")

    if np.any(nominal < 0) or not np.all(np.isfinite(nominal)):
        raise NonStochasticRow("nominal kernel has negative or non-finite entries")
    sums = nominal.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        s, a = bad[0]
        raise NonStochasticRow(f"nominal row (s={s}, a={a}) sums to {sums[s, a]!r}")

    if spec.theta < 0 or not np.isfinite(spec.theta):
        raise InvalidUncertaintySet(f"theta must be a nonnegative real, got {spec.theta}")
    divergence = spec.divergence
    if divergence == Divergence.SINGLETON and spec.theta != 0:
        raise InvalidUncertaintySet("singleton uncertainty requires theta = 0")

    reward_map = _normalizing_map(rewards)
    normalized = (rewards - reward_map.offset) / reward_map.scale

    return MarkovGame(
        num_agents=N,
        num_states=S,
        actions_per_agent=tuple(spec.actions_per_agent),
        rewards=normalized,
        nominal=nominal,
        divergence=divergence,
        theta=float(spec.theta),
        reward_map=reward_map,
    )


def _normalizing_map(rewards: np.ndarray) -> AffineMap:
    lo, hi = float(rewards.min()), float(rewards.max())
    if lo >= 0.0 and hi <= 1.0:
        return AffineMap()
    if hi == lo:
        # constant rewards outside [0, 1]: shift onto 0.5
        return AffineMap(scale=1.0, offset=lo - 0.5)
    return AffineMap(scale=hi - lo, offset=lo)


def induce_mdp(game: MarkovGame, agent: int, others: JointPolicy) -> InducedRobustMDP:
    """Fix every agent but `agent` and marginalize rewards and uncertainty."""
    if not 0 <= agent < game.num_agents:
        raise InvalidPolicy(f"agent index {agent} out of range for {game.num_agents} agents")
    expected = tuple(a for a in range(game.num_agents) if a != agent)
    others.validate_for(game, expected)

    table = game.joint_actions  # (J, N)
    S, J = game.num_states, game.num_joint_actions
    others_prob = np.ones((S, J))
    for k, probs in zip(others.agents, others.probs):
        others_prob *= probs[:, table[:, k]]

    own = one_hot(table[:, agent], game.actions_per_agent[agent])  # (J, A_i)
    weights = np.einsum("sj,ja->saj", others_prob, own)
    rewards = np.einsum("saj,sj->sa", weights, game.rewards[agent])
    return InducedRobustMDP(game=game, agent=agent, weights=weights, rewards=rewards)


def single_agent_mdp(game: MarkovGame) -> InducedRobustMDP:
    """The robust MDP of a one-agent game."""
    if game.num_agents != 1:
        raise InvalidPolicy(f"single_agent_mdp needs a one-agent game, got {game.num_agents} agents")
    return induce_mdp(game, 0, JointPolicy(agents=(), probs=()))


def joint_probabilities(game: MarkovGame, policy: JointPolicy) -> np.ndarray:
    """(S, J) probability of every joint action under the product policy."""
    policy.validate_for(game)
    table = game.joint_actions
    probs = np.ones((game.num_states, game.num_joint_actions))
    for agent, p in zip(policy.agents, policy.probs):
        probs *= p[:, table[:, agent]]
    return probs


def marginal_reward(game: MarkovGame, policy: JointPolicy, agent: int) -> np.ndarray:
    """r_i^pi(s) in normalized units."""
    if not 0 <= agent < game.num_agents:
        raise InvalidPolicy(f"agent index {agent} out of range")
    return np.sum(joint_probabilities(game, policy) * game.rewards[agent], axis=1)


class IrreducibilityReport(BaseModel):
    irreducible: bool
    exhaustive: bool
    checked: int
    witness: Optional[List[int]] = None  # joint action per state of a reducible policy


def check_irreducibility(
    game: MarkovGame,
    full: bool = False,
    samples: int = config.IRREDUCIBILITY_SAMPLES,
    seed: int = 0,
) -> IrreducibilityReport:
    """Check the nominal chain of deterministic joint policies for irreducibility.

    Every deterministic policy is enumerated when the game is small (or `full`
    is set); larger games get a random spot-check of `samples` policies.
    """
    S, J = game.num_states, game.num_joint_actions
    exhaustive = full or (J <= config.IRREDUCIBILITY_MAX_JOINT_ACTIONS and S <= config.IRREDUCIBILITY_MAX_STATES)
    if exhaustive:
        total = J**S
        chunk = 4096
        checked = 0
        for start in range(0, total, chunk):
            codes = np.arange(start, min(start + chunk, total))
            choices = np.stack(np.unravel_index(codes, (J,) * S), axis=1)
            witness = _first_reducible(game.nominal, choices)
            checked += len(codes)
            if witness is not None:
                return IrreducibilityReport(irreducible=False, exhaustive=True, checked=checked, witness=witness)
        return IrreducibilityReport(irreducible=True, exhaustive=True, checked=checked)

    rng = np.random.default_rng(seed)
    choices = rng.integers(0, J, size=(samples, S))
    for row in choices:
        chain = game.nominal[np.arange(S), row]
        n_comp, _ = connected_components(chain > 0, directed=True, connection="strong")
        if n_comp != 1:
            logging.warning("Irreducibility spot-check failed for joint actions %s", row.tolist())
            return IrreducibilityReport(irreducible=False, exhaustive=False, checked=samples, witness=row.tolist())
    return IrreducibilityReport(irreducible=True, exhaustive=False, checked=samples)


def _first_reducible(nominal: np.ndarray, choices: np.ndarray) -> Optional[List[int]]:
    """Batched reachability closure by repeated boolean squaring."""
    S = nominal.shape[0]
    reach = nominal[np.arange(S)[None, :], choices] > 0  # (B, S, S)
    reach |= np.eye(S, dtype=bool)[None]
    steps = 1
    while steps < S:
        reach = np.einsum("bij,bjk->bik", reach.astype(np.int64), reach.astype(np.int64)) > 0
        steps *= 2
    ok = reach.all(axis=(1, 2))
    if ok.all():
        return None
    return choices[int(np.argmin(ok))].tolist()


def load_game(path: Union[str, Path]) -> MarkovGame:
    with open(path) as f:
        return build_game(GameDescription(**json.load(f)))


def save_game(game: MarkovGame, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        json.dump(game.to_description().model_dump(mode="json"), f, indent=2)


def load_policy(path: Union[str, Path], game: MarkovGame) -> JointPolicy:
    """Read a policy file and re-validate every distribution against the game."""
    with open(path) as f:
        data = PolicyFile(**json.load(f))
    policy = JointPolicy.full(np.asarray(p, dtype=float) for p in data.agents)
    policy.validate_for(game)
    return policy


def save_policy(policy: JointPolicy, path: Union[str, Path]) -> None:
    with open(path, "w") as f:
        json.dump(policy.to_file().model_dump(), f, indent=2)
