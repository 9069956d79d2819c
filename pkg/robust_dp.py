"""
Single-agent robust dynamic programming on induced robust MDPs.

Average reward: relative value iteration (RVI) with an aperiodicity transform
solves the robust Bellman equation h + g = r^pi + sigma^pi(h) for a fixed
policy, and its max-over-actions version for optimal control.
Discounted reward: plain contraction iteration of the robust discounted
Bellman operator.
"""

from typing import List, Optional, Tuple

import numpy as np
from absl import logging
from pydantic import BaseModel, ConfigDict

import config
from errors import InvalidPolicy, MaxIterExceeded
from game_model import InducedRobustMDP, JointPolicy, MarkovGame, check_policy_matrix, induce_mdp, one_hot
from stage_games import lexicographic_argmax

REFERENCE_STATE = 0


class GainBias(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gain: float
    bias: np.ndarray  # anchored: bias[REFERENCE_STATE] == 0
    residual: float
    iterations: int
    span_trace: Optional[List[float]] = None


class DiscountedValue(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: float
    values: np.ndarray
    residual: float
    iterations: int


def _check_policy(mdp: InducedRobustMDP, policy: np.ndarray) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    check_policy_matrix(policy, mdp.num_states, mdp.num_actions)
    return policy


def _initial_bias(mdp: InducedRobustMDP, initial_bias) -> np.ndarray:
    if initial_bias is None:
        return np.zeros(mdp.num_states)
    h = np.array(initial_bias, dtype=float)
    if h.shape != (mdp.num_states,):
        raise InvalidPolicy(f"initial bias has shape {h.shape}, expected ({mdp.num_states},)")
    return h - h[REFERENCE_STATE]


def _relative_value_iteration(mdp, backup, tol, max_iter, initial_bias, damping, trace) -> GainBias:
    """Shared RVI loop. `backup(h)` returns the un-offset update T(h).

    Stops when the one-step difference d = T(h) - h has span <= 2 * tol; the
    gain is the midpoint of max d and min d, so |h + g - T(h)| <= tol.
    """
    if tol <= 0:
        raise InvalidPolicy(f"tol must be positive, got {tol}")
    h = _initial_bias(mdp, initial_bias)
    spans: Optional[List[float]] = [] if trace else None
    residual = np.inf
    for it in range(1, max_iter + 1):
        update = backup(h)
        diff = update - h
        hi, lo = diff.max(), diff.min()
        residual = 0.5 * (hi - lo)
        if spans is not None:
            spans.append(float(hi - lo))
        if residual <= tol:
            logging.info("RVI converged in %d iterations (residual %.3e)", it, residual)
            return GainBias(gain=float(0.5 * (hi + lo)), bias=h, residual=float(residual), iterations=it, span_trace=spans)
        h = (1.0 - damping) * h + damping * (update - update[REFERENCE_STATE])
    raise MaxIterExceeded(f"RVI did not reach tol={tol} in {max_iter} iterations", float(residual), max_iter)


def robust_policy_eval(
    mdp: InducedRobustMDP,
    policy: np.ndarray,
    tol: float = config.DEFAULT_TOL,
    max_iter: int = config.DEFAULT_MAX_ITER,
    initial_bias: Optional[np.ndarray] = None,
    damping: float = config.RVI_DAMPING,
    trace: bool = False,
) -> GainBias:
    """Robust gain and anchored bias of a fixed policy (S, A)."""
    policy = _check_policy(mdp, policy)
    reward = np.sum(policy * mdp.rewards, axis=1)

    def backup(h):
        return reward + np.sum(policy * mdp.support(h), axis=1)

    return _relative_value_iteration(mdp, backup, tol, max_iter, initial_bias, damping, trace)


def robust_optimal_control(
    mdp: InducedRobustMDP,
    tol: float = config.DEFAULT_TOL,
    max_iter: int = config.DEFAULT_MAX_ITER,
    initial_bias: Optional[np.ndarray] = None,
    damping: float = config.RVI_DAMPING,
    trace: bool = False,
) -> Tuple[GainBias, np.ndarray]:
    """Optimal robust gain/bias and the greedy deterministic policy (action per state)."""

    def backup(h):
        return np.max(mdp.rewards + mdp.support(h), axis=1)

    result = _relative_value_iteration(mdp, backup, tol, max_iter, initial_bias, damping, trace)
    return result, greedy_actions(mdp.rewards + mdp.support(result.bias))


def greedy_actions(q: np.ndarray) -> np.ndarray:
    """Per-state argmax with ties going to the lowest action index."""
    return np.array([lexicographic_argmax(row) for row in q], dtype=int)


def robust_bellman_residual(mdp: InducedRobustMDP, policy: np.ndarray, gain: float, bias: np.ndarray) -> np.ndarray:
    """Per-state |h + g - r^pi - sigma^pi(h)|."""
    policy = _check_policy(mdp, policy)
    rhs = np.sum(policy * (mdp.rewards + mdp.support(bias)), axis=1)
    return np.abs(bias + gain - rhs)


def worst_case_kernel(mdp: InducedRobustMDP, policy: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Policy-weighted per-(s,a) minimizers at `bias`, assembled into an (S, S) kernel."""
    policy = _check_policy(mdp, policy)
    _, kernels = mdp.support_kernels(bias)
    return np.einsum("sa,sat->st", policy, kernels)


def best_response(
    game: MarkovGame,
    agent: int,
    others: JointPolicy,
    tol: float = config.DEFAULT_TOL,
    max_iter: int = config.DEFAULT_MAX_ITER,
) -> Tuple[np.ndarray, float]:
    """Deterministic best response (S, A_i) of `agent` and its robust gain."""
    mdp = induce_mdp(game, agent, others)
    result, actions = robust_optimal_control(mdp, tol=tol, max_iter=max_iter)
    return one_hot(actions, mdp.num_actions), result.gain


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma < 1.0:
        raise InvalidPolicy(f"discount factor must lie in [0, 1), got {gamma}")


def _discounted_iteration(mdp, backup, gamma, tol, max_iter) -> DiscountedValue:
    _check_gamma(gamma)
    V = np.zeros(mdp.num_states)
    if gamma == 0.0:
        return DiscountedValue(gamma=gamma, values=backup(V), residual=0.0, iterations=1)
    threshold = tol * (1.0 - gamma) / gamma
    step = np.inf
    for it in range(1, max_iter + 1):
        V_next = backup(V)
        step = float(np.max(np.abs(V_next - V)))
        V = V_next
        if step <= threshold:
            return DiscountedValue(gamma=gamma, values=V, residual=step * gamma / (1.0 - gamma), iterations=it)
    raise MaxIterExceeded(f"discounted iteration did not converge in {max_iter} iterations", step, max_iter)


def discounted_robust_eval(
    mdp: InducedRobustMDP,
    policy: np.ndarray,
    gamma: float,
    tol: float = config.DEFAULT_TOL,
    max_iter: int = config.DEFAULT_MAX_ITER,
) -> DiscountedValue:
    """Fixed point of V = sum_a pi(a|.)(r + gamma * sigma(V))."""
    policy = _check_policy(mdp, policy)
    reward = np.sum(policy * mdp.rewards, axis=1)

    def backup(V):
        return reward + gamma * np.sum(policy * mdp.support(V), axis=1)

    return _discounted_iteration(mdp, backup, gamma, tol, max_iter)


def discounted_robust_optimal(
    mdp: InducedRobustMDP,
    gamma: float,
    tol: float = config.DEFAULT_TOL,
    max_iter: int = config.DEFAULT_MAX_ITER,
) -> Tuple[DiscountedValue, np.ndarray]:
    def backup(V):
        return np.max(mdp.rewards + gamma * mdp.support(V), axis=1)

    result = _discounted_iteration(mdp, backup, gamma, tol, max_iter)
    return result, greedy_actions(mdp.rewards + gamma * mdp.support(result.values))


def discounted_best_response(
    game: MarkovGame,
    agent: int,
    others: JointPolicy,
    gamma: float,
    tol: float = config.DEFAULT_TOL,
    max_iter: int = config.DEFAULT_MAX_ITER,
) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic discounted best response and its robust value vector."""
    mdp = induce_mdp(game, agent, others)
    result, actions = discounted_robust_optimal(mdp, gamma, tol=tol, max_iter=max_iter)
    return one_hot(actions, mdp.num_actions), result.values
