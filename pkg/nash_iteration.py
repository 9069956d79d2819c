"""
Robust Nash-Iteration for distributionally robust Markov games.

Every round snapshots all agents' relative values, builds the per-state stage
games Q_i(s, a) = r_i(s, a) + sigma_{P^a_s}(h_i), solves each one with the
stage-game oracle and backs the equilibrium values up. The average-reward
driver re-anchors h_i at the reference state so it stays bounded, and reads
the gain of agent i off the (near) constant one-round change h_i - h_i^0.
"""

from collections import Counter
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from absl import logging
from pydantic import BaseModel, ConfigDict

import config
from errors import Divergence, InvalidPolicy, MaxRoundsExceeded
from game_model import JointPolicy, MarkovGame, induce_mdp, joint_probabilities
from robust_dp import (
    REFERENCE_STATE,
    best_response,
    discounted_best_response,
    discounted_robust_eval,
    robust_policy_eval,
)
from stage_games import EquilibriumClass, StageGame, StageMode, Support, solve_stage

HITTING_TIME_LIMIT = 1e6
DIAMETER_MAX_ITER = 100_000

PostHook = Callable[[int, JointPolicy, float], None]


class NashIterationResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    policy: JointPolicy
    gains: np.ndarray  # (N,), normalized units
    raw_gains: np.ndarray  # (N,), original reward units
    biases: np.ndarray  # (N, S), anchored at REFERENCE_STATE
    rounds: int
    span: float
    span_trace: List[float]
    oracle_histogram: Dict[str, int]
    converged: bool
    heuristic_oracle: bool
    gamma: Optional[float] = None
    values: Optional[np.ndarray] = None  # (N, S) discounted values


class NeVerification(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gaps: np.ndarray  # per agent: best-response value minus candidate value
    epsilon: float
    gains: np.ndarray
    best_gains: np.ndarray
    gamma: Optional[float] = None


def stage_payoffs(game: MarkovGame, values: np.ndarray, discount: float = 1.0) -> np.ndarray:
    """Q[i, s, j] = r_i(s, j) + discount * sigma_{P^j_s}(values[i])."""
    Q = np.empty_like(game.rewards)
    for i in range(game.num_agents):
        sig, _ = game.support(values[i])
        Q[i] = game.rewards[i] + discount * sig
    return Q


def solve_stage_games(
    game: MarkovGame,
    Q: np.ndarray,
    mode: StageMode = StageMode.AUTO,
    supports: Optional[Dict[int, Support]] = None,
) -> Tuple[JointPolicy, Counter]:
    """Solve the stage game of every state; returns the joint policy and a per-class count.

    `supports` maps state -> bimatrix support pair of the previous round. It is
    read as the preferred pair and updated in place with this round's choice.
    """
    shape = game.actions_per_agent
    probs = [np.zeros((game.num_states, n)) for n in shape]
    histogram: Counter = Counter()
    for s in range(game.num_states):
        stage = StageGame(payoffs=tuple(Q[i, s].reshape(shape) for i in range(game.num_agents)))
        eq = solve_stage(stage, mode, prefer=supports.get(s) if supports is not None else None)
        if supports is not None and eq.support is not None:
            supports[s] = eq.support
        histogram[eq.equilibrium_class.value] += 1
        for i, strategy in enumerate(eq.strategies):
            probs[i][s] = strategy
    return JointPolicy.full(probs), histogram


def _backup(game: MarkovGame, policy: JointPolicy, Q: np.ndarray) -> np.ndarray:
    joint = joint_probabilities(game, policy)
    return np.einsum("sj,nsj->ns", joint, Q)


def _finish(game, policy, gains, biases, rounds, spans, histogram, converged, gamma=None, values=None):
    heuristic = histogram.get(EquilibriumClass.GENERAL_BIMATRIX.value, 0) > 0
    return NashIterationResult(
        policy=policy,
        gains=gains,
        raw_gains=np.array([game.reward_map.to_raw_gain(g) for g in gains]),
        biases=biases,
        rounds=rounds,
        span=spans[-1] if spans else float("inf"),
        span_trace=spans,
        oracle_histogram=dict(histogram),
        converged=converged,
        heuristic_oracle=heuristic,
        gamma=gamma,
        values=values,
    )


def robust_nash_iteration_avg(
    game: MarkovGame,
    tol: float = config.DEFAULT_NASH_TOL,
    max_rounds: int = config.DEFAULT_MAX_ROUNDS,
    mode: StageMode = StageMode.AUTO,
    post_hook: Optional[PostHook] = None,
    damping: float = config.RVI_DAMPING,
) -> NashIterationResult:
    """Average-reward Robust Nash-Iteration.

    Stops once max_i sp(h_i - h_i^0) <= tol. `damping` < 1 mixes the previous
    relative values back in (aperiodicity transform), which leaves the fixed
    points unchanged and lets periodic chains settle; 1.0 runs the plain
    iteration. Bimatrix stage games keep last round's support pair while it
    is still an equilibrium. Raises MaxRoundsExceeded carrying the last
    iterate on the cap.
    """
    if tol <= 0:
        raise InvalidPolicy(f"tol must be positive, got {tol}")
    if not 0.0 < damping <= 1.0:
        raise InvalidPolicy(f"damping must lie in (0, 1], got {damping}")

    h0 = np.zeros((game.num_agents, game.num_states))
    gains = np.zeros(game.num_agents)
    spans: List[float] = []
    histogram: Counter = Counter()
    supports: Dict[int, Support] = {}
    policy = None
    for rnd in range(1, max_rounds + 1):
        Q = stage_payoffs(game, h0)
        policy, counts = solve_stage_games(game, Q, mode, supports)
        histogram.update(counts)
        h = _backup(game, policy, Q)

        diff = h - h0
        hi, lo = diff.max(axis=1), diff.min(axis=1)
        span = float(np.max(hi - lo))
        gains = 0.5 * (hi + lo)
        spans.append(span)
        logging.debug("Nash-iteration round %d: span %.3e", rnd, span)
        if post_hook is not None:
            post_hook(rnd, policy, span)
        if span <= tol:
            logging.info("Nash-iteration converged in %d rounds (span %.3e)", rnd, span)
            return _finish(game, policy, gains, h0, rnd, spans, histogram, converged=True)

        anchored = h - h[:, [REFERENCE_STATE]]
        h0 = (1.0 - damping) * h0 + damping * anchored

    partial = _finish(game, policy, gains, h0, max_rounds, spans, histogram, converged=False)
    raise MaxRoundsExceeded(f"Nash-iteration span {spans[-1]:.3e} still above tol={tol} after {max_rounds} rounds", spans, partial)


def robust_nash_iteration_discounted(
    game: MarkovGame,
    gamma: float,
    tol: float = config.DEFAULT_NASH_TOL,
    max_rounds: int = config.DEFAULT_MAX_ROUNDS,
    mode: StageMode = StageMode.AUTO,
    post_hook: Optional[PostHook] = None,
) -> NashIterationResult:
    """Discounted counterpart: Q_i = r_i + gamma * sigma(V_i^0), stop on max_i ||V_i - V_i^0|| <= tol(1 - gamma)."""
    if not 0.0 <= gamma < 1.0:
        raise InvalidPolicy(f"discount factor must lie in [0, 1), got {gamma}")
    if tol <= 0:
        raise InvalidPolicy(f"tol must be positive, got {tol}")

    V0 = np.zeros((game.num_agents, game.num_states))
    threshold = tol * (1.0 - gamma)
    spans: List[float] = []
    histogram: Counter = Counter()
    supports: Dict[int, Support] = {}
    policy = None
    for rnd in range(1, max_rounds + 1):
        Q = stage_payoffs(game, V0, gamma)
        policy, counts = solve_stage_games(game, Q, mode, supports)
        histogram.update(counts)
        V = _backup(game, policy, Q)

        step = float(np.max(np.abs(V - V0)))
        spans.append(step)
        if post_hook is not None:
            post_hook(rnd, policy, step)
        # gamma = 0 has no future term, one round is exact
        if step <= threshold or gamma == 0.0:
            logging.info("Discounted Nash-iteration (gamma=%.4f) converged in %d rounds", gamma, rnd)
            return _discounted_result(game, policy, V, rnd, spans, histogram, gamma, converged=True)
        V0 = V

    partial = _discounted_result(game, policy, V0, max_rounds, spans, histogram, gamma, converged=False)
    raise MaxRoundsExceeded(f"discounted Nash-iteration (gamma={gamma}) did not converge in {max_rounds} rounds", spans, partial)


def _discounted_result(game, policy, V, rounds, spans, histogram, gamma, converged):
    gains = (1.0 - gamma) * V[:, REFERENCE_STATE]
    biases = V - V[:, [REFERENCE_STATE]]
    return _finish(game, policy, gains, biases, rounds, spans, histogram, converged, gamma=gamma, values=V)


def verify_ne(game: MarkovGame, candidate: JointPolicy, tol: float = config.DEFAULT_TOL) -> NeVerification:
    """Robust average-reward deviation gap of every agent under `candidate`."""
    candidate.validate_for(game)
    gains, best = [], []
    for agent in range(game.num_agents):
        others = candidate.without(agent)
        mdp = induce_mdp(game, agent, others)
        gains.append(robust_policy_eval(mdp, candidate.policy_of(agent), tol=tol).gain)
        best.append(best_response(game, agent, others, tol=tol)[1])
    gains, best = np.array(gains), np.array(best)
    gaps = best - gains
    return NeVerification(gaps=gaps, epsilon=float(gaps.max()), gains=gains, best_gains=best)


def verify_ne_discounted(
    game: MarkovGame, candidate: JointPolicy, gamma: float, tol: float = config.DEFAULT_TOL
) -> NeVerification:
    """Discounted deviation gap: worst state-wise improvement of a discounted best response."""
    candidate.validate_for(game)
    gains, best, gaps = [], [], []
    for agent in range(game.num_agents):
        others = candidate.without(agent)
        mdp = induce_mdp(game, agent, others)
        current = discounted_robust_eval(mdp, candidate.policy_of(agent), gamma, tol=tol).values
        _, optimal = discounted_best_response(game, agent, others, gamma, tol=tol)
        gaps.append(float(np.max(optimal - current)))
        gains.append(float(current[REFERENCE_STATE]))
        best.append(float(optimal[REFERENCE_STATE]))
    gaps = np.array(gaps)
    return NeVerification(gaps=gaps, epsilon=float(gaps.max()), gains=np.array(gains), best_gains=np.array(best), gamma=gamma)


def robust_diameter_upper(
    game: MarkovGame, tol: float = config.DEFAULT_TOL, max_iter: int = DIAMETER_MAX_ITER
) -> float:
    """Upper bound on the robust diameter from worst-case hitting times.

    For each target t: T(s) = 1 + min_a sigma_max(P^a_s)(T), T(t) = 0, iterated
    upward from zero. Taking the adversary's max inside the agents' min gives
    min-max >= max-min, so the bound is conservative.
    """
    worst = 0.0
    for target in range(game.num_states):
        T = np.zeros(game.num_states)
        for _ in range(max_iter):
            sig, _ = game.support(T, maximize=True)
            T_next = 1.0 + sig.min(axis=1)
            T_next[target] = 0.0
            step = float(np.max(np.abs(T_next - T)))
            T = T_next
            if T.max() > HITTING_TIME_LIMIT:
                raise Divergence(f"hitting time of state {target} exceeds {HITTING_TIME_LIMIT:g}", {"target": target})
            if step <= tol:
                break
        else:
            raise Divergence(f"hitting times of state {target} did not settle in {max_iter} iterations", {"target": target})
        worst = max(worst, float(T.max()))
    return worst


def discount_for_epsilon(diameter: float, epsilon: float) -> float:
    """gamma = max(0, 1 - epsilon / D)."""
    if epsilon <= 0:
        raise InvalidPolicy(f"epsilon must be positive, got {epsilon}")
    if diameter < 1:
        raise InvalidPolicy(f"a diameter is at least 1, got {diameter}")
    return max(0.0, 1.0 - epsilon / diameter)
