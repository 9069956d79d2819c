"""
Brute-force reference implementations for checking the solvers.

Nothing here calls solver code (support functions, dynamic programming,
Nash-iteration); it only reads game data. Everything is exact linear algebra
on fixed chains or exhaustive search over small discretized uncertainty sets.
"""

import itertools
from typing import Iterator, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components

from errors import InstanceTooLarge, ReducibleChain
from game_model import JointPolicy, MarkovGame, joint_probabilities

STATIONARY_TOL = 1e-10
BISECTION_STEPS = 80
SOLVE_CHUNK = 65536
MAX_GRID_STATES = 3
MAX_GRID_JOINT_ACTIONS = 4


class ExactChainSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    stationary: np.ndarray
    gain: float
    bias: np.ndarray  # anchored at state 0


def span(v: np.ndarray) -> float:
    return float(np.max(v) - np.min(v))


def is_irreducible(P: np.ndarray) -> bool:
    n_comp, _ = connected_components(np.asarray(P) > 0, directed=True, connection="strong")
    return n_comp == 1


def exact_gain_bias(P: np.ndarray, r: np.ndarray, require_irreducible: bool = True) -> ExactChainSolution:
    """Gain and bias of a fixed chain from the stationary and fundamental-matrix solves."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    S = P.shape[0]
    if require_irreducible and not is_irreducible(P):
        raise ReducibleChain("kernel is not irreducible")

    system = np.vstack([P.T - np.eye(S), np.ones((1, S))])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    mu, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    if np.max(np.abs(system @ mu - rhs)) > STATIONARY_TOL:
        raise ReducibleChain("stationary distribution is not unique")
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    gain = float(mu @ r)

    fundamental = np.eye(S) - P + np.outer(np.ones(S), mu)
    try:
        x = np.linalg.solve(fundamental, r - gain)
    except np.linalg.LinAlgError as e:
        raise ReducibleChain(f"fundamental matrix is singular: {e}")
    return ExactChainSolution(stationary=mu, gain=gain, bias=x - x[0])


def stationary_batch(P: np.ndarray) -> np.ndarray:
    """Stationary distributions of a stack of chains (B, S, S)."""
    B, S, _ = P.shape
    A = np.transpose(P, (0, 2, 1)) - np.eye(S)[None]
    A[:, -1, :] = 1.0
    rhs = np.zeros((B, S))
    rhs[:, -1] = 1.0
    try:
        return np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        out = np.empty((B, S))
        for b in range(B):
            out[b] = np.linalg.lstsq(A[b], rhs[b], rcond=None)[0]
        return out


def ergodicity_coefficient(P: np.ndarray) -> float:
    """alpha(P) = 1 - max_{i,j} TV(P_i, P_j)."""
    P = np.asarray(P, dtype=float)
    tv = 0.5 * np.abs(P[:, None, :] - P[None, :, :]).sum(axis=2)
    return float(1.0 - tv.max())


def kl(q: np.ndarray, p: np.ndarray) -> float:
    """KL(q || p) of one pair; +inf without absolute continuity."""
    return float(kl_rows(np.asarray(q, dtype=float)[None, :], np.asarray(p, dtype=float))[0])


def kl_rows(Q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """KL(q || p) for every row q of Q."""
    Q = np.clip(Q, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(Q > 0, Q * np.log(Q / p[None, :]), 0.0)
    return terms.sum(axis=1)


def _ray_lengths(
    kind: str, p0: np.ndarray, directions: np.ndarray, theta: float, origin: Optional[np.ndarray] = None
) -> np.ndarray:
    """Largest t per direction with origin + t * d inside both the simplex and the ball around p0.

    `origin` defaults to p0 and must itself lie in the ball.
    """
    start = p0 if origin is None else origin
    negative = directions < 0
    with np.errstate(divide="ignore"):
        ratios = np.where(negative, start[None, :] / np.where(negative, -directions, 1.0), np.inf)
    t_max = ratios.min(axis=1)
    t_max = np.where(np.isfinite(t_max), t_max, 1.0)
    if kind == "l1" and origin is None:
        return np.minimum(t_max, theta / np.abs(directions).sum(axis=1))

    def inside(t):
        points = start[None, :] + t[:, None] * directions
        if kind == "l1":
            return np.abs(points - p0[None, :]).sum(axis=1) <= theta
        return kl_rows(points, p0) <= theta

    lo, hi = np.zeros_like(t_max), t_max.copy()
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        ok = inside(mid)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return np.where(inside(t_max), t_max, lo)


def ball_points(kind: str, p0: np.ndarray, theta: float, density: int = 200) -> np.ndarray:
    """Points of a 2- or 3-state ball, extreme points first.

    Two states: the exact interval endpoints followed by `density` evenly
    spaced members. Three states: `density` boundary points along evenly
    spaced directions in the simplex plane, then the part of every simplex
    edge that lies in the ball (exact endpoints plus evenly spaced members),
    which covers the corners the simplex cuts off the ball.
    """
    kind = getattr(kind, "value", kind)
    p0 = np.asarray(p0, dtype=float)
    if kind == "singleton" or theta == 0:
        return p0[None, :]
    S = p0.size
    if S == 2:
        directions = np.eye(2) - p0[None, :]
        moving = np.any(directions != 0, axis=1)
        t = np.zeros(2)
        if moving.any():
            t[moving] = _ray_lengths(kind, p0, directions[moving], theta)
        ends = p0[None, :] + t[:, None] * directions
        return np.vstack([ends, np.linspace(ends[0], ends[1], density)])
    if S == 3:
        u1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
        u2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6.0)
        phi = np.linspace(0.0, 2.0 * np.pi, density, endpoint=False)
        directions = np.cos(phi)[:, None] * u1 + np.sin(phi)[:, None] * u2
        points = p0[None, :] + _ray_lengths(kind, p0, directions, theta)[:, None] * directions
        return np.clip(np.vstack([points, *_edge_points(kind, p0, theta, density)]), 0.0, None)
    raise InstanceTooLarge(f"ball discretization supports at most {MAX_GRID_STATES} states, got {S}")


def _edge_points(kind: str, p0: np.ndarray, theta: float, density: int) -> List[np.ndarray]:
    """Ball members on each edge {q_k = 0} of the 3-simplex."""
    edges = []
    for k in range(3):
        a, b = [j for j in range(3) if j != k]
        center = np.zeros(3)
        if kind == "l1":
            # closest edge point: p0 with the mass of k moved onto a
            if 2.0 * p0[k] > theta:
                continue
            center[a], center[b] = p0[a] + p0[k], p0[b]
        else:
            # closest edge point in KL: p0 renormalized onto {a, b}
            mass = p0[a] + p0[b]
            if mass <= 0 or -np.log(mass) > theta:
                continue
            center[a], center[b] = p0[a] / mass, p0[b] / mass
        along = np.zeros((2, 3))
        along[0, a], along[0, b] = 1.0, -1.0
        along[1] = -along[0]
        t = _ray_lengths(kind, p0, along, theta, origin=center)
        ends = center[None, :] + t[:, None] * along
        edges.append(np.vstack([ends, np.linspace(ends[0], ends[1], max(2, density // 3))]))
    return edges


def sample_ball_points(kind: str, p0: np.ndarray, theta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random members of a ball in any dimension: random ray, random depth (every other one on the boundary)."""
    kind = getattr(kind, "value", kind)
    p0 = np.asarray(p0, dtype=float)
    if kind == "singleton" or theta == 0:
        return np.repeat(p0[None, :], count, axis=0)
    support = p0 > 0 if kind == "kl" else np.ones(p0.size, dtype=bool)
    directions = np.where(support[None, :], rng.normal(size=(count, p0.size)), 0.0)
    directions[:, support] -= directions[:, support].mean(axis=1, keepdims=True)
    moving = np.any(np.abs(directions) > 0, axis=1)
    if support.sum() < 2:
        moving[:] = False
    t = np.zeros(count)
    if moving.any():
        t[moving] = _ray_lengths(kind, p0, directions[moving], theta)
    depth = np.where(np.arange(count) % 2 == 0, 1.0, rng.uniform(size=count))
    points = np.clip(p0[None, :] + (depth * t)[:, None] * directions, 0.0, None)
    return points / points.sum(axis=1, keepdims=True)


def grid_support_value(kind: str, p0: np.ndarray, theta: float, V: np.ndarray, density: int = 10_000) -> float:
    """min over the ball of q.V by brute force (KL) or an explicit linear program (L1)."""
    kind = getattr(kind, "value", kind)
    p0 = np.asarray(p0, dtype=float)
    V = np.asarray(V, dtype=float)
    if kind == "l1":
        S = p0.size
        # variables [q, u] with |q - p0| <= u and sum u <= theta
        c = np.concatenate([V, np.zeros(S)])
        eye = np.eye(S)
        A_ub = np.vstack([
            np.hstack([eye, -eye]),
            np.hstack([-eye, -eye]),
            np.concatenate([np.zeros(S), np.ones(S)])[None, :],
        ])
        b_ub = np.concatenate([p0, -p0, [theta]])
        A_eq = np.concatenate([np.ones(S), np.zeros(S)])[None, :]
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * (2 * S), method="highs-ds")
        return float(res.fun)
    return float(np.min(ball_points(kind, p0, theta, density) @ V))


def _policy_pairs(game: MarkovGame, policy: Union[JointPolicy, np.ndarray]):
    if not isinstance(policy, JointPolicy):
        policy = JointPolicy.full([np.asarray(policy, dtype=float)])
    return joint_probabilities(game, policy)


def _product_indices(sizes: List[int], max_kernels: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Index tuples (chunk, pairs) into each pair's point list: all of them, or a random subsample."""
    total = int(np.prod(sizes, dtype=float)) if sizes else 1
    if total <= max_kernels:
        for start in range(0, total, SOLVE_CHUNK):
            codes = np.arange(start, min(start + SOLVE_CHUNK, total))
            yield np.stack(np.unravel_index(codes, sizes), axis=1) if sizes else np.zeros((len(codes), 0), int)
        return
    # extreme-point combinations always, when there are few enough of them
    extremes = [min(2, n) for n in sizes]
    if np.prod(extremes, dtype=float) <= max_kernels // 2:
        yield np.array(list(itertools.product(*[range(e) for e in extremes])), dtype=int)
    remaining = max_kernels
    while remaining > 0:
        n = min(SOLVE_CHUNK, remaining)
        yield np.stack([rng.integers(0, k, size=n) for k in sizes], axis=1)
        remaining -= n


def worst_case_gain_grid(
    game: MarkovGame,
    policy: Union[JointPolicy, np.ndarray],
    agent: int = 0,
    grid_density: int = 200,
    max_kernels: int = 10**6,
    seed: int = 0,
) -> float:
    """Minimum exact gain (normalized units) over discretized kernels of the uncertainty set.

    Only (state, joint action) pairs the policy plays matter; their balls are
    discretized independently and combined by rectangularity, exhaustively
    when the product fits under `max_kernels`, else by random subsampling.
    `policy` is a JointPolicy or, for a one-agent game, an (S, A) matrix.
    """
    if game.num_states > MAX_GRID_STATES or game.num_joint_actions > MAX_GRID_JOINT_ACTIONS:
        raise InstanceTooLarge(
            f"grid oracle needs <= {MAX_GRID_STATES} states and <= {MAX_GRID_JOINT_ACTIONS} joint actions"
        )
    joint = _policy_pairs(game, policy)
    reward = np.sum(joint * game.rewards[agent], axis=1)
    pairs = [tuple(p) for p in np.argwhere(joint > 0)]
    points = [ball_points(game.divergence, game.nominal[s, j], game.theta, grid_density) for s, j in pairs]
    sizes = [len(p) for p in points]
    rng = np.random.default_rng(seed)

    best = np.inf
    S = game.num_states
    for idx in _product_indices(sizes, max_kernels, rng):
        P = np.zeros((len(idx), S, S))
        for k, (s, j) in enumerate(pairs):
            P[:, s, :] += joint[s, j] * points[k][idx[:, k]]
        gains = stationary_batch(P) @ reward
        best = min(best, float(gains.min()))
    return best


def sampled_kernel_gains(
    game: MarkovGame,
    policy: Union[JointPolicy, np.ndarray],
    agent: int = 0,
    count: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """Exact gains (normalized units) under `count` random feasible kernels, any instance size."""
    joint = _policy_pairs(game, policy)
    reward = np.sum(joint * game.rewards[agent], axis=1)
    rng = np.random.default_rng(seed)
    S, J = game.num_states, game.num_joint_actions
    P = np.zeros((count, S, S))
    for s in range(S):
        for j in range(J):
            if joint[s, j] > 0:
                P[:, s, :] += joint[s, j] * sample_ball_points(game.divergence, game.nominal[s, j], game.theta, count, rng)
    return stationary_batch(P) @ reward


def deterministic_policies(num_states: int, num_actions: int) -> Iterator[np.ndarray]:
    """Every deterministic policy as a one-hot (S, A) matrix."""
    for actions in itertools.product(range(num_actions), repeat=num_states):
        yield np.eye(num_actions)[list(actions)]


def discounted_linear_value(P: np.ndarray, r: np.ndarray, gamma: float) -> np.ndarray:
    """(I - gamma P)^{-1} r."""
    return np.linalg.solve(np.eye(P.shape[0]) - gamma * np.asarray(P), np.asarray(r, dtype=float))


def hitting_times(P: np.ndarray, target: int) -> np.ndarray:
    """Expected steps to reach `target` under a fixed chain (zero at the target)."""
    S = P.shape[0]
    rest = [s for s in range(S) if s != target]
    Q = np.asarray(P)[np.ix_(rest, rest)]
    T = np.zeros(S)
    T[rest] = np.linalg.solve(np.eye(S - 1) - Q, np.ones(S - 1))
    return T


def min_hitting_diameter(nominal: np.ndarray) -> float:
    """max over (s, target) of min over deterministic joint-action choices of the hitting time.

    `nominal` is (S, J, S). A single choice per state minimizes all hitting
    times to a fixed target at once, so enumeration over choices is exact.
    """
    S, J, _ = nominal.shape
    worst = 0.0
    for target in range(S):
        best: Optional[np.ndarray] = None
        for choice in itertools.product(range(J), repeat=S):
            P = nominal[np.arange(S), list(choice)]
            try:
                T = hitting_times(P, target)
            except np.linalg.LinAlgError:
                continue
            if np.any(T < -1e-9):
                continue
            best = T if best is None else np.minimum(best, T)
        if best is None:
            return float("inf")
        worst = max(worst, float(best.max()))
    return worst
