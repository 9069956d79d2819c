"""
Stage-game Nash equilibrium oracle.

Three solver paths, each tied to the equilibrium-selection condition it
certifies:
- CommonPayoff: the lexicographically first maximizing joint action (global optimum)
- ZeroSum: the minimax saddle point from the matrix-game linear program
- Bimatrix: support enumeration, keeping the welfare-maximizing equilibrium
  (no selection guarantee; runs using it are labeled heuristic)
"""

import itertools
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from absl import logging
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.optimize import linprog

from errors import DimensionMismatch, NoEquilibriumFound, UnsupportedGameClass

CLASS_TOL = 1e-12
DEVIATION_TOL = 1e-9
TIE_TOL = 1e-12
PERTURBATION = 1e-9
MAX_ENUMERATION_ACTIONS = 8

Support = Tuple[Tuple[int, ...], Tuple[int, ...]]


class StageMode(str, Enum):
    AUTO = "auto"
    COMMON_PAYOFF = "common_payoff"
    ZERO_SUM = "zero_sum"
    BIMATRIX = "bimatrix"


class EquilibriumClass(str, Enum):
    GLOBAL_OPTIMAL = "global_optimal"
    SADDLE_POINT = "saddle_point"
    GENERAL_BIMATRIX = "general_bimatrix"


class StageGame(BaseModel):
    """payoffs[i] has shape (A_1, ..., A_N) for one fixed state."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    payoffs: Tuple[np.ndarray, ...]

    @field_validator("payoffs", mode="before")
    @classmethod
    def _check_payoffs(cls, value):
        arrays = tuple(np.asarray(p, dtype=float) for p in value)
        if not arrays:
            raise DimensionMismatch("a stage game needs at least one agent")
        shape = arrays[0].shape
        if len(shape) != len(arrays):
            raise DimensionMismatch(f"payoff tensors must have one axis per agent, got shape {shape}")
        for p in arrays:
            if p.shape != shape:
                raise DimensionMismatch("all payoff tensors must share the joint-action shape")
            if not np.all(np.isfinite(p)):
                raise DimensionMismatch("payoffs must be finite")
        return arrays

    @property
    def num_agents(self) -> int:
        return len(self.payoffs)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.payoffs[0].shape


class StageEquilibrium(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    strategies: Tuple[np.ndarray, ...]
    equilibrium_class: EquilibriumClass
    values: np.ndarray
    deviation_gap: float
    duality_gap: float = 0.0
    perturbation: float = 0.0
    support: Optional[Support] = None


def lexicographic_argmax(values: np.ndarray, tol: float = TIE_TOL) -> int:
    """First index whose value is within tol of the maximum."""
    values = np.asarray(values, dtype=float).ravel()
    best = values.max()
    return int(np.flatnonzero(values >= best - tol * max(1.0, abs(best)))[0])


def expected_payoffs(game: StageGame, strategies) -> np.ndarray:
    values = []
    for payoff in game.payoffs:
        v = payoff
        for s in reversed(strategies):
            v = v @ s
        values.append(float(v))
    return np.array(values)


def deviation_gap(game: StageGame, strategies) -> float:
    """max over agents of (best pure deviation payoff - equilibrium payoff)."""
    gap = 0.0
    for i, payoff in enumerate(game.payoffs):
        v = np.moveaxis(payoff, i, 0)
        others = [s for k, s in enumerate(strategies) if k != i]
        for s in reversed(others):
            v = v @ s
        gap = max(gap, float(v.max() - strategies[i] @ v))
    return gap


def _centered(p: np.ndarray) -> np.ndarray:
    return p - p.mean()


def detect_class(game: StageGame) -> StageMode:
    first = game.payoffs[0]
    if all(np.max(np.abs(p - first)) <= CLASS_TOL for p in game.payoffs[1:]):
        return StageMode.COMMON_PAYOFF
    if game.num_agents != 2:
        raise UnsupportedGameClass(f"general-sum stage games with {game.num_agents} agents are not supported")
    # reward normalization breaks exact antisymmetry, centering restores it
    if np.max(np.abs(_centered(game.payoffs[0]) + _centered(game.payoffs[1]))) <= CLASS_TOL:
        return StageMode.ZERO_SUM
    return StageMode.BIMATRIX


def solve_stage(game: StageGame, mode: StageMode = StageMode.AUTO, prefer: Optional[Support] = None) -> StageEquilibrium:
    """Solve one stage game.

    `prefer` is a (row support, column support) pair for the bimatrix path:
    when that pair still carries an equilibrium it is returned instead of the
    welfare-maximizing one, so repeated solves of slowly changing games keep
    following the same equilibrium.
    """
    mode = StageMode(mode)
    if mode == StageMode.AUTO:
        mode = detect_class(game)
    if mode == StageMode.COMMON_PAYOFF:
        return _solve_common_payoff(game)
    if game.num_agents != 2:
        raise UnsupportedGameClass(f"{mode.value} stage games need exactly 2 agents, got {game.num_agents}")
    if mode == StageMode.ZERO_SUM:
        return _solve_zero_sum(game)
    return _solve_bimatrix(game, prefer)


def _solve_common_payoff(game: StageGame) -> StageEquilibrium:
    payoff = game.payoffs[0]
    flat = lexicographic_argmax(payoff)
    joint = np.unravel_index(flat, game.shape)
    strategies = tuple(np.eye(n)[a] for n, a in zip(game.shape, joint))
    return StageEquilibrium(
        strategies=strategies,
        equilibrium_class=EquilibriumClass.GLOBAL_OPTIMAL,
        values=np.array([float(p[joint]) for p in game.payoffs]),
        deviation_gap=deviation_gap(game, strategies),
    )


def _maximin(A: np.ndarray) -> Tuple[np.ndarray, float]:
    """Row player's maximin strategy: max v s.t. A^T x >= v, sum x = 1, x >= 0."""
    m, n = A.shape
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-A.T, np.ones((n, 1))])
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=np.zeros(n),
        A_eq=A_eq,
        b_eq=[1.0],
        bounds=bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise NoEquilibriumFound(f"matrix-game linear program failed: {res.message}")
    x = np.clip(res.x[:m], 0.0, None)
    return x / x.sum(), float(res.x[-1])


def _solve_zero_sum(game: StageGame) -> StageEquilibrium:
    A = 0.5 * (_centered(game.payoffs[0]) - _centered(game.payoffs[1]))
    x, _ = _maximin(A)
    y, _ = _maximin(-A.T)
    # certified values from the strategies themselves
    lower = float((x @ A).min())
    upper = float((A @ y).max())
    strategies = (x, y)
    return StageEquilibrium(
        strategies=strategies,
        equilibrium_class=EquilibriumClass.SADDLE_POINT,
        values=expected_payoffs(game, strategies),
        deviation_gap=deviation_gap(game, strategies),
        duality_gap=upper - lower,
    )


def _indifference(M: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mixes over column supports that make the row supports indifferent under M.

    For every candidate k solves  M[rows_k, cols_k] y = v 1,  sum y = 1  and
    returns the full-length mixes (K, n) with a validity mask (K,).
    """
    K, k = rows.shape
    system = np.zeros((K, k + 1, k + 1))
    system[:, :k, :k] = M[rows[:, :, None], cols[:, None, :]]
    system[:, :k, k] = -1.0
    system[:, k, :k] = 1.0
    rhs = np.zeros((K, k + 1))
    rhs[:, k] = 1.0
    try:
        solution = np.linalg.solve(system, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        solution = np.full((K, k + 1), np.nan)
        for c in range(K):
            try:
                solution[c] = np.linalg.solve(system[c], rhs[c])
            except np.linalg.LinAlgError:
                continue
    probs = solution[:, :k]
    valid = np.all(np.isfinite(probs), axis=1) & np.all(probs >= -CLASS_TOL, axis=1)
    probs = np.where(valid[:, None], np.clip(probs, 0.0, None), 0.0)
    mixes = np.zeros((K, M.shape[1]))
    mixes[np.arange(K)[:, None], cols] = probs
    total = mixes.sum(axis=1, keepdims=True)
    valid &= total[:, 0] > 0
    return np.divide(mixes, total, out=np.zeros_like(mixes), where=total > 0), valid


def _support_enumeration(A: np.ndarray, B: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray, Support]]:
    """All equilibria with equal-size supports, ordered by support size then lexicographically."""
    m, n = A.shape
    found = []
    for k in range(1, min(m, n) + 1):
        row_sets = np.array(list(itertools.combinations(range(m), k)), dtype=int)
        col_sets = np.array(list(itertools.combinations(range(n), k)), dtype=int)
        ri, ci = np.meshgrid(np.arange(len(row_sets)), np.arange(len(col_sets)), indexing="ij")
        rows, cols = row_sets[ri.ravel()], col_sets[ci.ravel()]

        y, ok_y = _indifference(A, rows, cols)
        x, ok_x = _indifference(B.T, cols, rows)
        row_payoffs = y @ A.T
        col_payoffs = x @ B
        row_regret = row_payoffs.max(axis=1) - np.sum(x * row_payoffs, axis=1)
        col_regret = col_payoffs.max(axis=1) - np.sum(col_payoffs * y, axis=1)
        ok = ok_x & ok_y & (row_regret <= DEVIATION_TOL) & (col_regret <= DEVIATION_TOL)
        found.extend((x[c], y[c], (tuple(rows[c].tolist()), tuple(cols[c].tolist()))) for c in np.flatnonzero(ok))
    return found


def _solve_bimatrix(game: StageGame, prefer: Optional[Support] = None) -> StageEquilibrium:
    A, B = game.payoffs
    if max(A.shape) > MAX_ENUMERATION_ACTIONS:
        raise UnsupportedGameClass(f"support enumeration is limited to {MAX_ENUMERATION_ACTIONS} actions per agent")
    perturbation = 0.0
    found = _support_enumeration(A, B)
    if not found:
        # degenerate game: tiny lexicographic offsets per (agent, action)
        perturbation = PERTURBATION
        m, n = A.shape
        A_pert = A + perturbation * (np.arange(m)[:, None] + 1) / (m + 1)
        B_pert = B + 2 * perturbation * (np.arange(n)[None, :] + 1) / (n + 1)
        found = _support_enumeration(A_pert, B_pert)
        logging.warning("Degenerate bimatrix stage game, re-solved with perturbation %.1e", perturbation)
    if not found:
        raise NoEquilibriumFound("support enumeration found no equilibrium")

    # a support pair that is still an equilibrium wins over the welfare rule
    kept = [eq for eq in found if eq[2] == prefer] if prefer is not None else []
    if kept:
        x, y, support = kept[0]
    else:
        x, y, support = found[0]
        best_welfare = float(x @ (A + B) @ y)
        for cx, cy, csupport in found[1:]:
            welfare = float(cx @ (A + B) @ cy)
            # enumeration order is lexicographic by support, keep the first on ties
            if welfare > best_welfare + TIE_TOL * max(1.0, abs(best_welfare)):
                x, y, support, best_welfare = cx, cy, csupport, welfare
    strategies = (x, y)
    return StageEquilibrium(
        strategies=strategies,
        equilibrium_class=EquilibriumClass.GENERAL_BIMATRIX,
        values=expected_payoffs(game, strategies),
        deviation_gap=deviation_gap(game, strategies),
        perturbation=perturbation,
        support=support,
    )
