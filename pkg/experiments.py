"""
Structured random environment and the two experiment pipelines.

Figure 1 compares the policy of the average-reward Nash-iteration with the
policies of the discounted one over a grid of discount factors. Figure 2
compares a robust learner with a non-robust one (same code path, theta = 0
while learning) during training. Both evaluate every policy with one metric:
the worst-case average reward of an agent, reported in raw reward units.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd
from absl import logging
from pydantic import BaseModel, Field, model_validator

import config
from errors import MaxRoundsExceeded, RobustGameError
from game_model import GameDescription, JointPolicy, MarkovGame, build_game, induce_mdp
from nash_iteration import NashIterationResult, robust_nash_iteration_avg, robust_nash_iteration_discounted
from robust_dp import robust_policy_eval
from support_functions import Divergence

FIGURE1_GAMMAS = tuple(float(g) for g in np.round(np.arange(0.5, 0.96, 0.05), 2)) + (0.99,)
FIGURE2_ROUNDS = 200
COLUMNS = ["x", "value_avg_baseline", "value", "agent", "oracle_class", "converged", "status", "learner", "seed"]


class StructuredEnvSpec(BaseModel):
    """Prosperous/deprived cluster environment. Prosperous states are the first `prosperous_count`."""

    num_states: int = Field(default=20, ge=2)
    num_agents: int = Field(default=2, ge=1)
    actions_per_agent: int = Field(default=5, ge=1)
    prosperous_count: int = Field(default=5, ge=0)
    deprived_count: int = Field(default=15, ge=0)
    prosperous_mean: float = 2.0
    deprived_mean: float = -2.0
    reward_std: float = Field(default=1.0, ge=0.0)
    intra_cluster_factor: float = Field(default=5.0, gt=0.0)
    theta: float = Field(default=0.01, ge=0.0)
    divergence: Divergence = Divergence.KL
    seed: int = 7

    @model_validator(mode="after")
    def _partition(self):
        if self.prosperous_count + self.deprived_count != self.num_states:
            raise ValueError(
                f"prosperous ({self.prosperous_count}) + deprived ({self.deprived_count}) "
                f"must equal num_states ({self.num_states})"
            )
        return self

    @classmethod
    def desk(cls, seed: int = 7, states: int = 10, **overrides) -> "StructuredEnvSpec":
        """Reduced configuration keeping the one-in-four prosperous share."""
        prosperous = max(1, states // 4)
        return cls(num_states=states, prosperous_count=prosperous, deprived_count=states - prosperous, seed=seed, **overrides)


class SweepRow(BaseModel):
    x: float
    value_avg_baseline: float
    value: float
    agent: int
    oracle_class: str
    converged: bool
    status: str = "ok"
    learner: str = "robust"
    seed: int = 0


class SweepResult(BaseModel):
    name: str
    baseline: float
    rows: List[SweepRow]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=COLUMNS)


def generate_structured_env(spec: StructuredEnvSpec) -> MarkovGame:
    """Draw rewards then kernel weights from one seeded generator."""
    rng = np.random.default_rng(spec.seed)
    S, N = spec.num_states, spec.num_agents
    J = spec.actions_per_agent**N
    prosperous = np.arange(S) < spec.prosperous_count

    means = np.where(prosperous, spec.prosperous_mean, spec.deprived_mean)
    rewards = rng.normal(means[None, :, None], spec.reward_std, size=(N, S, J))

    weights = rng.uniform(0.0, 1.0, size=(S, J, S))
    same_cluster = prosperous[:, None] == prosperous[None, :]
    weights *= np.where(same_cluster, spec.intra_cluster_factor, 1.0)[:, None, :]
    nominal = weights / weights.sum(axis=2, keepdims=True)

    return build_game(
        GameDescription(
            agents=N,
            states=S,
            actions_per_agent=[spec.actions_per_agent] * N,
            rewards=rewards.tolist(),
            nominal=nominal.tolist(),
            theta=spec.theta,
            divergence=spec.divergence if spec.theta > 0 else Divergence.SINGLETON,
        )
    )


def evaluate_worst_case(game: MarkovGame, policy: JointPolicy, agent: int = 0, tol: float = config.DEFAULT_TOL) -> float:
    """Worst-case average reward of `agent` under `policy`, in raw units."""
    mdp = induce_mdp(game, agent, policy.without(agent))
    result = robust_policy_eval(mdp, policy.policy_of(agent), tol=tol)
    return game.reward_map.to_raw_gain(result.gain)


def oracle_label(result: NashIterationResult) -> str:
    classes = "+".join(sorted(result.oracle_histogram))
    return f"{classes} (heuristic oracle)" if result.heuristic_oracle else classes


def _run_solver(solve: Callable[[], NashIterationResult]) -> Tuple[Optional[NashIterationResult], str]:
    """Run a Nash-iteration, keeping the last iterate when it hits the round cap."""
    try:
        return solve(), "ok"
    except MaxRoundsExceeded as e:
        logging.warning("Nash-iteration hit the round cap: %s", e)
        return e.result, "max_rounds"
    except RobustGameError as e:
        logging.warning("Nash-iteration failed: %s", e)
        return None, f"failed: {e}"


def run_figure1(
    spec: StructuredEnvSpec,
    gamma_grid: Sequence[float] = FIGURE1_GAMMAS,
    tol: float = config.EXPERIMENT_TOL,
    max_rounds: int = config.DEFAULT_MAX_ROUNDS,
    agent: int = 0,
    threads: int = config.THREADS,
) -> SweepResult:
    """Worst-case average reward of discounted equilibria against the average-reward one."""
    game = generate_structured_env(spec)
    avg, status = _run_solver(lambda: robust_nash_iteration_avg(game, tol=tol, max_rounds=max_rounds))
    if avg is None:
        raise RobustGameError(f"average-reward Nash-iteration failed ({status})")
    if status != "ok":
        logging.warning("Baseline policy did not converge; using its last iterate")
    baseline = evaluate_worst_case(game, avg.policy, agent)
    print(f"📊 Figure 1 baseline (seed {spec.seed}): {baseline:.6f} after {avg.rounds} rounds")

    def sweep_point(gamma: float) -> SweepRow:
        result, point_status = _run_solver(
            lambda: robust_nash_iteration_discounted(game, gamma, tol=tol, max_rounds=max_rounds)
        )
        if result is None:
            return SweepRow(
                x=gamma, value_avg_baseline=baseline, value=float("nan"), agent=agent,
                oracle_class="", converged=False, status=point_status, seed=spec.seed,
            )
        return SweepRow(
            x=gamma,
            value_avg_baseline=baseline,
            value=evaluate_worst_case(game, result.policy, agent),
            agent=agent,
            oracle_class=oracle_label(result),
            converged=result.converged,
            status=point_status,
            seed=spec.seed,
        )

    workers = max(1, min(threads, len(gamma_grid)))
    if workers == 1:
        rows = [sweep_point(float(g)) for g in gamma_grid]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_point, [float(g) for g in gamma_grid]))
    return SweepResult(name="figure1", baseline=baseline, rows=rows)


def checkpoint_rounds(rounds: int) -> List[int]:
    """1, 2, 4, ... up to `rounds`, always ending at `rounds`."""
    points, r = [], 1
    while r < rounds:
        points.append(r)
        r *= 2
    return points + [rounds]


def _learning_trace(
    learn_game: MarkovGame, rounds: int, tol: float, checkpoints: List[int]
) -> Tuple[Dict[int, JointPolicy], NashIterationResult, str]:
    snapshots: Dict[int, JointPolicy] = {}
    wanted = set(checkpoints)

    def hook(rnd: int, policy: JointPolicy, span: float) -> None:
        if rnd in wanted:
            snapshots[rnd] = policy

    result, status = _run_solver(lambda: robust_nash_iteration_avg(learn_game, tol=tol, max_rounds=rounds, post_hook=hook))
    if result is None:
        raise RobustGameError(f"Nash-iteration failed during training ({status})")
    # a converged learner keeps its final policy for the remaining checkpoints
    for rnd in checkpoints:
        snapshots.setdefault(rnd, result.policy)
    return snapshots, result, status


def run_figure2(
    spec: StructuredEnvSpec,
    rounds: int = FIGURE2_ROUNDS,
    tol: float = config.EXPERIMENT_TOL,
    agent: int = 0,
) -> SweepResult:
    """Robust vs non-robust learner, both evaluated against the worst case of the robust game."""
    game = generate_structured_env(spec)
    checkpoints = checkpoint_rounds(rounds)
    learners = {"robust": game, "non_robust": game.with_theta(0.0)}

    traces, runs = {}, {}
    for name, learn_game in learners.items():
        snapshots, result, status = _learning_trace(learn_game, rounds, tol, checkpoints)
        traces[name] = [(rnd, evaluate_worst_case(game, snapshots[rnd], agent)) for rnd in checkpoints]
        runs[name] = (result, status)

    baseline = traces["robust"][-1][1]
    rows = []
    for name in learners:
        result, status = runs[name]
        for rnd, value in traces[name]:
            rows.append(
                SweepRow(
                    x=rnd,
                    value_avg_baseline=baseline,
                    value=value,
                    agent=agent,
                    oracle_class=oracle_label(result),
                    converged=result.converged and rnd >= result.rounds,
                    status=status,
                    learner=name,
                    seed=spec.seed,
                )
            )
    print(f"📊 Figure 2 (seed {spec.seed}): robust {traces['robust'][-1][1]:.6f}, non-robust {traces['non_robust'][-1][1]:.6f}")
    return SweepResult(name="figure2", baseline=baseline, rows=rows)


def run_seeds(pipeline: Callable[..., SweepResult], spec: StructuredEnvSpec, seeds: Sequence[int], **kwargs) -> pd.DataFrame:
    """Run a pipeline once per seed and concatenate the tables."""
    frames = [pipeline(spec.model_copy(update={"seed": int(seed)}), **kwargs).to_frame() for seed in seeds]
    return pd.concat(frames, ignore_index=True)


def write_table(table: Union[SweepResult, pd.DataFrame], path: Union[str, Path]) -> Path:
    frame = table.to_frame() if isinstance(table, SweepResult) else table
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.12g")
    return path


def plot_sweep(
    table: Union[SweepResult, pd.DataFrame], path: Union[str, Path], title: str = "", xlabel: str = "x"
) -> Path:
    """Line chart of worst-case average reward; one line per (learner, seed)."""
    frame = table.to_frame() if isinstance(table, SweepResult) else table
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    # fixed id salt and no timestamp keep reruns byte-identical
    with plt.rc_context({"svg.hashsalt": "robust-markov-games"}):
        fig, ax = _draw(frame, title, xlabel)
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _draw(frame: pd.DataFrame, title: str, xlabel: str):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (learner, seed), group in frame.groupby(["learner", "seed"], sort=True):
        ax.plot(group["x"], group["value"], marker="o", label=f"{learner} (seed {seed})")
        baseline = group["value_avg_baseline"].iloc[0]
        ax.axhline(baseline, linestyle="--", linewidth=1, color="gray")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("worst-case average reward")
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    return fig, ax
