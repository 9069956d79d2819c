#!/usr/bin/env python3
"""
Command-line entry point for the robust Markov game solvers.

Subcommands: solve-avg, solve-discounted, verify, diameter, figure1, figure2,
gen-env. Every run writes a manifest (config echo, package versions, seed) so
`--from-manifest` can reproduce it.

Exit codes: 0 success, 1 usage or validation error, 2 solver failure (a
diagnostics.json is written), 3 verify found epsilon above --threshold.
"""

import argparse
import json
import platform
import sys
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from absl import logging
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

import config
from errors import USAGE_EXIT_CODE, RobustGameError
from experiments import (
    FIGURE1_GAMMAS,
    FIGURE2_ROUNDS,
    StructuredEnvSpec,
    generate_structured_env,
    plot_sweep,
    run_figure1,
    run_figure2,
    run_seeds,
    write_table,
)
from game_model import check_irreducibility, load_game, load_policy, save_game, save_policy
from nash_iteration import (
    discount_for_epsilon,
    robust_diameter_upper,
    robust_nash_iteration_avg,
    robust_nash_iteration_discounted,
    verify_ne,
    verify_ne_discounted,
)

VERIFY_FAILED_EXIT_CODE = 3
DEFAULT_THRESHOLD = 1e-4
MANIFEST_NAME = "manifest.json"
PACKAGES = ("numpy", "scipy", "pandas", "matplotlib", "pydantic", "absl-py", "python-dotenv")

Subcommand = Literal["solve-avg", "solve-discounted", "verify", "diameter", "figure1", "figure2", "gen-env"]


class UsageError(Exception):
    pass


class RunConfig(BaseModel):
    """Everything a run depends on; echoed into the manifest."""

    command: Subcommand
    input: Optional[str] = None
    policy: Optional[str] = None
    output_dir: str = config.OUTPUT_DIR
    tol: Optional[float] = None
    max_rounds: int = Field(default=config.DEFAULT_MAX_ROUNDS, ge=1)
    gamma: Optional[float] = None
    epsilon: Optional[float] = None
    threshold: float = Field(default=DEFAULT_THRESHOLD, ge=0.0)
    seed: int = 7
    states: int = Field(default=10, ge=2)
    actions: int = Field(default=5, ge=1)
    theta: float = Field(default=0.01, ge=0.0)
    grid: Optional[List[float]] = None
    seeds: Optional[List[int]] = None
    rounds: int = Field(default=FIGURE2_ROUNDS, ge=1)
    full_irreducibility_check: bool = False

    @field_validator("tol")
    @classmethod
    def _positive_tol(cls, value):
        if value is not None and value <= 0:
            raise ValueError(f"tol must be positive, got {value}")
        return value

    @field_validator("gamma")
    @classmethod
    def _gamma_range(cls, value):
        if value is not None and not 0.0 <= value < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {value}")
        return value

    @field_validator("grid")
    @classmethod
    def _grid_range(cls, value):
        if value is not None and any(not 0.0 <= g < 1.0 for g in value):
            raise ValueError(f"every grid discount factor must lie in [0, 1), got {value}")
        return value

    @model_validator(mode="after")
    def _required_inputs(self):
        if self.command in ("solve-avg", "solve-discounted", "verify", "diameter") and not self.input:
            raise ValueError(f"{self.command} needs --input")
        if self.command == "verify" and not self.policy:
            raise ValueError("verify needs --policy")
        if self.command == "solve-discounted" and self.gamma is None and self.epsilon is None:
            raise ValueError("solve-discounted needs --gamma or --epsilon")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        return self

    def env_spec(self) -> StructuredEnvSpec:
        return StructuredEnvSpec.desk(seed=self.seed, states=self.states, actions_per_agent=self.actions, theta=self.theta)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", help="game description (JSON)")
    common.add_argument("--policy", help="policy file (JSON)")
    common.add_argument("--output-dir", default=config.OUTPUT_DIR)
    common.add_argument("--tol", type=float)
    common.add_argument("--max-rounds", type=int, default=config.DEFAULT_MAX_ROUNDS)
    common.add_argument("--gamma", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="verify passes iff epsilon <= threshold")
    common.add_argument("--seed", type=int, default=7)
    common.add_argument("--states", type=int, default=10)
    common.add_argument("--actions", type=int, default=5, help="actions per agent")
    common.add_argument("--theta", type=float, default=0.01)
    common.add_argument("--grid", type=_float_list, help="comma-separated discount factors")
    common.add_argument("--seeds", type=_int_list, help="comma-separated seeds; tables are concatenated")
    common.add_argument("--rounds", type=int, default=FIGURE2_ROUNDS, help="training rounds for figure2")
    common.add_argument("--full-irreducibility-check", action="store_true")
    common.add_argument("--log-level", default=None)

    parser = _Parser(prog="robustmg", description="Average-reward distributionally robust Markov games")
    parser.add_argument("--from-manifest", help="re-run the configuration stored in a manifest")
    sub = parser.add_subparsers(dest="command")
    for name, text in [
        ("solve-avg", "robust Nash-iteration, average reward"),
        ("solve-discounted", "robust Nash-iteration, discounted (--gamma or --epsilon)"),
        ("verify", "deviation gaps of a policy file"),
        ("diameter", "robust diameter upper bound"),
        ("figure1", "average vs discounted sweep on the structured environment"),
        ("figure2", "robust vs non-robust learner on the structured environment"),
        ("gen-env", "write the structured environment as a game file"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def parse_config(argv: Optional[List[str]]) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.from_manifest:
        with open(args.from_manifest) as f:
            return RunConfig(**json.load(f)["config"])
    if not args.command:
        raise UsageError("a subcommand is required")
    if args.log_level:
        config.configure_logging(args.log_level)
    values = {k: v for k, v in vars(args).items() if k not in ("from_manifest", "log_level")}
    return RunConfig(**values)


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version(), "robustmg": config.VERSION}
    for name in PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions


def write_json(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
    return path


def write_manifest(cfg: RunConfig, out: Path) -> Path:
    return write_json(
        {"config": cfg.model_dump(mode="json"), "versions": package_versions(), "seed": cfg.seed},
        out / MANIFEST_NAME,
    )


def _check_assumption(game, cfg: RunConfig) -> None:
    report = check_irreducibility(game, full=cfg.full_irreducibility_check, seed=cfg.seed)
    kind = "exhaustive" if report.exhaustive else "spot-check"
    if report.irreducible:
        print(f"✅ Irreducibility ({kind}, {report.checked} policies): ok")
    else:
        print(f"⚠️  Irreducibility ({kind}) failed for joint actions {report.witness}; results may not converge")


def _solve_summary(result, extra: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "gains": result.raw_gains.tolist(),
        "gains_normalized": result.gains.tolist(),
        "rounds": result.rounds,
        "span": result.span,
        "converged": result.converged,
        "oracle_histogram": result.oracle_histogram,
        "heuristic_oracle": result.heuristic_oracle,
        **extra,
    }


def _print_summary(title: str, summary: Dict[str, Any]) -> None:
    print(f"\n📊 {title}")
    print("=" * 50)
    for key, value in summary.items():
        print(f"   {key}: {value}")


def cmd_solve_avg(cfg: RunConfig, out: Path) -> int:
    game = load_game(cfg.input)
    _check_assumption(game, cfg)
    result = robust_nash_iteration_avg(game, tol=cfg.tol or config.DEFAULT_NASH_TOL, max_rounds=cfg.max_rounds)
    check = verify_ne(game, result.policy)
    if result.heuristic_oracle:
        print("⚠️  General-sum stage games solved by the heuristic oracle (no convergence guarantee)")
    save_policy(result.policy, out / "policy.json")
    summary = _solve_summary(result, {"epsilon": check.epsilon, "deviation_gaps": check.gaps.tolist()})
    write_json(summary, out / "result.json")
    _print_summary("Average-reward robust Nash-iteration", summary)
    return 0


def cmd_solve_discounted(cfg: RunConfig, out: Path) -> int:
    game = load_game(cfg.input)
    _check_assumption(game, cfg)
    extra: Dict[str, Any] = {}
    gamma = cfg.gamma
    if gamma is None:
        diameter = robust_diameter_upper(game)
        gamma = discount_for_epsilon(diameter, cfg.epsilon)
        extra.update(diameter=diameter, epsilon_target=cfg.epsilon)
    result = robust_nash_iteration_discounted(game, gamma, tol=cfg.tol or config.DEFAULT_NASH_TOL, max_rounds=cfg.max_rounds)
    check = verify_ne_discounted(game, result.policy, gamma)
    save_policy(result.policy, out / "policy.json")
    summary = _solve_summary(result, {"gamma": gamma, "epsilon_discounted": check.epsilon, **extra})
    write_json(summary, out / "result.json")
    _print_summary(f"Discounted robust Nash-iteration (gamma={gamma:.6g})", summary)
    return 0


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    game = load_game(cfg.input)
    policy = load_policy(cfg.policy, game)
    check = verify_ne(game, policy, tol=cfg.tol or config.DEFAULT_TOL)
    raw_gaps = [game.reward_map.scale * g for g in check.gaps]
    passed = check.epsilon <= cfg.threshold
    summary = {
        "epsilon": check.epsilon,
        "deviation_gaps": check.gaps.tolist(),
        "deviation_gaps_raw": raw_gaps,
        "threshold": cfg.threshold,
        "passed": passed,
    }
    write_json(summary, out / "verify.json")
    _print_summary("NE verification", summary)
    print(f"{'✅' if passed else '❌'} epsilon = {check.epsilon:.3e} (threshold {cfg.threshold:g})")
    return 0 if passed else VERIFY_FAILED_EXIT_CODE


def cmd_diameter(cfg: RunConfig, out: Path) -> int:
    game = load_game(cfg.input)
    diameter = robust_diameter_upper(game, tol=cfg.tol or config.DEFAULT_TOL)
    summary: Dict[str, Any] = {"diameter_upper": diameter}
    if cfg.epsilon is not None:
        summary["gamma"] = discount_for_epsilon(diameter, cfg.epsilon)
    write_json(summary, out / "diameter.json")
    _print_summary("Robust diameter", summary)
    return 0


def cmd_figure1(cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid or list(FIGURE1_GAMMAS)
    kwargs = {"gamma_grid": grid, "tol": cfg.tol or config.EXPERIMENT_TOL, "max_rounds": cfg.max_rounds}
    if cfg.seeds:
        table = run_seeds(run_figure1, cfg.env_spec(), cfg.seeds, **kwargs)
    else:
        table = run_figure1(cfg.env_spec(), **kwargs).to_frame()
    csv_path = write_table(table, out / "figure1.csv")
    svg_path = plot_sweep(table, out / "figure1.svg", title="Figure 1: discounted vs average-reward policy", xlabel="discount factor")
    failed = int((table["status"] != "ok").sum())
    _print_summary("Figure 1", {"rows": len(table), "non_ok_rows": failed, "csv": str(csv_path), "svg": str(svg_path)})
    return 0


def cmd_figure2(cfg: RunConfig, out: Path) -> int:
    kwargs = {"rounds": cfg.rounds, "tol": cfg.tol or config.EXPERIMENT_TOL}
    if cfg.seeds:
        table = run_seeds(run_figure2, cfg.env_spec(), cfg.seeds, **kwargs)
    else:
        table = run_figure2(cfg.env_spec(), **kwargs).to_frame()
    csv_path = write_table(table, out / "figure2.csv")
    svg_path = plot_sweep(table, out / "figure2.svg", title="Figure 2: robust vs non-robust learner", xlabel="round")
    _print_summary("Figure 2", {"rows": len(table), "csv": str(csv_path), "svg": str(svg_path)})
    return 0


def cmd_gen_env(cfg: RunConfig, out: Path) -> int:
    game = generate_structured_env(cfg.env_spec())
    path = out / "game.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_game(game, path)
    _print_summary(
        "Structured environment",
        {"states": game.num_states, "joint_actions": game.num_joint_actions, "divergence": game.divergence.value, "path": str(path)},
    )
    return 0


COMMANDS = {
    "solve-avg": cmd_solve_avg,
    "solve-discounted": cmd_solve_discounted,
    "verify": cmd_verify,
    "diameter": cmd_diameter,
    "figure1": cmd_figure1,
    "figure2": cmd_figure2,
    "gen-env": cmd_gen_env,
}


def main(argv: Optional[List[str]] = None) -> int:
    config.configure_logging()
    try:
        cfg = parse_config(argv)
    except (UsageError, ValidationError, OSError, ValueError) as e:
        print(f"❌ Usage error: {e}", file=sys.stderr)
        return USAGE_EXIT_CODE

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg, out)
    print(f"🚀 robustmg {cfg.command} (seed {cfg.seed}) -> {out}")
    try:
        return COMMANDS[cfg.command](cfg, out)
    except RobustGameError as e:
        print(f"❌ {type(e).__name__}: {e}", file=sys.stderr)
        if e.exit_code != USAGE_EXIT_CODE:
            write_json({"error": type(e).__name__, "message": str(e), "diagnostics": e.diagnostics}, out / "diagnostics.json")
        return e.exit_code
    except (ValidationError, OSError, json.JSONDecodeError) as e:
        logging.warning("Invalid input: %s", e)
        print(f"❌ Invalid input: {e}", file=sys.stderr)
        return USAGE_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
