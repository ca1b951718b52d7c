import sys
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import click
import numpy as np
import pandas as pd

from config import Config
from errors import InvalidInputError, NonConvergenceError, QuadratureError, RewardCollapseError
from models_btl import BTLInstance
from models_laws import BetaParams, LawKind
from models_prompts import PromptAwarePolicy
from models_utility import parse_utility
from utils_asymptotics import endpoint_mass_fraction, ks_distance, lemma6_flatness, limit_distribution
from utils_btl import BTLSolver, order_preserved, strong_concavity
from utils_measure_opt import MeasureOptimizer
from utils_output import ArtifactWriter, OutputFormat, dumps, read_rewards, read_thetas
from utils_promptlab import PromptLab, generate_prompts
from utils_solver import RewardSolver
from utils_verify import run_verify

COMMANDS = ("solve", "limit", "fit", "flatness", "measure", "btl", "collapse-demo", "verify")

# (payload, optional CSV frame, success)
HandlerResult = Tuple[Dict[str, Any], Optional[pd.DataFrame], bool]


@dataclass
class RunConfig:
    command: str
    options: Dict[str, Any] = field(default_factory=dict)
    output: Optional[str] = None
    out_path: Optional[str] = None
    seed: int = 0
    config_path: str = "config.json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidInputError(f"Unknown command '{self.command}'")
        if self.output is None:
            return
        try:
            OutputFormat(self.output)
        except ValueError:
            raise InvalidInputError(f"Unknown output format '{self.output}'")


def setup_logging(config: Config):
    """Configure application logging"""
    settings = config.get_logging_settings()
    logging.basicConfig(
        filename=settings.get("file", "reward_collapse.log"),
        level=getattr(logging, str(settings.get("level", "INFO")).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def handle_solve(cfg: RunConfig, config: Config) -> HandlerResult:
    opts = cfg.options
    utility = parse_utility(opts["utility"])
    solver_cfg = config.solver_config(grad_tol=opts.get("tol"), max_iters=opts.get("max_iters"),
                                      seed=cfg.seed)
    result = RewardSolver(solver_cfg).solve_finite_n(utility, opts["n"])
    payload = {"command": "solve", "utility": utility.to_string(), "n": opts["n"]}
    payload.update(result.to_dict())
    return payload, result.to_frame(), result.converged


def handle_limit(cfg: RunConfig, config: Config) -> HandlerResult:
    utility = parse_utility(cfg.options["utility"])
    payload = {"command": "limit", "utility": utility.to_string()}
    payload.update(limit_distribution(utility).to_dict())
    return payload, None, True


def handle_fit(cfg: RunConfig, config: Config) -> HandlerResult:
    opts = cfg.options
    utility = parse_utility(opts["utility"])
    rewards = read_rewards(opts["rewards"])
    law = limit_distribution(utility)
    payload = {"command": "fit", "utility": utility.to_string(), "n": int(rewards.size),
               "law": law.to_dict()}
    if law.kind is LawKind.BETA:
        payload["ks"] = ks_distance(rewards, law)
    else:
        low, high = endpoint_mass_fraction(rewards, opts.get("tol") or 1e-4)
        payload.update({"mass_at_0": low, "mass_at_1": high,
                        "bound_met": min(low, high) >= law.mass_lower_bound})
    return payload, None, True


def handle_flatness(cfg: RunConfig, config: Config) -> HandlerResult:
    opts = cfg.options
    settings = config.get_flatness_settings()
    c_grid = opts.get("c_grid") or settings.get("c_grid_size", 101)
    quad_points = opts.get("quad_points") or settings.get("quad_points", 2000)
    gamma = opts["gamma"]
    payload = {
        "command": "flatness",
        "gamma": gamma,
        "c_grid_size": c_grid,
        "quad_points": quad_points,
        "max_deviation": lemma6_flatness(gamma, c_grid, quad_points),
    }
    if opts.get("control"):
        payload["control_max_deviation"] = lemma6_flatness(
            gamma, c_grid, quad_points, law=BetaParams(1.0, 1.0))
    return payload, None, True


def handle_measure(cfg: RunConfig, config: Config) -> HandlerResult:
    opts = cfg.options
    utility = parse_utility(opts["utility"])
    measure_cfg = config.measure_config(step_rule=opts.get("step_rule"),
                                        max_iters=opts.get("max_iters"))
    measure = MeasureOptimizer(measure_cfg).optimize_measure(utility, opts["grid"])
    payload = {"command": "measure", "utility": utility.to_string()}
    payload.update(measure.summary())
    return payload, measure.to_frame(), measure.converged


def load_instance(source: str) -> BTLInstance:
    if source.startswith("preset:"):
        return BTLInstance.preset(source.split(":", 1)[1])
    return BTLInstance(read_thetas(source), name=source)


def handle_btl(cfg: RunConfig, config: Config) -> HandlerResult:
    opts = cfg.options
    utility = parse_utility(opts["utility"])
    instance = load_instance(opts["thetas"])
    solver = BTLSolver(config.solver_config(grad_tol=opts.get("tol"),
                                            max_iters=opts.get("max_iters"), seed=cfg.seed))
    result = solver.solve_btl(utility, instance)
    order = order_preserved(result, instance)
    ranked = np.sort(result.rewards)
    payload = {
        "command": "btl",
        "utility": utility.to_string(),
        "instance": instance.name,
        "thetas": instance.thetas,
        "order_ok": order.order_ok,
        "order": order.to_dict(),
        "min_gap": float(np.min(np.diff(ranked))),
        "strong_concavity": strong_concavity(utility).to_dict(),
        "bound_report": solver.check_thm5_bound(result, instance, utility).to_dict(),
    }
    payload.update(result.to_dict())
    frame = pd.DataFrame({"item": np.arange(1, instance.n + 1), "theta": instance.thetas,
                          "reward": result.rewards})
    return payload, frame, result.converged


def handle_collapse_demo(cfg: RunConfig, config: Config) -> HandlerResult:
    opts = cfg.options
    settings = config.get_promptlab_settings()
    prompts = generate_prompts(opts.get("prompts") or settings.get("prompts", 16), seed=cfg.seed,
                               n_responses=opts.get("n") or settings.get("n", 8))
    fixed = parse_utility(opts.get("fixed") or settings.get("fixed", "logsigmoid:sigma=1"))
    policy = PromptAwarePolicy(
        parse_utility(opts.get("open") or settings.get("open", "negpow:gamma=1,eps=0.1,ext=appendixA")),
        parse_utility(opts.get("concrete") or settings.get("concrete", "linear")),
    )
    lab = PromptLab(config.solver_config(seed=cfg.seed), config.get_thread_count())
    report = lab.collapse_experiment(prompts, fixed, policy)
    payload = {"command": "collapse-demo", "seed": cfg.seed}
    payload.update(report.to_dict())
    return payload, report.to_frame(), report.all_converged


def handle_verify(cfg: RunConfig, config: Config) -> HandlerResult:
    report = run_verify(config.solver_config(), config.measure_config(), config.get_thread_count())
    payload = {"command": "verify"}
    payload.update(report.to_dict())
    return payload, None, report.passed


HANDLERS: Dict[str, Callable[[RunConfig, Config], HandlerResult]] = {
    "solve": handle_solve,
    "limit": handle_limit,
    "fit": handle_fit,
    "flatness": handle_flatness,
    "measure": handle_measure,
    "btl": handle_btl,
    "collapse-demo": handle_collapse_demo,
    "verify": handle_verify,
}


def report_error(error: RewardCollapseError):
    click.echo(dumps(error.to_dict()), err=True)


def run(cfg: RunConfig) -> int:
    """Execute one command; 0 success, 1 non-convergence or failed checks, 2 invalid input"""
    try:
        config = Config(cfg.config_path)
        payload, frame, ok = HANDLERS[cfg.command](cfg, config)
        output = cfg.output or config.output_format()
        ArtifactWriter(config.resolve_output_path(cfg.out_path), output).write(payload, frame)
        click.echo(dumps(payload))
        if not ok:
            logging.warning(f"Command {cfg.command} finished without success")
        return 0 if ok else 1
    except (NonConvergenceError, QuadratureError) as e:
        logging.error(f"Command {cfg.command} failed: {str(e)}")
        report_error(e)
        return 1
    except RewardCollapseError as e:
        logging.error(f"Invalid input for {cfg.command}: {str(e)}")
        report_error(e)
        return 2
    except Exception as e:
        logging.critical(f"Command {cfg.command} crashed: {str(e)}")
        click.echo(dumps({"code": "internal", "message": str(e)}), err=True)
        return 1


def output_options(command):
    command = click.option("--out", "out_path", default=None,
                           help="Artifact base path; .json / .csv are appended")(command)
    command = click.option("--output", type=click.Choice([f.value for f in OutputFormat]),
                           default=None, help="Artifact format; defaults to output.format in the config")(command)
    return command


def execute(ctx: click.Context, command: str, output: Optional[str], out_path: Optional[str],
            seed: int = 0, **options):
    try:
        cfg = RunConfig(command, options, output, out_path, seed, ctx.obj["config_path"])
    except InvalidInputError as e:
        report_error(e)
        ctx.exit(2)
    ctx.exit(run(cfg))


@click.group()
@click.option("--config", "config_path", default="config.json", show_default=True,
              help="Configuration file")
@click.pass_context
def cli(ctx: click.Context, config_path: str):
    """Reward collapse toolkit"""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    setup_logging(Config(config_path))


@cli.command()
@click.option("--utility", required=True, help="e.g. power:gamma=0.5")
@click.option("--n", "n", type=int, required=True)
@click.option("--tol", type=float, default=None)
@click.option("--max-iters", type=int, default=None)
@click.option("--seed", type=int, default=0)
@output_options
@click.pass_context
def solve(ctx, utility, n, tol, max_iters, seed, output, out_path):
    """Optimal rewards of the n-response interpolation program"""
    execute(ctx, "solve", output, out_path, seed, utility=utility, n=n, tol=tol,
            max_iters=max_iters)


@cli.command()
@click.option("--utility", required=True)
@output_options
@click.pass_context
def limit(ctx, utility, output, out_path):
    """Limiting reward law of a utility"""
    execute(ctx, "limit", output, out_path, utility=utility)


@cli.command()
@click.option("--rewards", required=True, type=click.Path(), help="CSV with a reward column or JSON")
@click.option("--utility", required=True)
@click.option("--tol", type=float, default=None, help="Endpoint tolerance for mass-bound laws")
@output_options
@click.pass_context
def fit(ctx, rewards, utility, tol, output, out_path):
    """Distance between saved rewards and the predicted limit"""
    execute(ctx, "fit", output, out_path, rewards=rewards, utility=utility, tol=tol)


@cli.command()
@click.option("--gamma", type=float, required=True)
@click.option("--c-grid", type=int, default=None)
@click.option("--quad-points", type=int, default=None)
@click.option("--control", is_flag=True, help="Also evaluate under the uniform law")
@output_options
@click.pass_context
def flatness(ctx, gamma, c_grid, quad_points, control, output, out_path):
    """Deviation of E|X - c|^gamma from constancy under the Power limit law"""
    execute(ctx, "flatness", output, out_path, gamma=gamma, c_grid=c_grid,
            quad_points=quad_points, control=control)


@cli.command()
@click.option("--utility", required=True)
@click.option("--grid", type=int, required=True, help="Odd number of grid points")
@click.option("--step-rule", type=click.Choice(["classic", "exact", "pairwise"]), default=None)
@click.option("--max-iters", type=int, default=None)
@output_options
@click.pass_context
def measure(ctx, utility, grid, step_rule, max_iters, output, out_path):
    """Optimal grid measure of E U(|X - X'|)"""
    execute(ctx, "measure", output, out_path, utility=utility, grid=grid,
            step_rule=step_rule, max_iters=max_iters)


@cli.command()
@click.option("--utility", required=True)
@click.option("--thetas", required=True, help="CSV/JSON file, preset:left or preset:right")
@click.option("--tol", type=float, default=None)
@click.option("--max-iters", type=int, default=None)
@click.option("--seed", type=int, default=0)
@output_options
@click.pass_context
def btl(ctx, utility, thetas, tol, max_iters, seed, output, out_path):
    """Rewards under Bradley-Terry-Luce preference weights"""
    execute(ctx, "btl", output, out_path, seed, utility=utility, thetas=thetas, tol=tol,
            max_iters=max_iters)


@cli.command("collapse-demo")
@click.option("--prompts", type=int, default=None)
@click.option("--n", "n", type=int, default=None)
@click.option("--fixed", default=None)
@click.option("--open", "open_", default=None)
@click.option("--concrete", default=None)
@click.option("--seed", type=int, default=0)
@output_options
@click.pass_context
def collapse_demo(ctx, prompts, n, fixed, open_, concrete, seed, output, out_path):
    """Fixed vs prompt-aware utilities over a batch of prompts"""
    execute(ctx, "collapse-demo", output, out_path, seed, prompts=prompts, n=n, fixed=fixed,
            open=open_, concrete=concrete)


@cli.command()
@output_options
@click.pass_context
def verify(ctx, output, out_path):
    """Run every invariant check; exit 0 only if all pass"""
    execute(ctx, "verify", output, out_path)


def main():
    """Main application entry point"""
    try:
        code = cli.main(args=sys.argv[1:], prog_name="reward-collapse", standalone_mode=False)
    except click.UsageError as e:
        report_error(InvalidInputError(e.format_message()))
        code = 2
    except click.Abort:
        code = 1
    sys.exit(code or 0)


if __name__ == "__main__":
    main()
