"""
CLI commands for the lab pipeline.

Each command reads and writes files only, so pipelines compose as
gen-data -> train -> plan -> run -> stats -> report.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click

from app.analysis.attention import (aggregate_shares, attention_shares, excess_by_step, layer_early_late,
                                    shares_to_rows, trend)
from app.analysis.stats import discordant_counts, mcnemar_exact, multiseed, paired_bootstrap, paired_outcomes
from app.denoiser.checkpoint import load_checkpoint
from app.denoiser.gradcheck import grad_check
from app.denoiser.training import build_training_layouts, train, write_loss_curve
from app.errors import TooFewOutcomes, TooFewSeeds
from app.harness.runner import (Executor, baseline_for, expand_grid, run_condition, results_path,
                                write_results)
from app.harness.scoring import accuracy, content_decomposition
from app.models.config import ExperimentConfig
from app.models.plan import Ablation
from app.models.problem import Problem
from app.models.result import Condition, RemaskStrategy, RunResult
from app.planner.cache import PlanCache
from app.planner.self_plan import SELF_PLANNER_ID
from app.planner.service import ensure_plans
from app.sampler.trace import read_trace
from app.seqcore.layout import TEMPLATE_SOLVE, assemble_layout
from app.seqcore.vocab import default_vocab
from app.taskgen.corpus import build_splits, read_corpus, write_corpus
from app.utils import charts
from app.utils.config import load_config
from app.utils.display import (console, create_progress_spinner, display_attention,
                               display_attention_comparison, display_condition_results,
                               display_corpus_summary, display_failures, display_gradcheck,
                               display_loss_curve, display_plans, display_stats, display_written)
from app.utils.export import export_to_json, write_csv
from app.utils.helpers import code_version
from app.utils.report import load_runs, multiseed_rows, write_meta, write_report

logger = logging.getLogger(__name__)

GRADCHECK_TOLERANCE = 1e-4
STATS_SCHEMA = 1
ATTENTION_SCHEMA = 1
# (planner, ablation) pairs compared by default in the attention analysis
ATTENTION_CONDITIONS = (
    ("oracle-frontier", "none"),
    ("oracle-degraded", "none"),
    ("oracle-frontier", "wrong_strategy"),
    ("oracle-frontier", "random_tokens"),
)


@dataclass
class LabContext:
    """Shared state for one CLI invocation; the config loads on first use."""
    config_path: Optional[str] = None
    overrides: Tuple[str, ...] = ()
    _config: Optional[ExperimentConfig] = field(default=None, repr=False)

    @property
    def config(self) -> ExperimentConfig:
        if self._config is None:
            self._config = load_config(self.config_path, self.overrides)
        return self._config


def _output_dir(config: ExperimentConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _executor(config: ExperimentConfig) -> Executor:
    params, model_config, _ = load_checkpoint(config.checkpoint)
    return Executor(params=params, config=model_config, vocab=default_vocab())


def _test_problems(config: ExperimentConfig, limit: Optional[int] = None) -> List[Problem]:
    problems = read_corpus(config.data.test_path)
    return problems[:limit] if limit else problems


def _stamp(config: ExperimentConfig, schema: int) -> Dict[str, object]:
    return {"config_hash": config.config_hash, "code_version": code_version(), "schema": schema}


def _run_and_save(condition: Condition, problems: Sequence[Problem], executor: Executor,
                  plan_cache: Optional[PlanCache], config: ExperimentConfig, workers: int,
                  trace_dir: Optional[Path] = None, trace_attention: bool = False,
                  trace_every: int = 4) -> List[RunResult]:
    results = run_condition(condition, problems, executor, plan_cache, workers=workers,
                            trace_dir=trace_dir, trace_attention=trace_attention,
                            trace_every=trace_every, config_hash=config.config_hash)
    path = results_path(config.output_dir, condition)
    write_results(results, path)
    write_meta(path, condition, config.config_hash, code_version(), len(results))
    return results


def _summary_rows(conditions: Sequence[Condition],
                  results: Dict[str, List[RunResult]]) -> List[Dict[str, object]]:
    rows = []
    for condition in conditions:
        acc = accuracy(results[condition.id])
        base = results.get(baseline_for(condition).id)
        base_acc = accuracy(base) if base is not None else None
        rows.append({
            "condition": condition.id,
            "n": len(results[condition.id]),
            "correct": sum(1 for r in results[condition.id] if r.correct),
            "accuracy": acc,
            "lift": (acc - base_acc) * 100 if acc is not None and base_acc is not None
            and not condition.is_bare else None,
        })
    return rows


@click.command(name="gen-data")
@click.pass_obj
def gen_data(lab: LabContext):
    """Generate the train and held-out test corpora."""
    config = lab.config
    with create_progress_spinner() as progress:
        progress.add_task(description="Generating problems...", total=None)
        train_set, test_set = build_splits(config.data, config.seed)
    write_corpus(train_set, config.data.train_path)
    write_corpus(test_set, config.data.test_path)

    counts: Dict[str, Dict[str, int]] = {"train": {}, "test": {}}
    for split, problems in (("train", train_set), ("test", test_set)):
        for problem in problems:
            counts[split][problem.family.value] = counts[split].get(problem.family.value, 0) + 1
    display_corpus_summary(counts)
    display_written([config.data.train_path, config.data.test_path])


@click.command(name="train")
@click.option("--check-gradients", is_flag=True, help="Run a finite-difference gradient check first")
@click.option("--samples", type=int, default=200, show_default=True,
              help="Coordinates compared by the gradient check")
@click.pass_obj
def train_command(lab: LabContext, check_gradients: bool, samples: int):
    """Train the denoiser on the train corpus and save a checkpoint.

    Examples:
    \b
    plandiff --config configs/small.json train
    plandiff train --check-gradients --samples 300
    """
    config = lab.config
    vocab = default_vocab()
    if check_gradients:
        with create_progress_spinner() as progress:
            progress.add_task(description="Checking gradients...", total=None)
            report = grad_check(seed=config.seed, n_samples=samples)
        display_gradcheck(report, GRADCHECK_TOLERANCE)

    problems = read_corpus(config.data.train_path)
    layouts = build_training_layouts(problems, config.training, vocab, config.model.max_len, config.seed)
    console.print(f"[blue]Training on {len(layouts)} layouts from {len(problems)} problems[/blue]")

    with create_progress_spinner() as progress:
        task = progress.add_task(description="Training...", total=None)

        def on_epoch(row):
            progress.update(task, description=f"Epoch {row['epoch']}: loss {row['loss']:.4f}")

        result = train(config.model, layouts, config.training, config.seed, vocab,
                       checkpoint_path=config.checkpoint, on_epoch=on_epoch,
                       checkpoint_extra={"config_hash": config.config_hash,
                                         "code_version": code_version()})

    out = _output_dir(config)
    written = [config.checkpoint,
               write_loss_curve(result.curve, out / "loss_curve.csv"),
               charts.loss_curve(result.curve, out / "loss_curve.svg")]
    display_loss_curve(result.curve, every=max(1, len(result.curve) // 10))
    display_written(written)


@click.command(name="plan")
@click.option("--planner", "planners", multiple=True, help="Planner id (default: the grid's planners)")
@click.option("--format", "formats", multiple=True, help="Plan format (default: the grid's formats)")
@click.option("--budget", "budgets", type=int, multiple=True, help="Token budget (default: the grid's budgets)")
@click.option("--ablation", "ablations", multiple=True,
              type=click.Choice([a.value for a in Ablation], case_sensitive=False),
              help="Ablation to derive (default: the grid's ablations)")
@click.option("--limit", type=int, help="Only plan for the first N test problems")
@click.pass_obj
def plan_command(lab: LabContext, planners, formats, budgets, ablations, limit):
    """Fill the plan cache for the test problems."""
    config = lab.config
    grid = config.grid
    problems = _test_problems(config, limit)
    cache = PlanCache(config.plan_cache)
    planners = planners or tuple(grid.planners)
    executor = _executor(config) if SELF_PLANNER_ID in planners else None

    plans = []
    for planner, fmt, budget, ablation in itertools.product(
            planners, formats or grid.formats, budgets or grid.budgets, ablations or grid.ablations):
        with create_progress_spinner() as progress:
            progress.add_task(description=f"Planning {planner} {fmt} b{budget} {ablation}...", total=None)
            plans = ensure_plans(problems, planner, fmt, budget, cache, ablation=ablation,
                                 endpoint=config.endpoint, executor=executor, scfg=config.sampler,
                                 vocab=default_vocab(), concurrency=config.endpoint.concurrency)
        logger.info(f"{planner} {fmt} b{budget} {ablation}: {len(plans)} plans ready")
    display_plans(plans)
    console.print(f"Plan cache {config.plan_cache} holds {len(cache)} plans")


@click.command(name="run")
@click.option("--save-traces", is_flag=True, help="Write a denoise trace per problem")
@click.option("--trace-attention", is_flag=True, help="Capture attention in saved traces")
@click.option("--trace-every", type=int, default=4, show_default=True,
              help="Capture attention every k-th step")
@click.option("--workers", type=int, help="Parallel problems (default: config workers)")
@click.option("--limit", type=int, help="Only run the first N test problems")
@click.pass_obj
def run_command(lab: LabContext, save_traces, trace_attention, trace_every, workers, limit):
    """Run every grid condition over the test problems."""
    config = lab.config
    problems = _test_problems(config, limit)
    executor = _executor(config)
    cache = PlanCache(config.plan_cache)
    conditions = expand_grid(config.grid)
    trace_dir = _output_dir(config) / "traces" if save_traces else None

    results: Dict[str, List[RunResult]] = {}
    for condition in conditions:
        with create_progress_spinner() as progress:
            progress.add_task(description=f"Running {condition.id}...", total=None)
            results[condition.id] = _run_and_save(condition, problems, executor, cache, config,
                                                  workers or config.workers, trace_dir,
                                                  trace_attention and save_traces, trace_every)
    display_condition_results(_summary_rows(conditions, results))
    plan_conditions = [c for c in conditions if not c.is_bare]
    if plan_conditions:
        display_failures(results[plan_conditions[0].id])


@click.command(name="ablate")
@click.option("--ablation", "ablations", multiple=True,
              type=click.Choice([a.value for a in Ablation if a != Ablation.NONE], case_sensitive=False),
              help="Ablation to run (default: all of them)")
@click.option("--planner", default=None, help="Base planner (default: the grid's first planner)")
@click.option("--format", "fmt", default=None, help="Plan format (default: the grid's first format)")
@click.option("--budget", type=int, default=None, help="Plan budget (default: the grid's first budget)")
@click.option("--limit", type=int, help="Only run the first N test problems")
@click.pass_obj
def ablate_command(lab: LabContext, ablations, planner, fmt, budget, limit):
    """Derive ablated plans, run them, and split the plan lift by content."""
    config = lab.config
    grid = config.grid
    planner = planner or grid.planners[0]
    fmt = fmt or grid.formats[0]
    budget = budget if budget is not None else grid.budgets[0]
    kinds = [Ablation.NONE.value] + list(ablations or [a.value for a in Ablation if a != Ablation.NONE])

    problems = _test_problems(config, limit)
    cache = PlanCache(config.plan_cache)
    executor = _executor(config)
    for kind in kinds:
        ensure_plans(problems, planner, fmt, budget, cache, ablation=kind, endpoint=config.endpoint,
                     executor=executor, scfg=config.sampler, vocab=executor.vocab,
                     concurrency=config.endpoint.concurrency)

    common = dict(gen_len=grid.gen_lens[0], steps=grid.steps[0],
                  remask_strategy=RemaskStrategy(grid.remask_strategy), temperature=grid.temperature)
    conditions: List[Condition] = []
    for seed in grid.seeds:
        conditions.append(Condition(seed=seed, **common))
        conditions.extend(Condition(seed=seed, planner_id=planner, format=fmt, budget=budget,
                                    ablation=kind, **common) for kind in kinds)

    results: Dict[str, List[RunResult]] = {}
    for condition in conditions:
        with create_progress_spinner() as progress:
            progress.add_task(description=f"Running {condition.id}...", total=None)
            results[condition.id] = _run_and_save(condition, problems, executor, cache, config,
                                                  config.workers)
    display_condition_results(_summary_rows(conditions, results))

    needed = {Ablation.RANDOM_TOKENS.value, Ablation.SHUFFLED.value}
    if needed <= set(kinds):
        for seed in grid.seeds:
            by_kind = {c.ablation: accuracy(results[c.id]) for c in conditions
                       if c.seed == seed and not c.is_bare}
            bare = accuracy(results[Condition(seed=seed, **common).id])
            parts = content_decomposition(bare, by_kind[Ablation.RANDOM_TOKENS.value],
                                          by_kind[Ablation.SHUFFLED.value], by_kind[Ablation.NONE.value])
            console.print(f"seed {seed}: lift {parts['lift'] * 100:+.1f}pp; "
                          f"tokens {parts['tokens'] * 100:+.1f}pp, vocabulary {parts['vocabulary'] * 100:+.1f}pp, "
                          f"semantics {parts['semantics'] * 100:+.1f}pp")


@click.command(name="attention")
@click.option("--limit", type=int, default=20, show_default=True, help="Problems traced per condition")
@click.option("--trace-every", type=int, default=4, show_default=True,
              help="Capture attention every k-th step")
@click.option("--condition", "pairs", multiple=True,
              help="planner:ablation pair to trace (default: frontier, degraded, wrong_strategy, random_tokens)")
@click.pass_obj
def attention_command(lab: LabContext, limit, trace_every, pairs):
    """Trace attention on plan-conditioned runs and summarise plan attention."""
    config = lab.config
    grid = config.grid
    problems = _test_problems(config, limit)
    executor = _executor(config)
    cache = PlanCache(config.plan_cache)
    out = _output_dir(config) / "attention"

    specs = [tuple(p.split(":", 1)) for p in pairs] if pairs else list(ATTENTION_CONDITIONS)
    summary: Dict[str, object] = {**_stamp(config, ATTENTION_SCHEMA), "conditions": {}}
    comparison = {}
    for planner, kind in specs:
        ensure_plans(problems, planner, grid.formats[0], grid.budgets[0], cache, ablation=kind,
                     endpoint=config.endpoint, executor=executor, scfg=config.sampler,
                     vocab=executor.vocab)
        condition = Condition(gen_len=grid.gen_lens[0], steps=grid.steps[0], seed=grid.seeds[0],
                              planner_id=planner, format=grid.formats[0], budget=grid.budgets[0],
                              ablation=kind, remask_strategy=RemaskStrategy(grid.remask_strategy),
                              temperature=grid.temperature)
        with create_progress_spinner() as progress:
            progress.add_task(description=f"Tracing {condition.id}...", total=None)
            results = run_condition(condition, problems, executor, cache, workers=config.workers,
                                    trace_dir=out / "traces", trace_attention=True,
                                    trace_every=trace_every, config_hash=config.config_hash)
        per_problem = [attention_shares(read_trace(r.trace_ref)) for r in results]
        shares = aggregate_shares(per_problem)
        below_uniform = sum(1 for s in per_problem
                            if s.plan_fraction > 0 and (trend(s)["first"] or 0.0) < 1.0)
        if below_uniform:
            logger.info(f"{condition.id}: {below_uniform} problems attend to the plan below uniform "
                        f"at the first traced step")
        write_csv(shares_to_rows(shares), out / f"{condition.id}.csv")
        summary["conditions"][condition.id] = {
            "excess_by_step": {str(k): v for k, v in excess_by_step(shares).items()},
            "trend": trend(shares),
            "early_late": layer_early_late(shares),
            "accuracy": accuracy(results),
        }
        comparison[condition.id] = trend(shares)
        display_attention(shares, title=f"Attention Shares: {condition.id}")
    export_to_json(summary, out / "summary.json")
    display_attention_comparison(comparison)


def _comparisons(runs, config: ExperimentConfig, resamples: int) -> List[Dict[str, object]]:
    grid = config.grid
    rows = []
    for run in runs.values():
        c = run.condition
        if c.is_bare:
            main = replace(c, gen_len=grid.gen_lens[0], steps=grid.steps[0])
            if main.id == c.id:
                continue
            base = runs.get(main.id)
        else:
            base = runs.get(baseline_for(c).id)
        if base is None:
            logger.warning(f"No baseline results for {c.id}; skipping")
            continue
        outcomes = paired_outcomes(base.results, run.results)
        try:
            boot = paired_bootstrap(outcomes, resamples, seed=config.seed)
        except TooFewOutcomes:
            logger.warning(f"Too few paired outcomes for {c.id}; skipping")
            continue
        fixed, broken = discordant_counts(outcomes)
        rows.append({"condition": c.id, "baseline": base.condition.id, **boot.to_dict(),
                     "fixed": fixed, "broken": broken, "mcnemar_p": mcnemar_exact(fixed, broken)})
    return rows


@click.command(name="stats")
@click.option("--resamples", type=int, default=10_000, show_default=True, help="Bootstrap resamples")
@click.pass_obj
def stats_command(lab: LabContext, resamples):
    """Paired bootstrap and McNemar tests of every condition against its baseline."""
    config = lab.config
    runs = load_runs(config.output_dir)
    rows = _comparisons(runs, config, resamples)
    seeds = multiseed_rows(runs)

    by_plan: Dict[str, List[float]] = {}
    for row in rows:
        shape = row["condition"].rsplit("-s", 1)[0]
        by_plan.setdefault(shape, []).append(row["delta"])
    delta_seeds = []
    for shape, deltas in sorted(by_plan.items()):
        try:
            agg = multiseed(deltas)
        except TooFewSeeds:
            continue
        delta_seeds.append({"condition": shape, "mean_delta": agg.mean, "sd_delta": agg.sd})

    out = _output_dir(config) / "stats"
    export_to_json({**_stamp(config, STATS_SCHEMA), "comparisons": rows, "multiseed": seeds,
                    "delta_multiseed": delta_seeds}, out / "stats.json")
    if rows:
        write_csv(rows, out / "stats.csv")
    display_stats(rows)
    for row in delta_seeds:
        console.print(f"{row['condition']}: {row['mean_delta']:+.2f} ± {row['sd_delta']:.2f}pp across seeds")


@click.command(name="report")
@click.pass_obj
def report_command(lab: LabContext):
    """Render markdown tables, CSV data and SVG charts from the run directory."""
    config = lab.config
    prompt_len = 0.0
    if Path(config.data.test_path).exists():
        vocab = default_vocab()
        problems = read_corpus(config.data.test_path)
        if problems:
            # bare layout length minus the single completion slot
            lengths = [len(assemble_layout(p, None, TEMPLATE_SOLVE, vocab, 1, config.model.max_len)) - 1
                       for p in problems]
            prompt_len = sum(lengths) / len(lengths)
    written = write_report(config.output_dir, prompt_len, config.config_hash, code_version())
    display_written(written)

