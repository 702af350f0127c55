"""Command-line surface: benchmark runs, report rendering, the training
simulator, and corpus validation.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .corpus import load_corpus_dir, validate_graph
from .embeddings import HashEmbedder, HttpEmbedder
from .errors import RagmuxError
from .evaluation import (EvalReport, load_dataset, read_report, run_benchmark,
                         score_trajectory)
from .orchestrator import (EpisodeRunner, HttpPolicyClient, ScriptedPolicy,
                           write_transcripts)
from .reporting import (render_benchmark_figures, render_training_figures,
                        summary_table, write_series)
from .retrieval import RetrievalEngine
from .rewards import GRPOConfig, RewardConfig, write_reward_report
from .simtrain import (SeedOutcome, SimEnv, TrainSettings, batch_reward_records,
                       train_two_stage, two_stage_summary)

SCRIPTED_PREFIX = "scripted:"


def _build_policy(endpoint: str, model: str):
    if endpoint.startswith(SCRIPTED_PREFIX):
        return ScriptedPolicy.from_jsonl(endpoint[len(SCRIPTED_PREFIX):])
    return HttpPolicyClient(endpoint, model=model)


def _build_embedder(spec: str, dim: int, seed: int):
    if spec == "offline":
        return HashEmbedder(dim=dim, seed=seed)
    return HttpEmbedder(spec)


@click.group()
def main() -> None:
    """Multi-turn hybrid retrieval episodes, evaluation, and the trainer sim."""


@main.command()
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", "dataset_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--endpoint", required=True,
              help="Policy endpoint URL, or scripted:FILE for a response script.")
@click.option("--model", default="default", show_default=True)
@click.option("--embedder", default="offline", show_default=True,
              help="'offline' for the deterministic provider, or an endpoint URL.")
@click.option("--embed-seed", default=13, show_default=True)
@click.option("--budget", default=4, show_default=True)
@click.option("--topk", "top_k", default=3, show_default=True)
@click.option("--parallel", "parallelism", default=1, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--transcripts", "transcripts_path", default=None,
              type=click.Path(dir_okay=False))
@click.option("--deterministic", is_flag=True,
              help="Strip timestamps and wall-clock costs from outputs.")
def run(corpus_dir, dataset_path, endpoint, model, embedder, embed_seed, budget,
        top_k, parallelism, out_path, transcripts_path, deterministic):
    """Run a QA benchmark through the episode loop and write a report."""
    try:
        store = load_corpus_dir(corpus_dir)
        records = load_dataset(dataset_path)
    except (RagmuxError, OSError) as exc:
        raise click.ClickException(f"failed to load inputs: {exc}")
    engine = RetrievalEngine(store, _build_embedder(embedder, store.dim, embed_seed))
    runner = EpisodeRunner(engine, budget=budget, top_k=top_k)
    policy = _build_policy(endpoint, model)
    dataset_name = Path(dataset_path).stem
    try:
        if transcripts_path is None:
            report = run_benchmark(records, runner, policy, parallelism=parallelism,
                                   dataset_name=dataset_name)
        else:
            trajectories = runner.run_batch([r.question for r in records], policy,
                                            parallelism=parallelism)
            write_transcripts(trajectories, transcripts_path,
                              deterministic=deterministic)
            import datetime as _dt

            rows = [score_trajectory(rec, traj)
                    for rec, traj in zip(records, trajectories)]
            report = EvalReport(
                dataset=dataset_name, rows=rows, budget=budget, top_k=top_k,
                generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat())
    except RagmuxError as exc:
        raise click.ClickException(f"benchmark failed: {exc}")
    report.write_jsonl(out_path, deterministic=deterministic)
    agg = report.aggregates
    click.echo(f"{dataset_name}: n={agg['n']} EM={agg['mean_em']:.3f} "
               f"F1={agg['mean_f1']:.3f} turns={agg['mean_turns']:.2f}")


@main.command()
@click.option("--in", "in_paths", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default="report_out", show_default=True,
              type=click.Path(file_okay=False))
def report(in_paths, out_dir):
    """Render a summary table, CSV series, and figures from report files."""
    try:
        reports = [read_report(p) for p in in_paths]
    except RagmuxError as exc:
        raise click.ClickException(str(exc))
    click.echo(summary_table(reports))
    for rep in reports:
        write_series(rep, out_dir)
    figures = render_benchmark_figures(reports, out_dir)
    click.echo(f"wrote {len(reports)} series and {len(figures)} figures to {out_dir}")


@main.command("sim-train")
@click.option("--stage1-steps", default=20, show_default=True)
@click.option("--stage2-steps", default=20, show_default=True)
@click.option("--stages", default="1,2", show_default=True,
              type=click.Choice(["1", "2", "1,2"]),
              help="Which training stages to run.")
@click.option("--seeds", default=10, show_default=True,
              help="Number of seeds (0..N-1).")
@click.option("--group-size", default=5, show_default=True)
@click.option("--clip-eps", default=0.2, show_default=True)
@click.option("--beta", default=0.001, show_default=True)
@click.option("--lr", default=5.0, show_default=True)
@click.option("--groups-per-update", default=16, show_default=True)
@click.option("--eval-episodes", default=500, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sim_train(stage1_steps, stage2_steps, stages, seeds, group_size, clip_eps,
              beta, lr, groups_per_update, eval_episodes, out_dir):
    """Run the two-stage trainer over several seeds and summarize the deltas."""
    if stage1_steps < 0 or stage2_steps < 0 or seeds < 1:
        raise click.UsageError("step counts must be >= 0 and seeds >= 1")
    if stages != "1,2":
        stage1_steps, stage2_steps = ((stage1_steps, 0) if stages == "1"
                                      else (0, stage2_steps))
    if stage1_steps + stage2_steps < 1:
        raise click.UsageError("need at least one training step")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = SimEnv.default()
    grpo = GRPOConfig(group_size=group_size, clip_epsilon=clip_eps,
                      kl_coefficient=beta)
    settings = TrainSettings(learning_rate=lr, groups_per_update=groups_per_update,
                             eval_episodes=eval_episodes)
    outcomes = []
    reports = []
    final_stage = 2 if stage2_steps else 1
    try:
        for seed in range(seeds):
            policy, train_report = train_two_stage(env, grpo, stage1_steps,
                                                   stage2_steps, seed=seed,
                                                   settings=settings)
            train_report.write_jsonl(out / f"train_seed{seed}.jsonl")
            records = batch_reward_records(
                env, policy, RewardConfig(stage=final_stage), grpo,
                groups=groups_per_update, seed=seed)
            write_reward_report(records, out / f"rewards_seed{seed}.jsonl")
            reports.append((seed, train_report))
            if train_report.stage1_eval and train_report.stage2_eval:
                outcomes.append(SeedOutcome(seed=seed,
                                            stage1=train_report.stage1_eval,
                                            stage2=train_report.stage2_eval))
    except RagmuxError as exc:
        raise click.ClickException(f"training failed: {exc}")
    summary: dict = {"stage1_steps": stage1_steps, "stage2_steps": stage2_steps,
                     "seeds": seeds}
    if outcomes:
        summary.update(two_stage_summary(outcomes))
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    render_training_figures(reports, out)
    if outcomes:
        click.echo(f"median cost reduction: {summary['median_cost_reduction']:.1%}  "
                   f"median accuracy delta: {summary['median_accuracy_delta']:+.3f}")
    click.echo(f"wrote {len(reports)} train reports to {out}")


@main.command("validate-corpus")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
def validate_corpus(corpus_dir):
    """Load a corpus directory and report graph findings."""
    try:
        store = load_corpus_dir(corpus_dir)
    except (RagmuxError, OSError) as exc:
        raise click.ClickException(f"corpus failed to load: {exc}")
    counts = store.counts()
    click.echo(f"passages={counts.passages} embeddings={counts.embeddings} "
               f"entities={counts.entities} relations={counts.relation_edges} "
               f"mentions={counts.mention_edges} synonyms={counts.synonym_edges}")
    result = validate_graph(store.graph, store)
    if result.ok:
        click.echo("graph validation: clean")
        return
    for finding in result.findings:
        click.echo(f"{finding.kind}: {finding.detail}")
    sys.exit(1)


if __name__ == "__main__":
    main()
