"""Click CLI entry point for rxncond."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import click

from rxncond import __version__
from rxncond.balance import load_leaving_groups
from rxncond.config import PipelineConfig, load_config
from rxncond.errors import NotEnoughValid, PipelineError, RxnCondError
from rxncond.grpo import (
    ScriptedJudgmentEnv,
    ToyPolicy,
    save_policy,
    toy_training_loop,
    write_curve,
)
from rxncond.knowbase import ingest, save_snapshot
from rxncond.memory import RunStore, canonical_json
from rxncond.models import Reaction
from rxncond.pipeline import (
    DEFAULT_KS,
    Resources,
    live_predictions,
    load_predictions,
    load_resources,
    load_test_set,
    recommend,
    run_recall,
    run_report,
    run_until_tournament,
    score_predictions,
    sft_examples,
)
from rxncond.species import load_species
from rxncond.tagger import load_library
from rxncond.transcript import write_sft_dump
from rxncond.warning_policy import WarningPolicy


def _build_warning_policy(
    warn_as_error: str | None, suppress_warning: str | None
) -> WarningPolicy | None:
    """Parse CLI warning options into a WarningPolicy, or None if unset."""
    try:
        return WarningPolicy.from_options(warn_as_error, suppress_warning)
    except ValueError as e:
        raise click.ClickException(str(e)) from e


@dataclass
class Session:
    """Global options shared by every subcommand."""

    config: PipelineConfig
    policy: WarningPolicy | None
    out: Path | None
    _resources: Resources | None = None

    def resources(self) -> Resources:
        if self._resources is None:
            self._resources = load_resources(self.config, policy=self.policy)
        return self._resources

    def store(self) -> RunStore:
        return RunStore(self.out)

    def flush(self, store: RunStore) -> None:
        store.flush(config_digest=self.config.digest(), command=sys.argv[1:])


def _parse_reaction(text: str) -> Reaction:
    try:
        return Reaction.parse(text)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="REACTION") from e


def _parse_ks(raw: str) -> tuple[int, ...]:
    try:
        ks = tuple(int(token) for token in raw.split(",") if token.strip())
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated integers, got {raw!r}") from e
    if not ks or min(ks) < 1:
        raise click.BadParameter("k values must be positive integers")
    return ks


@click.group()
@click.version_option(version=__version__, prog_name="rxncond")
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="YAML mapping of pipeline knobs. Unknown keys are rejected.",
)
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option(
    "--base",
    "base_path",
    type=click.Path(path_type=Path),
    default=None,
    help="Reaction base: line-delimited records, or a .json snapshot.",
)
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Run directory for the memory store (report, pool, board, bracket, manifest).",
)
@click.option(
    "--warn-as-error",
    "warn_as_error",
    type=str,
    default=None,
    help="Comma-separated W-codes to treat as errors (e.g. W02,W05).",
)
@click.option(
    "--suppress-warning",
    "suppress_warning",
    type=str,
    default=None,
    help="Comma-separated W-codes to suppress (e.g. W01).",
)
@click.pass_context
def main(
    ctx: click.Context,
    config_path: Path | None,
    seed: int | None,
    base_path: Path | None,
    out_dir: Path | None,
    warn_as_error: str | None,
    suppress_warning: str | None,
) -> None:
    """rxncond: reaction-condition recommendation with checkable rationales."""
    policy = _build_warning_policy(warn_as_error, suppress_warning)
    try:
        config = load_config(config_path).with_overrides(seed=seed, base_path=base_path)
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    ctx.obj = Session(config=config, policy=policy, out=out_dir)


@main.command("ingest")
@click.argument(
    "source", required=False, type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.option(
    "--snapshot",
    "snapshot_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write an index snapshot to this path.",
)
@click.pass_obj
def ingest_cmd(session: Session, source: Path | None, snapshot_path: Path | None) -> None:
    """Index line-delimited reaction records (default: the bundled corpus)."""
    config = session.config
    try:
        base, report = ingest(
            source or config.base_path,
            library=load_library(config.fg_library_path),
            species=load_species(config.species_path),
            leaving_groups=load_leaving_groups(config.leaving_groups_path),
            facet_weights=config.facet_weights,
            mcs_budget=config.similarity_mcs_budget,
            policy=session.policy,
        )
        if snapshot_path is not None:
            save_snapshot(base, snapshot_path)
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    click.echo(str(report))


@main.command("report")
@click.argument("reaction", type=str)
@click.pass_obj
def report_cmd(session: Session, reaction: str) -> None:
    """Write the mechanistic report for REACTION (``R1.R2>>P``)."""
    parsed = _parse_reaction(reaction)
    store = session.store()
    try:
        analysis = run_report(parsed, session.resources(), policy=session.policy)
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    store.put("report.json", analysis.report)
    session.flush(store)
    click.echo(canonical_json(analysis.report), nl=False)


@main.command("recall")
@click.argument("reaction", type=str)
@click.pass_obj
def recall_cmd(session: Session, reaction: str) -> None:
    """Build the candidate pool for REACTION and list it in priority order."""
    parsed = _parse_reaction(reaction)
    store = session.store()
    try:
        resources = session.resources()
        analysis = run_report(parsed, resources, policy=session.policy)
        recalled = run_recall(parsed, analysis, resources)
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    store.put("report.json", analysis.report)
    store.put("pool.json", recalled.pool.to_document())
    session.flush(store)
    matched = sum(1 for c in recalled.pool if c.origin == "matched")
    click.echo(f"{len(recalled.pool)} candidates ({matched} matched)")
    for candidate in recalled.pool:
        click.echo(f"{candidate.origin}\t{candidate.priority:.6f}\t{candidate.canonical_id}")


@main.command("tournament")
@click.argument("reaction", type=str)
@click.option(
    "--sft-dump",
    "sft_dump",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write one serialized fine-tuning example per match to this path.",
)
@click.pass_obj
def tournament_cmd(session: Session, reaction: str, sft_dump: Path | None) -> None:
    """Run recall and the knockout tournament; print the survivors."""
    parsed = _parse_reaction(reaction)
    store = session.store()
    try:
        outcome, _ = run_until_tournament(
            parsed, session.resources(), store=store, policy=session.policy
        )
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    session.flush(store)
    if sft_dump is not None:
        write_sft_dump(sft_examples(parsed, outcome), sft_dump)
    result = outcome.result
    if result is None:
        raise click.ClickException("tournament produced no bracket")
    click.echo(f"{len(result.survivors)} survivors after {result.total_rounds} round(s)")
    for candidate in result.survivors:
        wins = result.wins.get(candidate.canonical_id, 0)
        click.echo(f"{wins}\t{candidate.canonical_id}")


@main.command("recommend")
@click.argument("reaction", type=str)
@click.option(
    "--k-out", "k_out", type=click.IntRange(min=1), default=None, help="Number of recommendations."
)
@click.pass_obj
def recommend_cmd(session: Session, reaction: str, k_out: int | None) -> None:
    """Recommend certified condition sets for REACTION.

    Exits with code 3 when too few candidates pass validation.
    """
    parsed = _parse_reaction(reaction)
    store = session.store()
    try:
        outcome = recommend(
            parsed, session.resources(), k_out=k_out, store=store, policy=session.policy
        )
    except PipelineError as e:
        session.flush(store)
        if isinstance(e.cause, NotEnoughValid):
            click.echo(f"Error: {e}", err=True)
            raise click.exceptions.Exit(3)
        raise click.ClickException(str(e)) from e
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    session.flush(store)
    click.echo(canonical_json(outcome.document), nl=False)


@main.command("eval")
@click.argument("testset", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option(
    "--predictions",
    "predictions_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Ranked predictions, one JSON object per line.",
)
@click.option(
    "--live", is_flag=True, default=False, help="Run the pipeline per record (leave-one-out)."
)
@click.option(
    "--k", "ks", type=str, default=",".join(map(str, DEFAULT_KS)), show_default=True,
    help="Comma-separated k values.",
)
@click.option(
    "--format",
    "output_format",
    type=click.Choice(["text", "json"]),
    default="text",
    show_default=True,
    help="Accuracy table format.",
)
@click.pass_obj
def eval_cmd(
    session: Session,
    testset: Path,
    predictions_path: Path | None,
    live: bool,
    ks: str,
    output_format: str,
) -> None:
    """Per-slot top-k accuracy of predictions, or of the live pipeline, on TESTSET."""
    if live == (predictions_path is not None):
        raise click.UsageError("pass exactly one of --predictions or --live")
    k_values = _parse_ks(ks)
    try:
        records = load_test_set(testset)
        resources = session.resources()
        if predictions_path is not None:
            predictions = load_predictions(predictions_path)
        else:
            predictions = live_predictions(records, resources, policy=session.policy)
        result = score_predictions(records, predictions, resources.species, k_values)
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    if output_format == "json":
        click.echo(json.dumps(result.to_document(), indent=2, sort_keys=True))
    else:
        click.echo(result.render_table(), nl=False)


@main.command("train-toy")
@click.option("--steps", type=click.IntRange(min=0), default=None, help="Training steps.")
@click.option(
    "--policy",
    "policy_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Starting policy JSON (default: uniform).",
)
@click.option(
    "--policy-out",
    "policy_out",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write the trained policy here.",
)
@click.option(
    "--curve",
    "curve_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="Write step<TAB>mean_reward lines here.",
)
@click.option(
    "--answers", type=str, default="A", show_default=True,
    help="Scripted correct judgement per task, cycled (e.g. A,B).",
)
@click.pass_obj
def train_toy_cmd(
    session: Session,
    steps: int | None,
    policy_path: Path | None,
    policy_out: Path | None,
    curve_path: Path | None,
    answers: str,
) -> None:
    """Train the toy judgment policy with the clipped group-relative objective."""
    config = session.config
    scripted = tuple(token.strip() for token in answers.split(",") if token.strip())
    if not scripted or any(a not in ("A", "B") for a in scripted):
        raise click.BadParameter("answers must be a comma-separated list of A and B")
    try:
        if policy_path is not None:
            policy = ToyPolicy.from_document(json.loads(policy_path.read_text(encoding="utf-8")))
        else:
            policy = ToyPolicy.uniform(config.horizon)
    except (OSError, ValueError, KeyError, TypeError, RxnCondError) as e:
        raise click.ClickException(f"Cannot read policy {policy_path}: {e}") from e
    try:
        result = toy_training_loop(
            policy,
            ScriptedJudgmentEnv(scripted),
            steps=config.train_steps if steps is None else steps,
            group_size=config.group_size,
            epsilon=config.epsilon,
            beta=config.beta,
            learning_rate=config.learning_rate,
            seed=config.seed,
        )
    except RxnCondError as e:
        raise click.ClickException(str(e)) from e
    if policy_out is not None:
        save_policy(result.policy, policy_out)
    if curve_path is not None:
        write_curve(result, curve_path)
    final = result.mean_rewards[-1] if result.mean_rewards else float("nan")
    click.echo(f"{len(result.mean_rewards)} steps, final mean reward {final:.4f}")
