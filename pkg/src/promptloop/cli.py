"""Command-line interface.

Exit codes: 0 success, 2 invalid config or input, 3 backend unavailable,
4 run aborted mid-flight (the event log is kept and resumable).
"""

from __future__ import annotations

import json
import os
import sys
import tempfile

import click

from . import demo as demo_mod
from .config import build_backend_from_config, load_config, normalize_config
from .engine import OptimizationResult
from .errors import (
    BackendUnavailableError,
    ConfigError,
    CorpusError,
    DegenerateInputError,
    DimensionMismatchError,
    LogError,
    PromptloopError,
    RunAbortedError,
)
from .pipeline import resume_optimization, run_optimization
from .runstore import emit_report
from .scoring import CorpusEvaluator, EmbeddingCache, load_corpus

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_ABORTED = 4

_CONFIG_ERRORS = (
    ConfigError,
    CorpusError,
    DegenerateInputError,
    DimensionMismatchError,
    LogError,
)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Data-free iterative prompt optimization against a reference corpus."""


def _print_result(result: OptimizationResult, log_path: str, report_path: str) -> None:
    click.echo(f"log: {log_path}")
    click.echo(f"report: {report_path}")
    click.echo(f"rounds completed: {result.rounds_completed}")
    click.echo(
        f"mutations applied/rejected: {result.mutations_applied}/{result.mutations_rejected}"
    )
    click.echo(f"best score: {result.best.score!r}")
    click.echo("best prompt:")
    click.echo(result.best.step_plan)


@main.command("optimize")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--prompt", "prompt_text", default=None, help="Initial task prompt.")
@click.option(
    "--prompt-file",
    "prompt_file",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Read the initial task prompt from a file.",
)
@click.option(
    "--resume",
    "resume_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Resume from an existing run log instead of starting fresh.",
)
def cmd_optimize(config_path, prompt_text, prompt_file, resume_path) -> None:
    """Run the full optimization pipeline for one task prompt."""
    if prompt_text is not None and prompt_file is not None:
        raise click.UsageError("use exactly one of --prompt or --prompt-file")
    if prompt_text is None and prompt_file is None and resume_path is None:
        raise click.UsageError("one of --prompt or --prompt-file is required")
    if prompt_file is not None:
        with open(prompt_file, encoding="utf-8") as handle:
            prompt_text = handle.read().strip()
    if prompt_text is not None and not prompt_text.strip():
        _fail(EXIT_CONFIG, "the task prompt is empty")

    try:
        config = load_config(config_path)
        if resume_path is not None:
            result = resume_optimization(
                config, resume_path, expected_task_prompt=prompt_text
            )
        else:
            result = run_optimization(config, prompt_text)
        report_path = os.path.splitext(result.log_path)[0] + ".report.json"
        with open(report_path, "w", encoding="utf-8") as handle:
            handle.write(emit_report(result.log_path, "json"))
        _print_result(result, result.log_path, report_path)
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    except BackendUnavailableError as exc:
        _fail(EXIT_BACKEND, str(exc))
    except RunAbortedError as exc:
        _fail(EXIT_ABORTED, f"{exc} (log retained for --resume)")


@main.command("score")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--text", "text", required=True, help="Candidate text to score.")
@click.option(
    "--corpus",
    "corpus_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Corpus file (defaults to corpus_path from the config).",
)
def cmd_score(config_path, text, corpus_path) -> None:
    """Score one text against the reference corpus and print the value."""
    try:
        config = load_config(config_path)
        if corpus_path is None:
            corpus_path = config.corpus_path
        if not os.path.isfile(corpus_path):
            raise ConfigError(f"corpus file does not exist: {corpus_path}")
        backend = build_backend_from_config(config)
        cache = EmbeddingCache(backend)
        corpus = load_corpus(corpus_path, cache, config.max_documents)
        evaluator = CorpusEvaluator(corpus, cache)
        click.echo(repr(evaluator.score(text)))
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    except BackendUnavailableError as exc:
        _fail(EXIT_BACKEND, str(exc))


@main.command("validate-config")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
def cmd_validate_config(config_path) -> None:
    """Validate a config file and print its fully resolved form."""
    try:
        config = load_config(config_path)
    except _CONFIG_ERRORS as exc:
        _fail(EXIT_CONFIG, str(exc))
    click.echo(json.dumps(normalize_config(config), indent=2, sort_keys=True, ensure_ascii=False))


@main.command("report")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--format",
    "format_",
    type=click.Choice(["json", "markdown"]),
    default="json",
    show_default=True,
)
@click.option("--output", "output_path", type=click.Path(dir_okay=False), default=None)
def cmd_report(log_path, format_, output_path) -> None:
    """Render a score/threshold trajectory report from a run log."""
    try:
        document = emit_report(log_path, format_)
    except PromptloopError as exc:
        _fail(EXIT_CONFIG, str(exc))
    if output_path is None:
        click.echo(document, nl=False)
    else:
        with open(output_path, "w", encoding="utf-8") as handle:
            handle.write(document)
        click.echo(f"report written to {output_path}")


@main.command("demo")
@click.option(
    "--output-dir",
    "output_dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Keep the demo log and report here (default: a temporary directory).",
)
def cmd_demo(output_dir) -> None:
    """Run the bundled offline scenario and print its score trajectory."""
    if output_dir is None:
        output_dir = tempfile.mkdtemp(prefix="promptloop-demo-")
    try:
        result, log_path = demo_mod.run_demo(output_dir)
    except PromptloopError as exc:
        _fail(EXIT_CONFIG, str(exc))
    summary = json.loads(emit_report(log_path, "json"))
    click.echo("round  mean score           best so far")
    for row in summary["rounds"]:
        click.echo(f"{row['round']:>5}  {row['mean_score']!r:<20} {row['best_max']!r}")
    click.echo(f"mutations applied/rejected: {summary['mutations_applied']}/{summary['mutations_rejected']}")
    click.echo(f"final best score: {summary['best_score']!r}")
    click.echo(f"log: {log_path}")
    click.echo("best prompt:")
    click.echo(result.best.step_plan)


if __name__ == "__main__":
    main()
