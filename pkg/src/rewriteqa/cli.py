"""Command-line front end: prepare / rewrite / train / eval / serve.

Batch commands run the pipeline in-process (training needs in-process
gradient steps and bit-exact checkpoint resume); the two serve commands
expose the HTTP surfaces.
"""

from __future__ import annotations

import dataclasses
import logging
from pathlib import Path

import click
import uvicorn

from .agnostic import (
    concat_decision,
    decision_from_dict,
    read_decisions,
    rewrite_agnostic,
    write_decisions,
)
from .aware import rewrite_aware, load_checkpoint
from .aware import train as train_loop
from .backends.reference import IdentityRewriter, LogLinearRewriter, vocab_from_questions
from .config import (
    PipelineConfig,
    build_backends,
    build_embedder,
    build_qa,
    build_rewriter,
    build_scorer,
    echo_config,
    load_config,
    with_seed,
)
from .data import load_dataset, write_dataset
from .errors import ConfigError, RewriteQAError
from .evaluation import (
    ReportRow,
    answer_dataset,
    bert_similarity,
    build_report,
    exact_match,
    gold_map,
    human_eval_score,
    read_predictions,
    render_report,
    write_predictions,
)
from .grading import GradeStore
from .service.app import DEFAULT_GUIDELINES, create_grading_app, section_for_system
from .service.backend_server import create_backend_app

logger = logging.getLogger("rewriteqa.cli")

config_option = click.option(
    "--config",
    "config_path",
    type=click.Path(),
    default=None,
    help="TOML or JSON config file; environment variables prefixed REWRITEQA_ override it.",
)
seed_option = click.option(
    "--seed", type=int, default=None, help="Override the seed of every seeded component."
)


def _load(config_path, seed) -> PipelineConfig:
    try:
        config = load_config(config_path)
    except RewriteQAError as exc:
        raise click.ClickException(str(exc)) from exc
    if seed is not None:
        config = with_seed(config, seed)
    return config


def _load_split(config: PipelineConfig, split: str):
    path = Path(config.train_path if split == "train" else config.test_path)
    if not path.exists():
        raise click.ClickException(f"prepared {split} split {path} does not exist; run prepare first")
    try:
        return load_dataset(path, config.filter)
    except RewriteQAError as exc:
        raise click.ClickException(str(exc)) from exc


def _load_aware_rewriter(config: PipelineConfig, checkpoint_dir: str | None):
    choice = config.backends["rewriter"]
    if choice.kind == "remote":
        return build_rewriter(config)
    root = Path(checkpoint_dir) if checkpoint_dir else config.train_dir() / "checkpoints"
    if not (root / "latest.json").exists():
        raise ConfigError(
            f"mode=aware needs a trained rewriter but no checkpoint exists at {root}; "
            "run train first or pass --checkpoint"
        )
    state, params = load_checkpoint(root)
    meta = state.get("model")
    if not meta or meta.get("kind") != "loglinear":
        raise ConfigError(f"checkpoint at {root} does not describe a loadable rewriter")
    rewriter = LogLinearRewriter.from_checkpoint_meta(meta)
    rewriter.restore(params)
    return rewriter


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Rewrite knowledge questions around image entities, answer them with a
    text QA backend, and evaluate or grade the results."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@config_option
@seed_option
def prepare(config_path, seed):
    """Filter the annotated dataset and write the train/test JSONL splits."""
    config = _load(config_path, seed)
    try:
        records = load_dataset(config.dataset_path, config.filter)
    except (RewriteQAError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    train = [r for r in records if r.split == "train"]
    test = [r for r in records if r.split == "test"]
    for path, subset in ((config.train_path, train), (config.test_path, test)):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_dataset(path, subset)
    echo_config(config, config.output_dir)
    click.echo(f"train={len(train)} test={len(test)}")


@main.command()
@click.option("--mode", type=click.Choice(["agnostic", "aware", "concat"]), required=True)
@click.option("--split", type=click.Choice(["train", "test"]), default="test", show_default=True)
@click.option(
    "--checkpoint",
    "checkpoint_dir",
    type=click.Path(),
    default=None,
    help="Checkpoint directory for --mode aware (defaults to the train output).",
)
@config_option
@seed_option
def rewrite(mode, split, checkpoint_dir, config_path, seed):
    """Rewrite one split and record the decisions as JSONL."""
    config = _load(config_path, seed)
    records = _load_split(config, split)
    try:
        if mode == "agnostic":
            scorer = build_scorer(config.backends["scorer"])
            decisions = [rewrite_agnostic(q, scorer, config.candidates) for q in records]
        elif mode == "concat":
            decisions = [concat_decision(q) for q in records]
        else:
            rewriter = _load_aware_rewriter(config, checkpoint_dir)
            decisions = [rewrite_aware(q, rewriter, config.exploration) for q in records]
    except RewriteQAError as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = config.decisions_path(mode)
    write_decisions(out_path, decisions)
    echo_config(config, config.output_dir)
    click.echo(f"wrote {len(decisions)} decisions to {out_path}")


@main.command()
@click.option("--steps", type=int, default=None, help="Override training.total_steps.")
@click.option("--resume", is_flag=True, help="Continue from the latest checkpoint.")
@config_option
@seed_option
def train(steps, resume, config_path, seed):
    """Train the rewriter against the QA reward on the train split."""
    config = _load(config_path, seed)
    if steps is not None:
        config = dataclasses.replace(
            config, training=dataclasses.replace(config.training, total_steps=steps)
        )
    records = _load_split(config, "train")
    suite = build_backends(config)
    out_dir = config.train_dir()
    try:
        if resume and config.backends["rewriter"].kind == "reference":
            state, _ = load_checkpoint(out_dir / "checkpoints")
            meta = state.get("model")
            if not meta:
                raise ConfigError("checkpoint lacks model metadata; cannot resume")
            rewriter = LogLinearRewriter.from_checkpoint_meta(meta)
        else:
            vocab = tuple(vocab_from_questions(records))
            rewriter = build_rewriter(config, vocab)
        state = train_loop(
            records,
            rewriter,
            suite,
            config.training,
            config.exploration,
            out_dir,
            gen_cfg=config.candidates,
            resume=resume,
        )
    except RewriteQAError as exc:
        raise click.ClickException(str(exc)) from exc
    echo_config(config, config.output_dir)
    click.echo(
        f"trained to step {state.step}; running mean reward {state.running_mean_reward:.4f}; "
        f"checkpoints in {out_dir / 'checkpoints'}"
    )


@main.command(name="eval")
@click.option(
    "--mode",
    "modes",
    multiple=True,
    type=click.Choice(["agnostic", "aware", "concat", "passthrough"]),
    help="Decision files to score (repeatable); defaults to every decisions-*.jsonl present.",
)
@click.option(
    "--predictions",
    "extra_prediction_files",
    multiple=True,
    type=click.Path(),
    help="External prediction JSONL files to score as additional systems.",
)
@click.option("--published/--no-published", default=True, show_default=True,
              help="Include the published comparison rows in the report.")
@config_option
@seed_option
def eval_command(modes, extra_prediction_files, published, config_path, seed):
    """Answer decided rewrites, score EM/BS (plus HE when grades exist), and
    write the report."""
    config = _load(config_path, seed)
    records = _load_split(config, "test")
    golds = gold_map(records)
    qa = build_qa(config.backends["qa"])
    embedder = build_embedder(config.backends["embedder"])

    if not modes:
        modes = tuple(
            path.stem.removeprefix("decisions-")
            for path in sorted(Path(config.output_dir).glob("decisions-*.jsonl"))
        )
    predictions_by_system = {}
    for mode in modes:
        path = config.decisions_path(mode)
        if not path.exists():
            raise click.ClickException(
                f"decisions file {path} does not exist; run rewrite --mode {mode} first"
            )
        decisions = [decision_from_dict(d) for d in read_decisions(path)]
        predictions_by_system[mode] = answer_dataset(decisions, qa, system=mode)
    for file_path in extra_prediction_files:
        loaded = read_predictions(file_path)
        if not loaded:
            raise click.ClickException(f"prediction file {file_path} is empty")
        predictions_by_system[loaded[0].system] = loaded
    if not predictions_by_system:
        raise click.ClickException(
            f"nothing to evaluate: no decisions under {config.output_dir} and no --predictions"
        )

    grades = ()
    grades_path = config.grades_path()
    if grades_path.exists():
        grades = GradeStore(grades_path).all()

    rows = []
    config.predictions_dir().mkdir(parents=True, exist_ok=True)
    for system, predictions in sorted(predictions_by_system.items()):
        write_predictions(config.predictions_path(system), predictions)
        try:
            rows.append(
                ReportRow(
                    system=system,
                    em=exact_match(predictions, golds),
                    bs=bert_similarity(predictions, golds, embedder),
                    he=human_eval_score(grades, system),
                    section=section_for_system(system),
                )
            )
        except RewriteQAError as exc:
            raise click.ClickException(f"scoring {system}: {exc}") from exc

    report = build_report(rows, include_published=published)
    text = render_report(report)
    config.report_path("txt").write_text(text, encoding="utf-8")
    import json as _json

    config.report_path("json").write_text(
        _json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
    )
    echo_config(config, config.output_dir)
    click.echo(text, nl=False)


def build_grading_app_from_config(config: PipelineConfig, static_dir: str | None = None):
    records = _load_split(config, "test")
    predictions = {}
    for path in sorted(config.predictions_dir().glob("*.jsonl")):
        loaded = read_predictions(path)
        if loaded:
            predictions[loaded[0].system] = loaded
    if not predictions:
        raise click.ClickException(
            f"no prediction files under {config.predictions_dir()}; run eval first"
        )
    guidelines_text = DEFAULT_GUIDELINES
    if config.guidelines_path:
        guidelines_text = Path(config.guidelines_path).read_text(encoding="utf-8")
    if static_dir is None and Path("frontend/dist").is_dir():
        static_dir = "frontend/dist"
    return create_grading_app(
        dataset=records,
        predictions=predictions,
        store=GradeStore(config.grades_path()),
        embedder=build_embedder(config.backends["embedder"]),
        images_dir=config.images_dir,
        guidelines_text=guidelines_text,
        static_dir=static_dir,
    )


@main.command()
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static-dir", type=click.Path(), default=None, help="Built grading UI to serve at /.")
@config_option
@seed_option
def serve(port, host, static_dir, config_path, seed):
    """Run the grading service for human evaluation."""
    config = _load(config_path, seed)
    app = build_grading_app_from_config(config, static_dir)
    echo_config(config, config.output_dir)
    uvicorn.run(app, host=host, port=port)


@main.command(name="serve-backends")
@click.option("--port", type=int, default=8001, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option(
    "--checkpoint",
    "checkpoint_dir",
    type=click.Path(),
    default=None,
    help="Serve the trained rewriter from this checkpoint directory.",
)
@config_option
@seed_option
def serve_backends(port, host, checkpoint_dir, config_path, seed):
    """Expose the configured backends over the wire protocol (one JSON
    endpoint per port), e.g. to drive another process's remote adapters."""
    config = _load(config_path, seed)
    try:
        rewriter = _load_aware_rewriter(config, checkpoint_dir)
    except (ConfigError, click.ClickException):
        train_path = Path(config.train_path)
        if train_path.exists():
            vocab = tuple(vocab_from_questions(load_dataset(train_path, config.filter)))
            rewriter = build_rewriter(config, vocab)
            logger.info("serving an untrained rewriter built from %s", train_path)
        else:
            rewriter = IdentityRewriter()
            logger.info("serving the identity rewriter (no checkpoint or train split found)")
    app = create_backend_app(
        scorer=build_scorer(config.backends["scorer"]),
        qa=build_qa(config.backends["qa"]),
        embedder=build_embedder(config.backends["embedder"]),
        rewriter=rewriter,
    )
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
